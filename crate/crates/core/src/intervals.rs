//! Breadth-first enumeration of fundamental intervals, fullness
//! classification, the B_n/D_n level sets, κ statistics and the counting
//! bounds.
//!
//! A word `b₀…b_{n−1}` addresses the set of points whose first `n` greedy
//! digits equal the word. Its rank-`n` image is an interval `[0, t)`; the
//! word is *full* when `t = s`. Only the image endpoint is needed to
//! refine a node: each digit cell intersecting `[0, t)` spawns one child,
//! and the child is full exactly when its own image endpoint equals `s`.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exactnum::Scalar;
use crate::system::{GreedySystem, SupportCase};

/// Hard cap on the refinement depth of the word-level tree.
pub const DEPTH_CAP: usize = 64;
/// Budget on the number of enumerated nodes per level.
const NODE_BUDGET: usize = 1 << 22;

/// A fundamental interval `Δ(b₀…b_{n−1}) = [left, right)` whose rank-`n`
/// image is `[0, image_end)`. Words store digit indices into the system's
/// digit set.
#[derive(Debug, Clone, Serialize)]
pub struct FundInterval {
    pub word: Vec<u8>,
    pub level: usize,
    pub left: Scalar,
    pub right: Scalar,
    pub image_end: Scalar,
    pub full: bool,
}

/// One refinement level: the non-full intervals `B_n` (not contained in
/// any lower-rank full interval) and the new full components of `D_n`.
#[derive(Debug, Clone)]
pub struct Level {
    pub n: usize,
    pub b: Vec<FundInterval>,
    pub full: Vec<FundInterval>,
    /// Number of B_n nodes containing two elements of B_{n+1}.
    pub kappa_bar: u64,
}

#[derive(Debug, Clone)]
pub struct Refinement {
    pub levels: Vec<Level>,
}

/// Per-level κ summary.
#[derive(Debug, Clone, Serialize)]
pub struct LevelSummary {
    pub n: usize,
    pub kappa: u64,
    /// Elements whose first digit is the lower of the two non-full
    /// rank-one digits (a₁ in the main case).
    pub kappa1: u64,
    pub kappa2: u64,
    pub kappa_bar: u64,
    pub d_count: u64,
    pub d_measure: Scalar,
}

pub(crate) struct ChildSpec {
    pub digit: usize,
    pub image_end: Scalar,
    pub full: bool,
    /// Sub-interval of the parent's image covered by this child.
    pub x_left: Scalar,
    pub x_right: Scalar,
}

/// Children of a node whose image is `[0, t)`: every digit cell meeting
/// `(0, t)` contributes one child. A cell entirely inside `[0, t)` yields
/// the image of the full cell; the cell containing `t` yields `[0, Tt)`.
pub(crate) fn children_of_image(sys: &GreedySystem, t: &Scalar) -> Vec<ChildSpec> {
    let mut children = Vec::new();
    let beta = sys.beta();
    let s = sys.support_end();
    for cell in sys.cells() {
        if !cell.left.lt(t) {
            break;
        }
        let x_right = if cell.right.le(t) {
            cell.right.clone()
        } else {
            t.clone()
        };
        let image_end = &(beta * &x_right) - sys.digit_value(cell.digit);
        let full = image_end == *s;
        children.push(ChildSpec {
            digit: cell.digit,
            image_end,
            full,
            x_left: cell.left.clone(),
            x_right,
        });
    }
    children
}

/// Cheap per-cell data for counting children without doing interval
/// arithmetic per node: a cell entirely below the image endpoint always
/// produces the same child (full or not), and the partial cell at the
/// endpoint always produces a non-full child.
struct CellStats {
    left: Scalar,
    right: Scalar,
    inside_child_full: bool,
}

fn cell_stats(sys: &GreedySystem) -> Vec<CellStats> {
    let beta = sys.beta();
    let s = sys.support_end();
    sys.cells()
        .iter()
        .map(|c| {
            let image_end = &(beta * &c.right) - sys.digit_value(c.digit);
            CellStats {
                left: c.left.clone(),
                right: c.right.clone(),
                inside_child_full: image_end == *s,
            }
        })
        .collect()
}

/// `(non-full children, full children)` of a node with image `[0, t)`.
fn count_children(stats: &[CellStats], t: &Scalar) -> (usize, usize) {
    let mut nonfull = 0;
    let mut full = 0;
    for cell in stats {
        if !cell.left.lt(t) {
            break;
        }
        if cell.right.le(t) {
            if cell.inside_child_full {
                full += 1;
            } else {
                nonfull += 1;
            }
        } else {
            // Partial cell: image [0, Tt) with Tt < s.
            nonfull += 1;
        }
    }
    (nonfull, full)
}

fn non_classical(sys: &GreedySystem) -> Result<()> {
    if sys.support_case() == SupportCase::ClassicalComplete {
        return Err(Error::WrongCase {
            expected: "three-digit system",
            actual: sys.support_case().as_str(),
        });
    }
    Ok(())
}

/// The rank-1 cells with their digits.
pub fn level_partition(sys: &GreedySystem) -> Result<Vec<(usize, Scalar, Scalar)>> {
    non_classical(sys)?;
    Ok(sys
        .cells()
        .iter()
        .map(|c| (c.digit, c.left.clone(), c.right.clone()))
        .collect())
}

/// Lazily refines the interval tree to depth `N`, breadth-first.
pub fn refine_to(sys: &GreedySystem, n: usize) -> Result<Refinement> {
    non_classical(sys)?;
    if n > DEPTH_CAP {
        return Err(Error::DepthExceeded {
            requested: n,
            cap: DEPTH_CAP,
        });
    }
    let beta = sys.beta();
    let mut levels: Vec<Level> = Vec::with_capacity(n);
    // Rank 1: children of the whole support.
    let root_children = children_of_image(sys, sys.support_end());
    let mut current: Vec<FundInterval> = Vec::new();
    let mut full_here: Vec<FundInterval> = Vec::new();
    for c in root_children {
        let fi = FundInterval {
            word: vec![c.digit as u8],
            level: 1,
            left: c.x_left,
            right: c.x_right,
            image_end: c.image_end,
            full: c.full,
        };
        if c.full {
            full_here.push(fi);
        } else {
            current.push(fi);
        }
    }
    levels.push(Level {
        n: 1,
        kappa_bar: count_double_spawners(sys, &current),
        b: current,
        full: full_here,
    });

    for depth in 2..=n {
        let prev = &levels[depth - 2];
        let scale = beta.pow_int((depth - 1) as i64)?;
        let mut b_next = Vec::new();
        let mut full_next = Vec::new();
        for parent in &prev.b {
            for c in children_of_image(sys, &parent.image_end) {
                let mut word = parent.word.clone();
                word.push(c.digit as u8);
                let left = &parent.left + &c.x_left.try_div(&scale)?;
                let right = &parent.left + &c.x_right.try_div(&scale)?;
                let fi = FundInterval {
                    word,
                    level: depth,
                    left,
                    right,
                    image_end: c.image_end,
                    full: c.full,
                };
                if c.full {
                    full_next.push(fi);
                } else {
                    b_next.push(fi);
                }
            }
            if b_next.len() > NODE_BUDGET {
                return Err(Error::DepthExceeded {
                    requested: depth,
                    cap: DEPTH_CAP,
                });
            }
        }
        levels.push(Level {
            n: depth,
            kappa_bar: count_double_spawners(sys, &b_next),
            b: b_next,
            full: full_next,
        });
    }
    Ok(Refinement { levels })
}

fn count_double_spawners(sys: &GreedySystem, nodes: &[FundInterval]) -> u64 {
    let stats = cell_stats(sys);
    nodes
        .iter()
        .filter(|fi| count_children(&stats, &fi.image_end).0 == 2)
        .count() as u64
}

fn to_u64(n: &BigUint, depth: usize) -> Result<u64> {
    n.to_u64().ok_or(Error::DepthExceeded {
        requested: depth,
        cap: DEPTH_CAP,
    })
}

/// Exact per-level κ table with the first-digit split and D_n measures.
///
/// Levels are aggregated by the exact image endpoint (and first digit),
/// so the cost is quadratic in the depth rather than proportional to the
/// number of words.
pub fn kappa_table(sys: &GreedySystem, n: usize) -> Result<Vec<LevelSummary>> {
    non_classical(sys)?;
    if n == 0 || n > DEPTH_CAP {
        return Err(Error::DepthExceeded {
            requested: n,
            cap: DEPTH_CAP,
        });
    }
    let s = sys.support_end();
    let beta = sys.beta();
    let stats = cell_stats(sys);

    // Counts keyed by (image endpoint, first digit of the word).
    let mut counts: HashMap<(Scalar, u8), BigUint> = HashMap::new();
    let mut root_digits: Vec<u8> = Vec::new();
    let mut d_count = BigUint::zero();
    for c in children_of_image(sys, s) {
        if c.full {
            d_count += 1u32;
        } else {
            root_digits.push(c.digit as u8);
            *counts
                .entry((c.image_end, c.digit as u8))
                .or_insert_with(BigUint::zero) += 1u32;
        }
    }

    let mut rows = Vec::with_capacity(n);
    for level in 1..=n {
        let mut kappa = BigUint::zero();
        let mut kappa1 = BigUint::zero();
        let mut kappa2 = BigUint::zero();
        let mut kappa_bar = BigUint::zero();
        for ((value, first), count) in &counts {
            kappa += count;
            if root_digits.first() == Some(first) {
                kappa1 += count;
            }
            if root_digits.get(1) == Some(first) {
                kappa2 += count;
            }
            if count_children(&stats, value).0 == 2 {
                kappa_bar += count;
            }
        }
        let d_measure = Scalar::from_big_rational(num_rational::BigRational::from_integer(
            num_bigint::BigInt::from(d_count.clone()),
        ))
        .try_mul(&s.try_div(&beta.pow_int(level as i64)?)?)?;
        rows.push(LevelSummary {
            n: level,
            kappa: to_u64(&kappa, level)?,
            kappa1: to_u64(&kappa1, level)?,
            kappa2: to_u64(&kappa2, level)?,
            kappa_bar: to_u64(&kappa_bar, level)?,
            d_count: to_u64(&d_count, level)?,
            d_measure,
        });
        if level == n {
            break;
        }
        let mut next: HashMap<(Scalar, u8), BigUint> = HashMap::new();
        let mut next_d = BigUint::zero();
        for ((value, first), count) in &counts {
            for c in children_of_image(sys, value) {
                if c.full {
                    next_d += count;
                } else {
                    *next
                        .entry((c.image_end, *first))
                        .or_insert_with(BigUint::zero) += count;
                }
            }
        }
        counts = next;
        d_count = next_d;
    }
    Ok(rows)
}

/// Fibonacci numbers, `F(0) = 0, F(1) = 1`.
pub fn fib(n: usize) -> BigUint {
    let mut a = BigUint::zero();
    let mut b = BigUint::one();
    for _ in 0..n {
        let next = &a + &b;
        a = b;
        b = next;
    }
    a
}

/// Evaluates the closed form `(Gⁿ − (1−G)ⁿ)/√5` exactly in ℚ(√5).
pub fn fib_closed_form(n: usize) -> Result<BigUint> {
    let g = Scalar::golden();
    let one_minus_g = &Scalar::one() - &g;
    let sqrt5 = Scalar::sqrt_of(5)?;
    let v = g
        .pow_int(n as i64)?
        .try_sub(&one_minus_g.pow_int(n as i64)?)?
        .try_div(&sqrt5)?;
    // The result is a rational integer.
    let Scalar::Exact(x) = &v else { unreachable!() };
    debug_assert!(x.is_rational());
    x.rational_part()
        .to_integer()
        .to_biguint()
        .ok_or(Error::DivisionByZero)
}

/// Which κ bound applies, by the position of β.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KappaBound {
    /// κ(n) ≤ F(n+2); needs β ≤ 2.
    Fibonacci,
    /// κ(n) ≤ 2^(⌊n/2⌋+1); needs β ≤ G.
    HalfExponent,
    /// κ(n) ≤ 2^(⌊n/m⌋+1); needs β ≤ 2^(1/m), m ≥ 2.
    BlockExponent,
    /// κ(n) ≤ 2ⁿ, trivially.
    Binary,
}

/// Largest `m ≥ 1` with `βᵐ ≤ 2`, zero when β > 2.
pub(crate) fn doubling_exponent(beta: &Scalar) -> u64 {
    let mut m = 0u64;
    let mut pow = beta.clone();
    while pow.le(&Scalar::from_int(2)) && m < 64 {
        m += 1;
        pow = &pow * beta;
    }
    m
}

/// Value of a counting bound at level `n` (`m` is the block exponent).
pub fn kappa_bound_value(kind: KappaBound, m: u64, n: usize) -> BigUint {
    match kind {
        KappaBound::Fibonacci => fib(n + 2),
        KappaBound::HalfExponent => BigUint::one() << (n / 2 + 1),
        KappaBound::BlockExponent => BigUint::one() << (n / m as usize + 1),
        KappaBound::Binary => BigUint::one() << n,
    }
}

fn bound_value(kind: KappaBound, m: u64, n: usize) -> BigUint {
    kappa_bound_value(kind, m, n)
}

/// The bound governing the system by the position of β: binary above 2,
/// Fibonacci between the golden mean and 2, the block bound below.
pub fn primary_bound(sys: &GreedySystem) -> (KappaBound, u64) {
    let beta = sys.beta();
    if beta.gt(&Scalar::from_int(2)) {
        (KappaBound::Binary, 0)
    } else if beta.cmp_golden() == std::cmp::Ordering::Greater {
        (KappaBound::Fibonacci, 0)
    } else {
        let m = doubling_exponent(beta);
        if m >= 2 {
            (KappaBound::BlockExponent, m)
        } else {
            (KappaBound::HalfExponent, 1)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub bound: KappaBound,
    /// The exponent `m` for the block bound.
    pub param: Option<u64>,
    pub applicable: bool,
    pub ok: bool,
    pub first_violation: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub rows: Vec<BoundRow>,
    /// κ(n+1) = κ(n) + κ̄(n) held at every checked level.
    pub recursion_ok: bool,
}

impl BoundsReport {
    pub fn all_ok(&self) -> bool {
        self.recursion_ok && self.rows.iter().all(|r| !r.applicable || r.ok)
    }
}

/// Verifies every counting bound whose hypothesis the system satisfies
/// against the exact table, plus the κ̄ recursion.
pub fn check_kappa_bounds(sys: &GreedySystem, n: usize) -> Result<BoundsReport> {
    sys.expect_case(SupportCase::MainCase, "main_case")?;
    let table = kappa_table(sys, n)?;
    let beta = sys.beta();
    let two = Scalar::from_int(2);
    let m = doubling_exponent(beta);
    let candidates = [
        (KappaBound::Fibonacci, beta.le(&two), None),
        (
            KappaBound::HalfExponent,
            beta.cmp_golden() != std::cmp::Ordering::Greater,
            None,
        ),
        (KappaBound::BlockExponent, m >= 2, Some(m)),
        (KappaBound::Binary, true, None),
    ];
    let mut rows = Vec::new();
    for (kind, applicable, param) in candidates {
        let mut first_violation = None;
        if applicable {
            for row in &table {
                let bound = bound_value(kind, m, row.n);
                if BigUint::from(row.kappa) > bound {
                    first_violation = Some(row.n);
                    break;
                }
            }
        }
        rows.push(BoundRow {
            bound: kind,
            param,
            applicable,
            ok: applicable && first_violation.is_none(),
            first_violation,
        });
    }
    let recursion_ok = table
        .windows(2)
        .all(|w| w[1].kappa == w[0].kappa + w[0].kappa_bar);
    Ok(BoundsReport { rows, recursion_ok })
}

#[derive(Debug, Clone, Serialize)]
pub struct DnRow {
    pub n: usize,
    pub d_count: u64,
    pub d_measure: Scalar,
    pub partial_sum: Scalar,
}

#[derive(Debug, Clone, Serialize)]
pub struct DnReport {
    pub rows: Vec<DnRow>,
    /// `s − Σ λ(D_n)`, the measure not yet absorbed by full intervals.
    pub residual: Scalar,
    /// Certified bound `κ(N)·s/β^N` on the residual.
    pub residual_bound: Scalar,
    pub bound_ok: bool,
}

/// Exact partial sums of the disjoint full-interval measures.
pub fn dn_partial_sums(sys: &GreedySystem, n: usize) -> Result<DnReport> {
    let table = kappa_table(sys, n)?;
    let mut partial = Scalar::zero();
    let mut rows = Vec::with_capacity(table.len());
    for row in &table {
        partial = partial.try_add(&row.d_measure)?;
        rows.push(DnRow {
            n: row.n,
            d_count: row.d_count,
            d_measure: row.d_measure.clone(),
            partial_sum: partial.clone(),
        });
    }
    let s = sys.support_end();
    let residual = s.try_sub(&partial)?;
    let kappa_n = table.last().map(|r| r.kappa).unwrap_or(1);
    let residual_bound = Scalar::from_int(kappa_n as i64)
        .try_mul(&s.try_div(&sys.beta().pow_int(n as i64)?)?)?;
    let bound_ok = residual.sign() >= 0 && residual.le(&residual_bound);
    Ok(DnReport {
        rows,
        residual,
        residual_bound,
        bound_ok,
    })
}

/// Runs the image recursion over a word: `t₀ = s`,
/// `t_{k+1} = β·min(t_k, right(b_k)) − a_{b_k}`, requiring each digit's
/// cell to meet the current image.
pub fn word_image_end(sys: &GreedySystem, word: &[u8]) -> Result<Scalar> {
    non_classical(sys)?;
    let beta = sys.beta();
    let mut t = sys.support_end().clone();
    for (k, &digit) in word.iter().enumerate() {
        let cell = sys
            .cells()
            .iter()
            .find(|c| c.digit == digit as usize)
            .ok_or(Error::NotAdmissible { at: k })?;
        if !cell.left.lt(&t) {
            return Err(Error::NotAdmissible { at: k });
        }
        let cut = if cell.right.le(&t) {
            cell.right.clone()
        } else {
            t.clone()
        };
        t = &(beta * &cut) - sys.digit_value(digit as usize);
    }
    Ok(t)
}

pub fn is_full_word(sys: &GreedySystem, word: &[u8]) -> Result<bool> {
    Ok(word_image_end(sys, word)? == *sys.support_end())
}

/// The fundamental interval addressed by a word, with exact endpoints.
pub fn word_interval(sys: &GreedySystem, word: &[u8]) -> Result<FundInterval> {
    non_classical(sys)?;
    let beta = sys.beta();
    let mut t = sys.support_end().clone();
    let mut left = Scalar::zero();
    for (k, &digit) in word.iter().enumerate() {
        let cell = sys
            .cells()
            .iter()
            .find(|c| c.digit == digit as usize)
            .ok_or(Error::NotAdmissible { at: k })?;
        if !cell.left.lt(&t) {
            return Err(Error::NotAdmissible { at: k });
        }
        let cut = if cell.right.le(&t) {
            cell.right.clone()
        } else {
            t.clone()
        };
        left = &left + &cell.left.try_div(&beta.pow_int(k as i64)?)?;
        t = &(beta * &cut) - sys.digit_value(digit as usize);
    }
    let n = word.len();
    let right = &left + &t.try_div(&beta.pow_int(n as i64)?)?;
    let full = t == *sys.support_end();
    Ok(FundInterval {
        word: word.to_vec(),
        level: n,
        left,
        right,
        image_end: t,
        full,
    })
}

/// Decomposition of a full word into its return blocks.
#[derive(Debug, Clone, Serialize)]
pub struct Decomposition {
    pub blocks: Vec<Vec<u8>>,
    /// Ranks at which successive blocks close: `r_i` is the prefix length
    /// whose interval is full, `|Cᵢ| = rᵢ − r_{i−1}`.
    pub ranks: Vec<usize>,
}

/// Splits a full word at its successive full-completion ranks. Each block
/// addresses a full interval of its own length; a block starting with
/// digit 0 is the singleton block `0`.
pub fn decompose_full_word(sys: &GreedySystem, word: &[u8]) -> Result<Decomposition> {
    non_classical(sys)?;
    if word.is_empty() {
        return Err(Error::NotFull);
    }
    let beta = sys.beta();
    let s = sys.support_end();
    let mut blocks = Vec::new();
    let mut ranks = Vec::new();
    let mut t = s.clone();
    let mut block_start = 0usize;
    for (k, &digit) in word.iter().enumerate() {
        let cell = sys
            .cells()
            .iter()
            .find(|c| c.digit == digit as usize)
            .ok_or(Error::NotAdmissible { at: k })?;
        if !cell.left.lt(&t) {
            return Err(Error::NotAdmissible { at: k });
        }
        let cut = if cell.right.le(&t) {
            cell.right.clone()
        } else {
            t.clone()
        };
        t = &(beta * &cut) - sys.digit_value(digit as usize);
        if t == *s {
            blocks.push(word[block_start..=k].to_vec());
            ranks.push(k + 1);
            block_start = k + 1;
        }
    }
    if block_start != word.len() {
        return Err(Error::NotFull);
    }
    Ok(Decomposition { blocks, ranks })
}

/// Certified factor `Σ_{j≥1} g(j)/β^j` bounding the growth of κ beyond an
/// enumerated level: `κ(N+j) ≤ κ(N)·g(j)` with `g` depending on where β
/// sits. Multiplying by `κ(N)/β^N` bounds `Σ_{n>N} κ(n)/βⁿ`.
pub(crate) fn kappa_tail_factor(sys: &GreedySystem) -> Result<Scalar> {
    let beta = sys.beta();
    let one = Scalar::one();
    match sys.support_case() {
        SupportCase::IsoClassical | SupportCase::ClassicalComplete => {
            // Single non-full branch per level: g(j) = 1.
            return one.try_div(&beta.try_sub(&one)?);
        }
        _ => {}
    }
    let two = Scalar::from_int(2);
    if beta.gt(&two) {
        // g(j) = 2^j.
        let ratio = two.try_div(beta)?;
        return ratio.try_div(&one.try_sub(&ratio)?);
    }
    if beta.cmp_golden() == std::cmp::Ordering::Greater {
        // g(j) = F(j+2): after a node doubles, the restarted branch
        // cannot double at the next level, giving Fibonacci growth.
        // Σ_{j≥1} F(j+2) x^j with x = 1/β has the closed form
        // (x + x²)/(1 − x − x²) + x/(1 − x − x²) ... assembled below from
        // Σ_{k≥0} F(k) x^k = x/(1 − x − x²).
        let x = one.try_div(beta)?;
        let x2 = &x * &x;
        let denom = one.try_sub(&x)?.try_sub(&x2)?;
        debug_assert!(denom.sign() > 0);
        let all = x.try_div(&denom)?;
        // Σ_{j≥1} F(j+2) x^j = (Σ_{k≥3} F(k) x^k)/x² = (all − x − x²)/x².
        let trimmed = all.try_sub(&x)?.try_sub(&x2)?;
        return trimmed.try_div(&x2);
    }
    // β ≤ G: doublings within one branch are at least m+1 levels apart,
    // where m is the largest exponent with βᵐ ≤ 2; so
    // g(j) ≤ 2^⌈j/(m+1)⌉ and the tail sums in blocks of m+1 terms with
    // in-field ratio 2/β^(m+1) < 1.
    let m = doubling_exponent(beta);
    debug_assert!(m >= 1);
    let p = (m + 1) as i64;
    let beta_p = beta.pow_int(p)?;
    let ratio = two.try_div(&beta_p)?;
    debug_assert!(ratio.lt(&one));
    let mut block = Scalar::zero();
    for i in 1..=p {
        block = block.try_add(&beta.pow_int(-i)?)?;
    }
    let geo = one.try_sub(&ratio)?;
    two.try_mul(&block)?.try_div(&geo)
}

/// Certified upper bound on `Σ_{n>N} κ(n)/βⁿ` given the exact κ(N).
pub(crate) fn kappa_tail_from(sys: &GreedySystem, kappa_n: &BigUint, n: usize) -> Result<Scalar> {
    let factor = kappa_tail_factor(sys)?;
    let kappa = Scalar::from_big_rational(num_rational::BigRational::from_integer(
        num_bigint::BigInt::from(kappa_n.clone()),
    ));
    let kappa = match sys.beta() {
        Scalar::Exact(_) => kappa,
        Scalar::Float(_) => kappa.to_float_backend(1),
    };
    kappa
        .try_mul(&factor)?
        .try_div(&sys.beta().pow_int(n as i64)?)
}

/// Exact Fibonacci window used by golden-mean κ counts:
/// `F(⌊(n−1)/3⌋ + 2) + F(⌊(n−2)/3⌋ + 1)` for n ≥ 2.
pub fn golden_kappa_formula(n: usize) -> BigUint {
    assert!(n >= 2);
    fib((n - 1) / 3 + 2) + fib((n - 2) / 3 + 1)
}

/// Default refinement depth: smallest `N` with
/// `bound(N)/β^N < 10⁻⁹ · s`, capped at [`DEPTH_CAP`].
pub fn default_depth(sys: &GreedySystem) -> usize {
    let beta = sys.beta().to_f64();
    let s = sys.support_end().to_f64();
    let m = doubling_exponent(sys.beta()).max(1) as f64;
    let growth = if beta > 2.0 {
        2.0
    } else if sys.beta().cmp_golden() == std::cmp::Ordering::Greater {
        (1.0 + 5.0f64.sqrt()) / 2.0
    } else {
        // Doublings are at least m+1 levels apart below the golden mean.
        2.0f64.powf(1.0 / (m + 1.0))
    };
    let mut bound = 2.0f64;
    for n in 1..=DEPTH_CAP {
        bound *= growth / beta;
        if bound < 1e-9 * s {
            return n;
        }
    }
    DEPTH_CAP
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::golden_system;

    #[test]
    fn golden_level_one() {
        let sys = golden_system();
        let refinement = refine_to(&sys, 1).unwrap();
        let level = &refinement.levels[0];
        // Δ(0) is full; Δ(3) has image [0,1), Δ(4) has image [0, 3β−4).
        assert_eq!(level.b.len(), 2);
        assert_eq!(level.full.len(), 1);
        assert_eq!(level.full[0].word, vec![0]);
        assert_eq!(level.b[0].word, vec![1]);
        assert_eq!(level.b[0].image_end, Scalar::one());
        assert_eq!(level.b[1].word, vec![2]);
        let expected = &(&Scalar::from_int(3) * sys.beta()) - &Scalar::from_int(4);
        assert_eq!(level.b[1].image_end, expected);
    }

    #[test]
    fn golden_word_4000_is_full_rank_4() {
        let sys = golden_system();
        assert!(is_full_word(&sys, &[2, 0, 0, 0]).unwrap());
        assert!(!is_full_word(&sys, &[2, 0, 0]).unwrap());
        // Its interval has the full length s/β⁴.
        let fi = word_interval(&sys, &[2, 0, 0, 0]).unwrap();
        let len = fi.right.try_sub(&fi.left).unwrap();
        let expected = sys
            .support_end()
            .try_div(&sys.beta().pow_int(4).unwrap())
            .unwrap();
        assert_eq!(len, expected);
    }

    #[test]
    fn golden_kappa_values() {
        let sys = golden_system();
        let table = kappa_table(&sys, 8).unwrap();
        assert_eq!(table[0].kappa, 2);
        assert_eq!(table[1].kappa, 2);
        assert_eq!(table[3].kappa, 3);
        // κ(7) = F(4) + F(2) = 3 + 1.
        assert_eq!(table[6].kappa, 4);
        for row in &table[1..] {
            assert_eq!(
                BigUint::from(row.kappa),
                golden_kappa_formula(row.n),
                "level {}",
                row.n
            );
        }
        // First-digit split is consistent.
        for row in &table {
            assert_eq!(row.kappa, row.kappa1 + row.kappa2);
        }
    }

    #[test]
    fn kappa_recursion_and_bounds() {
        let sys = golden_system();
        let report = check_kappa_bounds(&sys, 18).unwrap();
        assert!(report.recursion_ok);
        for row in &report.rows {
            // β = G: Fibonacci, half-exponent and binary all apply.
            if row.applicable {
                assert!(row.ok, "{:?}", row.bound);
            }
        }
        let half = report
            .rows
            .iter()
            .find(|r| r.bound == KappaBound::HalfExponent)
            .unwrap();
        assert!(half.applicable);
    }

    #[test]
    fn fibonacci_closed_form_matches_recurrence() {
        for n in 0..25 {
            assert_eq!(fib(n), fib_closed_form(n).unwrap(), "F({n})");
        }
        assert_eq!(fib(10), BigUint::from(55u32));
    }

    #[test]
    fn aggregated_table_matches_word_tree() {
        // Two routes to the same numbers: per-word enumeration vs
        // endpoint-aggregated counting.
        let systems = [
            golden_system(),
            GreedySystem::new(
                &Scalar::one() + &Scalar::sqrt_of(2).unwrap(),
                vec![Scalar::from_int(0), Scalar::from_int(1), Scalar::from_int(3)],
            )
            .unwrap(),
        ];
        for sys in systems {
            let depth = 9;
            let table = kappa_table(&sys, depth).unwrap();
            let refinement = refine_to(&sys, depth).unwrap();
            for (row, level) in table.iter().zip(&refinement.levels) {
                assert_eq!(row.kappa as usize, level.b.len(), "level {}", row.n);
                assert_eq!(row.kappa_bar, level.kappa_bar);
                assert_eq!(row.d_count as usize, level.full.len());
                let k1 = level
                    .b
                    .iter()
                    .filter(|fi| fi.word[0] == refinement.levels[0].b[0].word[0])
                    .count();
                assert_eq!(row.kappa1 as usize, k1);
            }
        }
    }

    #[test]
    fn dn_sums_golden() {
        let sys = golden_system();
        let report = dn_partial_sums(&sys, 12).unwrap();
        // λ(D₁) = 3/β.
        let expected = Scalar::from_int(3)
            .try_div(sys.beta())
            .unwrap();
        assert_eq!(report.rows[0].d_measure, expected);
        assert!(report.bound_ok);
        // Partial sums are nondecreasing.
        for w in report.rows.windows(2) {
            assert!(w[0].partial_sum.le(&w[1].partial_sum));
        }
    }

    #[test]
    fn decompose_examples() {
        let sys = golden_system();
        let d = decompose_full_word(&sys, &[0]).unwrap();
        assert_eq!(d.blocks, vec![vec![0]]);
        assert_eq!(d.ranks, vec![1]);

        let d = decompose_full_word(&sys, &[0, 2, 0, 0, 0]).unwrap();
        assert_eq!(d.blocks, vec![vec![0], vec![2, 0, 0, 0]]);
        assert_eq!(d.ranks, vec![1, 5]);

        let d = decompose_full_word(&sys, &[0, 0]).unwrap();
        assert_eq!(d.blocks, vec![vec![0], vec![0]]);

        assert!(matches!(
            decompose_full_word(&sys, &[2, 0, 0]),
            Err(Error::NotFull)
        ));
    }

    #[test]
    fn block_properties_hold() {
        let sys = golden_system();
        let word = [0, 2, 0, 0, 0, 0, 1, 0, 0, 0];
        if is_full_word(&sys, &word).unwrap() {
            let d = decompose_full_word(&sys, &word).unwrap();
            let mut prev = 0usize;
            for (block, &rank) in d.blocks.iter().zip(&d.ranks) {
                assert_eq!(block.len(), rank - prev);
                if block[0] == 0 {
                    assert_eq!(block.len(), 1);
                }
                assert!(is_full_word(&sys, block).unwrap());
                prev = rank;
            }
        }
    }

    #[test]
    fn concatenation_of_full_words_is_full() {
        let sys = golden_system();
        let refinement = refine_to(&sys, 8).unwrap();
        let fulls: Vec<&FundInterval> = refinement
            .levels
            .iter()
            .flat_map(|l| l.full.iter())
            .collect();
        assert!(fulls.len() >= 4);
        for a in fulls.iter().take(6) {
            for b in fulls.iter().take(6) {
                let mut cat = a.word.clone();
                cat.extend_from_slice(&b.word);
                assert!(is_full_word(&sys, &cat).unwrap());
                let d = decompose_full_word(&sys, &cat).unwrap();
                assert!(d.ranks.contains(&a.word.len()));
            }
        }
    }

    #[test]
    fn image_end_provenance() {
        let sys = golden_system();
        let (c1, c2) = sys.critical_points().unwrap();
        let mut orbit_values = std::collections::HashSet::new();
        for start in [c1, c2] {
            let orbit = sys.orbit(&start, 100).unwrap();
            for v in orbit.values {
                orbit_values.insert(v);
            }
        }
        let refinement = refine_to(&sys, 10).unwrap();
        for level in &refinement.levels {
            for fi in &level.b {
                assert!(
                    orbit_values.contains(&fi.image_end),
                    "image end {} at level {} not an orbit value",
                    fi.image_end,
                    fi.level
                );
            }
        }
    }

    #[test]
    fn children_partition_parent_exactly() {
        let sys = golden_system();
        let refinement = refine_to(&sys, 7).unwrap();
        for level in &refinement.levels[..6] {
            for parent in &level.b {
                let scale = sys.beta().pow_int(parent.level as i64).unwrap();
                let mut cursor = parent.left.clone();
                for c in children_of_image(&sys, &parent.image_end) {
                    let child_left = &parent.left + &c.x_left.try_div(&scale).unwrap();
                    let child_right = &parent.left + &c.x_right.try_div(&scale).unwrap();
                    assert_eq!(cursor, child_left);
                    cursor = child_right;
                }
                assert_eq!(cursor, parent.right);
            }
        }
    }

    #[test]
    fn tail_factor_is_finite_and_positive() {
        let sys = golden_system();
        let f = kappa_tail_factor(&sys).unwrap();
        assert!(f.sign() > 0);
        // For the golden system the actual tail Σ_{n>N} κ(n)/βⁿ is far
        // below κ(N)/β^N · factor; spot-check the bound at N = 6.
        let table = kappa_table(&sys, 20).unwrap();
        let mut actual = Scalar::zero();
        for row in &table[6..] {
            let term = Scalar::from_int(row.kappa as i64)
                .try_div(&sys.beta().pow_int(row.n as i64).unwrap())
                .unwrap();
            actual = actual.try_add(&term).unwrap();
        }
        let bound = kappa_tail_from(&sys, &BigUint::from(table[5].kappa), 6).unwrap();
        assert!(actual.lt(&bound));
    }

    #[test]
    fn depth_cap_enforced() {
        let sys = golden_system();
        assert!(matches!(
            refine_to(&sys, 65),
            Err(Error::DepthExceeded { .. })
        ));
        let d = default_depth(&sys);
        assert!(d > 10 && d <= DEPTH_CAP);
    }

    #[test]
    fn big_second_gap_enumerates() {
        // Figure 1(b): β = 1 + √2, digits {0,1,3}; Δ(a₁) is the full
        // rank-one cell.
        let sys = GreedySystem::new(
            &Scalar::one() + &Scalar::sqrt_of(2).unwrap(),
            vec![Scalar::from_int(0), Scalar::from_int(1), Scalar::from_int(3)],
        )
        .unwrap();
        let refinement = refine_to(&sys, 6).unwrap();
        let l1 = &refinement.levels[0];
        assert_eq!(l1.full.len(), 1);
        assert_eq!(l1.full[0].word, vec![1]);
        assert_eq!(l1.b.len(), 2);
        assert_eq!(l1.b[0].image_end, Scalar::one());
        // Fullness/length equivalence across levels.
        for level in &refinement.levels {
            for fi in level.b.iter().chain(level.full.iter()) {
                let len = fi.right.try_sub(&fi.left).unwrap();
                let scaled = len
                    .try_mul(&sys.beta().pow_int(fi.level as i64).unwrap())
                    .unwrap();
                if fi.full {
                    assert_eq!(scaled, *sys.support_end());
                } else {
                    assert!(scaled.lt(sys.support_end()));
                }
            }
        }
    }
}
