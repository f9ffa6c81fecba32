//! Digit-set validation, support classification for three-digit sets, the
//! greedy transformation and the classical oracle, orbits with exact cycle
//! detection, and digit expansions.

use std::collections::HashMap;

use num_traits::ToPrimitive;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exactnum::{boundary_rel_tolerance, Backend, Scalar};

/// Decimal places kept when coercing exact irrationals onto the float
/// backend.
const FLOAT_COERCE_DIGITS: usize = 50;

/// A sorted digit set, normalized so that the smallest digit is zero.
/// The subtracted shift is recorded; the normalized system is isomorphic
/// to the original one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DigitSet {
    digits: Vec<Scalar>,
    shift: Scalar,
}

impl DigitSet {
    pub fn new(raw: Vec<Scalar>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::InvalidDigits("digit set is empty".into()));
        }
        for w in raw.windows(2) {
            if w[0].try_cmp(&w[1])? != std::cmp::Ordering::Less {
                return Err(Error::InvalidDigits(
                    "digits must be strictly increasing".into(),
                ));
            }
        }
        let shift = raw[0].clone();
        let digits = raw.iter().map(|a| a - &shift).collect();
        Ok(DigitSet { digits, shift })
    }

    /// Normalized digits, `a₀ = 0 < a₁ < …`.
    pub fn digits(&self) -> &[Scalar] {
        &self.digits
    }

    /// The original `a₀` that was subtracted from every digit.
    pub fn shift(&self) -> &Scalar {
        &self.shift
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    pub fn digit(&self, idx: usize) -> &Scalar {
        &self.digits[idx]
    }

    pub fn max_digit(&self) -> &Scalar {
        self.digits.last().expect("nonempty")
    }
}

/// Outcome of the allowability test.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AllowabilityReport {
    /// Digits strictly increasing.
    pub cond_i: bool,
    /// Maximal gap at most `(a_m − a₀)/(β − 1)`.
    pub cond_ii: bool,
    /// Three digits with `1 < β ≤ 2` and `βa₁ > a₂`; this already forces
    /// allowability without evaluating the gap bound.
    pub shortcut_used: bool,
}

impl AllowabilityReport {
    pub fn allowable(&self) -> bool {
        self.cond_i && self.cond_ii
    }
}

/// Checks the two allowability conditions on a raw digit list.
pub fn check_allowable(beta: &Scalar, raw: &[Scalar]) -> Result<AllowabilityReport> {
    if raw.is_empty() {
        return Err(Error::InvalidDigits("digit set is empty".into()));
    }
    if beta.sign() <= 0 || beta.le(&Scalar::one()) {
        return Err(Error::InvalidBeta(format!("β = {} must exceed 1", beta)));
    }
    let mut cond_i = true;
    for w in raw.windows(2) {
        if w[0].try_cmp(&w[1])? != std::cmp::Ordering::Less {
            cond_i = false;
        }
    }
    let lo = raw.first().unwrap();
    let hi = raw.last().unwrap();
    let span = hi.try_sub(lo)?;
    let beta_minus_1 = beta.try_sub(&Scalar::one())?;
    let bound = span.try_div(&beta_minus_1)?;
    let mut max_gap = Scalar::zero();
    for w in raw.windows(2) {
        let gap = w[1].try_sub(&w[0])?;
        if gap.try_cmp(&max_gap)? == std::cmp::Ordering::Greater {
            max_gap = gap;
        }
    }
    let cond_ii = cond_i && max_gap.try_cmp(&bound)? != std::cmp::Ordering::Greater;
    let shortcut_used = cond_i
        && raw.len() == 3
        && beta.le(&Scalar::from_int(2))
        && {
            let a1 = raw[1].try_sub(lo)?;
            let a2 = raw[2].try_sub(lo)?;
            beta.try_mul(&a1)?.try_cmp(&a2)? == std::cmp::Ordering::Greater
        };
    debug_assert!(!shortcut_used || cond_ii);
    Ok(AllowabilityReport {
        cond_i,
        cond_ii,
        shortcut_used,
    })
}

/// The four support situations for three-digit systems, plus the complete
/// digit set used by the classical oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportCase {
    /// Support `[0, a₁)`, conjugate to the classical transformation.
    IsoClassical,
    /// Support `[0, a₂ − a₁)`; here `β > 2`.
    BigSecondGap,
    /// Support `[0, a₁)` with `a₂/β < a₁` and `a₂ − a₁ < a₁`; the
    /// stacked-rectangle construction targets this case.
    MainCase,
    /// Complete digit set `{0, …, ⌊β⌋}` on `[0, 1)`.
    ClassicalComplete,
}

impl SupportCase {
    pub fn as_str(&self) -> &'static str {
        match self {
            SupportCase::IsoClassical => "iso_classical",
            SupportCase::BigSecondGap => "big_second_gap",
            SupportCase::MainCase => "main_case",
            SupportCase::ClassicalComplete => "classical_complete",
        }
    }
}

/// Support classification for an allowable three-digit set, `1 < β < 3`.
///
/// Returns the case and the support endpoint `s`. The boundary equality
/// `a₂ = (β − 1)a₁` (only possible for `β > 2`) keeps support `[0, a₁)`
/// and is folded into `MainCase`; there the top cell is full of rank 1.
pub fn classify_support(beta: &Scalar, digits: &DigitSet) -> Result<(SupportCase, Scalar)> {
    if digits.len() != 3 {
        return Err(Error::InvalidDigits(format!(
            "support classification needs exactly three digits, got {}",
            digits.len()
        )));
    }
    let report = check_allowable(beta, digits.digits())?;
    if !report.allowable() {
        return Err(Error::NotAllowable(format!(
            "max gap exceeds (a_m − a₀)/(β − 1) for β = {}",
            beta
        )));
    }
    if beta.ge(&Scalar::from_int(3)) || beta.le(&Scalar::one()) {
        return Err(Error::InvalidBeta(format!(
            "three-digit classification needs 1 < β < 3, got {}",
            beta
        )));
    }
    let a1 = digits.digit(1);
    let a2 = digits.digit(2);
    let a2_over_beta = a2.try_div(beta)?;
    let gap = a2.try_sub(a1)?;
    use std::cmp::Ordering::*;
    let case = if a1.try_cmp(&a2_over_beta)? == Less {
        // a₁ maps by βx − a₁; its image stays below a₁ exactly when β ≤ 2.
        if beta.le(&Scalar::from_int(2)) {
            (SupportCase::IsoClassical, a1.clone())
        } else {
            (SupportCase::BigSecondGap, gap)
        }
    } else {
        match gap.try_cmp(a1)? {
            Greater => (SupportCase::BigSecondGap, gap),
            Equal => (SupportCase::IsoClassical, a1.clone()),
            Less => {
                if a1.try_cmp(&a2_over_beta)? == Equal {
                    (SupportCase::IsoClassical, a1.clone())
                } else {
                    // Covers both the strict window a₂/β < a₁ < a₂/(β−1)
                    // and the boundary a₁ = a₂/(β−1).
                    (SupportCase::MainCase, a1.clone())
                }
            }
        }
    };
    Ok(case)
}

/// One half-open digit cell `[left, right)` of the support partition.
#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    pub digit: usize,
    pub left: Scalar,
    pub right: Scalar,
}

/// A greedy transformation with its classified support: `T x = βx − a_j`
/// on the cell carrying digit `a_j`, acting on `[0, s)`.
#[derive(Debug, Clone)]
pub struct GreedySystem {
    beta: Scalar,
    digit_set: DigitSet,
    case: SupportCase,
    s: Scalar,
    cells: Vec<Cell>,
    backend: Backend,
    degenerate_boundary: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SystemDescriptor<'a> {
    pub beta: &'a Scalar,
    pub digits: &'a [Scalar],
    pub support_case: SupportCase,
    pub s: &'a Scalar,
    pub backend: Backend,
}

impl GreedySystem {
    /// Builds a three-digit deleted-digit system. Digits are normalized
    /// (smallest digit subtracted); if any input scalar uses the float
    /// backend, the whole system is coerced onto it.
    pub fn new(beta: Scalar, raw_digits: Vec<Scalar>) -> Result<Self> {
        let float = beta.backend() == Backend::Float
            || raw_digits.iter().any(|x| x.backend() == Backend::Float);
        let (beta, raw_digits) = if float {
            (
                beta.to_float_backend(FLOAT_COERCE_DIGITS),
                raw_digits
                    .iter()
                    .map(|x| x.to_float_backend(FLOAT_COERCE_DIGITS))
                    .collect(),
            )
        } else {
            (beta, raw_digits)
        };
        if beta.le(&Scalar::one()) {
            return Err(Error::InvalidBeta(format!("β = {} must exceed 1", beta)));
        }
        let digit_set = DigitSet::new(raw_digits)?;
        let (case, s) = classify_support(&beta, &digit_set)?;
        let degenerate_boundary = case == SupportCase::MainCase && {
            // a₂ = (β − 1) a₁ makes the top cell full of rank 1.
            let lhs = beta.try_sub(&Scalar::one())?.try_mul(digit_set.digit(1))?;
            lhs.try_cmp(digit_set.digit(2))? == std::cmp::Ordering::Equal
        };
        let cells = build_cells(&beta, digit_set.digits(), &s)?;
        Ok(GreedySystem {
            backend: beta.backend(),
            beta,
            digit_set,
            case,
            s,
            cells,
            degenerate_boundary,
        })
    }

    /// The classical transformation with complete digit set
    /// `{0, …, ⌊β⌋}`, restricted to the acim support `[0, 1)`.
    pub fn classical(beta: Scalar) -> Result<Self> {
        if beta.le(&Scalar::one()) {
            return Err(Error::InvalidBeta(format!("β = {} must exceed 1", beta)));
        }
        let m = beta
            .floor_int()
            .to_u64()
            .ok_or_else(|| Error::InvalidBeta("β too large".into()))?;
        if m > 64 {
            return Err(Error::InvalidBeta("β too large for the oracle".into()));
        }
        let digits: Vec<Scalar> = (0..=m as i64).map(Scalar::from_int).collect();
        let digits = if beta.backend() == Backend::Float {
            digits
                .iter()
                .map(|x| x.to_float_backend(FLOAT_COERCE_DIGITS))
                .collect()
        } else {
            digits
        };
        let digit_set = DigitSet::new(digits)?;
        let s = match beta.backend() {
            Backend::Exact => Scalar::one(),
            Backend::Float => Scalar::one().to_float_backend(FLOAT_COERCE_DIGITS),
        };
        let cells = build_cells(&beta, digit_set.digits(), &s)?;
        Ok(GreedySystem {
            backend: beta.backend(),
            beta,
            digit_set,
            case: SupportCase::ClassicalComplete,
            s,
            cells,
            degenerate_boundary: false,
        })
    }

    pub fn beta(&self) -> &Scalar {
        &self.beta
    }

    pub fn digit_set(&self) -> &DigitSet {
        &self.digit_set
    }

    pub fn digit_value(&self, idx: usize) -> &Scalar {
        self.digit_set.digit(idx)
    }

    pub fn support_case(&self) -> SupportCase {
        self.case
    }

    /// Support endpoint `s`; the working domain is `[0, s)`.
    pub fn support_end(&self) -> &Scalar {
        &self.s
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    /// True when `a₂ = (β − 1)a₁` exactly (MainCase boundary).
    pub fn degenerate_boundary(&self) -> bool {
        self.degenerate_boundary
    }

    pub fn descriptor(&self) -> SystemDescriptor<'_> {
        SystemDescriptor {
            beta: &self.beta,
            digits: self.digit_set.digits(),
            support_case: self.case,
            s: &self.s,
            backend: self.backend,
        }
    }

    pub(crate) fn expect_case(&self, wanted: SupportCase, op_needs: &'static str) -> Result<()> {
        if self.case != wanted {
            return Err(Error::WrongCase {
                expected: op_needs,
                actual: self.case.as_str(),
            });
        }
        Ok(())
    }

    fn check_domain(&self, x: &Scalar) -> Result<()> {
        if x.sign() < 0 || x.try_cmp(&self.s)? != std::cmp::Ordering::Less {
            return Err(Error::OutOfDomain(x.to_decimal(12)));
        }
        Ok(())
    }

    /// Index of the digit cell containing `x`. On the float backend a
    /// point within relative tolerance of a cell boundary is rejected as
    /// ambiguous instead of silently assigned a side.
    pub fn greedy_digit(&self, x: &Scalar) -> Result<usize> {
        self.check_domain(x)?;
        if self.backend == Backend::Float {
            let tol = boundary_rel_tolerance();
            for cell in &self.cells[1..] {
                let b = &cell.left;
                let scale = if b.gt(&Scalar::one()) {
                    b.clone()
                } else {
                    Scalar::one()
                };
                let abs_tol = match &scale * &Scalar::Float(tol.clone()) {
                    Scalar::Float(r) => r,
                    Scalar::Exact(_) => unreachable!("float backend"),
                };
                if x.within(b, &abs_tol) {
                    return Err(Error::BoundaryAmbiguous {
                        x: x.to_decimal(20),
                        boundary: b.to_decimal(20),
                    });
                }
            }
        }
        for cell in self.cells.iter().rev() {
            if x.ge(&cell.left) {
                return Ok(cell.digit);
            }
        }
        unreachable!("cells cover [0, s)")
    }

    /// One greedy step `T x = βx − b₁(x)`.
    pub fn step(&self, x: &Scalar) -> Result<Scalar> {
        let j = self.greedy_digit(x)?;
        let next = &(&self.beta * x) - self.digit_value(j);
        debug_assert!(next.sign() >= 0 && next.lt(&self.s));
        Ok(next)
    }

    /// Iterates `T`, recording values and digits. On the exact backend,
    /// eventual periodicity is detected by exact value repetition; the
    /// record then holds the pre-periodic part plus one full cycle, with
    /// the repeated value stored again at the end.
    pub fn orbit(&self, x: &Scalar, n_max: usize) -> Result<OrbitRecord> {
        self.check_domain(x)?;
        let mut values = vec![x.clone()];
        let mut digits_idx = Vec::new();
        let mut seen: HashMap<Scalar, usize> = HashMap::new();
        if self.backend == Backend::Exact {
            seen.insert(x.clone(), 0);
        }
        let mut preperiod = None;
        let mut period = None;
        for n in 0..n_max {
            let current = values.last().unwrap().clone();
            let j = self.greedy_digit(&current)?;
            let next = &(&self.beta * &current) - self.digit_value(j);
            digits_idx.push(j);
            values.push(next.clone());
            if self.backend == Backend::Exact {
                if let Some(&first) = seen.get(&next) {
                    preperiod = Some(first);
                    period = Some(n + 1 - first);
                    break;
                }
                seen.insert(next, n + 1);
            }
        }
        Ok(OrbitRecord {
            start: x.clone(),
            values,
            digits_idx,
            preperiod,
            period,
        })
    }

    /// First `n` greedy digits of `x`.
    pub fn expand(&self, x: &Scalar, n: usize) -> Result<Word> {
        self.check_domain(x)?;
        let mut current = x.clone();
        let mut symbols = Vec::with_capacity(n);
        for _ in 0..n {
            let j = self.greedy_digit(&current)?;
            symbols.push(self.digit_value(j).clone());
            current = &(&self.beta * &current) - self.digit_value(j);
        }
        Ok(Word { symbols })
    }

    /// The two points whose orbits generate every non-full image: the
    /// image endpoint `a₂ − a₁` of the middle cell and `βa₁ − a₂`, the
    /// image `a₁` would have under the unrestricted map. In the boundary
    /// case `a₂ = (β−1)a₁` the second point equals `s`.
    pub fn critical_points(&self) -> Result<(Scalar, Scalar)> {
        self.expect_case(SupportCase::MainCase, "main_case")?;
        let a1 = self.digit_value(1);
        let a2 = self.digit_value(2);
        let first = a2 - a1;
        let second = &(&self.beta * a1) - a2;
        debug_assert!(first.sign() >= 0 && first.lt(&self.s));
        debug_assert!(second.sign() >= 0 && second.le(&self.s));
        Ok((first, second))
    }

    /// Checks each orbit lemma whose hypothesis the system satisfies.
    pub fn verify_lemmas(&self) -> Result<LemmaReport> {
        self.expect_case(SupportCase::MainCase, "main_case")?;
        let (crit1, crit2) = self.critical_points()?;
        let a1 = self.digit_value(1);
        let a2 = self.digit_value(2);
        let delta0_end = a1.try_div(&self.beta)?;
        let delta2_start = a2.try_div(&self.beta)?;
        let mut checks = Vec::new();

        // β ≤ 2 forces a₂ − a₁ below the top cell.
        let applicable = self.beta.le(&Scalar::from_int(2));
        checks.push(LemmaCheck {
            id: "second-gap-below-top-cell",
            applicable,
            param: None,
            passed: applicable.then(|| crit1.lt(&delta2_start)),
        });

        // β ≤ G puts both critical points in the first cell.
        let applicable = self.beta.cmp_golden() != std::cmp::Ordering::Greater;
        checks.push(LemmaCheck {
            id: "critical-points-in-first-cell",
            applicable,
            param: None,
            passed: applicable.then(|| crit1.lt(&delta0_end) && crit2.lt(&delta0_end)),
        });

        // β ≤ 2^(1/m) keeps the first m iterates of both points in the
        // first cell; checked for the largest such m when m ≥ 2.
        let mut m = 0u64;
        let mut pow = self.beta.clone();
        while pow.le(&Scalar::from_int(2)) && m < 64 {
            m += 1;
            pow = &pow * &self.beta;
        }
        let applicable = m >= 2;
        let passed = if applicable {
            let mut ok = true;
            for start in [&crit1, &crit2] {
                let mut v = (*start).clone();
                for _ in 0..m {
                    if !v.lt(&delta0_end) {
                        ok = false;
                        break;
                    }
                    v = self.step(&v)?;
                }
            }
            Some(ok)
        } else {
            None
        };
        checks.push(LemmaCheck {
            id: "iterates-in-first-cell",
            applicable,
            param: applicable.then_some(m),
            passed,
        });

        Ok(LemmaReport { checks })
    }
}

fn build_cells(beta: &Scalar, digits: &[Scalar], s: &Scalar) -> Result<Vec<Cell>> {
    let mut cells = Vec::new();
    for (j, a) in digits.iter().enumerate() {
        let left = a.try_div(beta)?;
        if left.try_cmp(s)? != std::cmp::Ordering::Less {
            break;
        }
        let right = match digits.get(j + 1) {
            Some(next) => {
                let r = next.try_div(beta)?;
                if r.try_cmp(s)? == std::cmp::Ordering::Less {
                    r
                } else {
                    s.clone()
                }
            }
            None => s.clone(),
        };
        cells.push(Cell {
            digit: j,
            left,
            right,
        });
    }
    debug_assert!(cells.first().is_some_and(|c| c.left.is_zero()));
    debug_assert!(cells.last().is_some_and(|c| c.right == *s));
    Ok(cells)
}

/// One classical greedy step; digit per `b = min(⌊βx⌋, ⌊β⌋)` on the full
/// domain `[0, ⌊β⌋/(β−1)]`.
pub fn classical_step(beta: &Scalar, x: &Scalar) -> Result<(u64, Scalar)> {
    let m = beta
        .floor_int()
        .to_u64()
        .ok_or_else(|| Error::InvalidBeta("β too large".into()))?;
    let m_scalar = Scalar::from_int(m as i64);
    let top = m_scalar.try_div(&beta.try_sub(&Scalar::one())?)?;
    if x.sign() < 0 || x.gt(&top) {
        return Err(Error::OutOfDomain(x.to_decimal(12)));
    }
    let bx = beta.try_mul(x)?;
    let digit = bx.floor_int().to_u64().unwrap_or(0).min(m);
    let next = bx.try_sub(&Scalar::from_int(digit as i64))?;
    Ok((digit, next))
}

/// A finite digit word (actual digit values).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Word {
    pub symbols: Vec<Scalar>,
}

impl Word {
    pub fn new(symbols: Vec<Scalar>) -> Self {
        Word { symbols }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Evaluates `Σ bᵢ/βⁱ` for a finite word, optionally followed by an
/// infinitely repeated tail summed as a geometric series.
pub fn evaluate_word(beta: &Scalar, word: &Word, repeating_tail: Option<&Word>) -> Result<Scalar> {
    let beta_inv = Scalar::one().try_div(beta)?;
    let mut value = Scalar::zero();
    let mut power = Scalar::one();
    for symbol in &word.symbols {
        power = power.try_mul(&beta_inv)?;
        value = value.try_add(&symbol.try_mul(&power)?)?;
    }
    if let Some(tail) = repeating_tail {
        if tail.is_empty() {
            return Err(Error::EmptyTail);
        }
        let mut tail_value = Scalar::zero();
        let mut tail_power = Scalar::one();
        for symbol in &tail.symbols {
            tail_power = tail_power.try_mul(&beta_inv)?;
            tail_value = tail_value.try_add(&symbol.try_mul(&tail_power)?)?;
        }
        // tail_power is now β^{-|tail|}; sum the geometric series.
        let denom = Scalar::one().try_sub(&tail_power)?;
        let series = tail_value.try_div(&denom)?;
        value = value.try_add(&power.try_mul(&series)?)?;
    }
    Ok(value)
}

/// Orbit of a point: iterates, digits, and the exact (preperiod, period)
/// when a repetition was detected.
#[derive(Debug, Clone)]
pub struct OrbitRecord {
    pub start: Scalar,
    pub values: Vec<Scalar>,
    pub digits_idx: Vec<usize>,
    pub preperiod: Option<usize>,
    pub period: Option<usize>,
}

impl OrbitRecord {
    pub fn is_eventually_periodic(&self) -> bool {
        self.period.is_some()
    }

    /// Digit values along the orbit, as a word.
    pub fn digit_word(&self, sys: &GreedySystem) -> Word {
        Word {
            symbols: self
                .digits_idx
                .iter()
                .map(|&j| sys.digit_value(j).clone())
                .collect(),
        }
    }
}

/// One lemma-level orbit check.
#[derive(Debug, Clone, Serialize)]
pub struct LemmaCheck {
    pub id: &'static str,
    pub applicable: bool,
    /// The exponent `m` for the iterate check, when applicable.
    pub param: Option<u64>,
    pub passed: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    pub checks: Vec<LemmaCheck>,
}

impl LemmaReport {
    pub fn all_passed(&self) -> bool {
        self.checks
            .iter()
            .all(|c| !c.applicable || c.passed == Some(true))
    }

    pub fn applicable_count(&self) -> usize {
        self.checks.iter().filter(|c| c.applicable).count()
    }
}

/// The golden-mean example system: β = (1+√5)/2, digits {0, 3, 4}.
pub fn golden_system() -> GreedySystem {
    GreedySystem::new(
        Scalar::golden(),
        vec![Scalar::from_int(0), Scalar::from_int(3), Scalar::from_int(4)],
    )
    .expect("valid example system")
}
