//! Invariant densities: the β^(−n)-weighted indicator sum over non-full
//! intervals, its exact closed form, the transfer operator, the classical
//! oracle and Monte-Carlo validation.
//!
//! Every non-full interval of rank `n` contributes `β^(−n)` on its image
//! `[0, t)`. Instead of enumerating words, levels are aggregated by the
//! exact image endpoint: a node with image `[0, t)` always has one child
//! with image `[0, Tt)`, plus a fixed restarted value for each digit cell
//! lying entirely below `t`. When both generating orbits are eventually
//! periodic the distinct endpoints form a finite set `V`, level counts
//! evolve linearly, and the total weight vector solves
//! `(I − M/β)·W = w₁/β` exactly in ℚ(√d).

use std::collections::HashMap;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exactnum::{Backend, Scalar};
use crate::intervals::{children_of_image, kappa_tail_from};
use crate::system::{classical_step, GreedySystem, SupportCase};

/// Cap on the number of distinct image endpoints tracked when probing for
/// eventual periodicity.
const CLASS_CAP: usize = 256;
/// Cap on truncation depth of the aggregated level recursion.
const TRUNCATION_CAP: usize = 4096;
/// Cap on classical orbit probing.
const CLASSICAL_ORBIT_CAP: usize = 512;

/// A piecewise-constant function on `[0, s]`: strictly increasing
/// breakpoints starting at 0 and ending at `s`, one value per gap. All
/// gaps are half-open `[bpᵢ, bpᵢ₊₁)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepFn {
    breakpoints: Vec<Scalar>,
    values: Vec<Scalar>,
    backend: Backend,
    normalized: bool,
}

impl StepFn {
    pub fn new(breakpoints: Vec<Scalar>, values: Vec<Scalar>, backend: Backend) -> Result<Self> {
        if breakpoints.len() < 2 || values.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidArgument(
                "step function needs n+1 breakpoints for n values".into(),
            ));
        }
        if !breakpoints[0].is_zero() {
            return Err(Error::InvalidArgument(
                "step function must start at 0".into(),
            ));
        }
        for w in breakpoints.windows(2) {
            if w[0].try_cmp(&w[1])? != std::cmp::Ordering::Less {
                return Err(Error::InvalidArgument(
                    "breakpoints must be strictly increasing".into(),
                ));
            }
        }
        Ok(StepFn {
            breakpoints,
            values,
            backend,
            normalized: false,
        })
    }

    pub fn constant(value: Scalar, end: Scalar, backend: Backend) -> Self {
        StepFn {
            breakpoints: vec![Scalar::zero(), end],
            values: vec![value],
            backend,
            normalized: false,
        }
    }

    pub fn breakpoints(&self) -> &[Scalar] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[Scalar] {
        &self.values
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn domain_end(&self) -> &Scalar {
        self.breakpoints.last().unwrap()
    }

    /// Value on the gap containing `x ∈ [0, s)`.
    pub fn value_at(&self, x: &Scalar) -> Result<&Scalar> {
        if x.sign() < 0 || !x.lt(self.domain_end()) {
            return Err(Error::OutOfDomain(x.to_decimal(12)));
        }
        let idx = self
            .breakpoints
            .partition_point(|bp| bp.le(x))
            .saturating_sub(1);
        Ok(&self.values[idx])
    }

    /// Exact integral over the whole domain.
    pub fn integral(&self) -> Scalar {
        let mut acc = Scalar::zero();
        for (i, v) in self.values.iter().enumerate() {
            let width = &self.breakpoints[i + 1] - &self.breakpoints[i];
            acc = &acc + &(v * &width);
        }
        acc
    }

    /// Exact integral over `[lo, hi] ∩ [0, s]`.
    pub fn integral_over(&self, lo: &Scalar, hi: &Scalar) -> Result<Scalar> {
        let mut acc = Scalar::zero();
        for (i, v) in self.values.iter().enumerate() {
            let left = if self.breakpoints[i].ge(lo) {
                self.breakpoints[i].clone()
            } else {
                lo.clone()
            };
            let right = if self.breakpoints[i + 1].le(hi) {
                self.breakpoints[i + 1].clone()
            } else {
                hi.clone()
            };
            if left.lt(&right) {
                acc = acc.try_add(&v.try_mul(&right.try_sub(&left)?)?)?;
            }
        }
        Ok(acc)
    }

    pub fn scale(&self, c: &Scalar) -> StepFn {
        StepFn {
            breakpoints: self.breakpoints.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
            backend: self.backend,
            normalized: false,
        }
    }

    fn merged_breakpoints(&self, other: &StepFn) -> Vec<Scalar> {
        let mut all: Vec<Scalar> = self
            .breakpoints
            .iter()
            .chain(other.breakpoints.iter())
            .cloned()
            .collect();
        all.sort_by(|a, b| a.cmp_total(b));
        all.dedup();
        all
    }

    /// Pointwise linear combination `self + c·other` on the merged grid.
    pub fn add_scaled(&self, other: &StepFn, c: &Scalar) -> Result<StepFn> {
        let bps = self.merged_breakpoints(other);
        let mut values = Vec::with_capacity(bps.len() - 1);
        for i in 0..bps.len() - 1 {
            let x = &bps[i];
            let a = self.value_at(x)?;
            let b = other.value_at(x)?;
            values.push(a.try_add(&c.try_mul(b)?)?);
        }
        StepFn::new(bps, values, self.backend)
    }

    /// Sup-norm of the pointwise difference.
    pub fn sup_distance(&self, other: &StepFn) -> Result<Scalar> {
        let bps = self.merged_breakpoints(other);
        let mut best = Scalar::zero();
        for i in 0..bps.len() - 1 {
            let x = &bps[i];
            let diff = self.value_at(x)?.try_sub(other.value_at(x)?)?;
            let abs = if diff.sign() < 0 { -&diff } else { diff };
            if abs.gt(&best) {
                best = abs;
            }
        }
        Ok(best)
    }

    /// New function with breakpoints scaled by `c` and values divided by
    /// `c` (a density under `x ↦ c·x`).
    pub fn rescale_domain(&self, c: &Scalar) -> Result<StepFn> {
        let breakpoints = self
            .breakpoints
            .iter()
            .map(|bp| bp.try_mul(c))
            .collect::<Result<Vec<_>>>()?;
        let values = self
            .values
            .iter()
            .map(|v| v.try_div(c))
            .collect::<Result<Vec<_>>>()?;
        Ok(StepFn {
            breakpoints,
            values,
            backend: self.backend,
            normalized: self.normalized,
        })
    }
}

/// Divides by the exact integral.
pub fn normalize(f: &StepFn) -> Result<StepFn> {
    let integral = f.integral();
    if integral.sign() <= 0 {
        return Err(Error::ZeroIntegral);
    }
    let mut out = f.scale(&integral.recip()?);
    out.normalized = true;
    Ok(out)
}

/// A weighted sum of indicators `base·1_[0,s) + Σ wᵥ·1_[0,v)`.
#[derive(Debug, Clone, Serialize)]
pub struct IndicatorSum {
    pub support_end: Scalar,
    pub base: Scalar,
    /// `(end, weight)` pairs with distinct ends in `(0, s)`, ascending.
    pub terms: Vec<(Scalar, Scalar)>,
}

impl IndicatorSum {
    pub fn to_step_fn(&self, backend: Backend) -> Result<StepFn> {
        let mut bps = vec![Scalar::zero()];
        bps.extend(self.terms.iter().map(|(v, _)| v.clone()));
        bps.push(self.support_end.clone());
        bps.dedup();
        let mut values = Vec::with_capacity(bps.len() - 1);
        for i in 0..bps.len() - 1 {
            let x = &bps[i];
            let mut v = self.base.clone();
            for (end, w) in &self.terms {
                if end.gt(x) {
                    v = v.try_add(w)?;
                }
            }
            values.push(v);
        }
        StepFn::new(bps, values, backend)
    }

    /// `∫ dλ` of the indicator sum.
    pub fn integral(&self) -> Result<Scalar> {
        let mut acc = self.base.try_mul(&self.support_end)?;
        for (end, w) in &self.terms {
            acc = acc.try_add(&w.try_mul(end)?)?;
        }
        Ok(acc)
    }

    /// Sum of all indicator weights (base excluded).
    pub fn weight_sum(&self) -> Result<Scalar> {
        let mut acc = Scalar::zero();
        for (_, w) in &self.terms {
            acc = acc.try_add(w)?;
        }
        Ok(acc)
    }
}

/// Exact per-class weights `W[v] = Σ_n count_n(v)/βⁿ` for the aggregated
/// level recursion, solved in closed form.
#[derive(Debug, Clone)]
pub struct ClassWeights {
    pub values: Vec<Scalar>,
    pub weights: Vec<Scalar>,
}

impl ClassWeights {
    pub fn weight_of(&self, value: &Scalar) -> Option<&Scalar> {
        self.values
            .iter()
            .position(|v| v == value)
            .map(|i| &self.weights[i])
    }
}

struct ClassGraph {
    values: Vec<Scalar>,
    /// Child class ids (with multiplicity) of each class.
    children: Vec<Vec<usize>>,
    /// Class ids of the rank-1 non-full cells (with multiplicity).
    initial: Vec<usize>,
}

fn build_class_graph(sys: &GreedySystem, cap: usize) -> Result<ClassGraph> {
    let mut index: HashMap<Scalar, usize> = HashMap::new();
    let mut values: Vec<Scalar> = Vec::new();
    let mut worklist: Vec<usize> = Vec::new();

    fn intern(
        v: Scalar,
        index: &mut HashMap<Scalar, usize>,
        values: &mut Vec<Scalar>,
        worklist: &mut Vec<usize>,
    ) -> usize {
        if let Some(&i) = index.get(&v) {
            return i;
        }
        let i = values.len();
        index.insert(v.clone(), i);
        values.push(v);
        worklist.push(i);
        i
    }

    let mut initial = Vec::new();
    for c in children_of_image(sys, sys.support_end()) {
        if !c.full {
            initial.push(intern(c.image_end, &mut index, &mut values, &mut worklist));
        }
    }
    let mut children: Vec<Option<Vec<usize>>> = Vec::new();
    while let Some(i) = worklist.pop() {
        if values.len() > cap {
            return Err(Error::NotEventuallyPeriodic { cap });
        }
        let value = values[i].clone();
        let mut kids = Vec::new();
        for c in children_of_image(sys, &value) {
            if !c.full {
                kids.push(intern(c.image_end, &mut index, &mut values, &mut worklist));
            }
        }
        if children.len() <= i {
            children.resize(i + 1, None);
        }
        children[i] = Some(kids);
    }
    children.resize(values.len(), None);
    let children = children.into_iter().map(Option::unwrap_or_default).collect();
    Ok(ClassGraph {
        values,
        children,
        initial,
    })
}

/// Solves `(I − M/β)·W = w₁/β` by Gaussian elimination over the exact
/// field. Convergence of the underlying series (level counts grow
/// strictly slower than βⁿ) makes the matrix invertible.
fn solve_class_weights(sys: &GreedySystem, graph: &ClassGraph) -> Result<ClassWeights> {
    let n = graph.values.len();
    let beta_inv = sys.beta().recip()?;
    // A[row][col], augmented with the right-hand side.
    let mut a = vec![vec![Scalar::zero(); n + 1]; n];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = Scalar::one();
    }
    for (col, kids) in graph.children.iter().enumerate() {
        for &kid in kids {
            a[kid][col] = a[kid][col].try_sub(&beta_inv)?;
        }
    }
    for &i in &graph.initial {
        a[i][n] = a[i][n].try_add(&beta_inv)?;
    }
    for col in 0..n {
        let pivot_row = (col..n)
            .find(|&r| !a[r][col].is_zero())
            .expect("aggregation matrix is invertible");
        a.swap(col, pivot_row);
        let pivot = a[col][col].clone();
        for r in col + 1..n {
            if a[r][col].is_zero() {
                continue;
            }
            let factor = a[r][col].try_div(&pivot)?;
            for c in col..=n {
                let delta = factor.try_mul(&a[col][c])?;
                a[r][c] = a[r][c].try_sub(&delta)?;
            }
        }
    }
    let mut w = vec![Scalar::zero(); n];
    for row in (0..n).rev() {
        let mut rhs = a[row][n].clone();
        for c in row + 1..n {
            rhs = rhs.try_sub(&a[row][c].try_mul(&w[c])?)?;
        }
        w[row] = rhs.try_div(&a[row][row])?;
    }
    debug_assert!(w.iter().all(|x| x.sign() >= 0));
    Ok(ClassWeights {
        values: graph.values.clone(),
        weights: w,
    })
}

/// Closed-form class weights; requires both generating orbits to be
/// eventually periodic.
pub fn closed_class_weights(sys: &GreedySystem) -> Result<ClassWeights> {
    let graph = build_class_graph(sys, CLASS_CAP)?;
    solve_class_weights(sys, &graph)
}

/// Aggregated truncation state: per-image-endpoint counts and the
/// accumulated weights up to the current level.
pub struct TruncatedWeights {
    pub values: Vec<Scalar>,
    pub weights: Vec<Scalar>,
    /// κ(n) for n = 1..N.
    pub kappa: Vec<BigUint>,
    pub depth: usize,
    /// Certified bound on `Σ_{n>N} κ(n)/βⁿ`, the sup-norm tail.
    pub tail_sup: Scalar,
}

impl TruncatedWeights {
    pub fn weight_of(&self, value: &Scalar) -> Option<&Scalar> {
        self.values
            .iter()
            .position(|v| v == value)
            .map(|i| &self.weights[i])
    }
}

struct TruncationEngine<'a> {
    sys: &'a GreedySystem,
    counts: HashMap<Scalar, BigUint>,
    weights: HashMap<Scalar, Scalar>,
    kappa: Vec<BigUint>,
    depth: usize,
    beta_inv_pow: Scalar,
    beta_inv: Scalar,
}

impl<'a> TruncationEngine<'a> {
    fn start(sys: &'a GreedySystem) -> Result<Self> {
        let beta_inv = sys.beta().recip()?;
        let mut engine = TruncationEngine {
            sys,
            counts: HashMap::new(),
            weights: HashMap::new(),
            kappa: Vec::new(),
            depth: 0,
            beta_inv_pow: Scalar::one(),
            beta_inv,
        };
        for c in children_of_image(sys, sys.support_end()) {
            if !c.full {
                *engine
                    .counts
                    .entry(c.image_end)
                    .or_insert_with(BigUint::zero) += 1u32;
            }
        }
        engine.absorb()?;
        Ok(engine)
    }

    /// Accumulates the current level into the weights.
    fn absorb(&mut self) -> Result<()> {
        self.depth += 1;
        self.beta_inv_pow = self.beta_inv_pow.try_mul(&self.beta_inv)?;
        let mut kappa = BigUint::zero();
        for (value, count) in &self.counts {
            kappa += count;
            let count_scalar = big_uint_scalar(count, self.sys.backend());
            let add = count_scalar.try_mul(&self.beta_inv_pow)?;
            let entry = self
                .weights
                .entry(value.clone())
                .or_insert_with(Scalar::zero);
            *entry = entry.try_add(&add)?;
        }
        self.kappa.push(kappa);
        Ok(())
    }

    fn advance(&mut self) -> Result<()> {
        let mut next: HashMap<Scalar, BigUint> = HashMap::new();
        for (value, count) in &self.counts {
            for c in children_of_image(self.sys, value) {
                if !c.full {
                    *next.entry(c.image_end).or_insert_with(BigUint::zero) += count;
                }
            }
        }
        self.counts = next;
        self.absorb()
    }

    fn tail(&self) -> Result<Scalar> {
        kappa_tail_from(self.sys, self.kappa.last().unwrap(), self.depth)
    }

    fn finish(self) -> Result<TruncatedWeights> {
        let tail_sup = self.tail()?;
        let mut pairs: Vec<(Scalar, Scalar)> = self.weights.into_iter().collect();
        pairs.sort_by(|a, b| a.0.cmp_total(&b.0));
        let (values, weights) = pairs.into_iter().unzip();
        Ok(TruncatedWeights {
            values,
            weights,
            kappa: self.kappa,
            depth: self.depth,
            tail_sup,
        })
    }
}

fn big_uint_scalar(n: &BigUint, backend: Backend) -> Scalar {
    let r = BigRational::from_integer(BigInt::from(n.clone()));
    match backend {
        Backend::Exact => Scalar::from_big_rational(r),
        Backend::Float => Scalar::Float(r),
    }
}

/// Truncated class weights to a fixed depth.
pub fn truncated_class_weights(sys: &GreedySystem, depth: usize) -> Result<TruncatedWeights> {
    if depth == 0 || depth > TRUNCATION_CAP {
        return Err(Error::DepthExceeded {
            requested: depth,
            cap: TRUNCATION_CAP,
        });
    }
    let mut engine = TruncationEngine::start(sys)?;
    while engine.depth < depth {
        engine.advance()?;
    }
    engine.finish()
}

/// Truncated class weights, deep enough that the certified tail drops
/// below `target` (or the depth cap is reached; the tail is reported
/// either way).
pub fn truncated_to_tail(sys: &GreedySystem, target: &Scalar) -> Result<TruncatedWeights> {
    let mut engine = TruncationEngine::start(sys)?;
    while engine.depth < TRUNCATION_CAP {
        if engine.depth >= 4 && engine.tail()?.le(target) {
            break;
        }
        engine.advance()?;
    }
    engine.finish()
}

/// How a density was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityMode {
    /// Exact geometric-series summation over the finite class set.
    Closed,
    /// Partial sums to the given depth with a certified sup-norm tail.
    Truncated { depth: usize },
}

/// The unnormalized indicator sum `φ`, with its assembly and tail data.
#[derive(Debug, Clone)]
pub struct PhiResult {
    pub mode: DensityMode,
    pub indicator: IndicatorSum,
    pub step: StepFn,
    /// Sup-norm bound on the discarded part (zero in closed mode).
    pub tail_sup: Scalar,
}

/// Mode request for [`phi`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiMode {
    Closed,
    Truncated(usize),
}

fn indicator_from_pairs(
    sys: &GreedySystem,
    values: &[Scalar],
    weights: &[Scalar],
) -> IndicatorSum {
    let mut terms: Vec<(Scalar, Scalar)> = values
        .iter()
        .cloned()
        .zip(weights.iter().cloned())
        .filter(|(v, _)| v.sign() > 0)
        .collect();
    terms.sort_by(|a, b| a.0.cmp_total(&b.0));
    IndicatorSum {
        support_end: sys.support_end().clone(),
        base: Scalar::one(),
        terms,
    }
}

/// The unnormalized density `φ = 1 + Σ_n Σ_{B_n} β^(−n) 1_image`.
pub fn phi(sys: &GreedySystem, mode: PhiMode) -> Result<PhiResult> {
    if sys.support_case() == SupportCase::ClassicalComplete {
        return Err(Error::WrongCase {
            expected: "three-digit system",
            actual: sys.support_case().as_str(),
        });
    }
    match mode {
        PhiMode::Closed => {
            let cw = closed_class_weights(sys)?;
            let indicator = indicator_from_pairs(sys, &cw.values, &cw.weights);
            let step = indicator.to_step_fn(sys.backend())?;
            Ok(PhiResult {
                mode: DensityMode::Closed,
                indicator,
                step,
                tail_sup: Scalar::zero(),
            })
        }
        PhiMode::Truncated(depth) => {
            let tw = truncated_class_weights(sys, depth)?;
            let indicator = indicator_from_pairs(sys, &tw.values, &tw.weights);
            let step = indicator.to_step_fn(sys.backend())?;
            Ok(PhiResult {
                mode: DensityMode::Truncated { depth: tw.depth },
                indicator,
                step,
                tail_sup: tw.tail_sup,
            })
        }
    }
}

/// Truncated `φ` with the depth chosen so the certified tail is below
/// `target`.
pub fn phi_truncated_to_tail(sys: &GreedySystem, target: &Scalar) -> Result<PhiResult> {
    if sys.support_case() == SupportCase::ClassicalComplete {
        return Err(Error::WrongCase {
            expected: "three-digit system",
            actual: sys.support_case().as_str(),
        });
    }
    let tw = truncated_to_tail(sys, target)?;
    let indicator = indicator_from_pairs(sys, &tw.values, &tw.weights);
    let step = indicator.to_step_fn(sys.backend())?;
    Ok(PhiResult {
        mode: DensityMode::Truncated { depth: tw.depth },
        indicator,
        step,
        tail_sup: tw.tail_sup,
    })
}

/// One application of the transfer operator of `T`:
/// `(Lf)(x) = Σ_j 1_{T(cell_j)}(x) · f((x + a_j)/β)/β`, exact on the
/// breakpoint grid pulled back through every inverse branch.
pub fn transfer_apply(sys: &GreedySystem, f: &StepFn) -> Result<StepFn> {
    let beta = sys.beta();
    let s = sys.support_end();
    struct Branch {
        digit_value: Scalar,
        image_end: Scalar,
    }
    let branches: Vec<Branch> = sys
        .cells()
        .iter()
        .map(|c| {
            let image_end = &(beta * &c.right) - sys.digit_value(c.digit);
            Branch {
                digit_value: sys.digit_value(c.digit).clone(),
                image_end,
            }
        })
        .collect();
    let mut bps = vec![Scalar::zero(), s.clone()];
    for b in &branches {
        if b.image_end.sign() > 0 && b.image_end.lt(s) {
            bps.push(b.image_end.clone());
        }
        for bp in f.breakpoints() {
            let x = &(beta * bp) - &b.digit_value;
            if x.sign() > 0 && x.lt(s) {
                bps.push(x);
            }
        }
    }
    bps.sort_by(|a, b| a.cmp_total(b));
    bps.dedup();
    let beta_inv = beta.recip()?;
    let mut values = Vec::with_capacity(bps.len() - 1);
    for i in 0..bps.len() - 1 {
        let x = &bps[i];
        let mut acc = Scalar::zero();
        for b in &branches {
            if x.lt(&b.image_end) {
                let pre = x.try_add(&b.digit_value)?.try_mul(&beta_inv)?;
                acc = acc.try_add(&f.value_at(&pre)?.try_mul(&beta_inv)?)?;
            }
        }
        values.push(acc);
    }
    StepFn::new(bps, values, sys.backend())
}

/// Sup-norm of `Lf − f`.
pub fn transfer_residual(sys: &GreedySystem, f: &StepFn) -> Result<Scalar> {
    transfer_apply(sys, f)?.sup_distance(f)
}

/// Classical-oracle density on `[0, 1)`.
#[derive(Debug, Clone)]
pub struct ParryResult {
    pub mode: DensityMode,
    pub indicator: IndicatorSum,
    /// Normalized density.
    pub density: StepFn,
    /// The normalizing integral of the indicator sum.
    pub normalizer: Scalar,
    pub tail_sup: Scalar,
}

fn classical_orbit_weights(
    beta: &Scalar,
    force_depth: Option<usize>,
) -> Result<(Vec<(Scalar, Scalar)>, DensityMode, Scalar)> {
    // Orbit of 1 with weights β^(−n), n ≥ 0; a terminating orbit (hit 0)
    // or a detected cycle gives the exact closed form.
    let beta_inv = beta.recip()?;
    let mut values: Vec<Scalar> = vec![Scalar::one()];
    let mut seen: HashMap<Scalar, usize> = HashMap::new();
    seen.insert(Scalar::one(), 0);
    let mut cycle: Option<(usize, usize)> = None;
    let mut terminated = false;
    let cap = force_depth.unwrap_or(CLASSICAL_ORBIT_CAP);
    let exact = beta.backend() == Backend::Exact;
    for n in 0..cap {
        let (_, next) = classical_step(beta, &values[n])?;
        if next.is_zero() {
            terminated = true;
            break;
        }
        if exact && force_depth.is_none() {
            if let Some(&first) = seen.get(&next) {
                cycle = Some((first, n + 1 - first));
                break;
            }
            seen.insert(next.clone(), n + 1);
        }
        values.push(next);
    }
    let mut pairs: Vec<(Scalar, Scalar)> = Vec::new();
    let add_weight = |pairs: &mut Vec<(Scalar, Scalar)>,
                          value: &Scalar,
                          w: Scalar|
     -> Result<()> {
        for (v, acc) in pairs.iter_mut() {
            if v == value {
                *acc = acc.try_add(&w)?;
                return Ok(());
            }
        }
        pairs.push((value.clone(), w));
        Ok(())
    };
    match cycle {
        Some((preperiod, period)) => {
            for (n, v) in values.iter().enumerate() {
                let base = beta_inv.pow_int(n as i64)?;
                let w = if n >= preperiod {
                    // v recurs at n, n+p, n+2p, …
                    let ratio = beta_inv.pow_int(period as i64)?;
                    base.try_div(&Scalar::one().try_sub(&ratio)?)?
                } else {
                    base
                };
                add_weight(&mut pairs, v, w)?;
            }
            Ok((pairs, DensityMode::Closed, Scalar::zero()))
        }
        None => {
            for (n, v) in values.iter().enumerate() {
                let w = beta_inv.pow_int(n as i64)?;
                add_weight(&mut pairs, v, w)?;
            }
            if terminated {
                Ok((pairs, DensityMode::Closed, Scalar::zero()))
            } else {
                // Tail: Σ_{n>N} β^(−n) = β^(−N)/(β−1).
                let n = values.len() - 1;
                let tail = beta_inv
                    .pow_int(n as i64)?
                    .try_div(&beta.try_sub(&Scalar::one())?)?;
                Ok((pairs, DensityMode::Truncated { depth: n }, tail))
            }
        }
    }
}

fn parry_from_pairs(
    beta: &Scalar,
    pairs: Vec<(Scalar, Scalar)>,
    mode: DensityMode,
    tail_sup: Scalar,
) -> Result<ParryResult> {
    let one = match beta.backend() {
        Backend::Exact => Scalar::one(),
        Backend::Float => Scalar::one().to_float_backend(1),
    };
    // The orbit starts at 1, whose indicator is the base term; everything
    // strictly inside (0, 1) becomes an indicator term.
    let mut terms: Vec<(Scalar, Scalar)> = pairs
        .into_iter()
        .filter(|(v, _)| v.sign() > 0 && v.lt(&one))
        .collect();
    terms.sort_by(|a, b| a.0.cmp_total(&b.0));
    let indicator = IndicatorSum {
        support_end: one,
        base: Scalar::one(),
        terms,
    };
    let normalizer = indicator.integral()?;
    let density = normalize(&indicator.to_step_fn(beta.backend())?)?;
    Ok(ParryResult {
        mode,
        indicator,
        density,
        normalizer,
        tail_sup,
    })
}

/// The classical invariant density for `β > 1`: exact when the orbit of 1
/// terminates or cycles, truncated with tail `β^(−N)/(β−1)` otherwise.
pub fn parry_density(beta: &Scalar) -> Result<ParryResult> {
    if beta.le(&Scalar::one()) {
        return Err(Error::InvalidBeta(format!("β = {} must exceed 1", beta)));
    }
    let (pairs, mode, tail) = classical_orbit_weights(beta, None)?;
    parry_from_pairs(beta, pairs, mode, tail)
}

/// Forced truncation of the classical density at `depth` orbit values.
pub fn parry_density_truncated(beta: &Scalar, depth: usize) -> Result<ParryResult> {
    if beta.le(&Scalar::one()) {
        return Err(Error::InvalidBeta(format!("β = {} must exceed 1", beta)));
    }
    let (pairs, mode, tail) = classical_orbit_weights(beta, Some(depth))?;
    parry_from_pairs(beta, pairs, mode, tail)
}

/// The invariant density of a system, with provenance metadata.
#[derive(Debug, Clone, Serialize)]
pub struct Acim {
    pub density: StepFn,
    pub mode: DensityMode,
    /// Exact integral of the unnormalized indicator sum.
    pub normalizer: Scalar,
    /// Sup-norm tail of the unnormalized sum (zero in closed mode).
    pub tail_sup: Scalar,
    /// Tail divided by the normalizer: sup-norm uncertainty of `density`.
    pub tail_sup_normalized: Scalar,
    pub backend: Backend,
    pub notes: Vec<String>,
}

/// Default truncation target for the unnormalized tail.
fn default_tail_target() -> Scalar {
    Scalar::from_big_rational(BigRational::new(BigInt::one(), BigInt::from(10u64).pow(12)))
}

fn acim_from_phi(sys: &GreedySystem, phi_result: PhiResult) -> Result<Acim> {
    let normalizer = phi_result.indicator.integral()?;
    let density = normalize(&phi_result.step)?;
    let tail_sup_normalized = phi_result.tail_sup.try_div(&normalizer)?;
    let notes = vec![
        "normalized by the exact integral of the indicator sum; the density integrates to 1 over the support"
            .into(),
        format!(
            "normalizing constant ∫φ dλ = {} (exact form serialized in the normalizer field); any alternative constant must be compared against this integral",
            normalizer.to_decimal(12)
        ),
    ];
    Ok(Acim {
        density,
        mode: phi_result.mode,
        normalizer: normalizer.clone(),
        tail_sup: phi_result.tail_sup,
        tail_sup_normalized,
        backend: sys.backend(),
        notes,
    })
}

fn acim_from_parry(sys: &GreedySystem, parry: ParryResult) -> Result<Acim> {
    let (density, scale, note) = match sys.support_case() {
        SupportCase::IsoClassical => {
            let a1 = sys.digit_value(1);
            (
                parry.density.rescale_domain(a1)?,
                a1.clone(),
                format!(
                    "digit-conjugate to the classical transformation; oracle density rescaled to [0, {})",
                    a1.to_decimal(12)
                ),
            )
        }
        _ => (
            parry.density.clone(),
            Scalar::one(),
            "classical oracle on [0, 1)".into(),
        ),
    };
    let tail_norm = parry.tail_sup.try_div(&parry.normalizer)?.try_div(&scale)?;
    Ok(Acim {
        density,
        mode: parry.mode,
        normalizer: parry.normalizer,
        tail_sup: parry.tail_sup,
        tail_sup_normalized: tail_norm,
        backend: sys.backend(),
        notes: vec![note],
    })
}

fn is_classical_route(sys: &GreedySystem) -> bool {
    matches!(
        sys.support_case(),
        SupportCase::ClassicalComplete | SupportCase::IsoClassical
    )
}

/// The absolutely continuous invariant density of the system: the
/// classical oracle (rescaled) for conjugate-to-classical cases, the
/// indicator sum otherwise, exact whenever the generating orbits are
/// eventually periodic.
pub fn acim(sys: &GreedySystem) -> Result<Acim> {
    if is_classical_route(sys) {
        return acim_from_parry(sys, parry_density(sys.beta())?);
    }
    let phi_result = match phi(sys, PhiMode::Closed) {
        Ok(r) => r,
        Err(Error::NotEventuallyPeriodic { .. }) => {
            phi_truncated_to_tail(sys, &default_tail_target())?
        }
        Err(e) => return Err(e),
    };
    acim_from_phi(sys, phi_result)
}

/// Like [`acim`] but forcing truncation until the certified unnormalized
/// tail is below `target`, regardless of closed-form availability.
pub fn acim_truncated(sys: &GreedySystem, target: &Scalar) -> Result<Acim> {
    if is_classical_route(sys) {
        let beta = sys.beta();
        let mut depth = 8;
        loop {
            let parry = parry_density_truncated(beta, depth)?;
            if parry.tail_sup.le(target) || depth >= CLASSICAL_ORBIT_CAP {
                return acim_from_parry(sys, parry);
            }
            depth *= 2;
        }
    }
    acim_from_phi(sys, phi_truncated_to_tail(sys, target)?)
}

/// Explicit mode request for [`acim_with`].
#[derive(Debug, Clone)]
pub enum AcimRequest {
    /// Closed form when available, default truncation otherwise.
    Auto,
    /// Closed form, or an error when the orbits do not close up.
    Closed,
    /// Truncate at exactly this depth.
    TruncatedDepth(usize),
    /// Truncate until the certified unnormalized tail undercuts this.
    TruncatedTail(Scalar),
}

/// Dispatches on an explicit density-mode request.
pub fn acim_with(sys: &GreedySystem, request: AcimRequest) -> Result<Acim> {
    match request {
        AcimRequest::Auto => acim(sys),
        AcimRequest::Closed => {
            if is_classical_route(sys) {
                let a = acim(sys)?;
                if a.mode == DensityMode::Closed {
                    Ok(a)
                } else {
                    Err(Error::NotEventuallyPeriodic {
                        cap: CLASSICAL_ORBIT_CAP,
                    })
                }
            } else {
                acim_from_phi(sys, phi(sys, PhiMode::Closed)?)
            }
        }
        AcimRequest::TruncatedDepth(depth) => {
            if is_classical_route(sys) {
                acim_from_parry(sys, parry_density_truncated(sys.beta(), depth)?)
            } else {
                acim_from_phi(sys, phi(sys, PhiMode::Truncated(depth))?)
            }
        }
        AcimRequest::TruncatedTail(target) => acim_truncated(sys, &target),
    }
}

/// Empirical occupation histogram of a single orbit, with its L1
/// distance (in probability mass) to the exact invariant density.
#[derive(Debug, Clone, Serialize)]
pub struct BirkhoffResult {
    pub bins: usize,
    pub iterations: u64,
    pub seed: u64,
    pub start: f64,
    /// Empirical probability mass per bin.
    pub empirical: Vec<f64>,
    /// Exact mass per bin, rounded to f64.
    pub expected: Vec<f64>,
    /// Σ |empirical − expected| over the bins.
    pub l1_distance: f64,
}

impl BirkhoffResult {
    /// The empirical histogram as a float-backend step density.
    pub fn to_step_fn(&self, support_end: &Scalar) -> Result<StepFn> {
        let bins = self.bins;
        let mut bps = Vec::with_capacity(bins + 1);
        for j in 0..=bins {
            bps.push(support_end.try_mul(&Scalar::from_ratio(j as i64, bins as i64))?);
        }
        let width = support_end.to_f64() / bins as f64;
        let values = self
            .empirical
            .iter()
            .map(|&m| {
                Scalar::Float(BigRational::from_float(m / width).unwrap_or_else(BigRational::zero))
            })
            .collect();
        StepFn::new(bps, values, Backend::Float)
    }
}

/// Runs `iterations` greedy steps in f64 from a seeded (or given) start
/// and compares the occupation frequencies against the exact density.
/// Equal-width bins; edges are never snapped to density breakpoints.
pub fn birkhoff_histogram(
    sys: &GreedySystem,
    start: Option<f64>,
    iterations: u64,
    bins: usize,
    seed: u64,
) -> Result<BirkhoffResult> {
    if iterations < 10_000 {
        return Err(Error::InvalidArgument(
            "need at least 10^4 iterations".into(),
        ));
    }
    if bins < 8 {
        return Err(Error::InvalidArgument("need at least 8 bins".into()));
    }
    let exact = acim(sys)?;
    let s = sys.support_end().to_f64();
    let beta = sys.beta().to_f64();
    let cells: Vec<(f64, f64)> = sys
        .cells()
        .iter()
        .map(|c| (c.left.to_f64(), sys.digit_value(c.digit).to_f64()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = start.unwrap_or_else(|| rng.random::<f64>() * s);
    x = x.clamp(0.0, s * (1.0 - 1e-15));
    let width = s / bins as f64;
    let mut counts = vec![0u64; bins];
    for _ in 0..iterations {
        let bin = ((x / width) as usize).min(bins - 1);
        counts[bin] += 1;
        let mut digit = 0.0;
        for (left, value) in cells.iter().rev() {
            if x >= *left {
                digit = *value;
                break;
            }
        }
        x = beta * x - digit;
        if !(0.0..s).contains(&x) {
            x = x.clamp(0.0, s * (1.0 - 1e-15));
        }
    }
    let empirical: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / iterations as f64)
        .collect();
    let mut expected = Vec::with_capacity(bins);
    for j in 0..bins {
        let lo = sys
            .support_end()
            .try_mul(&Scalar::from_ratio(j as i64, bins as i64))?;
        let hi = sys
            .support_end()
            .try_mul(&Scalar::from_ratio(j as i64 + 1, bins as i64))?;
        expected.push(exact.density.integral_over(&lo, &hi)?.to_f64());
    }
    let l1_distance = empirical
        .iter()
        .zip(&expected)
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(BirkhoffResult {
        bins,
        iterations,
        seed,
        start: start.unwrap_or(f64::NAN),
        empirical,
        expected,
        l1_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::golden_system;

    fn golden_closed_phi() -> PhiResult {
        phi(&golden_system(), PhiMode::Closed).unwrap()
    }

    #[test]
    fn golden_class_weights_match_derived_values() {
        let sys = golden_system();
        let cw = closed_class_weights(&sys).unwrap();
        assert_eq!(cw.values.len(), 9);
        let beta = sys.beta();
        let expect = |num: &Scalar, pow: i64| {
            let w = cw.weight_of(num).expect("class present");
            assert_eq!(w, &beta.pow_int(pow).unwrap(), "weight of {num}");
        };
        // Orbit of the gap point a₂ − a₁ = 1.
        expect(&Scalar::one(), 0);
        expect(beta, -1);
        expect(&beta.pow_int(2).unwrap(), -2);
        expect(&beta.pow_int(-3).unwrap(), -3);
        expect(&beta.pow_int(-2).unwrap(), -4);
        // 1/β receives mass from two predecessors: β^(−5) + β^(−4) = β^(−3).
        expect(&beta.pow_int(-1).unwrap(), -3);
        // Orbit of βa₁ − a₂ = 3β − 4.
        let c2 = &(&Scalar::from_int(3) * beta) - &Scalar::from_int(4);
        expect(&c2, -1);
        expect(&(&Scalar::from_int(3) - beta), -2);
        expect(&(&(&Scalar::from_int(2) * beta) - &Scalar::one()), -3);
    }

    #[test]
    fn golden_normalizer_identities() {
        let sys = golden_system();
        let phi_result = golden_closed_phi();
        let integral = phi_result.indicator.integral().unwrap();
        let beta = sys.beta();
        // ∫φ = 58 − 31β, and equals (27 − 4β)/β².
        let expected = &Scalar::from_int(58) - &(&Scalar::from_int(31) * beta);
        assert_eq!(integral, expected);
        let alt = (&Scalar::from_int(27) - &(&Scalar::from_int(4) * beta))
            .try_div(&beta.pow_int(2).unwrap())
            .unwrap();
        assert_eq!(integral, alt);
    }

    #[test]
    fn golden_closed_density_is_exact_fixed_point() {
        let sys = golden_system();
        let a = acim(&sys).unwrap();
        assert_eq!(a.mode, DensityMode::Closed);
        assert!(a.density.is_normalized());
        assert_eq!(a.density.integral(), Scalar::one());
        let residual = transfer_residual(&sys, &a.density).unwrap();
        assert!(residual.is_zero(), "residual {}", residual.to_decimal(20));
    }

    #[test]
    fn truncated_partial_sums_bracket_closed_form() {
        let sys = golden_system();
        let closed = golden_closed_phi();
        let t10 = phi(&sys, PhiMode::Truncated(10)).unwrap();
        let t11 = phi(&sys, PhiMode::Truncated(11)).unwrap();
        let bps = closed.step.breakpoints();
        for bp in &bps[..bps.len() - 1] {
            let a = t10.step.value_at(bp).unwrap();
            let b = t11.step.value_at(bp).unwrap();
            let c = closed.step.value_at(bp).unwrap();
            assert!(a.le(b) && b.le(c));
            let gap = c.try_sub(a).unwrap();
            assert!(gap.le(&t10.tail_sup));
        }
    }

    #[test]
    fn truncated_residual_within_twice_tail() {
        let sys = golden_system();
        let t = phi(&sys, PhiMode::Truncated(12)).unwrap();
        let residual = transfer_residual(&sys, &t.step).unwrap();
        let bound = &Scalar::from_int(2) * &t.tail_sup;
        assert!(residual.le(&bound));
    }

    #[test]
    fn parry_golden_two_steps() {
        let beta = Scalar::golden();
        let parry = parry_density(&beta).unwrap();
        assert_eq!(parry.mode, DensityMode::Closed);
        // Unnormalized weights: 1 on [0,1), 1/β on [0,1/β); normalizer
        // 1 + β^(−2) = 3 − β.
        let expected_norm = &Scalar::from_int(3) - &beta;
        assert_eq!(parry.normalizer, expected_norm);
        let h0 = parry.density.value_at(&Scalar::from_ratio(1, 4)).unwrap();
        let h1 = parry.density.value_at(&Scalar::from_ratio(3, 4)).unwrap();
        assert_eq!(*h1, expected_norm.recip().unwrap());
        assert_eq!(*h0, beta.try_div(&expected_norm).unwrap());
        // The oracle density is transfer-fixed for the classical system.
        let classical = GreedySystem::classical(beta).unwrap();
        let residual = transfer_residual(&classical, &parry.density).unwrap();
        assert!(residual.is_zero());
    }

    #[test]
    fn parry_integer_beta_uniform() {
        let parry = parry_density(&Scalar::from_int(2)).unwrap();
        assert_eq!(parry.density.values().len(), 1);
        assert_eq!(parry.density.values()[0], Scalar::one());
        let sys = GreedySystem::classical(Scalar::from_int(2)).unwrap();
        let lf = transfer_apply(&sys, &parry.density).unwrap();
        assert!(lf.sup_distance(&parry.density).unwrap().is_zero());
    }

    #[test]
    fn transfer_linearity() {
        let sys = golden_system();
        let s = sys.support_end().clone();
        let f = StepFn::new(
            vec![
                Scalar::zero(),
                Scalar::one(),
                Scalar::from_int(2),
                s.clone(),
            ],
            vec![
                Scalar::from_int(1),
                Scalar::from_ratio(1, 2),
                Scalar::from_int(3),
            ],
            Backend::Exact,
        )
        .unwrap();
        let g = StepFn::new(
            vec![Scalar::zero(), Scalar::from_ratio(5, 4), s.clone()],
            vec![Scalar::from_int(2), Scalar::from_ratio(7, 3)],
            Backend::Exact,
        )
        .unwrap();
        let alpha = Scalar::from_ratio(3, 7);
        let combo = f.add_scaled(&g, &alpha).unwrap();
        let lhs = transfer_apply(&sys, &combo).unwrap();
        let rhs = transfer_apply(&sys, &f)
            .unwrap()
            .add_scaled(&transfer_apply(&sys, &g).unwrap(), &alpha)
            .unwrap();
        assert!(lhs.sup_distance(&rhs).unwrap().is_zero());
    }

    #[test]
    fn iso_classical_pipeline_agrees_with_oracle() {
        // Figure 1(a): β = √3, digits {0,1,3}; the indicator-sum pipeline
        // on the three-digit system must agree with the classical oracle
        // truncated at the same depth.
        let beta = Scalar::sqrt_of(3).unwrap();
        let sys = GreedySystem::new(
            beta.clone(),
            vec![
                Scalar::from_int(0),
                Scalar::from_int(1),
                Scalar::from_int(3),
            ],
        )
        .unwrap();
        assert_eq!(sys.support_case(), SupportCase::IsoClassical);
        let depth = 30;
        let pipeline = phi(&sys, PhiMode::Truncated(depth)).unwrap();
        let oracle = parry_density_truncated(&beta, depth).unwrap();
        let pipeline_h = normalize(&pipeline.step).unwrap();
        assert!(pipeline_h.sup_distance(&oracle.density).unwrap().is_zero());
    }

    #[test]
    fn big_second_gap_density_truncated() {
        // Figure 1(b): β = 1 + √2, digits {0,1,3} on [0,2).
        let sys = GreedySystem::new(
            &Scalar::one() + &Scalar::sqrt_of(2).unwrap(),
            vec![
                Scalar::from_int(0),
                Scalar::from_int(1),
                Scalar::from_int(3),
            ],
        )
        .unwrap();
        let target = Scalar::from_big_rational(BigRational::new(
            BigInt::one(),
            BigInt::from(10u64).pow(10),
        ));
        let a = acim_truncated(&sys, &target).unwrap();
        assert!(a.tail_sup.le(&target));
        assert_eq!(a.density.integral(), Scalar::one());
        let residual = transfer_residual(&sys, &a.density).unwrap();
        let bound = (&Scalar::from_int(2) * &a.tail_sup)
            .try_div(&a.normalizer)
            .unwrap();
        assert!(residual.le(&bound));
        // This system is also eventually periodic (the orbit of 1 dies on
        // a cell boundary), so the closed form exists and must agree up
        // to the truncation tail.
        let closed = acim(&sys).unwrap();
        assert_eq!(closed.mode, DensityMode::Closed);
        let gap = closed.density.sup_distance(&a.density).unwrap();
        assert!(gap.le(&(&Scalar::from_int(3) * &bound)));
    }

    #[test]
    fn birkhoff_smoke() {
        let sys = golden_system();
        let result = birkhoff_histogram(&sys, None, 20_000, 16, 7).unwrap();
        assert!(result.l1_distance < 0.15, "l1 {}", result.l1_distance);
        let sum: f64 = result.empirical.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(matches!(
            birkhoff_histogram(&sys, None, 100, 16, 7),
            Err(Error::InvalidArgument(_))
        ));
    }
}
