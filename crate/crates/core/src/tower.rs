//! The stacked-rectangle natural extension.
//!
//! Each non-full interval of rank `n` carries a rectangle
//! `[0, image_end) × [0, s/βⁿ)`; the base square `[0,s) × [0,s)` sits on
//! top. The two-dimensional map expands by β in the first coordinate and
//! contracts by β in the second. A branch whose child word is full
//! re-enters the base square in the y-band owned by that full word; all
//! other branches descend one level. Total measure is `s²` plus the sum
//! of rectangle areas, finite because level counts grow slower than `βⁿ`.

use num_bigint::BigUint;
use serde::Serialize;

use crate::density::closed_class_weights;
use crate::error::{Error, Result};
use crate::exactnum::{Backend, Scalar};
use crate::intervals::{children_of_image, kappa_tail_from, DEPTH_CAP};
use crate::system::{GreedySystem, SupportCase};

/// Default iteration budget for return-time searches.
const RETURN_BUDGET: usize = 4096;

/// One rectangle of the extension space: level `n ≥ 1`, 1-based index
/// `i` in breadth-first word order.
#[derive(Debug, Clone, Serialize)]
pub struct Rect {
    pub n: usize,
    pub i: usize,
    pub word: Vec<u8>,
    /// x-interval is `[0, x_end)`.
    pub x_end: Scalar,
    /// Height `s/βⁿ`.
    pub height: Scalar,
    /// Value of the word as a digit expansion: the left endpoint of the
    /// interval the word addresses, which owns the band written into the
    /// base square when the word completes.
    pub y_offset: Scalar,
}

#[derive(Debug, Clone)]
enum Transition {
    /// The child word is full: re-enter the base square in the band
    /// starting at `band_offset`.
    ToBase { band_offset: Scalar },
    /// Descend to the rectangle with this 0-based index on the next level.
    Descend { index: usize },
}

/// A rectangle together with its outgoing branches.
#[derive(Debug, Clone)]
pub struct Node {
    pub rect: Rect,
    /// Per intersecting digit cell, in cell order: `(digit, transition)`.
    /// `None` transition means the child lies beyond the built depth.
    branches: Vec<(usize, Option<Transition>)>,
}

/// A point of the extension space; `(n, i) = (0, 0)` addresses the base
/// square.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TowerPoint {
    pub x: Scalar,
    pub y: Scalar,
    pub n: usize,
    pub i: usize,
}

/// The extension space truncated at a finite depth, with certified
/// measure bounds.
#[derive(Debug)]
pub struct Tower {
    sys: GreedySystem,
    depth: usize,
    /// levels[n-1] holds the level-n nodes in word order.
    levels: Vec<Vec<Node>>,
    root_branches: Vec<(usize, Option<Transition>)>,
    pub r0_side: Scalar,
    /// `s² + Σ area` over the built rectangles.
    pub lambda_truncated: Scalar,
    /// Certified bound on the measure beyond the built depth.
    pub tail_bound: Scalar,
    /// Exact total measure, when the class engine has a closed form.
    pub lambda_closed: Option<Scalar>,
    /// κ(n) for n = 1..depth.
    pub kappa: Vec<u64>,
}

/// Serializable manifest of the tower.
#[derive(Debug, Clone, Serialize)]
pub struct TowerManifest<'a> {
    pub depth: usize,
    pub r0_side: &'a Scalar,
    pub lambda_truncated: &'a Scalar,
    pub tail_bound: &'a Scalar,
    pub lambda_closed: &'a Option<Scalar>,
    pub rects: Vec<&'a Rect>,
}

/// Builds the tower to depth `N` over a main-case system.
pub fn build_tower(sys: &GreedySystem, depth: usize) -> Result<Tower> {
    sys.expect_case(SupportCase::MainCase, "main_case")?;
    if depth == 0 || depth > DEPTH_CAP {
        return Err(Error::DepthExceeded {
            requested: depth,
            cap: DEPTH_CAP,
        });
    }
    let beta = sys.beta();
    let s = sys.support_end();

    // Pseudo-root: the base square, word ε, offset 0, "height" s.
    let mut frontier: Vec<Rect> = vec![Rect {
        n: 0,
        i: 0,
        word: Vec::new(),
        x_end: s.clone(),
        height: s.clone(),
        y_offset: Scalar::zero(),
    }];
    let mut root_branches = Vec::new();
    let mut levels: Vec<Vec<Node>> = Vec::new();

    for level_n in 1..=depth + 1 {
        let height = s.try_div(&beta.pow_int(level_n as i64)?)?;
        let inv_pow = beta.pow_int(-(level_n as i64))?;
        let mut next: Vec<Rect> = Vec::new();
        let mut branch_lists: Vec<Vec<(usize, Option<Transition>)>> = Vec::new();
        for parent in &frontier {
            let mut branches = Vec::new();
            for c in children_of_image(sys, &parent.x_end) {
                let child_offset =
                    &parent.y_offset + &sys.digit_value(c.digit).try_mul(&inv_pow)?;
                if c.full {
                    branches.push((
                        c.digit,
                        Some(Transition::ToBase {
                            band_offset: child_offset,
                        }),
                    ));
                } else if level_n <= depth {
                    let index = next.len();
                    let mut word = parent.word.clone();
                    word.push(c.digit as u8);
                    next.push(Rect {
                        n: level_n,
                        i: index + 1,
                        word,
                        x_end: c.image_end,
                        height: height.clone(),
                        y_offset: child_offset,
                    });
                    branches.push((c.digit, Some(Transition::Descend { index })));
                } else {
                    branches.push((c.digit, None));
                }
            }
            branch_lists.push(branches);
        }
        if level_n == 1 {
            root_branches = branch_lists.pop().unwrap();
        } else {
            let nodes: Vec<Node> = frontier
                .drain(..)
                .zip(branch_lists)
                .map(|(rect, branches)| Node { rect, branches })
                .collect();
            levels.push(nodes);
        }
        if level_n > depth {
            break;
        }
        frontier = next;
    }

    let mut lambda = s.try_mul(s)?;
    let mut kappa = Vec::with_capacity(depth);
    for level in &levels {
        kappa.push(level.len() as u64);
        for node in level {
            lambda = lambda.try_add(&node.rect.x_end.try_mul(&node.rect.height)?)?;
        }
    }
    // Each rectangle at level n has area ≤ s·s/βⁿ, so the discarded
    // measure is at most s²·Σ_{n>N} κ(n)/βⁿ.
    let kappa_last = BigUint::from(*kappa.last().unwrap_or(&1));
    let tail_bound = s
        .try_mul(s)?
        .try_mul(&kappa_tail_from(sys, &kappa_last, depth)?)?;
    let lambda_closed = match closed_class_weights(sys) {
        Ok(cw) => {
            let mut acc = s.try_mul(s)?;
            for (v, w) in cw.values.iter().zip(cw.weights.iter()) {
                acc = acc.try_add(&s.try_mul(w)?.try_mul(v)?)?;
            }
            Some(acc)
        }
        Err(Error::NotEventuallyPeriodic { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(Tower {
        sys: sys.clone(),
        depth,
        levels,
        root_branches,
        r0_side: s.clone(),
        lambda_truncated: lambda,
        tail_bound,
        lambda_closed,
        kappa,
    })
}

impl Tower {
    pub fn system(&self) -> &GreedySystem {
        &self.sys
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn level(&self, n: usize) -> &[Node] {
        &self.levels[n - 1]
    }

    /// All rectangles at level `n`, `1 ≤ n ≤ depth`.
    pub fn rects_at(&self, n: usize) -> impl Iterator<Item = &Rect> {
        self.levels[n - 1].iter().map(|node| &node.rect)
    }

    pub fn all_rects(&self) -> impl Iterator<Item = &Rect> {
        self.levels.iter().flatten().map(|node| &node.rect)
    }

    pub fn manifest(&self) -> TowerManifest<'_> {
        TowerManifest {
            depth: self.depth,
            r0_side: &self.r0_side,
            lambda_truncated: &self.lambda_truncated,
            tail_bound: &self.tail_bound,
            lambda_closed: &self.lambda_closed,
            rects: self.all_rects().collect(),
        }
    }

    fn node(&self, n: usize, i: usize) -> Result<&Node> {
        self.levels
            .get(n - 1)
            .and_then(|level| level.get(i - 1))
            .ok_or(Error::InvalidPoint)
    }

    fn check_point(&self, p: &TowerPoint) -> Result<()> {
        let (x_end, height) = if p.n == 0 {
            if p.i != 0 {
                return Err(Error::InvalidPoint);
            }
            (&self.r0_side, &self.r0_side)
        } else {
            let rect = &self.node(p.n, p.i)?.rect;
            (&rect.x_end, &rect.height)
        };
        if p.x.sign() < 0 || !p.x.lt(x_end) || p.y.sign() < 0 || !p.y.lt(height) {
            return Err(Error::InvalidPoint);
        }
        Ok(())
    }

    /// One step of the two-dimensional map. In exact mode, points sitting
    /// exactly on an interior cell boundary are rejected.
    pub fn tee_step(&self, p: &TowerPoint) -> Result<TowerPoint> {
        self.check_point(p)?;
        if self.sys.backend() == Backend::Exact {
            for cell in &self.sys.cells()[1..] {
                if p.x == cell.left {
                    return Err(Error::BoundaryPoint);
                }
            }
        }
        let digit = self.sys.greedy_digit(&p.x)?;
        let branches = if p.n == 0 {
            &self.root_branches
        } else {
            &self.node(p.n, p.i)?.branches
        };
        let (_, transition) = branches
            .iter()
            .find(|(d, _)| *d == digit)
            .ok_or(Error::InvalidPoint)?;
        let x_next = self.sys.step(&p.x)?;
        let y_scaled = p.y.try_div(self.sys.beta())?;
        match transition {
            Some(Transition::ToBase { band_offset }) => Ok(TowerPoint {
                x: x_next,
                y: band_offset.try_add(&y_scaled)?,
                n: 0,
                i: 0,
            }),
            Some(Transition::Descend { index }) => Ok(TowerPoint {
                x: x_next,
                y: y_scaled,
                n: p.n + 1,
                i: index + 1,
            }),
            None => Err(Error::DepthExceeded {
                requested: p.n + 1,
                cap: self.depth,
            }),
        }
    }

    /// Iterates until the point re-enters the base square; returns the
    /// return time and the landing point.
    pub fn return_to_base(&self, x: &Scalar, y: &Scalar) -> Result<(usize, TowerPoint)> {
        let mut p = TowerPoint {
            x: x.clone(),
            y: y.clone(),
            n: 0,
            i: 0,
        };
        self.check_point(&p)?;
        for step in 1..=RETURN_BUDGET {
            p = self.tee_step(&p)?;
            if p.n == 0 {
                return Ok((step, p));
            }
        }
        Err(Error::OrbitBudgetExceeded { cap: RETURN_BUDGET })
    }

    /// The induced map on the base square: iterate to the first return.
    pub fn induced_map(&self, x: &Scalar, y: &Scalar) -> Result<(Scalar, Scalar)> {
        let (_, p) = self.return_to_base(x, y)?;
        Ok((p.x, p.y))
    }
}

/// Where a branch leads, for transition-graph exports.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EdgeTarget {
    /// Full child word: back to the base square at this band.
    Base { band_offset: Scalar },
    Rect { n: usize, i: usize },
    /// Child beyond the built depth.
    Beyond,
}

/// One branch of the transition graph; `(from_n, from_i) = (0, 0)` is the
/// base square.
#[derive(Debug, Clone, Serialize)]
pub struct Edge {
    pub from_n: usize,
    pub from_i: usize,
    pub digit: usize,
    pub target: EdgeTarget,
}

impl Tower {
    /// The full transition graph of the built tower.
    pub fn edges(&self) -> Vec<Edge> {
        let mut edges = Vec::new();
        let mut push = |from_n: usize, from_i: usize, branches: &[(usize, Option<Transition>)]| {
            for (digit, t) in branches {
                let target = match t {
                    Some(Transition::ToBase { band_offset }) => EdgeTarget::Base {
                        band_offset: band_offset.clone(),
                    },
                    Some(Transition::Descend { index }) => EdgeTarget::Rect {
                        n: from_n + 1,
                        i: index + 1,
                    },
                    None => EdgeTarget::Beyond,
                };
                edges.push(Edge {
                    from_n,
                    from_i,
                    digit: *digit,
                    target,
                });
            }
        };
        push(0, 0, &self.root_branches);
        for level in &self.levels {
            for node in level {
                push(node.rect.n, node.rect.i, &node.branches);
            }
        }
        edges
    }
}

/// Conservation report: image areas of every rectangle match the source
/// exactly, and the bands written into the base square are disjoint.
#[derive(Debug, Clone, Serialize)]
pub struct ConservationReport {
    pub rects_checked: usize,
    pub conservation_ok: bool,
    pub bands_checked: usize,
    pub bands_disjoint: bool,
}

impl ConservationReport {
    pub fn all_ok(&self) -> bool {
        self.conservation_ok && self.bands_disjoint
    }
}

/// Verifies, for every rectangle at level ≤ `n_max`, that the branch
/// image areas sum exactly to the rectangle's area, that descending
/// branches land exactly on their target rectangle, and that all base
/// bands are pairwise disjoint.
pub fn check_measure_preservation(tower: &Tower, n_max: usize) -> Result<ConservationReport> {
    let sys = tower.system();
    let beta = sys.beta();
    let s = sys.support_end();
    let mut rects_checked = 0usize;
    let mut conservation_ok = true;
    let mut bands: Vec<(Scalar, Scalar)> = Vec::new();

    let check_rect = |x_end: &Scalar,
                          height: &Scalar,
                          branches: &[(usize, Option<Transition>)],
                          bands: &mut Vec<(Scalar, Scalar)>|
     -> Result<bool> {
        let children = children_of_image(sys, x_end);
        let mut area_sum = Scalar::zero();
        let child_height = height.try_div(beta)?;
        for (c, (digit, transition)) in children.iter().zip(branches.iter()) {
            if c.digit != *digit {
                return Ok(false);
            }
            let width = c.x_right.try_sub(&c.x_left)?;
            // Image: x expands by β, y contracts by β.
            let image_area = beta.try_mul(&width)?.try_mul(&child_height)?;
            let source_area = width.try_mul(height)?;
            if image_area != source_area {
                return Ok(false);
            }
            area_sum = area_sum.try_add(&source_area)?;
            match transition {
                Some(Transition::ToBase { band_offset }) => {
                    let band_end = band_offset.try_add(&child_height)?;
                    if band_end.gt(s) {
                        return Ok(false);
                    }
                    bands.push((band_offset.clone(), band_end));
                }
                Some(Transition::Descend { .. }) | None => {
                    // Image x-interval must be exactly [0, image_end):
                    // lower endpoint β·x_left − a equals 0 at cell edges.
                    let low = &(beta * &c.x_left) - sys.digit_value(c.digit);
                    if !low.is_zero() {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(area_sum == x_end.try_mul(height)?)
    };

    // Base square.
    rects_checked += 1;
    conservation_ok &= check_rect(
        &tower.r0_side.clone(),
        &tower.r0_side.clone(),
        &tower.root_branches,
        &mut bands,
    )?;
    for n in 1..=n_max.min(tower.depth) {
        for node in tower.level(n) {
            rects_checked += 1;
            conservation_ok &= check_rect(
                &node.rect.x_end,
                &node.rect.height,
                &node.branches,
                &mut bands,
            )?;
        }
    }
    bands.sort_by(|a, b| a.0.cmp_total(&b.0));
    let bands_disjoint = bands.windows(2).all(|w| w[0].1.le(&w[1].0));
    Ok(ConservationReport {
        rects_checked,
        conservation_ok,
        bands_checked: bands.len(),
        bands_disjoint,
    })
}

/// First `k` return times of `x` to the base square, computed from the
/// digit expansion alone (they do not depend on y): the image recursion
/// along the expansion of `x` hits `s` exactly at the return ranks.
pub fn return_times(sys: &GreedySystem, x: &Scalar, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let beta = sys.beta();
    let s = sys.support_end();
    let mut t = s.clone();
    let mut current = x.clone();
    let mut times = Vec::with_capacity(k);
    for step in 1..=RETURN_BUDGET {
        let digit = sys.greedy_digit(&current)?;
        let cell = &sys.cells()[digit.min(sys.cells().len() - 1)];
        debug_assert_eq!(cell.digit, digit);
        let cut = if cell.right.le(&t) {
            cell.right.clone()
        } else {
            t.clone()
        };
        t = &(beta * &cut) - sys.digit_value(digit);
        current = sys.step(&current)?;
        if t == *s {
            times.push(step);
            if times.len() == k {
                return Ok(times);
            }
        }
    }
    Err(Error::OrbitBudgetExceeded { cap: RETURN_BUDGET })
}

/// A value known to an interval, with the exact value when available.
#[derive(Debug, Clone, Serialize)]
pub struct Bounds {
    pub lo: Scalar,
    pub hi: Scalar,
    pub exact: Option<Scalar>,
}

impl Bounds {
    fn exact_value(v: Scalar) -> Self {
        Bounds {
            lo: v.clone(),
            hi: v.clone(),
            exact: Some(v),
        }
    }

    pub fn contains(&self, v: &Scalar) -> bool {
        self.lo.le(v) && v.le(&self.hi)
    }
}

/// The mixing constants of the system: `c₁ = s/λ_R`, `c₂ = 1 + Σ κ(n)/βⁿ`
/// and `γ = c₁·c₂²·s`.
#[derive(Debug, Clone, Serialize)]
pub struct ExactnessConstants {
    pub c1: Bounds,
    pub c2: Bounds,
    pub gamma: Bounds,
}

pub fn exactness_constants(tower: &Tower) -> Result<ExactnessConstants> {
    let sys = tower.system();
    let s = sys.support_end();
    let lambda_lo = tower.lambda_truncated.clone();
    let lambda_hi = tower.lambda_truncated.try_add(&tower.tail_bound)?;
    let c1 = match &tower.lambda_closed {
        Some(l) => Bounds::exact_value(s.try_div(l)?),
        None => Bounds {
            lo: s.try_div(&lambda_hi)?,
            hi: s.try_div(&lambda_lo)?,
            exact: None,
        },
    };
    // Σ κ(n)/βⁿ over the built levels, plus the certified tail.
    let mut sum = Scalar::one();
    for (n, kappa) in tower.kappa.iter().enumerate() {
        let term = Scalar::from_int(*kappa as i64)
            .try_div(&sys.beta().pow_int((n + 1) as i64)?)?;
        sum = sum.try_add(&term)?;
    }
    let kappa_last = BigUint::from(*tower.kappa.last().unwrap_or(&1));
    let tail = kappa_tail_from(sys, &kappa_last, tower.depth)?;
    let c2 = match closed_class_weights(sys) {
        Ok(cw) => {
            let mut acc = Scalar::one();
            for w in &cw.weights {
                acc = acc.try_add(w)?;
            }
            Bounds::exact_value(acc)
        }
        Err(Error::NotEventuallyPeriodic { .. }) => Bounds {
            lo: sum.clone(),
            hi: sum.try_add(&tail)?,
            exact: None,
        },
        Err(e) => return Err(e),
    };
    let gamma = Bounds {
        lo: c1.lo.try_mul(&c2.lo.try_mul(&c2.lo)?)?.try_mul(s)?,
        hi: c1.hi.try_mul(&c2.hi.try_mul(&c2.hi)?)?.try_mul(s)?,
        exact: match (&c1.exact, &c2.exact) {
            (Some(a), Some(b)) => Some(a.try_mul(&b.try_mul(b)?)?.try_mul(s)?),
            _ => None,
        },
    };
    Ok(ExactnessConstants { c1, c2, gamma })
}
