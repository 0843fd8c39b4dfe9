//! Node indexing shared by value surfaces, policies and hedge strategies.
//!
//! Slice `i` holds nodes `j ∈ [-i, i]`, each with an auxiliary axis whose
//! meaning depends on the payoff: nothing, the running maximum, a past
//! fixing, or the accumulated time integral.

use serde::{Deserialize, Serialize};

use super::spec::LatticeSpec;
use crate::error::{Error, Result};
use crate::model::{Expr, Payoff};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AuxGrid {
    None,
    /// Levels `k dx`, `k ∈ [0, i]`; a node with `k < j` behaves as `k = j`.
    RunningMax,
    /// Per-slice uniform grid over the reachable range of `∫ F(B) ds`.
    Integral {
        f: Expr,
        lo: Vec<f64>,
        hi: Vec<f64>,
        points: usize,
    },
    /// The x-level of the first fixing, recorded from slice `index` on.
    Fixing {
        index: usize,
    },
}

/// A uniform auxiliary axis `start + k step`, `k < len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxAxis {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl AuxAxis {
    fn single(start: f64) -> Self {
        Self {
            start,
            step: 0.0,
            len: 1,
        }
    }

    pub fn level(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    /// Bracketing index and weight for linear interpolation, clamped to the axis.
    pub fn locate(&self, a: f64) -> AuxPos {
        if self.len == 1 {
            return AuxPos { k: 0, w: 0.0 };
        }
        let top = (self.len - 1) as f64;
        let frac = ((a - self.start) / self.step).clamp(0.0, top);
        let k = (frac.floor() as usize).min(self.len - 2);
        AuxPos { k, w: frac - k as f64 }
    }

    /// Nearest index, clamped to the axis.
    pub fn nearest(&self, a: f64) -> usize {
        if self.len == 1 {
            return 0;
        }
        let top = (self.len - 1) as f64;
        ((a - self.start) / self.step).clamp(0.0, top).round() as usize
    }
}

/// Position on an auxiliary axis: `(1 - w) · [k] + w · [k + 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxPos {
    pub k: usize,
    pub w: f64,
}

impl AuxPos {
    pub fn exact(k: usize) -> Self {
        Self { k, w: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeLayout {
    spec: LatticeSpec,
    aux: AuxGrid,
    last: usize,
}

impl NodeLayout {
    /// Chooses the auxiliary state for `payoff` and checks date alignment.
    pub fn for_payoff(spec: &LatticeSpec, payoff: &Payoff) -> Result<Self> {
        payoff.validate(Some(spec.horizon()))?;
        let n = spec.n_steps();
        let (aux, last) = match payoff {
            Payoff::Terminal { .. } => (AuxGrid::None, n),
            Payoff::RunningMax { .. } => (AuxGrid::RunningMax, n),
            Payoff::TimeIntegral { f, .. } => (integral_grid(spec, f), n),
            Payoff::Cylindrical { dates, .. } => {
                if dates.len() > 2 {
                    return Err(Error::UnsupportedDimension { dims: dates.len() });
                }
                let mut idx = Vec::with_capacity(dates.len());
                for &d in dates {
                    idx.push(spec.time_index(d).ok_or(Error::Alignment { date: d })?);
                }
                match idx.as_slice() {
                    [i1] => (AuxGrid::None, *i1),
                    [i1, i2] => (AuxGrid::Fixing { index: *i1 }, *i2),
                    _ => unreachable!(),
                }
            }
        };
        Ok(Self {
            spec: spec.clone(),
            aux,
            last,
        })
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn aux(&self) -> &AuxGrid {
        &self.aux
    }

    /// Slice at which the payoff is fully determined. Later slices are empty.
    pub fn last(&self) -> usize {
        self.last
    }

    pub fn aux_axis(&self, i: usize) -> AuxAxis {
        let dx = self.spec.dx();
        match &self.aux {
            AuxGrid::None => AuxAxis::single(0.0),
            AuxGrid::RunningMax => AuxAxis {
                start: 0.0,
                step: dx,
                len: i + 1,
            },
            AuxGrid::Fixing { index } => {
                if i < *index {
                    AuxAxis::single(0.0)
                } else {
                    AuxAxis {
                        start: -(*index as f64) * dx,
                        step: dx,
                        len: 2 * index + 1,
                    }
                }
            }
            AuxGrid::Integral { lo, hi, points, .. } => {
                let width = hi[i] - lo[i];
                if width <= 1e-14 * lo[i].abs().max(hi[i].abs()).max(1e-300) {
                    AuxAxis::single(lo[i])
                } else {
                    AuxAxis {
                        start: lo[i],
                        step: width / (*points - 1) as f64,
                        len: *points,
                    }
                }
            }
        }
    }

    /// Number of stored values in slice `i`.
    pub fn slice_len(&self, i: usize) -> usize {
        if i > self.last {
            0
        } else {
            (2 * i + 1) * self.aux_axis(i).len
        }
    }

    pub fn index(&self, i: usize, j: i64, k: usize, aux_len: usize) -> usize {
        debug_assert!(j.unsigned_abs() as usize <= i);
        (j + i as i64) as usize * aux_len + k
    }

    /// Auxiliary position at slice `i + 1` reached from node `(i, j, k)`
    /// when the walk moves to `j_next`.
    pub(crate) fn successor(&self, i: usize, j: i64, k: usize, j_next: i64, next_axis: &AuxAxis) -> AuxPos {
        match &self.aux {
            AuxGrid::None => AuxPos::exact(0),
            AuxGrid::RunningMax => AuxPos::exact(k.max(j.max(0) as usize).max(j_next.max(0) as usize)),
            AuxGrid::Fixing { index } => {
                if i + 1 < *index {
                    AuxPos::exact(0)
                } else if i + 1 == *index {
                    AuxPos::exact((j_next + *index as i64) as usize)
                } else {
                    AuxPos::exact(k)
                }
            }
            AuxGrid::Integral { f, .. } => {
                let level = self.aux_axis(i).level(k);
                let next = level + f.eval1(self.spec.x(j)) * self.spec.dt(i);
                next_axis.locate(next)
            }
        }
    }

    /// Value of the path-tracked auxiliary state at slice 0.
    pub fn aux_start(&self) -> f64 {
        0.0
    }

    /// Advances the auxiliary state along a path from slice `i` to `i + 1`.
    pub fn aux_advance(&self, i: usize, aux: f64, x: f64, x_next: f64) -> f64 {
        match &self.aux {
            AuxGrid::None => 0.0,
            AuxGrid::RunningMax => aux.max(x_next),
            AuxGrid::Fixing { index } => {
                if i + 1 == *index {
                    x_next
                } else {
                    aux
                }
            }
            AuxGrid::Integral { f, .. } => aux + f.eval1(x) * self.spec.dt(i),
        }
    }
}

fn integral_grid(spec: &LatticeSpec, f: &Expr) -> AuxGrid {
    let n = spec.n_steps();
    let mut lo = Vec::with_capacity(n + 1);
    let mut hi = Vec::with_capacity(n + 1);
    lo.push(0.0);
    hi.push(0.0);
    for i in 0..n {
        let (mut fmin, mut fmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for j in -(i as i64)..=(i as i64) {
            let v = f.eval1(spec.x(j));
            fmin = fmin.min(v);
            fmax = fmax.max(v);
        }
        let dt = spec.dt(i);
        lo.push(lo[i] + fmin * dt);
        hi.push(hi[i] + fmax * dt);
    }
    AuxGrid::Integral {
        f: f.clone(),
        lo,
        hi,
        points: (2 * n).max(2),
    }
}
