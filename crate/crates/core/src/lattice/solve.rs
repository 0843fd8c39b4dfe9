//! Backward induction with bang-bang variance control.
//!
//! From node `(i, j)` the walk moves to `j ± 1` with probability
//! `v / (2 dx²)` each and stays with probability `1 - v / dx²`. The one-step
//! continuation `mid + (v / dx²) · Δ²/2` is affine in `v`, so the extremum
//! over `[v̲_i, v̄_i]` sits at an endpoint selected by the sign of the second
//! difference `Δ² = up - 2 mid + dn`.

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use super::layout::{AuxAxis, AuxGrid, AuxPos, NodeLayout};
use super::spec::LatticeSpec;
use crate::error::Result;
use crate::model::Payoff;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bound {
    /// Superreplication: supremum over the band.
    Upper,
    /// Subreplication: infimum over the band.
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarianceChoice {
    Low,
    High,
}

#[derive(Debug, Clone)]
pub struct ValueSurface {
    layout: Arc<NodeLayout>,
    values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Policy {
    layout: Arc<NodeLayout>,
    bound: Bound,
    high: Vec<Vec<bool>>,
    /// Second difference `Δ²` of the continuation value at each node.
    curvature: Vec<Vec<f64>>,
}

/// Root price with the full surface and the recorded variance choices.
#[derive(Debug, Clone)]
pub struct LatticeSolution {
    pub price: f64,
    pub surface: ValueSurface,
    pub policy: Policy,
}

impl ValueSurface {
    pub fn layout(&self) -> &NodeLayout {
        &self.layout
    }

    pub(crate) fn layout_arc(&self) -> &Arc<NodeLayout> {
        &self.layout
    }

    pub fn spec(&self) -> &LatticeSpec {
        self.layout.spec()
    }

    pub fn value(&self, i: usize, j: i64, k: usize) -> f64 {
        let len = self.layout.aux_axis(i).len;
        self.values[i][self.layout.index(i, j, k, len)]
    }

    /// Value at `(i, j)` interpolated along the auxiliary axis.
    pub fn value_at(&self, i: usize, j: i64, pos: AuxPos) -> f64 {
        let len = self.layout.aux_axis(i).len;
        interp(&self.values[i], self.layout.index(i, j, 0, len), pos)
    }

    pub fn slice(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    /// Value at an arbitrary state of slice `i`, bilinear in `(x, aux)` and
    /// clamped to the slice.
    pub fn interpolate(&self, i: usize, x: f64, aux: f64) -> f64 {
        let pos = self.layout.aux_axis(i).locate(aux);
        interp_x(self.layout.spec(), i, x, |j| self.value_at(i, j, pos))
    }
}

/// Linear interpolation in `x` across the nodes of slice `i`.
pub(crate) fn interp_x(spec: &LatticeSpec, i: usize, x: f64, at: impl Fn(i64) -> f64) -> f64 {
    if i == 0 {
        return at(0);
    }
    let top = i as f64;
    let fx = (x / spec.dx()).clamp(-top, top);
    let j0 = (fx.floor() as i64).min(i as i64 - 1);
    let w = fx - j0 as f64;
    let a = at(j0);
    if w == 0.0 {
        a
    } else {
        a + w * (at(j0 + 1) - a)
    }
}

impl Policy {
    pub fn layout(&self) -> &NodeLayout {
        &self.layout
    }

    pub fn spec(&self) -> &LatticeSpec {
        self.layout.spec()
    }

    /// Recorded choice at node `(i, j, k)`; `i` must be below the last slice.
    pub fn choice(&self, i: usize, j: i64, k: usize) -> VarianceChoice {
        let len = self.layout.aux_axis(i).len;
        if self.high[i][self.layout.index(i, j, k, len)] {
            VarianceChoice::High
        } else {
            VarianceChoice::Low
        }
    }

    /// Choice at the node nearest to `(x, aux)`. Slices past the payoff date read as `High`.
    pub fn nearest_choice(&self, i: usize, x: f64, aux: f64) -> VarianceChoice {
        if i >= self.layout.last() {
            return VarianceChoice::High;
        }
        let dx = self.layout.spec().dx();
        let j = ((x / dx).round() as i64).clamp(-(i as i64), i as i64);
        let k = self.layout.aux_axis(i).nearest(aux);
        self.choice(i, j, k)
    }

    /// Choice read from the recorded curvature interpolated at `(x, aux)`.
    ///
    /// On a `High` region the lattice decouples odd and even nodes, so the
    /// recorded choices can alternate from node to node; interpolating `Δ²`
    /// averages that mode out before taking its sign.
    pub fn interpolated_choice(&self, i: usize, x: f64, aux: f64) -> VarianceChoice {
        if i >= self.layout.last() {
            return VarianceChoice::High;
        }
        let axis = self.layout.aux_axis(i);
        let pos = axis.locate(aux);
        let slice = &self.curvature[i];
        let d2 = interp_x(self.layout.spec(), i, x, |j| {
            interp(slice, self.layout.index(i, j, 0, axis.len), pos)
        });
        let high = match self.bound {
            Bound::Upper => d2 >= 0.0,
            Bound::Lower => d2 < 0.0,
        };
        if high {
            VarianceChoice::High
        } else {
            VarianceChoice::Low
        }
    }

    /// Recorded `Δ²` at node `(i, j, k)`.
    pub fn curvature(&self, i: usize, j: i64, k: usize) -> f64 {
        let len = self.layout.aux_axis(i).len;
        self.curvature[i][self.layout.index(i, j, k, len)]
    }

    /// Fraction of decision nodes choosing `High`.
    pub fn high_fraction(&self) -> f64 {
        let (mut hi, mut total) = (0usize, 0usize);
        for s in &self.high {
            hi += s.iter().filter(|&&b| b).count();
            total += s.len();
        }
        if total == 0 {
            1.0
        } else {
            hi as f64 / total as f64
        }
    }

    pub fn all_high(&self) -> bool {
        self.high.iter().all(|s| s.iter().all(|&b| b))
    }
}

#[inline]
fn interp(slice: &[f64], base: usize, pos: AuxPos) -> f64 {
    let a = slice[base + pos.k];
    if pos.w == 0.0 {
        a
    } else {
        let b = slice[base + pos.k + 1];
        a + pos.w * (b - a)
    }
}

/// Endpoint selection. Second differences within rounding noise of zero
/// count as ties, and ties go to `High` for the upper bound.
pub(crate) fn prefers_high(bound: Bound, up: f64, mid: f64, dn: f64) -> bool {
    let d2 = up - 2.0 * mid + dn;
    let noise = curvature_noise(up, mid, dn);
    match bound {
        Bound::Upper => d2 >= -noise,
        Bound::Lower => d2 < -noise,
    }
}

#[inline]
fn curvature_noise(up: f64, mid: f64, dn: f64) -> f64 {
    8.0 * f64::EPSILON * (up.abs() + 2.0 * mid.abs() + dn.abs())
}

fn terminal_slice(layout: &NodeLayout, payoff: &Payoff) -> Vec<f64> {
    let spec = layout.spec();
    let i = layout.last();
    let axis = layout.aux_axis(i);
    let mut out = Vec::with_capacity(layout.slice_len(i));
    for j in -(i as i64)..=(i as i64) {
        let x = spec.x(j);
        for k in 0..axis.len {
            let v = match (payoff, layout.aux()) {
                (Payoff::Terminal { g }, _) => g.eval1(x),
                (Payoff::Cylindrical { f, .. }, AuxGrid::Fixing { .. }) => f.eval(&[axis.level(k), x]),
                (Payoff::Cylindrical { f, .. }, _) => f.eval1(x),
                (Payoff::RunningMax { g }, _) => {
                    let m = spec.x(k.max(j.max(0) as usize) as i64);
                    g.eval1(m + spec.max_shift())
                }
                (Payoff::TimeIntegral { g, .. }, _) => g.eval1(axis.level(k)),
            };
            out.push(v);
        }
    }
    out
}

/// One backward step: values and choices for slice `i` from slice `i + 1`.
fn step_back(layout: &NodeLayout, i: usize, next: &[f64], bound: Bound) -> (Vec<f64>, Vec<bool>, Vec<f64>) {
    let spec = layout.spec();
    let axis = layout.aux_axis(i);
    let next_axis = layout.aux_axis(i + 1);
    let p_lo = spec.v_low()[i] / spec.dx2();
    let p_hi = spec.v_high()[i] / spec.dx2();
    let rows = par::map_range(2 * i + 1, |r| {
        let j = r as i64 - i as i64;
        let mut vals = Vec::with_capacity(axis.len);
        let mut high = Vec::with_capacity(axis.len);
        let mut curv = Vec::with_capacity(axis.len);
        for k in 0..axis.len {
            let at = |jn: i64| {
                let pos = layout.successor(i, j, k, jn, &next_axis);
                interp(next, layout.index(i + 1, jn, 0, next_axis.len), pos)
            };
            let up = at(j + 1);
            let mid = at(j);
            let dn = at(j - 1);
            let d2 = up - 2.0 * mid + dn;
            let choose_high = prefers_high(bound, up, mid, dn);
            let p = if choose_high { p_hi } else { p_lo };
            vals.push(mid + 0.5 * p * d2);
            high.push(choose_high);
            curv.push(if d2.abs() <= curvature_noise(up, mid, dn) {
                0.0
            } else {
                d2
            });
        }
        (vals, high, curv)
    });
    let mut vals = Vec::with_capacity(layout.slice_len(i));
    let mut high = Vec::with_capacity(layout.slice_len(i));
    let mut curv = Vec::with_capacity(layout.slice_len(i));
    for (v, h, c) in rows {
        vals.extend(v);
        high.extend(h);
        curv.extend(c);
    }
    (vals, high, curv)
}

fn root_value(layout: &NodeLayout, slice0: &[f64]) -> f64 {
    // Slice 0 has a single node; its auxiliary state starts at 0.
    let axis: AuxAxis = layout.aux_axis(0);
    interp(slice0, 0, axis.locate(layout.aux_start()))
}

/// Solves for the full surface and policy.
pub fn solve(spec: &LatticeSpec, payoff: &Payoff, bound: Bound) -> Result<LatticeSolution> {
    let layout = Arc::new(NodeLayout::for_payoff(spec, payoff)?);
    let last = layout.last();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); spec.n_steps() + 1];
    let mut high: Vec<Vec<bool>> = vec![Vec::new(); spec.n_steps() + 1];
    let mut curvature: Vec<Vec<f64>> = vec![Vec::new(); spec.n_steps() + 1];
    values[last] = terminal_slice(&layout, payoff);
    for i in (0..last).rev() {
        let (v, h, c) = step_back(&layout, i, &values[i + 1], bound);
        values[i] = v;
        high[i] = h;
        curvature[i] = c;
    }
    let price = root_value(&layout, &values[0]);
    Ok(LatticeSolution {
        price,
        surface: ValueSurface {
            layout: layout.clone(),
            values,
        },
        policy: Policy {
            layout,
            bound,
            high,
            curvature,
        },
    })
}

/// Root price only, keeping two slices in memory.
pub fn solve_price(spec: &LatticeSpec, payoff: &Payoff, bound: Bound) -> Result<f64> {
    let layout = NodeLayout::for_payoff(spec, payoff)?;
    let mut current = terminal_slice(&layout, payoff);
    for i in (0..layout.last()).rev() {
        current = step_back(&layout, i, &current, bound).0;
    }
    Ok(root_value(&layout, &current))
}

/// Superreplication price with surface and worst-case policy.
pub fn price_upper(spec: &LatticeSpec, payoff: &Payoff) -> Result<LatticeSolution> {
    solve(spec, payoff, Bound::Upper)
}

/// Subreplication price `-Λ(-f)` with surface and best-case policy.
pub fn price_lower(spec: &LatticeSpec, payoff: &Payoff) -> Result<LatticeSolution> {
    solve(spec, payoff, Bound::Lower)
}
