//! Pathwise superhedge on a refined grid.
//!
//! The hedger fixes `h` before the step; the step is then any `±s` with
//! `s² ∈ [v̲_i, v̄_i]`. The value of that game is
//!
//! `G_i(x) = min_h max_s [G_{i+1}(x + s) - h s]`,
//!
//! solved on the grid `x = k δ` with `δ = dx / refine`. Holding the minimizing
//! `h` from capital `G_0` keeps wealth above `G_i(B_{t_i})` on every path whose
//! positions stay on the grid, so the terminal wealth dominates the payoff.

use super::layout::{AuxGrid, NodeLayout};
use super::spec::LatticeSpec;
use crate::error::{Error, Result};
use crate::model::Payoff;
use crate::par;

/// Upper bound on the refinement; keeps the per-step move set on the stack.
pub const MAX_REFINE: usize = 16;
const MAX_LINES: usize = 2 * (MAX_REFINE + 2);

#[derive(Debug, Clone)]
pub(crate) struct GameSurface {
    spec: LatticeSpec,
    last: usize,
    refine: usize,
    delta: f64,
    /// Slice `i` holds `k ∈ [-i·refine, i·refine]`.
    values: Vec<Vec<f64>>,
}

impl GameSurface {
    pub(crate) fn solve(layout: &NodeLayout, payoff: &Payoff, refine: usize) -> Result<Self> {
        if !matches!(layout.aux(), AuxGrid::None) {
            return Err(Error::Validation(
                "game hedge supports payoffs without auxiliary state (terminal or single-date cylindrical)".into(),
            ));
        }
        if !(1..=MAX_REFINE).contains(&refine) {
            return Err(Error::Validation(format!(
                "refine must be in [1, {MAX_REFINE}] (got {refine})"
            )));
        }
        let spec = layout.spec().clone();
        let last = layout.last();
        let delta = spec.dx() / refine as f64;
        let g = match payoff {
            Payoff::Terminal { g } => g,
            Payoff::Cylindrical { f, .. } => f,
            _ => unreachable!("aux-free layouts come from terminal or cylindrical payoffs"),
        };
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); spec.n_steps() + 1];
        let half = (last * refine) as i64;
        values[last] = (-half..=half).map(|k| g.eval1(k as f64 * delta)).collect();
        let mut surface = Self {
            spec,
            last,
            refine,
            delta,
            values,
        };
        for i in (0..last).rev() {
            let half = (i * refine) as i64;
            let row = par::map_range((2 * half + 1) as usize, |r| {
                let x = (r as i64 - half) as f64 * surface.delta;
                surface.minimax(i, x).0
            });
            surface.values[i] = row;
        }
        Ok(surface)
    }

    pub(crate) fn last(&self) -> usize {
        self.last
    }

    pub(crate) fn root(&self) -> f64 {
        self.values[0][0]
    }

    /// `G_i` interpolated at `x`, clamped to the slice.
    pub(crate) fn value(&self, i: usize, x: f64) -> f64 {
        let row = &self.values[i];
        let half = (i * self.refine) as i64;
        if half == 0 {
            return row[0];
        }
        let f = (x / self.delta).clamp(-half as f64, half as f64);
        let k0 = (f.floor() as i64).min(half - 1);
        let w = f - k0 as f64;
        let a = row[(k0 + half) as usize];
        if w == 0.0 {
            a
        } else {
            a + w * (row[(k0 + 1 + half) as usize] - a)
        }
    }

    /// `(min_h max_s [G_{i+1}(x+s) - h s], argmin h)` over step sizes between
    /// `√v̲_i` and `√v̄_i`, including every grid breakpoint in between.
    pub(crate) fn minimax(&self, i: usize, x: f64) -> (f64, f64) {
        let a = self.spec.v_low()[i].sqrt();
        let b = self.spec.v_high()[i].sqrt();
        // Moves come in pairs: lines[2m] is `+s`, lines[2m + 1] is `-s`.
        let mut lines = [(0.0, 0.0); MAX_LINES];
        let mut n = 0;
        let push = |lines: &mut [(f64, f64)], n: &mut usize, s: f64| {
            lines[*n] = (s, self.value(i + 1, x + s));
            lines[*n + 1] = (-s, self.value(i + 1, x - s));
            *n += 2;
        };
        push(&mut lines, &mut n, a);
        if b > a {
            push(&mut lines, &mut n, b);
        }
        let mut s = (a / self.delta).floor() * self.delta + self.delta;
        while s < b * (1.0 - 1e-12) && n < MAX_LINES {
            push(&mut lines, &mut n, s);
            s += self.delta;
        }
        let lines = &lines[..n];
        let worst = |h: f64| lines.iter().map(|&(s, u)| u - h * s).fold(f64::NEG_INFINITY, f64::max);
        let mut best = (f64::INFINITY, 0.0);
        for up in lines.iter().step_by(2).filter(|l| l.0 > 0.0) {
            for dn in lines.iter().skip(1).step_by(2).filter(|l| l.0 < 0.0) {
                let h = (up.1 - dn.1) / (up.0 - dn.0);
                let r = worst(h);
                if r < best.0 {
                    best = (r, h);
                }
            }
        }
        if best.0.is_infinite() {
            // Zero-variance step: nothing moves, any ratio works.
            return (lines[0].1, 0.0);
        }
        best
    }
}
