use std::fmt;
use std::sync::Arc;

use super::game::GameSurface;
use super::layout::NodeLayout;
use super::solve::ValueSurface;
use super::spec::LatticeSpec;
use crate::error::Result;
use crate::model::Payoff;

type DeltaFn = dyn Fn(usize, f64, f64) -> f64 + Send + Sync;

/// A predictable integrand `h(t_i, x, aux)` on a lattice time grid.
#[derive(Clone)]
pub struct HedgeStrategy {
    layout: Arc<NodeLayout>,
    source: Source,
}

#[derive(Clone)]
enum Source {
    Surface(Arc<ValueSurface>),
    Game(Arc<GameSurface>),
    Function(Arc<DeltaFn>),
}

impl fmt::Debug for HedgeStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.source {
            Source::Surface(_) => "surface",
            Source::Game(_) => "game",
            Source::Function(_) => "function",
        };
        f.debug_struct("HedgeStrategy")
            .field("n_steps", &self.layout.spec().n_steps())
            .field("source", &kind)
            .finish()
    }
}

/// Central-difference delta of a solved surface.
pub fn extract_delta(surface: ValueSurface) -> HedgeStrategy {
    HedgeStrategy {
        layout: surface.layout_arc().clone(),
        source: Source::Surface(Arc::new(surface)),
    }
}

/// Minimax hedge of the step-size game on a grid `refine` times finer than
/// the lattice. Only for payoffs without auxiliary state.
pub fn game_hedge(spec: &LatticeSpec, payoff: &Payoff, refine: usize) -> Result<HedgeStrategy> {
    let layout = NodeLayout::for_payoff(spec, payoff)?;
    let game = GameSurface::solve(&layout, payoff, refine)?;
    Ok(HedgeStrategy {
        layout: Arc::new(layout),
        source: Source::Game(Arc::new(game)),
    })
}

/// Default refinement of [`game_hedge`].
pub const GAME_REFINE: usize = 4;

/// The game hedge when the payoff has no auxiliary state, the lattice delta otherwise.
pub fn superhedge_strategy(surface: ValueSurface, payoff: &Payoff) -> Result<HedgeStrategy> {
    if matches!(surface.layout().aux(), super::layout::AuxGrid::None) {
        game_hedge(surface.spec(), payoff, GAME_REFINE)
    } else {
        Ok(extract_delta(surface))
    }
}

impl HedgeStrategy {
    /// Strategy given directly as `h(i, x, aux)` on the grid of `layout`.
    pub fn from_fn(layout: NodeLayout, h: impl Fn(usize, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            layout: Arc::new(layout),
            source: Source::Function(Arc::new(h)),
        }
    }

    pub fn layout(&self) -> &NodeLayout {
        &self.layout
    }

    /// Capital the strategy is built from: the lattice root value, or the
    /// game value for a game hedge.
    pub fn root_value(&self) -> Option<f64> {
        match &self.source {
            Source::Surface(s) => Some(s.interpolate(0, 0.0, self.layout.aux_start())),
            Source::Game(g) => Some(g.root()),
            Source::Function(_) => None,
        }
    }

    /// Short name of the construction: `lattice_delta`, `game` or `function`.
    pub fn kind(&self) -> &'static str {
        match self.source {
            Source::Surface(_) => "lattice_delta",
            Source::Game(_) => "game",
            Source::Function(_) => "function",
        }
    }

    /// Delta at node `(i, j, k)`: `(V(i+1, j+1, k⁺) - V(i+1, j-1, k⁻)) / 2dx`.
    /// Zero from the payoff slice on.
    pub fn node_delta(&self, i: usize, j: i64, k: usize) -> f64 {
        match &self.source {
            Source::Surface(s) => surface_delta(s, i, j, k),
            Source::Game(_) => self.lookup(i, self.layout.spec().x(j), 0.0),
            Source::Function(h) => {
                let aux = self.layout.aux_axis(i).level(k);
                h(i, self.layout.spec().x(j), aux)
            }
        }
    }

    /// Hedge ratio held over step `i` from state `(x, aux)`.
    ///
    /// For a solved surface, `U(s)` is the next-slice value (interpolated) after
    /// a move `s`, and the ratio minimizes `max_s U(s) - h s` over the moves
    /// `s ∈ {±√v̲_i, ±√v̄_i}`. On nodes this is the central difference whenever
    /// the continuation is locally convex or concave; between nodes it is the
    /// chord that keeps the one-step residual smallest.
    pub fn lookup(&self, i: usize, x: f64, aux: f64) -> f64 {
        let s = match &self.source {
            Source::Function(h) => return h(i, x, aux),
            Source::Game(g) => return if i >= g.last() { 0.0 } else { g.minimax(i, x).1 },
            Source::Surface(s) => s,
        };
        if i >= self.layout.last() {
            return 0.0;
        }
        let spec = self.layout.spec();
        let next = |step: f64| {
            let x_next = x + step;
            s.interpolate(i + 1, x_next, self.layout.aux_advance(i, aux, x, x_next))
        };
        let a = spec.v_low()[i].sqrt();
        let b = spec.v_high()[i].sqrt();
        let moves = [(b, next(b)), (-b, next(-b)), (a, next(a)), (-a, next(-a))];
        let worst = |h: f64| moves.iter().map(|&(m, u)| u - h * m).fold(f64::NEG_INFINITY, f64::max);
        let mut best = (f64::INFINITY, 0.0);
        for &(up, u_up) in moves.iter().filter(|m| m.0 > 0.0) {
            for &(dn, u_dn) in moves.iter().filter(|m| m.0 < 0.0) {
                let h = (u_up - u_dn) / (up - dn);
                let r = worst(h);
                if r < best.0 {
                    best = (r, h);
                }
            }
        }
        best.1
    }
}

fn surface_delta(s: &ValueSurface, i: usize, j: i64, k: usize) -> f64 {
    let layout = s.layout();
    if i >= layout.last() {
        return 0.0;
    }
    let next_axis = layout.aux_axis(i + 1);
    let up = s.value_at(i + 1, j + 1, layout.successor(i, j, k, j + 1, &next_axis));
    let dn = s.value_at(i + 1, j - 1, layout.successor(i, j, k, j - 1, &next_axis));
    (up - dn) / (2.0 * layout.spec().dx())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, price_upper};
    use crate::model::{make_vol_band, Payoff};

    fn spec(n: usize) -> crate::lattice::LatticeSpec {
        build_lattice(&make_vol_band(0.1, 0.2, 1.0).unwrap(), n).unwrap()
    }

    #[test]
    fn linear_claim_has_unit_delta() {
        let s = spec(30);
        let h = extract_delta(price_upper(&s, &Payoff::terminal("x").unwrap()).unwrap().surface);
        for i in 0..30 {
            for j in -(i as i64)..=(i as i64) {
                assert!((h.node_delta(i, j, 0) - 1.0).abs() < 1e-12);
            }
        }
        assert!((h.lookup(10, 0.0123, 0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn affine_claim_delta_is_slope() {
        let s = spec(20);
        let h = extract_delta(price_upper(&s, &Payoff::terminal("3 - 2*x").unwrap()).unwrap().surface);
        assert!((h.lookup(7, -0.05, 0.0) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_claim_has_zero_delta() {
        let s = spec(20);
        let h = extract_delta(price_upper(&s, &Payoff::terminal("5").unwrap()).unwrap().surface);
        for i in 0..20 {
            for j in -(i as i64)..=(i as i64) {
                assert_eq!(h.node_delta(i, j, 0), 0.0);
            }
        }
    }

    #[test]
    fn time_integral_delta_is_remaining_time() {
        let s = spec(200);
        let sol = price_upper(&s, &Payoff::time_integral("x", "x").unwrap()).unwrap();
        let h = extract_delta(sol.surface);
        let dx = s.dx();
        for i in (0..200).step_by(17) {
            let t = s.times()[i];
            let axis = h.layout().aux_axis(i);
            for j in [-(i as i64), 0, i as i64] {
                for k in [0, axis.len / 2, axis.len - 1] {
                    let d = h.node_delta(i, j, k);
                    assert!((d - (1.0 - t)).abs() <= dx, "i={i} j={j} k={k}: {d}");
                }
            }
        }
    }

    #[test]
    fn expired_slices_have_zero_delta() {
        let s = spec(20);
        let sol = price_upper(&s, &Payoff::cylindrical(vec![0.5], "x^2").unwrap()).unwrap();
        let h = extract_delta(sol.surface);
        assert_eq!(h.lookup(15, 0.1, 0.0), 0.0);
        assert!(h.lookup(5, 0.1, 0.0) > 0.0);
    }

    #[test]
    fn game_hedge_matches_lattice_for_convex_claims() {
        let s = spec(50);
        for g in ["x^2", "max(x,0)"] {
            let p = Payoff::terminal(g).unwrap();
            let price = price_upper(&s, &p).unwrap().price;
            let h = game_hedge(&s, &p, GAME_REFINE).unwrap();
            assert!((h.root_value().unwrap() - price).abs() < 1e-12, "{g}");
            assert_eq!(h.kind(), "game");
        }
    }

    #[test]
    fn game_value_stays_within_tolerance_of_lattice_price() {
        let s = spec(100);
        for g in ["-abs(x)", "max(x+0.1,0) - 2*max(x,0) + max(x-0.1,0)", "min(x,0.05)"] {
            let p = Payoff::terminal(g).unwrap();
            let price = price_upper(&s, &p).unwrap().price;
            let game = game_hedge(&s, &p, GAME_REFINE).unwrap().root_value().unwrap();
            assert!(game <= price + 3.0 * s.dx2(), "{g}: game {game} lattice {price}");
        }
    }

    #[test]
    fn game_hedge_rejects_auxiliary_state() {
        let s = spec(10);
        assert!(game_hedge(&s, &Payoff::running_max("x").unwrap(), 4).is_err());
        assert!(game_hedge(&s, &Payoff::terminal("x").unwrap(), 0).is_err());
    }

    #[test]
    fn superhedge_strategy_picks_by_layout() {
        let s = spec(10);
        let sol = price_upper(&s, &Payoff::terminal("x^2").unwrap()).unwrap();
        assert_eq!(
            superhedge_strategy(sol.surface, &Payoff::terminal("x^2").unwrap())
                .unwrap()
                .kind(),
            "game"
        );
        let p = Payoff::running_max("x").unwrap();
        let sol = price_upper(&s, &p).unwrap();
        assert_eq!(superhedge_strategy(sol.surface, &p).unwrap().kind(), "lattice_delta");
    }

    #[test]
    fn game_hedge_expires_with_the_payoff_date() {
        let s = spec(20);
        let p = Payoff::cylindrical(vec![0.5], "-abs(x)").unwrap();
        let h = game_hedge(&s, &p, 2).unwrap();
        assert_eq!(h.lookup(12, 0.01, 0.0), 0.0);
    }
}
