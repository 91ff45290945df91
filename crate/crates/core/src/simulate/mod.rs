//! Euler simulation of diffusions up to absorption.
//!
//! Steps are Euler-Maruyama with full truncation. Near a boundary the step
//! is halved, based on the current state alone, until the expected move is
//! a small fraction of the distance to the boundary; the increments of the
//! sub-steps are drawn from the Brownian bridge of the base step. Coordinates on an interval carry their
//! distances to both ends, and coefficients are evaluated in the chart of
//! the nearer end; paths can be followed to within `1e-100` of a boundary.

mod engine;
mod multiallele;
mod timechange;

pub use engine::{run_indexed, Event, Mark, Scheme, SimConfig, SimError, Trajectory};
pub use multiallele::{
    nested_reduction_check, simulate_multiallele, AlleleState, MultialleleSummary, NestedReport,
};
pub use timechange::{build_time_change, TimeChange};

use engine::{drive, Axis, Coef, Local, Pos, System};

use crate::expr::CoefficientExpr;
use crate::rng::Stream;
use crate::scale::{DiffusionSpec, End};

struct OneD {
    axis: Axis,
    sigma: Coef,
    drift: Coef,
    f: Vec<Coef>,
    names: Vec<String>,
    eps: f64,
    scheme: Scheme,
    bridge: bool,
    cap: Option<Pos>,
}

#[derive(Debug, Clone, Copy)]
struct OneDState {
    pos: Pos,
    absorbed: Option<End>,
    teleported: bool,
}

impl OneD {
    fn near(&self, p: Pos) -> f64 {
        p.dl.min(p.dr)
    }
}

impl System for OneD {
    type State = OneDState;

    fn noises(&self) -> usize {
        1
    }

    fn labels(&self) -> Vec<String> {
        vec!["z".into()]
    }

    fn integral_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn local(&self, s: &OneDState, out: &mut [Local]) -> Result<(), SimError> {
        let p = self.axis.clamp(s.pos, 0.0);
        out[0] = Local {
            drift: self.drift.eval(p)?,
            sigma: self.sigma.eval(p)?,
            dist: self.near(p),
        };
        Ok(())
    }

    fn apply(&self, s: &OneDState, l: &[Local], h: f64, dw: &[f64]) -> OneDState {
        let p = self.axis.clamp(s.pos, 0.0);
        let mut q = self.axis.shift(p, l[0].drift * h + l[0].sigma * dw[0]);
        if self.scheme == Scheme::EulerReflected {
            q = self.axis.reflect(q);
        }
        OneDState { pos: q, ..*s }
    }

    fn settle(
        &self,
        prev: &OneDState,
        next: &mut OneDState,
        l: &[Local],
        h: f64,
        rng: &mut [Stream],
        events: &mut Vec<(usize, End)>,
    ) -> Result<(), SimError> {
        let mut hit = if next.pos.dl < self.eps {
            Some(End::Left)
        } else if next.pos.dr < self.eps {
            Some(End::Right)
        } else {
            None
        };
        if hit.is_none() && self.bridge {
            let v = l[0].sigma * l[0].sigma * h;
            let cross = |d0: f64, d1: f64| {
                if d0.is_finite() && v > 0.0 {
                    (-2.0 * (d0 - self.eps) * (d1 - self.eps) / v).exp()
                } else {
                    0.0
                }
            };
            if rng[0].uniform() < cross(prev.pos.dl, next.pos.dl) {
                hit = Some(End::Left);
            } else if self.axis.b.is_some() && rng[0].uniform() < cross(prev.pos.dr, next.pos.dr) {
                hit = Some(End::Right);
            }
        }
        if let Some(end) = hit {
            next.pos = self.axis.freeze(end);
            next.absorbed = Some(end);
            events.push((0, end));
        } else if let Some(c) = self.cap {
            if next.pos.dl > c.dl {
                next.pos = c;
                next.teleported = true;
            }
        }
        Ok(())
    }

    fn integrands(&self, s: &OneDState, out: &mut [f64]) -> Result<(), SimError> {
        let p = self.axis.clamp(s.pos, self.eps);
        for (o, f) in out.iter_mut().zip(&self.f) {
            *o = f.eval(p)?;
        }
        Ok(())
    }

    fn finished(&self, s: &OneDState) -> bool {
        s.absorbed.is_some()
    }

    fn components(&self, s: &OneDState) -> Vec<f64> {
        vec![self.axis.y(s.pos)]
    }

    fn teleported(&self, s: &OneDState) -> bool {
        s.teleported
    }

    fn depth(&self, s: &OneDState) -> f64 {
        self.near(s.pos)
    }
}

fn check_interior(axis: Axis, y: f64, eps: f64, what: &str) -> Result<(), SimError> {
    let p = axis.pos(y);
    if !(p.dl > eps && p.dr > eps) {
        return Err(SimError::InitialCondition(format!(
            "{what} = {y} is not inside the domain by more than absorption_eps"
        )));
    }
    Ok(())
}

/// One path of `spec` from `x0`, with running integrals of `integrands`,
/// as trajectory number `index` of the ensemble seeded by `cfg.seed`.
pub fn simulate_1d(
    spec: &DiffusionSpec,
    x0: f64,
    cfg: &SimConfig,
    integrands: &[CoefficientExpr],
    index: u64,
) -> Result<Trajectory, SimError> {
    let axis = Axis::of(&spec.domain);
    check_interior(axis, x0, cfg.absorption_eps, "x0")?;
    let sys = OneD {
        axis,
        sigma: Coef::new(&spec.sigma, axis),
        drift: Coef::new(&spec.drift, axis),
        f: integrands.iter().map(|e| Coef::new(e, axis)).collect(),
        names: (0..integrands.len()).map(|i| format!("integral_{i}")).collect(),
        eps: cfg.absorption_eps,
        scheme: cfg.scheme,
        bridge: cfg.bridge_test,
        cap: cfg.excursion_cap.map(|c| axis.pos(c)),
    };
    let init = OneDState {
        pos: axis.pos(x0),
        absorbed: None,
        teleported: false,
    };
    drive(&sys, init, cfg, index)
}

/// Population size `N` with time-changed allele frequency `X`:
/// `dN = sigma_N(N) dB + (drift_N(N) + selection N (1 - X)) dt`,
/// `dX = sqrt(X (1 - X) / f(N)) dW - selection X (1 - X) dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledModel {
    pub sigma_n: CoefficientExpr,
    pub drift_n: CoefficientExpr,
    pub f: CoefficientExpr,
    /// `r2 - r1` of the two-type competition model; 0 for the neutral case.
    pub selection: f64,
}

impl CoupledModel {
    /// `dN = sqrt(N^(1 - eps)) dB + N (r - c N) dt` with `f(N) = N`.
    pub fn logistic_power(eps: f64, r: f64, c: f64) -> Self {
        let p = |s: &str| CoefficientExpr::parse(s).expect("preset expression");
        CoupledModel {
            sigma_n: p(&format!("y^{:?}", (1.0 - eps) / 2.0)),
            drift_n: p(&format!("y*({r:?} - {c:?}*y)")),
            f: p("y"),
            selection: 0.0,
        }
    }

    /// Total size and frequency of type 1 in the two-type competitive
    /// Lotka-Volterra model with growth rates `r1`, `r2` and competition `c`.
    pub fn lotka_volterra(r1: f64, r2: f64, c: f64) -> Self {
        let p = |s: &str| CoefficientExpr::parse(s).expect("preset expression");
        CoupledModel {
            sigma_n: p("sqrt(y)"),
            drift_n: p(&format!("y*({r1:?} - {c:?}*y)")),
            f: p("y"),
            selection: r2 - r1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoupledOutcome {
    /// `X` reached 0 or 1 while `N > 0`.
    FixationFirst(End),
    ExtinctionFirst,
    /// Neither happened within the time budget.
    Undecided,
}

struct Coupled {
    sigma: Coef,
    drift: Coef,
    f: Coef,
    selection: f64,
    eps: f64,
    scheme: Scheme,
}

#[derive(Debug, Clone, Copy)]
struct CoupledState {
    n: Pos,
    x: Pos,
    done: bool,
}

const HALF: Axis = Axis { a: 0.0, b: None };
const UNIT: Axis = Axis { a: 0.0, b: Some(1.0) };

impl System for Coupled {
    type State = CoupledState;

    fn noises(&self) -> usize {
        2
    }

    fn labels(&self) -> Vec<String> {
        vec!["n".into(), "x".into()]
    }

    fn local(&self, s: &CoupledState, out: &mut [Local]) -> Result<(), SimError> {
        let n = HALF.clamp(s.n, 0.0);
        let x = UNIT.clamp(s.x, 0.0);
        let xx = x.dl * x.dr;
        let fv = self.f.eval(n)?;
        if !(fv > 0.0) {
            return Err(SimError::TimeChange { at: n.dl, value: fv });
        }
        out[0] = Local {
            drift: self.drift.eval(n)? + self.selection * n.dl * x.dr,
            sigma: self.sigma.eval(n)?,
            dist: n.dl,
        };
        out[1] = Local {
            drift: -self.selection * xx,
            sigma: (xx / fv).sqrt(),
            dist: x.dl.min(x.dr),
        };
        Ok(())
    }

    fn apply(&self, s: &CoupledState, l: &[Local], h: f64, dw: &[f64]) -> CoupledState {
        let n = HALF.clamp(s.n, 0.0);
        let x = UNIT.clamp(s.x, 0.0);
        let mut n1 = HALF.shift(n, l[0].drift * h + l[0].sigma * dw[0]);
        let mut x1 = UNIT.shift(x, l[1].drift * h + l[1].sigma * dw[1]);
        if self.scheme == Scheme::EulerReflected {
            n1 = HALF.reflect(n1);
            x1 = UNIT.reflect(x1);
        }
        CoupledState { n: n1, x: x1, done: false }
    }

    fn settle(
        &self,
        _prev: &CoupledState,
        next: &mut CoupledState,
        _l: &[Local],
        _h: f64,
        _rng: &mut [Stream],
        events: &mut Vec<(usize, End)>,
    ) -> Result<(), SimError> {
        // an extinction and a fixation in the same step count as extinction
        if next.n.dl < self.eps {
            next.n = HALF.freeze(End::Left);
            next.done = true;
            events.push((0, End::Left));
        } else if next.x.dl < self.eps || next.x.dr < self.eps {
            let end = if next.x.dl < self.eps { End::Left } else { End::Right };
            next.x = UNIT.freeze(end);
            next.done = true;
            events.push((1, end));
        }
        Ok(())
    }

    fn finished(&self, s: &CoupledState) -> bool {
        s.done
    }

    fn components(&self, s: &CoupledState) -> Vec<f64> {
        vec![HALF.y(s.n), UNIT.y(s.x)]
    }
}

/// One path of the coupled system, stopped when `N` dies out or `X`
/// reaches 0 or 1, whichever comes first.
pub fn simulate_coupled(
    model: &CoupledModel,
    cfg: &SimConfig,
    n0: f64,
    x0: f64,
    index: u64,
) -> Result<Trajectory, SimError> {
    check_interior(HALF, n0, cfg.absorption_eps, "n0")?;
    check_interior(UNIT, x0, cfg.absorption_eps, "x0")?;
    let sys = Coupled {
        sigma: Coef::new(&model.sigma_n, HALF),
        drift: Coef::new(&model.drift_n, HALF),
        f: Coef::new(&model.f, HALF),
        selection: model.selection,
        eps: cfg.absorption_eps,
        scheme: cfg.scheme,
    };
    let init = CoupledState {
        n: HALF.pos(n0),
        x: UNIT.pos(x0),
        done: false,
    };
    drive(&sys, init, cfg, index)
}

pub fn coupled_outcome(t: &Trajectory) -> CoupledOutcome {
    match t.absorbed_at {
        Some(Event { component: 1, end, .. }) => CoupledOutcome::FixationFirst(end),
        Some(_) => CoupledOutcome::ExtinctionFirst,
        None => CoupledOutcome::Undecided,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn p(s: &str) -> CoefficientExpr {
        parse_expr(s).unwrap()
    }

    #[test]
    fn brownian_integral_of_one_is_the_hitting_time() {
        let cfg = SimConfig {
            t_budget: 50.0,
            ..SimConfig::default()
        };
        let t = simulate_1d(&DiffusionSpec::brownian(), 1.0, &cfg, &[p("1")], 3).unwrap();
        if let Some(e) = t.absorbed_at {
            assert!((t.final_integrals[0] - e.time).abs() < 1e-9 * e.time.max(1.0));
        } else {
            assert!((t.final_time - 50.0).abs() < 1e-9);
        }
        assert!(t.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn same_seed_same_path() {
        let cfg = SimConfig::default();
        let spec = DiffusionSpec::branching_immigration(0.25);
        let a = simulate_1d(&spec, 1.0, &cfg, &[p("1/sqrt(y)")], 11).unwrap();
        let b = simulate_1d(&spec, 1.0, &cfg, &[p("1/sqrt(y)")], 11).unwrap();
        assert_eq!(a, b);
        let c = simulate_1d(&spec, 1.0, &cfg, &[p("1/sqrt(y)")], 12).unwrap();
        assert_ne!(a.final_integrals, c.final_integrals);
    }

    #[test]
    fn absorbed_state_is_frozen_at_the_boundary() {
        let cfg = SimConfig::default();
        let t = simulate_1d(&DiffusionSpec::wright_fisher(0.0), 0.5, &cfg, &[], 0).unwrap();
        let e = t.absorbed_at.expect("absorbed");
        let y = t.final_state[0];
        assert!(y == 0.0 || y == 1.0);
        assert_eq!(y == 1.0, e.end == End::Right);
    }

    #[test]
    fn distance_to_the_right_end_is_resolved() {
        let cfg = SimConfig {
            absorption_eps: 1e-40,
            max_halvings: 200,
            level_marks: vec![1e-10, 1e-20],
            record_stride: 0,
            ..SimConfig::default()
        };
        let spec = DiffusionSpec::wright_fisher(0.0);
        let mut right = 0;
        for i in 0..20 {
            let t = simulate_1d(&spec, 0.5, &cfg, &[p("1/(1-y)")], i).unwrap();
            if t.absorbed_at.map(|e| e.end) == Some(End::Right) {
                right += 1;
                assert_eq!(t.marks.len(), 2);
                assert!(t.marks[1].integrals[0] > t.marks[0].integrals[0]);
                // ∫ 1/(1-X) grows like 2 ln(1/eps) near 1
                assert!(t.final_integrals[0] > 40.0, "{}", t.final_integrals[0]);
            }
        }
        assert!(right > 0);
    }

    #[test]
    fn bad_initial_conditions() {
        let cfg = SimConfig::default();
        assert!(matches!(
            simulate_1d(&DiffusionSpec::brownian(), 0.0, &cfg, &[], 0),
            Err(SimError::InitialCondition(_))
        ));
        let m = CoupledModel::logistic_power(0.4, -1.0, 0.1);
        assert!(simulate_coupled(&m, &cfg, 1.0, 0.0, 0).is_err());
    }

    #[test]
    fn coupled_paths_decide() {
        let cfg = SimConfig {
            absorption_eps: 1e-12,
            max_halvings: 60,
            record_stride: 0,
            ..SimConfig::default()
        };
        let m = CoupledModel::logistic_power(0.0, -1.0, 0.1);
        for i in 0..20 {
            let t = simulate_coupled(&m, &cfg, 1.0, 0.5, i).unwrap();
            assert!(matches!(coupled_outcome(&t), CoupledOutcome::FixationFirst(_)), "path {i}");
        }
    }

    #[test]
    fn excursion_cap_bounds_the_path() {
        let cfg = SimConfig {
            excursion_cap: Some(1.0),
            ..SimConfig::default()
        };
        let t = simulate_1d(&DiffusionSpec::brownian(), 0.5, &cfg, &[], 5).unwrap();
        assert!(t.states.iter().all(|s| s[0] <= 1.0));
        assert!(t.absorbed_at.is_some());
    }
}
