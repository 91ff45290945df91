use std::io::{self, Write};

use thiserror::Error;

use crate::asymptotic::Approach;
use crate::expr::{CoefficientExpr, EvalError};
use crate::rng::{streams, Stream, DEFAULT_SEED};
use crate::scale::{chart, Domain, End};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    EulerFullTruncation,
    EulerReflected,
}

impl std::str::FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "euler-full-truncation" => Ok(Scheme::EulerFullTruncation),
            "euler-reflected" => Ok(Scheme::EulerReflected),
            _ => Err(format!("unknown scheme '{s}'")),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::EulerFullTruncation => "euler-full-truncation",
            Scheme::EulerReflected => "euler-reflected",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Base time step.
    pub dt: f64,
    /// Absorbed once within this distance of an absorbing boundary.
    pub absorption_eps: f64,
    pub t_budget: f64,
    pub seed: u64,
    pub scheme: Scheme,
    /// Steps are halved until the expected move `|b| h + sigma sqrt(h)` of
    /// every coordinate is at most this fraction of its distance to the
    /// nearest boundary.
    pub refine_fraction: f64,
    /// The smallest step is `dt / 2^max_halvings`.
    pub max_halvings: u32,
    /// Also absorb when the Brownian bridge between two grid points
    /// crosses the threshold (exact for constant diffusion coefficient).
    pub bridge_test: bool,
    /// One-dimensional runs only: a path above this level is put back on
    /// it. Only valid when the integrands vanish above the cap and the
    /// process returns to the cap almost surely; times are then meaningless.
    pub excursion_cap: Option<f64>,
    /// Record every n-th accepted step; 0 records only the endpoints.
    pub record_stride: usize,
    /// Decreasing distances to the boundary at which the running integrals
    /// are noted on first passage; none may be below `absorption_eps`.
    pub level_marks: Vec<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            absorption_eps: 1e-6,
            t_budget: 1e3,
            seed: DEFAULT_SEED,
            scheme: Scheme::EulerFullTruncation,
            refine_fraction: 0.1,
            max_halvings: 10,
            bridge_test: false,
            excursion_cap: None,
            record_stride: 1,
            level_marks: Vec::new(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.absorption_eps > 0.0) {
            return bad("absorption_eps must be positive");
        }
        if !(self.t_budget > 0.0) {
            return bad("t_budget must be positive");
        }
        if self.dt > self.t_budget {
            return bad("dt must not exceed t_budget");
        }
        if !(self.refine_fraction > 0.0) {
            return bad("refine_fraction must be positive");
        }
        if self.level_marks.windows(2).any(|w| w[1] >= w[0])
            || self.level_marks.iter().any(|m| !(*m >= self.absorption_eps))
        {
            return bad("level_marks must decrease and stay above absorption_eps");
        }
        if self.max_halvings > 1500 {
            return bad("max_halvings must be at most 1500");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid initial condition: {0}")]
    InitialCondition(String),
    #[error("coefficient evaluation failed at {at}: {source}")]
    Eval { at: f64, source: EvalError },
    #[error("time-change integrand not positive at {at}: {value}")]
    TimeChange { at: f64, value: f64 },
    #[error("simplex violated by {0:e}")]
    SimplexViolation(f64),
}

/// Running integrals when the path first came within `level` of a boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Mark {
    pub level: f64,
    pub time: f64,
    pub integrals: Vec<f64>,
}

/// An absorption of one component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub component: usize,
    pub end: End,
    pub time: f64,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub labels: Vec<String>,
    pub integral_names: Vec<String>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub integrals: Vec<Vec<f64>>,
    pub events: Vec<Event>,
    pub marks: Vec<Mark>,
    /// The event that ended the run; `None` when the time budget ran out.
    pub absorbed_at: Option<Event>,
    pub final_time: f64,
    pub final_state: Vec<f64>,
    pub final_integrals: Vec<f64>,
    pub steps: u64,
    pub teleported: bool,
    pub max_simplex_error: f64,
}

impl Trajectory {
    /// Header `t,<components>,<integrals>,absorbed`, one row per record.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut head = vec!["t".to_string()];
        head.extend(self.labels.iter().cloned());
        head.extend(self.integral_names.iter().cloned());
        head.push("absorbed".into());
        writeln!(w, "{}", head.join(","))?;
        let t_abs = self.absorbed_at.map(|e| e.time);
        for (k, t) in self.times.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(self.states[k].iter().map(|v| v.to_string()));
            row.extend(self.integrals[k].iter().map(|v| v.to_string()));
            row.push(if t_abs.is_some_and(|ta| *t >= ta) { "1" } else { "0" }.into());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Distances of a coordinate to both ends of its domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Pos {
    pub dl: f64,
    /// `inf` on a half line.
    pub dr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Axis {
    pub a: f64,
    pub b: Option<f64>,
}

impl Axis {
    pub fn of(domain: &Domain) -> Self {
        Axis {
            a: domain.left,
            b: domain.right,
        }
    }

    #[cfg(test)]
    pub fn unit() -> Self {
        Axis { a: 0.0, b: Some(1.0) }
    }

    pub fn pos(&self, y: f64) -> Pos {
        Pos {
            dl: y - self.a,
            dr: self.b.map_or(f64::INFINITY, |b| b - y),
        }
    }

    pub fn y(&self, p: Pos) -> f64 {
        match self.b {
            Some(b) if p.dr < p.dl => b - p.dr,
            _ => self.a + p.dl,
        }
    }

    fn len(&self) -> Option<f64> {
        self.b.map(|b| b - self.a)
    }

    /// Move by `delta`, carrying the nearer distance exactly.
    pub fn shift(&self, p: Pos, delta: f64) -> Pos {
        match self.len() {
            None => Pos {
                dl: p.dl + delta,
                dr: f64::INFINITY,
            },
            Some(l) if p.dl <= p.dr => {
                let dl = p.dl + delta;
                Pos { dl, dr: l - dl }
            }
            Some(l) => {
                let dr = p.dr - delta;
                Pos { dl: l - dr, dr }
            }
        }
    }

    pub fn reflect(&self, p: Pos) -> Pos {
        let mut q = p;
        if let Some(l) = self.len() {
            if q.dl < 0.0 {
                q = Pos { dl: -q.dl, dr: l + q.dl };
            }
            if q.dr < 0.0 {
                q = Pos { dl: l + q.dr, dr: -q.dr };
            }
        } else if q.dl < 0.0 {
            q.dl = -q.dl;
        }
        q
    }

    pub fn clamp(&self, p: Pos, lo: f64) -> Pos {
        Pos {
            dl: p.dl.max(lo),
            dr: p.dr.max(lo),
        }
    }

    pub fn freeze(&self, end: End) -> Pos {
        match end {
            End::Left => self.pos(self.a),
            End::Right => Pos {
                dl: self.len().unwrap_or(f64::INFINITY),
                dr: 0.0,
            },
        }
    }
}

/// An expression evaluated in the chart of the nearer end.
#[derive(Debug, Clone)]
pub(crate) struct Coef {
    axis: Axis,
    left: CoefficientExpr,
    right: Option<CoefficientExpr>,
}

impl Coef {
    pub fn new(e: &CoefficientExpr, axis: Axis) -> Self {
        Coef {
            axis,
            left: chart(e, Approach::FromAbove(axis.a)),
            right: axis.b.map(|b| chart(e, Approach::FromBelow(b))),
        }
    }

    pub fn eval(&self, p: Pos) -> Result<f64, SimError> {
        let r = match &self.right {
            Some(r) if p.dr < p.dl => r.eval(p.dr),
            _ => self.left.eval(p.dl),
        };
        r.map_err(|source| SimError::Eval {
            at: self.axis.y(p),
            source,
        })
    }
}

/// Drift, diffusion coefficient and distance to the nearest boundary of
/// one noise-driven coordinate at the start of a step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Local {
    pub drift: f64,
    pub sigma: f64,
    pub dist: f64,
}

/// One model stepped by the driver.
pub(crate) trait System {
    type State: Clone;

    fn noises(&self) -> usize;
    fn labels(&self) -> Vec<String>;
    fn integral_names(&self) -> Vec<String> {
        Vec::new()
    }
    /// Coefficients at `s`; frozen coordinates report zeros and infinite
    /// distance.
    fn local(&self, s: &Self::State, out: &mut [Local]) -> Result<(), SimError>;
    /// Euler step with the coefficients from `local`.
    fn apply(&self, s: &Self::State, local: &[Local], h: f64, dw: &[f64]) -> Self::State;
    /// Absorption tests and freezing after a step; pushes events.
    fn settle(
        &self,
        prev: &Self::State,
        next: &mut Self::State,
        local: &[Local],
        h: f64,
        rng: &mut [Stream],
        events: &mut Vec<(usize, End)>,
    ) -> Result<(), SimError>;
    fn integrands(&self, _s: &Self::State, _out: &mut [f64]) -> Result<(), SimError> {
        Ok(())
    }
    fn finished(&self, s: &Self::State) -> bool;
    fn components(&self, s: &Self::State) -> Vec<f64>;
    /// Deviation of the components from the simplex, where it applies.
    fn simplex_error(&self, _s: &Self::State) -> f64 {
        0.0
    }
    fn teleported(&self, _s: &Self::State) -> bool {
        false
    }
    /// Distance to the nearest boundary, for level marks.
    fn depth(&self, _s: &Self::State) -> f64 {
        f64::INFINITY
    }
}

struct Driver<'a, S: System> {
    sys: &'a S,
    cfg: &'a SimConfig,
    rng: Vec<Stream>,
    state: S::State,
    t: f64,
    step: u64,
    f_prev: Vec<f64>,
    f_next: Vec<f64>,
    local: Vec<Local>,
    traj: Trajectory,
}

impl<S: System> Driver<'_, S> {
    fn record(&mut self) {
        self.traj.times.push(self.t);
        self.traj.states.push(self.sys.components(&self.state));
        self.traj.integrals.push(self.traj.final_integrals.clone());
    }

    /// Largest step `r / 2^k` whose expected move `|b| h + sigma sqrt(h)`
    /// stays within the refinement fraction of every distance to a boundary.
    /// It depends on the current state only, never on the coming noise.
    fn step_size(&self, r: f64) -> f64 {
        let floor = self.cfg.dt * 0.5f64.powi(self.cfg.max_halvings as i32);
        let ok = |h: f64| {
            self.local
                .iter()
                .all(|l| l.drift.abs() * h + l.sigma.abs() * h.sqrt() <= self.cfg.refine_fraction * l.dist)
        };
        let mut h = r;
        while !ok(h) && 0.5 * h >= floor {
            h *= 0.5;
        }
        h
    }

    /// Cover one base interval of length `len` whose Brownian increments
    /// are `big`; sub-step increments are drawn from the Brownian bridge.
    fn advance(&mut self, len: f64, big: &mut [f64]) -> Result<(), SimError> {
        let mut r = len;
        let mut dw = vec![0.0; big.len()];
        while r > 0.0 && !self.sys.finished(&self.state) {
            self.sys.local(&self.state, &mut self.local)?;
            let h = self.step_size(r);
            let last = h >= r;
            for ((w, b), g) in dw.iter_mut().zip(big.iter_mut()).zip(self.rng.iter_mut()) {
                *w = if last {
                    *b
                } else {
                    *b * (h / r) + (h * (r - h) / r).sqrt() * g.normal()
                };
                *b -= *w;
            }
            let next = self.sys.apply(&self.state, &self.local, h, &dw);
            self.accept(next, h)?;
            r = if last { 0.0 } else { r - h };
        }
        Ok(())
    }

    fn accept(&mut self, mut next: S::State, h: f64) -> Result<(), SimError> {
        let mut ev = Vec::new();
        self.sys.settle(&self.state, &mut next, &self.local, h, &mut self.rng, &mut ev)?;
        self.sys.integrands(&next, &mut self.f_next)?;
        for (i, acc) in self.traj.final_integrals.iter_mut().enumerate() {
            *acc += 0.5 * (self.f_prev[i] + self.f_next[i]) * h;
        }
        std::mem::swap(&mut self.f_prev, &mut self.f_next);
        self.state = next;
        self.t += h;
        self.step += 1;
        let err = self.sys.simplex_error(&self.state);
        if err > 1e-9 {
            return Err(SimError::SimplexViolation(err));
        }
        self.traj.max_simplex_error = self.traj.max_simplex_error.max(err);
        for (component, end) in ev {
            self.traj.events.push(Event {
                component,
                end,
                time: self.t,
                step: self.step,
            });
        }
        let depth = self.sys.depth(&self.state);
        while let Some(&level) = self.cfg.level_marks.get(self.traj.marks.len()) {
            if depth >= level {
                break;
            }
            self.traj.marks.push(Mark {
                level,
                time: self.t,
                integrals: self.traj.final_integrals.clone(),
            });
        }
        let stride = self.cfg.record_stride;
        if stride > 0 && self.step % stride as u64 == 0 && !self.sys.finished(&self.state) {
            self.record();
        }
        Ok(())
    }
}

/// Run `sys` from `init` as trajectory number `index`.
pub(crate) fn drive<S: System>(sys: &S, init: S::State, cfg: &SimConfig, index: u64) -> Result<Trajectory, SimError> {
    cfg.validate()?;
    let k = sys.integral_names().len();
    let mut f0 = vec![0.0; k];
    sys.integrands(&init, &mut f0)?;
    let mut d = Driver {
        sys,
        cfg,
        rng: streams(cfg.seed, index, sys.noises()),
        state: init,
        t: 0.0,
        step: 0,
        f_prev: f0,
        f_next: vec![0.0; k],
        local: vec![Local::default(); sys.noises()],
        traj: Trajectory {
            labels: sys.labels(),
            integral_names: sys.integral_names(),
            times: Vec::new(),
            states: Vec::new(),
            integrals: Vec::new(),
            events: Vec::new(),
            marks: Vec::new(),
            absorbed_at: None,
            final_time: 0.0,
            final_state: Vec::new(),
            final_integrals: vec![0.0; k],
            steps: 0,
            teleported: false,
            max_simplex_error: 0.0,
        },
    };
    d.traj.max_simplex_error = sys.simplex_error(&d.state);
    d.record();
    let mut big = vec![0.0; sys.noises()];
    while !sys.finished(&d.state) && d.t < cfg.t_budget {
        let h = cfg.dt.min(cfg.t_budget - d.t);
        if h <= cfg.t_budget * 1e-15 {
            break;
        }
        let sd = h.sqrt();
        for (w, r) in big.iter_mut().zip(d.rng.iter_mut()) {
            *w = sd * r.normal();
        }
        d.advance(h, &mut big)?;
    }
    if sys.finished(&d.state) {
        d.traj.absorbed_at = d.traj.events.last().copied();
    }
    if d.traj.times.last() != Some(&d.t) {
        d.record();
    }
    d.traj.final_time = d.t;
    d.traj.final_state = sys.components(&d.state);
    d.traj.steps = d.step;
    d.traj.teleported = sys.teleported(&d.state);
    Ok(d.traj)
}

/// `f(0), ..., f(n - 1)` in index order, on `jobs` threads (all cores when
/// `None`). The result does not depend on the thread count.
pub fn run_indexed<T, F>(n: usize, jobs: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if jobs != Some(1) && n > 1 {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build();
            if let Ok(pool) = pool {
                return pool.install(|| (0..n as u64).into_par_iter().map(&f).collect());
            }
        }
    }
    let _ = jobs;
    (0..n as u64).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_keeps_near_distance_exact() {
        let ax = Axis::unit();
        let p = ax.pos(0.75);
        let q = ax.shift(p, 0.25 - 1e-13);
        assert!((q.dr - 1e-13).abs() < 1e-16);
        let r = ax.shift(q, -1e-14);
        assert!((r.dr - q.dr - 1e-14).abs() < 1e-28);
        assert_eq!(ax.reflect(Pos { dl: -0.1, dr: 1.1 }).dl, 0.1);
    }

    #[test]
    fn indexed_runs_are_ordered() {
        let v = run_indexed(100, Some(3), |i| i * i);
        assert_eq!(v, (0..100).map(|i| i * i).collect::<Vec<_>>());
        assert_eq!(run_indexed(5, Some(1), |i| i), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let c = SimConfig { dt: 0.0, ..SimConfig::default() };
        assert!(c.validate().is_err());
        let c = SimConfig { dt: 10.0, t_budget: 1.0, ..SimConfig::default() };
        assert!(c.validate().is_err());
        assert_eq!("euler-reflected".parse::<Scheme>(), Ok(Scheme::EulerReflected));
    }
}
