//! Scale function and speed measure of `dZ = sigma(Z) dB + b(Z) dt`.
//!
//! With `rho = b / sigma^2` and `J(y) = ∫_c^y rho`, the scale derivative is
//! `s' = exp(-2 J)` and the speed density is `m = 2 / (s' sigma^2)`. Both
//! overflow easily, so the table stores `J` and the logarithms of
//! `s - s(a)` and `s(b) - s` on a grid in a stretched coordinate `t`:
//! `t = ln(y - a)` on a half line and the logit of `(y - a) / (b - a)` on a
//! bounded interval. Values between nodes use cubic Hermite interpolation
//! with exact node derivatives.

use std::fmt;

use thiserror::Error;

use crate::asymptotic::{symbolic_leading, Approach};
use crate::expr::{CoefficientExpr, EvalError};
use crate::ladder::{assess, octave_bounds, LadderOutcome, OCTAVES};
use crate::quadrature::{integrate, kronrod15, lenient, QuadError, QuadOptions};

/// Half-width of the table in the stretched coordinate (about 46 octaves).
const T_SPAN: f64 = 32.0;
/// Region around the reference point where failures are hard errors.
const T_CORE: f64 = 8.0;
const BASE_STEP: f64 = 0.0625;
const MAX_SPLIT: u32 = 12;
const INTERP_TOL: f64 = 2e-9;
/// The table stops once `|J|` exceeds this, keeping `exp(2 J)` representable.
const J_MAX: f64 = 300.0;
/// Largest change of `J` across one table interval.
const J_STEP: f64 = 20.0;
const SEGMENT_OPTS: QuadOptions = QuadOptions {
    rel_tol: 1e-12,
    abs_tol: 1e-15,
    max_intervals: 200,
};

/// Three-valued truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tri {
    True,
    False,
    Unknown,
}

impl Tri {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Tri::True
        } else {
            Tri::False
        }
    }

    pub fn and(self, o: Tri) -> Tri {
        match (self, o) {
            (Tri::False, _) | (_, Tri::False) => Tri::False,
            (Tri::True, Tri::True) => Tri::True,
            _ => Tri::Unknown,
        }
    }

    pub fn or(self, o: Tri) -> Tri {
        match (self, o) {
            (Tri::True, _) | (_, Tri::True) => Tri::True,
            (Tri::False, Tri::False) => Tri::False,
            _ => Tri::Unknown,
        }
    }

    pub fn not(self) -> Tri {
        match self {
            Tri::True => Tri::False,
            Tri::False => Tri::True,
            Tri::Unknown => Tri::Unknown,
        }
    }

    pub fn is_true(self) -> bool {
        self == Tri::True
    }
}

impl fmt::Display for Tri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tri::True => "true",
            Tri::False => "false",
            Tri::Unknown => "inconclusive",
        })
    }
}

/// A real number, an infinity, or an undecided value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended {
    Finite(f64),
    NegInfinite,
    PosInfinite,
    Unknown,
}

impl Extended {
    pub fn is_finite(&self) -> Tri {
        match self {
            Extended::Finite(_) => Tri::True,
            Extended::NegInfinite | Extended::PosInfinite => Tri::False,
            Extended::Unknown => Tri::Unknown,
        }
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v:.6e}"),
            Extended::NegInfinite => f.write_str("-inf"),
            Extended::PosInfinite => f.write_str("+inf"),
            Extended::Unknown => f.write_str("inconclusive"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum End {
    Left,
    Right,
}

impl fmt::Display for End {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            End::Left => "left",
            End::Right => "right",
        })
    }
}

/// Open state interval `(left, right)`; `right = None` means `+inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub left: f64,
    pub right: Option<f64>,
}

impl Domain {
    pub fn half_line(left: f64) -> Self {
        Domain { left, right: None }
    }

    pub fn interval(left: f64, right: f64) -> Self {
        Domain {
            left,
            right: Some(right),
        }
    }

    pub fn contains(&self, y: f64) -> bool {
        y > self.left && self.right.is_none_or(|b| y < b)
    }

    pub fn approach(&self, end: End) -> Approach {
        match (end, self.right) {
            (End::Left, _) => Approach::FromAbove(self.left),
            (End::Right, Some(b)) => Approach::FromBelow(b),
            (End::Right, None) => Approach::Infinity,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.right {
            Some(b) => write!(f, "({}, {})", self.left, b),
            None => write!(f, "({}, +inf)", self.left),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScaleError {
    #[error("invalid domain {0}")]
    InvalidDomain(String),
    #[error("reference point {c} is not inside {domain}")]
    RefPointOutside { c: f64, domain: String },
    #[error("sigma({at}) = {value} is not positive")]
    NonPositiveSigma { at: f64, value: f64 },
    #[error("coefficient evaluation failed at y = {at}: {source}")]
    Eval { at: f64, source: EvalError },
    #[error("quadrature failed on [{lo}, {hi}]: {detail}")]
    Quadrature { lo: f64, hi: f64, detail: String },
}

/// `dZ = sigma(Z) dB + drift(Z) dt` on `domain`, scale normalized at `ref_point`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSpec {
    pub sigma: CoefficientExpr,
    pub drift: CoefficientExpr,
    pub domain: Domain,
    pub ref_point: f64,
}

impl DiffusionSpec {
    pub fn new(
        sigma: CoefficientExpr,
        drift: CoefficientExpr,
        domain: Domain,
        ref_point: f64,
    ) -> Result<Self, ScaleError> {
        if !domain.left.is_finite() {
            return Err(ScaleError::InvalidDomain(format!("{domain}: left end must be finite")));
        }
        if let Some(b) = domain.right {
            if !(b.is_finite() && b > domain.left) {
                return Err(ScaleError::InvalidDomain(domain.to_string()));
            }
        }
        if !domain.contains(ref_point) {
            return Err(ScaleError::RefPointOutside {
                c: ref_point,
                domain: domain.to_string(),
            });
        }
        let spec = DiffusionSpec {
            sigma,
            drift,
            domain,
            ref_point,
        };
        let coord = Coord::of(&spec);
        let tc = coord.t_of(ref_point);
        for i in 0..=200 {
            let t = tc - 12.0 + 24.0 * i as f64 / 200.0;
            let y = coord.y(t);
            if !domain.contains(y) {
                continue;
            }
            let v = spec.sigma.eval(y).map_err(|source| ScaleError::Eval { at: y, source })?;
            if v <= 0.0 {
                return Err(ScaleError::NonPositiveSigma { at: y, value: v });
            }
            spec.drift.eval(y).map_err(|source| ScaleError::Eval { at: y, source })?;
        }
        Ok(spec)
    }

    /// Natural-scale Brownian motion on `(0, inf)`.
    pub fn brownian() -> Self {
        Self::new(
            CoefficientExpr::constant(1.0),
            CoefficientExpr::constant(0.0),
            Domain::half_line(0.0),
            1.0,
        )
        .expect("valid")
    }

    /// `dN = sqrt(N) dB + beta dt`, so that `beta / sigma^2 = beta` in the
    /// notation of branching processes with immigration.
    pub fn branching_immigration(beta: f64) -> Self {
        Self::new(
            CoefficientExpr::parse("sqrt(y)").expect("valid"),
            CoefficientExpr::constant(beta),
            Domain::half_line(0.0),
            1.0,
        )
        .expect("valid")
    }

    /// `dN = sqrt(N) dB + N (b - c N) dt`.
    pub fn logistic(b: f64, c: f64) -> Self {
        Self::new(
            CoefficientExpr::parse("sqrt(y)").expect("valid"),
            CoefficientExpr::parse(&format!("y*({b:?} - {c:?}*y)")).expect("valid"),
            Domain::half_line(0.0),
            1.0,
        )
        .expect("valid")
    }

    /// Wright-Fisher diffusion with selection `r` (neutral when `r = 0`).
    pub fn wright_fisher(r: f64) -> Self {
        let drift = if r == 0.0 {
            CoefficientExpr::constant(0.0)
        } else {
            CoefficientExpr::parse(&format!("{r:?}*y*(1-y)")).expect("valid")
        };
        Self::new(
            CoefficientExpr::parse("sqrt(y*(1-y))").expect("valid"),
            drift,
            Domain::interval(0.0, 1.0),
            0.5,
        )
        .expect("valid")
    }

    pub fn sigma2(&self, y: f64) -> Result<f64, EvalError> {
        let s = self.sigma.eval(y)?;
        Ok(s * s)
    }

    pub fn rho(&self, y: f64) -> Result<f64, EvalError> {
        let s2 = self.sigma2(y)?;
        if s2 == 0.0 {
            return Err(EvalError::DivisionByZero);
        }
        let v = self.drift.eval(y)? / s2;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite(y))
        }
    }

    /// `b / sigma^2` as an expression, for asymptotic analysis.
    pub fn rho_expr(&self) -> CoefficientExpr {
        self.drift.div(&self.sigma.mul(&self.sigma))
    }
}

/// Stretched coordinate used by the table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Coord {
    HalfLine { a: f64 },
    Interval { a: f64, b: f64 },
}

impl Coord {
    fn of(spec: &DiffusionSpec) -> Self {
        match spec.domain.right {
            None => Coord::HalfLine { a: spec.domain.left },
            Some(b) => Coord::Interval { a: spec.domain.left, b },
        }
    }

    fn dist_left(&self, t: f64) -> f64 {
        match *self {
            Coord::HalfLine { .. } => t.exp(),
            Coord::Interval { a, b } => (b - a) / (1.0 + (-t).exp()),
        }
    }

    fn dist_right(&self, t: f64) -> f64 {
        match *self {
            Coord::HalfLine { .. } => f64::INFINITY,
            Coord::Interval { a, b } => (b - a) / (1.0 + t.exp()),
        }
    }

    pub(crate) fn y(&self, t: f64) -> f64 {
        match *self {
            Coord::HalfLine { a } => a + t.exp(),
            Coord::Interval { a, b } => {
                if t <= 0.0 {
                    a + self.dist_left(t)
                } else {
                    b - self.dist_right(t)
                }
            }
        }
    }

    fn dy_dt(&self, t: f64) -> f64 {
        match *self {
            Coord::HalfLine { .. } => t.exp(),
            Coord::Interval { a, b } => {
                let e = (-t.abs()).exp();
                (b - a) * e / ((1.0 + e) * (1.0 + e))
            }
        }
    }

    /// Stretched coordinate of the point at distance `d` from `end`.
    pub(crate) fn t_of_dist(&self, end: End, d: f64) -> f64 {
        match (*self, end) {
            (Coord::HalfLine { .. }, End::Left) => d.ln(),
            (Coord::HalfLine { a }, End::Right) => (d - a).ln(),
            (Coord::Interval { a, b }, End::Left) => d.ln() - (b - a - d).ln(),
            (Coord::Interval { a, b }, End::Right) => (b - a - d).ln() - d.ln(),
        }
    }

    pub(crate) fn t_of(&self, y: f64) -> f64 {
        match *self {
            Coord::HalfLine { a } => (y - a).ln(),
            Coord::Interval { a, b } => (y - a).ln() - (b - y).ln(),
        }
    }
}

/// `e` as a function of the distance to the boundary of `approach`
/// (`y` itself at infinity).
pub fn chart(e: &CoefficientExpr, approach: Approach) -> CoefficientExpr {
    match approach {
        Approach::FromAbove(a) => e.reparametrize(a, 1.0),
        Approach::FromBelow(b) => e.reparametrize(b, -1.0),
        Approach::Infinity => e.clone(),
    }
}

/// `sigma` and `drift` charted at one end.
#[derive(Debug, Clone)]
pub(crate) struct EndChart {
    pub approach: Approach,
    pub sigma: CoefficientExpr,
    pub drift: CoefficientExpr,
}

impl EndChart {
    fn new(spec: &DiffusionSpec, end: End) -> Self {
        let approach = spec.domain.approach(end);
        EndChart {
            approach,
            sigma: chart(&spec.sigma, approach),
            drift: chart(&spec.drift, approach),
        }
    }

    pub fn sigma2(&self, d: f64) -> Result<f64, EvalError> {
        let s = self.sigma.eval(d)?;
        Ok(s * s)
    }

    /// `b / sigma^2` at distance `d`.
    pub fn rho(&self, d: f64) -> Result<f64, EvalError> {
        let s2 = self.sigma2(d)?;
        if s2 == 0.0 {
            return Err(EvalError::DivisionByZero);
        }
        let v = self.drift.eval(d)? / s2;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite(d))
        }
    }
}

fn hermite(t0: f64, t1: f64, f0: f64, f1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * f0 + (s3 - 2.0 * s2 + s) * h * d0 + (-2.0 * s3 + 3.0 * s2) * f1 + (s3 - s2) * h * d1
}

/// Hermite interpolation with the Fritsch-Carlson limiter for increasing data.
fn hermite_monotone(t0: f64, t1: f64, f0: f64, f1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    let delta = (f1 - f0) / h;
    let (mut d0, mut d1) = (d0, d1);
    if delta > 0.0 {
        let a = d0 / delta;
        let b = d1 / delta;
        let r = a * a + b * b;
        if r > 9.0 {
            let tau = 3.0 / r.sqrt();
            d0 *= tau;
            d1 *= tau;
        }
    }
    hermite(t0, t1, f0, f1, d0, d1, t).clamp(f0.min(f1), f0.max(f1))
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// An expression charted at both ends of a domain.
#[derive(Debug, Clone)]
pub struct Charted {
    left: CoefficientExpr,
    right: CoefficientExpr,
    coord: Coord,
}

impl Charted {
    /// Value at stretched coordinate `t`, in the chart of the nearer end.
    pub fn eval_t(&self, t: f64) -> Result<f64, EvalError> {
        match self.coord {
            Coord::HalfLine { .. } => self.left.eval(t.exp()),
            Coord::Interval { .. } if t <= 0.0 => self.left.eval(self.coord.dist_left(t)),
            Coord::Interval { .. } => self.right.eval(self.coord.dist_right(t)),
        }
    }

    /// Value at distance `d` from `end` (`y = d` at infinity).
    pub fn eval_dist(&self, end: End, d: f64) -> Result<f64, EvalError> {
        match end {
            End::Left => self.left.eval(d),
            End::Right => self.right.eval(d),
        }
    }
}

/// `b / sigma^2` at stretched coordinate `t`, evaluated in the chart of
/// the nearer end.
fn rho_t(charts: &[EndChart; 2], coord: Coord, t: f64) -> Result<f64, EvalError> {
    match coord {
        Coord::HalfLine { .. } => charts[0].rho(t.exp()),
        Coord::Interval { .. } if t <= 0.0 => charts[0].rho(coord.dist_left(t)),
        Coord::Interval { .. } => charts[1].rho(coord.dist_right(t)),
    }
}

/// What the numeric extrapolation says about `s` at an end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleAtEnd {
    Finite,
    Infinite,
    Unknown,
}

/// How `s` is pinned down.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// `s(a) = 0`.
    LeftZero,
    /// `s(b) = 0`.
    RightZero,
    /// `s(c) = 0` at the reference point.
    Reference,
}

/// Tabulated scale function and speed density.
#[derive(Debug, Clone)]
pub struct ScaleSpeed {
    spec: DiffusionSpec,
    coord: Coord,
    charts: [EndChart; 2],
    ts: Vec<f64>,
    js: Vec<f64>,
    djs: Vec<f64>,
    ic: usize,
    ln_left: Option<Vec<f64>>,
    ln_right: Option<Vec<f64>>,
    centered: Vec<f64>,
    left_end: ScaleAtEnd,
    right_end: ScaleAtEnd,
    max_interp_error: f64,
}

fn map_quad(e: QuadError<EvalError>, lo: f64, hi: f64) -> ScaleError {
    match e {
        QuadError::Integrand { at, source } => ScaleError::Eval { at, source },
        other => ScaleError::Quadrature {
            lo: lo.min(hi),
            hi: lo.max(hi),
            detail: other.to_string(),
        },
    }
}

impl ScaleSpeed {
    pub fn build(spec: &DiffusionSpec) -> Result<Self, ScaleError> {
        let coord = Coord::of(spec);
        let tc = coord.t_of(spec.ref_point);
        let (t_lo, t_hi) = (tc.min(0.0) - T_SPAN, tc.max(0.0) + T_SPAN);
        let charts = [EndChart::new(spec, End::Left), EndChart::new(spec, End::Right)];
        let dj = |t: f64| -> Result<f64, EvalError> { Ok(rho_t(&charts, coord, t)? * coord.dy_dt(t)) };
        let mut max_err = 0.0f64;

        let mut up = vec![(tc, 0.0, dj(tc).map_err(|source| ScaleError::Eval { at: spec.ref_point, source })?)];
        let mut down = up.clone();
        for (nodes, dir, limit) in [(&mut up, 1.0, t_hi), (&mut down, -1.0, t_lo)] {
            loop {
                let &(t0, j0, d0): &(f64, f64, f64) = nodes.last().unwrap();
                if (limit - t0) * dir <= 1e-12 || j0.abs() > J_MAX {
                    break;
                }
                let t1 = if ((limit - t0) * dir) < BASE_STEP * 1.5 { limit } else { t0 + dir * BASE_STEP };
                match Self::fill(&dj, (t0, j0, d0), t1, 0, nodes, &mut max_err) {
                    Ok(()) => {}
                    Err(_) if (t1 - tc).abs() > T_CORE => break,
                    Err(e) => return Err(map_quad(e, coord.y(t0), coord.y(t1))),
                }
            }
        }
        down.reverse();
        down.pop();
        let ic = down.len();
        let mut ts = Vec::with_capacity(down.len() + up.len());
        let mut js = Vec::with_capacity(ts.capacity());
        let mut djs = Vec::with_capacity(ts.capacity());
        for (t, j, d) in down.into_iter().chain(up) {
            ts.push(t);
            js.push(j);
            djs.push(d);
        }

        let mut ss = ScaleSpeed {
            spec: spec.clone(),
            coord,
            charts,
            ts,
            js,
            djs,
            ic,
            ln_left: None,
            ln_right: None,
            centered: Vec::new(),
            left_end: ScaleAtEnd::Unknown,
            right_end: ScaleAtEnd::Unknown,
            max_interp_error: max_err,
        };

        let n = ss.ts.len();
        let (left_end, ln_s0) = ss.extrapolate(End::Left, 0);
        let (right_end, ln_sn) = ss.extrapolate(End::Right, n - 1);
        ss.left_end = left_end;
        ss.right_end = right_end;
        for _ in 0..8 {
            ss.tabulate_scale(ln_s0, ln_sn)?;
            if !ss.refine_scale()? {
                break;
            }
        }
        ss.tabulate_scale(ln_s0, ln_sn)?;
        Ok(ss)
    }

    /// `ln ∫ s' dy` over `[t_i, t]` for `t` inside interval `i`.
    fn ln_increment(&self, i: usize, t0: f64, t1: f64) -> Result<f64, ScaleError> {
        let base = self.js[i].min(self.js[i + 1]);
        let g = |t: f64| -> Result<f64, EvalError> {
            Ok((-2.0 * (self.j_interp(i, t) - base)).exp() * self.coord.dy_dt(t))
        };
        let q = lenient(integrate(g, t0, t1, SEGMENT_OPTS))
            .map_err(|e| map_quad(e, self.coord.y(t0), self.coord.y(t1)))?;
        Ok(-2.0 * base + q.ln())
    }

    fn tabulate_scale(&mut self, ln_s0: Option<f64>, ln_sn: Option<f64>) -> Result<(), ScaleError> {
        let n = self.ts.len();
        let ln_q = (0..n - 1)
            .map(|i| self.ln_increment(i, self.ts[i], self.ts[i + 1]))
            .collect::<Result<Vec<_>, _>>()?;
        self.ln_left = ln_s0.map(|l0| {
            let mut v = vec![l0];
            for q in &ln_q {
                let last = *v.last().unwrap();
                v.push(log_add(last, *q));
            }
            v
        });
        self.ln_right = ln_sn.map(|ln| {
            let mut v = vec![ln];
            for q in ln_q.iter().rev() {
                let last = *v.last().unwrap();
                v.push(log_add(last, *q));
            }
            v.reverse();
            v
        });
        let mut centered = vec![0.0; n];
        for i in self.ic + 1..n {
            centered[i] = centered[i - 1] + ln_q[i - 1].exp();
        }
        for i in (0..self.ic).rev() {
            centered[i] = centered[i + 1] - ln_q[i].exp();
        }
        self.centered = centered;
        Ok(())
    }

    /// Bisect intervals whose `ln |s - s(end)|` interpolant misses the
    /// midpoint value; returns whether any node was added.
    fn refine_scale(&mut self) -> Result<bool, ScaleError> {
        let (table, left) = match (&self.ln_left, &self.ln_right) {
            (Some(l), _) => (l.clone(), true),
            (None, Some(r)) => (r.clone(), false),
            (None, None) => return Ok(false),
        };
        let n = self.ts.len();
        let mut bad = Vec::new();
        for i in 0..n - 1 {
            let tm = 0.5 * (self.ts[i] + self.ts[i + 1]);
            let exact = if left {
                log_add(table[i], self.ln_increment(i, self.ts[i], tm)?)
            } else {
                log_add(table[i + 1], self.ln_increment(i, tm, self.ts[i + 1])?)
            };
            let err = (exact - self.ln_interp(&table, !left, i, tm)).abs();
            if err > INTERP_TOL && self.ts[i + 1] - self.ts[i] > BASE_STEP / 4096.0 {
                bad.push(i);
            }
            self.max_interp_error = self.max_interp_error.max(err);
        }
        if bad.is_empty() {
            return Ok(false);
        }
        self.max_interp_error = 0.0;
        for &i in bad.iter().rev() {
            let tm = 0.5 * (self.ts[i] + self.ts[i + 1]);
            let jm = self.js[i]
                + lenient(integrate(|u| self.dj_dt(u), self.ts[i], tm, SEGMENT_OPTS))
                    .map_err(|e| map_quad(e, self.coord.y(self.ts[i]), self.coord.y(tm)))?;
            let dm = self.dj_dt(tm).map_err(|source| ScaleError::Eval {
                at: self.coord.y(tm),
                source,
            })?;
            self.ts.insert(i + 1, tm);
            self.js.insert(i + 1, jm);
            self.djs.insert(i + 1, dm);
            if i < self.ic {
                self.ic += 1;
            }
        }
        Ok(true)
    }

    fn fill<F>(
        dj: &F,
        n0: (f64, f64, f64),
        t1: f64,
        depth: u32,
        nodes: &mut Vec<(f64, f64, f64)>,
        max_err: &mut f64,
    ) -> Result<(), QuadError<EvalError>>
    where
        F: Fn(f64) -> Result<f64, EvalError>,
    {
        let (t0, j0, d0) = n0;
        let tm = 0.5 * (t0 + t1);
        let j1 = j0 + lenient(integrate(dj, t0, t1, SEGMENT_OPTS))?;
        let d1 = dj(t1).map_err(|source| QuadError::Integrand { at: t1, source })?;
        let jm = j0 + lenient(integrate(dj, t0, tm, SEGMENT_OPTS))?;
        let err = (hermite(t0, t1, j0, j1, d0, d1, tm) - jm).abs();
        let ok = err <= INTERP_TOL && (j1 - j0).abs() <= J_STEP;
        if ok || depth >= MAX_SPLIT {
            *max_err = max_err.max(err);
            nodes.push((t1, j1, d1));
            return Ok(());
        }
        let dm = dj(tm).map_err(|source| QuadError::Integrand { at: tm, source })?;
        Self::fill(dj, n0, tm, depth + 1, nodes, max_err)?;
        let &mid = nodes.last().unwrap();
        debug_assert!((mid.0 - tm).abs() < 1e-15 && (mid.2 - dm).abs() <= 1e-12 * dm.abs().max(1.0));
        Self::fill(dj, mid, t1, depth + 1, nodes, max_err)
    }

    /// Octave ladder of `s'` beyond the table end, relative to `s'` at the
    /// end node, returning the finiteness of `s` at the boundary and the
    /// log of `|s(end) - s(y_node)|` when finite.
    fn extrapolate(&self, end: End, node: usize) -> (ScaleAtEnd, Option<f64>) {
        let approach = self.spec.domain.approach(end);
        let t = self.ts[node];
        let d0 = match (end, approach) {
            (End::Left, _) => self.coord.dist_left(t),
            (End::Right, Approach::Infinity) => self.coord.y(t),
            (End::Right, _) => self.coord.dist_right(t),
        };
        match self.outer_increments(end, d0, |_| Ok(1.0)) {
            Ok(incs) => match assess(&incs).outcome {
                LadderOutcome::Convergent { total, .. } => {
                    let v = -2.0 * self.js[node] + total.ln() + d0.ln();
                    (ScaleAtEnd::Finite, Some(v))
                }
                LadderOutcome::Divergent { .. } => (ScaleAtEnd::Infinite, None),
                LadderOutcome::Undecided => (ScaleAtEnd::Unknown, None),
            },
            Err(_) => (ScaleAtEnd::Unknown, None),
        }
    }

    /// Increments of `∫ exp(-2 (J(y) - J(y0))) w(y) dy / d0` over the octaves
    /// beyond the point at distance `d0` (`y0 = d0` at infinity).
    /// `w` is evaluated at distances.
    pub(crate) fn outer_increments<W>(&self, end: End, d0: f64, mut w: W) -> Result<Vec<f64>, QuadError<EvalError>>
    where
        W: FnMut(f64) -> Result<f64, EvalError>,
    {
        let chart = &self.charts[end as usize];
        let approach = chart.approach;
        let sign = if matches!(approach, Approach::FromBelow(_)) { -1.0 } else { 1.0 };
        let rho_log = |v: f64| -> Result<f64, EvalError> {
            let d = v.exp();
            Ok(chart.rho(d)? * d)
        };
        let opts = QuadOptions {
            rel_tol: 1e-10,
            abs_tol: 0.0,
            max_intervals: 400,
        };
        let mut incs = Vec::with_capacity(OCTAVES);
        let mut dj_near = 0.0;
        for k in 0..OCTAVES {
            let (lo, hi) = octave_bounds(approach, d0, k);
            let (near, far) = if approach == Approach::Infinity { (lo, hi) } else { (hi, lo) };
            if incs.last() == Some(&f64::INFINITY) {
                incs.push(f64::INFINITY);
                continue;
            }
            let (ln_near, ln_far) = (near.ln(), far.ln());
            let g = |v: f64| -> Result<f64, EvalError> {
                let dj = dj_near + sign * kronrod15(rho_log, ln_near, v)?;
                let d = v.exp();
                let e = (-2.0 * dj).exp();
                if e == f64::INFINITY {
                    return Ok(f64::INFINITY);
                }
                Ok(e * w(d)? * d / d0)
            };
            let r = lenient(integrate(g, lo.ln(), hi.ln(), opts));
            match r {
                Ok(v) => incs.push(v.max(0.0)),
                Err(QuadError::NonFinite { .. }) => incs.push(f64::INFINITY),
                Err(e) => return Err(e),
            }
            dj_near += sign * lenient(integrate(rho_log, ln_near, ln_far, opts))?;
            if !dj_near.is_finite() {
                incs.push(f64::INFINITY);
            }
        }
        incs.truncate(OCTAVES);
        Ok(incs)
    }

    fn locate(&self, t: f64) -> Option<usize> {
        let n = self.ts.len();
        if !(t >= self.ts[0] && t <= self.ts[n - 1]) {
            return None;
        }
        let i = self.ts.partition_point(|&x| x <= t);
        Some(i.saturating_sub(1).min(n - 2))
    }

    fn j_interp(&self, i: usize, t: f64) -> f64 {
        hermite(
            self.ts[i],
            self.ts[i + 1],
            self.js[i],
            self.js[i + 1],
            self.djs[i],
            self.djs[i + 1],
            t,
        )
    }

    fn ln_deriv(&self, ln: &[f64], i: usize, sign: f64) -> f64 {
        sign * (-2.0 * self.js[i] - ln[i]).exp() * self.coord.dy_dt(self.ts[i])
    }

    fn ln_interp(&self, ln: &[f64], right: bool, i: usize, t: f64) -> f64 {
        let sign = if right { -1.0 } else { 1.0 };
        let (d0, d1) = (self.ln_deriv(ln, i, sign), self.ln_deriv(ln, i + 1, sign));
        if right {
            // decreasing data: interpolate the mirror image
            -hermite_monotone(self.ts[i], self.ts[i + 1], -ln[i], -ln[i + 1], -d0, -d1, t)
        } else {
            hermite_monotone(self.ts[i], self.ts[i + 1], ln[i], ln[i + 1], d0, d1, t)
        }
    }

    pub fn spec(&self) -> &DiffusionSpec {
        &self.spec
    }

    /// `y` at stretched coordinate `t`.
    pub fn y_at_t(&self, t: f64) -> f64 {
        self.coord.y(t)
    }

    pub fn dy_dt(&self, t: f64) -> f64 {
        self.coord.dy_dt(t)
    }

    /// Distance from `end` at `t` (`y` itself for the end at infinity).
    pub fn dist_at_t(&self, end: End, t: f64) -> f64 {
        match (end, self.coord) {
            (End::Left, _) => self.coord.dist_left(t),
            (End::Right, Coord::HalfLine { .. }) => self.coord.y(t),
            (End::Right, _) => self.coord.dist_right(t),
        }
    }

    /// Range of the stretched coordinate covered by the table.
    pub fn t_range(&self) -> (f64, f64) {
        (self.ts[0], *self.ts.last().unwrap())
    }

    /// `e` charted at both ends, for evaluation by stretched coordinate.
    pub fn charted(&self, e: &CoefficientExpr) -> Charted {
        Charted {
            left: chart(e, self.charts[0].approach),
            right: chart(e, self.charts[1].approach),
            coord: self.coord,
        }
    }

    /// Range of `y` covered by the table.
    pub fn table_range(&self) -> (f64, f64) {
        (self.coord.y(self.ts[0]), self.coord.y(*self.ts.last().unwrap()))
    }

    pub fn nodes(&self) -> usize {
        self.ts.len()
    }

    pub fn max_interp_error(&self) -> f64 {
        self.max_interp_error
    }

    pub fn left_end(&self) -> ScaleAtEnd {
        self.left_end
    }

    pub fn right_end(&self) -> ScaleAtEnd {
        self.right_end
    }

    pub fn normalization(&self) -> Normalization {
        if self.ln_left.is_some() {
            Normalization::LeftZero
        } else if self.ln_right.is_some() {
            Normalization::RightZero
        } else {
            Normalization::Reference
        }
    }

    /// Stretched coordinate of `y`.
    pub fn t_at(&self, y: f64) -> f64 {
        self.coord.t_of(y)
    }

    /// Stretched coordinate of the point at distance `d` from `end`
    /// (`y = d` at infinity).
    pub fn t_at_dist(&self, end: End, d: f64) -> f64 {
        self.coord.t_of_dist(end, d)
    }

    fn dj_dt(&self, t: f64) -> Result<f64, EvalError> {
        Ok(rho_t(&self.charts, self.coord, t)? * self.coord.dy_dt(t))
    }

    /// `J` at `t`, integrated directly from the nearest node.
    pub fn j_exact_t(&self, t: f64) -> Result<f64, ScaleError> {
        let i = self.ts.partition_point(|&x| x <= t).clamp(1, self.ts.len()) - 1;
        let i = if i + 1 < self.ts.len() && (self.ts[i + 1] - t).abs() < (t - self.ts[i]).abs() { i + 1 } else { i };
        let q = lenient(integrate(|u| self.dj_dt(u), self.ts[i], t, SEGMENT_OPTS))
            .map_err(|e| map_quad(e, self.coord.y(self.ts[i]), self.coord.y(t)))?;
        Ok(self.js[i] + q)
    }

    pub fn j_t(&self, t: f64) -> Result<f64, ScaleError> {
        match self.locate(t) {
            Some(i) => Ok(self.j_interp(i, t)),
            None => self.j_exact_t(t),
        }
    }

    /// `J(y) = ∫_c^y b / sigma^2`, integrated directly from the nearest node.
    pub fn j_exact(&self, y: f64) -> Result<f64, ScaleError> {
        self.j_exact_t(self.coord.t_of(y))
    }

    /// `J(y)`, from the table inside its range.
    pub fn j(&self, y: f64) -> Result<f64, ScaleError> {
        self.j_t(self.coord.t_of(y))
    }

    pub fn ln_s_prime(&self, y: f64) -> Result<f64, ScaleError> {
        Ok(-2.0 * self.j(y)?)
    }

    pub fn s_prime(&self, y: f64) -> Result<f64, ScaleError> {
        Ok(self.ln_s_prime(y)?.exp())
    }

    /// `sigma^2` at `t`, evaluated in the chart of the nearer end.
    pub fn sigma2_t(&self, t: f64) -> Result<f64, ScaleError> {
        let r = match self.coord {
            Coord::HalfLine { .. } => self.charts[0].sigma2(t.exp()),
            Coord::Interval { .. } if t <= 0.0 => self.charts[0].sigma2(self.coord.dist_left(t)),
            Coord::Interval { .. } => self.charts[1].sigma2(self.coord.dist_right(t)),
        };
        r.map_err(|source| ScaleError::Eval {
            at: self.coord.y(t),
            source,
        })
    }

    pub fn m_density_t(&self, t: f64) -> Result<f64, ScaleError> {
        Ok(2.0 * (2.0 * self.j_t(t)?).exp() / self.sigma2_t(t)?)
    }

    /// `2 / (s' sigma^2)`.
    pub fn m_density(&self, y: f64) -> Result<f64, ScaleError> {
        let s2 = self.spec.sigma2(y).map_err(|source| ScaleError::Eval { at: y, source })?;
        Ok(2.0 * (2.0 * self.j(y)?).exp() / s2)
    }

    /// `ln |s(y) - s(end)|` at `t`, when `s(end)` is finite.
    pub fn ln_end_t(&self, end: End, t: f64) -> Result<Option<f64>, ScaleError> {
        let table = match end {
            End::Left => self.ln_left.as_deref(),
            End::Right => self.ln_right.as_deref(),
        };
        let Some(table) = table else { return Ok(None) };
        if let Some(i) = self.locate(t) {
            return Ok(Some(self.ln_interp(table, end == End::Right, i, t)));
        }
        // beyond the table: on the far side use the table end plus a direct
        // integral, on the near side extrapolate afresh
        let n = self.ts.len();
        let beyond_left = t < self.ts[0];
        let toward = match end {
            End::Left => beyond_left,
            End::Right => !beyond_left,
        };
        let y = self.coord.y(t);
        if toward {
            let d0 = match (end, self.coord) {
                (End::Left, _) => self.coord.dist_left(t),
                (End::Right, Coord::HalfLine { .. }) => y,
                (End::Right, _) => self.coord.dist_right(t),
            };
            let incs = self
                .outer_increments(end, d0, |_| Ok(1.0))
                .map_err(|e| map_quad(e, y, self.spec.domain.approach(end).boundary()))?;
            return Ok(match assess(&incs).outcome {
                LadderOutcome::Convergent { total, .. } => Some(-2.0 * self.j_exact_t(t)? + total.ln() + d0.ln()),
                _ => None,
            });
        }
        let node = if beyond_left { 0 } else { n - 1 };
        let j_node = self.js[node];
        let g = |u: f64| -> Result<f64, EvalError> {
            let j = lenient(integrate(|v| self.dj_dt(v), self.ts[node], u, SEGMENT_OPTS))
                .map_err(|_| EvalError::NonFinite(u))?;
            Ok((-2.0 * j).exp() * self.coord.dy_dt(u))
        };
        let q = lenient(integrate(g, self.ts[node], t, SEGMENT_OPTS))
            .map_err(|e| map_quad(e, self.coord.y(self.ts[node]), y))?;
        Ok(Some(log_add(table[node], -2.0 * j_node + q.abs().ln())))
    }

    fn ln_end(&self, end: End, y: f64) -> Result<Option<f64>, ScaleError> {
        self.ln_end_t(end, self.coord.t_of(y))
    }

    /// `|s - s(end)| / s'` at `t`.
    pub fn h_t(&self, end: End, t: f64) -> Result<Option<f64>, ScaleError> {
        Ok(match self.ln_end_t(end, t)? {
            Some(l) => Some((l + 2.0 * self.j_t(t)?).exp()),
            None => None,
        })
    }

    /// `ln(s(y) - s(a))` when `s(a)` is finite.
    pub fn ln_s_left(&self, y: f64) -> Result<Option<f64>, ScaleError> {
        self.ln_end(End::Left, y)
    }

    /// `ln(s(b) - s(y))` when `s(b)` is finite.
    pub fn ln_s_right(&self, y: f64) -> Result<Option<f64>, ScaleError> {
        self.ln_end(End::Right, y)
    }

    /// `(s(y) - s(a)) / s'(y)` (left) or `(s(b) - s(y)) / s'(y)` (right).
    pub fn h(&self, end: End, y: f64) -> Result<Option<f64>, ScaleError> {
        Ok(match self.ln_end(end, y)? {
            Some(l) => Some((l + 2.0 * self.j(y)?).exp()),
            None => None,
        })
    }

    /// `s(y)` under [`ScaleSpeed::normalization`].
    pub fn s(&self, y: f64) -> Result<f64, ScaleError> {
        match self.normalization() {
            Normalization::LeftZero => Ok(self.ln_s_left(y)?.map_or(f64::NAN, f64::exp)),
            Normalization::RightZero => Ok(-self.ln_s_right(y)?.map_or(f64::NAN, f64::exp)),
            Normalization::Reference => {
                let t = self.coord.t_of(y);
                let i = self.locate(t).ok_or_else(|| ScaleError::Quadrature {
                    lo: y,
                    hi: y,
                    detail: "outside the tabulated range".into(),
                })?;
                let sp = |k: usize| (-2.0 * self.js[k]).exp() * self.coord.dy_dt(self.ts[k]);
                Ok(hermite(
                    self.ts[i],
                    self.ts[i + 1],
                    self.centered[i],
                    self.centered[i + 1],
                    sp(i),
                    sp(i + 1),
                    t,
                ))
            }
        }
    }

    /// Value of `s` at an end under the current normalization.
    pub fn s_at(&self, end: End) -> Extended {
        let fin = match end {
            End::Left => self.left_end,
            End::Right => self.right_end,
        };
        match (fin, end) {
            (ScaleAtEnd::Unknown, _) => Extended::Unknown,
            (ScaleAtEnd::Infinite, End::Left) => Extended::NegInfinite,
            (ScaleAtEnd::Infinite, End::Right) => Extended::PosInfinite,
            (ScaleAtEnd::Finite, _) => match (self.normalization(), end) {
                (Normalization::LeftZero, End::Left) | (Normalization::RightZero, End::Right) => Extended::Finite(0.0),
                (Normalization::LeftZero, End::Right) => {
                    let l = self.ln_left.as_ref().unwrap()[0];
                    let r = self.ln_right.as_ref().unwrap()[0];
                    Extended::Finite(log_add(l, r).exp())
                }
                (Normalization::RightZero, End::Left) => Extended::Unknown,
                _ => Extended::Unknown,
            },
        }
    }
}

/// Leading behavior of `h = |s - s(end)| / s'` near an end, from the
/// series of `b / sigma^2`. At infinity with `s(inf) = inf` the function is
/// `(s - s(a)) / s'` instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct EndAsymptotics {
    pub scale_finite: bool,
    /// `(coeff, exponent)` of `h` in the distance to the end (`y` at infinity).
    pub h: Option<(f64, f64)>,
}

const BORDER_TOL: f64 = 1e-9;

pub(crate) fn end_asymptotics(spec: &DiffusionSpec, end: End) -> Option<EndAsymptotics> {
    let approach = spec.domain.approach(end);
    let lead = symbolic_leading(&spec.rho_expr(), approach).ok()?;
    let fin = |h| Some(EndAsymptotics { scale_finite: true, h });
    let inf = |h| Some(EndAsymptotics { scale_finite: false, h });
    if approach == Approach::Infinity {
        let Some((k, q)) = lead else { return inf(Some((1.0, 1.0))) };
        let p = -q;
        if p < -1.0 {
            return inf(Some((1.0, 1.0)));
        }
        if p == -1.0 {
            let m = 1.0 - 2.0 * k;
            return if m == 0.0 {
                inf(None)
            } else if m > BORDER_TOL {
                inf(Some((1.0 / m, 1.0)))
            } else if m < -BORDER_TOL {
                fin(Some((-1.0 / m, 1.0)))
            } else {
                None
            };
        }
        return if k < 0.0 {
            inf(Some((1.0 / (2.0 * -k), -p)))
        } else {
            fin(Some((1.0 / (2.0 * k), -p)))
        };
    }
    let Some((k, p)) = lead else { return fin(Some((1.0, 1.0))) };
    let k = if end == End::Right { -k } else { k };
    if p > -1.0 {
        return fin(Some((1.0, 1.0)));
    }
    if p == -1.0 {
        let m = 1.0 - 2.0 * k;
        return if m == 0.0 || m < -BORDER_TOL {
            inf(None)
        } else if m > BORDER_TOL {
            fin(Some((1.0 / m, 1.0)))
        } else {
            None
        };
    }
    if k < 0.0 {
        fin(Some((1.0 / (2.0 * -k), -p)))
    } else {
        inf(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn tri_logic() {
        use Tri::*;
        assert_eq!(True.and(Unknown), Unknown);
        assert_eq!(False.and(Unknown), False);
        assert_eq!(True.or(Unknown), True);
        assert_eq!(Unknown.not(), Unknown);
    }

    #[test]
    fn spec_validation() {
        let s = parse_expr("y").unwrap();
        let z = CoefficientExpr::constant(0.0);
        assert!(matches!(
            DiffusionSpec::new(s.clone(), z.clone(), Domain::half_line(0.0), -1.0),
            Err(ScaleError::RefPointOutside { .. })
        ));
        assert!(matches!(
            DiffusionSpec::new(s.clone(), z.clone(), Domain::interval(1.0, 0.0), 0.5),
            Err(ScaleError::InvalidDomain(_))
        ));
        assert!(matches!(
            DiffusionSpec::new(parse_expr("y - 2").unwrap(), z, Domain::half_line(0.0), 1.0),
            Err(ScaleError::NonPositiveSigma { .. })
        ));
    }

    #[test]
    fn brownian_is_natural_scale() {
        let ss = ScaleSpeed::build(&DiffusionSpec::brownian()).unwrap();
        assert_eq!(ss.left_end(), ScaleAtEnd::Finite);
        assert_eq!(ss.right_end(), ScaleAtEnd::Infinite);
        assert_eq!(ss.normalization(), Normalization::LeftZero);
        for y in [1e-9, 1e-3, 0.5, 1.0, 7.0, 1e6] {
            assert!(rel(ss.s(y).unwrap(), y) < 1e-9, "s({y})");
            assert!(rel(ss.m_density(y).unwrap(), 2.0) < 1e-12);
            assert!(rel(ss.h(End::Left, y).unwrap().unwrap(), y) < 1e-9);
        }
    }

    #[test]
    fn branching_scale_formula() {
        // s' = y^{-2 beta}, s(x) = x^{1 - 2 beta} / (1 - 2 beta)
        let beta = 0.25;
        let ss = ScaleSpeed::build(&DiffusionSpec::branching_immigration(beta)).unwrap();
        assert_eq!(ss.left_end(), ScaleAtEnd::Finite);
        for y in [1e-12f64, 1e-4, 0.3, 1.0, 40.0, 1e8] {
            let exact = y.powf(1.0 - 2.0 * beta) / (1.0 - 2.0 * beta);
            assert!(rel(ss.s(y).unwrap(), exact) < 1e-8, "y = {y}");
            assert!(rel(ss.s_prime(y).unwrap(), y.powf(-2.0 * beta)) < 1e-9);
        }
        let ss = ScaleSpeed::build(&DiffusionSpec::branching_immigration(0.75)).unwrap();
        assert_eq!(ss.left_end(), ScaleAtEnd::Infinite);
        assert_eq!(ss.right_end(), ScaleAtEnd::Finite);
        assert_eq!(ss.normalization(), Normalization::RightZero);
    }

    #[test]
    fn logistic_speed_density() {
        let (b, c) = (1.0, 0.1);
        let ss = ScaleSpeed::build(&DiffusionSpec::logistic(b, c)).unwrap();
        // J(y) = ∫_1^y (b - c z) dz
        for y in [1e-6, 0.2, 1.0, 3.0, 12.0] {
            let j = b * (y - 1.0) - 0.5 * c * (y * y - 1.0);
            assert!((ss.j(y).unwrap() - j).abs() < 1e-9 * j.abs().max(1.0));
            let m = 2.0 * (2.0 * j).exp() / y;
            assert!(rel(ss.m_density(y).unwrap(), m) < 1e-8);
        }
        assert_eq!(ss.right_end(), ScaleAtEnd::Infinite);
    }

    #[test]
    fn wright_fisher_is_natural_scale_on_the_interval() {
        let ss = ScaleSpeed::build(&DiffusionSpec::wright_fisher(0.0)).unwrap();
        assert_eq!(ss.left_end(), ScaleAtEnd::Finite);
        assert_eq!(ss.right_end(), ScaleAtEnd::Finite);
        assert!(matches!(ss.s_at(End::Right), Extended::Finite(v) if (v - 1.0).abs() < 1e-9));
        for y in [1e-9, 0.1, 0.5, 0.9, 1.0 - 1e-7] {
            assert!(rel(ss.s(y).unwrap(), y) < 1e-8, "y = {y}");
            assert!(rel(ss.h(End::Right, y).unwrap().unwrap(), 1.0 - y) < 1e-6, "y = {y}");
        }
    }

    #[test]
    fn selection_scale() {
        let r = 0.5;
        let ss = ScaleSpeed::build(&DiffusionSpec::wright_fisher(r)).unwrap();
        for y in [1e-6, 0.25, 0.5, 0.75, 0.999] {
            let exact = (1.0 - (-2.0 * r * y).exp()) / (2.0 * r);
            // s' = exp(-2 r (y - 1/2)), s(0) = 0
            let scaled = exact * (r).exp();
            assert!(rel(ss.s(y).unwrap(), scaled) < 1e-8, "y = {y}");
        }
    }

    #[test]
    fn interpolation_matches_direct_quadrature() {
        let ss = ScaleSpeed::build(&DiffusionSpec::logistic(1.0, 0.1)).unwrap();
        assert!(ss.max_interp_error() < 1e-8, "{}", ss.max_interp_error());
        for y in [0.013, 0.77, 2.9, 17.3] {
            assert!((ss.j(y).unwrap() - ss.j_exact(y).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn end_asymptotic_rules() {
        let e = end_asymptotics(&DiffusionSpec::branching_immigration(0.25), End::Left).unwrap();
        assert!(e.scale_finite);
        assert_eq!(e.h, Some((2.0, 1.0)));
        let e = end_asymptotics(&DiffusionSpec::branching_immigration(0.5), End::Left).unwrap();
        assert!(!e.scale_finite);
        let e = end_asymptotics(&DiffusionSpec::branching_immigration(0.25), End::Right).unwrap();
        assert!(!e.scale_finite);
        assert_eq!(e.h, Some((2.0, 1.0)));
        let e = end_asymptotics(&DiffusionSpec::logistic(1.0, 0.1), End::Right).unwrap();
        assert!(!e.scale_finite);
        let (c, p) = e.h.unwrap();
        assert!((c - 5.0).abs() < 1e-12 && (p + 1.0).abs() < 1e-12);
        let e = end_asymptotics(&DiffusionSpec::wright_fisher(0.5), End::Right).unwrap();
        assert!(e.scale_finite);
        assert_eq!(e.h, Some((1.0, 1.0)));
    }
}
