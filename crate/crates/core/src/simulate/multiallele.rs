use super::engine::{drive, Event, Local, SimConfig, SimError, System, Trajectory};
use super::timechange::TimeChange;
use crate::rng::Stream;
use crate::scale::End;

/// Allele proportions and the alleles already lost.
#[derive(Debug, Clone, PartialEq)]
pub struct AlleleState {
    pub proportions: Vec<f64>,
    /// `(allele, time)` in order of loss.
    pub extinct: Vec<(usize, f64)>,
}

impl AlleleState {
    pub fn at(traj: &Trajectory, k: usize) -> Self {
        let t = traj.times[k];
        AlleleState {
            proportions: traj.states[k].clone(),
            extinct: traj
                .events
                .iter()
                .filter(|e| e.end == End::Left && e.time <= t)
                .map(|e| (e.component, e.time))
                .collect(),
        }
    }
}

/// Stick-breaking ratios `Y_i = X_i / (1 - X_1 - ... - X_{i-1})`, each a
/// Wright-Fisher diffusion run at speed `1 / R_i` with
/// `R_i = (1 - Y_1) ... (1 - Y_{i-1})`, driven by its own noise.
struct Nested {
    l: usize,
    eps: f64,
}

#[derive(Debug, Clone)]
struct NestedState {
    /// `(Y_i, 1 - Y_i)` for `i < L - 1`.
    y: Vec<(f64, f64)>,
    frozen: Vec<bool>,
    alive: Vec<bool>,
    fixed: bool,
}

impl Nested {
    fn proportions(&self, s: &NestedState) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.l);
        let mut r = 1.0;
        for &(lo, hi) in &s.y {
            x.push(lo * r);
            r *= hi;
        }
        x.push(r);
        x
    }
}

impl System for Nested {
    type State = NestedState;

    fn noises(&self) -> usize {
        self.l - 1
    }

    fn labels(&self) -> Vec<String> {
        (1..=self.l).map(|i| format!("x{i}")).collect()
    }

    fn local(&self, s: &NestedState, out: &mut [Local]) -> Result<(), SimError> {
        let mut r = 1.0;
        for (i, &(lo, hi)) in s.y.iter().enumerate() {
            out[i] = if !s.frozen[i] && r > 0.0 {
                Local {
                    drift: 0.0,
                    sigma: (lo * hi / r).sqrt(),
                    dist: lo.min(hi),
                }
            } else {
                Local {
                    drift: 0.0,
                    sigma: 0.0,
                    dist: f64::INFINITY,
                }
            };
            r *= hi;
        }
        Ok(())
    }

    fn apply(&self, s: &NestedState, l: &[Local], _h: f64, dw: &[f64]) -> NestedState {
        let mut next = s.clone();
        for (i, &(lo, hi)) in s.y.iter().enumerate() {
            if l[i].sigma > 0.0 {
                let d = l[i].sigma * dw[i];
                // carry the smaller of the two exactly
                next.y[i] = if lo <= hi { (lo + d, 1.0 - (lo + d)) } else { (1.0 - (hi - d), hi - d) };
            }
        }
        next
    }

    fn settle(
        &self,
        _prev: &NestedState,
        next: &mut NestedState,
        _l: &[Local],
        _h: f64,
        _rng: &mut [Stream],
        events: &mut Vec<(usize, End)>,
    ) -> Result<(), SimError> {
        let mut r = 1.0;
        for i in 0..next.y.len() {
            if !next.frozen[i] && r > 0.0 {
                let (lo, hi) = next.y[i];
                if lo < self.eps {
                    next.y[i] = (0.0, 1.0);
                    next.frozen[i] = true;
                } else if hi < self.eps {
                    next.y[i] = (1.0, 0.0);
                    next.frozen[i] = true;
                }
            }
            r *= next.y[i].1;
        }
        let x = self.proportions(next);
        for (i, xi) in x.iter().enumerate() {
            if next.alive[i] && *xi == 0.0 {
                next.alive[i] = false;
                events.push((i, End::Left));
            }
        }
        let left: Vec<usize> = (0..self.l).filter(|&i| next.alive[i]).collect();
        if left.len() == 1 && !next.fixed {
            next.fixed = true;
            events.push((left[0], End::Right));
        }
        Ok(())
    }

    fn finished(&self, s: &NestedState) -> bool {
        s.fixed
    }

    fn components(&self, s: &NestedState) -> Vec<f64> {
        self.proportions(s)
    }

    fn simplex_error(&self, s: &NestedState) -> f64 {
        let x = self.proportions(s);
        let sum: f64 = x.iter().sum();
        let out = x.iter().map(|v| (-v).max(v - 1.0).max(0.0)).fold(0.0, f64::max);
        (sum - 1.0).abs().max(out)
    }
}

/// One path of the neutral `L`-allele Wright-Fisher diffusion from `x0`.
/// Events are the losses of alleles (`End::Left`) and the final fixation
/// (`End::Right`); components are the allele proportions.
pub fn simulate_multiallele(l: usize, x0: &[f64], cfg: &SimConfig, index: u64) -> Result<Trajectory, SimError> {
    if l < 2 || x0.len() != l {
        return Err(SimError::InitialCondition(format!(
            "need L >= 2 proportions, got L = {l} and {} values",
            x0.len()
        )));
    }
    if x0.iter().any(|v| !(*v > cfg.absorption_eps)) || (x0.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(SimError::InitialCondition(
            "x0 must lie strictly inside the simplex".into(),
        ));
    }
    let total: f64 = x0.iter().sum();
    let mut y = Vec::with_capacity(l - 1);
    let mut rest = 1.0;
    for v in &x0[..l - 1] {
        let yi = (v / total / rest).clamp(0.0, 1.0);
        y.push((yi, 1.0 - yi));
        rest *= 1.0 - yi;
    }
    let sys = Nested {
        l,
        eps: cfg.absorption_eps,
    };
    let init = NestedState {
        frozen: vec![false; l - 1],
        alive: vec![true; l],
        fixed: false,
        y,
    };
    drive(&sys, init, cfg, index)
}

/// Summary of one multi-allele path.
#[derive(Debug, Clone, PartialEq)]
pub struct MultialleleSummary {
    pub fixed: bool,
    pub fixed_allele: Option<usize>,
    /// Loss and fixation events in order.
    pub events: Vec<Event>,
    /// Smallest difference in step index between consecutive losses; the
    /// last loss is the fixation.
    pub min_gap_steps: Option<u64>,
    pub max_simplex_error: f64,
}

impl MultialleleSummary {
    pub fn of(t: &Trajectory) -> Self {
        let losses: Vec<u64> = t.events.iter().filter(|e| e.end == End::Left).map(|e| e.step).collect();
        let gaps = losses.windows(2).map(|w| w[1] - w[0]);
        let fixed_allele = t.absorbed_at.map(|e| e.component);
        MultialleleSummary {
            fixed: fixed_allele.is_some(),
            fixed_allele,
            events: t.events.clone(),
            min_gap_steps: gaps.min(),
            max_simplex_error: t.max_simplex_error,
        }
    }

    /// Losses and the fixation happen at distinct steps, in order.
    pub fn successive(&self) -> bool {
        self.min_gap_steps.is_none_or(|g| g > 0)
    }
}

/// The ratios `Y_i = X_i / (1 - X_L)`, `i < L`, in the clock
/// `A(u) = ∫_0^u ds / (1 - X_L)`, and their realized quadratic variation
/// against the Wright-Fisher prediction `Y_i (δ_ij - Y_j) dA`.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedReport {
    pub times: Vec<f64>,
    pub ratios: Vec<Vec<f64>>,
    /// `Σ ΔY_i ΔY_j`.
    pub qv_empirical: Vec<Vec<f64>>,
    /// `Σ Y_i (δ_ij - Y_j) ΔA`.
    pub qv_expected: Vec<Vec<f64>>,
}

impl NestedReport {
    pub fn merge(&mut self, other: &NestedReport) {
        for (a, b) in self.qv_empirical.iter_mut().zip(&other.qv_empirical) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.qv_expected.iter_mut().zip(&other.qv_expected) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// `qv_empirical / qv_expected` entrywise.
    pub fn ratio(&self) -> Vec<Vec<f64>> {
        self.qv_empirical
            .iter()
            .zip(&self.qv_expected)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x / y).collect())
            .collect()
    }
}

/// Uses the steps before the first loss among alleles `1..L-1` and before
/// `X_L` reaches 1. `clock`, when given, replaces the time change
/// computed from `1 - X_L`.
pub fn nested_reduction_check(traj: &Trajectory, clock: Option<&TimeChange>) -> NestedReport {
    let l = traj.labels.len();
    let m = l - 1;
    let mut rep = NestedReport {
        times: Vec::new(),
        ratios: Vec::new(),
        qv_empirical: vec![vec![0.0; m]; m],
        qv_expected: vec![vec![0.0; m]; m],
    };
    let usable = |x: &[f64]| x[..m].iter().all(|v| *v > 0.0) && x[m] < 1.0;
    let ratio = |x: &[f64]| -> Vec<f64> { x[..m].iter().map(|v| v / (1.0 - x[m])).collect() };
    let mut a = 0.0;
    for k in 0..traj.times.len() {
        let x = &traj.states[k];
        if !usable(x) {
            break;
        }
        if k > 0 {
            let x0 = &traj.states[k - 1];
            let da = match clock {
                Some(c) => c.inverse(traj.times[k]) - c.inverse(traj.times[k - 1]),
                None => 0.5 * (1.0 / (1.0 - x0[m]) + 1.0 / (1.0 - x[m])) * (traj.times[k] - traj.times[k - 1]),
            };
            a += da;
            let (y0, y1) = (ratio(x0), ratio(x));
            for i in 0..m {
                for j in 0..m {
                    rep.qv_empirical[i][j] += (y1[i] - y0[i]) * (y1[j] - y0[j]);
                    let delta = if i == j { 1.0 } else { 0.0 };
                    rep.qv_expected[i][j] += y0[i] * (delta - y0[j]) * da;
                }
            }
        }
        rep.times.push(a);
        rep.ratios.push(ratio(x));
    }
    rep
}
