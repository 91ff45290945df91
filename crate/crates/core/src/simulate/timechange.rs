use super::engine::{SimError, Trajectory};
use crate::expr::CoefficientExpr;

/// `tau` inverting `A(u) = ∫_0^u 1 / f(N_s) ds` on the recorded grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeChange {
    /// Original times `u_k`.
    pub u: Vec<f64>,
    /// `A(u_k)`, strictly increasing.
    pub a: Vec<f64>,
}

/// Time change of a path whose component 0 is `N`. Samples from the
/// absorption of `N` on are left out, so `t_max` is `A` at the last
/// sample with `N > 0`.
pub fn build_time_change(traj: &Trajectory, f: &CoefficientExpr) -> Result<TimeChange, SimError> {
    let mut u = Vec::with_capacity(traj.times.len());
    let mut a: Vec<f64> = Vec::with_capacity(traj.times.len());
    let mut prev: Option<(f64, f64)> = None;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let n = s[0];
        if n <= 0.0 {
            break;
        }
        let fv = f.eval(n).map_err(|source| SimError::Eval { at: n, source })?;
        if !(fv > 0.0) {
            return Err(SimError::TimeChange { at: n, value: fv });
        }
        let g = 1.0 / fv;
        let acc = match prev {
            None => 0.0,
            Some((t0, g0)) => {
                let next = a[a.len() - 1] + 0.5 * (g0 + g) * (t - t0);
                if !(next > a[a.len() - 1]) || !next.is_finite() {
                    return Err(SimError::TimeChange { at: n, value: fv });
                }
                next
            }
        };
        u.push(*t);
        a.push(acc);
        prev = Some((*t, g));
    }
    if u.is_empty() {
        return Err(SimError::InitialCondition("path starts at the boundary".into()));
    }
    Ok(TimeChange { u, a })
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|v| *v <= x);
    if i == 0 {
        return ys[0];
    }
    if i == xs.len() {
        return ys[xs.len() - 1];
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    ys[i - 1] + (ys[i] - ys[i - 1]) * (x - x0) / (x1 - x0)
}

impl TimeChange {
    pub fn t_max(&self) -> f64 {
        self.a[self.a.len() - 1]
    }

    /// `tau(t)`, clamped to the recorded range.
    pub fn tau(&self, t: f64) -> f64 {
        interp(&self.a, &self.u, t)
    }

    /// `A(u)`, the inverse of `tau`.
    pub fn inverse(&self, u: f64) -> f64 {
        interp(&self.u, &self.a, u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use crate::simulate::{simulate_1d, SimConfig};
    use crate::scale::DiffusionSpec;

    fn flat(n: f64, len: usize) -> Trajectory {
        let t = simulate_1d(&DiffusionSpec::brownian(), 1.0, &SimConfig::default(), &[], 0).unwrap();
        Trajectory {
            times: (0..len).map(|k| k as f64 * 0.01).collect(),
            states: vec![vec![n]; len],
            integrals: vec![vec![]; len],
            ..t
        }
    }

    #[test]
    fn constant_population() {
        let tc = build_time_change(&flat(2.5, 101), &parse_expr("y").unwrap()).unwrap();
        for t in [0.0, 0.1, 0.3, 0.4] {
            assert!((tc.tau(t) - 2.5 * t).abs() < 1e-12);
        }
        let id = build_time_change(&flat(2.5, 101), &parse_expr("1").unwrap()).unwrap();
        assert!((id.tau(0.7) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn logistic_path_self_consistent() {
        let cfg = SimConfig {
            absorption_eps: 1e-8,
            ..SimConfig::default()
        };
        let t = simulate_1d(&DiffusionSpec::logistic(-1.0, 0.1), 1.0, &cfg, &[], 4).unwrap();
        let tc = build_time_change(&t, &parse_expr("y").unwrap()).unwrap();
        let tm = tc.t_max();
        for k in 0..100 {
            let s = tm * k as f64 / 99.0;
            let back = tc.inverse(tc.tau(s));
            assert!((back - s).abs() <= 1e-6 * s.max(1e-300), "{s} {back}");
        }
    }

    #[test]
    fn blow_up_is_an_error() {
        let bad = build_time_change(&flat(1.0, 10), &parse_expr("0*y").unwrap());
        assert!(matches!(bad, Err(SimError::TimeChange { .. })));
    }
}
