//! Octave ladders for improper integrals of non-negative integrands.
//!
//! The integral toward a boundary is split into octaves of the distance to
//! it: octave `k` covers distances `[d0 2^{-k-1}, d0 2^{-k}]` (or
//! `[d0 2^k, d0 2^{k+1}]` at infinity). A convergent power-law integrand
//! gives geometrically shrinking increments, a logarithmic divergence gives
//! constant increments and a stronger divergence gives growing ones.
//! Anything else (log-corrected borders such as `1/(y log^2(1/y))`) is
//! reported as undecided rather than guessed.

use crate::asymptotic::Approach;
use crate::quadrature::{integrate, lenient, QuadError, QuadOptions};

/// Number of octaves evaluated on every ladder.
pub const OCTAVES: usize = 40;
/// First ladder index reported in diagnostics.
pub const REPORT_FROM: usize = 8;

const WINDOW_A: (usize, usize) = (16, 28);
const WINDOW_B: (usize, usize) = (28, 40);
const CAUCHY_TOL: f64 = 1e-8;
const RATE_MIN: f64 = 0.02;
const RATE_FLAT: f64 = 2e-3;
const CONST_FIT_TOL: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct Ladder {
    pub approach: Approach,
    pub anchor: f64,
    /// Distances to the boundary (`y` itself at infinity), `cutoffs[k]` for
    /// `k = 0..=OCTAVES`.
    pub cutoffs: Vec<f64>,
    /// `increments[k]` is the integral over octave `k`; `+inf` marks overflow.
    pub increments: Vec<f64>,
}

impl Ladder {
    /// Cumulative integrals from the anchor to `cutoffs[k + 1]`.
    pub fn partials(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.increments
            .iter()
            .map(|d| {
                acc += d;
                acc
            })
            .collect()
    }

    /// `(cutoff point y, partial integral)` pairs from `REPORT_FROM` on.
    pub fn report(&self) -> Vec<(f64, f64)> {
        let partials = self.partials();
        (REPORT_FROM..self.increments.len())
            .map(|k| (self.approach.point_at(self.cutoffs[k + 1]), partials[k]))
            .collect()
    }
}

pub fn octave_bounds(approach: Approach, anchor: f64, k: usize) -> (f64, f64) {
    let s = 2f64.powi(k as i32);
    match approach {
        Approach::Infinity => (anchor * s, anchor * s * 2.0),
        _ => (anchor / s / 2.0, anchor / s),
    }
}

/// Integrate `g` over each octave in the log-distance coordinate. `g` is
/// called with the distance to the boundary (with `y` itself at infinity),
/// so charted expressions keep full precision near nonzero ends.
pub fn build_ladder<E, G>(mut g: G, approach: Approach, anchor: f64) -> Result<Ladder, QuadError<E>>
where
    G: FnMut(f64) -> Result<f64, E>,
{
    let opts = QuadOptions {
        rel_tol: 1e-10,
        abs_tol: 0.0,
        max_intervals: 400,
    };
    let mut cutoffs = vec![anchor];
    let mut increments = Vec::with_capacity(OCTAVES);
    for k in 0..OCTAVES {
        let (lo, hi) = octave_bounds(approach, anchor, k);
        cutoffs.push(match approach {
            Approach::Infinity => hi,
            _ => lo,
        });
        if increments.last() == Some(&f64::INFINITY) {
            increments.push(f64::INFINITY);
            continue;
        }
        let r = lenient(integrate(
            |t: f64| {
                let d = t.exp();
                g(d).map(|v| v * d)
            },
            lo.ln(),
            hi.ln(),
            opts,
        ));
        match r {
            Ok(v) => increments.push(v.max(0.0)),
            Err(QuadError::NonFinite { at, .. }) => {
                let d = at.exp();
                match g(d) {
                    Ok(v) if v == f64::INFINITY => increments.push(f64::INFINITY),
                    Ok(_) => return Err(QuadError::NonFinite { at: approach.point_at(d), lo, hi }),
                    Err(source) => return Err(QuadError::Integrand { at: approach.point_at(d), source }),
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Ladder {
        approach,
        anchor,
        cutoffs,
        increments,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LadderOutcome {
    /// Total including the extrapolated tail beyond the last octave.
    Convergent { total: f64, tail: f64 },
    /// `per_octave` is the fitted constant increment (log divergence) or the
    /// last increment for growing ladders; `growth` is the fitted `-rate`.
    Divergent { per_octave: f64, growth: f64 },
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assessment {
    pub outcome: LadderOutcome,
    /// Decay rates (log2 per octave) fitted on the two windows.
    pub rate_early: f64,
    pub rate_late: f64,
}

fn fit_rate(incs: &[f64], window: (usize, usize)) -> Option<f64> {
    let (a, b) = window;
    if incs.len() < b {
        return None;
    }
    let pts: Vec<(f64, f64)> = (a..b)
        .map(|k| (k as f64, incs[k]))
        .filter(|(_, v)| *v > 0.0 && v.is_finite())
        .map(|(k, v)| (k, -v.log2()))
        .collect();
    if pts.len() != b - a {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Decide convergence of the series of octave increments.
pub fn assess(incs: &[f64]) -> Assessment {
    let undecided = |a: f64, b: f64| Assessment {
        outcome: LadderOutcome::Undecided,
        rate_early: a,
        rate_late: b,
    };
    if incs.iter().any(|v| v.is_nan()) || incs.len() < WINDOW_B.1 {
        return undecided(f64::NAN, f64::NAN);
    }
    let sum: f64 = incs.iter().sum();
    if incs.iter().any(|v| *v == f64::INFINITY) || sum == f64::INFINITY {
        return Assessment {
            outcome: LadderOutcome::Divergent {
                per_octave: f64::INFINITY,
                growth: f64::INFINITY,
            },
            rate_early: f64::NEG_INFINITY,
            rate_late: f64::NEG_INFINITY,
        };
    }
    let n = incs.len();
    let last = &incs[n - 8..];
    if last.iter().all(|v| *v == 0.0) {
        return Assessment {
            outcome: LadderOutcome::Convergent { total: sum, tail: 0.0 },
            rate_early: f64::INFINITY,
            rate_late: f64::INFINITY,
        };
    }
    let last5 = &incs[n - 5..];
    let cauchy = last5.iter().all(|v| *v <= CAUCHY_TOL * (1.0 + sum.abs()))
        && last5.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
    let ra = fit_rate(incs, WINDOW_A);
    let rb = fit_rate(incs, WINDOW_B);
    let (ga, gb) = match (ra, rb) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            // some zero increments inside the windows but not at the end
            return if cauchy {
                Assessment {
                    outcome: LadderOutcome::Convergent { total: sum, tail: 0.0 },
                    rate_early: f64::NAN,
                    rate_late: f64::NAN,
                }
            } else {
                undecided(f64::NAN, f64::NAN)
            };
        }
    };
    let stable = (ga - gb).abs() <= 0.1 * gb.abs() + RATE_FLAT;
    if gb > RATE_MIN && (stable || gb > ga) {
        let rho = 2f64.powf(-gb);
        let tail = incs[n - 1] * rho / (1.0 - rho);
        return Assessment {
            outcome: LadderOutcome::Convergent { total: sum + tail, tail },
            rate_early: ga,
            rate_late: gb,
        };
    }
    if cauchy && gb > 0.0 {
        return Assessment {
            outcome: LadderOutcome::Convergent { total: sum, tail: 0.0 },
            rate_early: ga,
            rate_late: gb,
        };
    }
    if gb < -RATE_MIN && (stable || gb < ga) {
        return Assessment {
            outcome: LadderOutcome::Divergent {
                per_octave: incs[n - 1],
                growth: -gb,
            },
            rate_early: ga,
            rate_late: gb,
        };
    }
    if ga.abs() <= RATE_FLAT && gb.abs() <= RATE_FLAT {
        let w = &incs[WINDOW_A.0..WINDOW_B.1];
        let c = w.iter().sum::<f64>() / w.len() as f64;
        let resid = w.iter().map(|v| (v - c).abs() / c).fold(0.0, f64::max);
        if c > 0.0 && resid < CONST_FIT_TOL {
            return Assessment {
                outcome: LadderOutcome::Divergent {
                    per_octave: c,
                    growth: 0.0,
                },
                rate_early: ga,
                rate_late: gb,
            };
        }
    }
    undecided(ga, gb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn ladder_of(g: impl Fn(f64) -> f64, approach: Approach) -> Ladder {
        build_ladder(|y| Ok::<_, Infallible>(g(y)), approach, 1.0).unwrap()
    }

    #[test]
    fn power_laws_at_zero() {
        let at0 = Approach::FromAbove(0.0);
        for (alpha, expect) in [(0.5, true), (0.9, true), (1.0, false), (1.1, false), (2.0, false)] {
            let l = ladder_of(|y| y.powf(-alpha), at0);
            let a = assess(&l.increments);
            match a.outcome {
                LadderOutcome::Convergent { total, .. } => {
                    assert!(expect, "alpha {alpha}");
                    let exact = 1.0 / (1.0 - alpha);
                    assert!((total - exact).abs() / exact < 1e-8, "{total} vs {exact}");
                }
                LadderOutcome::Divergent { .. } => assert!(!expect, "alpha {alpha}"),
                LadderOutcome::Undecided => panic!("undecided for alpha {alpha}"),
            }
        }
    }

    #[test]
    fn log_borders_are_undecided() {
        let at0 = Approach::FromAbove(0.0);
        // anchor 1 would hit log(1) = 0, so shift the anchor
        let l = build_ladder(|y: f64| Ok::<_, Infallible>(1.0 / (y * (1.0 / y).ln().powi(2))), at0, 0.5).unwrap();
        assert_eq!(assess(&l.increments).outcome, LadderOutcome::Undecided);
        let l = build_ladder(|y: f64| Ok::<_, Infallible>(1.0 / (y * (1.0 / y).ln())), at0, 0.5).unwrap();
        assert_eq!(assess(&l.increments).outcome, LadderOutcome::Undecided);
    }

    #[test]
    fn near_border_exponent_is_undecided_not_wrong() {
        let l = ladder_of(|y| y.powf(-0.99), Approach::FromAbove(0.0));
        assert_eq!(assess(&l.increments).outcome, LadderOutcome::Undecided);
    }

    #[test]
    fn infinity_and_compact_support() {
        let l = ladder_of(|y| y.powf(-2.0), Approach::Infinity);
        match assess(&l.increments).outcome {
            LadderOutcome::Convergent { total, .. } => assert!((total - 1.0).abs() < 1e-8),
            o => panic!("{o:?}"),
        }
        let l = ladder_of(|y| (-y).exp(), Approach::Infinity);
        assert!(matches!(assess(&l.increments).outcome, LadderOutcome::Convergent { .. }));
        let l = ladder_of(|y| if y > 3.0 { 0.0 } else { 1.0 }, Approach::Infinity);
        assert!(matches!(assess(&l.increments).outcome, LadderOutcome::Convergent { .. }));
        let l = ladder_of(|y| y.exp(), Approach::Infinity);
        assert!(matches!(assess(&l.increments).outcome, LadderOutcome::Divergent { .. }));
    }

    #[test]
    fn report_starts_at_eight() {
        let l = ladder_of(|y| y.powf(-0.5), Approach::FromAbove(0.0));
        let r = l.report();
        assert_eq!(r.len(), OCTAVES - REPORT_FROM);
        assert!((r[0].0 - 2f64.powi(-9)).abs() < 1e-18);
    }
}
