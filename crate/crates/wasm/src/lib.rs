//! Browser bindings: classify a perpetual integral, report the boundary
//! behaviour, and simulate one path.

use perpetual::classifier::{classify_boundaries, classify_perpetual_two_sided, classify_perpetual_zero};
use perpetual::scale::{DiffusionSpec, Domain, End, ScaleSpeed};
use perpetual::simulate::{simulate_1d, SimConfig};
use perpetual::CoefficientExpr;
use wasm_bindgen::prelude::*;

fn expr(s: &str) -> Result<CoefficientExpr, String> {
    CoefficientExpr::parse(s).map_err(|e| format!("{s}: {e}"))
}

fn model(sigma: &str, drift: &str, right: Option<f64>) -> Result<DiffusionSpec, String> {
    let (domain, c) = match right {
        Some(b) => (Domain::interval(0.0, b), 0.5 * b),
        None => (Domain::half_line(0.0), 1.0),
    };
    DiffusionSpec::new(expr(sigma)?, expr(drift)?, domain, c).map_err(|e| e.to_string())
}

/// `right` is the upper end of `(0, right)`; non-finite or non-positive
/// means the half line.
fn right_end(right: f64) -> Option<f64> {
    (right.is_finite() && right > 0.0).then_some(right)
}

pub fn classify_text(sigma: &str, drift: &str, right: f64, f: &str, at_right: bool) -> Result<String, String> {
    let spec = model(sigma, drift, right_end(right))?;
    let f = expr(f)?;
    let v = match (spec.domain.right, at_right) {
        (None, false) => classify_perpetual_zero(&spec, &f),
        (None, true) => return Err("the half line has no finite right end".into()),
        (Some(_), r) => classify_perpetual_two_sided(&spec, &f, if r { End::Right } else { End::Left }),
    }
    .map_err(|e| e.to_string())?;
    Ok(v.to_string())
}

pub fn boundary_text(sigma: &str, drift: &str, right: f64) -> Result<String, String> {
    let spec = model(sigma, drift, right_end(right))?;
    let ss = ScaleSpeed::build(&spec).map_err(|e| e.to_string())?;
    classify_boundaries(&ss).map(|r| r.to_string()).map_err(|e| e.to_string())
}

/// Flat `[t0, y0, t1, y1, ...]`, at most about `max_points` pairs.
pub fn path_points(
    sigma: &str,
    drift: &str,
    right: f64,
    x0: f64,
    seed: u64,
    dt: f64,
    budget: f64,
    max_points: usize,
) -> Result<Vec<f64>, String> {
    let spec = model(sigma, drift, right_end(right))?;
    let steps = (budget / dt).ceil().max(1.0) as usize;
    let cfg = SimConfig {
        dt,
        t_budget: budget,
        seed,
        absorption_eps: 1e-9,
        record_stride: (steps / max_points.max(2)).max(1),
        ..SimConfig::default()
    };
    let t = simulate_1d(&spec, x0, &cfg, &[], 0).map_err(|e| e.to_string())?;
    Ok(t.times.iter().zip(&t.states).flat_map(|(t, s)| [*t, s[0]]).collect())
}

#[wasm_bindgen]
pub fn classify(sigma: &str, drift: &str, right: f64, f: &str, at_right: bool) -> Result<String, JsValue> {
    classify_text(sigma, drift, right, f, at_right).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn boundary(sigma: &str, drift: &str, right: f64) -> Result<String, JsValue> {
    boundary_text(sigma, drift, right).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    sigma: &str,
    drift: &str,
    right: f64,
    x0: f64,
    seed: u32,
    dt: f64,
    budget: f64,
    max_points: usize,
) -> Result<Vec<f64>, JsValue> {
    path_points(sigma, drift, right, x0, seed as u64, dt, budget, max_points).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_from_text() {
        let s = classify_text("sqrt(y)", "0.25", f64::INFINITY, "1/y", false).unwrap();
        assert!(s.contains("outcome: InfiniteAS"));
        let s = classify_text("sqrt(y*(1-y))", "0", 1.0, "1/(1-y)", true).unwrap();
        assert!(s.contains("outcome: InfiniteAS"));
        assert!(classify_text("sqrt(y)", "0", f64::INFINITY, "1", true).is_err());
        assert!(classify_text("sqrt(", "0", f64::INFINITY, "1", false).is_err());
    }

    #[test]
    fn boundary_from_text() {
        let s = boundary_text("sqrt(y)", "0.75", 0.0).unwrap();
        assert!(s.contains("absorbed in finite time: false"));
    }

    #[test]
    fn path_is_thinned_and_reproducible() {
        let a = path_points("1", "0", f64::INFINITY, 1.0, 3, 1e-3, 50.0, 200).unwrap();
        assert_eq!(a, path_points("1", "0", f64::INFINITY, 1.0, 3, 1e-3, 50.0, 200).unwrap());
        assert!(a.len() / 2 <= 1002);
        assert_eq!((a[0], a[1]), (0.0, 1.0));
    }
}
