//! Power-law asymptotics of coefficient expressions near a boundary point.
//!
//! Each node of the expression tree is expanded into a truncated generalized
//! power series `sum c_i u^{e_i} + O(u^order)` in the distance `u` to the
//! boundary (`u = 1/y` at infinity). The leading term gives the exponent and
//! coefficient. Nodes that produce logarithms or essential singularities
//! cannot be expanded; for those the exponent is fitted numerically from a
//! log-log regression instead.

use std::fmt;

use thiserror::Error;

use crate::expr::{CoefficientExpr, Func, Func2, Node};

const MAX_TERMS: usize = 8;
const EXP_TOL: f64 = 1e-12;
const CANCEL_TOL: f64 = 1e-13;

/// Where the free variable goes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Approach {
    /// `y -> a+`
    FromAbove(f64),
    /// `y -> b-`
    FromBelow(f64),
    /// `y -> +inf`
    Infinity,
}

impl Approach {
    /// The point `y` at distance `d` from the boundary (`y = d` at infinity).
    pub fn point_at(&self, d: f64) -> f64 {
        match *self {
            Approach::FromAbove(a) => a + d,
            Approach::FromBelow(b) => b - d,
            Approach::Infinity => d,
        }
    }

    pub fn boundary(&self) -> f64 {
        match *self {
            Approach::FromAbove(a) => a,
            Approach::FromBelow(b) => b,
            Approach::Infinity => f64::INFINITY,
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Approach::FromAbove(a) => write!(f, "{a}+"),
            Approach::FromBelow(b) => write!(f, "{b}-"),
            Approach::Infinity => write!(f, "+inf"),
        }
    }
}

/// `expr(y) ~ leading_coeff * dist^exponent`, where `dist = |y - boundary|`
/// for finite boundaries and `dist = y` at infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticExponent {
    pub boundary: f64,
    pub exponent: f64,
    pub leading_coeff: f64,
    pub exact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ExponentError {
    #[error("expression vanishes identically near the boundary")]
    IdenticallyZero,
    #[error("no power-law exponent near the boundary")]
    Undetermined,
}

/// Truncated series `sum c u^e + O(u^order)` with exponents ascending and
/// all below `order`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Series {
    terms: Vec<(f64, f64)>,
    order: f64,
}

impl Series {
    fn zero() -> Self {
        Series {
            terms: Vec::new(),
            order: f64::INFINITY,
        }
    }

    fn constant(c: f64) -> Self {
        if c == 0.0 {
            Self::zero()
        } else {
            Series {
                terms: vec![(c, 0.0)],
                order: f64::INFINITY,
            }
        }
    }

    fn from_terms(mut terms: Vec<(f64, f64)>, order: f64) -> Self {
        terms.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let mut merged: Vec<(f64, f64, f64)> = Vec::new(); // coeff, exp, scale
        for (c, e) in terms {
            if e >= order - EXP_TOL {
                continue;
            }
            match merged.last_mut() {
                Some(last) if (last.1 - e).abs() <= EXP_TOL => {
                    last.0 += c;
                    last.2 = last.2.max(c.abs());
                }
                _ => merged.push((c, e, c.abs())),
            }
        }
        let mut out: Vec<(f64, f64)> = merged
            .into_iter()
            .filter(|(c, _, scale)| c.abs() > CANCEL_TOL * scale)
            .map(|(c, e, _)| (c, e))
            .collect();
        let mut order = order;
        if out.len() > MAX_TERMS {
            order = order.min(out[MAX_TERMS].1);
            out.truncate(MAX_TERMS);
        }
        Series { terms: out, order }
    }

    pub(crate) fn is_zero(&self) -> bool {
        self.terms.is_empty() && self.order.is_infinite()
    }

    pub(crate) fn leading(&self) -> Option<(f64, f64)> {
        self.terms.first().copied()
    }

    fn neg(&self) -> Self {
        Series {
            terms: self.terms.iter().map(|&(c, e)| (-c, e)).collect(),
            order: self.order,
        }
    }

    fn add(&self, o: &Series) -> Self {
        let mut t = self.terms.clone();
        t.extend_from_slice(&o.terms);
        Self::from_terms(t, self.order.min(o.order))
    }

    fn mul(&self, o: &Series) -> Option<Self> {
        if self.is_zero() || o.is_zero() {
            return Some(Self::zero());
        }
        let (_, la) = self.leading()?;
        let (_, lb) = o.leading()?;
        let order = (self.order + lb).min(o.order + la);
        let mut t = Vec::with_capacity(self.terms.len() * o.terms.len());
        for &(c1, e1) in &self.terms {
            for &(c2, e2) in &o.terms {
                t.push((c1 * c2, e1 + e2));
            }
        }
        Some(Self::from_terms(t, order))
    }

    /// Split as `c u^p (1 + r)`, `r` with strictly positive exponents.
    fn factor(&self) -> Option<(f64, f64, Series)> {
        let (c, p) = self.leading()?;
        let rest: Vec<(f64, f64)> = self.terms[1..].iter().map(|&(ci, ei)| (ci / c, ei - p)).collect();
        Some((c, p, Series::from_terms(rest, self.order - p)))
    }

    /// `sum_k coeffs[k] r^k` truncated at r's own order.
    fn compose_power_series(r: &Series, coeffs: impl Fn(usize) -> f64) -> Option<Series> {
        let mut total = Series::constant(coeffs(0));
        if r.is_zero() {
            return Some(total);
        }
        let order = r.order;
        let min_e = match r.leading() {
            Some((_, e)) => e,
            None => return Some(Series::from_terms(total.terms, order.min(total.order))),
        };
        if min_e <= 0.0 {
            return None;
        }
        let mut power = Series::constant(1.0);
        let mut k = 1;
        loop {
            power = power.mul(r)?;
            if power.is_zero() {
                break;
            }
            let lead = power.leading().map(|(_, e)| e).unwrap_or(f64::INFINITY);
            if lead >= order || k > 64 {
                break;
            }
            let ck = coeffs(k);
            let scaled = Series {
                terms: power.terms.iter().map(|&(c, e)| (c * ck, e)).collect(),
                order: power.order,
            };
            total = total.add(&scaled);
            k += 1;
        }
        let o = total.order.min(order);
        Some(Series::from_terms(total.terms, o))
    }

    fn powf(&self, q: f64) -> Option<Self> {
        if self.is_zero() {
            return if q > 0.0 { Some(Self::zero()) } else { None };
        }
        let (c, p, r) = self.factor()?;
        if c < 0.0 && q.fract() != 0.0 {
            return None;
        }
        let cq = if c < 0.0 { c.abs().powf(q) * if (q as i64) % 2 == 0 { 1.0 } else { -1.0 } } else { c.powf(q) };
        let tail = Self::compose_power_series(&r, |k| binom(q, k))?;
        let scaled = Series {
            terms: tail.terms.iter().map(|&(ci, ei)| (ci * cq, ei + p * q)).collect(),
            order: tail.order + p * q,
        };
        Some(scaled)
    }

    fn recip(&self) -> Option<Self> {
        self.powf(-1.0)
    }

    fn exp(&self) -> Option<Self> {
        if self.is_zero() {
            return Some(Self::constant(1.0));
        }
        if self.order <= 0.0 {
            return None;
        }
        if self.terms.iter().any(|&(_, e)| e < -EXP_TOL) {
            return None;
        }
        let c0: f64 = self.terms.iter().filter(|t| t.1.abs() <= EXP_TOL).map(|t| t.0).sum();
        let rest: Vec<(f64, f64)> = self.terms.iter().copied().filter(|t| t.1 > EXP_TOL).collect();
        let r = Series::from_terms(rest, self.order);
        let tail = Self::compose_power_series(&r, |k| 1.0 / factorial(k))?;
        let m = c0.exp();
        if !m.is_finite() {
            return None;
        }
        Some(Series {
            terms: tail.terms.iter().map(|&(c, e)| (c * m, e)).collect(),
            order: tail.order,
        })
    }

    fn ln(&self) -> Option<Self> {
        let (c, p, r) = self.factor()?;
        if c <= 0.0 || p.abs() > EXP_TOL {
            return None;
        }
        let tail = Self::compose_power_series(&r, |k| {
            if k == 0 {
                0.0
            } else if k % 2 == 1 {
                1.0 / k as f64
            } else {
                -1.0 / k as f64
            }
        })?;
        Some(Series::constant(c.ln()).add(&tail))
    }

    fn abs(&self) -> Option<Self> {
        if self.is_zero() {
            return Some(Self::zero());
        }
        let (c, _) = self.leading()?;
        Some(if c < 0.0 { self.neg() } else { self.clone() })
    }

    /// Sign of `self - other` near the boundary.
    fn compare(&self, other: &Series) -> Option<std::cmp::Ordering> {
        let d = self.add(&other.neg());
        if d.is_zero() {
            return Some(std::cmp::Ordering::Equal);
        }
        let (c, _) = d.leading()?;
        Some(if c > 0.0 {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Less
        })
    }
}

fn binom(q: f64, k: usize) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r *= (q - i as f64) / (i as f64 + 1.0);
    }
    r
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

fn var_series(approach: Approach) -> Series {
    match approach {
        Approach::FromAbove(a) => Series::from_terms(vec![(a, 0.0), (1.0, 1.0)], f64::INFINITY),
        Approach::FromBelow(b) => Series::from_terms(vec![(b, 0.0), (-1.0, 1.0)], f64::INFINITY),
        Approach::Infinity => Series::from_terms(vec![(1.0, -1.0)], f64::INFINITY),
    }
}

pub(crate) fn expand(node: &Node, approach: Approach) -> Option<Series> {
    match node {
        Node::Const(c) => Some(Series::constant(*c)),
        Node::Var => Some(var_series(approach)),
        Node::Neg(a) => Some(expand(a, approach)?.neg()),
        Node::Add(a, b) => Some(expand(a, approach)?.add(&expand(b, approach)?)),
        Node::Sub(a, b) => Some(expand(a, approach)?.add(&expand(b, approach)?.neg())),
        Node::Mul(a, b) => expand(a, approach)?.mul(&expand(b, approach)?),
        Node::Div(a, b) => {
            let num = expand(a, approach)?;
            if num.is_zero() {
                return Some(Series::zero());
            }
            num.mul(&expand(b, approach)?.recip()?)
        }
        Node::Pow(a, p) => expand(a, approach)?.powf(*p),
        Node::Call(f, a) => {
            let s = expand(a, approach)?;
            match f {
                Func::Exp => s.exp(),
                Func::Log => s.ln(),
                Func::Sqrt => s.powf(0.5),
                Func::Abs => s.abs(),
            }
        }
        Node::Call2(f, a, b) => {
            let sa = expand(a, approach)?;
            let sb = expand(b, approach)?;
            let ord = sa.compare(&sb)?;
            let take_a = match f {
                Func2::Min => ord != std::cmp::Ordering::Greater,
                Func2::Max => ord != std::cmp::Ordering::Less,
            };
            Some(if take_a { sa } else { sb })
        }
    }
}

/// Symbolic leading term: `Ok(Some((coeff, u_exponent)))`, `Ok(None)` when
/// the expression vanishes identically, `Err` when undecidable.
pub(crate) fn symbolic_leading(
    e: &CoefficientExpr,
    approach: Approach,
) -> Result<Option<(f64, f64)>, ExponentError> {
    let s = expand(e.root(), approach).ok_or(ExponentError::Undetermined)?;
    if s.is_zero() {
        return Ok(None);
    }
    s.leading().map(Some).ok_or(ExponentError::Undetermined)
}

/// Least-squares slope of `log2|expr|` against `log2(dist)` on the ladder
/// `dist = 2^{-k}` (or `y = 2^k` at infinity), `k = 16..=30`.
pub fn fit_exponent(e: &CoefficientExpr, approach: Approach) -> Result<AsymptoticExponent, ExponentError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut sign = 0.0;
    for k in 16..=30 {
        let d = match approach {
            Approach::Infinity => 2f64.powi(k),
            _ => 2f64.powi(-k),
        };
        let v = e.eval(approach.point_at(d)).map_err(|_| ExponentError::Undetermined)?;
        if v == 0.0 {
            return Err(ExponentError::Undetermined);
        }
        if sign == 0.0 {
            sign = v.signum();
        } else if v.signum() != sign {
            return Err(ExponentError::Undetermined);
        }
        xs.push(d.log2());
        ys.push(v.abs().log2());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let resid = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    if resid >= 1e-3 {
        return Err(ExponentError::Undetermined);
    }
    Ok(AsymptoticExponent {
        boundary: approach.boundary(),
        exponent: slope,
        leading_coeff: sign * intercept.exp2(),
        exact: false,
    })
}

/// Power-law asymptotics of `e` as `y` approaches the boundary.
pub fn exponent_at(e: &CoefficientExpr, approach: Approach) -> Result<AsymptoticExponent, ExponentError> {
    match symbolic_leading(e, approach) {
        Ok(Some((c, ue))) => Ok(AsymptoticExponent {
            boundary: approach.boundary(),
            exponent: if approach == Approach::Infinity { -ue } else { ue },
            leading_coeff: c,
            exact: true,
        }),
        Ok(None) => Err(ExponentError::IdenticallyZero),
        Err(_) => fit_exponent(e, approach),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn at0(s: &str) -> AsymptoticExponent {
        exponent_at(&parse_expr(s).unwrap(), Approach::FromAbove(0.0)).unwrap()
    }

    #[test]
    fn reciprocal_at_zero() {
        let a = at0("1/y");
        assert!(a.exact);
        assert_eq!(a.exponent, -1.0);
        assert_eq!(a.leading_coeff, 1.0);
    }

    #[test]
    fn analyzable_product() {
        let a = at0("2*y^(0.5)/ (1 - y)");
        assert!(a.exact);
        assert!((a.exponent - 0.5).abs() < 1e-15);
        assert!((a.leading_coeff - 2.0).abs() < 1e-15);
    }

    #[test]
    fn exp_factor_has_unit_coefficient() {
        let a = at0("y^(0.6)*exp(y)");
        assert!(a.exact);
        assert!((a.exponent - 0.6).abs() < 1e-15);
        assert!((a.leading_coeff - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cancellation_at_finite_point() {
        let e = parse_expr("1 - y").unwrap();
        let a = exponent_at(&e, Approach::FromBelow(1.0)).unwrap();
        assert_eq!((a.exponent, a.leading_coeff), (1.0, 1.0));
        let e = parse_expr("y*(1-y)").unwrap();
        let a = exponent_at(&e, Approach::FromBelow(1.0)).unwrap();
        assert_eq!((a.exponent, a.leading_coeff), (1.0, 1.0));
        let e = parse_expr("sqrt(y*(1-y))^2/(1-y)^2").unwrap();
        let a = exponent_at(&e, Approach::FromBelow(1.0)).unwrap();
        assert!((a.exponent + 1.0).abs() < 1e-12);
    }

    #[test]
    fn infinity_exponents() {
        let e = parse_expr("y*(1 - 0.1*y)").unwrap();
        let a = exponent_at(&e, Approach::Infinity).unwrap();
        assert!((a.exponent - 2.0).abs() < 1e-12);
        assert!((a.leading_coeff + 0.1).abs() < 1e-12);
        let e = parse_expr("0.25/y").unwrap();
        let a = exponent_at(&e, Approach::Infinity).unwrap();
        assert_eq!((a.exponent, a.leading_coeff), (-1.0, 0.25));
    }

    #[test]
    fn log_falls_back_to_fit_or_fails() {
        // y*log(y) has no power law; the fit must not report exact.
        let e = parse_expr("1/(y*log(1/y)^2)").unwrap();
        match exponent_at(&e, Approach::FromAbove(0.0)) {
            Ok(a) => assert!(!a.exact),
            Err(err) => assert_eq!(err, ExponentError::Undetermined),
        }
    }

    #[test]
    fn zero_and_min_max() {
        let e = parse_expr("min(1, max(0, 2 - 2*y))").unwrap();
        let a = exponent_at(&e, Approach::FromAbove(0.0)).unwrap();
        assert_eq!((a.exponent, a.leading_coeff), (0.0, 1.0));
        assert_eq!(exponent_at(&e, Approach::Infinity), Err(ExponentError::IdenticallyZero));
        let e = parse_expr("y - y").unwrap();
        assert_eq!(exponent_at(&e, Approach::FromAbove(0.0)), Err(ExponentError::IdenticallyZero));
    }

    #[test]
    fn exact_leading_term_matches_ladder() {
        for s in ["y^(0.3)*(2 + y)", "sqrt(y)/(y + y^2)", "exp(-2*y)*y^(1.5)", "y^(-0.8)*(1+3*y)^2"] {
            let e = parse_expr(s).unwrap();
            let a = at0(s);
            let r = |y: f64| e.eval(y).unwrap() / (a.leading_coeff * y.powf(a.exponent));
            let r28 = r(2f64.powi(-28));
            let r30 = r(2f64.powi(-30));
            assert!((r28 - r30).abs() / r30.abs() < 1e-6, "{s}");
            assert!((r30 - 1.0).abs() < 1e-6, "{s}");
        }
    }
}
