//! Acceptance suite. Each criterion prints one `PASS` or `FAIL` line; the
//! binary exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use perpetual::classifier::{
    classify_boundaries, classify_fixation_before_extinction, classify_perpetual_zero, green_expectation,
    moment_bound, Outcome,
};
use perpetual::experiments::{
    estimate_moments, run_criterion_validation, run_figure2_sweep, run_successive_extinctions, ExperimentConfig,
    LadderCounts,
};
use perpetual::scale::{DiffusionSpec, End, Extended, ScaleSpeed, Tri};
use perpetual::simulate::{run_indexed, simulate_1d, simulate_multiallele, MultialleleSummary, SimConfig};
use perpetual::CoefficientExpr;

type Check = Result<String, String>;

fn p(s: &str) -> CoefficientExpr {
    CoefficientExpr::parse(s).unwrap()
}

fn finite(e: Extended) -> f64 {
    match e {
        Extended::Finite(v) => v,
        other => panic!("expected a finite value, got {other}"),
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    if t <= limit {
        Ok(())
    } else {
        Err(format!("took {t:.1?}, limit {limit:?}"))
    }
}

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
fn simpson(g: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = g(a) + g(b);
    for i in 1..n {
        s += g(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn c1_example_grid() -> Check {
    let start = Instant::now();
    let mut wrong = Vec::new();
    for beta in [0.1, 0.25, 0.4] {
        for alpha in [0.5, 0.9, 1.0, 1.1, 2.0] {
            let expected = if alpha >= 1.0 { Outcome::InfiniteAS } else { Outcome::FiniteAS };
            let spec = DiffusionSpec::branching_immigration(beta);
            let got = classify_perpetual_zero(&spec, &p(&format!("y^(-{alpha:?})")))
                .map(|v| v.outcome)
                .map_err(|e| e.to_string())?;
            if got != expected {
                wrong.push(format!("beta {beta} alpha {alpha}: {got}"));
            }
        }
    }
    within(start, Duration::from_secs(10))?;
    if wrong.is_empty() {
        Ok(format!("15/15 cells in {:.2?}", start.elapsed()))
    } else {
        Err(wrong.join("; "))
    }
}

fn c2_boundaries() -> Check {
    let start = Instant::now();
    let mut out = Vec::new();
    for beta in [0.25, 0.5, 0.75] {
        let ss = ScaleSpeed::build(&DiffusionSpec::branching_immigration(beta)).map_err(|e| e.to_string())?;
        let got = classify_boundaries(&ss).map_err(|e| e.to_string())?.absorbed_in_finite_time;
        let ok = if beta < 0.5 { got == Tri::True } else { got != Tri::True };
        if !ok {
            return Err(format!("beta {beta}: absorbed = {got}"));
        }
        out.push(format!("{beta}: {got}"));
    }
    within(start, Duration::from_secs(5))?;
    Ok(out.join(", "))
}

fn c3_fixation_criterion() -> Check {
    let start = Instant::now();
    let mut out = Vec::new();
    for eps in [0.0, 0.1, 0.25, 0.4] {
        let sigma = if eps == 0.0 { p("sqrt(y)") } else { p(&format!("y^{:?}", (1.0 - eps) / 2.0)) };
        let got = classify_fixation_before_extinction(&sigma, &p("y")).map_err(|e| e.to_string())?.outcome;
        let expected = if eps == 0.0 { Outcome::InfiniteAS } else { Outcome::FiniteAS };
        if got != expected {
            return Err(format!("eps {eps}: {got}"));
        }
        out.push(format!("{eps}: {got}"));
    }
    within(start, Duration::from_secs(5))?;
    Ok(format!("4/4 ({})", out.join(", ")))
}

fn c4_figure2_trend() -> Check {
    let start = Instant::now();
    let cfg = ExperimentConfig::figure2();
    let s = run_figure2_sweep(&cfg).map_err(|e| e.to_string())?;
    let counts: Vec<String> = s
        .cells
        .iter()
        .map(|c| format!("eps {}: {}/{}", c.param("eps").unwrap(), c.counts.extinction_first, c.counts.total()))
        .collect();
    let z: Vec<String> = s.trends.iter().map(|t| format!("{}->{}: z = {:.2}", t.low, t.high, t.z)).collect();
    let detail = format!("{}; {} (n0 {}, x0 {})", counts.join(", "), z.join(", "), cfg.n0, cfg.x0);
    within(start, Duration::from_secs(600))?;
    if s.trends.iter().all(|t| t.significant) {
        Ok(detail)
    } else {
        Err(format!("trend not significant at 1%: {detail}"))
    }
}

fn bump() -> CoefficientExpr {
    p("min(1, max(0, 2 - 2*y))")
}

fn brownian_sim(cap: f64) -> SimConfig {
    SimConfig {
        dt: 1e-3,
        absorption_eps: 1e-9,
        bridge_test: true,
        excursion_cap: Some(cap),
        record_stride: 0,
        t_budget: 1e6,
        ..SimConfig::default()
    }
}

fn c5_moment_bound() -> Check {
    let start = Instant::now();
    let spec = DiffusionSpec::brownian();
    let f = bump();
    let b = moment_bound(&spec, &f, 2).map_err(|e| e.to_string())?;
    let i = finite(b.integral);
    // ∫ y f(y) 2 dy for the bump
    let oracle = simpson(|y| 2.0 * y * (2.0 - 2.0 * y).clamp(0.0, 1.0), 0.0, 0.5, 2000)
        + simpson(|y| 2.0 * y * (2.0 - 2.0 * y).clamp(0.0, 1.0), 0.5, 1.0, 2000);
    if (i - oracle).abs() > 1e-8 {
        return Err(format!("integral {i} vs {oracle}"));
    }
    let (m, counts) = estimate_moments(&spec, &f, 0.5, &brownian_sim(1.0), 100_000, None, &[1, 2])
        .map_err(|e| e.to_string())?;
    if counts.undecided > 0 {
        return Err(format!("{} paths not absorbed", counts.undecided));
    }
    let mut out = Vec::new();
    for est in &m {
        let bound = finite(b.with_order(est.order).bound);
        let ok = est.mean <= bound + 3.0 * est.std_error;
        out.push(format!(
            "m{} = {:.4} ± {:.4} vs bound {:.4}",
            est.order, est.mean, est.std_error, bound
        ));
        if !ok {
            return Err(out.join(", "));
        }
    }
    within(start, Duration::from_secs(300))?;
    Ok(out.join(", "))
}

fn c6_green_calibration() -> Check {
    let start = Instant::now();
    let spec = DiffusionSpec::brownian();
    let cases: [(f64, &str, fn(f64) -> f64, f64); 3] = [
        (0.5, "min(1, max(0, 2 - 2*y))", |y| (2.0 - 2.0 * y).clamp(0.0, 1.0), 1.0),
        (0.25, "max(0, 1 - y)", |y| (1.0 - y).max(0.0), 1.0),
        (1.5, "y*max(0, 2 - y)", |y| y * (2.0 - y).max(0.0), 2.0),
    ];
    let mut out = Vec::new();
    for (k, (x, text, fv, cap)) in cases.into_iter().enumerate() {
        let f = p(text);
        let green = finite(green_expectation(&spec, &f, x).map_err(|e| e.to_string())?);
        // E_x ∫ f = ∫ (x ∧ y) f(y) 2 dy
        let oracle = simpson(|y| 2.0 * y.min(x) * fv(y), 0.0, x, 4000) + simpson(|y| 2.0 * x * fv(y), x, cap, 4000);
        if (green - oracle).abs() > 1e-7 * oracle.max(1.0) {
            return Err(format!("case {k}: quadrature {green} vs oracle {oracle}"));
        }
        let sim = SimConfig {
            seed: perpetual::rng::DEFAULT_SEED ^ (k as u64 + 1),
            ..brownian_sim(cap)
        };
        let (m, _) = estimate_moments(&spec, &f, x, &sim, 40_000, None, &[1]).map_err(|e| e.to_string())?;
        let z = (m[0].mean - green) / m[0].std_error;
        out.push(format!("x {x}, f {text}: {:.4} vs {:.4} (z {:.2})", m[0].mean, green, z));
        if z.abs() > 3.0 {
            return Err(out.join("; "));
        }
    }
    within(start, Duration::from_secs(300))?;
    Ok(out.join("; "))
}

fn c7_martingale() -> Check {
    let start = Instant::now();
    let spec = DiffusionSpec::wright_fisher(0.0);
    let cfg = SimConfig {
        dt: 1e-4,
        absorption_eps: 1e-6,
        record_stride: 0,
        t_budget: 1e3,
        ..SimConfig::default()
    };
    let mut out = Vec::new();
    for x0 in [0.25, 0.5, 0.75] {
        let ends = run_indexed(10_000, None, |i| simulate_1d(&spec, x0, &cfg, &[], i).map(|t| t.absorbed_at));
        let mut fixed = 0usize;
        for e in ends {
            match e.map_err(|e| e.to_string())? {
                Some(ev) if ev.end == End::Right => fixed += 1,
                Some(_) => {}
                None => return Err(format!("x0 {x0}: a path was not absorbed")),
            }
        }
        let freq = fixed as f64 / 10_000.0;
        out.push(format!("x0 {x0}: {freq:.4}"));
        if (freq - x0).abs() > 0.02 {
            return Err(out.join(", "));
        }
    }
    within(start, Duration::from_secs(300))?;
    Ok(out.join(", "))
}

fn c8_multiallele() -> Check {
    let start = Instant::now();
    let mut out = Vec::new();
    for l in [3usize, 4] {
        let cfg = ExperimentConfig::successive(l);
        let x0 = vec![1.0 / l as f64; l];
        let paths = run_indexed(cfg.trajectories, None, |i| simulate_multiallele(l, &x0, &cfg.sim, i));
        let (mut fixed, mut simultaneous, mut wrong_count, mut worst) = (0, 0, 0, 0.0f64);
        for t in paths {
            let t = t.map_err(|e| e.to_string())?;
            let s = MultialleleSummary::of(&t);
            worst = worst.max(s.max_simplex_error);
            fixed += s.fixed as usize;
            simultaneous += (!s.successive()) as usize;
            let losses: Vec<_> = s.events.iter().filter(|e| e.end == End::Left).collect();
            let ordered = losses.windows(2).all(|w| w[0].time < w[1].time && w[0].step < w[1].step);
            wrong_count += (losses.len() != l - 1 || !ordered) as usize;
        }
        out.push(format!(
            "L {l}: fixed {fixed}/{}, simultaneous {simultaneous}, bad event lists {wrong_count}, simplex {worst:.1e}",
            cfg.trajectories
        ));
        if fixed != cfg.trajectories || simultaneous > 0 || wrong_count > 0 || worst > 1e-12 {
            return Err(out.join("; "));
        }
    }
    let s = run_successive_extinctions(&ExperimentConfig {
        trajectories: 100,
        ..ExperimentConfig::successive(4)
    })
    .map_err(|e| e.to_string())?;
    if s.table("successive_gaps").unwrap().rows.iter().any(|r| r[0] == "0") {
        return Err("histogram has a zero-gap bin".into());
    }
    within(start, Duration::from_secs(600))?;
    Ok(out.join("; "))
}

fn share(c: &LadderCounts, k: usize) -> f64 {
    k as f64 / (c.growing + c.stable + c.neither).max(1) as f64
}

fn c9_zero_one_law() -> Check {
    let start = Instant::now();
    let mut out = Vec::new();
    let mut wf = ExperimentConfig::criterion("wright-fisher").unwrap();
    wf.grid.insert("r".into(), vec![0.0]);
    let s = run_criterion_validation(&wf).map_err(|e| e.to_string())?;
    let l = s.cells[0].ladder.unwrap();
    out.push(format!(
        "WF growth on {}/{} retained paths",
        l.growing,
        l.growing + l.stable + l.neither
    ));
    if share(&l, l.growing) < 0.95 || l.unreached > 0 {
        return Err(out.join("; "));
    }
    let mut ex = ExperimentConfig::criterion("example2.1").unwrap();
    ex.grid.insert("alpha".into(), vec![0.5, 0.9]);
    let s = run_criterion_validation(&ex).map_err(|e| e.to_string())?;
    for c in &s.cells {
        let l = c.ladder.unwrap();
        let cell = format!("beta {} alpha {}", c.param("beta").unwrap(), c.param("alpha").unwrap());
        out.push(format!("{cell}: stable {}/{}", l.stable, l.growing + l.stable + l.neither));
        if c.verdict != Some(Outcome::FiniteAS) || share(&l, l.stable) < 0.95 {
            return Err(out.join("; "));
        }
    }
    within(start, Duration::from_secs(600))?;
    Ok(out.join("; "))
}

fn c10_determinism() -> Check {
    let mut fig = ExperimentConfig::figure2();
    fig.grid.insert("eps".into(), vec![0.25, 0.4]);
    fig.trajectories = 100;
    fig.sim.dt = 1e-2;
    let mut succ = ExperimentConfig::successive(3);
    succ.trajectories = 100;
    let mut reference: Option<Vec<String>> = None;
    for jobs in [1usize, 2, 5] {
        let mut csv = Vec::new();
        fig.jobs = Some(jobs);
        succ.jobs = Some(jobs);
        for s in [run_figure2_sweep(&fig), run_successive_extinctions(&succ)] {
            csv.extend(s.map_err(|e| e.to_string())?.tables.iter().map(|t| t.to_csv()));
        }
        match &reference {
            None => reference = Some(csv),
            Some(r) if *r == csv => {}
            Some(_) => return Err(format!("CSV differs with {jobs} jobs")),
        }
    }
    Ok("figure2 and successive CSVs identical for 1, 2 and 5 jobs".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("C1 example grid", c1_example_grid),
        ("C2 boundary classification", c2_boundaries),
        ("C3 fixation criterion", c3_fixation_criterion),
        ("C4 figure2 trend", c4_figure2_trend),
        ("C5 moment bound", c5_moment_bound),
        ("C6 green calibration", c6_green_calibration),
        ("C7 martingale check", c7_martingale),
        ("C8 multi-allele", c8_multiallele),
        ("C9 empirical 0-1 law", c9_zero_one_law),
        ("C10 determinism", c10_determinism),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.starts_with(o.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("PASS {name} [{:.1?}]: {detail}", start.elapsed()),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} [{:.1?}]: {detail}", start.elapsed());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
