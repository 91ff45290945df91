//! Monte Carlo campaigns checked against the analytic criteria.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};

use thiserror::Error;

use crate::classifier::{
    classify_fixation_before_extinction, classify_perpetual_zero, girsanov_reduce, ClassifyError, GirsanovAssertions,
    Outcome,
};
use crate::expr::CoefficientExpr;
use crate::scale::{DiffusionSpec, End};
use crate::simulate::{
    coupled_outcome, run_indexed, simulate_1d, simulate_coupled, simulate_multiallele, CoupledModel, CoupledOutcome,
    Mark, MultialleleSummary, SimConfig, SimError, Trajectory,
};

/// One-sided 1% critical value of the standard normal.
pub const Z_ONE_PERCENT: f64 = 2.326_347_874_040_841;
const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: String,
    /// Named parameter lists; each experiment reads the keys it knows.
    pub grid: BTreeMap<String, Vec<f64>>,
    pub trajectories: usize,
    pub sim: SimConfig,
    pub n0: f64,
    pub x0: f64,
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

fn grid(pairs: &[(&str, &[f64])]) -> BTreeMap<String, Vec<f64>> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect()
}

fn deep_sim() -> SimConfig {
    SimConfig {
        absorption_eps: 1e-60,
        max_halvings: 400,
        record_stride: 0,
        ..SimConfig::default()
    }
}

impl ExperimentConfig {
    /// Logistic size process with `sigma = y^((1-eps)/2)`, `r = -1`, `c = 0.1`.
    pub fn figure2() -> Self {
        ExperimentConfig {
            preset: "figure2".into(),
            grid: grid(&[("eps", &[0.1, 0.25, 0.4]), ("r", &[-1.0]), ("c", &[0.1])]),
            trajectories: 2000,
            sim: deep_sim(),
            n0: 1.0,
            x0: 0.5,
            jobs: None,
        }
    }

    /// `example2.1` (branching with immigration, `f = y^-alpha` cut off at 2)
    /// or `wright-fisher` (`f = 1 / (1 - y)` on paths that fix).
    pub fn criterion(preset: &str) -> Result<Self, ExperimentError> {
        let ladder = vec![1e-15, 1e-30, 1e-60];
        match preset {
            "example2.1" => Ok(ExperimentConfig {
                preset: preset.into(),
                grid: grid(&[("beta", &[0.1, 0.25, 0.4]), ("alpha", &[0.5, 0.9, 1.0, 1.1, 2.0])]),
                trajectories: 200,
                sim: SimConfig {
                    level_marks: ladder,
                    excursion_cap: Some(2.0),
                    t_budget: 1e4,
                    ..deep_sim()
                },
                n0: 1.0,
                x0: 1.0,
                jobs: None,
            }),
            "wright-fisher" => Ok(ExperimentConfig {
                preset: preset.into(),
                grid: grid(&[("r", &[0.0, 0.5])]),
                trajectories: 400,
                sim: SimConfig {
                    level_marks: ladder,
                    t_budget: 1e4,
                    ..deep_sim()
                },
                n0: 1.0,
                x0: 0.5,
                jobs: None,
            }),
            other => Err(ExperimentError::Config(format!("unknown criterion preset {other:?}"))),
        }
    }

    /// Two-type Lotka-Volterra competition.
    pub fn selection() -> Self {
        ExperimentConfig {
            preset: "selection".into(),
            grid: grid(&[("r1", &[-1.0]), ("r2", &[-0.8]), ("c", &[0.1])]),
            trajectories: 2000,
            sim: deep_sim(),
            n0: 1.0,
            x0: 0.5,
            jobs: None,
        }
    }

    /// `L` alleles started from the uniform frequency vector.
    pub fn successive(l: usize) -> Self {
        ExperimentConfig {
            preset: "successive".into(),
            grid: grid(&[("L", &[l as f64])]),
            trajectories: 2000,
            sim: SimConfig {
                absorption_eps: 1e-12,
                t_budget: 1e4,
                max_halvings: 40,
                record_stride: 0,
                ..SimConfig::default()
            },
            n0: 1.0,
            x0: 1.0 / l as f64,
            jobs: None,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.trajectories < 100 {
            return Err(ExperimentError::Config("at least 100 trajectories per cell".into()));
        }
        if self.grid.is_empty() || self.grid.values().any(|v| v.is_empty()) {
            return Err(ExperimentError::Config("empty parameter grid".into()));
        }
        self.sim.validate()?;
        Ok(())
    }

    pub fn list(&self, key: &str) -> Result<&[f64], ExperimentError> {
        self.grid
            .get(key)
            .map(|v| v.as_slice())
            .ok_or_else(|| ExperimentError::Config(format!("grid key {key:?} missing")))
    }

    fn single(&self, key: &str) -> Result<f64, ExperimentError> {
        match self.list(key)? {
            [v] => Ok(*v),
            _ => Err(ExperimentError::Config(format!("grid key {key:?} takes one value"))),
        }
    }
}

/// Ensemble outcomes of one cell; they sum to the cell's trajectory count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OutcomeCounts {
    /// The frequency (or the only component) reached its target end.
    pub fixation_first: usize,
    pub extinction_first: usize,
    pub undecided: usize,
}

impl OutcomeCounts {
    pub fn total(&self) -> usize {
        self.fixation_first + self.extinction_first + self.undecided
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub order: u32,
    pub mean: f64,
    pub std_error: f64,
}

/// Sample moments of non-negative draws with standard errors.
pub fn moments(xs: &[f64], orders: &[u32]) -> Vec<MomentEstimate> {
    let n = xs.len() as f64;
    orders
        .iter()
        .map(|&k| {
            let p: Vec<f64> = xs.iter().map(|x| x.powi(k as i32)).collect();
            let mean = p.iter().sum::<f64>() / n;
            let var = p.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            MomentEstimate {
                order: k,
                mean,
                std_error: (var / n).sqrt(),
            }
        })
        .collect()
}

/// What the running integral did between the three level marks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LadderCall {
    /// Grew by a quarter or more at each doubling of depth.
    Growing,
    /// Changed by less than 5% at the last doubling.
    Stable,
    Neither,
    /// The path did not pass all three levels.
    Unreached,
}

pub const GROWTH_FACTOR: f64 = 1.25;
pub const STABLE_TOLERANCE: f64 = 0.05;

pub fn ladder_call(marks: &[Mark], integral: usize) -> LadderCall {
    if marks.len() < 3 {
        return LadderCall::Unreached;
    }
    let i: Vec<f64> = marks[marks.len() - 3..].iter().map(|m| m.integrals[integral]).collect();
    if i[1] >= GROWTH_FACTOR * i[0] && i[2] >= GROWTH_FACTOR * i[1] {
        LadderCall::Growing
    } else if (i[2] - i[1]).abs() < STABLE_TOLERANCE * i[1] {
        LadderCall::Stable
    } else {
        LadderCall::Neither
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LadderCounts {
    pub growing: usize,
    pub stable: usize,
    pub neither: usize,
    pub unreached: usize,
}

impl LadderCounts {
    pub fn add(&mut self, c: LadderCall) {
        match c {
            LadderCall::Growing => self.growing += 1,
            LadderCall::Stable => self.stable += 1,
            LadderCall::Neither => self.neither += 1,
            LadderCall::Unreached => self.unreached += 1,
        }
    }

    /// `InfiniteAS` (`FiniteAS`) when at least 95% of the paths that passed
    /// every level grow (stabilize).
    pub fn outcome(&self) -> Outcome {
        let seen = self.growing + self.stable + self.neither;
        if seen == 0 {
            return Outcome::Inconclusive;
        }
        let share = |k: usize| k as f64 / seen as f64;
        if share(self.growing) >= 0.95 {
            Outcome::InfiniteAS
        } else if share(self.stable) >= 0.95 {
            Outcome::FiniteAS
        } else {
            Outcome::Inconclusive
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CellStats {
    pub params: Vec<(String, f64)>,
    pub counts: OutcomeCounts,
    pub moments: Vec<MomentEstimate>,
    pub ladder: Option<LadderCounts>,
    pub verdict: Option<Outcome>,
    pub empirical: Option<Outcome>,
    /// `None` unless both the verdict and the ladder are decided.
    pub agreement: Option<bool>,
    /// 95% Wilson interval of the fixation-first frequency.
    pub interval: Option<(f64, f64)>,
}

impl CellStats {
    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

/// One-sided test that the extinction-first share rises from `low` to `high`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendTest {
    pub low: f64,
    pub high: f64,
    pub z: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnsembleStats {
    pub experiment: String,
    pub cells: Vec<CellStats>,
    pub trends: Vec<TrendTest>,
    pub tables: Vec<Table>,
    pub warnings: Vec<String>,
}

impl EnsembleStats {
    /// Every cell where both sides decided agrees.
    pub fn all_agree(&self) -> bool {
        self.cells.iter().all(|c| c.agreement != Some(false))
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

fn index(cell: usize, path: u64) -> u64 {
    ((cell as u64) << 32) | path
}

fn num(v: f64) -> String {
    v.to_string()
}

pub fn two_proportion_z(x1: usize, n1: usize, x2: usize, n2: usize) -> f64 {
    let (p1, p2) = (x1 as f64 / n1 as f64, x2 as f64 / n2 as f64);
    let p = (x1 + x2) as f64 / (n1 + n2) as f64;
    let se = (p * (1.0 - p) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    if se > 0.0 {
        (p2 - p1) / se
    } else {
        0.0
    }
}

pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = Z_95 * Z_95;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((centre - half).clamp(0.0, p), (centre + half).clamp(p, 1.0))
}

fn coupled_counts(paths: &[Trajectory]) -> OutcomeCounts {
    let mut c = OutcomeCounts::default();
    for t in paths {
        match coupled_outcome(t) {
            CoupledOutcome::FixationFirst(_) => c.fixation_first += 1,
            CoupledOutcome::ExtinctionFirst => c.extinction_first += 1,
            CoupledOutcome::Undecided => c.undecided += 1,
        }
    }
    c
}

fn undecided_warning(w: &mut Vec<String>, cell: &str, c: &OutcomeCounts) {
    if c.undecided * 10 > c.total() {
        w.push(format!("{cell}: {} of {} paths undecided at budget", c.undecided, c.total()));
    }
}

/// Extinction-before-fixation counts per `eps`, with one-sided tests
/// between consecutive values.
pub fn run_figure2_sweep(cfg: &ExperimentConfig) -> Result<EnsembleStats, ExperimentError> {
    cfg.validate()?;
    let (r, c) = (cfg.single("r")?, cfg.single("c")?);
    let mut out = EnsembleStats {
        experiment: "figure2".into(),
        ..Default::default()
    };
    let mut table = Table::new(
        "figure2",
        &["eps", "n0", "x0", "extinction_first", "fixation_first", "undecided", "total"],
    );
    for (ci, &eps) in cfg.list("eps")?.iter().enumerate() {
        let model = CoupledModel::logistic_power(eps, r, c);
        let paths = run_indexed(cfg.trajectories, cfg.jobs, |i| {
            simulate_coupled(&model, &cfg.sim, cfg.n0, cfg.x0, index(ci, i))
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        let counts = coupled_counts(&paths);
        undecided_warning(&mut out.warnings, &format!("eps = {eps}"), &counts);
        table.rows.push(vec![
            num(eps),
            num(cfg.n0),
            num(cfg.x0),
            counts.extinction_first.to_string(),
            counts.fixation_first.to_string(),
            counts.undecided.to_string(),
            counts.total().to_string(),
        ]);
        out.cells.push(CellStats {
            params: vec![("eps".into(), eps), ("r".into(), r), ("c".into(), c)],
            counts,
            ..Default::default()
        });
    }
    let mut tests = Table::new("figure2_trend", &["eps_low", "eps_high", "z", "critical", "significant"]);
    for w in out.cells.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let z = two_proportion_z(
            a.counts.extinction_first,
            a.counts.total(),
            b.counts.extinction_first,
            b.counts.total(),
        );
        let t = TrendTest {
            low: a.param("eps").unwrap_or(f64::NAN),
            high: b.param("eps").unwrap_or(f64::NAN),
            z,
            significant: z > Z_ONE_PERCENT,
        };
        tests.rows.push(vec![
            num(t.low),
            num(t.high),
            format!("{z:.6}"),
            format!("{Z_ONE_PERCENT:.6}"),
            t.significant.to_string(),
        ]);
        out.trends.push(t);
    }
    out.tables.push(table);
    out.tables.push(tests);
    Ok(out)
}

fn cutoff_power(alpha: f64) -> CoefficientExpr {
    CoefficientExpr::parse(&format!("y^(-{alpha:?})*max(0, min(1, 2 - y))")).expect("preset expression")
}

fn agreement(verdict: Outcome, empirical: Outcome) -> Option<bool> {
    if verdict == Outcome::Inconclusive || empirical == Outcome::Inconclusive {
        None
    } else {
        Some(verdict == empirical)
    }
}

/// Analytic verdict against the three-level ladder of simulated running
/// integrals, per cell of the preset.
pub fn run_criterion_validation(cfg: &ExperimentConfig) -> Result<EnsembleStats, ExperimentError> {
    cfg.validate()?;
    if cfg.sim.level_marks.len() < 3 {
        return Err(ExperimentError::Config("three level marks are required".into()));
    }
    let mut out = EnsembleStats {
        experiment: format!("criterion-{}", cfg.preset),
        ..Default::default()
    };
    let mut cells: Vec<(Vec<(String, f64)>, DiffusionSpec, CoefficientExpr, CoefficientExpr, End)> = Vec::new();
    match cfg.preset.as_str() {
        "example2.1" => {
            for &beta in cfg.list("beta")? {
                for &alpha in cfg.list("alpha")? {
                    cells.push((
                        vec![("beta".into(), beta), ("alpha".into(), alpha)],
                        DiffusionSpec::branching_immigration(beta),
                        CoefficientExpr::parse(&format!("y^(-{alpha:?})")).expect("preset expression"),
                        cutoff_power(alpha),
                        End::Left,
                    ));
                }
            }
        }
        "wright-fisher" => {
            for &r in cfg.list("r")? {
                let f = CoefficientExpr::parse("1/(1-y)").expect("preset expression");
                cells.push((vec![("r".into(), r)], DiffusionSpec::wright_fisher(r), f.clone(), f, End::Right));
            }
        }
        other => return Err(ExperimentError::Config(format!("unknown criterion preset {other:?}"))),
    }
    let names: Vec<&str> = cells[0].0.iter().map(|(k, _)| k.as_str()).collect();
    let mut head = names.clone();
    head.extend([
        "verdict", "growing", "stable", "neither", "unreached", "retained", "total", "empirical", "agreement",
    ]);
    let mut table = Table::new("criterion", &head);
    for (ci, (params, spec, f_verdict, f_sim, target)) in cells.into_iter().enumerate() {
        let verdict = match target {
            End::Left => classify_perpetual_zero(&spec, &f_verdict)?.outcome,
            End::Right => crate::classifier::classify_perpetual_two_sided(&spec, &f_verdict, End::Right)?.outcome,
        };
        let paths = run_indexed(cfg.trajectories, cfg.jobs, |i| {
            simulate_1d(&spec, cfg.x0, &cfg.sim, std::slice::from_ref(&f_sim), index(ci, i))
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        let mut counts = OutcomeCounts::default();
        let mut ladder = LadderCounts::default();
        for t in &paths {
            match t.absorbed_at {
                None => counts.undecided += 1,
                Some(e) if e.end == End::Right => counts.fixation_first += 1,
                Some(_) => counts.extinction_first += 1,
            }
            if t.absorbed_at.map(|e| e.end) == Some(target) {
                ladder.add(ladder_call(&t.marks, 0));
            }
        }
        let retained = match target {
            End::Left => counts.extinction_first,
            End::Right => counts.fixation_first,
        };
        let label: Vec<String> = params.iter().map(|(k, v)| format!("{k} = {v}")).collect();
        undecided_warning(&mut out.warnings, &label.join(", "), &counts);
        let empirical = ladder.outcome();
        let agree = agreement(verdict, empirical);
        if agree == Some(false) {
            out.warnings
                .push(format!("{}: verdict {verdict} but ladder {empirical}", label.join(", ")));
        }
        let mut row: Vec<String> = params.iter().map(|(_, v)| num(*v)).collect();
        row.extend([
            verdict.to_string(),
            ladder.growing.to_string(),
            ladder.stable.to_string(),
            ladder.neither.to_string(),
            ladder.unreached.to_string(),
            retained.to_string(),
            counts.total().to_string(),
            empirical.to_string(),
            agree.map_or("undecided".into(), |a| a.to_string()),
        ]);
        table.rows.push(row);
        out.cells.push(CellStats {
            params,
            counts,
            ladder: Some(ladder),
            verdict: Some(verdict),
            empirical: Some(empirical),
            agreement: agree,
            ..Default::default()
        });
    }
    out.tables.push(table);
    Ok(out)
}

/// Fixation-first frequency in the competition model, next to the
/// analytic verdicts behind it.
pub fn run_selection_case(cfg: &ExperimentConfig) -> Result<EnsembleStats, ExperimentError> {
    cfg.validate()?;
    let (r1, c) = (cfg.single("r1")?, cfg.single("c")?);
    let p = |s: &str| CoefficientExpr::parse(s).expect("preset expression");
    let reduction = classify_fixation_before_extinction(&p("sqrt(y)"), &p("y"))?;
    let mut out = EnsembleStats {
        experiment: "selection".into(),
        ..Default::default()
    };
    let mut table = Table::new(
        "selection",
        &[
            "r1", "r2", "c", "n0", "x0", "fixation_first", "extinction_first", "undecided", "total", "frequency",
            "ci_low", "ci_high", "girsanov_verdict", "reduction_verdict",
        ],
    );
    for (ci, &r2) in cfg.list("r2")?.iter().enumerate() {
        let base = DiffusionSpec::new(
            p("sqrt(y)"),
            p(&format!("y*({r1:?} - {c:?}*y)")),
            crate::scale::Domain::half_line(0.0),
            1.0,
        )
        .map_err(ClassifyError::from)?;
        let assertions = GirsanovAssertions {
            absorbed: true,
            levels_escape: true,
        };
        let girsanov = girsanov_reduce(&base, &p("y"), (r2 - r1).abs(), &p("1/y"), assertions)?;
        let model = CoupledModel::lotka_volterra(r1, r2, c);
        let paths = run_indexed(cfg.trajectories, cfg.jobs, |i| {
            simulate_coupled(&model, &cfg.sim, cfg.n0, cfg.x0, index(ci, i))
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        let counts = coupled_counts(&paths);
        undecided_warning(&mut out.warnings, &format!("r2 = {r2}"), &counts);
        let n = counts.total();
        let ci95 = wilson_interval(counts.fixation_first, n);
        table.rows.push(vec![
            num(r1),
            num(r2),
            num(c),
            num(cfg.n0),
            num(cfg.x0),
            counts.fixation_first.to_string(),
            counts.extinction_first.to_string(),
            counts.undecided.to_string(),
            n.to_string(),
            format!("{:.6}", counts.fixation_first as f64 / n as f64),
            format!("{:.6}", ci95.0),
            format!("{:.6}", ci95.1),
            girsanov.outcome.to_string(),
            reduction.outcome.to_string(),
        ]);
        out.cells.push(CellStats {
            params: vec![("r1".into(), r1), ("r2".into(), r2), ("c".into(), c)],
            counts,
            verdict: Some(girsanov.outcome),
            interval: Some(ci95),
            ..Default::default()
        });
    }
    out.tables.push(table);
    Ok(out)
}

/// Per-path loss order of the `L`-allele system and a histogram of the
/// smallest step gap between consecutive losses.
pub fn run_successive_extinctions(cfg: &ExperimentConfig) -> Result<EnsembleStats, ExperimentError> {
    cfg.validate()?;
    let l = cfg.single("L")?;
    if !(l >= 2.0 && l.fract() == 0.0 && l <= 64.0) {
        return Err(ExperimentError::Config(format!("L = {l} is not an allele count")));
    }
    let l = l as usize;
    let x0 = vec![1.0 / l as f64; l];
    let paths = run_indexed(cfg.trajectories, cfg.jobs, |i| simulate_multiallele(l, &x0, &cfg.sim, index(0, i)))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut head = vec!["path".to_string(), "fixed".into(), "fixed_allele".into()];
    head.extend((1..l).map(|k| format!("event_{k}")));
    head.extend(["min_gap_steps".into(), "max_simplex_error".into()]);
    let mut per_path = Table {
        name: "successive_paths".into(),
        header: head,
        rows: Vec::new(),
    };
    let mut counts = OutcomeCounts::default();
    let mut hist: BTreeMap<u32, usize> = BTreeMap::new();
    let mut worst = 0.0f64;
    for (i, t) in paths.iter().enumerate() {
        let s = MultialleleSummary::of(t);
        worst = worst.max(s.max_simplex_error);
        if s.fixed {
            counts.fixation_first += 1;
        } else {
            counts.undecided += 1;
        }
        let mut row = vec![
            i.to_string(),
            s.fixed.to_string(),
            s.fixed_allele.map_or(String::new(), |a| (a + 1).to_string()),
        ];
        let mut times: Vec<String> = s.events.iter().filter(|e| e.end == End::Left).map(|e| num(e.time)).collect();
        times.resize(l - 1, String::new());
        row.extend(times);
        row.push(s.min_gap_steps.map_or(String::new(), |g| g.to_string()));
        row.push(format!("{:e}", s.max_simplex_error));
        per_path.rows.push(row);
        if let Some(g) = s.min_gap_steps {
            *hist.entry(bin(g)).or_default() += 1;
        }
    }
    let mut histogram = Table::new("successive_gaps", &["gap_from", "gap_to", "paths"]);
    for (b, k) in &hist {
        let (lo, hi) = bin_range(*b);
        histogram.rows.push(vec![lo.to_string(), hi.to_string(), k.to_string()]);
    }
    let mut out = EnsembleStats {
        experiment: "successive".into(),
        ..Default::default()
    };
    undecided_warning(&mut out.warnings, &format!("L = {l}"), &counts);
    let mut note = String::new();
    let _ = write!(note, "L = {l}: largest simplex error {worst:e}");
    out.warnings.extend((worst > 1e-12).then_some(note));
    out.cells.push(CellStats {
        params: vec![("L".into(), l as f64)],
        counts,
        ..Default::default()
    });
    out.tables.push(per_path);
    out.tables.push(histogram);
    Ok(out)
}

/// Bin 0 holds gap 0; bin `k >= 1` holds `[2^(k-1), 2^k)`.
fn bin(g: u64) -> u32 {
    if g == 0 {
        0
    } else {
        64 - g.leading_zeros()
    }
}

fn bin_range(b: u32) -> (u64, u64) {
    if b == 0 {
        (0, 1)
    } else {
        (1u64 << (b - 1), 1u64.checked_shl(b).unwrap_or(u64::MAX))
    }
}

/// Moments of `∫_0^T f(Z_s) ds` over `n` paths of `spec` from `x0`.
pub fn estimate_moments(
    spec: &DiffusionSpec,
    f: &CoefficientExpr,
    x0: f64,
    sim: &SimConfig,
    n: usize,
    jobs: Option<usize>,
    orders: &[u32],
) -> Result<(Vec<MomentEstimate>, OutcomeCounts), ExperimentError> {
    let draws = run_indexed(n, jobs, |i| {
        simulate_1d(spec, x0, sim, std::slice::from_ref(f), index(0, i)).map(|t| (t.absorbed_at, t.final_integrals[0]))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let mut counts = OutcomeCounts::default();
    for (a, _) in &draws {
        match a {
            None => counts.undecided += 1,
            Some(e) if e.end == End::Right => counts.fixation_first += 1,
            Some(_) => counts.extinction_first += 1,
        }
    }
    let xs: Vec<f64> = draws.iter().map(|d| d.1).collect();
    Ok((moments(&xs, orders), counts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_and_wilson() {
        assert_eq!(two_proportion_z(0, 100, 0, 100), 0.0);
        assert!(two_proportion_z(5, 2000, 60, 2000) > 6.0);
        assert!(two_proportion_z(60, 2000, 5, 2000) < 0.0);
        let (lo, hi) = wilson_interval(2000, 2000);
        let z2 = 1.959964f64.powi(2);
        assert_eq!(hi, 1.0);
        assert_eq!(wilson_interval(0, 2000).0, 0.0);
        assert!((lo - 2000.0 / (2000.0 + z2)).abs() < 1e-6);
        let (lo, hi) = wilson_interval(50, 100);
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
    }

    #[test]
    fn ladder_calls() {
        let m = |v: [f64; 3]| -> Vec<Mark> {
            v.iter()
                .map(|x| Mark {
                    level: 0.0,
                    time: 0.0,
                    integrals: vec![*x],
                })
                .collect()
        };
        assert_eq!(ladder_call(&m([1.0, 2.0, 4.0]), 0), LadderCall::Growing);
        assert_eq!(ladder_call(&m([1.0, 1.01, 1.02]), 0), LadderCall::Stable);
        assert_eq!(ladder_call(&m([1.0, 1.1, 1.3]), 0), LadderCall::Neither);
        assert_eq!(ladder_call(&m([1.0, 2.0, 4.0])[..2], 0), LadderCall::Unreached);
        let mut c = LadderCounts::default();
        for _ in 0..95 {
            c.add(LadderCall::Growing);
        }
        for _ in 0..5 {
            c.add(LadderCall::Neither);
        }
        c.add(LadderCall::Unreached);
        assert_eq!(c.outcome(), Outcome::InfiniteAS);
        c.add(LadderCall::Stable);
        assert_eq!(c.outcome(), Outcome::Inconclusive);
    }

    #[test]
    fn gap_bins() {
        assert_eq!(bin(0), 0);
        assert_eq!(bin(1), 1);
        assert_eq!(bin(3), 2);
        assert_eq!(bin(4), 3);
        assert_eq!(bin_range(3), (4, 8));
    }

    #[test]
    fn moment_estimates() {
        let m = moments(&[1.0, 2.0, 3.0, 4.0], &[1, 2]);
        assert_eq!(m[0].mean, 2.5);
        assert_eq!(m[1].mean, 7.5);
        assert!((m[0].std_error - (5.0f64 / 12.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn config_checks() {
        let mut c = ExperimentConfig::figure2();
        c.validate().unwrap();
        c.trajectories = 99;
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::criterion("nope").is_err());
        let mut c = ExperimentConfig::selection();
        c.grid.insert("c".into(), vec![0.1, 0.2]);
        assert!(matches!(run_selection_case(&c), Err(ExperimentError::Config(_))));
    }

    #[test]
    fn successive_small_run_is_ordered() {
        let mut c = ExperimentConfig::successive(3);
        c.trajectories = 100;
        let s = run_successive_extinctions(&c).unwrap();
        assert_eq!(s.cells[0].counts.total(), 100);
        assert_eq!(s.cells[0].counts.fixation_first, 100);
        let t = s.table("successive_paths").unwrap();
        assert_eq!(t.rows.len(), 100);
        assert_eq!(t.header.len(), 7);
        let gaps = s.table("successive_gaps").unwrap();
        assert!(gaps.rows.iter().all(|r| r[0] != "0"));
    }
}
