//! INI configuration files.
//!
//! ```ini
//! [experiment]
//! preset = figure2
//! trajectories = 2000
//! n0 = 1
//! x0 = 0.5
//!
//! [grid]
//! eps = 0.1, 0.25, 0.4
//!
//! [sim]
//! dt = 1e-3
//! absorption_eps = 1e-60
//! ```

use std::path::Path;
use std::str::FromStr;

use ini::{Ini, Properties};
use perpetual::experiments::ExperimentConfig;
use perpetual::simulate::{Scheme, SimConfig};

pub fn load(path: &Path) -> Result<Ini, String> {
    Ini::load_from_file(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.trim().parse().map_err(|_| format!("bad value for {key}: {v:?}"))
}

pub fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, String> {
    v.split(',').map(|s| parse(key, s)).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool, String> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("bad value for {key}: {v:?}")),
    }
}

fn parse_seed(v: &str) -> Result<u64, String> {
    let v = v.trim();
    match v.strip_prefix("0x").or_else(|| v.strip_prefix("0X")) {
        Some(h) => u64::from_str_radix(&h.replace('_', ""), 16).map_err(|_| format!("bad seed {v:?}")),
        None => v.parse().map_err(|_| format!("bad seed {v:?}")),
    }
}

pub fn seed_arg(v: &str) -> Result<u64, String> {
    parse_seed(v)
}

pub fn apply_sim(props: &Properties, sim: &mut SimConfig) -> Result<(), String> {
    for (k, v) in props.iter() {
        match k {
            "dt" => sim.dt = parse(k, v)?,
            "absorption_eps" => sim.absorption_eps = parse(k, v)?,
            "t_budget" => sim.t_budget = parse(k, v)?,
            "seed" => sim.seed = parse_seed(v)?,
            "scheme" => sim.scheme = Scheme::from_str(v.trim()).map_err(|e| e.to_string())?,
            "refine_fraction" => sim.refine_fraction = parse(k, v)?,
            "max_halvings" => sim.max_halvings = parse(k, v)?,
            "bridge_test" => sim.bridge_test = parse_bool(k, v)?,
            "excursion_cap" => {
                sim.excursion_cap = match v.trim() {
                    "none" | "" => None,
                    s => Some(parse(k, s)?),
                }
            }
            "record_stride" => sim.record_stride = parse(k, v)?,
            "level_marks" => sim.level_marks = parse_list(k, v)?,
            other => return Err(format!("unknown [sim] key {other:?}")),
        }
    }
    Ok(())
}

/// The `[experiment]`, `[grid]` and `[sim]` sections over `cfg`.
pub fn apply_experiment(ini: &Ini, cfg: &mut ExperimentConfig) -> Result<(), String> {
    if let Some(p) = ini.section(Some("experiment")) {
        for (k, v) in p.iter() {
            match k {
                "preset" => cfg.preset = v.trim().to_string(),
                "trajectories" => cfg.trajectories = parse(k, v)?,
                "n0" => cfg.n0 = parse(k, v)?,
                "x0" => cfg.x0 = parse(k, v)?,
                "jobs" => cfg.jobs = Some(parse(k, v)?),
                other => return Err(format!("unknown [experiment] key {other:?}")),
            }
        }
    }
    if let Some(p) = ini.section(Some("grid")) {
        for (k, v) in p.iter() {
            cfg.grid.insert(k.to_string(), parse_list(k, v)?);
        }
    }
    if let Some(p) = ini.section(Some("sim")) {
        apply_sim(p, &mut cfg.sim)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_all_sections() {
        let ini = Ini::load_from_str(
            "[experiment]\ntrajectories = 300\nx0 = 0.25\n[grid]\neps = 0.1, 0.4\n[sim]\ndt = 1e-4\nseed = 0x10\nlevel_marks = 1e-3, 1e-6\nexcursion_cap = none\n",
        )
        .unwrap();
        let mut c = ExperimentConfig::figure2();
        apply_experiment(&ini, &mut c).unwrap();
        assert_eq!(c.trajectories, 300);
        assert_eq!(c.x0, 0.25);
        assert_eq!(c.grid["eps"], vec![0.1, 0.4]);
        assert_eq!(c.sim.dt, 1e-4);
        assert_eq!(c.sim.seed, 16);
        assert_eq!(c.sim.level_marks, vec![1e-3, 1e-6]);
    }

    #[test]
    fn rejects_unknown_keys() {
        let ini = Ini::load_from_str("[sim]\nbogus = 1\n").unwrap();
        assert!(apply_experiment(&ini, &mut ExperimentConfig::figure2()).is_err());
        assert!(parse_seed("0xD1FF").is_ok());
        assert!(parse_seed("zz").is_err());
    }
}
