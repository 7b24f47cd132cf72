//! Parameter sweeps: a cartesian grid over a base run configuration.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Deserialize;
use thermoflock::io::{execute, parse_config, write_outputs, RunConfig};

use crate::commands::{min_distance_over_run, EXIT_OK};

pub const MAX_CELLS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisParam {
    #[serde(alias = "params.alpha")]
    Alpha,
    #[serde(alias = "params.kappa1")]
    Kappa1,
    #[serde(alias = "params.kappa2")]
    Kappa2,
    #[serde(alias = "scenario.velocity_cap_angle")]
    VelocityCapAngle,
    #[serde(alias = "scenario.seed")]
    Seed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisValue {
    Real(f64),
    Seed(u64),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAxis {
    path: AxisParam,
    values: Vec<serde_json::Value>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    base: serde_json::Value,
    #[serde(default)]
    axes: Vec<RawAxis>,
    #[serde(default = "default_parallelism")]
    parallelism: usize,
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Clone)]
pub struct Axis {
    pub param: AxisParam,
    pub values: Vec<AxisValue>,
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: RunConfig,
    pub axes: Vec<Axis>,
    pub parallelism: usize,
}

pub fn parse_sweep(text: &str) -> Result<SweepSpec> {
    let raw: RawSweep = serde_json::from_str(text).context("sweep spec")?;
    let base = parse_config(&raw.base.to_string()).map_err(|e| match e {
        thermoflock::Error::Config { pointer, message } => {
            anyhow::anyhow!("config error at '/base{pointer}': {message}")
        }
        other => anyhow::anyhow!(other),
    })?;
    if raw.parallelism == 0 {
        bail!("config error at '/parallelism': parallelism must be positive");
    }
    let mut axes = Vec::with_capacity(raw.axes.len());
    let mut cells: usize = 1;
    for (k, a) in raw.axes.into_iter().enumerate() {
        if a.values.is_empty() {
            bail!("config error at '/axes/{k}/values': axis has no values");
        }
        let values = a
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let parsed = match a.path {
                    AxisParam::Seed => v.as_u64().map(AxisValue::Seed),
                    _ => v.as_f64().map(AxisValue::Real),
                };
                parsed.with_context(|| format!("config error at '/axes/{k}/values/{i}': bad value {v}"))
            })
            .collect::<Result<Vec<_>>>()?;
        cells = cells.saturating_mul(values.len());
        axes.push(Axis { param: a.path, values });
    }
    if cells > MAX_CELLS {
        bail!("config error at '/axes': {cells} cells exceed the limit of {MAX_CELLS}");
    }
    Ok(SweepSpec {
        base,
        axes,
        parallelism: raw.parallelism,
    })
}

impl SweepSpec {
    /// Cell configurations in row-major order (last axis varies fastest).
    pub fn cells(&self) -> Vec<RunConfig> {
        let mut out = vec![self.base.clone()];
        for axis in &self.axes {
            out = out
                .into_iter()
                .flat_map(|cfg| {
                    axis.values.iter().map(move |&v| {
                        let mut c = cfg.clone();
                        apply(&mut c, axis.param, v);
                        c
                    })
                })
                .collect();
        }
        out
    }
}

fn apply(cfg: &mut RunConfig, param: AxisParam, value: AxisValue) {
    match (param, value) {
        (AxisParam::Seed, AxisValue::Seed(s)) => cfg.scenario.seed = s,
        (AxisParam::Alpha, AxisValue::Real(x)) => cfg.params.alpha = x,
        (AxisParam::Kappa1, AxisValue::Real(x)) => cfg.params.kappa1 = x,
        (AxisParam::Kappa2, AxisValue::Real(x)) => cfg.params.kappa2 = x,
        (AxisParam::VelocityCapAngle, AxisValue::Real(x)) => cfg.scenario.velocity_cap_angle = x,
        _ => unreachable!("axis values are typed at parse time"),
    }
}

pub const SUMMARY_HEADER: &str = "cell,alpha,kappa1,kappa2,velocity_cap_angle,seed,thm31,thm32,thm41_cond1,thm41_cond2,spacing_guarantee,termination,collision_time,final_d_v,min_pair_dist,error";

#[derive(Debug, Clone, Default)]
struct CellResult {
    thm31: String,
    thm32: String,
    thm41_cond1: String,
    thm41_cond2: String,
    spacing_guarantee: String,
    termination: String,
    collision_time: String,
    final_d_v: String,
    min_pair_dist: String,
    error: String,
}

fn verdict(r: Result<bool, &String>) -> String {
    match r {
        Ok(true) => "yes".into(),
        Ok(false) => "no".into(),
        Err(_) => "precondition".into(),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn run_cell(cfg: &RunConfig, dir: Option<&Path>) -> CellResult {
    let outcome = match cfg.validate().map_err(anyhow::Error::from).and_then(|_| Ok(execute(cfg)?)) {
        Ok(o) => o,
        Err(e) => {
            return CellResult {
                error: format!("{e:#}"),
                ..CellResult::default()
            }
        }
    };
    let s = &outcome.certificates;
    let t = &outcome.trajectory;
    let last = thermoflock::diagnostics::compute_frame(&t.final_state, &outcome.params, None);
    let mut res = CellResult {
        thm31: verdict(s.thm31.as_ref().map(|c| c.satisfied)),
        thm32: verdict(s.thm32.as_ref().map(|c| c.satisfied)),
        thm41_cond1: verdict(s.thm41.as_ref().map(|r| r.cond1.satisfied)),
        thm41_cond2: match &s.thm41 {
            Ok(r) => r.cond2.as_ref().map_or("n/a".into(), |c| verdict(Ok(c.satisfied))),
            Err(e) => verdict(Err(e)),
        },
        spacing_guarantee: s.spacing_guarantee().to_string(),
        termination: t.termination.label().into(),
        collision_time: t.termination.collision().map_or(String::new(), |ev| format!("{:e}", ev.time)),
        final_d_v: format!("{:e}", last.d_v),
        min_pair_dist: format!("{:e}", min_distance_over_run(&outcome)),
        error: String::new(),
    };
    if let Some(dir) = dir {
        if let Err(e) = write_outputs(&outcome, dir) {
            res.error = format!("writing outputs: {e}");
        }
    }
    res
}

fn summary_row(index: usize, cfg: &RunConfig, r: &CellResult) -> String {
    let p = &cfg.params;
    let fields = [
        index.to_string(),
        p.alpha.to_string(),
        p.kappa1.to_string(),
        p.kappa2.to_string(),
        cfg.scenario.velocity_cap_angle.to_string(),
        cfg.scenario.seed.to_string(),
        r.thm31.clone(),
        r.thm32.clone(),
        r.thm41_cond1.clone(),
        r.thm41_cond2.clone(),
        r.spacing_guarantee.clone(),
        r.termination.clone(),
        r.collision_time.clone(),
        r.final_d_v.clone(),
        r.min_pair_dist.clone(),
        csv_field(&r.error),
    ];
    fields.join(",")
}

/// Runs every cell on a pool of `parallelism` threads and returns the
/// summary CSV. Rows follow cell order regardless of completion order.
pub fn run_sweep(spec: &SweepSpec, out: Option<&Path>) -> Result<String> {
    let cells = spec.cells();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.parallelism)
        .build()
        .context("building thread pool")?;
    let results: Vec<CellResult> = pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(i, cfg)| {
                let dir = out.map(|o| o.join("cells").join(format!("{i:05}")));
                run_cell(cfg, dir.as_deref())
            })
            .collect()
    });
    let mut csv = String::new();
    writeln!(csv, "{SUMMARY_HEADER}").expect("string write");
    for (i, (cfg, r)) in cells.iter().zip(&results).enumerate() {
        writeln!(csv, "{}", summary_row(i, cfg, r)).expect("string write");
    }
    Ok(csv)
}

pub fn cmd_sweep(path: &Path, out: Option<&Path>, quiet: bool) -> Result<u8> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let spec = parse_sweep(&text).with_context(|| format!("parsing {}", path.display()))?;
    let csv = run_sweep(&spec, out)?;
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let target = dir.join("summary.csv");
            std::fs::write(&target, &csv).with_context(|| format!("writing {}", target.display()))?;
            if !quiet {
                println!("{} cells, summary in {}", csv.lines().count() - 1, target.display());
            }
        }
        None => print!("{csv}"),
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "scenario": {"kind": "random_cap", "seed": 1, "n_agents": 3, "dim": 2,
                     "position_box": 2.0, "min_initial_gap": 0.3, "velocity_cap_angle": 0.4},
        "params": {"kappa1": 1.0, "kappa2": 1.0, "alpha": 2.0},
        "integrator": {"t_end": 0.5}
    }"#;

    fn spec(axes: &str) -> String {
        format!(r#"{{"base": {BASE}, "axes": {axes}, "parallelism": 3}}"#)
    }

    #[test]
    fn grid_is_row_major() {
        let s = parse_sweep(&spec(r#"[{"path": "alpha", "values": [1.0, 2.0]}, {"path": "seed", "values": [4, 5, 6]}]"#)).unwrap();
        let cells = s.cells();
        assert_eq!(cells.len(), 6);
        let keys: Vec<(f64, u64)> = cells.iter().map(|c| (c.params.alpha, c.scenario.seed)).collect();
        assert_eq!(keys, vec![(1.0, 4), (1.0, 5), (1.0, 6), (2.0, 4), (2.0, 5), (2.0, 6)]);
    }

    #[test]
    fn empty_axes_give_the_base_cell() {
        let s = parse_sweep(&spec("[]")).unwrap();
        assert_eq!(s.cells().len(), 1);
        assert_eq!(s.cells()[0], s.base);
    }

    #[test]
    fn oversize_grid_is_rejected() {
        let big: Vec<u64> = (0..1000).collect();
        let axes = format!(
            r#"[{{"path": "seed", "values": {big:?}}}, {{"path": "kappa1", "values": {:?}}}]"#,
            (0..101).map(|k| k as f64).collect::<Vec<_>>()
        );
        let err = parse_sweep(&spec(&axes)).unwrap_err();
        assert!(format!("{err:#}").contains("exceed"));
    }

    #[test]
    fn base_errors_carry_prefixed_pointer() {
        let text = spec("[]").replace(r#""alpha": 2.0"#, r#""alpha": -1.0"#);
        let err = parse_sweep(&text).unwrap_err();
        assert!(format!("{err:#}").contains("/base/params/alpha"), "{err:#}");
    }

    #[test]
    fn bad_cells_are_recorded_in_row() {
        let s = parse_sweep(&spec(r#"[{"path": "alpha", "values": [-1.0, 2.0]}]"#)).unwrap();
        let csv = run_sweep(&s, None).unwrap();
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows.len(), 3);
        assert!(rows[1].contains("alpha must satisfy alpha > 0"));
        assert!(rows[2].contains("reached_t_end"));
        assert!(rows[2].ends_with(','));
    }

    #[test]
    fn summary_is_independent_of_parallelism() {
        let axes = r#"[{"path": "seed", "values": [1, 2, 3, 4]}]"#;
        let a = run_sweep(&parse_sweep(&spec(axes)).unwrap(), None).unwrap();
        let mut s = parse_sweep(&spec(axes)).unwrap();
        s.parallelism = 1;
        let b = run_sweep(&s, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_fields_are_quoted_when_needed() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
