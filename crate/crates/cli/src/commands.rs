use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use thermoflock::certificates::{CertificateSuite, FlockingCertificate};
use thermoflock::diagnostics::check_monotonicity;
use thermoflock::integrator::{run, Termination};
use thermoflock::io::{execute, parse_config, write_outputs, RunConfig, RunOutcome};
use thermoflock::model::min_pair_distance;
use thermoflock::oracle::{max_coordinate_discrepancy, run_oracle, OracleConfig};
use thermoflock::scenarios::build;

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_COLLISION: u8 = 2;
pub const EXIT_UNCERTIFIED: u8 = 3;
pub const EXIT_MISMATCH: u8 = 4;

pub struct Invocation {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub quiet: bool,
}

pub fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = parse_config(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(seed) = seed {
        cfg.scenario.seed = seed;
    }
    Ok(cfg)
}

/// Smallest pairwise distance over the samples and the final state.
pub fn min_distance_over_run(outcome: &RunOutcome) -> f64 {
    outcome
        .trajectory
        .samples
        .iter()
        .chain(std::iter::once(&outcome.trajectory.final_state))
        .map(|s| min_pair_distance(&s.agents).0)
        .fold(f64::INFINITY, f64::min)
}

pub fn exit_code_for(termination: &Termination) -> u8 {
    match termination {
        Termination::ReachedTEnd => EXIT_OK,
        Termination::Collision(_) => EXIT_COLLISION,
        Termination::StepFailure { .. } => EXIT_ERROR,
    }
}

pub fn summary_line(outcome: &RunOutcome) -> String {
    let t = &outcome.trajectory;
    let last = thermoflock::diagnostics::compute_frame(&t.final_state, &outcome.params, None);
    let mut line = format!(
        "termination={} t={} final_d_v={:.6e} final_d_t={:.6e} min_dist={:.6e}",
        t.termination.label(),
        t.final_state.time,
        last.d_v,
        last.d_t,
        min_distance_over_run(outcome)
    );
    if let Some(ev) = t.termination.collision() {
        line.push_str(&format!(" collision_time={} pair={:?}", ev.time, ev.pair));
    }
    line
}

pub fn simulate(inv: &Invocation, out: Option<&Path>) -> Result<u8> {
    let cfg = load_config(&inv.config, inv.seed)?;
    let outcome = execute(&cfg)?;
    if let Some(dir) = out {
        write_outputs(&outcome, dir).with_context(|| format!("writing outputs to {}", dir.display()))?;
    }
    if !inv.quiet {
        println!("{}", summary_line(&outcome));
        let report = check_monotonicity(&outcome.frames);
        for c in &report.checks {
            let status = match (c.skipped, c.passed) {
                (true, _) => "skipped",
                (false, true) => "ok",
                (false, false) => "VIOLATED",
            };
            println!("  {:<26} {status}", c.name);
        }
    }
    if let Termination::StepFailure { time, dt } = outcome.trajectory.termination {
        eprintln!("error: step size collapsed to {dt:e} at t = {time}");
    }
    Ok(exit_code_for(&outcome.trajectory.termination))
}

/// Fixed notation in the readable range, scientific outside it.
fn fmt_num(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else if x != 0.0 && !(1e-3..1e5).contains(&x.abs()) {
        format!("{x:.4e}")
    } else {
        format!("{x:.6}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), fmt_num)
}

fn table_row(c: &FlockingCertificate) -> String {
    format!(
        "{:<12} {:<9} {:>12} {:>12} {:>12} {:>12} {:>7}",
        c.theorem.id(),
        if c.satisfied { "yes" } else { "no" },
        fmt_opt(c.d_x_inf),
        fmt_num(c.rate_v),
        fmt_num(c.rate_t),
        fmt_num(c.margin),
        if c.spacing_guarantee { "yes" } else { "no" },
    )
}

pub fn certificate_table(suite: &CertificateSuite) -> String {
    let mut out = format!(
        "{:<12} {:<9} {:>12} {:>12} {:>12} {:>12} {:>7}\n",
        "theorem", "satisfied", "d_x_inf", "rate_v", "rate_t", "margin", "spacing"
    );
    let mut push = |name: &str, r: Result<Vec<&FlockingCertificate>, &String>| match r {
        Ok(cs) => cs.into_iter().for_each(|c| {
            out.push_str(&table_row(c));
            out.push('\n');
        }),
        Err(e) => out.push_str(&format!("{name:<12} {e}\n")),
    };
    push("thm31", suite.thm31.as_ref().map(|c| vec![c]));
    push("thm32", suite.thm32.as_ref().map(|c| vec![c]));
    push("thm41", suite.thm41.as_ref().map(|r| r.certificates().collect()));
    out
}

pub fn check(inv: &Invocation) -> Result<u8> {
    let cfg = load_config(&inv.config, inv.seed)?;
    let params = cfg.system_params();
    let initial = build(&cfg.scenario, params.alpha, params.kappa1)?;
    let suite = CertificateSuite::evaluate(&initial, &params, &cfg.certificate_search);
    if !inv.quiet {
        print!("{}", certificate_table(&suite));
    }
    Ok(if suite.any_satisfied() { EXIT_OK } else { EXIT_UNCERTIFIED })
}

pub fn compare(inv: &Invocation, oracle_dt: f64) -> Result<u8> {
    let cfg = load_config(&inv.config, inv.seed)?;
    let params = cfg.system_params();
    let initial = build(&cfg.scenario, params.alpha, params.kappa1)?;
    let t_end = cfg.integrator.t_end;
    let oracle_cfg = OracleConfig {
        collision_threshold: cfg.integrator.collision_threshold,
        ..OracleConfig::new(oracle_dt, t_end)
    };
    let oracle = run_oracle(&initial, &params, &oracle_cfg).context("oracle run")?;
    let traj = run(&initial, &params, &cfg.integrator, cfg.output_dt())?;
    if traj.termination != Termination::ReachedTEnd {
        anyhow::bail!("adaptive run ended early: {}", traj.termination.label());
    }
    let discrepancy = max_coordinate_discrepancy(&traj.final_state, &oracle);
    let tolerance = 1e-7f64.max(100.0 * cfg.integrator.rel_tol);
    let pass = discrepancy <= tolerance;
    if !inv.quiet {
        println!(
            "max endpoint discrepancy {discrepancy:.3e} (tolerance {tolerance:.1e}): {}",
            if pass { "pass" } else { "FAIL" }
        );
    }
    Ok(if pass { EXIT_OK } else { EXIT_MISMATCH })
}

pub fn scenario(inv: &Invocation) -> Result<u8> {
    let cfg = load_config(&inv.config, inv.seed)?;
    let params = cfg.system_params();
    let initial = build(&cfg.scenario, params.alpha, params.kappa1)?;
    println!("{}", serde_json::to_string_pretty(&initial)?);
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;
    use thermoflock::certificates::CertificateSearch;
    use thermoflock::model::{AgentState, KernelSpec, SystemParams, SystemState};

    #[test]
    fn table_reports_reference_certificates() {
        let state = SystemState::new(vec![
            AgentState { position: vec![0.0, 0.0], velocity: vec![1.0, 0.0], temperature: 1.0 },
            AgentState { position: vec![1.0, 0.0], velocity: vec![0.5, 3f64.sqrt() / 2.0], temperature: 1.0 },
        ]);
        let params = SystemParams { n_agents: 2, dim: 2, kappa1: 3.0, kappa2: 1.0, alpha: 2.0, zeta: KernelSpec::default() };
        let suite = CertificateSuite::evaluate(&state, &params, &CertificateSearch::default());
        let table = certificate_table(&suite);
        let row = |id: &str| table.lines().find(|l| l.starts_with(id)).unwrap().to_string();
        assert!(row("thm32 ").contains(" yes "));
        assert!(row("thm32 ").contains("3.000000"));
        assert!(row("thm31 ").contains(" no "));
        assert!(table.contains("thm41_cond2"));
    }

    #[test]
    fn exit_codes_follow_termination() {
        assert_eq!(exit_code_for(&Termination::ReachedTEnd), EXIT_OK);
        assert_eq!(exit_code_for(&Termination::StepFailure { time: 0.0, dt: 0.0 }), EXIT_ERROR);
        assert_eq!(fmt_num(f64::INFINITY), "inf");
        assert_eq!(fmt_num(0.5), "0.500000");
        assert_eq!(fmt_num(1e6), "1.0000e6");
    }
}
