//! Run configuration, persistence and report emission.
//!
//! Configs and reports are JSON, time series are CSV, decay plots are SVG.
//! All writers are deterministic: the same inputs give the same bytes.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::certificates::{CertificateSearch, CertificateSuite, FlockingCertificate};
use crate::diagnostics::{compute_frames, DiagnosticsFrame};
use crate::error::{Error, Result};
use crate::integrator::{run, CollisionEvent, IntegratorConfig, Termination, Trajectory};
use crate::model::{KernelSpec, SystemParams, SystemState};
use crate::scenarios::{build, ScenarioSpec};

/// Header of the diagnostics CSV. Column order is part of the file format.
pub const DIAGNOSTICS_HEADER: &str = "time,d_x,d_v,d_t,a_v,entropy,temp_sum,temp_min,temp_max,min_pair_dist,entropy_production,lyap_plus,lyap_minus";

/// Published JSON Schema for run configurations.
pub const RUN_CONFIG_SCHEMA: &str = include_str!("../../../schema/run_config.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    TrajectoryCsv,
    DiagnosticsCsv,
    EventsJson,
    CertificateJson,
    SvgPlots,
}

impl OutputKind {
    pub fn file_name(self) -> &'static str {
        match self {
            OutputKind::TrajectoryCsv => "trajectory.csv",
            OutputKind::DiagnosticsCsv => "diagnostics.csv",
            OutputKind::EventsJson => "events.json",
            OutputKind::CertificateJson => "certificate.json",
            OutputKind::SvgPlots => "decay.svg",
        }
    }
}

fn default_outputs() -> BTreeSet<OutputKind> {
    [OutputKind::DiagnosticsCsv, OutputKind::EventsJson, OutputKind::CertificateJson]
        .into_iter()
        .collect()
}

/// Model parameters as written in a config; the shape comes from the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub kappa1: f64,
    pub kappa2: f64,
    pub alpha: f64,
    #[serde(default)]
    pub zeta: KernelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_agents: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    pub params: ModelParams,
    pub integrator: IntegratorConfig,
    /// Sampling cadence; defaults to `t_end / 100`.
    #[serde(default)]
    pub output_dt: Option<f64>,
    #[serde(default = "default_outputs")]
    pub outputs: BTreeSet<OutputKind>,
    #[serde(default)]
    pub certificate_search: CertificateSearch,
}

fn config_err(pointer: &str, message: impl Into<String>) -> Error {
    Error::Config {
        pointer: pointer.to_string(),
        message: message.into(),
    }
}

impl RunConfig {
    /// Fills every optional field with its effective value.
    pub fn materialize(&mut self) {
        let (n, d) = self.scenario.shape();
        self.params.n_agents.get_or_insert(n);
        self.params.dim.get_or_insert(d);
        let t_end = self.integrator.t_end;
        self.output_dt
            .get_or_insert(if t_end > 0.0 { t_end / 100.0 } else { 1.0 });
    }

    pub fn output_dt(&self) -> f64 {
        self.output_dt
            .unwrap_or(if self.integrator.t_end > 0.0 { self.integrator.t_end / 100.0 } else { 1.0 })
    }

    pub fn system_params(&self) -> SystemParams {
        let (n, d) = self.scenario.shape();
        SystemParams {
            n_agents: self.params.n_agents.unwrap_or(n),
            dim: self.params.dim.unwrap_or(d),
            kappa1: self.params.kappa1,
            kappa2: self.params.kappa2,
            alpha: self.params.alpha,
            zeta: self.params.zeta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if !(p.alpha > 0.0 && p.alpha.is_finite()) {
            return Err(config_err("/params/alpha", format!("alpha must satisfy alpha > 0, got {}", p.alpha)));
        }
        for (name, v) in [("kappa1", p.kappa1), ("kappa2", p.kappa2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(config_err(&format!("/params/{name}"), format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        p.zeta
            .validate()
            .map_err(|e| config_err("/params/zeta", e.to_string()))?;
        self.scenario
            .validate()
            .map_err(|e| config_err("/scenario", e.to_string()))?;
        let (n, d) = self.scenario.shape();
        if p.n_agents.is_some_and(|v| v != n) {
            return Err(config_err("/params/n_agents", format!("scenario produces {n} agents")));
        }
        if p.dim.is_some_and(|v| v != d) {
            return Err(config_err("/params/dim", format!("scenario produces dimension {d}")));
        }
        self.system_params()
            .validate()
            .map_err(|e| config_err("/params", e.to_string()))?;
        self.integrator
            .validate()
            .map_err(|e| config_err("/integrator", e.to_string()))?;
        let t_end = self.integrator.t_end;
        if let Some(dt) = self.output_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(config_err("/output_dt", format!("output_dt must be positive, got {dt}")));
            }
            if t_end > 0.0 && dt > t_end {
                return Err(config_err("/output_dt", format!("output_dt {dt} exceeds t_end {t_end}")));
            }
        }
        let s = &self.certificate_search;
        if !(s.upper_factor > 1.0) || !(s.rel_tol > 0.0 && s.rel_tol < 1.0) || s.grid_points < 2 {
            return Err(config_err("/certificate_search", "need upper_factor > 1, rel_tol in (0, 1), grid_points >= 2"));
        }
        Ok(())
    }

    /// Pretty JSON of the config with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } | Segment::Enum { variant: key } => {
                out.push_str(&key.replace('~', "~0").replace('/', "~1"))
            }
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

/// Parses, validates and materializes a run configuration. Errors carry the
/// JSON pointer of the offending field.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = pointer_of(e.path());
        let inner = e.into_inner();
        config_err(&pointer, inner.to_string())
    })?;
    cfg.validate()?;
    cfg.materialize();
    Ok(cfg)
}

/// Everything one simulation produces.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: RunConfig,
    pub initial: SystemState,
    pub params: SystemParams,
    pub certificates: CertificateSuite,
    pub trajectory: Trajectory,
    pub frames: Vec<DiagnosticsFrame>,
}

/// Builds the scenario, evaluates the certificates, integrates and computes
/// diagnostics. The Lyapunov columns use the `thm32` certificate when it
/// holds.
pub fn execute(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let mut config = config.clone();
    config.materialize();
    let params = config.system_params();
    let initial = build(&config.scenario, params.alpha, params.kappa1)?;
    let certificates = CertificateSuite::evaluate(&initial, &params, &config.certificate_search);
    let trajectory = run(&initial, &params, &config.integrator, config.output_dt())?;
    let thm32 = certificates.thm32.as_ref().ok().filter(|c| c.satisfied);
    let frames = compute_frames(&trajectory.samples, &params, thm32);
    Ok(RunOutcome {
        config,
        initial,
        params,
        certificates,
        trajectory,
        frames,
    })
}

fn fmt_num(out: &mut String, x: f64) {
    write!(out, "{x:.16e}").expect("string write");
}

fn diagnostics_row(f: &DiagnosticsFrame) -> String {
    let mut row = String::new();
    let values = [
        f.time,
        f.d_x,
        f.d_v,
        f.d_t,
        f.a_v,
        f.entropy,
        f.temp_sum,
        f.temp_min,
        f.temp_max,
        f.min_pair_dist,
        f.entropy_production,
    ];
    for (k, v) in values.iter().enumerate() {
        if k > 0 {
            row.push(',');
        }
        fmt_num(&mut row, *v);
    }
    for v in [f.lyap_plus, f.lyap_minus] {
        row.push(',');
        if let Some(v) = v {
            fmt_num(&mut row, v);
        }
    }
    row
}

/// Diagnostics CSV: fixed header, 17 significant digits, empty fields for
/// absent Lyapunov values.
pub fn write_diagnostics<W: Write>(frames: &[DiagnosticsFrame], mut sink: W) -> Result<()> {
    let mut buf = String::with_capacity(64 + frames.len() * 300);
    buf.push_str(DIAGNOSTICS_HEADER);
    buf.push('\n');
    for f in frames {
        buf.push_str(&diagnostics_row(f));
        buf.push('\n');
    }
    sink.write_all(buf.as_bytes())?;
    Ok(())
}

/// Parses a diagnostics CSV written by [`write_diagnostics`].
pub fn read_diagnostics(text: &str) -> Result<Vec<DiagnosticsFrame>> {
    let mut lines = text.lines();
    if lines.next() != Some(DIAGNOSTICS_HEADER) {
        return Err(Error::InvalidState("diagnostics CSV header mismatch".into()));
    }
    let parse = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|e| Error::InvalidState(format!("bad number '{s}': {e}")))
    };
    let opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            parse(s).map(Some)
        }
    };
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let c: Vec<&str> = line.split(',').collect();
            if c.len() != 13 {
                return Err(Error::InvalidState(format!("expected 13 columns, got {}", c.len())));
            }
            Ok(DiagnosticsFrame {
                time: parse(c[0])?,
                d_x: parse(c[1])?,
                d_v: parse(c[2])?,
                d_t: parse(c[3])?,
                a_v: parse(c[4])?,
                entropy: parse(c[5])?,
                temp_sum: parse(c[6])?,
                temp_min: parse(c[7])?,
                temp_max: parse(c[8])?,
                min_pair_dist: parse(c[9])?,
                entropy_production: parse(c[10])?,
                lyap_plus: opt(c[11])?,
                lyap_minus: opt(c[12])?,
            })
        })
        .collect()
}

/// Trajectory CSV: one row per (sample, agent).
pub fn write_trajectory<W: Write>(samples: &[SystemState], mut sink: W) -> Result<()> {
    let dim = samples.first().map_or(0, |s| s.dim());
    let mut buf = String::from("time,agent");
    for k in 1..=dim {
        write!(buf, ",x_{k}").expect("string write");
    }
    for k in 1..=dim {
        write!(buf, ",v_{k}").expect("string write");
    }
    buf.push_str(",temperature\n");
    for s in samples {
        for (i, a) in s.agents.iter().enumerate() {
            fmt_num(&mut buf, s.time);
            write!(buf, ",{i}").expect("string write");
            for &x in a.position.iter().chain(&a.velocity) {
                buf.push(',');
                fmt_num(&mut buf, x);
            }
            buf.push(',');
            fmt_num(&mut buf, a.temperature);
            buf.push('\n');
        }
    }
    sink.write_all(buf.as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFailureReport {
    pub time: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventsReport {
    pub termination: String,
    pub end_time: f64,
    pub events: Vec<CollisionEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_failure: Option<StepFailureReport>,
}

impl EventsReport {
    pub fn of(trajectory: &Trajectory) -> Self {
        let step_failure = match trajectory.termination {
            Termination::StepFailure { time, dt } => Some(StepFailureReport { time, dt }),
            _ => None,
        };
        EventsReport {
            termination: trajectory.termination.label().to_string(),
            end_time: trajectory.final_state.time,
            events: trajectory.termination.collision().copied().into_iter().collect(),
            step_failure,
        }
    }
}

fn write_json<W: Write, T: Serialize>(value: &T, mut sink: W) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    sink.write_all(text.as_bytes())?;
    Ok(())
}

pub fn write_events<W: Write>(trajectory: &Trajectory, sink: W) -> Result<()> {
    write_json(&EventsReport::of(trajectory), sink)
}

pub fn write_certificate<W: Write>(certificate: &FlockingCertificate, sink: W) -> Result<()> {
    write_json(certificate, sink)
}

/// One theorem check in the report: a certificate or the reason it could
/// not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CertificateEntry {
    Certificate(FlockingCertificate),
    Failed { theorem: String, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub any_satisfied: bool,
    pub spacing_guarantee: bool,
    pub certificates: Vec<CertificateEntry>,
}

impl CertificateReport {
    pub fn of(suite: &CertificateSuite) -> Self {
        let entry = |theorem: &str, r: &std::result::Result<FlockingCertificate, String>| match r {
            Ok(c) => CertificateEntry::Certificate(c.clone()),
            Err(e) => CertificateEntry::Failed {
                theorem: theorem.to_string(),
                error: e.clone(),
            },
        };
        let mut certificates = vec![entry("thm31", &suite.thm31), entry("thm32", &suite.thm32)];
        match &suite.thm41 {
            Ok(r) => certificates.extend(r.certificates().cloned().map(CertificateEntry::Certificate)),
            Err(e) => certificates.push(CertificateEntry::Failed {
                theorem: "thm41".into(),
                error: e.clone(),
            }),
        }
        CertificateReport {
            any_satisfied: suite.any_satisfied(),
            spacing_guarantee: suite.spacing_guarantee(),
            certificates,
        }
    }
}

pub fn write_certificate_report<W: Write>(suite: &CertificateSuite, sink: W) -> Result<()> {
    write_json(&CertificateReport::of(suite), sink)
}

/// Log-scale SVG of `d_v` and `d_t` against time, with the certificate's
/// exponential envelopes dashed when one is supplied.
pub fn write_decay_svg<W: Write>(
    frames: &[DiagnosticsFrame],
    certificate: Option<&FlockingCertificate>,
    mut sink: W,
) -> Result<()> {
    const W_PX: f64 = 640.0;
    const H_PX: f64 = 400.0;
    const PAD: f64 = 50.0;
    let floor = 1e-16;

    let t0 = frames.first().map_or(0.0, |f| f.time);
    let t1 = frames.last().map_or(1.0, |f| f.time).max(t0 + 1e-300);
    let mut series: Vec<(&str, &str, bool, Vec<(f64, f64)>)> = vec![
        ("d_v", "#1f77b4", false, frames.iter().map(|f| (f.time, f.d_v)).collect()),
        ("d_t", "#d62728", false, frames.iter().map(|f| (f.time, f.d_t)).collect()),
    ];
    if let (Some(c), Some(f0)) = (certificate.filter(|c| c.satisfied), frames.first()) {
        let env = |v0: f64, rate: f64| -> Vec<(f64, f64)> {
            frames
                .iter()
                .map(|f| (f.time, v0 * (-rate * (f.time - t0)).exp()))
                .collect()
        };
        series.push(("d_v bound", "#1f77b4", true, env(f0.d_v, c.rate_v)));
        series.push(("d_t bound", "#d62728", true, env(f0.d_t, c.rate_t)));
    }

    let logs = series
        .iter()
        .flat_map(|s| s.3.iter().map(|p| p.1.max(floor).log10()));
    let (mut lo, mut hi) = logs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (-1.0, 0.0);
    }
    let (lo, hi) = (lo.floor(), hi.ceil().max(lo.floor() + 1.0));
    let x = |t: f64| PAD + (t - t0) / (t1 - t0) * (W_PX - 2.0 * PAD);
    let y = |v: f64| H_PX - PAD - (v.max(floor).log10() - lo) / (hi - lo) * (H_PX - 2.0 * PAD);

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W_PX}" height="{H_PX}" viewBox="0 0 {W_PX} {H_PX}">"#
    )
    .expect("string write");
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).expect("string write");
    writeln!(
        svg,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W_PX - 2.0 * PAD,
        H_PX - 2.0 * PAD
    )
    .expect("string write");
    for e in (lo as i64)..=(hi as i64) {
        let yy = y(10f64.powi(e as i32));
        writeln!(
            svg,
            r##"<line x1="{PAD}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">1e{e}</text>"##,
            W_PX - PAD,
            PAD - 4.0,
            yy + 3.0
        )
        .expect("string write");
    }
    writeln!(
        svg,
        r#"<text x="{PAD}" y="{:.2}" font-size="10">t = {t0}</text><text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">t = {t1}</text>"#,
        H_PX - PAD + 14.0,
        W_PX - PAD,
        H_PX - PAD + 14.0
    )
    .expect("string write");
    for (k, (name, color, dashed, pts)) in series.iter().enumerate() {
        let mut d = String::new();
        for (i, (t, v)) in pts.iter().enumerate() {
            write!(d, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, x(*t), y(*v)).expect("string write");
        }
        let dash = if *dashed { r#" stroke-dasharray="6,4""# } else { "" };
        writeln!(svg, r#"<path d="{d}" fill="none" stroke="{color}"{dash}/>"#).expect("string write");
        writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" fill="{color}">{name}</text>"#,
            W_PX - PAD - 80.0,
            PAD + 14.0 * (k as f64 + 1.0)
        )
        .expect("string write");
    }
    svg.push_str("</svg>\n");
    sink.write_all(svg.as_bytes())?;
    Ok(())
}

/// Renders every requested artifact of a run, plus the materialized config,
/// as `(file name, bytes)` pairs in a fixed order.
pub fn render_outputs(outcome: &RunOutcome) -> Result<Vec<(&'static str, Vec<u8>)>> {
    let mut files = vec![("config.json", outcome.config.to_json().into_bytes())];
    for &kind in &outcome.config.outputs {
        let mut buf = Vec::new();
        match kind {
            OutputKind::TrajectoryCsv => write_trajectory(&outcome.trajectory.samples, &mut buf)?,
            OutputKind::DiagnosticsCsv => write_diagnostics(&outcome.frames, &mut buf)?,
            OutputKind::EventsJson => write_events(&outcome.trajectory, &mut buf)?,
            OutputKind::CertificateJson => write_certificate_report(&outcome.certificates, &mut buf)?,
            OutputKind::SvgPlots => write_decay_svg(&outcome.frames, outcome.certificates.flocking(), &mut buf)?,
        }
        files.push((kind.file_name(), buf));
    }
    Ok(files)
}

/// Writes [`render_outputs`] into `dir`, creating it if needed.
pub fn write_outputs(outcome: &RunOutcome, dir: &std::path::Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    render_outputs(outcome)?
        .into_iter()
        .map(|(name, bytes)| {
            let path = dir.join(name);
            std::fs::write(&path, bytes)?;
            Ok(path)
        })
        .collect()
}
