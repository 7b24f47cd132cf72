//! Monitored functionals and along-trajectory checks.
//!
//! Every check works on the sampled sequence with an explicit tolerance; the
//! continuous-time statements they mirror only hold almost everywhere, so the
//! sample sequence is the computable proxy.

use serde::Serialize;

use crate::certificates::{signed_kernel_primitive, FlockingCertificate, Theorem};
use crate::error::{Error, Result};
use crate::model::{distance, dot, zeta_unchecked, SystemParams, SystemState};

/// Absolute per-step slack for the monotonicity and conservation checks.
pub const MONOTONE_TOL: f64 = 1e-9;
/// Relative slack on the exponential decay envelopes.
pub const DECAY_REL_TOL: f64 = 1e-6;
/// Absolute floor below which a diameter counts as zero: ten times the
/// default integrator tolerance, below which diameters are integration noise.
pub const DECAY_ABS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticsFrame {
    pub time: f64,
    pub d_x: f64,
    pub d_v: f64,
    pub d_t: f64,
    pub a_v: f64,
    pub entropy: f64,
    pub temp_sum: f64,
    pub temp_min: f64,
    pub temp_max: f64,
    pub min_pair_dist: f64,
    pub entropy_production: f64,
    pub lyap_plus: Option<f64>,
    pub lyap_minus: Option<f64>,
}

/// `max_{i,j} |x_i − x_j|`.
pub fn position_diameter(state: &SystemState) -> f64 {
    pair_max(state, |a, b| distance(&a.position, &b.position))
}

/// `max_{i,j} |v_i − v_j|`.
pub fn velocity_diameter(state: &SystemState) -> f64 {
    pair_max(state, |a, b| distance(&a.velocity, &b.velocity))
}

/// `max_{i,j} |T_i − T_j|`.
pub fn temperature_diameter(state: &SystemState) -> f64 {
    let (lo, hi) = temp_bounds(state);
    hi - lo
}

/// Velocity-pair angle `min_{i,j} <v_i, v_j>`, clamped to [−1, 1].
pub fn velocity_pair_angle(state: &SystemState) -> f64 {
    let mut m: f64 = 1.0;
    for (i, a) in state.agents.iter().enumerate() {
        for b in &state.agents[i + 1..] {
            m = m.min(dot(&a.velocity, &b.velocity));
        }
    }
    m.clamp(-1.0, 1.0)
}

pub fn entropy(state: &SystemState) -> f64 {
    state.agents.iter().map(|a| a.temperature.ln()).sum()
}

pub fn temp_bounds(state: &SystemState) -> (f64, f64) {
    state
        .agents
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| {
            (lo.min(a.temperature), hi.max(a.temperature))
        })
}

/// Entropy production `(κ₂ / 2N) Σ_{i,j} ζ_ij (1/T_i − 1/T_j)²`.
pub fn entropy_production(state: &SystemState, params: &SystemParams) -> f64 {
    let n = state.agents.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (&state.agents[i], &state.agents[j]);
            let r = distance(&a.position, &b.position);
            let w = 1.0 / a.temperature - 1.0 / b.temperature;
            acc += zeta_unchecked(r, &params.zeta) * w * w;
        }
    }
    // Each unordered pair appears twice in the double sum.
    params.kappa2 * acc / n as f64
}

fn pair_max(state: &SystemState, f: impl Fn(&crate::model::AgentState, &crate::model::AgentState) -> f64) -> f64 {
    let mut m: f64 = 0.0;
    for (i, a) in state.agents.iter().enumerate() {
        for b in &state.agents[i + 1..] {
            m = m.max(f(a, b));
        }
    }
    m
}

/// Lyapunov pair `L± = D_V ± (κ₁ A(0) / T_M) Φ(D_X)` with `Φ` anchored at the
/// initial position diameter.
pub fn lyapunov_pair(d_x: f64, d_v: f64, params: &SystemParams, cert: &FlockingCertificate) -> (f64, f64) {
    let c = &cert.initial;
    let weight = params.kappa1 * c.a_v0 / c.temp_max;
    let phi_int = signed_kernel_primitive(c.d_x0, d_x, params.alpha);
    (d_v + weight * phi_int, d_v - weight * phi_int)
}

/// All monitored functionals of one state. Lyapunov values are filled in
/// only when a `thm32` certificate is supplied.
pub fn compute_frame(
    state: &SystemState,
    params: &SystemParams,
    certificate: Option<&FlockingCertificate>,
) -> DiagnosticsFrame {
    let d_x = position_diameter(state);
    let d_v = velocity_diameter(state);
    let (temp_min, temp_max) = temp_bounds(state);
    let (lyap_plus, lyap_minus) = match certificate {
        Some(cert) if cert.theorem == Theorem::Thm32 => {
            let (p, m) = lyapunov_pair(d_x, d_v, params, cert);
            (Some(p), Some(m))
        }
        _ => (None, None),
    };
    DiagnosticsFrame {
        time: state.time,
        d_x,
        d_v,
        d_t: temp_max - temp_min,
        a_v: velocity_pair_angle(state),
        entropy: entropy(state),
        temp_sum: state.agents.iter().map(|a| a.temperature).sum(),
        temp_min,
        temp_max,
        min_pair_dist: crate::model::min_pair_distance(&state.agents).0,
        entropy_production: entropy_production(state, params),
        lyap_plus,
        lyap_minus,
    }
}

pub fn compute_frames(
    samples: &[SystemState],
    params: &SystemParams,
    certificate: Option<&FlockingCertificate>,
) -> Vec<DiagnosticsFrame> {
    samples.iter().map(|s| compute_frame(s, params, certificate)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Not evaluated because its precondition does not hold.
    pub skipped: bool,
    /// First sample index where the check fails.
    pub first_violation: Option<usize>,
    /// Largest amount by which the checked inequality is exceeded (≤ 0 when it holds everywhere).
    pub worst_excess: f64,
}

impl Check {
    fn skipped(name: &'static str) -> Self {
        Check {
            name,
            passed: true,
            skipped: true,
            first_violation: None,
            worst_excess: f64::NEG_INFINITY,
        }
    }

    /// Runs `excess(k)` over `range`; the check fails where the excess is positive.
    fn scan(name: &'static str, range: std::ops::Range<usize>, excess: impl Fn(usize) -> f64) -> Self {
        let mut first = None;
        let mut worst = f64::NEG_INFINITY;
        for k in range {
            let e = excess(k);
            worst = worst.max(e);
            if (e > 0.0 || e.is_nan()) && first.is_none() {
                first = Some(k);
            }
        }
        Check {
            name,
            passed: first.is_none(),
            skipped: false,
            first_violation: first,
            worst_excess: worst,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CheckReport {
    pub checks: Vec<Check>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Entropy nondecreasing, max temperature nonincreasing, min temperature
/// nondecreasing, temperature sum constant and (when `a_v(0) > 0`) the
/// velocity-pair angle nondecreasing, each within [`MONOTONE_TOL`] per
/// consecutive pair of samples.
pub fn check_monotonicity(frames: &[DiagnosticsFrame]) -> CheckReport {
    let n = frames.len();
    let steps = 1..n;
    let f = frames;
    let mut checks = vec![
        Check::scan("entropy_nondecreasing", steps.clone(), |k| {
            f[k - 1].entropy - f[k].entropy - MONOTONE_TOL
        }),
        Check::scan("temp_max_nonincreasing", steps.clone(), |k| {
            f[k].temp_max - f[k - 1].temp_max - MONOTONE_TOL
        }),
        Check::scan("temp_min_nondecreasing", steps.clone(), |k| {
            f[k - 1].temp_min - f[k].temp_min - MONOTONE_TOL
        }),
        Check::scan("temp_sum_constant", steps.clone(), |k| {
            (f[k].temp_sum - f[k - 1].temp_sum).abs() - MONOTONE_TOL
        }),
    ];
    if n > 0 && f[0].a_v > 0.0 {
        checks.push(Check::scan("a_v_nondecreasing", steps, |k| {
            f[k - 1].a_v - f[k].a_v - MONOTONE_TOL
        }));
    } else {
        checks.push(Check::skipped("a_v_nondecreasing"));
    }
    CheckReport { checks }
}

/// `|D_X(t_k) − D_X(t_{k−1})| ≤ max D_V · (t_k − t_{k−1})` between consecutive samples.
pub fn check_diameter_lipschitz(frames: &[DiagnosticsFrame]) -> CheckReport {
    let dv_max = frames.iter().fold(0.0f64, |m, f| m.max(f.d_v));
    let f = frames;
    CheckReport {
        checks: vec![Check::scan("diameter_lipschitz", 1..frames.len(), |k| {
            let dt = f[k].time - f[k - 1].time;
            (f[k].d_x - f[k - 1].d_x).abs() - dv_max * dt * (1.0 + 1e-9) - 1e-12
        })],
    }
}

/// Uniform cadence of a frame sequence, or an error if the samples are not
/// evenly spaced.
pub fn uniform_cadence(frames: &[DiagnosticsFrame]) -> Result<f64> {
    if frames.len() < 3 {
        return Err(Error::Precondition(
            "entropy-rate check needs at least three samples".into(),
        ));
    }
    let dt = frames[1].time - frames[0].time;
    for w in frames.windows(2) {
        let step = w[1].time - w[0].time;
        if (step - dt).abs() > 1e-9 * dt.abs().max(1.0) {
            return Err(Error::Precondition(format!(
                "samples are not uniformly spaced ({step} vs {dt})"
            )));
        }
    }
    Ok(dt)
}

/// Second-order finite-difference slopes of the entropy at every sample
/// (central inside, one-sided at the ends).
pub fn entropy_slopes(frames: &[DiagnosticsFrame]) -> Result<Vec<f64>> {
    let dt = uniform_cadence(frames)?;
    let s: Vec<f64> = frames.iter().map(|f| f.entropy).collect();
    let n = s.len();
    let mut out = Vec::with_capacity(n);
    out.push((-3.0 * s[0] + 4.0 * s[1] - s[2]) / (2.0 * dt));
    for k in 1..n - 1 {
        out.push((s[k + 1] - s[k - 1]) / (2.0 * dt));
    }
    out.push((3.0 * s[n - 1] - 4.0 * s[n - 2] + s[n - 3]) / (2.0 * dt));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyRateReport {
    pub output_dt: f64,
    pub max_mismatch: f64,
    pub tolerance: f64,
    pub check: Check,
}

/// Compares finite-difference entropy slopes with the closed-form production.
/// Tolerance: `max(1e-6, 5 dt² · max(1, max production))`.
pub fn check_entropy_rate(frames: &[DiagnosticsFrame]) -> Result<EntropyRateReport> {
    let dt = uniform_cadence(frames)?;
    let slopes = entropy_slopes(frames)?;
    let scale = frames
        .iter()
        .fold(1.0f64, |m, f| m.max(f.entropy_production.abs()));
    let tolerance = 1e-6f64.max(5.0 * dt * dt * scale);
    let mismatch: Vec<f64> = slopes
        .iter()
        .zip(frames)
        .map(|(s, f)| (s - f.entropy_production).abs())
        .collect();
    let max_mismatch = mismatch.iter().fold(0.0f64, |m, &x| m.max(x));
    let check = Check::scan("entropy_rate", 0..frames.len(), |k| mismatch[k] - tolerance);
    Ok(EntropyRateReport {
        output_dt: dt,
        max_mismatch,
        tolerance,
        check,
    })
}

/// Checks the decay envelopes promised by a satisfied certificate at every
/// sample: bounded position diameter, exponential velocity and temperature
/// alignment and, when present, nonincreasing Lyapunov values.
pub fn check_decay_bounds(frames: &[DiagnosticsFrame], cert: &FlockingCertificate) -> Result<CheckReport> {
    let d_x_inf = match (cert.satisfied, cert.d_x_inf) {
        (true, Some(d)) => d,
        _ => {
            return Err(Error::Precondition(format!(
                "{} certificate is not satisfied",
                cert.theorem.id()
            )))
        }
    };
    if frames.is_empty() {
        return Ok(CheckReport::default());
    }
    let f0 = frames[0];
    let strict = cert.theorem == Theorem::Thm31;
    let mut checks = vec![
        Check::scan("group_formation", 0..frames.len(), |k| {
            let e = frames[k].d_x - d_x_inf;
            if strict && e == 0.0 {
                f64::MIN_POSITIVE
            } else {
                e
            }
        }),
        Check::scan("velocity_decay", 0..frames.len(), |k| {
            let t = frames[k].time - f0.time;
            let bound = f0.d_v * (-cert.rate_v * t).exp() * (1.0 + DECAY_REL_TOL);
            frames[k].d_v - bound.max(DECAY_ABS_FLOOR)
        }),
        Check::scan("temperature_decay", 0..frames.len(), |k| {
            let t = frames[k].time - f0.time;
            let bound = f0.d_t * (-cert.rate_t * t).exp() * (1.0 + DECAY_REL_TOL);
            frames[k].d_t - bound.max(DECAY_ABS_FLOOR)
        }),
    ];
    for (name, get) in [
        ("lyapunov_plus_nonincreasing", (|f: &DiagnosticsFrame| f.lyap_plus) as fn(&DiagnosticsFrame) -> Option<f64>),
        ("lyapunov_minus_nonincreasing", |f: &DiagnosticsFrame| f.lyap_minus),
    ] {
        if frames.iter().all(|f| get(f).is_some()) {
            checks.push(Check::scan(name, 1..frames.len(), |k| {
                get(&frames[k]).unwrap() - get(&frames[k - 1]).unwrap() - MONOTONE_TOL
            }));
        } else {
            checks.push(Check::skipped(name));
        }
    }
    Ok(CheckReport { checks })
}
