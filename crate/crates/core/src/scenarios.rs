//! Initial-condition builders.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, min_pair_distance, norm, AgentState, SystemState};

/// Total number of position draws allowed before a random scenario is declared infeasible.
pub const MAX_REJECTIONS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    RandomCap,
    Example21,
    Prop41,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::n_agents")]
    pub n_agents: usize,
    #[serde(default = "defaults::dim")]
    pub dim: usize,
    /// Half-angle of the cone the random velocities are drawn from.
    #[serde(default = "defaults::velocity_cap_angle")]
    pub velocity_cap_angle: f64,
    /// Edge of the cube positions are drawn from.
    #[serde(default = "defaults::position_box")]
    pub position_box: f64,
    #[serde(default = "defaults::min_initial_gap")]
    pub min_initial_gap: f64,
    #[serde(default = "defaults::temp_range")]
    pub temp_range: (f64, f64),
    /// Initial separation for the two-agent constructions.
    #[serde(default = "defaults::gap")]
    pub gap: f64,
    /// Explicit initial state for `custom`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<Vec<AgentState>>,
}

mod defaults {
    pub fn n_agents() -> usize {
        5
    }
    pub fn dim() -> usize {
        2
    }
    pub fn velocity_cap_angle() -> f64 {
        0.3
    }
    pub fn position_box() -> f64 {
        1.0
    }
    pub fn min_initial_gap() -> f64 {
        0.05
    }
    pub fn temp_range() -> (f64, f64) {
        (1.0, 2.0)
    }
    pub fn gap() -> f64 {
        1.0
    }
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind) -> Self {
        ScenarioSpec {
            kind,
            seed: 0,
            n_agents: defaults::n_agents(),
            dim: defaults::dim(),
            velocity_cap_angle: defaults::velocity_cap_angle(),
            position_box: defaults::position_box(),
            min_initial_gap: defaults::min_initial_gap(),
            temp_range: defaults::temp_range(),
            gap: defaults::gap(),
            agents: None,
        }
    }

    pub fn random_cap(seed: u64, n_agents: usize, dim: usize, cap: f64) -> Self {
        ScenarioSpec {
            seed,
            n_agents,
            dim,
            velocity_cap_angle: cap,
            ..ScenarioSpec::new(ScenarioKind::RandomCap)
        }
    }

    pub fn custom(agents: Vec<AgentState>) -> Self {
        ScenarioSpec {
            n_agents: agents.len(),
            dim: agents.first().map_or(0, |a| a.position.len()),
            agents: Some(agents),
            ..ScenarioSpec::new(ScenarioKind::Custom)
        }
    }

    /// Number of agents and dimension of the state this spec produces.
    pub fn shape(&self) -> (usize, usize) {
        match self.kind {
            ScenarioKind::RandomCap => (self.n_agents, self.dim),
            ScenarioKind::Example21 | ScenarioKind::Prop41 => (2, 2),
            ScenarioKind::Custom => self
                .agents
                .as_ref()
                .map_or((0, 0), |a| (a.len(), a.first().map_or(0, |x| x.position.len()))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ScenarioKind::RandomCap => {
                if self.n_agents < 2 || self.dim < 1 {
                    return Err(Error::InvalidParams(
                        "random scenario needs n_agents >= 2 and dim >= 1".into(),
                    ));
                }
                let cap = self.velocity_cap_angle;
                if !(cap > 0.0 && (2.0 * cap).cos() > 0.0) {
                    return Err(Error::InvalidParams(format!(
                        "velocity_cap_angle must lie in (0, pi/4) so that cos(2 cap) > 0, got {cap}"
                    )));
                }
                if !(self.position_box > 0.0) || !(self.min_initial_gap > 0.0) {
                    return Err(Error::InvalidParams(
                        "position_box and min_initial_gap must be positive".into(),
                    ));
                }
                let (lo, hi) = self.temp_range;
                if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                    return Err(Error::InvalidParams(format!(
                        "temp_range must satisfy 0 < lo <= hi, got ({lo}, {hi})"
                    )));
                }
            }
            ScenarioKind::Example21 | ScenarioKind::Prop41 => {
                if !(self.gap > 0.0) || !self.gap.is_finite() {
                    return Err(Error::InvalidParams(format!("gap must be positive, got {}", self.gap)));
                }
            }
            ScenarioKind::Custom => {
                if self.agents.as_ref().map_or(true, |a| a.len() < 2) {
                    return Err(Error::InvalidParams(
                        "custom scenario needs an explicit list of at least two agents".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Builds the initial state described by `spec`. The symmetric `prop41` construction
/// depends on the model parameters, hence `alpha` and `kappa1`.
pub fn build(spec: &ScenarioSpec, alpha: f64, kappa1: f64) -> Result<SystemState> {
    spec.validate()?;
    match spec.kind {
        ScenarioKind::RandomCap => build_random(spec),
        ScenarioKind::Example21 => build_example21(spec.gap),
        ScenarioKind::Prop41 => build_prop41(alpha, kappa1, spec.gap).map(|p| p.state),
        ScenarioKind::Custom => Ok(SystemState::new(spec.agents.clone().unwrap_or_default())),
    }
}

fn gaussian_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

/// Uniform (surface measure) sample from the cap of half-angle `cap` around `axis`.
fn sample_cap(rng: &mut ChaCha8Rng, axis: &[f64], cap: f64) -> Vec<f64> {
    let dim = axis.len();
    if dim == 1 {
        return axis.to_vec();
    }
    // Polar angle density on S^{d-1} is proportional to sin^{d-2}(psi).
    let psi = if dim == 2 {
        cap * (2.0 * rng.random::<f64>() - 1.0)
    } else {
        let smax = cap.sin();
        loop {
            let psi = cap * rng.random::<f64>();
            let accept = (psi.sin() / smax).powi(dim as i32 - 2);
            if rng.random::<f64>() <= accept {
                break psi;
            }
        }
    };
    let w = if dim == 2 {
        vec![-axis[1], axis[0]]
    } else {
        loop {
            let mut w: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let p = dot(&w, axis);
            w.iter_mut().zip(axis).for_each(|(c, a)| *c -= p * a);
            let n = norm(&w);
            if n > 1e-9 {
                break w.into_iter().map(|c| c / n).collect();
            }
        }
    };
    let (s, c) = psi.sin_cos();
    let v: Vec<f64> = axis.iter().zip(&w).map(|(a, b)| c * a + s * b).collect();
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

/// Random positions in a cube with a minimum gap, velocities in a spherical
/// cap (so every pair of headings is within `2 * cap`), uniform temperatures.
pub fn build_random(spec: &ScenarioSpec) -> Result<SystemState> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, d) = (spec.n_agents, spec.dim);

    let mut positions: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut draws = 0usize;
    while positions.len() < n {
        if draws >= MAX_REJECTIONS {
            return Err(Error::Infeasible(format!(
                "could not place {n} agents with gap {} in a box of edge {} after {MAX_REJECTIONS} draws",
                spec.min_initial_gap, spec.position_box
            )));
        }
        draws += 1;
        let p: Vec<f64> = (0..d).map(|_| spec.position_box * rng.random::<f64>()).collect();
        let ok = positions
            .iter()
            .all(|q| crate::model::distance(q, &p) >= spec.min_initial_gap);
        if ok {
            positions.push(p);
        }
    }

    let axis = gaussian_unit(&mut rng, d);
    let (lo, hi) = spec.temp_range;
    let agents = positions
        .into_iter()
        .map(|position| {
            let velocity = sample_cap(&mut rng, &axis, spec.velocity_cap_angle);
            let temperature = if hi > lo { lo + (hi - lo) * rng.random::<f64>() } else { lo };
            AgentState {
                position,
                velocity,
                temperature,
            }
        })
        .collect();
    Ok(SystemState::new(agents))
}

/// Two agents on a line heading straight at each other.
pub fn build_example21(gap: f64) -> Result<SystemState> {
    if !(gap > 0.0) {
        return Err(Error::InvalidParams(format!("gap must be positive, got {gap}")));
    }
    Ok(SystemState::new(vec![
        AgentState {
            position: vec![0.0, 0.0],
            velocity: vec![1.0, 0.0],
            temperature: 1.0,
        },
        AgentState {
            position: vec![gap, 0.0],
            velocity: vec![-1.0, 0.0],
            temperature: 1.0,
        },
    ]))
}

/// Two agents stacked on the second axis (`x_1 = (0, 0)`, `x_2 = (0, gap)`)
/// with headings `±theta` from the first axis, so that `theta_1 + theta_2 = 0`.
pub fn symmetric_pair(theta: f64, gap: f64) -> SystemState {
    let (s, c) = theta.sin_cos();
    SystemState::new(vec![
        AgentState {
            position: vec![0.0, 0.0],
            velocity: vec![c, s],
            temperature: 1.0,
        },
        AgentState {
            position: vec![0.0, gap],
            velocity: vec![c, -s],
            temperature: 1.0,
        },
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop41Scenario {
    pub state: SystemState,
    pub theta: f64,
    /// Minimum pairwise heading inner product, `cos(2 theta)`.
    pub a_v0: f64,
    /// Comparison rate `a = kappa1 (1 + A(0)) / (2 (1 - alpha))`.
    pub rate_a: f64,
    /// `gap^alpha / (a alpha)`.
    pub collision_time_bound: f64,
}

/// The symmetric two-agent construction for weak singularity `0 < alpha < 1`.
///
/// `theta` solves `2 sin(theta) / cos^2(theta) = kappa1 gap^(1-alpha) / (1 - alpha)`,
/// which makes the heading difference `v_1^2 - v_2^2 = 2 sin(theta)` equal to
/// `kappa1 (1 + cos 2theta) gap^(1-alpha) / (2 (1 - alpha))`.
pub fn build_prop41(alpha: f64, kappa1: f64, gap: f64) -> Result<Prop41Scenario> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParams(format!(
            "the weak-singularity construction needs 0 < alpha < 1, got {alpha}"
        )));
    }
    if !(kappa1 > 0.0) || !(gap > 0.0) {
        return Err(Error::InvalidParams(
            "kappa1 and gap must be positive".into(),
        ));
    }
    let target = kappa1 * gap.powf(1.0 - alpha) / (1.0 - alpha);
    // 2 sin(t) - target cos^2(t) is increasing on (0, pi/2), negative at 0, 2 at pi/2.
    let f = |t: f64| 2.0 * t.sin() - target * t.cos() * t.cos();
    let (mut lo, mut hi) = (0.0f64, std::f64::consts::FRAC_PI_2);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    if !(theta > 0.0 && theta < std::f64::consts::FRAC_PI_2) || (hi - lo) > 1e-12 {
        return Err(Error::Infeasible(format!(
            "heading angle bisection failed for target {target}"
        )));
    }
    let a_v0 = (2.0 * theta).cos();
    let rate_a = kappa1 * (1.0 + a_v0) / (2.0 * (1.0 - alpha));
    let collision_time_bound = gap.powf(alpha) / (rate_a * alpha);
    Ok(Prop41Scenario {
        state: symmetric_pair(theta, gap),
        theta,
        a_v0,
        rate_a,
        collision_time_bound,
    })
}

/// Relative residual of `v_1^2 - v_2^2 = kappa1 (1 + A(0)) (x_2^2 - x_1^2)^(1-alpha) / (2 (1 - alpha))`
/// for a two-agent planar state.
pub fn prop41_residual(state: &SystemState, alpha: f64, kappa1: f64) -> f64 {
    let (a, b) = (&state.agents[0], &state.agents[1]);
    let lhs = a.velocity[1] - b.velocity[1];
    let a_v0 = dot(&a.velocity, &b.velocity).min(1.0);
    let sep = b.position[1] - a.position[1];
    let rhs = kappa1 * (1.0 + a_v0) * sep.powf(1.0 - alpha) / (2.0 * (1.0 - alpha));
    (lhs - rhs).abs() / rhs.abs()
}

/// Whether positions are pairwise distinct and every speed is one.
pub fn is_admissible(state: &SystemState) -> bool {
    state
        .agents
        .iter()
        .all(|a| (norm(&a.velocity) - 1.0).abs() <= crate::model::UNIT_SPEED_TOL && a.temperature > 0.0)
        && min_pair_distance(&state.agents).0 > 0.0
}
