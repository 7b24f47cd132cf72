//! Shared fixtures for the integration and acceptance tests.
#![allow(dead_code)]

use thermoflock::model::{AgentState, KernelSpec, SystemParams, SystemState};
use thermoflock::scenarios::{build_random, ScenarioSpec};

pub fn agent(p: &[f64], v: &[f64], t: f64) -> AgentState {
    AgentState {
        position: p.to_vec(),
        velocity: v.to_vec(),
        temperature: t,
    }
}

pub fn params(n: usize, dim: usize, kappa1: f64, kappa2: f64, alpha: f64) -> SystemParams {
    SystemParams {
        n_agents: n,
        dim,
        kappa1,
        kappa2,
        alpha,
        zeta: KernelSpec::default(),
    }
}

/// Two agents a unit apart, headings 60° apart, equal temperatures.
pub fn reference_pair() -> SystemState {
    SystemState::new(vec![
        agent(&[0.0, 0.0], &[1.0, 0.0], 1.0),
        agent(&[1.0, 0.0], &[0.5, 3f64.sqrt() / 2.0], 1.0),
    ])
}

pub fn random_state(seed: u64, n: usize, dim: usize, cap: f64) -> SystemState {
    build_random(&ScenarioSpec::random_cap(seed, n, dim, cap)).expect("random scenario")
}

/// Symmetric approaching pair (heading ±theta, vertical gap) known to reach
/// contact for the weak kernel used in the collision tests.
pub const COLLIDING_THETA: f64 = 0.7;
pub const COLLIDING_KAPPA1: f64 = 0.5;

/// Contact time of the symmetric pair from the conserved quantity
/// `atanh(sin θ) − κ₁ g^(1−α) / (2(1−α))`, with `dg/dt = −2 sin θ`. Returns
/// `None` if the pair never touches. Only for `0 < α < 1`.
pub fn symmetric_contact_time(theta: f64, kappa1: f64, alpha: f64, gap: f64) -> Option<f64> {
    let q = 1.0 - alpha;
    let c = theta.sin().atanh() - kappa1 * gap.powf(q) / (2.0 * q);
    if c <= 0.0 {
        return None;
    }
    // Substitute g = u^(1/q) so the integrand is smooth at contact.
    let u_end = gap.powf(q);
    let integrand = |u: f64| {
        let s = (c + kappa1 * u / (2.0 * q)).tanh();
        let dg_du = u.powf(alpha / q) / q;
        dg_du / (2.0 * s)
    };
    let n = 20_000;
    let h = u_end / n as f64;
    let sum: f64 = (0..=n)
        .map(|k| {
            let w = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * integrand(k as f64 * h)
        })
        .sum();
    Some(sum * h / 3.0)
}

/// Five small scenarios without close encounters for oracle comparison.
pub fn smoke_scenarios() -> Vec<(String, SystemState, SystemParams)> {
    let mut out = Vec::new();
    for (k, &(seed, n, dim, alpha)) in [(1u64, 3usize, 2usize, 1.5), (2, 3, 3, 2.0), (3, 4, 2, 1.0), (4, 5, 2, 0.5), (5, 3, 2, 2.5)]
        .iter()
        .enumerate()
    {
        let mut spec = ScenarioSpec::random_cap(seed, n, dim, 0.4);
        spec.position_box = 2.0;
        spec.min_initial_gap = 0.3;
        let state = build_random(&spec).expect("smoke scenario");
        out.push((format!("smoke{k}"), state, params(n, dim, 1.0, 1.0, alpha)));
    }
    out
}

/// Tightly packed, strongly coupled agents: large derivatives make the
/// oracle's truncation error visible above rounding.
pub fn stiff_scenario() -> (SystemState, SystemParams) {
    let mut spec = ScenarioSpec::random_cap(9, 4, 2, 0.6);
    spec.min_initial_gap = 0.2;
    let state = build_random(&spec).expect("stiff scenario");
    (state, params(4, 2, 10.0, 10.0, 2.0))
}
