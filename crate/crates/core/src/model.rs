//! Domain types, communication kernels and the right-hand sides of the
//! unit-speed thermodynamic Cucker–Smale system
//!
//! ```text
//! dx_i/dt = v_i
//! dv_i/dt = (κ₁/N) Σ_j φ(|x_i − x_j|) (v_j − ⟨v_j, v_i⟩ v_i) / T_j
//! dT_i/dt = (κ₂/N) Σ_j ζ(|x_i − x_j|) (1/T_i − 1/T_j)
//! ```
//!
//! with φ(r) = r^(−α). Every function here is pure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `| |v| − 1 |` accepted for a velocity to count as unit length.
pub const UNIT_SPEED_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentState {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    ConstantOne,
    RationalDecay,
    SingularPower,
}

/// Temperature communication kernel ζ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelFamily,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_beta() -> f64 {
    2.0
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            family: KernelFamily::RationalDecay,
            beta: 2.0,
        }
    }
}

impl KernelSpec {
    pub fn constant_one() -> Self {
        KernelSpec {
            family: KernelFamily::ConstantOne,
            beta: 0.0,
        }
    }

    pub fn rational_decay(beta: f64) -> Self {
        KernelSpec {
            family: KernelFamily::RationalDecay,
            beta,
        }
    }

    pub fn singular_power(beta: f64) -> Self {
        KernelSpec {
            family: KernelFamily::SingularPower,
            beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidParams(format!(
                "zeta beta must be a finite nonnegative number, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub n_agents: usize,
    pub dim: usize,
    pub kappa1: f64,
    pub kappa2: f64,
    pub alpha: f64,
    pub zeta: KernelSpec,
}

impl SystemParams {
    /// Checks the parameter invariants. Zero couplings are allowed so that the
    /// free-streaming limit can be exercised; negative ones are not.
    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 2 {
            return Err(Error::InvalidParams(format!(
                "n_agents must be at least 2, got {}",
                self.n_agents
            )));
        }
        if self.dim < 1 {
            return Err(Error::InvalidParams("dim must be at least 1".into()));
        }
        for (name, value) in [("kappa1", self.kappa1), ("kappa2", self.kappa2)] {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "{name} must be finite and nonnegative, got {value}"
                )));
            }
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParams(format!(
                "alpha must satisfy alpha > 0, got {}",
                self.alpha
            )));
        }
        self.zeta.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub time: f64,
    pub agents: Vec<AgentState>,
}

impl SystemState {
    pub fn new(agents: Vec<AgentState>) -> Self {
        SystemState { time: 0.0, agents }
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn dim(&self) -> usize {
        self.agents.first().map_or(0, |a| a.position.len())
    }

    /// Checks shapes against `params`, unit speed, positive temperatures and
    /// distinct positions.
    pub fn validate(&self, params: &SystemParams) -> Result<()> {
        if self.agents.len() != params.n_agents {
            return Err(Error::InvalidState(format!(
                "expected {} agents, found {}",
                params.n_agents,
                self.agents.len()
            )));
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.position.len() != params.dim || a.velocity.len() != params.dim {
                return Err(Error::InvalidState(format!(
                    "agent {i} does not have dimension {}",
                    params.dim
                )));
            }
            if a.position.iter().chain(&a.velocity).any(|c| !c.is_finite()) {
                return Err(Error::InvalidState(format!("agent {i} has non-finite entries")));
            }
            let speed = norm(&a.velocity);
            if (speed - 1.0).abs() > UNIT_SPEED_TOL {
                return Err(Error::InvalidState(format!(
                    "agent {i} has speed {speed}, expected unit speed"
                )));
            }
            if !(a.temperature > 0.0) || !a.temperature.is_finite() {
                return Err(Error::InvalidState(format!(
                    "agent {i} has nonpositive temperature {}",
                    a.temperature
                )));
            }
        }
        let (dist, (i, j)) = min_pair_distance(&self.agents);
        if dist <= 0.0 {
            return Err(Error::Collision(i, j));
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Smallest pairwise distance and the pair attaining it (lowest index pair on ties).
pub fn min_pair_distance(agents: &[AgentState]) -> (f64, (usize, usize)) {
    let mut best = (f64::INFINITY, (0, 1));
    for i in 0..agents.len() {
        for j in (i + 1)..agents.len() {
            let r = distance(&agents[i].position, &agents[j].position);
            if r < best.0 {
                best = (r, (i, j));
            }
        }
    }
    best
}

/// Velocity kernel φ(r) = r^(−α).
pub fn phi_eval(r: f64, alpha: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("phi is singular at r = {r}")));
    }
    Ok(phi_unchecked(r, alpha))
}

#[inline]
pub(crate) fn phi_unchecked(r: f64, alpha: f64) -> f64 {
    r.powf(-alpha)
}

/// Temperature kernel ζ.
pub fn zeta_eval(r: f64, spec: &KernelSpec) -> Result<f64> {
    match spec.family {
        KernelFamily::ConstantOne | KernelFamily::RationalDecay if !(r >= 0.0) => Err(
            Error::Domain(format!("zeta requires a nonnegative distance, got {r}")),
        ),
        KernelFamily::SingularPower if !(r > 0.0) => Err(Error::Domain(format!(
            "singular zeta is undefined at r = {r}"
        ))),
        _ => Ok(zeta_unchecked(r, spec)),
    }
}

#[inline]
pub(crate) fn zeta_unchecked(r: f64, spec: &KernelSpec) -> f64 {
    match spec.family {
        KernelFamily::ConstantOne => 1.0,
        KernelFamily::RationalDecay => (1.0 + r * r).powf(-0.5 * spec.beta),
        KernelFamily::SingularPower => r.powf(-spec.beta),
    }
}

/// Flat storage of a state: all positions, then all velocities, then all
/// temperatures. The integrators work on this layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub dim: usize,
}

impl Layout {
    pub fn of(params: &SystemParams) -> Self {
        Layout {
            n: params.n_agents,
            dim: params.dim,
        }
    }

    pub fn len(&self) -> usize {
        self.n * (2 * self.dim + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn pos(&self, i: usize) -> std::ops::Range<usize> {
        i * self.dim..(i + 1) * self.dim
    }

    #[inline]
    pub fn vel(&self, i: usize) -> std::ops::Range<usize> {
        let off = self.n * self.dim;
        off + i * self.dim..off + (i + 1) * self.dim
    }

    #[inline]
    pub fn temp(&self, i: usize) -> usize {
        2 * self.n * self.dim + i
    }

    pub fn pack(&self, state: &SystemState) -> Vec<f64> {
        let mut y = vec![0.0; self.len()];
        for (i, a) in state.agents.iter().enumerate() {
            y[self.pos(i)].copy_from_slice(&a.position);
            y[self.vel(i)].copy_from_slice(&a.velocity);
            y[self.temp(i)] = a.temperature;
        }
        y
    }

    pub fn unpack(&self, time: f64, y: &[f64]) -> SystemState {
        let agents = (0..self.n)
            .map(|i| AgentState {
                position: y[self.pos(i)].to_vec(),
                velocity: y[self.vel(i)].to_vec(),
                temperature: y[self.temp(i)],
            })
            .collect();
        SystemState { time, agents }
    }

    /// Minimum pairwise distance of a packed state, lowest index pair on ties.
    pub fn min_pair_distance(&self, y: &[f64]) -> (f64, (usize, usize)) {
        let mut best = (f64::INFINITY, (0, 1));
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let r = distance(&y[self.pos(i)], &y[self.pos(j)]);
                if r < best.0 {
                    best = (r, (i, j));
                }
            }
        }
        best
    }
}

/// Evaluates the full right-hand side on a packed state, writing into `out`.
///
/// Pairs are visited in ascending `(i, j)` order with `i < j`, so the result
/// is bitwise reproducible. The temperature exchange is accumulated
/// antisymmetrically, one signed contribution per pair.
pub fn eval_rhs(params: &SystemParams, layout: &Layout, y: &[f64], out: &mut [f64]) -> Result<()> {
    let (n, d) = (layout.n, layout.dim);
    debug_assert_eq!(y.len(), layout.len());
    debug_assert_eq!(out.len(), layout.len());

    for i in 0..n {
        let t = y[layout.temp(i)];
        if !(t > 0.0) {
            return Err(Error::Domain(format!(
                "agent {i} has nonpositive temperature {t}"
            )));
        }
    }

    // dx/dt = v
    let voff = n * d;
    out[..voff].copy_from_slice(&y[voff..2 * voff]);
    out[voff..].iter_mut().for_each(|o| *o = 0.0);

    for i in 0..n {
        let xi = &y[layout.pos(i)];
        let vi = &y[layout.vel(i)];
        let ti = y[layout.temp(i)];
        for j in (i + 1)..n {
            let xj = &y[layout.pos(j)];
            let vj = &y[layout.vel(j)];
            let tj = y[layout.temp(j)];
            let r = distance(xi, xj);
            if !(r > 0.0) {
                return Err(Error::Collision(i, j));
            }
            let phi = phi_unchecked(r, params.alpha);
            let zeta = zeta_unchecked(r, &params.zeta);
            let c = dot(vi, vj);

            let wi = phi / tj;
            let wj = phi / ti;
            for k in 0..d {
                out[voff + i * d + k] += wi * (vj[k] - c * vi[k]);
                out[voff + j * d + k] += wj * (vi[k] - c * vj[k]);
            }

            let flux = zeta * (1.0 / ti - 1.0 / tj);
            out[layout.temp(i)] += flux;
            out[layout.temp(j)] -= flux;
        }
    }

    let sv = params.kappa1 / n as f64;
    let st = params.kappa2 / n as f64;
    for i in 0..n {
        let vi = &y[layout.vel(i)];
        let dv = &mut out[layout.vel(i)];
        dv.iter_mut().for_each(|c| *c *= sv);
        // Remove the rounding residue along v_i; exactly zero on the sphere.
        let vv = dot(vi, vi);
        if vv > 0.0 {
            let proj = dot(dv, vi) / vv;
            for k in 0..d {
                dv[k] -= proj * vi[k];
            }
        }
        out[layout.temp(i)] *= st;
    }
    Ok(())
}

fn check_shape(state: &SystemState, params: &SystemParams) -> Result<Layout> {
    if state.agents.len() != params.n_agents
        || state
            .agents
            .iter()
            .any(|a| a.position.len() != params.dim || a.velocity.len() != params.dim)
    {
        return Err(Error::InvalidState(format!(
            "state shape does not match n_agents = {}, dim = {}",
            params.n_agents, params.dim
        )));
    }
    Ok(Layout::of(params))
}

/// `dv_i/dt` for every agent.
pub fn velocity_rhs(state: &SystemState, params: &SystemParams) -> Result<Vec<Vec<f64>>> {
    let layout = check_shape(state, params)?;
    let y = layout.pack(state);
    let mut out = vec![0.0; layout.len()];
    eval_rhs(params, &layout, &y, &mut out)?;
    Ok((0..layout.n).map(|i| out[layout.vel(i)].to_vec()).collect())
}

/// `dT_i/dt` for every agent.
pub fn temperature_rhs(state: &SystemState, params: &SystemParams) -> Result<Vec<f64>> {
    let layout = check_shape(state, params)?;
    let y = layout.pack(state);
    let mut out = vec![0.0; layout.len()];
    eval_rhs(params, &layout, &y, &mut out)?;
    Ok((0..layout.n).map(|i| out[layout.temp(i)]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn agent(p: &[f64], v: &[f64], t: f64) -> AgentState {
        AgentState {
            position: p.to_vec(),
            velocity: v.to_vec(),
            temperature: t,
        }
    }

    fn params(n: usize, d: usize, k1: f64, k2: f64, alpha: f64, zeta: KernelSpec) -> SystemParams {
        SystemParams {
            n_agents: n,
            dim: d,
            kappa1: k1,
            kappa2: k2,
            alpha,
            zeta,
        }
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi_eval(1.0, 1.7).unwrap(), 1.0);
        assert_eq!(phi_eval(4.0, 0.5).unwrap(), 0.5);
        assert_eq!(phi_eval(0.25, 2.0).unwrap(), 16.0);
        assert!(matches!(phi_eval(0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(phi_eval(-1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn phi_is_strictly_decreasing() {
        let rs = [0.01, 0.1, 0.5, 1.0, 2.0, 10.0];
        for alpha in [0.3, 1.0, 2.5] {
            for w in rs.windows(2) {
                assert!(phi_eval(w[0], alpha).unwrap() > phi_eval(w[1], alpha).unwrap());
            }
        }
    }

    #[test]
    fn zeta_values() {
        for r in [0.0, 0.3, 7.0, 1e6] {
            assert_eq!(zeta_eval(r, &KernelSpec::constant_one()).unwrap(), 1.0);
        }
        assert_eq!(zeta_eval(1.0, &KernelSpec::rational_decay(2.0)).unwrap(), 0.5);
        let z = zeta_eval(3.0, &KernelSpec::rational_decay(1.0)).unwrap();
        assert!((z - 0.316_227_766_016_837_94).abs() < 1e-6);
        assert_eq!(zeta_eval(2.0, &KernelSpec::singular_power(1.0)).unwrap(), 0.5);
        assert!(zeta_eval(0.0, &KernelSpec::singular_power(1.0)).is_err());
        assert!(zeta_eval(-0.1, &KernelSpec::rational_decay(2.0)).is_err());
    }

    #[test]
    fn bounded_zeta_families_are_monotone_and_bounded() {
        for spec in [
            KernelSpec::constant_one(),
            KernelSpec::rational_decay(0.5),
            KernelSpec::rational_decay(2.0),
            KernelSpec::rational_decay(5.0),
        ] {
            assert_eq!(zeta_eval(0.0, &spec).unwrap(), 1.0);
            let mut prev = 1.0;
            for k in 0..2000 {
                let r = k as f64 * 0.01;
                let z = zeta_eval(r, &spec).unwrap();
                assert!((0.0..=1.0).contains(&z));
                assert!(z <= prev);
                prev = z;
            }
        }
    }

    #[test]
    fn identical_velocities_give_zero_velocity_rhs() {
        let v = [0.6, 0.8];
        let state = SystemState::new(vec![
            agent(&[0.0, 0.0], &v, 1.0),
            agent(&[1.0, 0.3], &v, 2.0),
            agent(&[-0.5, 2.0], &v, 0.7),
        ]);
        let p = params(3, 2, 1.3, 1.0, 1.5, KernelSpec::default());
        for dv in velocity_rhs(&state, &p).unwrap() {
            assert!(norm(&dv) <= 1e-15, "{dv:?}");
        }
    }

    #[test]
    fn head_on_pair_has_zero_velocity_rhs() {
        for alpha in [0.5, 1.0, 2.0, 3.3] {
            let state = SystemState::new(vec![
                agent(&[0.0, 0.0], &[1.0, 0.0], 1.0),
                agent(&[1.0, 0.0], &[-1.0, 0.0], 1.0),
            ]);
            let p = params(2, 2, 1.0, 1.0, alpha, KernelSpec::default());
            for dv in velocity_rhs(&state, &p).unwrap() {
                assert_eq!(dv, vec![0.0, 0.0]);
            }
        }
    }

    #[test]
    fn orthogonal_pair_hand_value() {
        let state = SystemState::new(vec![
            agent(&[0.0, 0.0], &[1.0, 0.0], 1.0),
            agent(&[1.0, 0.0], &[0.0, 1.0], 1.0),
        ]);
        let p = params(2, 2, 1.0, 1.0, 1.0, KernelSpec::default());
        let dv = velocity_rhs(&state, &p).unwrap();
        assert_eq!(dv[0], vec![0.0, 0.5]);
        assert_eq!(dv[1], vec![0.5, 0.0]);
    }

    #[test]
    fn temperature_rhs_hand_values() {
        let state = SystemState::new(vec![
            agent(&[0.0, 0.0], &[1.0, 0.0], 1.0),
            agent(&[3.0, 0.0], &[0.0, 1.0], 2.0),
        ]);
        let p = params(2, 2, 1.0, 1.0, 1.0, KernelSpec::constant_one());
        assert_eq!(temperature_rhs(&state, &p).unwrap(), vec![0.25, -0.25]);

        let equal = SystemState::new(vec![
            agent(&[0.0, 0.0], &[1.0, 0.0], 1.5),
            agent(&[3.0, 0.0], &[0.0, 1.0], 1.5),
            agent(&[0.0, 4.0], &[0.0, -1.0], 1.5),
        ]);
        let p3 = params(3, 2, 1.0, 2.0, 1.0, KernelSpec::default());
        assert_eq!(temperature_rhs(&equal, &p3).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn coincident_positions_are_reported() {
        let state = SystemState::new(vec![
            agent(&[0.0, 0.0], &[1.0, 0.0], 1.0),
            agent(&[1.0, 0.0], &[0.0, 1.0], 1.0),
            agent(&[1.0, 0.0], &[0.0, 1.0], 1.0),
        ]);
        let p = params(3, 2, 1.0, 1.0, 1.0, KernelSpec::default());
        assert!(matches!(velocity_rhs(&state, &p), Err(Error::Collision(1, 2))));
    }

    #[test]
    fn nonpositive_temperature_is_a_domain_error() {
        let state = SystemState::new(vec![
            agent(&[0.0, 0.0], &[1.0, 0.0], 1.0),
            agent(&[1.0, 0.0], &[0.0, 1.0], 0.0),
        ]);
        let p = params(2, 2, 1.0, 1.0, 1.0, KernelSpec::default());
        assert!(matches!(temperature_rhs(&state, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn params_validation() {
        let good = params(2, 2, 1.0, 1.0, 1.0, KernelSpec::default());
        assert!(good.validate().is_ok());
        assert!(SystemParams { alpha: 0.0, ..good }.validate().is_err());
        assert!(SystemParams { n_agents: 1, ..good }.validate().is_err());
        assert!(SystemParams { dim: 0, ..good }.validate().is_err());
        assert!(SystemParams { kappa1: -1.0, ..good }.validate().is_err());
    }

    // --- property tests -------------------------------------------------

    fn unit(v: Vec<f64>) -> Vec<f64> {
        let n = norm(&v);
        v.into_iter().map(|c| c / n).collect()
    }

    fn arb_state(n: usize, d: usize) -> impl Strategy<Value = SystemState> {
        let agent = (
            prop::collection::vec(-5.0..5.0f64, d),
            prop::collection::vec(-1.0..1.0f64, d)
                .prop_filter("nonzero", |v| norm(v) > 1e-3),
            0.2..5.0f64,
        )
            .prop_map(|(p, v, t)| AgentState {
                position: p,
                velocity: unit(v),
                temperature: t,
            });
        prop::collection::vec(agent, n)
            .prop_filter("distinct", |a| min_pair_distance(a).0 > 1e-3)
            .prop_map(SystemState::new)
    }

    fn arb_params(n: usize, d: usize) -> impl Strategy<Value = SystemParams> {
        (0.1..10.0f64, 0.1..10.0f64, 0.2..3.0f64, 0usize..3, 0.0..3.0f64).prop_map(
            move |(k1, k2, alpha, fam, beta)| {
                let zeta = match fam {
                    0 => KernelSpec::constant_one(),
                    1 => KernelSpec::rational_decay(beta),
                    _ => KernelSpec::singular_power(beta),
                };
                params(n, d, k1, k2, alpha, zeta)
            },
        )
    }

    fn rotation(d: usize, angles: &[f64]) -> Vec<Vec<f64>> {
        match d {
            2 => {
                let (s, c) = angles[0].sin_cos();
                vec![vec![c, -s], vec![s, c]]
            }
            _ => {
                // Rz(a) * Ry(b) * Rx(c)
                let (sa, ca) = angles[0].sin_cos();
                let (sb, cb) = angles[1].sin_cos();
                let (sc, cc) = angles[2].sin_cos();
                vec![
                    vec![ca * cb, ca * sb * sc - sa * cc, ca * sb * cc + sa * sc],
                    vec![sa * cb, sa * sb * sc + ca * cc, sa * sb * cc - ca * sc],
                    vec![-sb, cb * sc, cb * cc],
                ]
            }
        }
    }

    fn apply(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
        m.iter().map(|row| dot(row, v)).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn velocity_rhs_is_tangent(
            (state, p) in (2usize..7, 1usize..4).prop_flat_map(|(n, d)| (arb_state(n, d), arb_params(n, d)))
        ) {
            let dv = velocity_rhs(&state, &p).unwrap();
            for (a, dvi) in state.agents.iter().zip(&dv) {
                let inner = dot(dvi, &a.velocity).abs();
                prop_assert!(inner <= 1e-12 * norm(dvi) + 1e-15, "inner {inner}, |dv| {}", norm(dvi));
            }
        }

        #[test]
        fn temperature_rhs_sums_to_zero(
            (state, p) in (2usize..12, 1usize..4).prop_flat_map(|(n, d)| (arb_state(n, d), arb_params(n, d)))
        ) {
            let dt = temperature_rhs(&state, &p).unwrap();
            let sum: f64 = dt.iter().sum();
            let max = dt.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            prop_assert!(sum.abs() <= 1e-13 * max, "sum {sum}, max {max}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn rhs_is_permutation_equivariant(
            (state, p, seed) in (3usize..7, 1usize..4)
                .prop_flat_map(|(n, d)| (arb_state(n, d), arb_params(n, d), any::<u64>()))
        ) {
            let n = state.agents.len();
            let mut perm: Vec<usize> = (0..n).collect();
            // Deterministic shuffle from the seed.
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let permuted = SystemState::new(perm.iter().map(|&k| state.agents[k].clone()).collect());
            let dv = velocity_rhs(&state, &p).unwrap();
            let dt = temperature_rhs(&state, &p).unwrap();
            let dv_p = velocity_rhs(&permuted, &p).unwrap();
            let dt_p = temperature_rhs(&permuted, &p).unwrap();
            for (slot, &k) in perm.iter().enumerate() {
                let scale = 1.0 + norm(&dv[k]);
                for c in 0..dv[k].len() {
                    prop_assert!((dv_p[slot][c] - dv[k][c]).abs() <= 1e-12 * scale);
                }
                prop_assert!((dt_p[slot] - dt[k]).abs() <= 1e-12 * (1.0 + dt[k].abs()));
            }
        }

        #[test]
        fn rhs_is_rotation_equivariant(
            (state, p, angles) in (2usize..7, 2usize..4)
                .prop_flat_map(|(n, d)| (arb_state(n, d), arb_params(n, d), prop::collection::vec(-3.2..3.2f64, 3)))
        ) {
            let d = state.dim();
            let m = rotation(d, &angles);
            let rotated = SystemState::new(
                state.agents.iter().map(|a| AgentState {
                    position: apply(&m, &a.position),
                    velocity: unit(apply(&m, &a.velocity)),
                    temperature: a.temperature,
                }).collect(),
            );
            let dv = velocity_rhs(&state, &p).unwrap();
            let dt = temperature_rhs(&state, &p).unwrap();
            let dv_r = velocity_rhs(&rotated, &p).unwrap();
            let dt_r = temperature_rhs(&rotated, &p).unwrap();
            for i in 0..dv.len() {
                let expect = apply(&m, &dv[i]);
                let scale = 1.0 + norm(&dv[i]);
                for c in 0..d {
                    prop_assert!((dv_r[i][c] - expect[c]).abs() <= 1e-9 * scale);
                }
                prop_assert!((dt_r[i] - dt[i]).abs() <= 1e-9 * (1.0 + dt[i].abs()));
            }
        }
    }
}
