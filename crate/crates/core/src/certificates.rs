//! Sufficient conditions for flocking and strict spacing, evaluated from
//! initial data.
//!
//! With `φ(r) = r^(−α)` every condition reduces to comparing the travel
//! budget `c·D^α`, `c = T_M D_V(0) / (κ₁ 𝒜(0))`, against a function of the
//! candidate diameter `D`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::diagnostics::{
    position_diameter, temp_bounds, temperature_diameter, velocity_diameter, velocity_pair_angle,
};
use crate::error::{Error, Result};
use crate::model::{min_pair_distance, phi_unchecked, zeta_unchecked, SystemParams, SystemState};

/// The conditions are strict; margins within this relative distance of zero
/// are boundary cases lost to rounding and are not certified.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    Thm31,
    Thm32,
    Thm41Cond1,
    Thm41Cond2,
}

impl Theorem {
    pub fn id(self) -> &'static str {
        match self {
            Theorem::Thm31 => "thm31",
            Theorem::Thm32 => "thm32",
            Theorem::Thm41Cond1 => "thm41_cond1",
            Theorem::Thm41Cond2 => "thm41_cond2",
        }
    }
}

/// Constants the conditions read off the initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialConstants {
    pub d_x0: f64,
    pub d_v0: f64,
    pub d_t0: f64,
    pub a_v0: f64,
    pub temp_max: f64,
}

impl InitialConstants {
    pub fn of(state: &SystemState) -> Self {
        InitialConstants {
            d_x0: position_diameter(state),
            d_v0: velocity_diameter(state),
            d_t0: temperature_diameter(state),
            a_v0: velocity_pair_angle(state),
            temp_max: temp_bounds(state).1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlockingCertificate {
    pub theorem: Theorem,
    pub satisfied: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_x_inf: Option<f64>,
    pub rate_v: f64,
    pub rate_t: f64,
    /// Slack of the defining inequality; `+∞` (written as `null`) when the
    /// right-hand side diverges.
    #[serde(serialize_with = "ser_margin", deserialize_with = "de_margin")]
    pub margin: f64,
    pub spacing_guarantee: bool,
    /// Coordinate axis (zero-based) of the winning spacing witness.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<usize>,
    pub initial: InitialConstants,
}

fn ser_margin<S: Serializer>(m: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if m.is_finite() {
        s.serialize_f64(*m)
    } else {
        s.serialize_none()
    }
}

fn de_margin<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// Grid search settings for the conditions without a closed-form witness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSearch {
    /// Grid spans `[D_X(0), upper_factor · D_X(0)]`.
    pub upper_factor: f64,
    /// Relative bisection tolerance on the refined witness.
    pub rel_tol: f64,
    pub grid_points: usize,
}

impl Default for CertificateSearch {
    fn default() -> Self {
        CertificateSearch {
            upper_factor: 1e6,
            rel_tol: 1e-10,
            grid_points: 4001,
        }
    }
}

impl CertificateSearch {
    fn validate(&self) -> Result<()> {
        if !(self.upper_factor > 1.0 && self.upper_factor.is_finite()) {
            return Err(Error::InvalidParams("upper_factor must be finite and > 1".into()));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::InvalidParams("rel_tol must lie in (0, 1)".into()));
        }
        if self.grid_points < 2 {
            return Err(Error::InvalidParams("grid_points must be at least 2".into()));
        }
        Ok(())
    }

    fn grid(&self, d_x0: f64) -> impl Iterator<Item = f64> + '_ {
        let last = (self.grid_points - 1) as f64;
        (0..self.grid_points).map(move |k| {
            if k == 0 {
                d_x0
            } else {
                d_x0 * self.upper_factor.powf(k as f64 / last)
            }
        })
    }
}

/// `∫_a^b r^(−α) dr` for `0 < a ≤ b ≤ +∞`.
pub fn kernel_primitive(a: f64, b: f64, alpha: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::Domain(format!("lower limit must be positive and finite, got {a}")));
    }
    if !(b >= a) {
        return Err(Error::Domain(format!("upper limit {b} below lower limit {a}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
    }
    Ok(primitive_unchecked(a, b, alpha))
}

fn primitive_unchecked(a: f64, b: f64, alpha: f64) -> f64 {
    if b == f64::INFINITY {
        return if alpha <= 1.0 {
            f64::INFINITY
        } else {
            a.powf(1.0 - alpha) / (alpha - 1.0)
        };
    }
    if alpha == 1.0 {
        (b / a).ln()
    } else {
        (b.powf(1.0 - alpha) - a.powf(1.0 - alpha)) / (1.0 - alpha)
    }
}

/// Oriented primitive `∫_a^b φ`, negative when `b < a`.
pub fn signed_kernel_primitive(a: f64, b: f64, alpha: f64) -> f64 {
    if b >= a {
        primitive_unchecked(a, b, alpha)
    } else {
        -primitive_unchecked(b, a, alpha)
    }
}

/// Smallest `D ≥ a` with `∫_a^D φ = target`, or `None` if the tail is too short.
fn invert_primitive(a: f64, target: f64, alpha: f64) -> Option<f64> {
    if target == 0.0 {
        return Some(a);
    }
    if alpha == 1.0 {
        return Some(a * target.exp()).filter(|d| d.is_finite());
    }
    let base = a.powf(1.0 - alpha) + (1.0 - alpha) * target;
    if base <= 0.0 {
        return None;
    }
    Some(base.powf(1.0 / (1.0 - alpha))).filter(|d| d.is_finite())
}

struct Setup {
    c: InitialConstants,
    /// `κ₁ 𝒜(0) / T_M`.
    weight: f64,
}

impl Setup {
    fn new(state: &SystemState, params: &SystemParams) -> Result<Self> {
        params.validate()?;
        if state.agents.len() != params.n_agents || state.dim() != params.dim {
            return Err(Error::InvalidState("state shape does not match params".into()));
        }
        if state.agents.len() < 2 {
            return Err(Error::Precondition("certificates need at least two agents".into()));
        }
        if min_pair_distance(&state.agents).0 <= 0.0 {
            return Err(Error::Precondition("initial positions are not pairwise distinct".into()));
        }
        let c = InitialConstants::of(state);
        if !(c.a_v0 > 0.0) {
            return Err(Error::Precondition(format!(
                "velocity-pair angle must be positive, got {}",
                c.a_v0
            )));
        }
        if !(params.kappa1 > 0.0) {
            return Err(Error::Precondition("kappa1 must be positive".into()));
        }
        Ok(Setup {
            weight: params.kappa1 * c.a_v0 / c.temp_max,
            c,
        })
    }

    /// Travel budget `T_M D_V(0) / (κ₁ 𝒜(0) φ(D))`.
    fn budget(&self, d: f64, alpha: f64) -> f64 {
        self.c.d_v0 / (self.weight * phi_unchecked(d, alpha))
    }

    fn certificate(
        &self,
        theorem: Theorem,
        params: &SystemParams,
        witness: Option<f64>,
        margin: f64,
    ) -> FlockingCertificate {
        let satisfied = witness.is_some() && margin > BOUNDARY_TOL * self.c.d_x0.max(1.0);
        let d = witness.filter(|_| satisfied);
        let (rate_v, rate_t) = match d {
            Some(d) => (
                self.weight * phi_unchecked(d, params.alpha),
                params.kappa2 * zeta_unchecked(d, &params.zeta) / (self.c.temp_max * self.c.temp_max),
            ),
            None => (0.0, 0.0),
        };
        let spacing = matches!(theorem, Theorem::Thm41Cond1 | Theorem::Thm41Cond2) && satisfied;
        FlockingCertificate {
            theorem,
            satisfied,
            d_x_inf: d,
            rate_v,
            rate_t,
            margin,
            spacing_guarantee: spacing,
            axis: None,
            initial: self.c,
        }
    }
}

/// Tail condition (`thm32`): `D_V(0) < (κ₁𝒜(0)/T_M) ∫_{D_X(0)}^∞ φ`. The witness is the
/// closed-form inversion of the primitive; for `α ≤ 1` the tail diverges and
/// the condition always holds.
pub fn check_thm32(initial: &SystemState, params: &SystemParams) -> Result<FlockingCertificate> {
    let s = Setup::new(initial, params)?;
    let tail = primitive_unchecked(s.c.d_x0, f64::INFINITY, params.alpha);
    let margin = if tail.is_infinite() {
        f64::INFINITY
    } else {
        s.weight * tail - s.c.d_v0
    };
    let witness = if margin > 0.0 {
        invert_primitive(s.c.d_x0, s.c.d_v0 / s.weight, params.alpha)
    } else {
        None
    };
    Ok(s.certificate(Theorem::Thm32, params, witness, margin))
}

/// Growth condition (`thm31`): some `D` with `g(D) = D − D_X(0) − c·D^α > 0`. Returns the
/// smallest witness found (refined by bisection); the margin is the largest
/// slack over the grid.
pub fn check_thm31(
    initial: &SystemState,
    params: &SystemParams,
    search: &CertificateSearch,
) -> Result<FlockingCertificate> {
    search.validate()?;
    let s = Setup::new(initial, params)?;
    let alpha = params.alpha;
    let g = |d: f64| d - s.c.d_x0 - s.budget(d, alpha);

    let mut prev = s.c.d_x0;
    let mut first_hit = None;
    let mut best = f64::NEG_INFINITY;
    for d in search.grid(s.c.d_x0) {
        let v = g(d);
        if v > 0.0 && first_hit.is_none() {
            first_hit = Some((prev, d));
        }
        best = best.max(v);
        prev = d;
    }

    let witness = first_hit.map(|(mut lo, mut hi)| {
        while hi - lo > search.rel_tol * hi {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    });
    Ok(s.certificate(Theorem::Thm31, params, witness, best))
}

/// Both branches of the strict-spacing theorem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingReport {
    pub cond1: FlockingCertificate,
    /// Present only for `α > 1`.
    pub cond2: Option<FlockingCertificate>,
}

impl SpacingReport {
    pub fn spacing_guarantee(&self) -> bool {
        self.cond1.spacing_guarantee || self.cond2.as_ref().is_some_and(|c| c.spacing_guarantee)
    }

    /// The satisfied branch, preferring the axis condition.
    pub fn certified(&self) -> Option<&FlockingCertificate> {
        std::iter::once(&self.cond1)
            .chain(self.cond2.as_ref())
            .find(|c| c.satisfied)
    }

    pub fn certificates(&self) -> impl Iterator<Item = &FlockingCertificate> {
        std::iter::once(&self.cond1).chain(self.cond2.as_ref())
    }
}

/// Smallest coordinate separation `min_{i≠j} |x_i^k − x_j^k|` on each axis.
pub fn axis_separations(state: &SystemState) -> Vec<f64> {
    (0..state.dim())
        .map(|k| {
            let mut m = f64::INFINITY;
            for (i, a) in state.agents.iter().enumerate() {
                for b in &state.agents[i + 1..] {
                    m = m.min((a.position[k] - b.position[k]).abs());
                }
            }
            m
        })
        .collect()
}

/// Spacing conditions: the axis condition (`thm41_cond1`) over every axis
/// and candidate `D`, and the kernel condition (`thm41_cond2`) when `α > 1`.
/// Candidates are the search grid plus the `thm31`/`thm32` witnesses; the best margin is reported per branch.
pub fn check_thm41(
    initial: &SystemState,
    params: &SystemParams,
    search: &CertificateSearch,
) -> Result<SpacingReport> {
    search.validate()?;
    let s = Setup::new(initial, params)?;
    let alpha = params.alpha;

    let mut candidates: Vec<f64> = search.grid(s.c.d_x0).collect();
    for extra in [check_thm31(initial, params, search)?, check_thm32(initial, params)?] {
        candidates.extend(extra.d_x_inf);
    }

    let reach = |d: f64| {
        let linear = d - s.c.d_x0;
        let integral = primitive_unchecked(s.c.d_x0, d, alpha) / phi_unchecked(d, alpha);
        linear.max(integral)
    };
    let seps = axis_separations(initial);

    let mut cond1 = (f64::NEG_INFINITY, None, None);
    let mut cond2 = (f64::NEG_INFINITY, None);
    for &d in &candidates {
        let budget = s.budget(d, alpha);
        let r = reach(d);
        for (k, &sep) in seps.iter().enumerate() {
            let m = r.min(sep) - budget;
            if m > cond1.0 {
                cond1 = (m, Some(d), Some(k));
            }
        }
        let m = r - budget;
        if m > cond2.0 {
            cond2 = (m, Some(d));
        }
    }

    let mut c1 = s.certificate(Theorem::Thm41Cond1, params, cond1.1, cond1.0);
    c1.axis = cond1.2.filter(|_| c1.satisfied);
    let c2 = (alpha > 1.0).then(|| s.certificate(Theorem::Thm41Cond2, params, cond2.1, cond2.0));
    Ok(SpacingReport { cond1: c1, cond2: c2 })
}

/// Outcome of every applicable check; a failed precondition is kept as text.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateSuite {
    pub thm31: std::result::Result<FlockingCertificate, String>,
    pub thm32: std::result::Result<FlockingCertificate, String>,
    pub thm41: std::result::Result<SpacingReport, String>,
}

impl CertificateSuite {
    pub fn evaluate(initial: &SystemState, params: &SystemParams, search: &CertificateSearch) -> Self {
        CertificateSuite {
            thm31: check_thm31(initial, params, search).map_err(|e| e.to_string()),
            thm32: check_thm32(initial, params).map_err(|e| e.to_string()),
            thm41: check_thm41(initial, params, search).map_err(|e| e.to_string()),
        }
    }

    pub fn all(&self) -> Vec<&FlockingCertificate> {
        let mut out: Vec<&FlockingCertificate> = Vec::new();
        out.extend(self.thm31.as_ref().ok());
        out.extend(self.thm32.as_ref().ok());
        if let Ok(r) = &self.thm41 {
            out.extend(r.certificates());
        }
        out
    }

    pub fn any_satisfied(&self) -> bool {
        self.all().iter().any(|c| c.satisfied)
    }

    /// Satisfied `thm32` certificate if any, otherwise `thm31`.
    pub fn flocking(&self) -> Option<&FlockingCertificate> {
        [&self.thm32, &self.thm31]
            .into_iter()
            .filter_map(|r| r.as_ref().ok())
            .find(|c| c.satisfied)
    }

    pub fn spacing_guarantee(&self) -> bool {
        self.thm41.as_ref().is_ok_and(|r| r.spacing_guarantee())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AgentState, KernelSpec};
    use proptest::prelude::*;

    fn agent(p: [f64; 2], v: [f64; 2], t: f64) -> AgentState {
        AgentState {
            position: p.to_vec(),
            velocity: v.to_vec(),
            temperature: t,
        }
    }

    /// Two agents a unit apart with velocities at 60°.
    fn reference() -> SystemState {
        SystemState::new(vec![
            agent([0.0, 0.0], [1.0, 0.0], 1.0),
            agent([1.0, 0.0], [0.5, 3f64.sqrt() / 2.0], 1.0),
        ])
    }

    fn params(kappa1: f64, alpha: f64) -> SystemParams {
        SystemParams {
            n_agents: 2,
            dim: 2,
            kappa1,
            kappa2: 1.0,
            alpha,
            zeta: KernelSpec::default(),
        }
    }

    #[test]
    fn primitive_values() {
        assert_eq!(kernel_primitive(1.0, f64::INFINITY, 2.0).unwrap(), 1.0);
        assert_eq!(kernel_primitive(1.0, f64::INFINITY, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(kernel_primitive(1.0, f64::INFINITY, 0.5).unwrap(), f64::INFINITY);
        assert!((kernel_primitive(1.0, 3.0, 2.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((kernel_primitive(2.0, 8.0, 1.0).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!(matches!(kernel_primitive(0.0, 1.0, 2.0), Err(Error::Domain(_))));
        assert!(matches!(kernel_primitive(-1.0, 1.0, 2.0), Err(Error::Domain(_))));
        assert!(matches!(kernel_primitive(2.0, 1.0, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn primitive_matches_quadrature() {
        for &alpha in &[0.3, 1.0, 1.7, 3.0] {
            let (a, b) = (0.7, 4.2);
            let n = 20_000;
            let h = (b - a) / n as f64;
            let simpson: f64 = (0..=n)
                .map(|k| {
                    let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                    w * (a + k as f64 * h).powf(-alpha)
                })
                .sum::<f64>()
                * h
                / 3.0;
            assert!((kernel_primitive(a, b, alpha).unwrap() - simpson).abs() < 1e-10);
        }
    }

    #[test]
    fn inversion_round_trips() {
        for &alpha in &[0.5, 1.0, 2.0] {
            let d = invert_primitive(1.3, 0.4, alpha).unwrap();
            assert!((kernel_primitive(1.3, d, alpha).unwrap() - 0.4).abs() < 1e-13);
        }
        assert_eq!(invert_primitive(1.0, 2.0, 2.0), None);
    }

    #[test]
    fn thm32_reference() {
        let c = check_thm32(&reference(), &params(3.0, 2.0)).unwrap();
        assert!(c.satisfied);
        assert!((c.d_x_inf.unwrap() - 3.0).abs() < 1e-12);
        assert!((c.rate_v - 1.0 / 6.0).abs() < 1e-12);
        assert!((c.margin - 0.5).abs() < 1e-12);
        assert!(!c.spacing_guarantee);
        let zeta3 = 1.0 / (1.0 + 9.0);
        assert!((c.rate_t - zeta3).abs() < 1e-12);
    }

    #[test]
    fn thm32_boundary_fails() {
        let c = check_thm32(&reference(), &params(2.0, 2.0)).unwrap();
        assert!(!c.satisfied);
        assert!(c.d_x_inf.is_none());
        assert!(c.margin <= BOUNDARY_TOL);
        assert_eq!(c.rate_v, 0.0);
    }

    #[test]
    fn thm32_weak_singularity_always_holds() {
        for &alpha in &[0.5, 1.0] {
            let c = check_thm32(&reference(), &params(0.01, alpha)).unwrap();
            assert!(c.satisfied);
            assert_eq!(c.margin, f64::INFINITY);
            assert!(c.d_x_inf.unwrap() > 1.0);
        }
    }

    fn aligned() -> SystemState {
        SystemState::new(vec![
            agent([0.0, 0.0], [0.0, 1.0], 1.0),
            agent([2.0, 0.0], [0.0, 1.0], 1.5),
        ])
    }

    #[test]
    fn aligned_start_certifies_everything() {
        let p = params(1.0, 2.0);
        let c32 = check_thm32(&aligned(), &p).unwrap();
        assert_eq!(c32.d_x_inf, Some(2.0));
        assert!((c32.rate_v - 0.25 / 1.5).abs() < 1e-15);
        let c31 = check_thm31(&aligned(), &p, &CertificateSearch::default()).unwrap();
        assert!(c31.satisfied);
        assert!(c31.d_x_inf.unwrap() > 2.0 && c31.d_x_inf.unwrap() < 2.0 * (1.0 + 1e-9));
        let r = check_thm41(&aligned(), &p, &CertificateSearch::default()).unwrap();
        assert!(r.spacing_guarantee());
    }

    #[test]
    fn thm31_reference() {
        let c = check_thm31(&reference(), &params(3.0, 2.0), &CertificateSearch::default()).unwrap();
        assert!(!c.satisfied);
        assert!(c.margin < 0.0);

        let c = check_thm31(&reference(), &params(20.0, 2.0), &CertificateSearch::default()).unwrap();
        let root = (10.0 - (100.0f64 - 40.0).sqrt()) / 2.0;
        assert!(c.satisfied);
        assert!((c.d_x_inf.unwrap() - root).abs() < 1e-9);
        // Largest slack of D − 1 − 0.1 D² is at D = 5.
        assert!((c.margin - 1.5).abs() < 1e-3);
    }

    #[test]
    fn precondition_on_angle() {
        let s = SystemState::new(vec![
            agent([0.0, 0.0], [1.0, 0.0], 1.0),
            agent([1.0, 0.0], [0.0, 1.0], 1.0),
        ]);
        let p = params(3.0, 2.0);
        assert!(matches!(check_thm32(&s, &p), Err(Error::Precondition(_))));
        assert!(matches!(check_thm31(&s, &p, &CertificateSearch::default()), Err(Error::Precondition(_))));
        assert!(matches!(check_thm41(&s, &p, &CertificateSearch::default()), Err(Error::Precondition(_))));
        let suite = CertificateSuite::evaluate(&s, &p, &CertificateSearch::default());
        assert!(!suite.any_satisfied());
    }

    #[test]
    fn margin_serializes_infinite_as_null() {
        let c = check_thm32(&reference(), &params(1.0, 0.5)).unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("\"margin\":null"));
        let back: FlockingCertificate = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }

    /// Unsatisfied certificates omit the witness.
    #[test]
    fn unsatisfied_json_omits_witness() {
        let c = check_thm32(&reference(), &params(2.0, 2.0)).unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert!(!json.contains("d_x_inf"));
    }

    #[test]
    fn axis_branch_with_double_budget_gap() {
        // Two agents separated along the first axis only, with a small
        // velocity spread. Pick κ₁ so that the budget at the witness is half
        // the axis gap.
        let theta: f64 = 0.05;
        let state = SystemState::new(vec![
            agent([0.0, 0.0], [0.0, 1.0], 1.0),
            agent([1.0, 0.0], [theta.sin(), theta.cos()], 1.0),
        ]);
        let c = InitialConstants::of(&state);
        let alpha = 0.5;
        // Witness D = 2: reach = 1, gap = 1; want budget(2) = 0.5.
        let kappa1 = c.temp_max * c.d_v0 * 2f64.powf(alpha) / (c.a_v0 * 0.5);
        let p = params(kappa1, alpha);
        let r = check_thm41(&state, &p, &CertificateSearch::default()).unwrap();
        assert!(r.cond2.is_none());
        assert!(r.cond1.satisfied && r.spacing_guarantee());
        assert_eq!(r.cond1.axis, Some(0));
        assert!(r.cond1.margin >= 0.5 - 1e-12);
        let d = r.cond1.d_x_inf.unwrap();
        let budget = c.temp_max * c.d_v0 * d.powf(alpha) / (kappa1 * c.a_v0);
        assert!(budget < axis_separations(&state)[0]);
    }

    #[test]
    fn both_branches_fail_for_weak_coupling() {
        let p = params(0.01, 2.0);
        let r = check_thm41(&reference(), &p, &CertificateSearch::default()).unwrap();
        assert!(!r.spacing_guarantee());
        assert!(r.cond1.margin < 0.0);
        assert!(r.cond2.as_ref().unwrap().margin < 0.0);
        assert!(r.certified().is_none());
    }

    #[test]
    fn alpha_window_above_one() {
        let p = |alpha| params(1.0, alpha);
        let r = check_thm41(&reference(), &p(1.01), &CertificateSearch::default()).unwrap();
        let c2 = r.cond2.as_ref().unwrap();
        assert!(c2.satisfied && c2.spacing_guarantee);
        for alpha in [1.05, 1.1] {
            let r = check_thm41(&reference(), &p(alpha), &CertificateSearch::default()).unwrap();
            assert!(r.cond2.is_some());
        }
    }

    fn arb_config() -> impl Strategy<Value = SystemState> {
        (
            prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64, 0.0..0.6f64, 0.5..2.0f64), 2..5),
        )
            .prop_filter_map("distinct positions", |(raw,)| {
                let agents: Vec<AgentState> = raw
                    .iter()
                    .map(|&(x, y, th, t)| agent([x, y], [th.cos(), th.sin()], t))
                    .collect();
                let s = SystemState::new(agents);
                (min_pair_distance(&s.agents).0 > 1e-3).then_some(s)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn satisfied_stays_satisfied_for_larger_kappa1(
            state in arb_config(),
            k in 0.1..10.0f64,
            factor in 1.0..10.0f64,
            alpha in 0.3..3.0f64,
        ) {
            let search = CertificateSearch { grid_points: 401, ..Default::default() };
            let mut lo = params(k, alpha);
            lo.n_agents = state.agents.len();
            let mut hi = lo.clone();
            hi.kappa1 = k * factor;
            let (a31, b31) = (check_thm31(&state, &lo, &search).unwrap(), check_thm31(&state, &hi, &search).unwrap());
            let (a32, b32) = (check_thm32(&state, &lo).unwrap(), check_thm32(&state, &hi).unwrap());
            prop_assert!(b31.margin >= a31.margin);
            prop_assert!(b32.margin >= a32.margin);
            prop_assert!(!a31.satisfied || b31.satisfied);
            prop_assert!(!a32.satisfied || b32.satisfied);
            for c in [&a31, &b31, &a32, &b32] {
                prop_assert_eq!(c.satisfied, c.d_x_inf.is_some());
                prop_assert!(!c.satisfied || (c.margin > 0.0 && c.rate_v > 0.0));
            }
        }
    }
}
