//! Adaptive Dormand–Prince 5(4) integration of the flocking system.
//!
//! Accepted steps are followed by a projection of every velocity back onto
//! the unit sphere. Step sizes are capped so that no pairwise distance can
//! shrink by more than half within one step, which keeps the singular kernel
//! resolvable all the way down to the collision threshold. Collisions are
//! localized by bisection on the continuous extension of the step in which
//! the threshold was crossed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{eval_rhs, norm, Layout, SystemParams, SystemState};

/// Below this step size the integrator gives up.
pub const MIN_STEP: f64 = 1e-15;

/// Fraction of the current pairwise distance a single step may consume.
const DISTANCE_CHANGE_CAP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default = "defaults::rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "defaults::abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "defaults::dt_init")]
    pub dt_init: f64,
    #[serde(default = "defaults::dt_max")]
    pub dt_max: f64,
    #[serde(default = "defaults::collision_threshold")]
    pub collision_threshold: f64,
    #[serde(default = "defaults::event_time_tol")]
    pub event_time_tol: f64,
    pub t_end: f64,
}

pub(crate) mod defaults {
    pub fn rel_tol() -> f64 {
        1e-9
    }
    pub fn abs_tol() -> f64 {
        1e-11
    }
    pub fn dt_init() -> f64 {
        1e-3
    }
    pub fn dt_max() -> f64 {
        0.1
    }
    pub fn collision_threshold() -> f64 {
        1e-8
    }
    pub fn event_time_tol() -> f64 {
        1e-10
    }
}

impl IntegratorConfig {
    pub fn with_t_end(t_end: f64) -> Self {
        IntegratorConfig {
            rel_tol: defaults::rel_tol(),
            abs_tol: defaults::abs_tol(),
            dt_init: defaults::dt_init(),
            dt_max: defaults::dt_max(),
            collision_threshold: defaults::collision_threshold(),
            event_time_tol: defaults::event_time_tol(),
            t_end,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("dt_init", self.dt_init),
            ("dt_max", self.dt_max),
            ("collision_threshold", self.collision_threshold),
            ("event_time_tol", self.event_time_tol),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidParams(format!(
                "t_end must be finite and nonnegative, got {}",
                self.t_end
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub time: f64,
    pub pair: (usize, usize),
    pub min_distance_at_event: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    ReachedTEnd,
    Collision(CollisionEvent),
    StepFailure { time: f64, dt: f64 },
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::ReachedTEnd => "reached_t_end",
            Termination::Collision(_) => "collision",
            Termination::StepFailure { .. } => "step_failure",
        }
    }

    pub fn collision(&self) -> Option<&CollisionEvent> {
        match self {
            Termination::Collision(ev) => Some(ev),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunStats {
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    /// Largest `| |v_i| − 1 |` seen just before a projection.
    pub max_pre_projection_drift: f64,
    /// Largest `| |v_i| − 1 |` left after a projection.
    pub max_post_projection_deviation: f64,
    pub min_step: f64,
    pub max_step: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// States at `k * output_dt`, starting at t = 0.
    pub samples: Vec<SystemState>,
    pub termination: Termination,
    /// State where the run stopped (t_end, the collision time, or the failure point).
    pub final_state: SystemState,
    pub stats: RunStats,
}

// Dormand–Prince 5(4) tableau. The system is autonomous, so the nodes are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension (order 4).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

// PI controller constants.
const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_MIN_INV: f64 = 5.0; // at most 5x shrink
const FAC_MAX_INV: f64 = 0.1; // at most 10x growth

/// Continuous extension of one accepted step.
#[derive(Debug, Clone)]
pub struct DenseSegment {
    pub t0: f64,
    pub h: f64,
    coeffs: [Vec<f64>; 5],
}

impl DenseSegment {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let theta = (t - self.t0) / self.h;
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.coeffs;
        for k in 0..out.len() {
            out[k] = r1[k] + theta * (r2[k] + theta1 * (r3[k] + theta * (r4[k] + theta1 * r5[k])));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.coeffs[0].len()];
        self.eval_into(t, &mut out);
        out
    }
}

/// Outcome of a single attempted step.
#[derive(Debug, Clone)]
pub enum StepOutcome {
    Accepted {
        state: SystemState,
        dt_next: f64,
        /// Largest `| |v_i| − 1 |` removed by the projection.
        projection_correction: f64,
    },
    Rejected {
        dt_next: f64,
    },
}

struct Stepper<'a> {
    params: &'a SystemParams,
    cfg: &'a IntegratorConfig,
    layout: Layout,
    t: f64,
    y: Vec<f64>,
    k: [Vec<f64>; 7],
    y_stage: Vec<f64>,
    y_new: Vec<f64>,
    fac_old: f64,
    last_rejected: bool,
}

enum Attempt {
    Accepted {
        segment: DenseSegment,
        h_next: f64,
        drift: f64,
        residual: f64,
    },
    Rejected {
        h_next: f64,
    },
}

impl<'a> Stepper<'a> {
    fn new(params: &'a SystemParams, cfg: &'a IntegratorConfig, state: &SystemState) -> Result<Self> {
        let layout = Layout::of(params);
        let y = layout.pack(state);
        let n = layout.len();
        let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
        eval_rhs(params, &layout, &y, &mut k[0])?;
        Ok(Stepper {
            params,
            cfg,
            layout,
            t: state.time,
            y,
            k,
            y_stage: vec![0.0; n],
            y_new: vec![0.0; n],
            fac_old: 1e-4,
            last_rejected: false,
        })
    }

    /// Largest step that keeps every pairwise distance from shrinking by more
    /// than `DISTANCE_CHANGE_CAP` of its current value.
    fn distance_guard(&self) -> f64 {
        let l = &self.layout;
        let mut cap = f64::INFINITY;
        for i in 0..l.n {
            for j in (i + 1)..l.n {
                let xi = &self.y[l.pos(i)];
                let xj = &self.y[l.pos(j)];
                let vi = &self.y[l.vel(i)];
                let vj = &self.y[l.vel(j)];
                let mut r2 = 0.0;
                let mut w2 = 0.0;
                for c in 0..l.dim {
                    r2 += (xi[c] - xj[c]) * (xi[c] - xj[c]);
                    w2 += (vi[c] - vj[c]) * (vi[c] - vj[c]);
                }
                if w2 > 0.0 {
                    cap = cap.min(DISTANCE_CHANGE_CAP * (r2 / w2).sqrt());
                }
            }
        }
        cap
    }

    fn stage(&mut self, h: f64, coeffs: &[(usize, f64)], target: usize) -> Result<()> {
        self.y_stage.copy_from_slice(&self.y);
        for &(idx, a) in coeffs {
            let ks = &self.k[idx];
            for (ys, kv) in self.y_stage.iter_mut().zip(ks) {
                *ys += h * a * kv;
            }
        }
        let (params, layout) = (self.params, self.layout);
        eval_rhs(params, &layout, &self.y_stage, &mut self.k[target])
    }

    fn stages(&mut self, h: f64) -> Result<()> {
        self.stage(h, &[(0, A21)], 1)?;
        self.stage(h, &[(0, A31), (1, A32)], 2)?;
        self.stage(h, &[(0, A41), (1, A42), (2, A43)], 3)?;
        self.stage(h, &[(0, A51), (1, A52), (2, A53), (3, A54)], 4)?;
        self.stage(h, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], 5)?;
        // Fifth-order solution; its derivative is the seventh stage.
        self.y_new.copy_from_slice(&self.y);
        for (idx, a) in [(0usize, A71), (2, A73), (3, A74), (4, A75), (5, A76)] {
            for (yn, kv) in self.y_new.iter_mut().zip(&self.k[idx]) {
                *yn += h * a * kv;
            }
        }
        let (params, layout) = (self.params, self.layout);
        eval_rhs(params, &layout, &self.y_new, &mut self.k[6])
    }

    fn error_norm(&self, h: f64) -> f64 {
        let mut err: f64 = 0.0;
        for c in 0..self.y.len() {
            let e = h
                * (E1 * self.k[0][c]
                    + E3 * self.k[2][c]
                    + E4 * self.k[3][c]
                    + E5 * self.k[4][c]
                    + E6 * self.k[5][c]
                    + E7 * self.k[6][c]);
            let sc = self.cfg.abs_tol + self.cfg.rel_tol * self.y[c].abs().max(self.y_new[c].abs());
            err = err.max(e.abs() / sc);
        }
        err
    }

    fn attempt(&mut self, h: f64) -> Attempt {
        if self.stages(h).is_err() {
            // A stage landed on a coincident configuration; back off hard.
            self.last_rejected = true;
            return Attempt::Rejected { h_next: 0.25 * h };
        }
        let err = self.error_norm(h);
        if !err.is_finite() {
            self.last_rejected = true;
            return Attempt::Rejected { h_next: 0.25 * h };
        }
        let fac11 = err.powf(EXPO1);
        if err <= 1.0 {
            let mut fac = fac11 / self.fac_old.powf(BETA);
            fac = FAC_MAX_INV.max(FAC_MIN_INV.min(fac / SAFETY));
            let mut h_next = h / fac;
            if self.last_rejected {
                h_next = h_next.min(h);
            }
            self.fac_old = err.max(1e-4);
            self.last_rejected = false;

            let segment = self.dense_segment(h);

            // Project velocities back to the unit sphere.
            let l = self.layout;
            let mut drift: f64 = 0.0;
            let mut residual: f64 = 0.0;
            for i in 0..l.n {
                let v = &mut self.y_new[l.vel(i)];
                let s = norm(v);
                drift = drift.max((s - 1.0).abs());
                v.iter_mut().for_each(|c| *c /= s);
                residual = residual.max((norm(v) - 1.0).abs());
            }
            self.t = segment.t1();
            std::mem::swap(&mut self.y, &mut self.y_new);
            let (params, layout) = (self.params, self.layout);
            if eval_rhs(params, &layout, &self.y, &mut self.k[0]).is_err() {
                // Only possible at exact contact, which the event check catches first.
                self.k[0].iter_mut().for_each(|c| *c = f64::NAN);
            }
            Attempt::Accepted {
                segment,
                h_next,
                drift,
                residual,
            }
        } else {
            self.last_rejected = true;
            let h_next = h / FAC_MIN_INV.min(fac11 / SAFETY);
            Attempt::Rejected { h_next }
        }
    }

    fn dense_segment(&self, h: f64) -> DenseSegment {
        let n = self.y.len();
        let mut r1 = vec![0.0; n];
        let mut r2 = vec![0.0; n];
        let mut r3 = vec![0.0; n];
        let mut r4 = vec![0.0; n];
        let mut r5 = vec![0.0; n];
        let k = &self.k;
        for c in 0..n {
            let dy = self.y_new[c] - self.y[c];
            let bspl = h * k[0][c] - dy;
            r1[c] = self.y[c];
            r2[c] = dy;
            r3[c] = bspl;
            r4[c] = dy - h * k[6][c] - bspl;
            r5[c] = h
                * (D1 * k[0][c] + D3 * k[2][c] + D4 * k[3][c] + D5 * k[4][c] + D6 * k[5][c] + D7 * k[6][c]);
        }
        DenseSegment {
            t0: self.t,
            h,
            coeffs: [r1, r2, r3, r4, r5],
        }
    }
}

/// Attempts one step of size at most `dt_try` (further limited by `dt_max`
/// and the distance guard) from `state`.
pub fn step(
    state: &SystemState,
    params: &SystemParams,
    cfg: &IntegratorConfig,
    dt_try: f64,
) -> Result<StepOutcome> {
    params.validate()?;
    state.validate(params)?;
    let mut stepper = Stepper::new(params, cfg, state)?;
    let (dist, pair) = stepper.layout.min_pair_distance(&stepper.y);
    if dist <= cfg.collision_threshold {
        return Err(Error::Precondition(format!(
            "agents {pair:?} are already within the collision threshold"
        )));
    }
    let h = dt_try.min(cfg.dt_max).min(stepper.distance_guard());
    if h < MIN_STEP {
        return Err(Error::Precondition(format!("step size {h} below minimum")));
    }
    match stepper.attempt(h) {
        Attempt::Accepted {
            h_next, residual: _, drift, ..
        } => Ok(StepOutcome::Accepted {
            state: stepper.layout.unpack(stepper.t, &stepper.y),
            dt_next: h_next,
            projection_correction: drift,
        }),
        Attempt::Rejected { h_next } => Ok(StepOutcome::Rejected { dt_next: h_next }),
    }
}

/// Bisects the continuous extension of `segment` for the first time the
/// minimum pairwise distance drops to `threshold`.
///
/// Requires the minimum distance to be above the threshold at `segment.t0`
/// and at or below it at `segment.t1()`.
pub fn locate_collision(
    segment: &DenseSegment,
    layout: &Layout,
    threshold: f64,
    time_tol: f64,
) -> Result<CollisionEvent> {
    let mut buf = vec![0.0; layout.len()];
    let mut min_at = |t: f64| {
        segment.eval_into(t, &mut buf);
        layout.min_pair_distance(&buf)
    };
    let (mut lo, mut hi) = (segment.t0, segment.t1());
    let (d_lo, _) = min_at(lo);
    let (d_hi, mut pair) = min_at(hi);
    if !(d_lo > threshold) || !(d_hi <= threshold) {
        return Err(Error::Internal(format!(
            "invalid collision bracket: distance {d_lo} at {lo}, {d_hi} at {hi}, threshold {threshold}"
        )));
    }
    let mut d_event = d_hi;
    while hi - lo > time_tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (d, p) = min_at(mid);
        if d <= threshold {
            hi = mid;
            d_event = d;
            pair = p;
        } else {
            lo = mid;
        }
    }
    Ok(CollisionEvent {
        time: hi,
        pair,
        min_distance_at_event: d_event,
    })
}

fn normalize_velocities(layout: &Layout, y: &mut [f64]) {
    for i in 0..layout.n {
        let v = &mut y[layout.vel(i)];
        let s = norm(v);
        if s > 0.0 {
            v.iter_mut().for_each(|c| *c /= s);
        }
    }
}

/// Integrates from `initial` to `cfg.t_end` or the first collision, sampling
/// every `output_dt` through the continuous extension.
pub fn run(
    initial: &SystemState,
    params: &SystemParams,
    cfg: &IntegratorConfig,
    output_dt: f64,
) -> Result<Trajectory> {
    params.validate()?;
    cfg.validate()?;
    initial.validate(params)?;
    if !(output_dt > 0.0) {
        return Err(Error::InvalidParams(format!(
            "output_dt must be positive, got {output_dt}"
        )));
    }
    let layout = Layout::of(params);
    let (d0, pair0) = min_pair_distance_of(initial);
    if d0 <= cfg.collision_threshold {
        return Err(Error::Precondition(format!(
            "collision threshold {} is not below the initial minimum distance {d0} (agents {pair0:?})",
            cfg.collision_threshold
        )));
    }

    let t0 = initial.time;
    let t_end = t0 + cfg.t_end;
    let n_samples = (cfg.t_end / output_dt * (1.0 + 1e-12)).floor() as usize + 1;
    let sample_time = |k: usize| (t0 + k as f64 * output_dt).min(t_end);

    let mut samples = vec![initial.clone()];
    let mut stats = RunStats {
        min_step: f64::INFINITY,
        ..RunStats::default()
    };
    if cfg.t_end == 0.0 {
        return Ok(Trajectory {
            samples,
            termination: Termination::ReachedTEnd,
            final_state: initial.clone(),
            stats,
        });
    }

    let mut stepper = Stepper::new(params, cfg, initial)?;
    let mut h = cfg.dt_init.min(cfg.dt_max);
    let mut next_sample = 1usize;
    let mut buf = vec![0.0; layout.len()];

    loop {
        let remaining = t_end - stepper.t;
        if remaining <= 0.0 {
            break;
        }
        let guard = stepper.distance_guard();
        let mut h_try = h.min(cfg.dt_max).min(guard);
        let last = h_try >= remaining;
        if last {
            h_try = remaining;
        }
        if h_try < MIN_STEP && !last {
            let failure = Termination::StepFailure {
                time: stepper.t,
                dt: h_try,
            };
            return Ok(Trajectory {
                samples,
                termination: failure,
                final_state: layout.unpack(stepper.t, &stepper.y),
                stats,
            });
        }
        match stepper.attempt(h_try) {
            Attempt::Rejected { h_next } => {
                stats.rejected_steps += 1;
                h = h_next;
            }
            Attempt::Accepted {
                mut segment,
                h_next,
                drift,
                residual,
            } => {
                if last {
                    // Land exactly on t_end.
                    stepper.t = t_end;
                    segment.h = t_end - segment.t0;
                }
                stats.accepted_steps += 1;
                stats.max_pre_projection_drift = stats.max_pre_projection_drift.max(drift);
                stats.max_post_projection_deviation = stats.max_post_projection_deviation.max(residual);
                stats.min_step = stats.min_step.min(h_try);
                stats.max_step = stats.max_step.max(h_try);
                h = h_next;

                let (d_end, _) = layout.min_pair_distance(&stepper.y);
                let event = if d_end <= cfg.collision_threshold {
                    Some(locate_collision(
                        &segment,
                        &layout,
                        cfg.collision_threshold,
                        cfg.event_time_tol,
                    )?)
                } else {
                    None
                };
                let horizon = event.map_or(stepper.t, |e| e.time);

                while next_sample < n_samples {
                    let ts = sample_time(next_sample);
                    if ts > horizon || (event.is_some() && ts >= horizon) {
                        break;
                    }
                    if ts == stepper.t && event.is_none() {
                        buf.copy_from_slice(&stepper.y);
                    } else {
                        segment.eval_into(ts, &mut buf);
                        normalize_velocities(&layout, &mut buf);
                    }
                    samples.push(layout.unpack(ts, &buf));
                    next_sample += 1;
                }

                if let Some(ev) = event {
                    segment.eval_into(ev.time, &mut buf);
                    normalize_velocities(&layout, &mut buf);
                    return Ok(Trajectory {
                        samples,
                        termination: Termination::Collision(ev),
                        final_state: layout.unpack(ev.time, &buf),
                        stats,
                    });
                }
                if last {
                    break;
                }
            }
        }
        if h < MIN_STEP {
            return Ok(Trajectory {
                samples,
                termination: Termination::StepFailure {
                    time: stepper.t,
                    dt: h,
                },
                final_state: layout.unpack(stepper.t, &stepper.y),
                stats,
            });
        }
    }

    Ok(Trajectory {
        samples,
        termination: Termination::ReachedTEnd,
        final_state: layout.unpack(stepper.t, &stepper.y),
        stats,
    })
}

fn min_pair_distance_of(state: &SystemState) -> (f64, (usize, usize)) {
    crate::model::min_pair_distance(&state.agents)
}
