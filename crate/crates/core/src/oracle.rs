//! Fixed-step classical Runge–Kutta reference integrator.
//!
//! Shares nothing with the adaptive integrator except [`eval_rhs`]; stepping,
//! projection and the contact check are written out again here so that a bug
//! in one path cannot hide in the other.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{eval_rhs, Layout, SystemParams, SystemState};

/// Largest fixed step the oracle accepts.
pub const MAX_ORACLE_DT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Contact distance treated as a collision.
    pub collision_threshold: f64,
}

impl OracleConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        OracleConfig {
            dt,
            t_end,
            collision_threshold: 1e-8,
        }
    }
}

/// Integrates with `ceil(t_end / dt)` equal steps (the last step is
/// shortened so the run ends exactly at `t_end`).
pub fn run_oracle(initial: &SystemState, params: &SystemParams, cfg: &OracleConfig) -> Result<SystemState> {
    params.validate()?;
    initial.validate(params)?;
    if !(cfg.dt > 0.0 && cfg.dt <= MAX_ORACLE_DT) {
        return Err(Error::InvalidParams(format!(
            "oracle dt must lie in (0, {MAX_ORACLE_DT}], got {}",
            cfg.dt
        )));
    }
    if !(cfg.t_end >= 0.0) {
        return Err(Error::InvalidParams(format!("oracle t_end must be nonnegative, got {}", cfg.t_end)));
    }

    let layout = Layout::of(params);
    let n = layout.len();
    let mut y = layout.pack(initial);
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    let steps = (cfg.t_end / cfg.dt).ceil() as u64;
    let oracle_collision = |step: u64, pair: (usize, usize)| Error::OracleCollision { step, pair };

    for s in 0..steps {
        let t = s as f64 * cfg.dt;
        let h = if s + 1 == steps { cfg.t_end - t } else { cfg.dt };
        if h <= 0.0 {
            break;
        }

        let rhs = |y: &[f64], out: &mut [f64]| -> Result<()> {
            match eval_rhs(params, &layout, y, out) {
                Err(Error::Collision(i, j)) => Err(oracle_collision(s + 1, (i, j))),
                other => other,
            }
        };

        rhs(&y, &mut k1)?;
        for c in 0..n {
            tmp[c] = y[c] + 0.5 * h * k1[c];
        }
        rhs(&tmp, &mut k2)?;
        for c in 0..n {
            tmp[c] = y[c] + 0.5 * h * k2[c];
        }
        rhs(&tmp, &mut k3)?;
        for c in 0..n {
            tmp[c] = y[c] + h * k3[c];
        }
        rhs(&tmp, &mut k4)?;
        for c in 0..n {
            y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }

        for i in 0..layout.n {
            let v = &mut y[layout.vel(i)];
            let len = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            for c in v.iter_mut() {
                *c /= len;
            }
        }

        for i in 0..layout.n {
            for j in (i + 1)..layout.n {
                let r = y[layout.pos(i)]
                    .iter()
                    .zip(&y[layout.pos(j)])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if r <= cfg.collision_threshold {
                    return Err(oracle_collision(s + 1, (i, j)));
                }
            }
        }
    }

    Ok(layout.unpack(initial.time + cfg.t_end, &y))
}

/// Largest absolute coordinate difference between two states of equal shape.
pub fn max_coordinate_discrepancy(a: &SystemState, b: &SystemState) -> f64 {
    a.agents
        .iter()
        .zip(&b.agents)
        .flat_map(|(x, y)| {
            x.position
                .iter()
                .zip(&y.position)
                .chain(x.velocity.iter().zip(&y.velocity))
                .map(|(p, q)| (p - q).abs())
                .chain(std::iter::once((x.temperature - y.temperature).abs()))
        })
        .fold(0.0, f64::max)
}
