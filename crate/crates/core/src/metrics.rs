//! Communication and sensing performance functionals.
//!
//! Everything here is a pure function of an effective transmit matrix `E`
//! and the propagation inputs: per-user SINR and sum-rate, quadratic-form
//! beam pattern, mask-matching beam-pattern MSE with an internally fitted
//! scale, and the scalarized dual-function objective that trades rate
//! against worst-target illumination.

use crate::error::{Error, Result};
use crate::{CMatrix, CVector};
use serde::{Deserialize, Serialize};

/// Per-user SINR and the resulting sum-rate.
///
/// `h` holds one row per user (U x N); `e` maps streams to the aperture
/// (N x S); `stream_to_user[s]` names the user that stream `s` serves, at
/// most one stream per user. Users without a stream get SINR 0 and
/// contribute no rate. SINR_u = |h_u^H e_u|^2 / (sum over other streams of
/// |h_u^H e_v|^2 + sigma2); rate is sum of log2(1 + SINR_u).
pub fn sum_rate(
    h: &CMatrix,
    e: &CMatrix,
    sigma2: f64,
    stream_to_user: &[usize],
) -> Result<(f64, Vec<f64>)> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter {
            detail: format!("noise power must be positive, got {sigma2}"),
        });
    }
    if h.ncols() != e.nrows() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "channel has {} aperture columns, transmit matrix has {} rows",
                h.ncols(),
                e.nrows()
            ),
        });
    }
    let num_users = h.nrows();
    let num_streams = e.ncols();
    if stream_to_user.len() != num_streams {
        return Err(Error::StreamMapInvalid {
            detail: format!(
                "{} map entries for {} streams",
                stream_to_user.len(),
                num_streams
            ),
        });
    }
    let mut seen = vec![false; num_users];
    for (s, u) in stream_to_user.iter().enumerate() {
        if *u >= num_users {
            return Err(Error::StreamMapInvalid {
                detail: format!("stream {s} targets user {u}, only {num_users} users"),
            });
        }
        if seen[*u] {
            return Err(Error::StreamMapInvalid {
                detail: format!("user {u} is served by more than one stream"),
            });
        }
        seen[*u] = true;
    }

    // G[(u, s)] = h_u^H e_s.
    let g = h.conjugate() * e;
    let mut per_user_sinr = vec![0.0; num_users];
    let mut rate = 0.0;
    for (s, u) in stream_to_user.iter().enumerate() {
        let signal = g[(*u, s)].norm_sqr();
        let mut interference = 0.0;
        for v in 0..num_streams {
            if v != s {
                interference += g[(*u, v)].norm_sqr();
            }
        }
        let sinr = signal / (interference + sigma2);
        per_user_sinr[*u] = sinr;
        rate += (1.0 + sinr).log2();
    }
    Ok((rate, per_user_sinr))
}

/// Power radiated toward steering vector `a`: the quadratic form
/// a^H E E^H a = ||E^H a||^2, real and nonnegative.
pub fn beam_pattern(e: &CMatrix, a: &CVector) -> Result<f64> {
    if a.len() != e.nrows() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "steering vector has {} entries, transmit matrix has {} rows",
                a.len(),
                e.nrows()
            ),
        });
    }
    Ok((e.adjoint() * a).norm_squared())
}

/// Least-squares mask scale: the nonnegative alpha minimizing the mean of
/// (P_i - alpha m_i)^2, in closed form. An all-zero mask yields 0.
pub fn fitted_mask_scale(pattern: &[f64], mask: &[f64]) -> f64 {
    let cross: f64 = pattern.iter().zip(mask).map(|(p, m)| p * m).sum();
    let mm: f64 = mask.iter().map(|m| m * m).sum();
    if mm == 0.0 {
        0.0
    } else {
        (cross / mm).max(0.0)
    }
}

/// Mean squared deviation of the beam pattern from a desired mask over a
/// steering grid, after fitting the mask scale per [`fitted_mask_scale`].
pub fn beampattern_mse(e: &CMatrix, grid: &[CVector], mask: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if mask.len() != grid.len() {
        return Err(Error::InvalidMask {
            detail: format!("{} mask values for {} grid points", mask.len(), grid.len()),
        });
    }
    if let Some(bad) = mask.iter().find(|m| !(**m >= 0.0)) {
        return Err(Error::InvalidMask {
            detail: format!("mask values must be nonnegative and finite, got {bad}"),
        });
    }
    let pattern = grid
        .iter()
        .map(|a| beam_pattern(e, a))
        .collect::<Result<Vec<_>>>()?;
    let alpha = fitted_mask_scale(&pattern, mask);
    let mse = pattern
        .iter()
        .zip(mask)
        .map(|(p, m)| {
            let r = p - alpha * m;
            r * r
        })
        .sum::<f64>()
        / grid.len() as f64;
    Ok(mse)
}

/// Scalarized dual-function objective
/// J = omega * rate / rate_ref + (1 - omega) * min(target powers) / power_ref.
/// References are the single-function optima, so J = 1 means both functions
/// simultaneously meet their standalone best.
pub fn isac_objective(
    omega: f64,
    rate: f64,
    rate_ref: f64,
    target_power: &[f64],
    power_ref: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::InvalidParameter {
            detail: format!("weight must lie in [0, 1], got {omega}"),
        });
    }
    if !(rate_ref > 0.0) || !rate_ref.is_finite() {
        return Err(Error::NonPositiveReference { value: rate_ref });
    }
    if !(power_ref > 0.0) || !power_ref.is_finite() {
        return Err(Error::NonPositiveReference { value: power_ref });
    }
    if target_power.is_empty() {
        return Err(Error::InvalidParameter {
            detail: "at least one sensing target is required".into(),
        });
    }
    let worst = target_power.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(omega * rate / rate_ref + (1.0 - omega) * worst / power_ref)
}

/// One scenario's headline numbers, ready for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub sum_rate: f64,
    pub per_user_sinr: Vec<f64>,
    pub beampattern: Vec<BeamPoint>,
    pub target_power: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub seed: u64,
    pub config_hash: String,
}

/// One sampled point of a beam pattern cut.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamPoint {
    pub angle_deg: f64,
    pub power: f64,
}
