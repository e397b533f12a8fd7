//! Regularized zero-forcing precoding with water-filling power allocation.

use crate::error::{Error, Result};
use crate::framework::BasebandProcessor;
use crate::CMatrix;
use num_complex::Complex64;

/// Absolute tolerance on the allocated-power residual of the bisection.
pub const WATER_FILL_TOL: f64 = 1e-10;

/// Allocate `total_power` over parallel channels with the given SNR-per-watt
/// gains, maximizing the sum of log(1 + p_i g_i). Solves
/// p_i = max(0, mu - 1/g_i) by bisection on the water level mu until the
/// total allocated power is within [`WATER_FILL_TOL`] of the budget.
/// Channels with zero gain get zero power; if no channel has positive gain
/// the allocation is all zeros.
pub fn water_fill(gains: &[f64], total_power: f64) -> Vec<f64> {
    let mut power = vec![0.0; gains.len()];
    if !(total_power > 0.0) {
        return power;
    }
    let inverses: Vec<Option<f64>> = gains
        .iter()
        .map(|g| if *g > 0.0 { Some(1.0 / g) } else { None })
        .collect();
    let active: Vec<f64> = inverses.iter().filter_map(|i| *i).collect();
    if active.is_empty() {
        return power;
    }
    let allocated = |mu: f64| -> f64 { active.iter().map(|inv| (mu - inv).max(0.0)).sum() };
    let mut lo = active.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = active.iter().cloned().fold(0.0_f64, f64::max) + total_power;
    // The budget is reachable: allocated(lo) = 0 and allocated(hi) >= total.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let used = allocated(mid);
        if (used - total_power).abs() <= WATER_FILL_TOL {
            lo = mid;
            hi = mid;
            break;
        }
        if used < total_power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    for (p, inv) in power.iter_mut().zip(&inverses) {
        if let Some(inv) = inv {
            *p = (mu - inv).max(0.0);
        }
    }
    power
}

/// Regularized zero-forcing precoder for an effective channel (one row per
/// user): directions H^H (H H^H + delta I)^{-1}, per-user powers by
/// [`water_fill`] on the post-normalization channel gains, scaled to spend
/// `total_power` exactly.
///
/// With `delta` = 0 this is plain zero-forcing; a Gram condition number
/// above 1e12 (or an all-zero channel) is then reported as
/// [`Error::SingularEffectiveChannel`] instead of inverting noise.
pub fn zf_precoder(
    h_eff: &CMatrix,
    delta: f64,
    total_power: f64,
    sigma2: f64,
) -> Result<BasebandProcessor> {
    let num_users = h_eff.nrows();
    if !(sigma2 > 0.0) || !(total_power > 0.0) {
        return Err(Error::InvalidParameter {
            detail: format!(
                "zero-forcing needs positive noise and power budget, got sigma2={sigma2}, power={total_power}"
            ),
        });
    }
    if !(delta >= 0.0) {
        return Err(Error::InvalidParameter {
            detail: format!("regularization must be nonnegative, got {delta}"),
        });
    }
    let singular_values = h_eff.clone().svd(false, false).singular_values;
    let s_max = singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let s_min = singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if s_max == 0.0 {
        return Err(Error::SingularEffectiveChannel {
            condition: f64::INFINITY,
        });
    }
    if delta == 0.0 {
        // Condition of the Gram matrix actually inverted below.
        let condition = if s_min == 0.0 || num_users > h_eff.ncols() {
            f64::INFINITY
        } else {
            (s_max / s_min).powi(2)
        };
        if condition > 1e12 {
            return Err(Error::SingularEffectiveChannel { condition });
        }
    }
    let gram = h_eff * h_eff.adjoint()
        + CMatrix::identity(num_users, num_users) * Complex64::new(delta, 0.0);
    let inverse = gram.try_inverse().ok_or(Error::SingularEffectiveChannel {
        condition: f64::INFINITY,
    })?;
    let directions = h_eff.adjoint() * inverse;

    // Per-user gain once the column is normalized: |(H d_u)_u|^2 / (||d_u||^2 sigma2).
    let response = h_eff * &directions;
    let mut gains = Vec::with_capacity(num_users);
    let mut col_norms = Vec::with_capacity(num_users);
    for u in 0..num_users {
        let norm_sq: f64 = directions.column(u).iter().map(|z| z.norm_sqr()).sum();
        col_norms.push(norm_sq.sqrt());
        if norm_sq > 0.0 {
            gains.push(response[(u, u)].norm_sqr() / (norm_sq * sigma2));
        } else {
            gains.push(0.0);
        }
    }
    let powers = water_fill(&gains, total_power);
    let mut v = CMatrix::zeros(h_eff.ncols(), num_users);
    for u in 0..num_users {
        if powers[u] > 0.0 && col_norms[u] > 0.0 {
            let scale = Complex64::new(powers[u].sqrt() / col_norms[u], 0.0);
            for r in 0..v.nrows() {
                v[(r, u)] = directions[(r, u)] * scale;
            }
        }
    }
    Ok(BasebandProcessor {
        v,
        total_power_budget: total_power,
    })
}
