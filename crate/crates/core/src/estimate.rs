//! Multi-slot channel estimation by configuration switching.
//!
//! A hybrid front end exposes only K RF chains, so one pilot slot yields K
//! linear equations in the N-dimensional channel. Switching the surface
//! through T known configurations stacks T*K equations; once the stacked
//! observation matrix has full column rank the channel is recovered by
//! least squares, or by ridge regression when the slot budget is short.
//!
//! Uplink pilots are assumed, with the downlink composition transposed
//! under reciprocity: the slot observation map is the plain (non
//! conjugated) transpose of the layer product. Estimation runs per user;
//! pilots across users are taken as orthogonal.

use crate::error::{Error, Result};
use crate::framework::{
    layer_product, ArchitectureSpec, FeedingMatrix, ReconfigState, BUILD_CONSTRAINT_TOL,
};
use crate::rng::{substream, StreamDomain};
use crate::{CMatrix, CVector};
use nalgebra::Cholesky;
use num_complex::Complex64;
use rand_distr::{Distribution, Normal};

/// Condition number beyond which an unregularized solve is refused.
pub const RANK_CONDITION_LIMIT: f64 = 1e12;

/// A pilot schedule: one known reconfiguration per slot, a unit-power
/// pilot symbol, and the observation noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotProtocol {
    /// Configuration applied across all layers in each slot.
    pub slot_states: Vec<ReconfigState>,
    /// Pilot symbol; must have unit power.
    pub pilot: Complex64,
    /// Per-sample complex noise variance at the RF chains.
    pub noise_power: f64,
    /// Seed for the noise substreams.
    pub seed: u64,
}

impl PilotProtocol {
    pub fn new(slot_states: Vec<ReconfigState>, noise_power: f64, seed: u64) -> Self {
        PilotProtocol {
            slot_states,
            pilot: Complex64::new(1.0, 0.0),
            noise_power,
            seed,
        }
    }

    pub fn num_slots(&self) -> usize {
        self.slot_states.len()
    }

    pub fn validate(&self, spec: &ArchitectureSpec) -> Result<()> {
        if self.slot_states.is_empty() {
            return Err(Error::InvalidParameter {
                detail: "pilot protocol needs at least one slot".into(),
            });
        }
        if (self.pilot.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter {
                detail: format!("pilot symbol must have unit power, |pilot| = {}", self.pilot.norm()),
            });
        }
        if !(self.noise_power >= 0.0) {
            return Err(Error::InvalidParameter {
                detail: format!("noise power must be nonnegative, got {}", self.noise_power),
            });
        }
        for (t, state) in self.slot_states.iter().enumerate() {
            if state.layers.len() != spec.num_layers() {
                return Err(Error::DimensionMismatch {
                    context: format!(
                        "slot {t} state has {} layers, architecture has {}",
                        state.layers.len(),
                        spec.num_layers()
                    ),
                });
            }
            for (l, layer) in state.layers.iter().enumerate() {
                let drift = layer.feasibility_error();
                if drift > BUILD_CONSTRAINT_TOL {
                    return Err(Error::ConstraintViolation {
                        layer: l,
                        element: layer.worst_element(),
                        detail: format!("slot {t} state is {drift:.3e} off its constraint family"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// The stacked linear system collected over all pilot slots.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedSystem {
    /// Received samples, slot-major: T*K entries.
    pub y: CVector,
    /// Stacked observation matrix, (T*K) x N.
    pub phi: CMatrix,
    pub slots: usize,
}

/// Outcome of a channel solve.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub estimate: CVector,
    /// ||estimate - truth||^2 / ||truth||^2 when the truth was supplied
    /// and nonzero.
    pub nmse: Option<f64>,
    /// Largest over smallest singular value of the stacked matrix.
    pub condition_number: f64,
    pub slots_used: usize,
}

/// Linear map from the unknown channel vector to the K samples observed
/// in one slot under the given configuration: the transpose of the full
/// layer product.
pub fn observation_matrix(
    spec: &ArchitectureSpec,
    feeds: &[FeedingMatrix],
    state: &ReconfigState,
) -> Result<CMatrix> {
    Ok(layer_product(spec, feeds, state)?.transpose())
}

/// Simulate the whole protocol against a known channel: per slot t,
/// y_t = pilot * Phi_t h + n_t with i.i.d. complex Gaussian noise of the
/// protocol's variance. Deterministic for a fixed seed; each slot draws
/// from its own substream.
pub fn run_protocol(
    spec: &ArchitectureSpec,
    feeds: &[FeedingMatrix],
    protocol: &PilotProtocol,
    true_channel: &CVector,
) -> Result<StackedSystem> {
    protocol.validate(spec)?;
    let n = spec.radiating_elements();
    if true_channel.len() != n {
        return Err(Error::DimensionMismatch {
            context: format!(
                "channel vector has {} entries, architecture radiates {} elements",
                true_channel.len(),
                n
            ),
        });
    }
    let k = spec.num_rf_chains;
    let t_slots = protocol.num_slots();
    let mut phi = CMatrix::zeros(t_slots * k, n);
    let mut y = CVector::zeros(t_slots * k);
    let sigma = (protocol.noise_power / 2.0).sqrt();
    for (t, state) in protocol.slot_states.iter().enumerate() {
        let phi_t = observation_matrix(spec, feeds, state)?;
        let y_t = &phi_t * true_channel * protocol.pilot;
        let mut rng = substream(protocol.seed, StreamDomain::PilotNoise, t as u64);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        for r in 0..k {
            let noise = if protocol.noise_power > 0.0 {
                Complex64::new(
                    sigma * normal.sample(&mut rng),
                    sigma * normal.sample(&mut rng),
                )
            } else {
                Complex64::new(0.0, 0.0)
            };
            y[t * k + r] = y_t[r] + noise;
            for c in 0..n {
                phi[(t * k + r, c)] = phi_t[(r, c)] * protocol.pilot;
            }
        }
    }
    Ok(StackedSystem {
        y,
        phi,
        slots: t_slots,
    })
}

/// Solve the stacked system. `ridge = 0` gives plain least squares and
/// demands an overdetermined, numerically full-rank system; `ridge > 0`
/// solves (Phi^H Phi + ridge I) h = Phi^H y and works at any slot count.
pub fn solve_ls(
    system: &StackedSystem,
    ridge: f64,
    truth: Option<&CVector>,
) -> Result<EstimationReport> {
    if !(ridge >= 0.0) {
        return Err(Error::InvalidParameter {
            detail: format!("ridge weight must be nonnegative, got {ridge}"),
        });
    }
    let (rows, n) = (system.phi.nrows(), system.phi.ncols());
    let svd = system.phi.clone().svd(true, true);
    let s_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let s_min = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let condition_number = if s_min > 0.0 {
        s_max / s_min
    } else {
        f64::INFINITY
    };
    let estimate = if ridge == 0.0 {
        if rows < n {
            return Err(Error::InsufficientObservations {
                observations: rows,
                unknowns: n,
            });
        }
        if !(condition_number <= RANK_CONDITION_LIMIT) {
            return Err(Error::RankDeficient {
                condition: condition_number,
            });
        }
        svd.solve(&system.y, s_max * 1e-15)
            .map_err(|detail| Error::InvalidParameter {
                detail: detail.to_string(),
            })?
    } else {
        let mut gram = system.phi.adjoint() * &system.phi;
        for i in 0..n {
            gram[(i, i)] += Complex64::new(ridge, 0.0);
        }
        let rhs = system.phi.adjoint() * &system.y;
        let chol = Cholesky::new(gram).ok_or(Error::RankDeficient {
            condition: condition_number,
        })?;
        chol.solve(&rhs)
    };
    let nmse = truth.and_then(|h| {
        let denom = h.norm_squared();
        if denom > 0.0 {
            Some((&estimate - h).norm_squared() / denom)
        } else {
            None
        }
    });
    Ok(EstimationReport {
        estimate,
        nmse,
        condition_number,
        slots_used: system.slots,
    })
}

/// Draw T i.i.d. uniform random feasible configurations, one per slot.
/// Deterministic per seed; slot t draws from its own substream.
pub fn design_configs(spec: &ArchitectureSpec, slots: usize, seed: u64) -> Result<Vec<ReconfigState>> {
    if slots == 0 {
        return Err(Error::InvalidParameter {
            detail: "a pilot schedule needs at least one slot".into(),
        });
    }
    Ok((0..slots)
        .map(|t| {
            let mut rng = substream(seed, StreamDomain::PilotConfigs, t as u64);
            ReconfigState::uniform_random(spec, &mut rng)
        })
        .collect())
}

/// Convenience: schedule, simulate, and solve in one call.
pub fn estimate_channel(
    spec: &ArchitectureSpec,
    feeds: &[FeedingMatrix],
    true_channel: &CVector,
    slots: usize,
    noise_power: f64,
    ridge: f64,
    seed: u64,
) -> Result<EstimationReport> {
    let protocol = PilotProtocol::new(design_configs(spec, slots, seed)?, noise_power, seed);
    let system = run_protocol(spec, feeds, &protocol, true_channel)?;
    solve_ls(&system, ridge, Some(true_channel))
}
