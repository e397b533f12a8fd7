//! Constrained beamforming: projections, projected gradient ascent over
//! all layers' element parameters, alternating optimization for digitally
//! precoded architectures, a finite-difference gradient checker, and the
//! trade-off sweep between communication and sensing.
//!
//! The ascent works in each family's natural chart: phases for
//! unit-modulus elements, circle angles for Lorentzian elements, and
//! box-constrained amplitudes for amplitude families (discrete level sets
//! are relaxed to their bounding box during iterations and snapped to the
//! nearest level at the end). Backtracking line search keeps accepted
//! objective values nondecreasing; a fixed step rule trades that guarantee
//! for speed.

pub mod gradient;
pub mod projections;
pub mod waterfill;

pub use gradient::{DifferentiableObjective, ScenarioObjective};
pub use projections::{
    nearest_level, project_amplitude, project_lorentzian, project_unit_modulus,
};
pub use waterfill::{water_fill, zf_precoder, WATER_FILL_TOL};

use crate::channel::{self, ChannelSet};
use crate::error::{Error, Result};
use crate::framework::{
    layer_product, ArchKind, ArchitectureSpec, BasebandProcessor, FeedingMatrix, ReconfigState,
    BUILD_CONSTRAINT_TOL,
};
use crate::rng::{substream, StreamDomain};
use crate::CMatrix;
use gradient::{worst_target_power, ResolvedObjective};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Step size below which backtracking gives up and reports a stall.
pub const STEP_UNDERFLOW: f64 = 1e-12;

/// What the optimizer maximizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// Sum of log2(1 + SINR) over served users.
    SumRate,
    /// Radiated power toward the worst sensing target.
    BeamPatternGain,
    /// Weighted normalized blend of rate and worst-target power.
    WeightedIsac { omega: f64 },
    /// Negative mask-matching beam-pattern error (ascended).
    BeampatternMse,
}

/// Step-size policy of the ascent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StepRule {
    /// Constant step; accepted unconditionally, so the trace may dip.
    Fixed { eta: f64 },
    /// Armijo backtracking: start from an adaptive trial step, shrink by
    /// `tau` until f(new) >= f + c * eta * ||g||^2.
    Backtracking { c: f64, tau: f64 },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Backtracking { c: 1e-4, tau: 0.5 }
    }
}

/// Normalization references for the weighted dual-function objective:
/// the standalone optima of each function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsacReferences {
    pub rate_ref: f64,
    pub power_ref: f64,
}

/// Desired beam-pattern mask over a broadside cut, for the mask-matching
/// objective: `angles_deg[i]` is the cut angle of grid point i, `mask[i]`
/// its desired (relative) power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub angles_deg: Vec<f64>,
    pub mask: Vec<f64>,
}

fn default_max_iters() -> usize {
    200
}
fn default_tolerance() -> f64 {
    1e-9
}
fn default_num_starts() -> usize {
    4
}
fn default_inner_iters() -> usize {
    20
}
fn default_transmit_power() -> f64 {
    1.0
}

/// All knobs of the optimizers. Each field maps directly onto the runner's
/// JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub objective: ObjectiveKind,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub step: StepRule,
    /// Stop when the objective change per (outer) iteration drops below this.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Seed for random initializations.
    #[serde(default)]
    pub seed: u64,
    /// Independent random starts; the best final objective wins, ties to
    /// the earliest start.
    #[serde(default = "default_num_starts")]
    pub num_starts: usize,
    /// Gradient steps per outer round of the alternating optimizer.
    #[serde(default = "default_inner_iters")]
    pub inner_iters: usize,
    /// Power budget used when the optimizer constructs the baseband matrix.
    #[serde(default = "default_transmit_power")]
    pub transmit_power: f64,
    /// stream -> user assignment; identity when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream_map: Option<Vec<usize>>,
    /// Required for [`ObjectiveKind::WeightedIsac`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub references: Option<IsacReferences>,
    /// Required for [`ObjectiveKind::BeampatternMse`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<MaskSpec>,
}

impl OptimizerConfig {
    pub fn new(objective: ObjectiveKind) -> Self {
        OptimizerConfig {
            objective,
            max_iters: default_max_iters(),
            step: StepRule::default(),
            tolerance: default_tolerance(),
            seed: 0,
            num_starts: default_num_starts(),
            inner_iters: default_inner_iters(),
            transmit_power: default_transmit_power(),
            stream_map: None,
            references: None,
            mask: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::InvalidParameter {
                detail: "max_iters must be at least 1".into(),
            });
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter {
                detail: format!("tolerance must be positive, got {}", self.tolerance),
            });
        }
        if self.num_starts < 1 {
            return Err(Error::InvalidParameter {
                detail: "num_starts must be at least 1".into(),
            });
        }
        if self.inner_iters < 1 {
            return Err(Error::InvalidParameter {
                detail: "inner_iters must be at least 1".into(),
            });
        }
        if !(self.transmit_power > 0.0) {
            return Err(Error::InvalidParameter {
                detail: format!("transmit power must be positive, got {}", self.transmit_power),
            });
        }
        match self.step {
            StepRule::Fixed { eta } => {
                if !(eta > 0.0) {
                    return Err(Error::InvalidParameter {
                        detail: format!("fixed step must be positive, got {eta}"),
                    });
                }
            }
            StepRule::Backtracking { c, tau } => {
                if !(c > 0.0 && c < 1.0) || !(tau > 0.0 && tau < 1.0) {
                    return Err(Error::InvalidParameter {
                        detail: format!("backtracking needs c, tau in (0, 1), got c={c}, tau={tau}"),
                    });
                }
            }
        }
        if let ObjectiveKind::WeightedIsac { omega } = self.objective {
            if !(0.0..=1.0).contains(&omega) {
                return Err(Error::InvalidParameter {
                    detail: format!("weight must lie in [0, 1], got {omega}"),
                });
            }
        }
        Ok(())
    }
}

/// Why the ascent stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convergence {
    /// Objective change dropped below the tolerance.
    ToleranceReached,
    /// Iteration budget exhausted.
    MaxIterations,
    /// Backtracking shrank the step below [`STEP_UNDERFLOW`]; the iterate
    /// is reported as converged at a point the line search cannot improve.
    Stalled,
}

/// Everything a finished optimization reports.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationTrace {
    /// Accepted objective values, starting with the initial point's.
    pub objective: Vec<f64>,
    pub final_state: ReconfigState,
    pub final_baseband: BasebandProcessor,
    pub convergence: Convergence,
    /// Accepted iterations (outer rounds for the alternating optimizer).
    pub iterations: usize,
}

impl OptimizationTrace {
    pub fn final_objective(&self) -> f64 {
        *self.objective.last().expect("trace always holds the initial value")
    }
}

fn identity_stream_map(num_streams: usize) -> Vec<usize> {
    (0..num_streams).collect()
}

fn resolve_stream_map(spec: &ArchitectureSpec, channels: &ChannelSet, cfg: &OptimizerConfig) -> Result<Vec<usize>> {
    let map = cfg
        .stream_map
        .clone()
        .unwrap_or_else(|| identity_stream_map(spec.num_streams));
    let num_users = channels.h.nrows();
    if map.len() != spec.num_streams {
        return Err(Error::StreamMapInvalid {
            detail: format!(
                "{} map entries for {} streams",
                map.len(),
                spec.num_streams
            ),
        });
    }
    let mut seen = vec![false; num_users];
    for (s, u) in map.iter().enumerate() {
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
    Ok(map)
}

fn resolve_objective(
    spec: &ArchitectureSpec,
    channels: &ChannelSet,
    cfg: &OptimizerConfig,
) -> Result<ResolvedObjective> {
    match &cfg.objective {
        ObjectiveKind::SumRate => Ok(ResolvedObjective::SumRate {
            stream_map: resolve_stream_map(spec, channels, cfg)?,
        }),
        ObjectiveKind::BeamPatternGain => {
            if channels.target_steering.is_empty() {
                return Err(Error::InvalidParameter {
                    detail: "beam-pattern objective needs at least one sensing target".into(),
                });
            }
            Ok(ResolvedObjective::BeamPatternGain)
        }
        ObjectiveKind::BeampatternMse => {
            let mask = cfg.mask.as_ref().ok_or(Error::InvalidParameter {
                detail: "mask-matching objective needs the mask field (angles and desired powers)".into(),
            })?;
            if mask.angles_deg.is_empty() {
                return Err(Error::EmptyGrid);
            }
            if mask.mask.len() != mask.angles_deg.len() {
                return Err(Error::InvalidMask {
                    detail: format!(
                        "{} mask values for {} angles",
                        mask.mask.len(),
                        mask.angles_deg.len()
                    ),
                });
            }
            let positions = spec.radiating_positions();
            let grid = mask
                .angles_deg
                .iter()
                .map(|deg| {
                    let (az, el) = channel::broadside_cut_direction(deg.to_radians());
                    channel::farfield_steering(positions, az, el, spec.wavelength())
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ResolvedObjective::BeampatternMse {
                grid,
                mask: mask.mask.clone(),
            })
        }
        ObjectiveKind::WeightedIsac { omega } => {
            if channels.target_steering.is_empty() {
                return Err(Error::InvalidParameter {
                    detail: "dual-function objective needs at least one sensing target".into(),
                });
            }
            let refs = cfg.references.ok_or(Error::InvalidParameter {
                detail: "weighted objective needs references; derive them with compute_isac_references".into(),
            })?;
            if !(refs.rate_ref > 0.0) || !refs.rate_ref.is_finite() {
                return Err(Error::NonPositiveReference { value: refs.rate_ref });
            }
            if !(refs.power_ref > 0.0) || !refs.power_ref.is_finite() {
                return Err(Error::NonPositiveReference { value: refs.power_ref });
            }
            Ok(ResolvedObjective::WeightedIsac {
                omega: *omega,
                rate_ref: refs.rate_ref,
                power_ref: refs.power_ref,
                stream_map: resolve_stream_map(spec, channels, cfg)?,
            })
        }
    }
}

/// Differentiable view of a scenario for external gradient checks: same
/// machinery the optimizers run on.
pub fn scenario_objective<'a>(
    spec: &'a ArchitectureSpec,
    baseband: &BasebandProcessor,
    feeds: &'a [FeedingMatrix],
    channels: &'a ChannelSet,
    cfg: &OptimizerConfig,
) -> Result<ScenarioObjective<'a>> {
    cfg.validate()?;
    Ok(ScenarioObjective {
        spec,
        feeds,
        channels,
        baseband: baseband.clone(),
        objective: resolve_objective(spec, channels, cfg)?,
    })
}

/// Raw result of one ascent run in a flat parameter chart.
#[derive(Debug, Clone, PartialEq)]
pub struct AscentOutcome {
    /// Accepted objective values, starting with the initial point's.
    pub values: Vec<f64>,
    pub final_params: Vec<f64>,
    pub final_value: f64,
    pub convergence: Convergence,
    pub iterations: usize,
}

fn step_candidate(
    obj: &dyn DifferentiableObjective,
    params: &[f64],
    grad: &[f64],
    eta: f64,
) -> Vec<f64> {
    let mut cand: Vec<f64> = params
        .iter()
        .zip(grad)
        .map(|(p, g)| p + eta * g)
        .collect();
    obj.retract(&mut cand);
    cand
}

/// Single-start projected gradient ascent on any differentiable objective.
/// The scenario optimizers and the time-modulation designer both run on
/// this loop.
pub fn ascend(
    obj: &dyn DifferentiableObjective,
    p0: Vec<f64>,
    step: StepRule,
    max_iters: usize,
    tolerance: f64,
) -> Result<AscentOutcome> {
    let mut params = p0;
    obj.retract(&mut params);
    let mut value = obj.value(&params)?;
    let mut values = vec![value];
    let mut convergence = Convergence::MaxIterations;
    let mut iterations = 0;
    let mut trial_eta = match step {
        StepRule::Fixed { eta } => eta,
        StepRule::Backtracking { .. } => 1.0,
    };
    for _ in 0..max_iters {
        let grad = obj.gradient(&params)?;
        let grad_norm_sq: f64 = grad.iter().map(|g| g * g).sum();
        match step {
            StepRule::Fixed { eta } => {
                let cand = step_candidate(obj, &params, &grad, eta);
                let cand_value = obj.value(&cand)?;
                let delta = cand_value - value;
                params = cand;
                value = cand_value;
                values.push(value);
                iterations += 1;
                if delta.abs() < tolerance {
                    convergence = Convergence::ToleranceReached;
                    break;
                }
            }
            StepRule::Backtracking { c, tau } => {
                if grad_norm_sq == 0.0 {
                    convergence = Convergence::ToleranceReached;
                    break;
                }
                let mut eta = trial_eta;
                let mut accepted = None;
                while eta >= STEP_UNDERFLOW {
                    let cand = step_candidate(obj, &params, &grad, eta);
                    let cand_value = obj.value(&cand)?;
                    if cand_value >= value + c * eta * grad_norm_sq {
                        accepted = Some((cand, cand_value, eta));
                        break;
                    }
                    eta *= tau;
                }
                let Some((cand, cand_value, accepted_eta)) = accepted else {
                    convergence = Convergence::Stalled;
                    break;
                };
                let delta = cand_value - value;
                params = cand;
                value = cand_value;
                values.push(value);
                iterations += 1;
                trial_eta = (accepted_eta * 2.0).min(1e6);
                if delta < tolerance {
                    convergence = Convergence::ToleranceReached;
                    break;
                }
            }
        }
    }
    Ok(AscentOutcome {
        values,
        final_params: params,
        final_value: value,
        convergence,
        iterations,
    })
}

fn check_start_state(spec: &ArchitectureSpec, state: &ReconfigState) -> Result<()> {
    if state.layers.len() != spec.num_layers() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "start state has {} layers, architecture has {}",
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
                detail: format!("start state is {drift:.3e} off its constraint family"),
            });
        }
    }
    Ok(())
}

fn select_best(outcomes: Vec<AscentOutcome>) -> AscentOutcome {
    let mut best: Option<AscentOutcome> = None;
    for outcome in outcomes {
        let better = match &best {
            None => true,
            Some(b) => outcome.final_value > b.final_value,
        };
        if better {
            best = Some(outcome);
        }
    }
    best.expect("at least one start")
}

/// Projected gradient ascent over all layers' element parameters with the
/// baseband matrix held fixed. Runs `num_starts` independent starts (the
/// provided state plus uniform random ones drawn from the seed) and keeps
/// the best final objective, ties to the earliest start. Deterministic for
/// a fixed config.
pub fn gradient_ascent(
    spec: &ArchitectureSpec,
    baseband: &BasebandProcessor,
    feeds: &[FeedingMatrix],
    state0: &ReconfigState,
    channels: &ChannelSet,
    cfg: &OptimizerConfig,
) -> Result<OptimizationTrace> {
    cfg.validate()?;
    check_start_state(spec, state0)?;
    // Full chain validation (dimensions, families, drift) in one place.
    layer_product(spec, feeds, state0)?;
    if baseband.v.nrows() != spec.num_rf_chains || baseband.v.ncols() != spec.num_streams {
        return Err(Error::DimensionMismatch {
            context: format!(
                "baseband matrix is {}x{}, expected {}x{}",
                baseband.v.nrows(),
                baseband.v.ncols(),
                spec.num_rf_chains,
                spec.num_streams
            ),
        });
    }
    let obj = scenario_objective(spec, baseband, feeds, channels, cfg)?;
    let mut starts = Vec::with_capacity(cfg.num_starts);
    starts.push(obj.flatten(state0));
    for i in 1..cfg.num_starts {
        let mut rng = substream(cfg.seed, StreamDomain::OptimizerInit, i as u64);
        let state = ReconfigState::uniform_random(spec, &mut rng);
        starts.push(obj.flatten(&state));
    }
    let outcomes: Vec<AscentOutcome> = starts
        .into_par_iter()
        .map(|p0| ascend(&obj, p0, cfg.step, cfg.max_iters, cfg.tolerance))
        .collect::<Result<Vec<_>>>()?;
    let best = select_best(outcomes);
    Ok(OptimizationTrace {
        objective: best.values,
        final_state: obj.feasible_state(&best.final_params),
        final_baseband: baseband.clone(),
        convergence: best.convergence,
        iterations: best.iterations,
    })
}

/// Alternating optimization for digitally precoded waveguide architectures:
/// each outer round (a) re-derives the baseband matrix by regularized
/// zero-forcing with water-filling on the current effective channel,
/// keeping it only if it improves the true objective, then (b) runs
/// `inner_iters` projected gradient steps on the element parameters.
/// Feeds are built from the architecture's declared topologies with
/// default waveguide parameters; use
/// [`alternating_optimize_with_feeds`] to supply custom feeds.
pub fn alternating_optimize(
    spec: &ArchitectureSpec,
    channels: &ChannelSet,
    cfg: &OptimizerConfig,
) -> Result<OptimizationTrace> {
    let feeds = channel::build_feeds(spec, 1.0)?;
    alternating_optimize_with_feeds(spec, &feeds, channels, cfg)
}

/// See [`alternating_optimize`].
pub fn alternating_optimize_with_feeds(
    spec: &ArchitectureSpec,
    feeds: &[FeedingMatrix],
    channels: &ChannelSet,
    cfg: &OptimizerConfig,
) -> Result<OptimizationTrace> {
    cfg.validate()?;
    if !matches!(spec.kind, ArchKind::Dma | ArchKind::Rhs) {
        return Err(Error::InvalidParameter {
            detail: "alternating optimization requires a digitally precoded waveguide architecture"
                .into(),
        });
    }
    let stream_map = resolve_stream_map(spec, channels, cfg)?;
    let starts: Vec<ReconfigState> = (0..cfg.num_starts)
        .map(|i| {
            if i == 0 {
                ReconfigState::zero_phase(spec)
            } else {
                let mut rng = substream(cfg.seed, StreamDomain::OptimizerInit, i as u64);
                ReconfigState::uniform_random(spec, &mut rng)
            }
        })
        .collect();
    struct AltOutcome {
        values: Vec<f64>,
        state: ReconfigState,
        baseband: BasebandProcessor,
        final_value: f64,
        convergence: Convergence,
        iterations: usize,
    }
    let outcomes: Vec<AltOutcome> = starts
        .into_par_iter()
        .map(|start| -> Result<AltOutcome> {
            let mut state = start;
            let mut baseband = BasebandProcessor::equal_power_diag(
                spec.num_rf_chains,
                spec.num_streams,
                cfg.transmit_power,
            );
            let evaluate = |baseband: &BasebandProcessor, state: &ReconfigState| -> Result<f64> {
                let obj = scenario_objective(spec, baseband, feeds, channels, cfg)?;
                let aperture = layer_product(spec, feeds, state)?;
                obj.objective_of(&(aperture * &baseband.v))
            };
            let mut value = evaluate(&baseband, &state)?;
            let mut values = vec![value];
            let mut convergence = Convergence::MaxIterations;
            let mut iterations = 0;
            for _ in 0..cfg.max_iters {
                // (a) Baseband update: candidate precoders on the current
                // effective channel, accepted only on true-objective
                // improvement so the round composes monotonically.
                let aperture = layer_product(spec, feeds, &state)?;
                let h_eff = channels.h.conjugate() * &aperture;
                let h_stream = CMatrix::from_fn(stream_map.len(), h_eff.ncols(), |s, c| {
                    h_eff[(stream_map[s], c)]
                });
                let mut candidates: Vec<BasebandProcessor> = vec![];
                let delta_rzf = spec.num_streams as f64 * channels.noise_power / cfg.transmit_power;
                match zf_precoder(&h_stream, 0.0, cfg.transmit_power, channels.noise_power) {
                    Ok(bb) => candidates.push(bb),
                    Err(Error::SingularEffectiveChannel { condition })
                        if condition.is_finite() =>
                    {
                        // Ill-conditioned but nonzero: leave it to the
                        // regularized candidate.
                    }
                    Err(e) => return Err(e),
                }
                candidates.push(zf_precoder(
                    &h_stream,
                    delta_rzf,
                    cfg.transmit_power,
                    channels.noise_power,
                )?);
                for cand in candidates {
                    let cand_value = evaluate(&cand, &state)?;
                    if cand_value > value {
                        value = cand_value;
                        baseband = cand;
                    }
                }
                // (b) Element update with the baseband fixed.
                let obj = scenario_objective(spec, &baseband, feeds, channels, cfg)?;
                let inner = ascend(
                    &obj,
                    obj.flatten(&state),
                    cfg.step,
                    cfg.inner_iters,
                    cfg.tolerance,
                )?;
                let cand_state = obj.feasible_state(&inner.final_params);
                let cand_value = evaluate(&baseband, &cand_state)?;
                if cand_value >= value {
                    state = cand_state;
                    value = cand_value;
                }
                let delta = value - values.last().expect("nonempty");
                values.push(value);
                iterations += 1;
                if delta.abs() < cfg.tolerance {
                    convergence = Convergence::ToleranceReached;
                    break;
                }
            }
            Ok(AltOutcome {
                values,
                state,
                baseband,
                final_value: value,
                convergence,
                iterations,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<AltOutcome> = None;
    for outcome in outcomes {
        let better = match &best {
            None => true,
            Some(b) => outcome.final_value > b.final_value,
        };
        if better {
            best = Some(outcome);
        }
    }
    let best = best.expect("at least one start");
    Ok(OptimizationTrace {
        objective: best.values,
        final_state: best.state,
        final_baseband: best.baseband,
        convergence: best.convergence,
        iterations: best.iterations,
    })
}

/// Outcome of a finite-difference gradient audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    /// max_i |analytic_i - central_i| / max(||analytic||_inf, ||central||_inf).
    pub max_relative_error: f64,
    /// Coordinate attaining the maximum.
    pub worst_index: usize,
    /// Step actually used after clamping into [1e-8, 1e-3].
    pub step_used: f64,
}

/// Compare an objective's analytic gradient against central finite
/// differences at `point`. Pure; the step is clamped into [1e-8, 1e-3].
pub fn check_gradient(
    objective: &dyn DifferentiableObjective,
    point: &[f64],
    h_fd: f64,
) -> Result<GradientCheck> {
    let h = h_fd.clamp(1e-8, 1e-3);
    let analytic = objective.gradient(point)?;
    let mut central = Vec::with_capacity(point.len());
    let mut plus = point.to_vec();
    let mut minus = point.to_vec();
    for i in 0..point.len() {
        plus[i] = point[i] + h;
        minus[i] = point[i] - h;
        let fd = (objective.value(&plus)? - objective.value(&minus)?) / (2.0 * h);
        central.push(fd);
        plus[i] = point[i];
        minus[i] = point[i];
    }
    let scale = analytic
        .iter()
        .chain(&central)
        .fold(0.0_f64, |m, g| m.max(g.abs()))
        .max(1e-12);
    let mut worst = 0.0;
    let mut worst_index = 0;
    for i in 0..point.len() {
        let err = (analytic[i] - central[i]).abs() / scale;
        if err > worst {
            worst = err;
            worst_index = i;
        }
    }
    Ok(GradientCheck {
        max_relative_error: worst,
        worst_index,
        step_used: h,
    })
}

/// One sample of the communication/sensing trade-off frontier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub omega: f64,
    pub rate: f64,
    pub worst_target_power: f64,
}

fn evaluate_rate_and_power(
    spec: &ArchitectureSpec,
    baseband: &BasebandProcessor,
    feeds: &[FeedingMatrix],
    state: &ReconfigState,
    channels: &ChannelSet,
    stream_map: &[usize],
) -> Result<(f64, f64)> {
    let aperture = layer_product(spec, feeds, state)?;
    let e = aperture * &baseband.v;
    let (rate, _) = crate::metrics::sum_rate(&channels.h, &e, channels.noise_power, stream_map)?;
    let (power, _) = worst_target_power(&e, &channels.target_steering)?;
    Ok((rate, power))
}

/// Run the communication-only and sensing-only optimizations for a config
/// and return their final values as normalization references.
pub fn compute_isac_references(
    spec: &ArchitectureSpec,
    baseband: &BasebandProcessor,
    feeds: &[FeedingMatrix],
    channels: &ChannelSet,
    base_cfg: &OptimizerConfig,
) -> Result<IsacReferences> {
    let state0 = ReconfigState::zero_phase(spec);
    let stream_map = resolve_stream_map(spec, channels, base_cfg)?;
    let comm_cfg = OptimizerConfig {
        objective: ObjectiveKind::SumRate,
        references: None,
        ..base_cfg.clone()
    };
    let comm = gradient_ascent(spec, baseband, feeds, &state0, channels, &comm_cfg)?;
    let (rate_ref, _) =
        evaluate_rate_and_power(spec, baseband, feeds, &comm.final_state, channels, &stream_map)?;
    let sense_cfg = OptimizerConfig {
        objective: ObjectiveKind::BeamPatternGain,
        references: None,
        ..base_cfg.clone()
    };
    let sense = gradient_ascent(spec, baseband, feeds, &state0, channels, &sense_cfg)?;
    let (_, power_ref) =
        evaluate_rate_and_power(spec, baseband, feeds, &sense.final_state, channels, &stream_map)?;
    Ok(IsacReferences {
        rate_ref,
        power_ref,
    })
}

/// Sweep the dual-function weight over `omegas` (ascending in [0, 1]) with
/// a common initialization seed. The endpoints reuse the single-function
/// reference runs, so omega = 1 reports exactly the communication-only
/// optimum and omega = 0 the sensing-only optimum for that seed.
pub fn pareto_sweep(
    spec: &ArchitectureSpec,
    baseband: &BasebandProcessor,
    feeds: &[FeedingMatrix],
    channels: &ChannelSet,
    omegas: &[f64],
    base_cfg: &OptimizerConfig,
) -> Result<Vec<ParetoPoint>> {
    if omegas.is_empty() {
        return Err(Error::EmptyGrid);
    }
    for pair in omegas.windows(2) {
        if pair[1] < pair[0] {
            return Err(Error::InvalidParameter {
                detail: "weight grid must be sorted ascending".into(),
            });
        }
    }
    if omegas.iter().any(|w| !(0.0..=1.0).contains(w)) {
        return Err(Error::InvalidParameter {
            detail: "weights must lie in [0, 1]".into(),
        });
    }
    let stream_map = resolve_stream_map(spec, channels, base_cfg)?;
    let state0 = ReconfigState::zero_phase(spec);

    let comm_cfg = OptimizerConfig {
        objective: ObjectiveKind::SumRate,
        references: None,
        ..base_cfg.clone()
    };
    let comm = gradient_ascent(spec, baseband, feeds, &state0, channels, &comm_cfg)?;
    let comm_point =
        evaluate_rate_and_power(spec, baseband, feeds, &comm.final_state, channels, &stream_map)?;
    let sense_cfg = OptimizerConfig {
        objective: ObjectiveKind::BeamPatternGain,
        references: None,
        ..base_cfg.clone()
    };
    let sense = gradient_ascent(spec, baseband, feeds, &state0, channels, &sense_cfg)?;
    let sense_point =
        evaluate_rate_and_power(spec, baseband, feeds, &sense.final_state, channels, &stream_map)?;
    let references = IsacReferences {
        rate_ref: comm_point.0,
        power_ref: sense_point.1,
    };
    if !(references.rate_ref > 0.0) {
        return Err(Error::NonPositiveReference {
            value: references.rate_ref,
        });
    }
    if !(references.power_ref > 0.0) {
        return Err(Error::NonPositiveReference {
            value: references.power_ref,
        });
    }

    omegas
        .par_iter()
        .map(|omega| -> Result<ParetoPoint> {
            let (rate, power) = if *omega == 1.0 {
                comm_point
            } else if *omega == 0.0 {
                sense_point
            } else {
                let cfg = OptimizerConfig {
                    objective: ObjectiveKind::WeightedIsac { omega: *omega },
                    references: Some(references),
                    ..base_cfg.clone()
                };
                let trace = gradient_ascent(spec, baseband, feeds, &state0, channels, &cfg)?;
                evaluate_rate_and_power(
                    spec,
                    baseband,
                    feeds,
                    &trace.final_state,
                    channels,
                    &stream_map,
                )?
            };
            Ok(ParetoPoint {
                omega: *omega,
                rate,
                worst_target_power: power,
            })
        })
        .collect()
}
