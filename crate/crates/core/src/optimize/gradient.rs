//! Analytic gradients of the scenario objectives with respect to the
//! element parameters, via the chain rule through the layer product.
//!
//! For a real objective f(E), write W for the entrywise Wirtinger
//! derivative of f with respect to E, so df = 2 Re tr(W^T dE). With
//! x_l the input into layer l's diagonal (x_l = T_l Q_{l-1} ... Q_0 T_0 V)
//! and s_l the map from layer l's output to the aperture
//! (s_{L-1} = I, s_{l-1} = s_l Q_l T_l), perturbing one coefficient
//! q_{l,n} gives df = 2 Re{ c_{l,n} dq_{l,n} } with
//! c_{l,n} = (x_l W^T s_l)_{nn}. The parameter gradients follow from the
//! per-family charts q = e^{j phi}, q = j/2 + e^{j psi}/2, and q = a:
//! -2 Im{c q}, -2 Im{c (q - j/2)}, and 2 Re{c} respectively.

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::framework::{
    ArchitectureSpec, BasebandProcessor, ConstraintFamily, FeedingMatrix, LayerState,
    ReconfigState,
};
use crate::metrics::{self, fitted_mask_scale};
use crate::optimize::projections;
use crate::{CMatrix, CVector};
use num_complex::Complex64;

const LORENTZIAN_CENTER: Complex64 = Complex64::new(0.0, 0.5);

/// Multiply rows of `m` by the coefficients `q`.
fn scale_rows(m: &CMatrix, q: &[Complex64]) -> CMatrix {
    let mut out = m.clone();
    for (r, qv) in q.iter().enumerate() {
        for c in 0..out.ncols() {
            out[(r, c)] *= qv;
        }
    }
    out
}

/// Forward and backward partial products around every layer's diagonal.
struct ChainFactors {
    /// inputs[l]: N_l x S matrix entering layer l's diagonal.
    inputs: Vec<CMatrix>,
    /// suffixes[l]: N_L x N_l map from layer l's output to the aperture.
    suffixes: Vec<CMatrix>,
    /// E itself.
    effective: CMatrix,
}

fn chain_factors(feeds: &[FeedingMatrix], layers: &[LayerState], v: &CMatrix) -> ChainFactors {
    let num_layers = feeds.len();
    let mut inputs = Vec::with_capacity(num_layers);
    let mut cur = v.clone();
    for (feed, layer) in feeds.iter().zip(layers) {
        let x = &feed.matrix * &cur;
        cur = scale_rows(&x, &layer.q);
        inputs.push(x);
    }
    let n_last = layers[num_layers - 1].q.len();
    let mut suffixes = vec![CMatrix::zeros(0, 0); num_layers];
    suffixes[num_layers - 1] = CMatrix::identity(n_last, n_last);
    for l in (0..num_layers.saturating_sub(1)).rev() {
        // s_l = s_{l+1} Q_{l+1} T_{l+1}: scale the columns of s_{l+1} by
        // q_{l+1}, then push through the next feed.
        let mut scaled = suffixes[l + 1].clone();
        for (c, qv) in layers[l + 1].q.iter().enumerate() {
            for r in 0..scaled.nrows() {
                scaled[(r, c)] *= qv;
            }
        }
        suffixes[l] = scaled * &feeds[l + 1].matrix;
    }
    ChainFactors {
        inputs,
        suffixes,
        effective: cur,
    }
}

/// Per-element complex sensitivities c_{l,n} = (x_l W^T s_l)_{nn}.
fn sensitivities(factors: &ChainFactors, w: &CMatrix) -> Vec<Vec<Complex64>> {
    let wt = w.transpose();
    factors
        .inputs
        .iter()
        .zip(&factors.suffixes)
        .map(|(x, s)| {
            let left = x * &wt;
            (0..x.nrows())
                .map(|n| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for m in 0..left.ncols() {
                        acc += left[(n, m)] * s[(m, n)];
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// What the optimizer maximizes, with its data resolved to matrices.
pub(crate) enum ResolvedObjective {
    SumRate {
        stream_map: Vec<usize>,
    },
    BeamPatternGain,
    /// Ascends the negative mask-matching error.
    BeampatternMse {
        grid: Vec<CVector>,
        mask: Vec<f64>,
    },
    WeightedIsac {
        omega: f64,
        rate_ref: f64,
        power_ref: f64,
        stream_map: Vec<usize>,
    },
}

/// A scenario objective as a differentiable function of the flattened
/// element parameters (all layers concatenated in order). The baseband
/// matrix is held fixed; discrete amplitude sets are relaxed to their
/// bounding box so the function stays continuous.
pub struct ScenarioObjective<'a> {
    pub(crate) spec: &'a ArchitectureSpec,
    pub(crate) feeds: &'a [FeedingMatrix],
    pub(crate) channels: &'a ChannelSet,
    pub(crate) baseband: BasebandProcessor,
    pub(crate) objective: ResolvedObjective,
}

/// A real function of a flat parameter vector with an analytic gradient.
pub trait DifferentiableObjective {
    fn dim(&self) -> usize;
    fn value(&self, params: &[f64]) -> Result<f64>;
    fn gradient(&self, params: &[f64]) -> Result<Vec<f64>>;
    /// Map a freshly stepped parameter vector back onto the feasible
    /// chart. Defaults to the identity for unconstrained parameters.
    fn retract(&self, _params: &mut [f64]) {}
}

impl<'a> ScenarioObjective<'a> {
    /// Project one parameter into its iteration-time feasible chart:
    /// angles pass through, amplitudes land in their (relaxed) box.
    pub(crate) fn project_param(family: &ConstraintFamily, p: f64) -> f64 {
        match family {
            ConstraintFamily::UnitModulus | ConstraintFamily::Lorentzian => p,
            ConstraintFamily::AmplitudeRange { lo, hi } => p.abs().clamp(*lo, *hi),
            ConstraintFamily::AmplitudeSet { levels } => {
                let lo = levels.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                p.abs().clamp(lo, hi)
            }
        }
    }

    /// Realize the (relaxed) coefficient for one parameter.
    fn realize_relaxed(family: &ConstraintFamily, p: f64) -> Complex64 {
        match family {
            ConstraintFamily::UnitModulus => Complex64::from_polar(1.0, p),
            ConstraintFamily::Lorentzian => LORENTZIAN_CENTER + Complex64::from_polar(0.5, p),
            ConstraintFamily::AmplitudeRange { .. } | ConstraintFamily::AmplitudeSet { .. } => {
                Complex64::new(Self::project_param(family, p), 0.0)
            }
        }
    }

    pub(crate) fn layer_sizes(&self) -> &[usize] {
        &self.spec.elements_per_layer
    }

    /// Relaxed state for a flat parameter vector (iteration chart).
    pub(crate) fn relaxed_state(&self, params: &[f64]) -> ReconfigState {
        let mut layers = Vec::with_capacity(self.spec.num_layers());
        let mut offset = 0;
        for (family, n) in self.spec.constraints.iter().zip(self.layer_sizes()) {
            let q = params[offset..offset + n]
                .iter()
                .map(|p| Self::realize_relaxed(family, *p))
                .collect();
            layers.push(LayerState {
                family: family.clone(),
                q,
            });
            offset += n;
        }
        ReconfigState { layers }
    }

    /// Fully feasible state: discrete amplitude sets snap to their nearest
    /// level, everything else matches the relaxed chart.
    pub(crate) fn feasible_state(&self, params: &[f64]) -> ReconfigState {
        let mut state = self.relaxed_state(params);
        for (layer, family) in state.layers.iter_mut().zip(&self.spec.constraints) {
            if let ConstraintFamily::AmplitudeSet { levels } = family {
                for q in &mut layer.q {
                    *q = Complex64::new(projections::nearest_level(q.re, levels), 0.0);
                }
            }
        }
        state
    }

    pub(crate) fn flatten(&self, state: &ReconfigState) -> Vec<f64> {
        state
            .layers
            .iter()
            .flat_map(|layer| layer.parameters())
            .collect()
    }

    fn factors(&self, params: &[f64]) -> ChainFactors {
        let state = self.relaxed_state(params);
        chain_factors(self.feeds, &state.layers, &self.baseband.v)
    }

    /// Objective value for an explicit effective matrix.
    pub(crate) fn objective_of(&self, e: &CMatrix) -> Result<f64> {
        let value = match &self.objective {
            ResolvedObjective::SumRate { stream_map } => {
                metrics::sum_rate(&self.channels.h, e, self.channels.noise_power, stream_map)?.0
            }
            ResolvedObjective::BeamPatternGain => worst_target_power(e, &self.channels.target_steering)?.0,
            ResolvedObjective::BeampatternMse { grid, mask } => {
                -metrics::beampattern_mse(e, grid, mask)?
            }
            ResolvedObjective::WeightedIsac {
                omega,
                rate_ref,
                power_ref,
                stream_map,
            } => {
                let rate =
                    metrics::sum_rate(&self.channels.h, e, self.channels.noise_power, stream_map)?.0;
                let (worst, _) = worst_target_power(e, &self.channels.target_steering)?;
                metrics::isac_objective(*omega, rate, *rate_ref, &[worst], *power_ref)?
            }
        };
        if !value.is_finite() {
            return Err(Error::NonFiniteObjective {
                context: "scenario objective evaluation".into(),
            });
        }
        Ok(value)
    }

    /// Wirtinger matrix W = df/dE for the configured objective at E.
    fn wirtinger(&self, e: &CMatrix) -> Result<CMatrix> {
        match &self.objective {
            ResolvedObjective::SumRate { stream_map } => {
                sum_rate_wirtinger(&self.channels.h, e, self.channels.noise_power, stream_map)
            }
            ResolvedObjective::BeamPatternGain => {
                let (_, worst_idx) = worst_target_power(e, &self.channels.target_steering)?;
                Ok(beam_gain_wirtinger(e, &self.channels.target_steering[worst_idx]))
            }
            ResolvedObjective::BeampatternMse { grid, mask } => Ok(mse_ascent_wirtinger(e, grid, mask)),
            ResolvedObjective::WeightedIsac {
                omega,
                rate_ref,
                power_ref,
                stream_map,
            } => {
                let w_rate =
                    sum_rate_wirtinger(&self.channels.h, e, self.channels.noise_power, stream_map)?;
                let (_, worst_idx) = worst_target_power(e, &self.channels.target_steering)?;
                let w_beam = beam_gain_wirtinger(e, &self.channels.target_steering[worst_idx]);
                Ok(w_rate * Complex64::new(omega / rate_ref, 0.0)
                    + w_beam * Complex64::new((1.0 - omega) / power_ref, 0.0))
            }
        }
    }
}

impl<'a> DifferentiableObjective for ScenarioObjective<'a> {
    fn dim(&self) -> usize {
        self.layer_sizes().iter().sum()
    }

    fn value(&self, params: &[f64]) -> Result<f64> {
        let factors = self.factors(params);
        self.objective_of(&factors.effective)
    }

    fn gradient(&self, params: &[f64]) -> Result<Vec<f64>> {
        let factors = self.factors(params);
        let w = self.wirtinger(&factors.effective)?;
        let sens = sensitivities(&factors, &w);
        let state = self.relaxed_state(params);
        let mut grad = Vec::with_capacity(self.dim());
        for (layer, c_layer) in state.layers.iter().zip(&sens) {
            for (q, c) in layer.q.iter().zip(c_layer) {
                let g = match &layer.family {
                    ConstraintFamily::UnitModulus => -2.0 * (c * q).im,
                    ConstraintFamily::Lorentzian => -2.0 * (c * (q - LORENTZIAN_CENTER)).im,
                    ConstraintFamily::AmplitudeRange { .. }
                    | ConstraintFamily::AmplitudeSet { .. } => 2.0 * c.re,
                };
                grad.push(g);
            }
        }
        Ok(grad)
    }

    fn retract(&self, params: &mut [f64]) {
        let mut idx = 0;
        for (family, n) in self.spec.constraints.iter().zip(self.layer_sizes()) {
            for _ in 0..*n {
                params[idx] = Self::project_param(family, params[idx]);
                idx += 1;
            }
        }
    }
}

/// Smallest per-target radiated power and the index attaining it.
pub(crate) fn worst_target_power(e: &CMatrix, targets: &[CVector]) -> Result<(f64, usize)> {
    if targets.is_empty() {
        return Err(Error::InvalidParameter {
            detail: "objective needs at least one sensing target steering vector".into(),
        });
    }
    let mut worst = f64::INFINITY;
    let mut idx = 0;
    for (i, a) in targets.iter().enumerate() {
        let p = metrics::beam_pattern(e, a)?;
        if p < worst {
            worst = p;
            idx = i;
        }
    }
    Ok((worst, idx))
}

/// W for the quadratic-form power toward `a`: conj(a) conj(a^H E).
fn beam_gain_wirtinger(e: &CMatrix, a: &CVector) -> CMatrix {
    let row = a.adjoint() * e;
    CMatrix::from_fn(e.nrows(), e.ncols(), |i, j| {
        a[i].conj() * row[(0, j)].conj()
    })
}

/// W for the sum rate: H^H M with M the per-(user, stream) log-derivative
/// weights. Streams serving user u push their own gain up through the
/// 1/(signal + interference + noise) term; other streams carry the
/// additional -1/(interference + noise) interference penalty.
fn sum_rate_wirtinger(
    h: &CMatrix,
    e: &CMatrix,
    sigma2: f64,
    stream_map: &[usize],
) -> Result<CMatrix> {
    let num_streams = e.ncols();
    let g = h.conjugate() * e;
    let ln2 = std::f64::consts::LN_2;
    let mut m = CMatrix::zeros(h.nrows(), num_streams);
    for (s, u) in stream_map.iter().enumerate() {
        let signal = g[(*u, s)].norm_sqr();
        let mut denom = sigma2;
        for v in 0..num_streams {
            if v != s {
                denom += g[(*u, v)].norm_sqr();
            }
        }
        let total = signal + denom;
        for v in 0..num_streams {
            let factor = if v == s {
                1.0 / total
            } else {
                1.0 / total - 1.0 / denom
            };
            m[(*u, v)] = g[(*u, v)].conj() * (factor / ln2);
        }
    }
    Ok(h.adjoint() * m)
}

/// W for ascending the negative mask-matching error. The fitted mask scale
/// is itself a minimizer, so by the envelope theorem its dependence on E
/// drops out of the derivative.
fn mse_ascent_wirtinger(e: &CMatrix, grid: &[CVector], mask: &[f64]) -> CMatrix {
    let pattern: Vec<f64> = grid
        .iter()
        .map(|a| (e.adjoint() * a).norm_squared())
        .collect();
    let alpha = fitted_mask_scale(&pattern, mask);
    let scale = -2.0 / grid.len() as f64;
    let mut w = CMatrix::zeros(e.nrows(), e.ncols());
    for ((a, p), m) in grid.iter().zip(&pattern).zip(mask) {
        let residual = p - alpha * m;
        w += beam_gain_wirtinger(e, a) * Complex64::new(scale * residual, 0.0);
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::framework::FeedingTopology;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// One element, one stream: |h^H e|^2 cannot depend on the element's
    /// phase, so the analytic gradient must vanish identically.
    #[test]
    fn single_stream_rate_ignores_common_phase() {
        let spec = ArchitectureSpec::ris(1, 0.5, 28e9);
        let feeds = vec![FeedingMatrix {
            layer_index: 0,
            matrix: CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)),
            topology: FeedingTopology::ScalarCarrier,
        }];
        let h = Complex64::from_polar(0.8, 0.9);
        let channels = ChannelSet {
            h: CMatrix::from_element(1, 1, h),
            target_steering: vec![],
            noise_power: 0.5,
            wavelength: spec.wavelength(),
            field_regime: crate::channel::FieldRegime::FarField,
        };
        let p = 2.0;
        let obj = ScenarioObjective {
            spec: &spec,
            feeds: &feeds,
            channels: &channels,
            baseband: BasebandProcessor::scalar_power(p),
            objective: ResolvedObjective::SumRate { stream_map: vec![0] },
        };
        for phi in [0.0, 0.4, 1.3, -2.0] {
            let grad = obj.gradient(&[phi]).unwrap()[0];
            assert!(
                grad.abs() < 1e-12,
                "single-stream rate cannot depend on a global phase, got {grad}"
            );
        }
    }

    /// Central finite differences against the analytic gradient for every
    /// objective on a small two-layer architecture.
    #[test]
    fn finite_differences_agree_across_objectives() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let spec = ArchitectureSpec::sim(2, 4, 2, 2, 0.5, 0.004, 28e9);
        let feeds: Vec<FeedingMatrix> = (0..2)
            .map(|l| FeedingMatrix {
                layer_index: l,
                matrix: CMatrix::from_fn(4, if l == 0 { 2 } else { 4 }, |_, _| {
                    Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                }),
                topology: FeedingTopology::DenseDiffraction,
            })
            .collect();
        let h = CMatrix::from_fn(2, 4, |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let targets: Vec<CVector> = (0..2)
            .map(|_| {
                CVector::from_fn(4, |_, _| {
                    Complex64::from_polar(1.0, rng.gen::<f64>() * std::f64::consts::TAU)
                })
            })
            .collect();
        let channels = ChannelSet {
            h,
            target_steering: targets.clone(),
            noise_power: 0.3,
            wavelength: spec.wavelength(),
            field_regime: crate::channel::FieldRegime::FarField,
        };
        let baseband = BasebandProcessor::equal_power_diag(2, 2, 1.5);
        let objectives: Vec<ResolvedObjective> = vec![
            ResolvedObjective::SumRate { stream_map: vec![0, 1] },
            ResolvedObjective::BeamPatternGain,
            ResolvedObjective::BeampatternMse {
                grid: targets.clone(),
                mask: vec![1.0, 0.25],
            },
            ResolvedObjective::WeightedIsac {
                omega: 0.6,
                rate_ref: 2.0,
                power_ref: 5.0,
                stream_map: vec![0, 1],
            },
        ];
        for objective in objectives {
            let obj = ScenarioObjective {
                spec: &spec,
                feeds: &feeds,
                channels: &channels,
                baseband: baseband.clone(),
                objective,
            };
            let params: Vec<f64> = (0..obj.dim())
                .map(|_| rng.gen::<f64>() * std::f64::consts::TAU)
                .collect();
            let analytic = obj.gradient(&params).unwrap();
            let h_fd = 1e-6;
            let mut worst = 0.0_f64;
            let scale = analytic
                .iter()
                .fold(0.0_f64, |m, g| m.max(g.abs()))
                .max(1e-9);
            for i in 0..params.len() {
                let mut plus = params.clone();
                plus[i] += h_fd;
                let mut minus = params.clone();
                minus[i] -= h_fd;
                let fd = (obj.value(&plus).unwrap() - obj.value(&minus).unwrap()) / (2.0 * h_fd);
                worst = worst.max((fd - analytic[i]).abs() / scale);
            }
            assert!(worst < 1e-4, "gradient mismatch {worst}");
        }
    }
}
