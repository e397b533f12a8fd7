//! Time modulation of the radiating layer.
//!
//! Elements switch among feasible responses over a periodic schedule of P
//! equal slots. A periodic piecewise-constant sequence q_n[p] mixes the
//! carrier into harmonics at multiples of the modulation rate; the k-th
//! harmonic sees the element as the DFT coefficient
//! c_{n,k} = (1/P) sum_p q_n[p] e^{-j 2 pi k p / P}, so each harmonic gets
//! its own effective aperture and beam. Harmonics are indexed modulo P
//! (aliased bins); out-of-band replicas are not modeled.
//!
//! Twiddle factors at quarter-period multiples are emitted exactly
//! (1, -j, -1, j), which keeps the classic cases bit-exact: a constant
//! sequence is DC only, and the [1, -1] toggle moves all power to the
//! first harmonic.
//!
//! Only the final (radiating) layer may be modulated; lower layers hold a
//! static configuration. The split designer builds sequences whose DC
//! coefficients realize a requested communication phase profile while the
//! first harmonic steers a sensing beam, refined by the shared projected
//! gradient loop.

use crate::error::{Error, Result};
use crate::framework::{
    ArchitectureSpec, BasebandProcessor, ConstraintFamily, FeedingMatrix, ReconfigState,
    BUILD_CONSTRAINT_TOL,
};
use crate::metrics::beam_pattern;
use crate::optimize::{self, DifferentiableObjective, StepRule};
use crate::rng::{substream, StreamDomain};
use crate::CVector;
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::TAU;

/// e^{-j 2 pi index / p}, exact at quarter-period multiples.
fn unit_root(index: usize, p: usize) -> Complex64 {
    let r = index % p;
    if r == 0 {
        Complex64::new(1.0, 0.0)
    } else if 4 * r == p {
        Complex64::new(0.0, -1.0)
    } else if 2 * r == p {
        Complex64::new(-1.0, 0.0)
    } else if 4 * r == 3 * p {
        Complex64::new(0.0, 1.0)
    } else {
        Complex64::from_polar(1.0, -TAU * r as f64 / p as f64)
    }
}

/// A periodic element control schedule: P slots per period, one complex
/// response per element per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeModulationPattern {
    /// Index of the modulated layer; only the final layer is supported
    /// downstream.
    pub layer: usize,
    /// `slots[n][p]` is element n's response in slot p.
    pub slots: Vec<Vec<Complex64>>,
    /// Modulation period in seconds.
    pub period: f64,
}

impl TimeModulationPattern {
    pub fn num_elements(&self) -> usize {
        self.slots.len()
    }

    pub fn num_slots(&self) -> usize {
        self.slots.first().map_or(0, Vec::len)
    }

    /// Structural and physical validity: rectangular slot table, P >= 1,
    /// positive period, and every slot value on the element's constraint
    /// family.
    pub fn validate(&self, spec: &ArchitectureSpec) -> Result<()> {
        if self.layer >= spec.num_layers() {
            return Err(Error::LayerOutOfRange {
                layer: self.layer,
                num_layers: spec.num_layers(),
            });
        }
        let n = spec.elements_per_layer[self.layer];
        if self.slots.len() != n {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "pattern covers {} elements, layer {} has {}",
                    self.slots.len(),
                    self.layer,
                    n
                ),
            });
        }
        let p = self.num_slots();
        if p == 0 {
            return Err(Error::InvalidParameter {
                detail: "a modulation pattern needs at least one slot".into(),
            });
        }
        if !(self.period > 0.0) {
            return Err(Error::InvalidParameter {
                detail: format!("modulation period must be positive, got {}", self.period),
            });
        }
        let family = &spec.constraints[self.layer];
        for (element, row) in self.slots.iter().enumerate() {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    context: format!(
                        "element {element} has {} slots, element 0 has {p}",
                        row.len()
                    ),
                });
            }
            for (slot, q) in row.iter().enumerate() {
                let drift = family.distance(*q);
                if drift > BUILD_CONSTRAINT_TOL {
                    return Err(Error::ConstraintViolation {
                        layer: self.layer,
                        element,
                        detail: format!("slot {slot} value is {drift:.3e} off the constraint family"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Per-element DFT coefficients of a modulation pattern over one period.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicDecomposition {
    pub layer: usize,
    /// `coefficients[n][k]` for harmonic orders k = 0..P-1.
    pub coefficients: Vec<Vec<Complex64>>,
}

impl HarmonicDecomposition {
    pub fn num_elements(&self) -> usize {
        self.coefficients.len()
    }

    pub fn num_harmonics(&self) -> usize {
        self.coefficients.first().map_or(0, Vec::len)
    }

    pub fn coefficient(&self, element: usize, k: usize) -> Complex64 {
        self.coefficients[element][k]
    }

    /// The diagonal the k-th harmonic sees in place of the static layer
    /// response.
    pub fn harmonic_profile(&self, k: usize) -> Vec<Complex64> {
        self.coefficients.iter().map(|row| row[k]).collect()
    }
}

/// DFT of each element's slot sequence:
/// c_{n,k} = (1/P) sum_p q_n[p] e^{-j 2 pi k p / P}.
pub fn harmonic_coefficients(pattern: &TimeModulationPattern) -> HarmonicDecomposition {
    let p = pattern.num_slots();
    let coefficients = pattern
        .slots
        .iter()
        .map(|row| {
            (0..p)
                .map(|k| {
                    let mut sum = Complex64::new(0.0, 0.0);
                    for (slot, q) in row.iter().enumerate() {
                        sum += q * unit_root(k * slot, p);
                    }
                    sum / p as f64
                })
                .collect()
        })
        .collect();
    HarmonicDecomposition {
        layer: pattern.layer,
        coefficients,
    }
}

/// Radiated power toward `steering` on harmonic k: the final layer's
/// diagonal is replaced by the k-th harmonic coefficients, lower layers
/// keep `static_state`, and the resulting effective matrix is scored as a
/// beam pattern.
pub fn harmonic_beam_pattern(
    spec: &ArchitectureSpec,
    feeds: &[FeedingMatrix],
    baseband: &BasebandProcessor,
    static_state: &ReconfigState,
    decomp: &HarmonicDecomposition,
    k: usize,
    steering: &CVector,
) -> Result<f64> {
    let final_layer = spec.num_layers() - 1;
    if decomp.layer != final_layer {
        return Err(Error::UnsupportedMultiLayerModulation {
            layer: decomp.layer,
            final_layer,
        });
    }
    if k >= decomp.num_harmonics() {
        return Err(Error::InvalidParameter {
            detail: format!(
                "harmonic order {k} outside 0..{}",
                decomp.num_harmonics()
            ),
        });
    }
    if decomp.num_elements() != spec.elements_per_layer[final_layer] {
        return Err(Error::DimensionMismatch {
            context: format!(
                "decomposition covers {} elements, final layer has {}",
                decomp.num_elements(),
                spec.elements_per_layer[final_layer]
            ),
        });
    }
    if static_state.layers.len() != spec.num_layers() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "static state has {} layers, architecture has {}",
                static_state.layers.len(),
                spec.num_layers()
            ),
        });
    }
    if feeds.len() != spec.num_layers() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "{} feed matrices for {} layers",
                feeds.len(),
                spec.num_layers()
            ),
        });
    }
    let mut chain = feeds[0].matrix.clone();
    for l in 0..spec.num_layers() {
        if l > 0 {
            if feeds[l].matrix.ncols() != chain.nrows() {
                return Err(Error::DimensionMismatch {
                    context: format!(
                        "feed matrix of layer {l} expects {} inputs, got {}",
                        feeds[l].matrix.ncols(),
                        chain.nrows()
                    ),
                });
            }
            chain = &feeds[l].matrix * chain;
        }
        let profile: Vec<Complex64> = if l == final_layer {
            decomp.harmonic_profile(k)
        } else {
            let layer = &static_state.layers[l];
            let drift = layer.feasibility_error();
            if drift > BUILD_CONSTRAINT_TOL {
                return Err(Error::ConstraintViolation {
                    layer: l,
                    element: layer.worst_element(),
                    detail: format!("static state is {drift:.3e} off its constraint family"),
                });
            }
            layer.q.clone()
        };
        if profile.len() != chain.nrows() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "layer {l} diagonal has {} entries, chain carries {}",
                    profile.len(),
                    chain.nrows()
                ),
            });
        }
        for (r, q) in profile.iter().enumerate() {
            for c in 0..chain.ncols() {
                chain[(r, c)] *= q;
            }
        }
    }
    let e_k = chain * &baseband.v;
    beam_pattern(&e_k, steering)
}

/// Dual-harmonic pattern design: DC carries the communication phase
/// profile, the first harmonic a sensing beam.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDesign {
    pub pattern: TimeModulationPattern,
    /// Achieved DC coefficients, one per element.
    pub c0: Vec<Complex64>,
    /// Achieved first-harmonic coefficients.
    pub c1: Vec<Complex64>,
    /// |sum_n e^{-j phi_n} c0_n|^2; N^2 at a perfectly aligned constant
    /// pattern.
    pub comm_alignment: f64,
    /// |sum_n a_n^* c1_n|^2 toward the sensing direction; N^2 maximum.
    pub sense_gain: f64,
}

/// Refinement objective of the split designer: the negative weighted
/// squared distance of each element's DC and first-harmonic coefficients
/// from their target values. Matching targets (rather than maximizing
/// raw beam powers) removes the flat ridge a weighted power sum has
/// between the two harmonics, so the requested split is held.
struct SplitObjective {
    /// Target DC coefficient per element.
    t0: Vec<Complex64>,
    /// Target first-harmonic coefficient per element.
    t1: Vec<Complex64>,
    sense_weight: f64,
    slots: usize,
}

impl SplitObjective {
    /// Achieved (c0, c1) per element; `params` is element-major slot
    /// phases.
    fn coefficients(&self, params: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let p = self.slots;
        let mut c0 = Vec::with_capacity(self.t0.len());
        let mut c1 = Vec::with_capacity(self.t0.len());
        for row in params.chunks(p) {
            let mut s0 = Complex64::new(0.0, 0.0);
            let mut s1 = Complex64::new(0.0, 0.0);
            for (slot, theta) in row.iter().enumerate() {
                let q = Complex64::from_polar(1.0, *theta);
                s0 += q;
                s1 += q * unit_root(slot, p);
            }
            c0.push(s0 / p as f64);
            c1.push(s1 / p as f64);
        }
        (c0, c1)
    }
}

impl DifferentiableObjective for SplitObjective {
    fn dim(&self) -> usize {
        self.t0.len() * self.slots
    }

    fn value(&self, params: &[f64]) -> Result<f64> {
        let (c0, c1) = self.coefficients(params);
        let mut loss = 0.0;
        for e in 0..self.t0.len() {
            loss += (1.0 - self.sense_weight) * (c0[e] - self.t0[e]).norm_sqr()
                + self.sense_weight * (c1[e] - self.t1[e]).norm_sqr();
        }
        Ok(-loss)
    }

    fn gradient(&self, params: &[f64]) -> Result<Vec<f64>> {
        let (c0, c1) = self.coefficients(params);
        let p = self.slots;
        let mut grad = Vec::with_capacity(params.len());
        for (e, row) in params.chunks(p).enumerate() {
            let r0 = c0[e] - self.t0[e];
            let r1 = c1[e] - self.t1[e];
            for (slot, theta) in row.iter().enumerate() {
                let q = Complex64::from_polar(1.0, *theta);
                let g0 = 2.0 * (r0.conj() * q).im / p as f64;
                let g1 = 2.0 * (r1.conj() * q * unit_root(slot, p)).im / p as f64;
                grad.push((1.0 - self.sense_weight) * g0 + self.sense_weight * g1);
            }
        }
        Ok(grad)
    }
}

/// Design a unit-modulus pattern on the final layer whose DC coefficients
/// follow `comm_phases` and whose first harmonic beams toward the given
/// far-field direction. `sense_weight` in [0, 1] trades the two goals;
/// `comm_magnitude` requests the DC magnitude of the target split
/// (default sqrt(1 - sense_weight)) and must not exceed the unit slot
/// power budget. A closed-form two-harmonic seed is refined by the shared
/// backtracking ascent toward the target coefficient profile, from one
/// deterministic and one seeded random start.
#[allow(clippy::too_many_arguments)]
pub fn design_split_pattern(
    spec: &ArchitectureSpec,
    comm_phases: &[f64],
    sense_azimuth: f64,
    sense_elevation: f64,
    slots: usize,
    seed: u64,
    sense_weight: f64,
    comm_magnitude: Option<f64>,
) -> Result<SplitDesign> {
    let final_layer = spec.num_layers() - 1;
    if spec.constraints[final_layer] != ConstraintFamily::UnitModulus {
        return Err(Error::InvalidParameter {
            detail: "the split designer drives phase-only elements; the final layer must be unit modulus".into(),
        });
    }
    let n = spec.elements_per_layer[final_layer];
    if comm_phases.len() != n {
        return Err(Error::DimensionMismatch {
            context: format!(
                "{} communication phases for {} elements",
                comm_phases.len(),
                n
            ),
        });
    }
    if slots < 2 {
        return Err(Error::InvalidParameter {
            detail: format!("splitting two harmonics needs at least 2 slots, got {slots}"),
        });
    }
    if !(0.0..=1.0).contains(&sense_weight) {
        return Err(Error::InvalidParameter {
            detail: format!("sense weight must lie in [0, 1], got {sense_weight}"),
        });
    }
    let m = comm_magnitude.unwrap_or((1.0 - sense_weight).sqrt());
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::InfeasibleSplit {
            requested: m,
            max_feasible: 1.0,
        });
    }
    let steering = crate::channel::farfield_steering(
        spec.radiating_positions(),
        sense_azimuth,
        sense_elevation,
        spec.wavelength(),
    )?;
    let sense_mag = (1.0 - m * m).sqrt();

    // Closed-form seed: per slot, the phase of the two-harmonic target
    // m e^{j phi_n} + sqrt(1 - m^2) e^{j chi_n} e^{j 2 pi p / P}, where
    // chi_n = arg(a_n) aligns the first harmonic with the steering vector.
    let mut theta0 = Vec::with_capacity(n * slots);
    for (e, phi) in comm_phases.iter().enumerate() {
        let chi = steering[e].arg();
        for p in 0..slots {
            let target = Complex64::from_polar(m, *phi)
                + Complex64::from_polar(sense_mag, chi) * unit_root(p, slots).conj();
            theta0.push(optimize::project_unit_modulus(target).arg());
        }
    }
    let mut rng = substream(seed, StreamDomain::Waveform, 1);
    let theta_rand: Vec<f64> = (0..n * slots).map(|_| rng.gen::<f64>() * TAU).collect();

    let objective = SplitObjective {
        t0: comm_phases
            .iter()
            .map(|phi| Complex64::from_polar(m, *phi))
            .collect(),
        t1: steering
            .iter()
            .map(|a| Complex64::from_polar(sense_mag, a.arg()))
            .collect(),
        sense_weight,
        slots,
    };
    let mut best: Option<optimize::AscentOutcome> = None;
    for start in [theta0, theta_rand] {
        let outcome = optimize::ascend(&objective, start, StepRule::default(), 300, 1e-12)?;
        let better = match &best {
            None => true,
            Some(b) => outcome.final_value > b.final_value,
        };
        if better {
            best = Some(outcome);
        }
    }
    let best = best.expect("two starts");

    let pattern = TimeModulationPattern {
        layer: final_layer,
        slots: best
            .final_params
            .chunks(slots)
            .map(|row| row.iter().map(|t| Complex64::from_polar(1.0, *t)).collect())
            .collect(),
        period: 1e-6,
    };
    let decomp = harmonic_coefficients(&pattern);
    let c0 = decomp.harmonic_profile(0);
    let c1 = decomp.harmonic_profile(1);
    let comm_alignment = comm_phases
        .iter()
        .zip(&c0)
        .map(|(phi, c)| Complex64::from_polar(1.0, -phi) * c)
        .sum::<Complex64>()
        .norm_sqr();
    let sense_gain = steering
        .iter()
        .zip(&c1)
        .map(|(a, c)| a.conj() * c)
        .sum::<Complex64>()
        .norm_sqr();
    Ok(SplitDesign {
        pattern,
        c0,
        c1,
        comm_alignment,
        sense_gain,
    })
}
