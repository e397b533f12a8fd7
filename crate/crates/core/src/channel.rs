//! Propagation operators: steering vectors, stochastic user channels,
//! inter-layer diffraction feeds, and waveguide feeds.
//!
//! Conventions used throughout:
//! - positions are meters, layers are planes parallel to xy with normal +z;
//! - azimuth is measured in the xy-plane from +x, elevation from the
//!   xy-plane toward +z, so broadside for a z = 0 array is elevation pi/2;
//! - the near-field phase reference is the first element in position order;
//! - free-space pathloss is lambda/(4 pi d) to the array centroid, so the
//!   absolute link budget folds into the noise power and only SNR matters.

use crate::error::{Error, Result};
use crate::framework::{
    ArchitectureSpec, FeedingMatrix, FeedingTopology, LayerGeometry,
};
use crate::{CMatrix, CVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

/// Default waveguide attenuation, nepers per meter (representative
/// microstrip dielectric plus conductor loss; overridable per scenario).
pub const DEFAULT_WAVEGUIDE_ALPHA: f64 = 0.58;

/// Effective relative permittivity behind the default guided phase constant.
pub const DEFAULT_WAVEGUIDE_EPS_REL: f64 = 2.2;

/// Guided phase constant for the default substrate: 2 pi sqrt(eps_rel) / lambda.
pub fn default_waveguide_beta(lambda: f64) -> f64 {
    TAU * DEFAULT_WAVEGUIDE_EPS_REL.sqrt() / lambda
}

/// Which propagation regime a scenario's users fall in, relative to the
/// aperture's Rayleigh distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldRegime {
    FarField,
    NearField,
}

/// Stochastic user-channel models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ChannelModel {
    /// Deterministic: each row is the conjugated steering vector times the
    /// free-space pathloss.
    Los,
    /// LoS plus scattered component, power ratio k_factor to 1.
    Rician { k_factor: f64 },
    /// Pure i.i.d. unit-variance complex Gaussian entries, no pathloss.
    Rayleigh,
}

/// Aperture geometry summary used by channel generation.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryContext {
    /// Radiating element positions, meters.
    pub positions: Vec<[f64; 3]>,
    /// Aperture size D: largest pairwise element distance, meters.
    pub aperture: f64,
    /// Rayleigh distance 2 D^2 / lambda, meters.
    pub rayleigh_distance: f64,
    pub wavelength: f64,
}

impl GeometryContext {
    pub fn new(positions: Vec<[f64; 3]>, wavelength: f64) -> Result<Self> {
        check_wavelength(wavelength)?;
        if positions.is_empty() {
            return Err(Error::InvalidParameter {
                detail: "geometry needs at least one element position".into(),
            });
        }
        let mut aperture = 0.0_f64;
        for i in 0..positions.len() {
            for j in (i + 1)..positions.len() {
                aperture = aperture.max(dist(&positions[i], &positions[j]));
            }
        }
        Ok(GeometryContext {
            rayleigh_distance: 2.0 * aperture * aperture / wavelength,
            positions,
            aperture,
            wavelength,
        })
    }

    /// Context for an architecture's radiating (last) layer.
    pub fn from_spec(spec: &ArchitectureSpec) -> Result<Self> {
        Self::new(spec.radiating_positions().to_vec(), spec.wavelength())
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.positions.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.positions {
            for (ci, pi) in c.iter_mut().zip(p) {
                *ci += pi / n;
            }
        }
        c
    }
}

/// Channel realizations plus the scenario's sensing and noise context.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// One row per user, U x N_L.
    pub h: CMatrix,
    /// Steering vectors of the sensing targets.
    pub target_steering: Vec<CVector>,
    /// Noise power sigma^2, watts.
    pub noise_power: f64,
    pub wavelength: f64,
    pub field_regime: FieldRegime,
}

impl ChannelSet {
    pub fn with_targets(mut self, steering: Vec<CVector>) -> Self {
        self.target_steering = steering;
        self
    }
}

fn check_wavelength(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidWavelength { value: lambda });
    }
    Ok(())
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Unit direction vector for (azimuth, elevation) in radians.
pub fn direction_vector(azimuth: f64, elevation: f64) -> [f64; 3] {
    [
        elevation.cos() * azimuth.cos(),
        elevation.cos() * azimuth.sin(),
        elevation.sin(),
    ]
}

/// (azimuth, elevation) of a cut angle theta measured from broadside (+z)
/// inside the xz-plane; theta in [-pi/2, pi/2], negative toward -x.
pub fn broadside_cut_direction(theta: f64) -> (f64, f64) {
    if theta >= 0.0 {
        (0.0, FRAC_PI_2 - theta)
    } else {
        (PI, FRAC_PI_2 + theta)
    }
}

/// Plane-wave steering vector: entry n is e^{j 2 pi (p_n . u) / lambda}
/// with u the unit direction vector. Every entry has unit modulus.
pub fn farfield_steering(
    positions: &[[f64; 3]],
    azimuth: f64,
    elevation: f64,
    lambda: f64,
) -> Result<CVector> {
    check_wavelength(lambda)?;
    if positions.is_empty() {
        return Err(Error::InvalidParameter {
            detail: "steering needs at least one element position".into(),
        });
    }
    let u = direction_vector(azimuth, elevation);
    Ok(CVector::from_iterator(
        positions.len(),
        positions.iter().map(|p| {
            let proj = p[0] * u[0] + p[1] * u[1] + p[2] * u[2];
            Complex64::from_polar(1.0, TAU * proj / lambda)
        }),
    ))
}

/// Spherical-wave steering vector: entry n is e^{-j 2 pi (d_n - d_0) / lambda}
/// with d_n the exact element-to-source distance and d_0 the distance of
/// the first element (phase reference).
pub fn nearfield_steering(
    positions: &[[f64; 3]],
    source: &[f64; 3],
    lambda: f64,
) -> Result<CVector> {
    check_wavelength(lambda)?;
    if positions.is_empty() {
        return Err(Error::InvalidParameter {
            detail: "steering needs at least one element position".into(),
        });
    }
    let mut distances = Vec::with_capacity(positions.len());
    for (n, p) in positions.iter().enumerate() {
        let d = dist(p, source);
        if d < 1e-9 {
            return Err(Error::CoincidentSource {
                element: n,
                distance: d,
            });
        }
        distances.push(d);
    }
    let d0 = distances[0];
    Ok(CVector::from_iterator(
        distances.len(),
        distances
            .iter()
            .map(|d| Complex64::from_polar(1.0, -TAU * (d - d0) / lambda)),
    ))
}

/// Free-space scalar diffraction kernel between two points a distance `d`
/// apart, with `cos_chi` the obliquity from the source normal and `area`
/// the receiving element area:
/// (area cos_chi / d) (1/(2 pi d) - j/lambda) e^{j 2 pi d / lambda}.
pub fn diffraction_kernel(d: f64, cos_chi: f64, area: f64, lambda: f64) -> Complex64 {
    let spread = area * cos_chi / d;
    let field = Complex64::new(1.0 / (TAU * d), -1.0 / lambda);
    spread * field * Complex64::from_polar(1.0, TAU * d / lambda)
}

/// Dense inter-layer coupling matrix: entry (n, m) applies
/// [`diffraction_kernel`] between source element m of `from` and receiving
/// element n of `to`. Every pair needs positive normal separation.
pub fn sim_diffraction_matrix(
    from: &LayerGeometry,
    to: &LayerGeometry,
    lambda: f64,
    layer_index: usize,
) -> Result<FeedingMatrix> {
    check_wavelength(lambda)?;
    let mut matrix = CMatrix::zeros(to.positions.len(), from.positions.len());
    for (m, src) in from.positions.iter().enumerate() {
        for (n, dst) in to.positions.iter().enumerate() {
            let dz = (dst[2] - src[2]).abs();
            if !(dz > 0.0) {
                return Err(Error::NonPositiveSpacing { value: dst[2] - src[2] });
            }
            let d = dist(src, dst);
            matrix[(n, m)] = diffraction_kernel(d, dz / d, to.element_area, lambda);
        }
    }
    Ok(FeedingMatrix {
        layer_index,
        matrix,
        topology: FeedingTopology::DenseDiffraction,
    })
}

/// Per-waveguide element order and arclengths for a layer: either the
/// explicit `waveguide_of` assignment or contiguous index chunks (one per
/// RF chain, the first `N mod K` chunks one element longer).
fn waveguide_assignment(
    layer: &LayerGeometry,
    num_chains: usize,
) -> Result<Vec<Vec<usize>>> {
    let n = layer.positions.len();
    let mut guides = vec![Vec::new(); num_chains];
    match &layer.waveguide_of {
        Some(assign) => {
            if assign.len() != n {
                return Err(Error::DimensionMismatch {
                    context: format!(
                        "waveguide assignment has {} entries for {} elements",
                        assign.len(),
                        n
                    ),
                });
            }
            for (e, a) in assign.iter().enumerate() {
                match a {
                    Some(k) if *k < num_chains => guides[*k].push(e),
                    Some(k) => {
                        return Err(Error::StreamMapInvalid {
                            detail: format!(
                                "element {e} assigned to waveguide {k}, only {num_chains} RF chains"
                            ),
                        })
                    }
                    None => return Err(Error::UnassignedElement { element: e }),
                }
            }
        }
        None => {
            let base = n / num_chains;
            let extra = n % num_chains;
            let mut next = 0;
            for (k, guide) in guides.iter_mut().enumerate() {
                let len = base + usize::from(k < extra);
                guide.extend(next..next + len);
                next += len;
            }
        }
    }
    Ok(guides)
}

/// Waveguide feeding matrix for a single-surface architecture: entry (n, k)
/// is e^{-(alpha + j beta) rho_n} when element n sits on waveguide k at
/// arclength rho_n (cumulative distance along the guide's element chain,
/// zero at the guide's first element), and exactly zero elsewhere.
pub fn waveguide_feed(spec: &ArchitectureSpec, alpha: f64, beta: f64) -> Result<FeedingMatrix> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidParameter {
            detail: format!("waveguide attenuation must be nonnegative, got {alpha}"),
        });
    }
    let layer = &spec.geometry.layers[0];
    let guides = waveguide_assignment(layer, spec.num_rf_chains)?;
    let mut matrix = CMatrix::zeros(layer.positions.len(), spec.num_rf_chains);
    for (k, guide) in guides.iter().enumerate() {
        let mut rho = 0.0;
        for (slot, &n) in guide.iter().enumerate() {
            if slot > 0 {
                rho += dist(&layer.positions[guide[slot - 1]], &layer.positions[n]);
            }
            matrix[(n, k)] = Complex64::from_polar((-alpha * rho).exp(), -beta * rho);
        }
    }
    Ok(FeedingMatrix {
        layer_index: 0,
        matrix,
        topology: FeedingTopology::BlockDiagonalWaveguide,
    })
}

/// How to normalize dense diffraction feeds. The physical kernel can make
/// the end-to-end chain strongly attenuating; normalization moves that
/// scale out of the feeds so that transmit power comparisons stay readable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FeedNormalization {
    /// Raw kernel values; the link budget folds into the noise power.
    #[default]
    None,
    /// Scale each diffraction feed to unit spectral norm.
    PerLayer,
    /// Spread a single end-to-end scale evenly across the diffraction
    /// feeds, so their spectral-norm product is 1.
    EndToEnd,
}

/// Options for [`build_feeds_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedOptions {
    /// Scalar-carrier attenuation factor.
    pub tau: Complex64,
    pub normalization: FeedNormalization,
    /// Waveguide attenuation, nepers/m.
    pub alpha: f64,
    /// Waveguide phase constant, rad/m; `None` uses the default substrate.
    pub beta: Option<f64>,
}

impl Default for FeedOptions {
    fn default() -> Self {
        FeedOptions {
            tau: Complex64::new(1.0, 0.0),
            normalization: FeedNormalization::None,
            alpha: DEFAULT_WAVEGUIDE_ALPHA,
            beta: None,
        }
    }
}

/// Build every layer's feeding matrix from the declared topologies with
/// default waveguide parameters and no normalization. `tau` is the
/// scalar-carrier attenuation (1.0 when unspecified by the scenario).
pub fn build_feeds(spec: &ArchitectureSpec, tau: f64) -> Result<Vec<FeedingMatrix>> {
    build_feeds_with(
        spec,
        FeedOptions {
            tau: Complex64::new(tau, 0.0),
            ..FeedOptions::default()
        },
    )
}

/// [`build_feeds`] with explicit waveguide parameters and normalization.
pub fn build_feeds_with(spec: &ArchitectureSpec, opts: FeedOptions) -> Result<Vec<FeedingMatrix>> {
    let lambda = spec.wavelength();
    check_wavelength(lambda)?;
    let beta = opts.beta.unwrap_or_else(|| default_waveguide_beta(lambda));
    let mut feeds = Vec::with_capacity(spec.num_layers());
    for (l, topology) in spec.feeding.iter().enumerate() {
        let feed = match topology {
            FeedingTopology::ScalarCarrier => FeedingMatrix {
                layer_index: l,
                matrix: CMatrix::from_element(
                    spec.elements_per_layer[l],
                    if l == 0 {
                        spec.num_rf_chains
                    } else {
                        spec.elements_per_layer[l - 1]
                    },
                    opts.tau,
                ),
                topology: FeedingTopology::ScalarCarrier,
            },
            FeedingTopology::BlockDiagonalWaveguide => waveguide_feed(spec, opts.alpha, beta)?,
            FeedingTopology::DenseDiffraction => {
                let to = &spec.geometry.layers[l];
                let from = if l == 0 {
                    LayerGeometry {
                        positions: spec.geometry.feed_positions.clone(),
                        element_area: to.element_area,
                        waveguide_of: None,
                    }
                } else {
                    spec.geometry.layers[l - 1].clone()
                };
                sim_diffraction_matrix(&from, to, lambda, l)?
            }
        };
        feeds.push(feed);
    }
    match opts.normalization {
        FeedNormalization::None => {}
        FeedNormalization::PerLayer => {
            for feed in &mut feeds {
                if feed.topology == FeedingTopology::DenseDiffraction {
                    let norm = spectral_norm(&feed.matrix);
                    if norm > 0.0 {
                        feed.matrix /= Complex64::new(norm, 0.0);
                    }
                }
            }
        }
        FeedNormalization::EndToEnd => {
            let diffractive: Vec<usize> = feeds
                .iter()
                .enumerate()
                .filter(|(_, f)| f.topology == FeedingTopology::DenseDiffraction)
                .map(|(i, _)| i)
                .collect();
            if !diffractive.is_empty() {
                let log_product: f64 = diffractive
                    .iter()
                    .map(|i| spectral_norm(&feeds[*i].matrix).ln())
                    .sum();
                let per_layer = (-log_product / diffractive.len() as f64).exp();
                for i in diffractive {
                    feeds[i].matrix *= Complex64::new(per_layer, 0.0);
                }
            }
        }
    }
    Ok(feeds)
}

fn spectral_norm(m: &CMatrix) -> f64 {
    m.clone().svd(false, false).singular_values[0]
}

/// Draw user channel rows. LoS rows are conjugated near-field steering
/// vectors scaled by the free-space pathloss lambda/(4 pi d) to the array
/// centroid; Rician mixes that row with an i.i.d. scattered part at the
/// given K-factor; Rayleigh is pure unit-variance complex Gaussian.
/// Deterministic: a fixed seed draws entries user-major, element-minor,
/// real part before imaginary part.
pub fn generate_user_channels(
    ctx: &GeometryContext,
    users: &[[f64; 3]],
    model: ChannelModel,
    noise_power: f64,
    seed: u64,
) -> Result<ChannelSet> {
    if users.is_empty() {
        return Err(Error::InvalidParameter {
            detail: "at least one user position is required".into(),
        });
    }
    if !(noise_power > 0.0) {
        return Err(Error::InvalidParameter {
            detail: format!("noise power must be positive, got {noise_power}"),
        });
    }
    if let ChannelModel::Rician { k_factor } = model {
        if !(k_factor >= 0.0) || !k_factor.is_finite() {
            return Err(Error::InvalidParameter {
                detail: format!("Rician K-factor must be nonnegative and finite, got {k_factor}"),
            });
        }
    }
    let n = ctx.positions.len();
    let centroid = ctx.centroid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scatter = Normal::new(0.0, 0.5_f64.sqrt()).expect("valid normal");
    let draw = |rng: &mut ChaCha8Rng| {
        let re = scatter.sample(rng);
        let im = scatter.sample(rng);
        Complex64::new(re, im)
    };

    let mut h = CMatrix::zeros(users.len(), n);
    let mut all_beyond_rayleigh = true;
    for (u, user) in users.iter().enumerate() {
        let d_centroid = dist(user, &centroid);
        if d_centroid < 1e-9 {
            return Err(Error::InvalidParameter {
                detail: format!("user {u} coincides with the array centroid"),
            });
        }
        if d_centroid < ctx.rayleigh_distance {
            all_beyond_rayleigh = false;
        }
        match model {
            ChannelModel::Los | ChannelModel::Rician { .. } => {
                let steer = nearfield_steering(&ctx.positions, user, ctx.wavelength)?;
                let pathloss = ctx.wavelength / (4.0 * PI * d_centroid);
                let (los_w, scatter_w) = match model {
                    ChannelModel::Los => (1.0, 0.0),
                    ChannelModel::Rician { k_factor } => (
                        (k_factor / (k_factor + 1.0)).sqrt(),
                        (1.0 / (k_factor + 1.0)).sqrt(),
                    ),
                    ChannelModel::Rayleigh => unreachable!(),
                };
                for e in 0..n {
                    let los = steer[e].conj() * pathloss;
                    let scat = if scatter_w > 0.0 {
                        draw(&mut rng) * pathloss
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                    h[(u, e)] = los_w * los + scatter_w * scat;
                }
            }
            ChannelModel::Rayleigh => {
                for e in 0..n {
                    h[(u, e)] = draw(&mut rng);
                }
            }
        }
    }

    Ok(ChannelSet {
        h,
        target_steering: Vec::new(),
        noise_power,
        wavelength: ctx.wavelength,
        field_regime: if all_beyond_rayleigh {
            FieldRegime::FarField
        } else {
            FieldRegime::NearField
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    fn line_array(n: usize, pitch: f64) -> Vec<[f64; 3]> {
        (0..n).map(|i| [i as f64 * pitch, 0.0, 0.0]).collect()
    }

    #[test]
    fn broadside_steering_is_all_ones() {
        let lambda = 0.01;
        let positions = vec![
            [0.0, 0.0, 0.0],
            [0.005, 0.0, 0.0],
            [0.0, 0.005, 0.0],
            [0.005, 0.005, 0.0],
        ];
        let a = farfield_steering(&positions, 0.0, FRAC_PI_2, lambda).unwrap();
        for e in a.iter() {
            assert!((e - Complex64::new(1.0, 0.0)).norm() < TOL);
        }
    }

    #[test]
    fn endfire_two_element_half_wavelength() {
        let lambda = 0.02;
        let positions = line_array(2, lambda / 2.0);
        let a = farfield_steering(&positions, 0.0, 0.0, lambda).unwrap();
        assert!((a[0] - Complex64::new(1.0, 0.0)).norm() < TOL);
        assert!((a[1] - Complex64::from_polar(1.0, PI)).norm() < TOL);
    }

    /// Independent oracle: project each position onto the propagation
    /// direction with explicitly written trigonometry.
    #[test]
    fn thirty_degree_steering_matches_geometric_phases() {
        let lambda = 0.0107;
        let positions = line_array(8, lambda / 2.0);
        let theta = 30.0_f64.to_radians();
        let (az, el) = broadside_cut_direction(theta);
        let a = farfield_steering(&positions, az, el, lambda).unwrap();
        for (i, p) in positions.iter().enumerate() {
            // For a line array on x with the cut in the xz-plane, the path
            // advance of element i is x_i sin(theta).
            let phase = TAU * p[0] * theta.sin() / lambda;
            assert!(
                (a[i] - Complex64::from_polar(1.0, phase)).norm() < 1e-10,
                "element {i}"
            );
        }
    }

    #[test]
    fn farfield_entries_unit_modulus() {
        let lambda = 0.01;
        let positions = line_array(16, 0.003);
        let a = farfield_steering(&positions, 0.7, 0.3, lambda).unwrap();
        for e in a.iter() {
            assert!((e.norm() - 1.0).abs() <= 4.0 * f64::EPSILON);
        }
    }

    #[test]
    fn nearfield_single_element_is_one() {
        let a = nearfield_steering(&[[0.0, 0.0, 0.0]], &[0.0, 0.0, 1.0], 0.01).unwrap();
        assert_eq!(a[0], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn nearfield_approaches_farfield_past_rayleigh_distance() {
        let lambda = 0.01;
        let positions = line_array(16, lambda / 2.0);
        let ctx = GeometryContext::new(positions.clone(), lambda).unwrap();
        // Aperture center so both models share the same wavefront reference.
        let cx = ctx.centroid()[0];
        let broadside = farfield_steering(&positions, 0.0, FRAC_PI_2, lambda).unwrap();
        let mut last = f64::INFINITY;
        for mult in [1.0, 2.0, 5.0, 10.0] {
            let r = mult * ctx.rayleigh_distance;
            let near = nearfield_steering(&positions, &[cx, 0.0, r], lambda).unwrap();
            let worst = (0..positions.len())
                .map(|i| {
                    let mut d = (near[i] * broadside[i].conj()).arg()
                        - (near[0] * broadside[0].conj()).arg();
                    if d > PI {
                        d -= TAU;
                    }
                    if d < -PI {
                        d += TAU;
                    }
                    d.abs()
                })
                .fold(0.0, f64::max);
            assert!(
                worst < last,
                "phase error must shrink with distance: {worst} at {mult}x"
            );
            last = worst;
            if mult == 10.0 {
                assert!(worst < 0.05, "phase error {worst} at 10x Rayleigh distance");
            }
        }
    }

    /// Same bearing, different ranges: inside the Rayleigh distance the two
    /// steering vectors decorrelate, which is what lets an aperture separate
    /// users by depth.
    #[test]
    fn range_discrimination_inside_rayleigh_distance() {
        let lambda = 0.01;
        let positions = line_array(128, lambda / 4.0);
        let ctx = GeometryContext::new(positions.clone(), lambda).unwrap();
        let dir = [0.5_f64.sqrt() * 0.3, 0.0, (1.0_f64 - 0.5 * 0.09).sqrt()];
        let r1 = 0.05 * ctx.rayleigh_distance;
        let r2 = 0.15 * ctx.rayleigh_distance;
        let p1 = [dir[0] * r1, dir[1] * r1, dir[2] * r1];
        let p2 = [dir[0] * r2, dir[1] * r2, dir[2] * r2];
        let a1 = nearfield_steering(&positions, &p1, lambda).unwrap();
        let a2 = nearfield_steering(&positions, &p2, lambda).unwrap();
        let corr = (a1.adjoint() * &a2)[(0, 0)].norm() / positions.len() as f64;
        assert!(corr < 0.99, "correlation {corr} too high to separate ranges");
    }

    #[test]
    fn coincident_source_rejected() {
        let err = nearfield_steering(&[[0.0; 3]], &[0.0; 3], 0.01).unwrap_err();
        assert!(matches!(err, Error::CoincidentSource { element: 0, .. }));
    }

    #[test]
    fn diffraction_kernel_single_pair_closed_form() {
        let (d, area, lambda) = (0.005, 1e-6, 0.01);
        let layer_from = LayerGeometry {
            positions: vec![[0.0, 0.0, 0.0]],
            element_area: area,
            waveguide_of: None,
        };
        let layer_to = LayerGeometry {
            positions: vec![[0.0, 0.0, d]],
            element_area: area,
            waveguide_of: None,
        };
        let feed = sim_diffraction_matrix(&layer_from, &layer_to, lambda, 1).unwrap();
        let expected = (area / d)
            * Complex64::new(1.0 / (TAU * d), -1.0 / lambda)
            * Complex64::from_polar(1.0, TAU * d / lambda);
        assert!((feed.matrix[(0, 0)] - expected).norm() < 1e-15 * expected.norm());
    }

    #[test]
    fn diffraction_magnitude_decays_with_distance() {
        let (area, lambda) = (1e-6, 0.01);
        let mut last = f64::INFINITY;
        for k in 1..6 {
            let d = 0.002 * k as f64;
            let mag = diffraction_kernel(d, 1.0, area, lambda).norm();
            assert!(mag < last, "kernel must decay with distance");
            last = mag;
        }
    }

    #[test]
    fn diffraction_phase_shift_tracks_wavelength_change() {
        let (area, d) = (1e-6, 0.004);
        let (l1, l2) = (0.01, 0.02);
        let k1 = diffraction_kernel(d, 1.0, area, l1);
        let k2 = diffraction_kernel(d, 1.0, area, l2);
        // Removing the amplitude factor phases: e^{j 2 pi d / lambda} plus
        // the arg of (1/(2 pi d) - j/lambda).
        let field_arg1 = Complex64::new(1.0 / (TAU * d), -1.0 / l1).arg();
        let field_arg2 = Complex64::new(1.0 / (TAU * d), -1.0 / l2).arg();
        let mut expected = TAU * d * (1.0 / l1 - 1.0 / l2) + field_arg1 - field_arg2;
        let mut got = k1.arg() - k2.arg();
        while expected > PI {
            expected -= TAU;
        }
        while expected < -PI {
            expected += TAU;
        }
        while got > PI {
            got -= TAU;
        }
        while got < -PI {
            got += TAU;
        }
        assert!((expected - got).abs() < 1e-10);
    }

    #[test]
    fn diffraction_reciprocity_with_matched_areas() {
        let lambda = 0.01;
        let area = 2.5e-6;
        let from = LayerGeometry {
            positions: vec![[0.0, 0.0, 0.0], [0.003, 0.001, 0.0]],
            element_area: area,
            waveguide_of: None,
        };
        let to = LayerGeometry {
            positions: vec![[0.001, -0.002, 0.004], [0.0, 0.0, 0.004]],
            element_area: area,
            waveguide_of: None,
        };
        let forward = sim_diffraction_matrix(&from, &to, lambda, 1).unwrap();
        let backward = sim_diffraction_matrix(&to, &from, lambda, 0).unwrap();
        for n in 0..2 {
            for m in 0..2 {
                assert!(
                    (forward.matrix[(n, m)] - backward.matrix[(m, n)]).norm() < 1e-15,
                    "kernel must be symmetric in the two endpoints"
                );
            }
        }
    }

    #[test]
    fn coplanar_layers_rejected() {
        let layer = LayerGeometry {
            positions: vec![[0.0; 3]],
            element_area: 1e-6,
            waveguide_of: None,
        };
        let err = sim_diffraction_matrix(&layer, &layer, 0.01, 1).unwrap_err();
        assert!(matches!(err, Error::NonPositiveSpacing { .. }));
    }

    fn two_guide_spec() -> ArchitectureSpec {
        // 2 waveguides x 3 elements, 0.1 m pitch so arclengths are 0, 0.1, 0.2.
        let mut spec = ArchitectureSpec::dma(2, 3, 2, 0.5, 28e9);
        let mut positions = Vec::new();
        for row in 0..2 {
            for col in 0..3 {
                positions.push([col as f64 * 0.1, row as f64, 0.0]);
            }
        }
        spec.geometry.layers[0].positions = positions;
        spec
    }

    #[test]
    fn waveguide_entry_values_and_sparsity() {
        let spec = two_guide_spec();
        let feed = waveguide_feed(&spec, 10.0, 100.0).unwrap();
        // First element of each guide: zero path.
        assert_eq!(feed.matrix[(0, 0)], Complex64::new(1.0, 0.0));
        assert_eq!(feed.matrix[(3, 1)], Complex64::new(1.0, 0.0));
        // One pitch in: e^{-1} e^{-j10}.
        let expected = Complex64::from_polar((-1.0_f64).exp(), -10.0);
        assert!((feed.matrix[(1, 0)] - expected).norm() < TOL);
        assert!((feed.matrix[(1, 0)].norm() - 0.367_879_441_171_442_3).abs() < 1e-12);
        // Off-guide entries are exactly zero.
        for n in 0..6 {
            for k in 0..2 {
                let on_guide = (n < 3) == (k == 0);
                if !on_guide {
                    assert_eq!(feed.matrix[(n, k)], Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn waveguide_half_guided_wavelength_flips_sign() {
        let lambda_g = 0.2;
        let mut spec = ArchitectureSpec::dma(1, 2, 1, 0.5, 28e9);
        spec.geometry.layers[0].positions = vec![[0.0, 0.0, 0.0], [lambda_g / 2.0, 0.0, 0.0]];
        let feed = waveguide_feed(&spec, 0.0, TAU / lambda_g).unwrap();
        assert!((feed.matrix[(1, 0)] - Complex64::new(-1.0, 0.0)).norm() < TOL);
    }

    #[test]
    fn explicit_assignment_with_hole_is_rejected() {
        let mut spec = ArchitectureSpec::dma(2, 2, 1, 0.5, 28e9);
        spec.geometry.layers[0].waveguide_of = Some(vec![Some(0), None, Some(1), Some(1)]);
        let err = waveguide_feed(&spec, 0.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::UnassignedElement { element: 1 }));
    }

    #[test]
    fn interleaved_explicit_assignment_orders_arclength_by_index() {
        let mut spec = ArchitectureSpec::dma(2, 2, 1, 0.5, 28e9);
        spec.geometry.layers[0].positions = vec![
            [0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.1, 0.0, 0.0],
            [0.1, 1.0, 0.0],
        ];
        spec.geometry.layers[0].waveguide_of = Some(vec![Some(0), Some(1), Some(0), Some(1)]);
        let feed = waveguide_feed(&spec, 1.0, 0.0).unwrap();
        assert_eq!(feed.matrix[(0, 0)], Complex64::new(1.0, 0.0));
        assert_eq!(feed.matrix[(1, 1)], Complex64::new(1.0, 0.0));
        let decayed = (-0.1_f64).exp();
        assert!((feed.matrix[(2, 0)].re - decayed).abs() < TOL);
        assert!((feed.matrix[(3, 1)].re - decayed).abs() < TOL);
    }

    #[test]
    fn build_feeds_matches_declared_topologies() {
        let ris = ArchitectureSpec::ris(4, 0.5, 28e9);
        let feeds = build_feeds(&ris, 0.7).unwrap();
        assert_eq!(feeds.len(), 1);
        for e in feeds[0].matrix.iter() {
            assert_eq!(*e, Complex64::new(0.7, 0.0));
        }

        let sim = ArchitectureSpec::sim(2, 9, 2, 2, 0.5, 0.005, 28e9);
        let feeds = build_feeds(&sim, 1.0).unwrap();
        assert_eq!(feeds[0].matrix.shape(), (9, 2));
        assert_eq!(feeds[1].matrix.shape(), (9, 9));
        assert_eq!(feeds[1].topology, FeedingTopology::DenseDiffraction);

        let dma = ArchitectureSpec::dma(2, 4, 2, 0.5, 28e9);
        let feeds = build_feeds(&dma, 1.0).unwrap();
        assert_eq!(feeds[0].topology, FeedingTopology::BlockDiagonalWaveguide);
        assert_eq!(feeds[0].matrix.shape(), (8, 2));
    }

    #[test]
    fn per_layer_normalization_gives_unit_spectral_norm() {
        let sim = ArchitectureSpec::sim(3, 16, 2, 2, 0.5, 0.003, 28e9);
        let feeds = build_feeds_with(
            &sim,
            FeedOptions {
                normalization: FeedNormalization::PerLayer,
                ..FeedOptions::default()
            },
        )
        .unwrap();
        for feed in &feeds {
            assert!((spectral_norm(&feed.matrix) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn end_to_end_normalization_has_unit_norm_product() {
        let sim = ArchitectureSpec::sim(3, 16, 2, 2, 0.5, 0.003, 28e9);
        let feeds = build_feeds_with(
            &sim,
            FeedOptions {
                normalization: FeedNormalization::EndToEnd,
                ..FeedOptions::default()
            },
        )
        .unwrap();
        let log_product: f64 = feeds.iter().map(|f| spectral_norm(&f.matrix).ln()).sum();
        assert!(log_product.abs() < 1e-9);
    }

    #[test]
    fn rayleigh_distance_definition() {
        let lambda = 0.01;
        let positions = line_array(4, 0.005);
        let ctx = GeometryContext::new(positions, lambda).unwrap();
        assert_eq!(ctx.aperture, 0.015);
        assert_eq!(ctx.rayleigh_distance, 2.0 * 0.015 * 0.015 / lambda);
    }

    #[test]
    fn channels_deterministic_for_fixed_seed() {
        let lambda = 0.01;
        let ctx = GeometryContext::new(line_array(8, 0.005), lambda).unwrap();
        let users = [[0.5, 0.2, 1.0], [-0.3, 0.1, 2.0]];
        let a = generate_user_channels(&ctx, &users, ChannelModel::Rician { k_factor: 3.0 }, 0.1, 42)
            .unwrap();
        let b = generate_user_channels(&ctx, &users, ChannelModel::Rician { k_factor: 3.0 }, 0.1, 42)
            .unwrap();
        assert_eq!(a.h, b.h, "same seed must give bit-identical channels");
        let c = generate_user_channels(&ctx, &users, ChannelModel::Rician { k_factor: 3.0 }, 0.1, 43)
            .unwrap();
        assert_ne!(a.h, c.h, "different seed must change the draw");
    }

    #[test]
    fn los_rows_are_scaled_conjugate_steering() {
        let lambda = 0.01;
        let ctx = GeometryContext::new(line_array(8, 0.005), lambda).unwrap();
        let user = [0.4, -0.2, 3.0];
        let set = generate_user_channels(&ctx, &[user], ChannelModel::Los, 0.1, 1).unwrap();
        let steer = nearfield_steering(&ctx.positions, &user, lambda).unwrap();
        let pl = lambda / (4.0 * PI * dist(&user, &ctx.centroid()));
        for e in 0..8 {
            assert!((set.h[(0, e)] - steer[e].conj() * pl).norm() < 1e-15);
        }
    }

    #[test]
    fn rician_collapses_to_los_as_k_grows() {
        let lambda = 0.01;
        let ctx = GeometryContext::new(line_array(16, 0.005), lambda).unwrap();
        let users = [[0.4, 0.1, 2.0]];
        let los = generate_user_channels(&ctx, &users, ChannelModel::Los, 0.1, 5).unwrap();
        let mut last = f64::INFINITY;
        for k in [1e2, 1e4, 1e6] {
            let ric =
                generate_user_channels(&ctx, &users, ChannelModel::Rician { k_factor: k }, 0.1, 5)
                    .unwrap();
            let dev = (&ric.h - &los.h).norm() / los.h.norm();
            assert!(dev < last, "deviation must shrink with K");
            last = dev;
            if k == 1e6 {
                assert!(dev < 1e-3, "relative deviation {dev} at K=1e6");
            }
        }
    }

    #[test]
    fn rayleigh_second_moment_near_unity() {
        let lambda = 0.01;
        let ctx = GeometryContext::new(line_array(100, 0.005), lambda).unwrap();
        let users: Vec<[f64; 3]> = (0..100).map(|i| [0.1 * i as f64, 0.5, 2.0]).collect();
        let set = generate_user_channels(&ctx, &users, ChannelModel::Rayleigh, 0.1, 9).unwrap();
        let mean_power: f64 =
            set.h.iter().map(|z| z.norm_sqr()).sum::<f64>() / (set.h.len() as f64);
        assert!(
            (mean_power - 1.0).abs() < 0.05,
            "mean per-entry power {mean_power} outside 5% of 1"
        );
    }

    #[test]
    fn far_near_regime_tagging() {
        let lambda = 0.01;
        let ctx = GeometryContext::new(line_array(8, 0.005), lambda).unwrap();
        let far = [[0.0, 0.0, 10.0 * ctx.rayleigh_distance]];
        let near = [[0.0, 0.0, 0.5 * ctx.rayleigh_distance]];
        let f = generate_user_channels(&ctx, &far, ChannelModel::Los, 0.1, 1).unwrap();
        assert_eq!(f.field_regime, FieldRegime::FarField);
        let n = generate_user_channels(&ctx, &near, ChannelModel::Los, 0.1, 1).unwrap();
        assert_eq!(n.field_regime, FieldRegime::NearField);
    }
}
