//! Cross-module invariants checked on seeded random instances.
//!
//! Unit tests inside each module pin individual formulas; these tests pin
//! the contracts that hold *between* modules: the composed chain behaves
//! like the matrix product it claims to be, contractive physics never
//! amplifies, every seeded path replays bit-for-bit, the pilot stack sees
//! exactly the transposed chain, and a static "modulation" collapses to
//! the static pattern.

use metasim_core::channel::{
    build_feeds, farfield_steering, generate_user_channels, ChannelModel, GeometryContext,
};
use metasim_core::estimate::observation_matrix;
use metasim_core::framework::{
    layer_product, ArchKind, ArchitectureSpec, ArrayGeometry, BasebandProcessor, ConstraintFamily,
    FeedingMatrix, FeedingTopology, LayerGeometry, ReconfigState,
};
use metasim_core::metrics::beam_pattern;
use metasim_core::optimize::waterfill::{water_fill, zf_precoder};
use metasim_core::optimize::{gradient_ascent, ObjectiveKind, OptimizerConfig};
use metasim_core::waveform::{harmonic_beam_pattern, harmonic_coefficients, TimeModulationPattern};
use metasim_core::{CMatrix, CVector, SPEED_OF_LIGHT};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const COMPOSE_TOL: f64 = 1e-10;
const EXACT_TOL: f64 = 1e-12;

fn randn_c(rng: &mut ChaCha8Rng) -> Complex64 {
    // Box-Muller, unit total variance.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (-u1.ln()).sqrt();
    Complex64::new(r * u2.cos(), r * u2.sin())
}

/// A structurally valid multi-layer stack with the given per-layer sizes,
/// used as a chassis for random-matrix chains.
fn custom_stack(sizes: &[usize], rf_chains: usize) -> ArchitectureSpec {
    let carrier = 28e9;
    let lambda = SPEED_OF_LIGHT / carrier;
    let pitch = 0.5 * lambda;
    let line = |n: usize, z: f64| -> Vec<[f64; 3]> {
        (0..n).map(|i| [i as f64 * pitch, 0.0, z]).collect()
    };
    ArchitectureSpec {
        kind: ArchKind::Custom,
        elements_per_layer: sizes.to_vec(),
        num_rf_chains: rf_chains,
        num_streams: 1,
        feeding: vec![FeedingTopology::DenseDiffraction; sizes.len()],
        constraints: vec![ConstraintFamily::UnitModulus; sizes.len()],
        geometry: ArrayGeometry {
            layers: sizes
                .iter()
                .enumerate()
                .map(|(l, &n)| LayerGeometry {
                    positions: line(n, (l + 1) as f64 * 0.01),
                    element_area: pitch * pitch,
                    waveguide_of: None,
                })
                .collect(),
            feed_positions: line(rf_chains, 0.0),
            inter_layer_spacing: 0.01,
            element_spacing_wl: 0.5,
        },
        carrier_frequency: carrier,
    }
}

fn random_feeds(spec: &ArchitectureSpec, rng: &mut ChaCha8Rng) -> Vec<FeedingMatrix> {
    (0..spec.num_layers())
        .map(|l| {
            let rows = spec.elements_per_layer[l];
            let cols = if l == 0 {
                spec.num_rf_chains
            } else {
                spec.elements_per_layer[l - 1]
            };
            FeedingMatrix {
                layer_index: l,
                matrix: CMatrix::from_fn(rows, cols, |_, _| randn_c(rng)),
                topology: FeedingTopology::DenseDiffraction,
            }
        })
        .collect()
}

/// diag(q_l) T_l as an explicit matrix.
fn layer_matrix(feed: &FeedingMatrix, state: &ReconfigState, l: usize) -> CMatrix {
    let mut m = feed.matrix.clone();
    for (r, q) in state.layers[l].q.iter().enumerate() {
        for c in 0..m.ncols() {
            m[(r, c)] *= q;
        }
    }
    m
}

#[test]
fn chain_composition_matches_both_association_orders() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let depth = rng.gen_range(1..=4);
        let sizes: Vec<usize> = (0..depth).map(|_| rng.gen_range(2..=64)).collect();
        let rf = rng.gen_range(1..=4);
        let spec = custom_stack(&sizes, rf);
        let feeds = random_feeds(&spec, &mut rng);
        let state = ReconfigState::uniform_random(&spec, &mut rng);
        let chain = layer_product(&spec, &feeds, &state).expect("chain");

        let mats: Vec<CMatrix> = (0..depth).map(|l| layer_matrix(&feeds[l], &state, l)).collect();
        // Left grouping: ((M_L M_{L-1}) ... ) M_1.
        let mut left = mats.last().expect("nonempty").clone();
        for m in mats.iter().rev().skip(1) {
            left = left * m;
        }
        // Right grouping: M_L ( ... (M_2 M_1)).
        let mut right = mats[0].clone();
        for m in &mats[1..] {
            right = m * right;
        }
        let scale = chain.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
        let dl = (&chain - &left).iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
        let dr = (&chain - &right).iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
        assert!(
            dl <= COMPOSE_TOL * scale && dr <= COMPOSE_TOL * scale,
            "seed {seed}: composed chain strays from its explicit product \
             (left {dl:.2e}, right {dr:.2e}, scale {scale:.2e})"
        );
    }
}

#[test]
fn contractive_chains_never_amplify() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let depth = rng.gen_range(1..=4);
        let sizes: Vec<usize> = (0..depth).map(|_| rng.gen_range(2..=32)).collect();
        let spec = custom_stack(&sizes, 2);
        let mut feeds = random_feeds(&spec, &mut rng);
        for feed in &mut feeds {
            let top = feed.matrix.clone().svd(false, false).singular_values[0];
            feed.matrix /= Complex64::new(top, 0.0);
        }
        let state = ReconfigState::uniform_random(&spec, &mut rng);
        let chain = layer_product(&spec, &feeds, &state).expect("chain");
        let gain = chain.svd(false, false).singular_values[0];
        assert!(
            gain <= 1.0 + 1e-10,
            "seed {seed}: unit-norm feeds with phase-only layers amplified to {gain}"
        );
    }
}

#[test]
fn scalar_carrier_aperture_is_elementwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let spec = ArchitectureSpec::ris(24, 0.5, 28e9);
    let feeds = build_feeds(&spec, 0.8).expect("carrier feed");
    let state = ReconfigState::uniform_random(&spec, &mut rng);
    let chain = layer_product(&spec, &feeds, &state).expect("chain");
    assert_eq!(chain.ncols(), 1, "single-feed surface must map one chain");
    for n in 0..24 {
        let direct = state.layers[0].q[n] * feeds[0].matrix[(n, 0)];
        assert!(
            (chain[(n, 0)] - direct).norm() <= EXACT_TOL,
            "element {n} differs from q*t: {} vs {direct}",
            chain[(n, 0)]
        );
    }
}

#[test]
fn seeded_pipelines_replay_bit_for_bit() {
    let spec = ArchitectureSpec::sim(2, 9, 2, 2, 0.5, 0.01, 28e9);
    let geom = GeometryContext::from_spec(&spec).expect("geometry");
    let users = [[1.0, 0.5, 6.0], [-1.0, 0.25, 5.0]];
    let model = ChannelModel::Rician { k_factor: 4.0 };
    let a = generate_user_channels(&geom, &users, model, 1e-8, 7).expect("channels");
    let b = generate_user_channels(&geom, &users, model, 1e-8, 7).expect("channels");
    assert_eq!(a.h, b.h, "same seed must reproduce the channel matrix exactly");
    let c = generate_user_channels(&geom, &users, model, 1e-8, 8).expect("channels");
    assert_ne!(a.h, c.h, "different seeds must not collide");

    let feeds = build_feeds(&spec, 1.0).expect("feeds");
    let baseband = BasebandProcessor::equal_power_diag(2, 2, 1.0);
    let mut cfg = OptimizerConfig::new(ObjectiveKind::SumRate);
    cfg.max_iters = 40;
    cfg.num_starts = 2;
    cfg.seed = 7;
    let state0 = ReconfigState::zero_phase(&spec);
    let t1 = gradient_ascent(&spec, &baseband, &feeds, &state0, &a, &cfg).expect("ascent");
    let t2 = gradient_ascent(&spec, &baseband, &feeds, &state0, &a, &cfg).expect("ascent");
    assert_eq!(
        t1.final_objective().to_bits(),
        t2.final_objective().to_bits(),
        "seeded optimization must be bit-stable"
    );
    for (l1, l2) in t1.final_state.layers.iter().zip(&t2.final_state.layers) {
        assert_eq!(l1.q, l2.q, "optimized coefficients must replay exactly");
    }
}

#[test]
fn pilot_observations_transpose_the_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let spec = custom_stack(&[12, 18], 3);
    let feeds = random_feeds(&spec, &mut rng);
    let state = ReconfigState::uniform_random(&spec, &mut rng);
    let chain = layer_product(&spec, &feeds, &state).expect("chain");
    let phi = observation_matrix(&spec, &feeds, &state).expect("observation");
    assert_eq!(phi.nrows(), spec.num_rf_chains);
    assert_eq!(phi.ncols(), spec.radiating_elements());
    for r in 0..phi.nrows() {
        for c in 0..phi.ncols() {
            assert_eq!(
                phi[(r, c)],
                chain[(c, r)],
                "pilot stack entry ({r},{c}) is not the transposed chain"
            );
        }
    }
}

#[test]
fn constant_modulation_collapses_to_the_static_pattern() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let spec = ArchitectureSpec::sim(2, 16, 2, 2, 0.5, 0.01, 28e9);
    let feeds = build_feeds(&spec, 1.0).expect("feeds");
    let baseband = BasebandProcessor::equal_power_diag(2, 2, 1.0);
    let state = ReconfigState::uniform_random(&spec, &mut rng);
    let steering = farfield_steering(
        spec.radiating_positions(),
        0.3,
        1.1,
        spec.wavelength(),
    )
    .expect("steering");

    // Every slot repeats the static top layer; period 4 keeps the DFT
    // twiddles exact so the higher bins are exactly empty.
    let top = &state.layers[1].q;
    let pattern = TimeModulationPattern {
        layer: 1,
        slots: top.iter().map(|q| vec![*q; 4]).collect(),
        period: 1e-6,
    };
    let decomp = harmonic_coefficients(&pattern);
    let static_chain = layer_product(&spec, &feeds, &state).expect("chain") * &baseband.v;
    let static_power = beam_pattern(&static_chain, &steering).expect("static pattern");
    let dc_power =
        harmonic_beam_pattern(&spec, &feeds, &baseband, &state, &decomp, 0, &steering)
            .expect("carrier bin");
    assert!(
        (dc_power - static_power).abs() <= 1e-9 * static_power.max(1.0),
        "carrier bin {dc_power} strays from the static pattern {static_power}"
    );
    for k in 1..4 {
        let off = harmonic_beam_pattern(&spec, &feeds, &baseband, &state, &decomp, k, &steering)
            .expect("harmonic bin");
        // The bins vanish up to DFT rounding residue, so the leaked power
        // is quadratically small against the carrier.
        assert!(
            off <= 1e-20 * static_power.max(1e-30),
            "a constant sequence radiated {off:.3e} into bin {k} (carrier {static_power:.3e})"
        );
    }
}

#[test]
fn water_filling_spends_the_budget_greedily() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..50 {
        let n = rng.gen_range(1..=8);
        let gains: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
        let budget = rng.gen_range(0.1..5.0);
        let alloc = water_fill(&gains, budget);
        let spent: f64 = alloc.iter().sum();
        if gains.iter().any(|g| *g > 0.0) {
            assert!(
                (spent - budget).abs() <= 1e-9 * budget,
                "allocation spends {spent} of budget {budget}"
            );
        } else {
            assert_eq!(spent, 0.0, "no positive gain, nothing to allocate");
        }
        for (i, a) in alloc.iter().enumerate() {
            assert!(*a >= 0.0, "negative power {a} on channel {i}");
            for (j, b) in alloc.iter().enumerate() {
                if gains[i] > gains[j] {
                    assert!(
                        a + 1e-9 >= *b,
                        "stronger channel {i} ({}) got less than weaker {j} ({})",
                        a,
                        b
                    );
                }
            }
        }
    }
}

#[test]
fn zero_forcing_cancels_cross_talk() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    for _ in 0..20 {
        let k = rng.gen_range(2..=4);
        let h = CMatrix::from_fn(k, k, |_, _| randn_c(&mut rng));
        let baseband = match zf_precoder(&h, 0.0, 1.0, 1e-6) {
            Ok(b) => b,
            // A nearly singular draw is legitimately refused.
            Err(_) => continue,
        };
        let product = &h * &baseband.v;
        let scale = product.iter().map(|z| z.norm()).fold(1e-12_f64, f64::max);
        for r in 0..k {
            for c in 0..k {
                if r != c {
                    assert!(
                        product[(r, c)].norm() <= 1e-9 * scale,
                        "residual cross-talk {} at ({r},{c})",
                        product[(r, c)].norm()
                    );
                }
            }
        }
        assert!(
            baseband.used_power() <= 1.0 + 1e-9,
            "precoder exceeded its power budget: {}",
            baseband.used_power()
        );
    }
}

#[test]
fn steering_vectors_have_unit_modulus_entries() {
    let spec = ArchitectureSpec::ris(64, 0.5, 28e9);
    let positions = spec.radiating_positions();
    let a = farfield_steering(positions, 0.7, 0.9, spec.wavelength()).expect("steering");
    for (n, z) in a.iter().enumerate() {
        assert!(
            (z.norm() - 1.0).abs() <= 1e-12,
            "entry {n} has modulus {}",
            z.norm()
        );
    }
    assert_eq!(a.len(), 64);
    let energy: f64 = a.norm_squared();
    assert!((energy - 64.0).abs() <= 1e-9, "steering energy {energy} is not N");
}

#[test]
fn pilot_noise_is_per_slot_substreamed() {
    use metasim_core::estimate::{run_protocol, PilotProtocol};
    // Two protocols sharing a seed but differing in slot count agree on
    // their common prefix: slot noise comes from per-slot substreams, not
    // one global stream, so earlier slots cannot shift when later ones
    // are added.
    let spec = custom_stack(&[10], 2);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let feeds = random_feeds(&spec, &mut rng);
    let truth = CVector::from_fn(10, |_, _| randn_c(&mut rng));
    let states_body: Vec<ReconfigState> = (0..6)
        .map(|_| ReconfigState::uniform_random(&spec, &mut rng))
        .collect();
    let short = PilotProtocol::new(states_body[..4].to_vec(), 1e-4, 5);
    let long = PilotProtocol::new(states_body.clone(), 1e-4, 5);
    let sys_short = run_protocol(&spec, &feeds, &short, &truth).expect("short protocol");
    let sys_long = run_protocol(&spec, &feeds, &long, &truth).expect("long protocol");
    for i in 0..sys_short.y.len() {
        assert_eq!(
            sys_short.y[i], sys_long.y[i],
            "sample {i} changed when the schedule was extended"
        );
    }
}
