//! Canonical hashing of specs, states, and matrices for provenance tracking.
//!
//! Every float is serialized as 8 little-endian bytes at full double
//! precision, so two runs agree on a hash iff they agree bit-for-bit on the
//! numbers. Dimensions and enum discriminants are folded in as well, which
//! keeps e.g. a 2x3 and a 3x2 matrix with the same entries distinct.

use crate::framework::{ArchitectureSpec, ConstraintFamily, ReconfigState};
use crate::CMatrix;
use sha2::{Digest, Sha256};

/// Incremental canonical hasher.
pub struct CanonicalHasher {
    inner: Sha256,
}

impl CanonicalHasher {
    pub fn new() -> Self {
        CanonicalHasher {
            inner: Sha256::new(),
        }
    }

    pub fn f64(&mut self, x: f64) -> &mut Self {
        self.inner.update(x.to_le_bytes());
        self
    }

    pub fn u64(&mut self, x: u64) -> &mut Self {
        self.inner.update(x.to_le_bytes());
        self
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.inner.update(b);
        self
    }

    /// Row-major walk over a complex matrix, re then im per entry.
    pub fn matrix(&mut self, m: &CMatrix) -> &mut Self {
        self.u64(m.nrows() as u64);
        self.u64(m.ncols() as u64);
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let z = m[(r, c)];
                self.f64(z.re).f64(z.im);
            }
        }
        self
    }

    pub fn finish_hex(self) -> String {
        let digest = self.inner.finalize();
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }
}

impl Default for CanonicalHasher {
    fn default() -> Self {
        Self::new()
    }
}

fn hash_family(h: &mut CanonicalHasher, family: &ConstraintFamily) {
    match family {
        ConstraintFamily::UnitModulus => {
            h.u64(0);
        }
        ConstraintFamily::AmplitudeRange { lo, hi } => {
            h.u64(1).f64(*lo).f64(*hi);
        }
        ConstraintFamily::AmplitudeSet { levels } => {
            h.u64(2).u64(levels.len() as u64);
            for v in levels {
                h.f64(*v);
            }
        }
        ConstraintFamily::Lorentzian => {
            h.u64(3);
        }
    }
}

/// Hash of an architecture description (all fields, geometry included).
pub fn hash_spec(spec: &ArchitectureSpec) -> String {
    let mut h = CanonicalHasher::new();
    h.u64(spec.kind as u64);
    h.u64(spec.elements_per_layer.len() as u64);
    for n in &spec.elements_per_layer {
        h.u64(*n as u64);
    }
    h.u64(spec.num_rf_chains as u64);
    h.u64(spec.num_streams as u64);
    for t in &spec.feeding {
        h.u64(*t as u64);
    }
    for fam in &spec.constraints {
        hash_family(&mut h, fam);
    }
    h.f64(spec.carrier_frequency);
    h.f64(spec.geometry.inter_layer_spacing);
    h.f64(spec.geometry.element_spacing_wl);
    h.u64(spec.geometry.feed_positions.len() as u64);
    for p in &spec.geometry.feed_positions {
        h.f64(p[0]).f64(p[1]).f64(p[2]);
    }
    for layer in &spec.geometry.layers {
        h.u64(layer.positions.len() as u64);
        for p in &layer.positions {
            h.f64(p[0]).f64(p[1]).f64(p[2]);
        }
        h.f64(layer.element_area);
        match &layer.waveguide_of {
            None => {
                h.u64(0);
            }
            Some(assign) => {
                h.u64(1).u64(assign.len() as u64);
                for a in assign {
                    match a {
                        None => h.u64(u64::MAX),
                        Some(k) => h.u64(*k as u64),
                    };
                }
            }
        }
    }
    h.finish_hex()
}

/// Hash of the stored reconfiguration coefficients.
pub fn hash_state(state: &ReconfigState) -> String {
    let mut h = CanonicalHasher::new();
    h.u64(state.layers.len() as u64);
    for layer in &state.layers {
        hash_family(&mut h, &layer.family);
        h.u64(layer.q.len() as u64);
        for q in &layer.q {
            h.f64(q.re).f64(q.im);
        }
    }
    h.finish_hex()
}

/// Hash of arbitrary bytes (used by the CLI for whole-config hashing).
pub fn hash_bytes(bytes: &[u8]) -> String {
    let mut h = CanonicalHasher::new();
    h.bytes(bytes);
    h.finish_hex()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn matrix_hash_distinguishes_shapes() {
        let a = CMatrix::from_element(2, 3, Complex64::new(1.0, 0.0));
        let b = CMatrix::from_element(3, 2, Complex64::new(1.0, 0.0));
        let mut ha = CanonicalHasher::new();
        ha.matrix(&a);
        let mut hb = CanonicalHasher::new();
        hb.matrix(&b);
        assert_ne!(ha.finish_hex(), hb.finish_hex());
    }

    #[test]
    fn hash_is_stable_across_calls() {
        let a = CMatrix::from_fn(3, 3, |r, c| Complex64::new(r as f64, c as f64));
        let mut h1 = CanonicalHasher::new();
        h1.matrix(&a);
        let mut h2 = CanonicalHasher::new();
        h2.matrix(&a);
        assert_eq!(h1.finish_hex(), h2.finish_hex());
    }
}
