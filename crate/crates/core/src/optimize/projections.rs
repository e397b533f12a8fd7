//! Exact projections onto the element constraint families.
//!
//! Each projection returns the nearest feasible value under the family's
//! documented convention and is exactly idempotent: reapplying a projection
//! to its own output returns the output bit-for-bit. A value already within
//! a few ulp of the feasible set is returned unchanged, which is what makes
//! the closed forms (which reround trig terms) idempotent in exact
//! arithmetic terms.

use crate::framework::ConstraintFamily;
use num_complex::Complex64;

/// Width of the "already feasible" band, absolute. Projected outputs land
/// well inside it; it is still far below the 1e-12 family tolerance.
const FEASIBLE_ULP_BAND: f64 = 8.0 * f64::EPSILON;

/// Nearest unit-modulus value: w/|w|, with 1 for the origin (tie-break).
pub fn project_unit_modulus(w: Complex64) -> Complex64 {
    let r = w.norm();
    if r == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    if (r - 1.0).abs() <= FEASIBLE_ULP_BAND {
        return w;
    }
    w / r
}

/// Nearest point on the circle {j/2 + (1/2)e^{j psi}}. The center maps to
/// psi = 0, i.e. (1+j)/2 (tie-break).
pub fn project_lorentzian(w: Complex64) -> Complex64 {
    let center = Complex64::new(0.0, 0.5);
    let offset = w - center;
    let r = offset.norm();
    if r == 0.0 {
        return Complex64::new(0.5, 0.5);
    }
    if (r - 0.5).abs() <= 0.5 * FEASIBLE_ULP_BAND {
        return w;
    }
    center + offset * (0.5 / r)
}

/// Level from `levels` nearest to `x`; equidistant candidates resolve to
/// the smaller level. `levels` must be nonempty.
pub fn nearest_level(x: f64, levels: &[f64]) -> f64 {
    debug_assert!(!levels.is_empty(), "amplitude level set must be nonempty");
    let mut best = levels[0];
    let mut best_d = (x - best).abs();
    for &lvl in &levels[1..] {
        let d = (x - lvl).abs();
        if d < best_d || (d == best_d && lvl < best) {
            best = lvl;
            best_d = d;
        }
    }
    best
}

/// Amplitude projection under the magnitude convention: the modulus |w| is
/// projected and the phase discarded. Ranges clamp; sets snap to the
/// nearest level with ties to the smaller level.
///
/// # Panics
/// Panics if `family` is not an amplitude family; phase-coupled families
/// have their own projections above.
pub fn project_amplitude(w: Complex64, family: &ConstraintFamily) -> f64 {
    let magnitude = w.norm();
    match family {
        ConstraintFamily::AmplitudeRange { lo, hi } => magnitude.clamp(*lo, *hi),
        ConstraintFamily::AmplitudeSet { levels } => nearest_level(magnitude, levels),
        other => panic!("project_amplitude requires an amplitude family, got {other:?}"),
    }
}
