//! Fixed-point CORDIC sine/cosine in rotation mode.

use std::f64::consts::{FRAC_PI_2, TAU};

/// Fractional bits of the internal fixed-point representation.
const FRAC_BITS: u32 = 32;
const ONE: f64 = (1u64 << FRAC_BITS) as f64;
/// Accuracy floor set by the fixed-point word, reached near 30 iterations.
pub const FIXED_POINT_FLOOR: f64 = 1e-8;
/// Iterations beyond this no longer change a 32-fractional-bit angle.
pub const MAX_ITERATIONS: u32 = 48;

fn to_fixed(x: f64) -> i64 {
    (x * ONE).round() as i64
}

fn from_fixed(x: i64) -> f64 {
    x as f64 / ONE
}

fn round_shift(x: i64, k: u32) -> i64 {
    if k == 0 {
        x
    } else if k >= 63 {
        0
    } else {
        (x + (1i64 << (k - 1))) >> k
    }
}

/// `(sin θ, cos θ)` with `iterations` micro-rotations.
///
/// The angle is reduced to a quadrant offset in `[−π/4, π/4]`, rotated in
/// fixed point starting from the pre-scaled vector `(1/K, 0)`, and swapped
/// back into its quadrant. `iterations` is clamped to `1..=48`.
pub fn cordic_sincos(angle: f64, iterations: u32) -> (f64, f64) {
    if !angle.is_finite() {
        return (f64::NAN, f64::NAN);
    }
    let n = iterations.clamp(1, MAX_ITERATIONS);
    let reduced = angle.rem_euclid(TAU);
    let quadrant = (reduced / FRAC_PI_2).round();
    let r = reduced - quadrant * FRAC_PI_2;

    let gain: f64 = (0..n).map(|i| (1.0 + 0.25f64.powi(i as i32)).sqrt()).product();
    let mut x = to_fixed(1.0 / gain);
    let mut y = 0i64;
    let mut z = to_fixed(r);
    for i in 0..n {
        let step = to_fixed(0.5f64.powi(i as i32).atan());
        let (dx, dy) = (round_shift(y, i), round_shift(x, i));
        if z >= 0 {
            x -= dx;
            y += dy;
            z -= step;
        } else {
            x += dx;
            y -= dy;
            z += step;
        }
    }
    let (s, c) = (from_fixed(y), from_fixed(x));
    match quadrant as i64 % 4 {
        0 => (s, c),
        1 => (c, -s),
        2 => (-s, -c),
        _ => (-c, s),
    }
}
