//! Floating-point helpers shared by the simulation modules.

/// Correctly rounded sum of a slice (Shewchuk's partials, with the
/// half-way correction used by Python's `math.fsum`).
///
/// Two slices holding the same multiset of values always produce the same
/// result, independent of order, which makes the capitalization total a
/// stable quantity across the renamings performed at events.
pub fn fsum(values: &[f64]) -> f64 {
    let mut partials = [0.0f64; 64];
    let mut len = 0usize;
    for &v in values {
        let mut x = v;
        let mut kept = 0usize;
        for idx in 0..len {
            let mut y = partials[idx];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials[kept] = x;
        len = kept + 1;
    }
    if len == 0 {
        return 0.0;
    }
    let mut n = len - 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

/// Distance from `x` to the next representable value away from zero.
pub fn ulp(x: f64) -> f64 {
    let a = x.abs();
    if !a.is_finite() {
        return f64::NAN;
    }
    f64::from_bits(a.to_bits() + 1) - a
}

/// `log(cosh(x))` without overflow for large |x|.
pub fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Natural log of `n!`.
pub fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}
