//! Log-sum-exp smooth maximum and minimum.
//!
//! All routines shift by the extreme argument before exponentiating, so
//! `c * x` may reach magnitudes of 1e6 and beyond without overflow.

/// `(1/c) * ln(sum(exp(c * x_i)))`. Identity on singletons.
pub fn smooth_max(values: &[f64], c: f64) -> f64 {
    debug_assert!(!values.is_empty());
    if values.len() == 1 {
        return values[0];
    }
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = values.iter().map(|&x| (c * (x - m)).exp()).sum();
    m + s.ln() / c
}

/// `-(1/c) * ln(sum(exp(-c * x_i)))`. Identity on singletons.
pub fn smooth_min(values: &[f64], c: f64) -> f64 {
    debug_assert!(!values.is_empty());
    if values.len() == 1 {
        return values[0];
    }
    let m = values.iter().copied().fold(f64::INFINITY, f64::min);
    let s: f64 = values.iter().map(|&x| (-c * (x - m)).exp()).sum();
    m - s.ln() / c
}

/// Partial derivatives of [`smooth_max`] (the softmax of `c * x`), written into `out`.
pub fn smooth_max_weights(values: &[f64], c: f64, out: &mut [f64]) {
    weights(values, c, out)
}

/// Partial derivatives of [`smooth_min`] (the softmax of `-c * x`), written into `out`.
pub fn smooth_min_weights(values: &[f64], c: f64, out: &mut [f64]) {
    weights(values, -c, out)
}

fn weights(values: &[f64], c: f64, out: &mut [f64]) {
    debug_assert_eq!(values.len(), out.len());
    let m = values
        .iter()
        .map(|&x| c * x)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (w, &x) in out.iter_mut().zip(values) {
        *w = (c * x - m).exp();
        s += *w;
    }
    for w in out.iter_mut() {
        *w /= s;
    }
}

/// Exact maximum, first index on ties.
pub fn max(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Exact minimum.
pub fn min(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::INFINITY, f64::min)
}
