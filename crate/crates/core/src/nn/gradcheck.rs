//! Central finite differences for checking analytic gradients.

use super::Parameters;

/// Magnitudes below this are compared absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, RELATIVE_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_FLOOR)
}

pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| relative_error(x, y))
        .fold(0.0, f64::max)
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Flattened parameter values in visiting order.
pub fn flat_params<M: Parameters + ?Sized>(m: &M) -> Vec<f64> {
    let mut out = Vec::new();
    m.visit(&mut |p, _| out.extend_from_slice(p));
    out
}

/// Flattened accumulated gradients in visiting order.
pub fn flat_grads<M: Parameters + ?Sized>(m: &M) -> Vec<f64> {
    let mut out = Vec::new();
    m.visit(&mut |_, g| out.extend_from_slice(g));
    out
}

pub fn set_flat_params<M: Parameters + ?Sized>(m: &mut M, values: &[f64]) {
    let mut k = 0;
    m.visit_mut(&mut |p, _| {
        p.copy_from_slice(&values[k..k + p.len()]);
        k += p.len();
    });
}

/// Numerical gradient of `loss` with respect to every parameter of `model`.
pub fn numeric_param_grads<M, F>(model: &M, loss: F, h: f64) -> Vec<f64>
where
    M: Parameters + Clone,
    F: Fn(&M) -> f64,
{
    let mut probe = model.clone();
    central_difference(
        |theta| {
            set_flat_params(&mut probe, theta);
            loss(&probe)
        },
        &flat_params(model),
        h,
    )
}

/// Max relative error between the gradients accumulated in `analytic` and
/// central differences of `loss` around its parameters.
pub fn check_parameters<M, F>(analytic: &M, loss: F, h: f64) -> f64
where
    M: Parameters + Clone,
    F: Fn(&M) -> f64,
{
    let numeric = numeric_param_grads(analytic, loss, h);
    max_relative_error(&flat_grads(analytic), &numeric)
}
