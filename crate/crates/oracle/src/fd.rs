//! Central finite differences: `df/dx_i ~ (f(x + h e_i) - f(x - h e_i)) / 2h`.

pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut grad = vec![0.0f64; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = f(&probe);
        probe[i] = x[i] - h;
        let minus = f(&probe);
        probe[i] = x[i];
        grad[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let grad = central_diff(f, &[1.0, -2.0, 0.5], 1e-4);
        for (g, expected) in grad.iter().zip([2.0, -4.0, 1.0]) {
            assert!((g - expected).abs() < 1e-6);
        }
    }
}
