//! Gauss-Legendre quadrature for the analytic spectrum models.

use num_complex::Complex64;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1],
/// found by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        // Tricomi initial guess for the i-th positive root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(x) and P'_n(x) by upward recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Integrates a complex-valued function over [a, b] with an `order`-point
/// Gauss-Legendre rule.
pub fn integrate_complex(f: impl Fn(f64) -> Complex64, a: f64, b: f64, order: usize) -> Complex64 {
    let (nodes, weights) = gauss_legendre(order);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, w) in nodes.iter().zip(&weights) {
        acc += f(mid + half * x) * *w;
    }
    acc * half
}

/// Integrates a real function over [a, b] with an `order`-point rule.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, order: usize) -> f64 {
    integrate_complex(|x| Complex64::new(f(x), 0.0), a, b, order).re
}

/// Integrates across a list of breakpoints, applying the rule on each
/// smooth piece. `breaks` must be sorted and bracket the full interval.
pub fn integrate_complex_piecewise(
    f: impl Fn(f64) -> Complex64,
    breaks: &[f64],
    order_per_piece: usize,
) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            acc += integrate_complex(&f, w[0], w[1], order_per_piece);
        }
    }
    acc
}
