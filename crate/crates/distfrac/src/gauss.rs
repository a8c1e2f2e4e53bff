//! Gauss–Legendre rules, used by the contour quadrature and the
//! weight-density integrals.

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`,
/// by Newton iteration on the Legendre recurrence.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_n(x) and its derivative
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
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// ∫_a^b f(x) dx by a single `n`-point Gauss–Legendre panel.
pub(crate) fn integrate_panel<F, T>(a: f64, b: f64, n: usize, mut f: F) -> T
where
    F: FnMut(f64) -> T,
    T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
{
    let (nodes, weights) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = T::default();
    for (x, w) in nodes.iter().zip(&weights) {
        acc = acc + f(mid + half * x) * (w * half);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_order_rules_are_exact_on_polynomials() {
        // 5-point rule integrates degree <= 9 exactly
        let val: f64 = integrate_panel(0.0, 1.0, 5, |x: f64| x.powi(9));
        assert!((val - 0.1).abs() < 1e-14);
        let val: f64 = integrate_panel(-1.0, 2.0, 8, |x: f64| 3.0 * x * x);
        assert!((val - 9.0).abs() < 1e-12);
    }

    #[test]
    fn node_symmetry() {
        let (nodes, weights) = gauss_legendre(16);
        for i in 0..16 {
            assert!((nodes[i] + nodes[15 - i]).abs() < 1e-15);
            assert!((weights[i] - weights[15 - i]).abs() < 1e-15);
        }
        let total: f64 = weights.iter().sum();
        assert!((total - 2.0).abs() < 1e-13);
    }
}
