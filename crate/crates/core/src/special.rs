//! Exponentially scaled modified Bessel functions and Gauss–Legendre rules.

const SERIES_LIMIT: f64 = 20.0;

/// `e^{-x} I0(x)` for `x ≥ 0`.
pub fn i0e(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x <= SERIES_LIMIT {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            term *= q / (k * k);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        asymptotic(0.0, x)
    }
}

/// `e^{-x} I1(x)` for `x ≥ 0`.
pub fn i1e(x: f64) -> f64 {
    if x <= SERIES_LIMIT {
        x * i1e_over_x(x)
    } else {
        asymptotic(1.0, x)
    }
}

/// `e^{-x} I1(x) / x`, finite at `x = 0` (limit `1/2`).
pub fn i1e_over_x(x: f64) -> f64 {
    if x <= SERIES_LIMIT {
        let q = 0.25 * x * x;
        let mut term = 0.5;
        let mut sum = 0.5;
        let mut k = 1.0;
        loop {
            term *= q / (k * (k + 1.0));
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        asymptotic(1.0, x) / x
    }
}

/// Large-argument expansion of `e^{-x} I_ν(x)`, truncated at its smallest term.
fn asymptotic(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut k = 1.0f64;
    loop {
        let next = -term * (mu - (2.0 * k - 1.0).powi(2)) / (k * 8.0 * x);
        if next.abs() >= term.abs() || next.abs() < 1e-17 * sum.abs() {
            if next.abs() < term.abs() {
                sum += next;
            }
            break;
        }
        term = next;
        sum += term;
        k += 1.0;
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Trapezoid rule on the periodic integrand: an independent route to
    /// `e^{-x} I_n(x) = (1/π) ∫_0^π e^{x (cos θ - 1)} cos(nθ) dθ`.
    fn bessel_oracle(n: f64, x: f64) -> f64 {
        let m = 4000;
        let h = std::f64::consts::PI / m as f64;
        let mut s = 0.0;
        for j in 0..=m {
            let t = j as f64 * h;
            let w = if j == 0 || j == m { 0.5 } else { 1.0 };
            s += w * (x * (t.cos() - 1.0)).exp() * (n * t).cos();
        }
        s * h / std::f64::consts::PI
    }

    #[test]
    fn scaled_bessel_matches_integral_representation() {
        for &x in &[0.0, 1e-3, 0.5, 3.0, 12.0, 19.9, 20.1, 45.0, 300.0] {
            let (a0, a1) = (i0e(x), i1e(x));
            let (b0, b1) = (bessel_oracle(0.0, x), bessel_oracle(1.0, x));
            assert!((a0 - b0).abs() <= 1e-13 * b0.max(1e-300), "i0e({x}) {a0} vs {b0}");
            assert!((a1 - b1).abs() <= 1e-13 * b1.abs() + 1e-15, "i1e({x}) {a1} vs {b1}");
        }
        assert!((i1e_over_x(0.0) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(16);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let m: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((m - 2.0 / 31.0).abs() < 1e-14);
    }
}
