//! Gauss–Legendre rules, Legendre polynomials and adaptive integration.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
pub fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let d = if (x * x - 1.0).abs() < 1e-300 {
        // Endpoint limit P_n'(±1) = (±1)^{n+1} n(n+1)/2.
        x.powi(n as i32 + 1) * n * (n + 1.0) / 2.0
    } else {
        n * (x * p1 - p0) / (x * x - 1.0)
    };
    (p1, d)
}

/// Legendre polynomial P_n(x).
pub fn legendre(n: usize, x: f64) -> f64 {
    legendre_with_derivative(n, x).0
}

/// Antiderivative of P_n vanishing at x = −1.
pub fn legendre_antiderivative(n: usize, x: f64) -> f64 {
    if n == 0 {
        x + 1.0
    } else {
        (legendre(n + 1, x) - legendre(n - 1, x)) / (2.0 * n as f64 + 1.0)
    }
}

/// Monomial coefficients of P_n, lowest degree first.
pub fn legendre_coefficients(n: usize) -> Vec<f64> {
    let mut p0 = vec![1.0];
    if n == 0 {
        return p0;
    }
    let mut p1 = vec![0.0, 1.0];
    for k in 2..=n {
        let kf = k as f64;
        let mut p2 = vec![0.0; k + 1];
        for (j, &c) in p1.iter().enumerate() {
            p2[j + 1] += (2.0 * kf - 1.0) * c / kf;
        }
        for (j, &c) in p0.iter().enumerate() {
            p2[j] -= (kf - 1.0) * c / kf;
        }
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn integrate_fixed<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let (c, h) = ((a + b) / 2.0, (b - a) / 2.0);
    rule.0
        .iter()
        .zip(&rule.1)
        .map(|(&x, &w)| w * f(c + h * x))
        .sum::<f64>()
        * h
}

/// Adaptive Gauss–Legendre integration to relative tolerance `tol`.
/// Infinite endpoints are handled by the map x = s / (1 − s²).
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let rule = gauss_legendre(15);
    if a.is_infinite() || b.is_infinite() {
        let sa = if a.is_infinite() { -1.0 } else { inverse_map(a) };
        let sb = if b.is_infinite() { 1.0 } else { inverse_map(b) };
        let g = |s: f64| {
            let d = 1.0 - s * s;
            if d <= 0.0 {
                return 0.0;
            }
            let x = s / d;
            let v = f(x) * (1.0 + s * s) / (d * d);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        };
        return adapt(&g, sa, sb, tol, &rule);
    }
    adapt(&f, a, b, tol, &rule)
}

fn inverse_map(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        (-1.0 + (1.0 + 4.0 * x * x).sqrt()) / (2.0 * x)
    }
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let whole = integrate_fixed(f, a, b, rule);
    let mut stack = vec![(a, b, whole, 0u32)];
    let mut total = 0.0;
    let mut comp = 0.0;
    // A coarse global scale keeps tiny subintervals from chasing roundoff.
    let scale = {
        let r = gauss_legendre(31);
        integrate_fixed(|x| f(x).abs(), a, b, &r).max(1e-300)
    };
    while let Some((lo, hi, est, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = integrate_fixed(f, lo, mid, rule);
        let right = integrate_fixed(f, mid, hi, rule);
        let refined = left + right;
        if (refined - est).abs() <= tol * scale * ((hi - lo) / (b - a)).max(1e-3) || depth > 48 {
            // Neumaier accumulation.
            let t = total + refined;
            if total.abs() >= refined.abs() {
                comp += (total - t) + refined;
            } else {
                comp += (refined - t) + total;
            }
            total = t;
        } else {
            stack.push((lo, mid, left, depth + 1));
            stack.push((mid, hi, right, depth + 1));
        }
    }
    total + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let rule = gauss_legendre(6);
        for p in 0..12 {
            let got = integrate_fixed(|x| x.powi(p), -1.0, 1.0, &rule);
            let want = if p % 2 == 0 { 2.0 / (p as f64 + 1.0) } else { 0.0 };
            assert!((got - want).abs() < 1e-14, "p={p}");
        }
        let w: f64 = gauss_legendre(40).1.iter().sum();
        assert!((w - 2.0).abs() < 1e-13);
    }

    #[test]
    fn legendre_coefficients_match_recurrence() {
        for n in 0..8 {
            let c = legendre_coefficients(n);
            for &x in &[-0.9f64, -0.3, 0.2, 0.77] {
                let v: f64 = c.iter().enumerate().map(|(j, &a)| a * x.powi(j as i32)).sum();
                assert!((v - legendre(n, x)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn antiderivative_is_consistent() {
        let rule = gauss_legendre(10);
        for n in 0..6 {
            let got = integrate_fixed(|x| legendre(n, x), -1.0, 0.3, &rule);
            assert!((got - legendre_antiderivative(n, 0.3)).abs() < 1e-14);
        }
    }

    #[test]
    fn adaptive_handles_infinite_support() {
        let g = |x: f64| (-x * x / 2.0).exp() / (2.0 * PI).sqrt();
        let m4 = integrate_adaptive(|x| x.powi(4) * g(x), f64::NEG_INFINITY, f64::INFINITY, 1e-13);
        assert!((m4 - 3.0).abs() < 1e-11, "{m4}");
        let s = integrate_adaptive(|x| x.sqrt(), 0.0, 1.0, 1e-13);
        assert!((s - 2.0 / 3.0).abs() < 1e-11);
    }
}
