//! One-dimensional quadrature helpers.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on [-1, 1] (Newton on P_k).
pub fn gauss_legendre(k: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let mut x = (PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=k {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = k as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn gl_panel(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, rule: &[(f64, f64)]) -> f64 {
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    r * rule.iter().map(|&(x, w)| w * f(c + r * x)).sum::<f64>()
}

/// Adaptive bisection with a 7-point Gauss rule; absolute tolerance.
pub fn adaptive(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let rule = gauss_legendre(7);
    let whole = gl_panel(&mut f, a, b, &rule);
    recurse(&mut f, a, b, whole, tol, 0, &rule)
}

fn recurse(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: usize, rule: &[(f64, f64)]) -> f64 {
    let mid = 0.5 * (a + b);
    let l = gl_panel(f, a, mid, rule);
    let r = gl_panel(f, mid, b, rule);
    if (l + r - whole).abs() <= tol || depth >= 60 {
        return l + r;
    }
    recurse(f, a, mid, l, 0.5 * tol, depth + 1, rule) + recurse(f, mid, b, r, 0.5 * tol, depth + 1, rule)
}

/// Tensor Gauss-Legendre rule over [lo, hi]^d.
pub fn tensor_cube(d: usize, lo: f64, hi: f64, points: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    if d == 0 {
        return f(&[]);
    }
    let rule = gauss_legendre(points);
    let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut acc = 0.0;
    loop {
        let mut w = 1.0;
        for k in 0..d {
            x[k] = c + r * rule[idx[k]].0;
            w *= r * rule[idx[k]].1;
        }
        acc += w * f(&x);
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < points {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == d {
                return acc;
            }
        }
    }
}

/// Gamma function at half-integers, Gamma(k/2) for k >= 1.
pub fn gamma_half(k: u32) -> f64 {
    assert!(k >= 1);
    let (mut g, mut x) = if k % 2 == 0 { (1.0, 1.0) } else { (PI.sqrt(), 0.5) };
    while x < k as f64 / 2.0 - 1e-12 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Surface area of the unit sphere S^{d-1} in R^d.
pub fn sphere_area(d: u32) -> f64 {
    2.0 * PI.powf(d as f64 / 2.0) / gamma_half(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_is_exact_to_degree_2k_minus_1() {
        let r = gauss_legendre(5);
        let s: f64 = r.iter().map(|&(x, w)| w * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
        assert!((r.iter().map(|p| p.1).sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity_of_derivative() {
        let v = adaptive(|r| (1.0 - r * r).max(0.0).sqrt(), -1.0, 1.0, 1e-12);
        assert!((v - PI / 2.0).abs() < 1e-10);
    }

    #[test]
    fn gamma_values() {
        assert!((gamma_half(1) - PI.sqrt()).abs() < 1e-15);
        assert!((gamma_half(5) - 0.75 * PI.sqrt()).abs() < 1e-14);
        assert_eq!(gamma_half(8), 6.0);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-13);
        assert!((sphere_area(1) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn tensor_rule_on_square() {
        let v = tensor_cube(2, -0.5, 0.5, 6, |x| x[0] * x[0] + x[1].powi(4));
        assert!((v - (1.0 / 12.0 + 1.0 / 80.0)).abs() < 1e-14);
    }
}
