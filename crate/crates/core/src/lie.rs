//! Matrix Lie group kernel for G in U(N): exponential, logarithm, bi-invariant
//! distance, equivariant projection onto G and weighted averaging.

use nalgebra::{Matrix2, Matrix3};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;

pub type GroupElement = Mat;
pub type AlgebraElement = Mat;

/// Default tubular radius for the projection onto G.
pub const DEFAULT_DELTA: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    U1,
    SU2,
    U(usize),
    SU(usize),
}

impl Group {
    pub fn dim(&self) -> usize {
        match *self {
            Group::U1 => 1,
            Group::SU2 => 2,
            Group::U(n) | Group::SU(n) => n,
        }
    }

    pub fn is_special(&self) -> bool {
        matches!(self, Group::SU2 | Group::SU(_))
    }

    pub fn is_abelian(&self) -> bool {
        self.dim() == 1
    }

    pub fn tag(&self) -> u8 {
        match *self {
            Group::U1 => 1,
            Group::SU2 => 2,
            Group::U(n) => 16 + n as u8,
            Group::SU(n) => 32 + n as u8,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Group> {
        match tag {
            1 => Some(Group::U1),
            2 => Some(Group::SU2),
            t if (17..=19).contains(&t) => Some(Group::U((t - 16) as usize)),
            t if (34..=35).contains(&t) => Some(Group::SU((t - 32) as usize)),
            _ => None,
        }
    }

    pub fn identity(&self) -> Mat {
        Mat::identity(self.dim())
    }

    /// Basis of the Lie algebra, orthogonal for Re tr(X* Y). For su(2) this is
    /// i times the Pauli matrices, so coordinates give the operator norm.
    pub fn algebra_basis(&self) -> Vec<Mat> {
        let n = self.dim();
        let i = C64::new(0.0, 1.0);
        if *self == Group::SU2 || *self == Group::SU(2) {
            return pauli().iter().map(|s| *s * i).collect();
        }
        let mut basis = Vec::new();
        if self.is_special() {
            for l in 1..n {
                let norm = (2.0 / (l * (l + 1)) as f64).sqrt();
                basis.push(Mat::from_fn(n, |a, b| {
                    if a != b {
                        C64::new(0.0, 0.0)
                    } else if a < l {
                        i * norm
                    } else if a == l {
                        -i * (l as f64 * norm)
                    } else {
                        C64::new(0.0, 0.0)
                    }
                }));
            }
        } else {
            for d in 0..n {
                basis.push(Mat::from_fn(n, |a, b| if a == d && b == d { i } else { C64::new(0.0, 0.0) }));
            }
        }
        for a in 0..n {
            for b in (a + 1)..n {
                basis.push(Mat::from_fn(n, |r, c| {
                    if (r, c) == (a, b) || (r, c) == (b, a) {
                        i
                    } else {
                        C64::new(0.0, 0.0)
                    }
                }));
                basis.push(Mat::from_fn(n, |r, c| {
                    if (r, c) == (a, b) {
                        C64::new(1.0, 0.0)
                    } else if (r, c) == (b, a) {
                        C64::new(-1.0, 0.0)
                    } else {
                        C64::new(0.0, 0.0)
                    }
                }));
            }
        }
        basis
    }

    /// Real coordinates of an algebra element in [`Group::algebra_basis`].
    pub fn coords(&self, x: &Mat) -> Vec<f64> {
        self.algebra_basis()
            .iter()
            .map(|b| {
                let ip: C64 = (b.adjoint() * *x).trace();
                ip.re / b.fro_norm_sqr()
            })
            .collect()
    }

    pub fn from_coords(&self, c: &[f64]) -> Mat {
        let basis = self.algebra_basis();
        let mut m = Mat::zeros(self.dim());
        for (b, &v) in basis.iter().zip(c) {
            m += *b * v;
        }
        m
    }

    /// Orthogonal projection of a matrix onto the Lie algebra.
    pub fn project_algebra(&self, x: &Mat) -> Mat {
        x.anti_hermitian_part(self.is_special())
    }

    pub fn is_group_element(&self, g: &Mat, tol: f64) -> bool {
        let unitary = (g.adjoint() * *g - Mat::identity(g.dim())).fro_norm() <= tol;
        let det_ok = !self.is_special() || (g.det() - C64::new(1.0, 0.0)).norm() <= tol;
        g.dim() == self.dim() && unitary && det_ok
    }

    pub fn is_algebra_element(&self, x: &Mat, tol: f64) -> bool {
        let ah = (x.adjoint() + *x).fro_norm() <= tol;
        let tr = !self.is_special() || x.trace().norm() <= tol;
        x.dim() == self.dim() && ah && tr
    }

    pub fn random_algebra<R: Rng + ?Sized>(&self, rng: &mut R, scale: f64) -> Mat {
        let c: Vec<f64> = self.algebra_basis().iter().map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect();
        self.from_coords(&c)
    }

    /// Haar-distributed group element.
    pub fn random_element<R: Rng + ?Sized>(&self, rng: &mut R) -> Mat {
        let n = self.dim();
        let m = Mat::from_fn(n, |_, _| {
            C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
        });
        polar_factor(&m, self.is_special())
    }
}

pub fn pauli() -> [Mat; 3] {
    let o = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    [
        Mat::from_rows(2, &[o, one, one, o]),
        Mat::from_rows(2, &[o, -i, i, o]),
        Mat::from_rows(2, &[one, o, o, -one]),
    ]
}

/// Matrix exponential. Closed forms for N <= 2, scaling and squaring with a
/// diagonal Pade approximant otherwise.
pub fn exp(x: &Mat) -> Mat {
    match x.dim() {
        1 => Mat::scalar(1, x.get(0, 0).exp()),
        2 => exp2(x),
        _ => exp_pade(x),
    }
}

fn exp2(x: &Mat) -> Mat {
    let t = x.trace() * 0.5;
    let x0 = *x - Mat::scalar(2, t);
    // Cayley-Hamilton for traceless 2x2: x0^2 = -det(x0) I
    let d = -x0.det();
    let (ch, shc) = if d.norm() < 1e-4 {
        (
            1.0 + d / 2.0 + d * d / 24.0 + d * d * d / 720.0 + d * d * d * d / 40320.0,
            1.0 + d / 6.0 + d * d / 120.0 + d * d * d / 5040.0 + d * d * d * d / 362880.0,
        )
    } else {
        let s = d.sqrt();
        (s.cosh(), s.sinh() / s)
    };
    (Mat::scalar(2, ch) + x0 * shc) * t.exp()
}

const PADE6: [f64; 7] = [
    1.0,
    0.5,
    5.0 / 44.0,
    1.0 / 66.0,
    1.0 / 792.0,
    1.0 / 15840.0,
    1.0 / 665280.0,
];

/// Scaling and squaring with the [6/6] Pade approximant (error far below 1e-13
/// once the scaled norm is at most 1/2).
pub fn exp_pade(x: &Mat) -> Mat {
    let n = x.dim();
    let norm1 = (0..n).map(|j| (0..n).map(|i| x.get(i, j).norm()).sum::<f64>()).fold(0.0, f64::max);
    let s = if norm1 > 0.5 { (norm1 / 0.5).log2().ceil() as i32 } else { 0 };
    let a = *x * 0.5f64.powi(s);
    let mut num = Mat::zeros(n);
    let mut den = Mat::zeros(n);
    let mut p = Mat::identity(n);
    for (k, &c) in PADE6.iter().enumerate() {
        num += p * c;
        den += p * if k % 2 == 0 { c } else { -c };
        p = p * a;
    }
    let mut r = den.inverse().expect("Pade denominator is invertible for small norm") * num;
    for _ in 0..s {
        r = r * r;
    }
    r
}

/// Principal matrix logarithm; fails when an eigenvalue lies on the negative
/// real axis.
pub fn log(g: &Mat) -> Result<Mat> {
    match g.dim() {
        1 => {
            let z = g.get(0, 0);
            check_branch(z)?;
            Ok(Mat::scalar(1, z.ln()))
        }
        2 => log2(g),
        _ => log_generic(g),
    }
}

fn check_branch(z: C64) -> Result<()> {
    if z.re < 0.0 && z.im.abs() <= 1e-12 * z.norm().max(1e-300) {
        return Err(Error::LogBranchCut);
    }
    if z.norm() < 1e-300 {
        return Err(Error::LogBranchCut);
    }
    Ok(())
}

fn log2(g: &Mat) -> Result<Mat> {
    let t = g.trace() * 0.5;
    let det = g.det();
    let s = (t * t - det).sqrt();
    let (l1, l2) = (t + s, t - s);
    check_branch(l1)?;
    check_branch(l2)?;
    let z = s / t;
    // log g = a I + b g with b the divided difference of log at the eigenvalues
    let (a, b) = if z.norm() < 1e-3 {
        let z2 = z * z;
        let atanh_over_z = 1.0 + z2 / 3.0 + z2 * z2 / 5.0 + z2 * z2 * z2 / 7.0;
        let b = atanh_over_z / t;
        let half_log_1mz2 = -(z2 / 2.0 + z2 * z2 / 4.0 + z2 * z2 * z2 / 6.0);
        (t.ln() + half_log_1mz2 - b * t, b)
    } else {
        let b = (l1.ln() - l2.ln()) / (l1 - l2);
        ((l1.ln() + l2.ln()) * 0.5 - b * t, b)
    };
    Ok(Mat::scalar(2, a) + *g * b)
}

/// Inverse scaling and squaring: Denman-Beavers square roots until close to the
/// identity, then the Gregory series.
pub fn log_generic(g: &Mat) -> Result<Mat> {
    let n = g.dim();
    let id = Mat::identity(n);
    let shifted = (*g + id).singular_values();
    if *shifted.last().unwrap() < 1e-12 {
        return Err(Error::LogBranchCut);
    }
    let mut y = *g;
    let mut k = 0;
    while (y - id).fro_norm() > 0.25 {
        let mut z = id;
        let mut yy = y;
        for _ in 0..100 {
            let yi = yy.inverse().ok_or(Error::LogBranchCut)?;
            let zi = z.inverse().ok_or(Error::LogBranchCut)?;
            let ny = (yy + zi) * 0.5;
            let nz = (z + yi) * 0.5;
            let done = (ny - yy).fro_norm() < 1e-15 * ny.fro_norm();
            yy = ny;
            z = nz;
            if done {
                break;
            }
        }
        y = yy;
        k += 1;
        if k > 60 {
            return Err(Error::LogBranchCut);
        }
    }
    let zm = (y - id) * (y + id).inverse().ok_or(Error::LogBranchCut)?;
    let z2 = zm * zm;
    let mut term = zm;
    let mut sum = Mat::zeros(n);
    for j in 0..200 {
        let add = term * (1.0 / (2 * j + 1) as f64);
        sum += add;
        if add.fro_norm() < 1e-18 {
            break;
        }
        term = term * z2;
    }
    Ok(sum * 2.0f64.powi(k + 1))
}

/// Bi-invariant distance ||log(g^-1 h)|| (operator norm) for unitary g, h.
pub fn distance(g: &Mat, h: &Mat) -> Result<f64> {
    Ok(log(&(g.adjoint() * *h))?.op_norm())
}

/// [`distance`] with the chordal fallback |g - h| on the branch cut.
pub fn distance_or_chordal(g: &Mat, h: &Mat) -> f64 {
    distance(g, h).unwrap_or_else(|_| (*g - *h).op_norm())
}

/// Polar factor M (M*M)^{-1/2}, divided by the principal N-th root of the
/// determinant when `special`. No tubular check.
pub fn polar_factor(m: &Mat, special: bool) -> Mat {
    let n = m.dim();
    let mut u = match n {
        1 => {
            let z = m.get(0, 0);
            Mat::scalar(1, if z.norm() > 0.0 { z / z.norm() } else { C64::new(1.0, 0.0) })
        }
        2 => {
            let svd = Matrix2::<C64>::from(m.to_na2()).svd(true, true);
            Mat::from_na2(&(svd.u.unwrap() * svd.v_t.unwrap()))
        }
        _ => {
            let svd = Matrix3::<C64>::from(m.to_na3()).svd(true, true);
            Mat::from_na3(&(svd.u.unwrap() * svd.v_t.unwrap()))
        }
    };
    if special {
        let d = u.det();
        let root = C64::from_polar(1.0, -d.arg() / n as f64);
        u = u * root;
    }
    u
}

/// Equivariant projection onto G for matrices whose singular values lie in
/// [1 - delta, 1 + delta].
pub fn project(m: &Mat, group: Group, delta: f64) -> Result<Mat> {
    let s = m.singular_values();
    let (smax, smin) = (s[0], *s.last().unwrap());
    if smin < 1.0 - delta || smax > 1.0 + delta {
        return Err(Error::OutsideTubularNeighbourhood { smin, smax, delta });
    }
    Ok(polar_factor(m, group.is_special()))
}

#[derive(Clone, Debug, Default)]
pub struct WeightedSamples {
    pub elements: Vec<Mat>,
    pub weights: Vec<f64>,
}

impl WeightedSamples {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, g: Mat, w: f64) {
        self.elements.push(g);
        self.weights.push(w);
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn linear_mean(&self) -> Mat {
        let w = self.total_weight();
        let mut m = Mat::zeros(self.elements[0].dim());
        for (g, &wi) in self.elements.iter().zip(&self.weights) {
            m += *g * (wi / w);
        }
        m
    }

    /// sum_{i,j} w_i w_j |f_i - f_j| divided by (sum w)^2.
    pub fn clustering_statistic(&self) -> f64 {
        let w = self.total_weight();
        let mut s = 0.0;
        for i in 0..self.elements.len() {
            if self.weights[i] == 0.0 {
                continue;
            }
            for j in (i + 1)..self.elements.len() {
                if self.weights[j] == 0.0 {
                    continue;
                }
                s += self.weights[i] * self.weights[j] * (self.elements[i] - self.elements[j]).op_norm();
            }
        }
        2.0 * s / (w * w)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Average {
    pub element: Mat,
    /// Normalized clustering statistic (double sum over total weight squared).
    pub clustering: f64,
}

/// Projection of the weighted linear mean onto G, guarded by the clustering
/// condition.
pub fn average(samples: &WeightedSamples, group: Group, delta: f64) -> Result<Average> {
    if samples.is_empty() || samples.weights.iter().any(|&w| !(w >= 0.0)) || samples.total_weight() <= 0.0 {
        return Err(Error::InvalidInput("weights must be non-negative with positive total".into()));
    }
    let stat = samples.clustering_statistic();
    let mean = samples.linear_mean();
    if stat >= delta {
        let s = mean.singular_values();
        return Err(Error::ClusteringViolated {
            statistic: stat,
            bound: delta,
            projection: Some((*s.last().unwrap(), s[0])),
        });
    }
    let element = project(&mean, group, delta)?;
    Ok(Average { element, clustering: stat })
}

/// |pi(x) g pi(y)^-1 - 1| / |x g - y| for x, y in the tubular neighbourhood.
pub fn lipschitz_ratio(x: &Mat, y: &Mat, g: &Mat, group: Group, delta: f64) -> Result<f64> {
    let px = project(x, group, delta)?;
    let py = project(y, group, delta)?;
    let num = (px * *g * py.adjoint() - group.identity()).op_norm();
    let den = (*x * *g - *y).op_norm();
    Ok(if den == 0.0 { 0.0 } else { num / den })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn groups() -> [Group; 5] {
        [Group::U1, Group::SU2, Group::U(2), Group::U(3), Group::SU(3)]
    }

    #[test]
    fn exp_of_zero_is_identity() {
        for g in groups() {
            assert_eq!(exp(&Mat::zeros(g.dim())), g.identity());
        }
    }

    #[test]
    fn exp_inverse_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for g in groups() {
            for _ in 0..20 {
                let x = g.random_algebra(&mut rng, 1.3);
                let p = exp(&x) * exp(&(-x));
                assert!((p - g.identity()).fro_norm() < 1e-12);
            }
        }
    }

    #[test]
    fn closed_form_exp_matches_pade() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let x = Group::U(2).random_algebra(&mut rng, 2.0);
            assert!((exp2(&x) - exp_pade(&x)).fro_norm() < 1e-13);
            let tiny = x * 1e-4;
            assert!((exp2(&tiny) - exp_pade(&tiny)).fro_norm() < 1e-15);
        }
    }

    #[test]
    fn su2_exp_has_eigenvalues_plus_minus_i() {
        // X = i*pi/2 sigma_3: eigen-decomposition gives exp = diag(i, -i)
        let x = pauli()[2] * C64::new(0.0, std::f64::consts::FRAC_PI_2);
        let e = exp(&x);
        let tr = e.trace();
        let det = e.det();
        // eigenvalues are roots of l^2 - tr l + det
        let disc = (tr * tr - det * 4.0).sqrt();
        let l1 = (tr + disc) / 2.0;
        let l2 = (tr - disc) / 2.0;
        let i = C64::new(0.0, 1.0);
        let ok = ((l1 - i).norm() < 1e-12 && (l2 + i).norm() < 1e-12) || ((l1 + i).norm() < 1e-12 && (l2 - i).norm() < 1e-12);
        assert!(ok, "eigenvalues {l1} {l2}");
    }

    #[test]
    fn log_inverts_exp() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for g in groups() {
            for _ in 0..20 {
                let x = g.random_algebra(&mut rng, 0.7);
                if x.op_norm() > 3.0 {
                    continue;
                }
                let l = log(&exp(&x)).unwrap();
                assert!((l - x).fro_norm() < 1e-11, "{g:?}");
                let lg = log_generic(&exp(&x)).unwrap();
                assert!((lg - x).fro_norm() < 1e-11, "{g:?}");
            }
        }
    }

    #[test]
    fn log_rejects_minus_identity() {
        for g in groups() {
            let m = -g.identity();
            assert!(matches!(log(&m), Err(Error::LogBranchCut)));
        }
    }

    #[test]
    fn distance_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for g in [Group::SU2, Group::U(3)] {
            let a = g.random_element(&mut rng);
            assert!(distance(&a, &a).unwrap() < 1e-12);
            let x = g.random_algebra(&mut rng, 1.0);
            let xn = x * (1.0 / x.op_norm());
            for &t in &[1e-2, 1e-3] {
                let d = distance(&g.identity(), &exp(&(xn * t))).unwrap();
                assert!((d - t).abs() < 10.0 * t * t);
            }
        }
    }

    #[test]
    fn distance_is_bi_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for g in [Group::SU2, Group::U(3), Group::SU(3)] {
            for _ in 0..20 {
                let a = g.random_element(&mut rng);
                let b = exp(&g.random_algebra(&mut rng, 0.5)) * a;
                let k = g.random_element(&mut rng);
                let d0 = distance(&a, &b).unwrap();
                let d1 = distance(&(k * a), &(k * b)).unwrap();
                let d2 = distance(&(a * k), &(b * k)).unwrap();
                assert!((d1 - d0).abs() < 1e-10 && (d2 - d0).abs() < 1e-10, "{g:?} {d0} {d1} {d2}");
            }
        }
    }

    #[test]
    fn project_identity_on_group_and_scalars() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for g in groups() {
            let a = g.random_element(&mut rng);
            assert!((project(&a, g, DEFAULT_DELTA).unwrap() - a).fro_norm() < 1e-12);
            for c in [0.6, 1.0, 1.4] {
                let p = project(&Mat::scalar(g.dim(), C64::new(c, 0.0)), g, DEFAULT_DELTA).unwrap();
                assert!((p - g.identity()).fro_norm() < 1e-12);
            }
            let far = Mat::scalar(g.dim(), C64::new(0.3, 0.0));
            assert!(matches!(project(&far, g, DEFAULT_DELTA), Err(Error::OutsideTubularNeighbourhood { .. })));
        }
    }

    fn perturbed<R: Rng>(g: Group, rng: &mut R, size: f64) -> Mat {
        let base = g.random_element(rng);
        let noise = Mat::from_fn(g.dim(), |_, _| {
            C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
        });
        base + noise * (size / noise.op_norm())
    }

    #[test]
    fn project_is_right_equivariant_and_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for g in groups() {
            let mut tested = 0;
            while tested < 200 {
                let m = perturbed(g, &mut rng, 0.3);
                let Ok(pm) = project(&m, g, DEFAULT_DELTA) else { continue };
                let k = g.random_element(&mut rng);
                let pmk = project(&(m * k), g, DEFAULT_DELTA).unwrap();
                assert!((pmk - pm * k).fro_norm() < 1e-10, "{g:?}");
                assert!((project(&pm, g, DEFAULT_DELTA).unwrap() - pm).fro_norm() < 1e-10);
                assert!(g.is_group_element(&pm, 1e-10));
                tested += 1;
            }
        }
    }

    #[test]
    fn average_of_identical_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = Group::SU2;
        let a = g.random_element(&mut rng);
        let s = WeightedSamples { elements: vec![a; 3], weights: vec![1.0; 3] };
        let avg = average(&s, g, DEFAULT_DELTA).unwrap();
        assert!((avg.element - a).fro_norm() < 1e-12);
        assert_eq!(avg.clustering, 0.0);
    }

    #[test]
    fn average_of_symmetric_pair_is_near_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = Group::SU2;
        let x = g.random_algebra(&mut rng, 1.0);
        for &t in &[0.1, 0.05] {
            let s = WeightedSamples { elements: vec![exp(&(x * t)), exp(&(x * -t))], weights: vec![1.0, 1.0] };
            let avg = average(&s, g, DEFAULT_DELTA).unwrap();
            assert!((avg.element - g.identity()).op_norm() < 1e-12 + 2.0 * t * t * x.op_norm().powi(2));
        }
    }

    #[test]
    fn average_of_small_perturbations_stays_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g = Group::SU2;
        let mut s = WeightedSamples::new();
        for _ in 0..100 {
            let x = g.random_algebra(&mut rng, 1.0);
            let e: f64 = rng.random_range(0.0..0.05);
            s.push(exp(&(x * (e / x.op_norm()))), rng.random_range(0.5..1.5));
        }
        let avg = average(&s, g, DEFAULT_DELTA).unwrap();
        assert!((avg.element - g.identity()).op_norm() < 0.05);
    }

    #[test]
    fn average_rejects_spread_samples() {
        let g = Group::SU2;
        let s = WeightedSamples { elements: vec![g.identity(), -g.identity()], weights: vec![1.0, 1.0] };
        assert!(matches!(average(&s, g, DEFAULT_DELTA), Err(Error::ClusteringViolated { .. })));
    }

    #[test]
    fn clustering_implies_mean_within_tube() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = Group::SU2;
        for _ in 0..200 {
            let spread: f64 = rng.random_range(0.0..1.5);
            let mut s = WeightedSamples::new();
            for _ in 0..8 {
                s.push(exp(&g.random_algebra(&mut rng, spread)), rng.random_range(0.1..1.0));
            }
            if s.clustering_statistic() < DEFAULT_DELTA {
                let sv = s.linear_mean().singular_values();
                assert!(*sv.last().unwrap() > 1.0 - DEFAULT_DELTA && sv[0] <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn projection_lipschitz_constant_is_moderate() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut worst: f64 = 0.0;
        for g in [Group::SU2, Group::U(2), Group::U(3)] {
            let mut tested = 0;
            while tested < 300 {
                let x = perturbed(g, &mut rng, 0.4);
                let k = g.random_element(&mut rng);
                let y = x * k + perturbed(g, &mut rng, 0.1) * 0.1;
                if let Ok(r) = lipschitz_ratio(&x, &y, &k, g, DEFAULT_DELTA) {
                    worst = worst.max(r);
                    tested += 1;
                }
            }
        }
        assert!(worst <= 10.0, "measured Lipschitz constant {worst}");
    }

    #[test]
    fn algebra_coordinates_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for g in groups() {
            let x = g.random_algebra(&mut rng, 1.0);
            assert!(g.is_algebra_element(&x, 1e-12));
            let back = g.from_coords(&g.coords(&x));
            assert!((back - x).fro_norm() < 1e-12);
        }
    }
}
