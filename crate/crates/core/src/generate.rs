//! Model connections with analytic evaluators: random band-limited fields,
//! pure gauges, abelian fields and the singular model around a point in R^4.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ConnectionField, FieldSampler, GaugeField, Grid, MAX_DIM};
use crate::geometry::SingularSetModel;
use crate::lie::{exp, Group};
use crate::mat::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Zero,
    RandomSmooth,
    PureGauge,
    AbelianModel,
    SingularModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    /// Amplitude for smooth fields, curvature scale for the singular model.
    pub epsilon: f64,
    /// Largest integer wavenumber per axis.
    pub band: usize,
    /// Number of Fourier terms per scalar component.
    pub terms: usize,
    /// Logarithmic damping of the singular profile (finite energy).
    pub log_damping: bool,
    /// Location of the singular point; cube center when absent.
    pub center: Option<Vec<f64>>,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec { kind: GeneratorKind::Zero, epsilon: 0.05, band: 1, terms: 4, log_damping: true, center: None }
    }
}

/// Sum of cosines a_j cos(pi k_j . x + phi_j) with integer wavevectors.
#[derive(Clone, Debug)]
pub struct Trig {
    terms: Vec<([f64; MAX_DIM], f64, f64)>,
}

impl Trig {
    /// Random modes with |k_a| <= band and sum of |a_j| equal to `amplitude`.
    pub fn random<R: Rng + ?Sized>(n: usize, band: usize, count: usize, amplitude: f64, rng: &mut R) -> Trig {
        let mut terms = Vec::with_capacity(count);
        for _ in 0..count {
            let mut k = [0.0; MAX_DIM];
            for ka in k.iter_mut().take(n) {
                *ka = PI * rng.random_range(0..=band) as f64;
            }
            let a: f64 = rng.random_range(-1.0..1.0);
            let phi = rng.random_range(0.0..2.0 * PI);
            terms.push((k, a, phi));
        }
        let total: f64 = terms.iter().map(|t| t.1.abs()).sum();
        let s = if total > 0.0 { amplitude / total } else { 0.0 };
        for t in &mut terms {
            t.1 *= s;
        }
        Trig { terms }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(k, a, p)| a * (x.iter().zip(k).map(|(xi, ki)| xi * ki).sum::<f64>() + p).cos()).sum()
    }

    pub fn grad(&self, x: &[f64], out: &mut [f64]) {
        for o in out.iter_mut() {
            *o = 0.0;
        }
        for (k, a, p) in &self.terms {
            let s = -a * (x.iter().zip(k).map(|(xi, ki)| xi * ki).sum::<f64>() + p).sin();
            for (o, ki) in out.iter_mut().zip(k) {
                *o += s * ki;
            }
        }
    }
}

/// A_alpha = sum_c a_{alpha c}(x) T_c over an algebra basis T_c.
pub struct SmoothSampler {
    n: usize,
    basis: Vec<Mat>,
    coeffs: Vec<Vec<Trig>>,
}

impl SmoothSampler {
    pub fn random<R: Rng + ?Sized>(n: usize, group: Group, spec: &GeneratorSpec, abelian: bool, rng: &mut R) -> Self {
        let full = group.algebra_basis();
        let basis = if abelian { vec![full[full.len() - 1]] } else { full };
        let coeffs = (0..n)
            .map(|_| basis.iter().map(|_| Trig::random(n, spec.band, spec.terms, spec.epsilon, rng)).collect())
            .collect();
        SmoothSampler { n, basis, coeffs }
    }
}

impl FieldSampler for SmoothSampler {
    fn connection(&self, x: &[f64], out: &mut [Mat]) {
        for (al, o) in out.iter_mut().enumerate().take(self.n) {
            let mut v = Mat::zeros(self.basis[0].dim());
            for (c, t) in self.coeffs[al].iter().enumerate() {
                v += self.basis[c] * t.value(x);
            }
            *o = v;
        }
    }

    fn curvature(&self, x: &[f64], out: &mut [Mat]) -> bool {
        let n = self.n;
        let dim = self.basis[0].dim();
        let mut a = [Mat::zeros(dim); MAX_DIM];
        self.connection(x, &mut a[..n]);
        // da[alpha][beta] = d_beta A_alpha
        let mut da = [[Mat::zeros(dim); MAX_DIM]; MAX_DIM];
        let mut g = [0.0; MAX_DIM];
        for al in 0..n {
            for (c, t) in self.coeffs[al].iter().enumerate() {
                t.grad(x, &mut g[..n]);
                for be in 0..n {
                    da[al][be] += self.basis[c] * g[be];
                }
            }
        }
        let mut k = 0;
        for al in 0..n {
            for be in (al + 1)..n {
                out[k] = da[be][al] - da[al][be] + a[al].commutator(&a[be]);
                k += 1;
            }
        }
        true
    }
}

/// sigma(x) = prod_c exp(phi_c(x) T_c) and its flat connection
/// sigma(0) = -(d sigma) sigma^{-1}.
pub struct PureGauge {
    n: usize,
    basis: Vec<Mat>,
    phis: Vec<Trig>,
}

impl PureGauge {
    pub fn random<R: Rng + ?Sized>(n: usize, group: Group, amplitude: f64, band: usize, terms: usize, rng: &mut R) -> Self {
        let basis = group.algebra_basis();
        let phis = basis.iter().map(|_| Trig::random(n, band, terms, amplitude, rng)).collect();
        PureGauge { n, basis, phis }
    }

    pub fn sigma(&self, x: &[f64]) -> Mat {
        let mut s = Mat::identity(self.basis[0].dim());
        for (t, p) in self.basis.iter().zip(&self.phis) {
            s = s * exp(&(*t * p.value(x)));
        }
        s
    }

    pub fn gauge_field(&self, grid: Grid, group: Group) -> GaugeField {
        GaugeField::from_fn(grid, group, |x| self.sigma(x))
    }
}

impl FieldSampler for PureGauge {
    fn connection(&self, x: &[f64], out: &mut [Mat]) {
        let n = self.n;
        let dim = self.basis[0].dim();
        for o in out.iter_mut().take(n) {
            *o = Mat::zeros(dim);
        }
        let mut prefix = Mat::identity(dim);
        let mut g = [0.0; MAX_DIM];
        for (t, p) in self.basis.iter().zip(&self.phis) {
            p.grad(x, &mut g[..n]);
            let pinv = prefix.adjoint();
            let conj = prefix * *t * pinv;
            for al in 0..n {
                out[al] -= conj * g[al];
            }
            prefix = prefix * exp(&(*t * p.value(x)));
        }
    }

    fn curvature(&self, _x: &[f64], out: &mut [Mat]) -> bool {
        let dim = self.basis[0].dim();
        for o in out.iter_mut() {
            *o = Mat::zeros(dim);
        }
        true
    }
}

/// Abelian field A_alpha = g(rho) J_alpha X around a point c in R^4, with
/// J = (-y2, y1, -y4, y3), y = x - c and g = f / rho^2. Its curvature
/// magnitude is eps / rho^2 (times 1/sqrt(1 + log^2 rho) with damping).
pub struct SingularModel {
    center: [f64; 4],
    eps: f64,
    log_damping: bool,
    x: Mat,
}

impl SingularModel {
    pub fn new(center: [f64; 4], eps: f64, log_damping: bool, group: Group) -> Self {
        let basis = group.algebra_basis();
        SingularModel { center, eps, log_damping, x: basis[basis.len() - 1] }
    }

    /// (f, f') as functions of rho.
    fn profile(&self, rho: f64) -> (f64, f64) {
        let c = self.eps / 8f64.sqrt();
        if !self.log_damping {
            return (c, 0.0);
        }
        let l = (1.0 + rho.ln().powi(2)).sqrt();
        let dl = rho.ln() / (rho * l);
        (c / l, -c * dl / (l * l))
    }

    fn setup(&self, x: &[f64]) -> ([f64; 4], [f64; 4], f64) {
        let mut y = [0.0; 4];
        for k in 0..4 {
            y[k] = x[k] - self.center[k];
        }
        let j = [-y[1], y[0], -y[3], y[2]];
        let rho = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        (y, j, rho)
    }

    /// Exact |F| at x (zero on the singular point).
    pub fn curvature_magnitude(&self, x: &[f64]) -> f64 {
        let mut f = [Mat::zeros(self.x.dim()); 6];
        self.curvature(x, &mut f);
        (2.0 * f.iter().map(|m| m.op_norm().powi(2)).sum::<f64>()).sqrt()
    }
}

impl FieldSampler for SingularModel {
    fn connection(&self, x: &[f64], out: &mut [Mat]) {
        let (_, j, rho) = self.setup(x);
        if rho == 0.0 {
            for o in out.iter_mut().take(4) {
                *o = Mat::zeros(self.x.dim());
            }
            return;
        }
        let g = self.profile(rho).0 / (rho * rho);
        for k in 0..4 {
            out[k] = self.x * (g * j[k]);
        }
    }

    fn curvature(&self, x: &[f64], out: &mut [Mat]) -> bool {
        let (y, j, rho) = self.setup(x);
        let mut k = 0;
        for al in 0..4 {
            for be in (al + 1)..4 {
                out[k] = if rho == 0.0 {
                    Mat::zeros(self.x.dim())
                } else {
                    let (f, df) = self.profile(rho);
                    let g = f / (rho * rho);
                    let dg = df / (rho * rho) - 2.0 * f / (rho * rho * rho);
                    // d_be J_al - d_al J_be is 2 on (0,1) and (2,3), 0 otherwise
                    let k_ab = if (al, be) == (0, 1) || (al, be) == (2, 3) { 2.0 } else { 0.0 };
                    self.x * ((dg / rho) * (y[al] * j[be] - y[be] * j[al]) + g * k_ab)
                };
                k += 1;
            }
        }
        true
    }
}

/// The zero connection, exact off the grid.
pub struct ZeroSampler;

impl FieldSampler for ZeroSampler {
    fn connection(&self, _x: &[f64], out: &mut [Mat]) {
        let d = out.first().map_or(1, |m| m.dim());
        out.iter_mut().for_each(|m| *m = Mat::zeros(d));
    }

    fn curvature(&self, _x: &[f64], out: &mut [Mat]) -> bool {
        let d = out.first().map_or(1, |m| m.dim());
        out.iter_mut().for_each(|m| *m = Mat::zeros(d));
        true
    }

    fn is_zero(&self) -> bool {
        true
    }
}

pub struct Generated {
    pub field: ConnectionField,
    /// The gauge whose action on zero produced the field (pure gauges only).
    pub gauge: Option<GaugeField>,
    pub singular: Option<SingularSetModel>,
}

pub fn generate(spec: &GeneratorSpec, grid: Grid, group: Group, seed: u64) -> Result<Generated> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n;
    match spec.kind {
        GeneratorKind::Zero => {
            Ok(Generated { field: ConnectionField::from_sampler(grid, group, Arc::new(ZeroSampler)), gauge: None, singular: None })
        }
        GeneratorKind::RandomSmooth | GeneratorKind::AbelianModel => {
            let abelian = spec.kind == GeneratorKind::AbelianModel;
            let s = Arc::new(SmoothSampler::random(n, group, spec, abelian, &mut rng));
            Ok(Generated { field: ConnectionField::from_sampler(grid, group, s), gauge: None, singular: None })
        }
        GeneratorKind::PureGauge => {
            let pg = Arc::new(PureGauge::random(n, group, spec.epsilon, spec.band, spec.terms, &mut rng));
            let gauge = pg.gauge_field(grid, group);
            Ok(Generated { field: ConnectionField::from_sampler(grid, group, pg), gauge: Some(gauge), singular: None })
        }
        GeneratorKind::SingularModel => {
            if n != 4 {
                return Err(Error::UnsupportedSpec(format!("singular_model needs n = 4 (codimension-4 set), got n = {n}")));
            }
            let c = spec.center.clone().unwrap_or_else(|| vec![0.5; 4]);
            if c.len() != 4 || c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::UnsupportedSpec("singular_model center must lie in the unit 4-cube".into()));
            }
            let model = SingularModel::new([c[0], c[1], c[2], c[3]], spec.epsilon, spec.log_damping, group);
            let sing = SingularSetModel::point(&c);
            let mut field = ConnectionField::from_sampler(grid, group, Arc::new(model));
            field.singular = Some(Arc::new(sing.clone()));
            Ok(Generated { field, gauge: None, singular: Some(sing) })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{curvature, curvature_magnitude};

    #[test]
    fn zero_kind_is_zero() {
        let g = Grid::new(3, 9).unwrap();
        let z = generate(&GeneratorSpec::default(), g, Group::SU2, 1).unwrap();
        assert!(z.field.data.iter().all(|m| m.fro_norm() == 0.0));
    }

    #[test]
    fn analytic_curvature_matches_stencils() {
        let g = Grid::new(3, 17).unwrap();
        let spec = GeneratorSpec { kind: GeneratorKind::RandomSmooth, epsilon: 0.5, ..Default::default() };
        let gen = generate(&spec, g, Group::SU2, 7).unwrap();
        let f = curvature(&gen.field);
        let s = gen.field.sampler.as_ref().unwrap();
        let mut exact = [Mat::zeros(2); 3];
        let mut worst: f64 = 0.0;
        for node in (0..g.len()).step_by(37) {
            let x = g.coords(node);
            s.curvature(&x[..3], &mut exact);
            for k in 0..3 {
                worst = worst.max((f.data[node * 3 + k] - exact[k]).op_norm());
            }
        }
        assert!(worst < 1e-2, "{worst}");
    }

    #[test]
    fn pure_gauge_has_fourth_order_small_curvature() {
        let mut maxes = Vec::new();
        for m in [9, 17] {
            let g = Grid::new(3, m).unwrap();
            let spec = GeneratorSpec { kind: GeneratorKind::PureGauge, epsilon: 0.6, ..Default::default() };
            let gen = generate(&spec, g, Group::SU2, 3).unwrap();
            let f = curvature_magnitude(&curvature(&gen.field));
            maxes.push(f.into_iter().fold(0.0, f64::max));
        }
        assert!(maxes[0] / maxes[1] > 10.0, "{maxes:?}");
    }

    #[test]
    fn singular_model_profile() {
        let model = SingularModel::new([0.5; 4], 0.05, false, Group::SU2);
        for x in [[0.6, 0.5, 0.5, 0.5], [0.3, 0.7, 0.45, 0.9], [0.51, 0.52, 0.53, 0.49]] {
            let rho: f64 = x.iter().map(|v| (v - 0.5) * (v - 0.5)).sum::<f64>().sqrt();
            assert!((model.curvature_magnitude(&x) - 0.05 / (rho * rho)).abs() < 1e-10 / (rho * rho));
        }
        let damped = SingularModel::new([0.5; 4], 0.05, true, Group::SU2);
        for x in [[0.6, 0.5, 0.5, 0.5], [0.3, 0.7, 0.45, 0.9], [0.501, 0.5, 0.5, 0.5]] {
            let rho: f64 = x.iter().map(|v| (v - 0.5) * (v - 0.5)).sum::<f64>().sqrt();
            let target = 0.05 / (rho * rho * (1.0 + rho.ln().powi(2)).sqrt());
            let r = damped.curvature_magnitude(&x) / target;
            assert!((r - 1.0).abs() < 0.03, "{r}");
        }
    }

    #[test]
    fn singular_model_curvature_matches_finite_differences() {
        let model = SingularModel::new([0.5; 4], 0.3, true, Group::U1);
        let x = [0.61, 0.43, 0.55, 0.37];
        let d = 1e-5;
        let mut exact = [Mat::zeros(1); 6];
        model.curvature(&x, &mut exact);
        let mut a = [Mat::zeros(1); 4];
        let deriv = |al: usize, be: usize| {
            // d_be A_al
            let mut xp = x;
            let mut xm = x;
            xp[be] += d;
            xm[be] -= d;
            let mut ap = [Mat::zeros(1); 4];
            let mut am = [Mat::zeros(1); 4];
            model.connection(&xp, &mut ap);
            model.connection(&xm, &mut am);
            (ap[al] - am[al]) * (0.5 / d)
        };
        model.connection(&x, &mut a);
        let mut k = 0;
        for al in 0..4 {
            for be in (al + 1)..4 {
                let fd = deriv(be, al) - deriv(al, be);
                assert!((fd - exact[k]).op_norm() < 1e-7);
                k += 1;
            }
        }
    }

    #[test]
    fn singular_model_needs_four_dimensions() {
        let spec = GeneratorSpec { kind: GeneratorKind::SingularModel, ..Default::default() };
        assert!(matches!(generate(&spec, Grid::new(3, 9).unwrap(), Group::SU2, 0), Err(Error::UnsupportedSpec(_))));
    }
}
