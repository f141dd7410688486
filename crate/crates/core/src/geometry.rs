//! Analytic singular sets and distances from points, segments and solid
//! triangles to them, plus rejection sampling of geometry that avoids them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DRAWS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Primitive {
    Point { p: Vec<f64> },
    /// Affine plane through `origin` spanned by orthonormal `directions`.
    Plane { origin: Vec<f64>, directions: Vec<Vec<f64>> },
    Ball { center: Vec<f64>, radius: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SingularSetModel {
    pub n: usize,
    pub primitives: Vec<Primitive>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Distance from the origin to the segment {a + t(b - a)}.
fn origin_to_segment(a: &[f64], b: &[f64]) -> f64 {
    let d = sub(b, a);
    let dd = dot(&d, &d);
    let t = if dd > 0.0 { (-dot(a, &d) / dd).clamp(0.0, 1.0) } else { 0.0 };
    a.iter().zip(&d).map(|(x, y)| (x + t * y).powi(2)).sum::<f64>().sqrt()
}

/// Distance from the origin to the solid triangle abc.
fn origin_to_triangle(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let e1 = sub(b, a);
    let e2 = sub(c, a);
    let (g11, g12, g22) = (dot(&e1, &e1), dot(&e1, &e2), dot(&e2, &e2));
    let det = g11 * g22 - g12 * g12;
    if det > 1e-14 * g11.max(g22).powi(2) {
        let (r1, r2) = (-dot(a, &e1), -dot(a, &e2));
        let s = (g22 * r1 - g12 * r2) / det;
        let t = (g11 * r2 - g12 * r1) / det;
        if s >= 0.0 && t >= 0.0 && s + t <= 1.0 {
            return a.iter().enumerate().map(|(k, x)| (x + s * e1[k] + t * e2[k]).powi(2)).sum::<f64>().sqrt();
        }
    }
    origin_to_segment(a, b).min(origin_to_segment(b, c)).min(origin_to_segment(c, a))
}

impl Primitive {
    /// Maps the problem into coordinates where the primitive sits at the
    /// origin (projecting out plane directions) and returns the extra radius.
    fn reduce(&self, x: &[f64]) -> (Vec<f64>, f64) {
        match self {
            Primitive::Point { p } => (sub(x, p), 0.0),
            Primitive::Ball { center, radius } => (sub(x, center), *radius),
            Primitive::Plane { origin, directions } => {
                let mut y = sub(x, origin);
                for d in directions {
                    let c = dot(&y, d);
                    for (yk, dk) in y.iter_mut().zip(d) {
                        *yk -= c * dk;
                    }
                }
                (y, 0.0)
            }
        }
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        let (y, r) = self.reduce(x);
        (norm(&y) - r).max(0.0)
    }

    pub fn segment_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let (ya, r) = self.reduce(a);
        let (yb, _) = self.reduce(b);
        (origin_to_segment(&ya, &yb) - r).max(0.0)
    }

    pub fn triangle_distance(&self, a: &[f64], b: &[f64], c: &[f64]) -> f64 {
        let (ya, r) = self.reduce(a);
        let (yb, _) = self.reduce(b);
        let (yc, _) = self.reduce(c);
        (origin_to_triangle(&ya, &yb, &yc) - r).max(0.0)
    }
}

impl SingularSetModel {
    pub fn empty(n: usize) -> Self {
        SingularSetModel { n, primitives: Vec::new() }
    }

    pub fn point(p: &[f64]) -> Self {
        SingularSetModel { n: p.len(), primitives: vec![Primitive::Point { p: p.to_vec() }] }
    }

    /// Affine plane; directions are orthonormalized here.
    pub fn plane(origin: &[f64], directions: &[Vec<f64>]) -> Result<Self> {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for d in directions {
            let mut v = d.clone();
            for b in &basis {
                let c = dot(&v, b);
                for (vk, bk) in v.iter_mut().zip(b) {
                    *vk -= c * bk;
                }
            }
            let l = norm(&v);
            if l < 1e-12 {
                return Err(Error::InvalidInput("degenerate plane directions".into()));
            }
            basis.push(v.iter().map(|x| x / l).collect());
        }
        Ok(SingularSetModel {
            n: origin.len(),
            primitives: vec![Primitive::Plane { origin: origin.to_vec(), directions: basis }],
        })
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    /// Distance to the union; infinite for the empty set.
    pub fn rho(&self, x: &[f64]) -> f64 {
        self.primitives.iter().map(|p| p.distance(x)).fold(f64::INFINITY, f64::min)
    }

    pub fn segment_rho(&self, a: &[f64], b: &[f64]) -> f64 {
        self.primitives.iter().map(|p| p.segment_distance(a, b)).fold(f64::INFINITY, f64::min)
    }

    pub fn triangle_rho(&self, a: &[f64], b: &[f64], c: &[f64]) -> f64 {
        self.primitives.iter().map(|p| p.triangle_distance(a, b, c)).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Segment,
    Triangle,
}

/// Vertices drawn uniformly in the box `lo..hi` whose segment or solid
/// triangle stays more than `clearance` away from `s`, and the number of
/// draws used.
pub fn generic_sample<R: Rng + ?Sized>(
    s: &SingularSetModel,
    shape: Shape,
    lo: &[f64],
    hi: &[f64],
    clearance: f64,
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, usize)> {
    let k = match shape {
        Shape::Segment => 2,
        Shape::Triangle => 3,
    };
    for draw in 1..=MAX_DRAWS {
        let v: Vec<Vec<f64>> =
            (0..k).map(|_| lo.iter().zip(hi).map(|(a, b)| a + (b - a) * rng.random::<f64>()).collect()).collect();
        let rho = match shape {
            Shape::Segment => s.segment_rho(&v[0], &v[1]),
            Shape::Triangle => s.triangle_rho(&v[0], &v[1], &v[2]),
        };
        if rho > clearance {
            return Ok((v, draw));
        }
    }
    Err(Error::SamplingExhausted { draws: MAX_DRAWS })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn distances_to_a_point() {
        let s = SingularSetModel::point(&[0.5, 0.5, 0.5]);
        assert!((s.rho(&[0.5, 0.5, 0.9]) - 0.4).abs() < 1e-15);
        assert!((s.segment_rho(&[0.0, 0.5, 0.6], &[1.0, 0.5, 0.6]) - 0.1).abs() < 1e-15);
        assert!(s.triangle_rho(&[0.0, 0.0, 0.5], &[1.0, 0.0, 0.5], &[0.5, 1.0, 0.5]) < 1e-15);
        let above = s.triangle_rho(&[0.0, 0.0, 0.7], &[1.0, 0.0, 0.7], &[0.5, 1.0, 0.7]);
        assert!((above - 0.2).abs() < 1e-14);
        // closest point on an edge
        let edge = s.triangle_rho(&[0.6, 0.0, 0.5], &[0.6, 1.0, 0.5], &[0.9, 0.5, 0.5]);
        assert!((edge - 0.1).abs() < 1e-14);
    }

    #[test]
    fn plane_and_ball() {
        let s = SingularSetModel::plane(&[0.5, 0.5, 0.5], &[vec![1.0, 1.0, 0.0]]).unwrap();
        assert!(s.rho(&[0.9, 0.9, 0.5]) < 1e-15);
        assert!((s.rho(&[0.5, 0.5, 0.8]) - 0.3).abs() < 1e-15);
        let b = SingularSetModel { n: 2, primitives: vec![Primitive::Ball { center: vec![0.5, 0.5], radius: 0.1 }] };
        assert!((b.rho(&[0.5, 0.8]) - 0.2).abs() < 1e-15);
        assert_eq!(b.rho(&[0.5, 0.55]), 0.0);
    }

    #[test]
    fn rho_is_one_lipschitz() {
        let s = SingularSetModel::point(&[0.3, 0.6, 0.5, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let x: Vec<f64> = (0..4).map(|_| rng.random()).collect();
            let y: Vec<f64> = (0..4).map(|_| rng.random()).collect();
            assert!((s.rho(&x) - s.rho(&y)).abs() <= norm(&sub(&x, &y)) + 1e-15);
        }
    }

    #[test]
    fn triangle_distance_bounded_by_sampled_points() {
        let s = SingularSetModel::point(&[0.4, 0.5, 0.6]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let v: Vec<Vec<f64>> = (0..3).map(|_| (0..3).map(|_| rng.random()).collect()).collect();
            let d = s.triangle_rho(&v[0], &v[1], &v[2]);
            let mut best = f64::INFINITY;
            for i in 0..=40 {
                for j in 0..=(40 - i) {
                    let (a, b) = (i as f64 / 40.0, j as f64 / 40.0);
                    let p: Vec<f64> = (0..3).map(|k| v[0][k] + a * (v[1][k] - v[0][k]) + b * (v[2][k] - v[0][k])).collect();
                    best = best.min(s.rho(&p));
                }
            }
            assert!(d <= best + 1e-12 && best - d < 0.05, "{d} {best}");
        }
    }

    #[test]
    fn empty_set_accepts_first_draw() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (v, draws) = generic_sample(&SingularSetModel::empty(3), Shape::Triangle, &[0.0; 3], &[1.0; 3], 0.1, &mut rng).unwrap();
        assert_eq!(draws, 1);
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn thick_set_exhausts_sampling() {
        let s = SingularSetModel { n: 2, primitives: vec![Primitive::Ball { center: vec![0.5, 0.5], radius: 2.0 }] };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            generic_sample(&s, Shape::Segment, &[0.0; 2], &[1.0; 2], 0.0, &mut rng),
            Err(Error::SamplingExhausted { .. })
        ));
    }
}
