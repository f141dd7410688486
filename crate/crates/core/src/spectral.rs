//! Multi-dimensional FFTs on row-major arrays and zero-padded convolution of
//! nodal fields with kernels depending on the integer node offset.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::field::{Grid, MAX_DIM};

/// Smallest integer >= n with no prime factor above 5.
pub fn next_smooth(n: usize) -> usize {
    let mut k = n.max(1);
    loop {
        let mut r = k;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return k;
        }
        k += 1;
    }
}

pub struct FftNd {
    dims: Vec<usize>,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
}

impl FftNd {
    pub fn new(dims: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        FftNd {
            dims: dims.to_vec(),
            fwd: dims.iter().map(|&d| planner.plan_fft_forward(d)).collect(),
            inv: dims.iter().map(|&d| planner.plan_fft_inverse(d)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn run(&self, data: &mut [C64], plans: &[Arc<dyn Fft<f64>>]) {
        let total = self.len();
        assert_eq!(data.len(), total);
        let mut buf = vec![C64::new(0.0, 0.0); total];
        for (axis, plan) in plans.iter().enumerate() {
            let len = self.dims[axis];
            let inner: usize = self.dims[axis + 1..].iter().product();
            if inner == 1 {
                plan.process(data);
                continue;
            }
            let outer = total / (len * inner);
            let mut line = 0;
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * len * inner + i;
                    for j in 0..len {
                        buf[line * len + j] = data[base + j * inner];
                    }
                    line += 1;
                }
            }
            plan.process(&mut buf);
            line = 0;
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * len * inner + i;
                    for j in 0..len {
                        data[base + j * inner] = buf[line * len + j];
                    }
                    line += 1;
                }
            }
        }
    }

    pub fn forward(&self, data: &mut [C64]) {
        self.run(data, &self.fwd);
    }

    /// Unnormalized inverse transform.
    pub fn inverse(&self, data: &mut [C64]) {
        self.run(data, &self.inv);
    }
}

/// Unnormalized DCT-I along every axis: X_k = x_0 + (-1)^k x_{m-1} +
/// 2 sum_{0<j<m-1} x_j cos(pi j k / (m-1)). Applying it twice multiplies by
/// prod 2(m_a - 1).
pub struct Dct1Nd {
    dims: Vec<usize>,
    plans: Vec<Arc<dyn Fft<f64>>>,
}

impl Dct1Nd {
    pub fn new(dims: &[usize]) -> Self {
        assert!(dims.iter().all(|&d| d >= 2));
        let mut planner = FftPlanner::new();
        Dct1Nd { dims: dims.to_vec(), plans: dims.iter().map(|&d| planner.plan_fft_forward(2 * (d - 1))).collect() }
    }

    pub fn scale(&self) -> f64 {
        self.dims.iter().map(|&d| 2.0 * (d - 1) as f64).product()
    }

    pub fn transform(&self, data: &mut [f64]) {
        let total: usize = self.dims.iter().product();
        assert_eq!(data.len(), total);
        for (axis, plan) in self.plans.iter().enumerate() {
            let len = self.dims[axis];
            let ext = 2 * (len - 1);
            let inner: usize = self.dims[axis + 1..].iter().product();
            let outer = total / (len * inner);
            let mut buf = vec![C64::new(0.0, 0.0); ext];
            let mut scratch = vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * len * inner + i;
                    for j in 0..len {
                        buf[j] = C64::new(data[base + j * inner], 0.0);
                    }
                    for j in 1..len - 1 {
                        buf[ext - j] = buf[j];
                    }
                    plan.process_with_scratch(&mut buf, &mut scratch);
                    for j in 0..len {
                        data[base + j * inner] = buf[j].re;
                    }
                }
            }
        }
    }
}

/// Linear (non-periodic) convolution on a grid through a padded FFT:
/// out(x) = sum_y K(x - y) g(y), K a function of the integer offset.
pub struct Convolver {
    pub grid: Grid,
    padded: usize,
    fft: FftNd,
}

impl Convolver {
    pub fn new(grid: Grid) -> Self {
        let padded = next_smooth(2 * grid.m - 1);
        let dims = vec![padded; grid.n];
        Convolver { grid, padded, fft: FftNd::new(&dims) }
    }

    fn padded_index(&self, offs: &[i64]) -> usize {
        let p = self.padded as i64;
        offs.iter().fold(0usize, |acc, &o| acc * self.padded + o.rem_euclid(p) as usize)
    }

    /// Spectrum of a kernel given as a function of the squared integer
    /// offset length (symmetric, so the spectrum is real).
    pub fn kernel_spectrum(&self, k: impl Fn(i64) -> f64) -> Vec<f64> {
        let n = self.grid.n;
        let m = self.grid.m as i64;
        let mut data = vec![C64::new(0.0, 0.0); self.fft.len()];
        let span = (2 * m - 1) as usize;
        let mut offs = [0i64; MAX_DIM];
        for lin in 0..span.pow(n as u32) {
            let mut r = lin;
            let mut d2 = 0;
            for a in (0..n).rev() {
                offs[a] = (r % span) as i64 - (m - 1);
                r /= span;
                d2 += offs[a] * offs[a];
            }
            data[self.padded_index(&offs[..n])] = C64::new(k(d2), 0.0);
        }
        self.fft.forward(&mut data);
        data.iter().map(|z| z.re).collect()
    }

    pub fn transform(&self, g: &[f64]) -> Vec<C64> {
        let n = self.grid.n;
        let mut data = vec![C64::new(0.0, 0.0); self.fft.len()];
        for (node, &v) in g.iter().enumerate() {
            let mi = self.grid.multi(node);
            let idx = mi[..n].iter().fold(0usize, |acc, &i| acc * self.padded + i);
            data[idx] = C64::new(v, 0.0);
        }
        self.fft.forward(&mut data);
        data
    }

    /// Convolution of a transformed field with a kernel spectrum, restricted
    /// back to the grid nodes.
    pub fn apply(&self, g_hat: &[C64], spectrum: &[f64]) -> Vec<f64> {
        let mut data: Vec<C64> = g_hat.iter().zip(spectrum).map(|(z, s)| z * s).collect();
        self.fft.inverse(&mut data);
        let scale = 1.0 / self.fft.len() as f64;
        let n = self.grid.n;
        (0..self.grid.len())
            .map(|node| {
                let mi = self.grid.multi(node);
                let idx = mi[..n].iter().fold(0usize, |acc, &i| acc * self.padded + i);
                data[idx].re * scale
            })
            .collect()
    }

    pub fn convolve(&self, g: &[f64], k: impl Fn(i64) -> f64) -> Vec<f64> {
        let spec = self.kernel_spectrum(k);
        self.apply(&self.transform(g), &spec)
    }
}
