//! Type-1 non-uniform FFT by Gaussian gridding:
//! `c(k) = sum_j v_j exp(-i <x_j, k>)` for integer `k` in `[-K, K]^n`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Spreading half-width; with oversampling 2 the error is near 1e-10
/// relative to `sum |v_j|`.
const SPREAD: usize = 10;

#[derive(Clone)]
pub struct Nufft {
    dim: usize,
    k: usize,
    mr: usize,
    /// Per node: first grid index per axis.
    base: Vec<Vec<usize>>,
    /// Per node, per axis: `2 * SPREAD` kernel weights.
    kernel: Vec<Vec<Vec<f64>>>,
    /// Per axis factor for `k = -K..=K`.
    deconv: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Nufft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Nufft").field("dim", &self.dim).field("k", &self.k).field("mr", &self.mr).finish()
    }
}

impl Nufft {
    /// `points[j]` are the phases `x_j` (radians).
    pub fn new(points: &[Vec<f64>], k: usize) -> Self {
        let dim = points.first().map_or(1, |p| p.len());
        let m = (2 * k + 1) as f64;
        let mr = (2 * (2 * k + 1)).max(4 * SPREAD);
        let r = mr as f64 / m;
        let tau = PI * SPREAD as f64 / (m * m * r * (r - 0.5));
        let h = 2.0 * PI / mr as f64;
        let mut base = Vec::with_capacity(points.len());
        let mut kernel = Vec::with_capacity(points.len());
        for p in points {
            let mut b = Vec::with_capacity(dim);
            let mut kw = Vec::with_capacity(dim);
            for &x in p {
                let x = x.rem_euclid(2.0 * PI);
                let m0 = (x / h).floor() as i64;
                let first = m0 - SPREAD as i64 + 1;
                b.push(first.rem_euclid(mr as i64) as usize);
                kw.push(
                    (0..2 * SPREAD)
                        .map(|l| {
                            let d = x - (first + l as i64) as f64 * h;
                            (-d * d / (4.0 * tau)).exp()
                        })
                        .collect(),
                );
            }
            base.push(b);
            kernel.push(kw);
        }
        let deconv = (-(k as i64)..=k as i64)
            .map(|kk| (PI / tau).sqrt() * ((kk * kk) as f64 * tau).exp() / mr as f64)
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(mr);
        Nufft { dim, k, mr, base, kernel, deconv, fft }
    }

    pub fn modes(&self) -> usize {
        (2 * self.k + 1).pow(self.dim as u32)
    }

    /// All coefficients, row-major in `k` (first axis slowest).
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let (n, mr) = (self.dim, self.mr);
        let mut grid = vec![Complex64::new(0.0, 0.0); mr.pow(n as u32)];
        for (j, &vj) in v.iter().enumerate() {
            if vj == Complex64::new(0.0, 0.0) {
                continue;
            }
            spread(&mut grid, vj, &self.base[j], &self.kernel[j], mr, 0, 0);
        }
        // Forward FFT along every axis.
        let mut line = vec![Complex64::new(0.0, 0.0); mr];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for axis in 0..n {
            let stride = mr.pow((n - 1 - axis) as u32);
            let outer = mr.pow(axis as u32);
            for o in 0..outer {
                for s in 0..stride {
                    let start = o * stride * mr + s;
                    for (t, c) in line.iter_mut().enumerate() {
                        *c = grid[start + t * stride];
                    }
                    self.fft.process_with_scratch(&mut line, &mut scratch);
                    for (t, c) in line.iter().enumerate() {
                        grid[start + t * stride] = *c;
                    }
                }
            }
        }
        let side = 2 * self.k + 1;
        let mut out = Vec::with_capacity(self.modes());
        for i in 0..self.modes() {
            let mut rem = i;
            let mut flat = 0;
            let mut scale = 1.0;
            let mut ks = vec![0usize; n];
            for a in (0..n).rev() {
                ks[a] = rem % side;
                rem /= side;
            }
            for &q in &ks {
                let kk = q as i64 - self.k as i64;
                flat = flat * mr + kk.rem_euclid(mr as i64) as usize;
                scale *= self.deconv[q];
            }
            out.push(grid[flat] * scale);
        }
        out
    }
}

fn spread(grid: &mut [Complex64], v: Complex64, base: &[usize], kernel: &[Vec<f64>], mr: usize, axis: usize, offset: usize) {
    let n = base.len();
    let w = &kernel[axis];
    if axis + 1 == n {
        let mut g = base[axis];
        for &wl in w {
            grid[offset + g] += v * wl;
            g += 1;
            if g == mr {
                g = 0;
            }
        }
        return;
    }
    let stride = mr.pow((n - 1 - axis) as u32);
    let mut g = base[axis];
    for &wl in w {
        spread(grid, v * wl, base, kernel, mr, axis + 1, offset + g * stride);
        g += 1;
        if g == mr {
            g = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn direct(points: &[Vec<f64>], v: &[Complex64], k: usize) -> Vec<Complex64> {
        let n = points[0].len();
        let side = 2 * k + 1;
        (0..side.pow(n as u32))
            .map(|i| {
                let mut rem = i;
                let mut ks = vec![0i64; n];
                for a in (0..n).rev() {
                    ks[a] = (rem % side) as i64 - k as i64;
                    rem /= side;
                }
                points
                    .iter()
                    .zip(v)
                    .map(|(p, &vj)| {
                        let ph: f64 = p.iter().zip(&ks).map(|(x, &kk)| x * kk as f64).sum();
                        vj * Complex64::from_polar(1.0, -ph)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (dim, k, count) in [(1, 17, 300), (2, 6, 200), (3, 3, 150)] {
            let pts: Vec<Vec<f64>> =
                (0..count).map(|_| (0..dim).map(|_| rng.gen_range(-20.0..20.0)).collect()).collect();
            let v: Vec<Complex64> =
                (0..count).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let l1: f64 = v.iter().map(|z| z.norm()).sum();
            let fast = Nufft::new(&pts, k).apply(&v);
            let slow = direct(&pts, &v, k);
            let err = fast.iter().zip(&slow).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-9 * l1, "dim {dim}: {err:e}");
        }
    }
}
