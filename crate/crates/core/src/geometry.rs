//! Certified box for beta_J, the tiling set of M, delta, lattices and the
//! packing check.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{GroupSpec, MAlgebra, MalcevOrder};
use crate::error::{Error, Result};
use crate::orbit::OrbitalData;
use crate::quadrature::{grid_points, linspace};

pub const EPS_MIN: f64 = 1e-4;
pub const BISECTION_STEPS: usize = 16;
pub const DEFAULT_GRID_N: usize = 64;
pub const MAX_GRID_NODES: usize = 1_000_000;
pub const DELTA_INFLATION: f64 = 1.01;

/// Per-axis resolution after applying the total-node cap.
pub fn capped_resolution(grid_n: usize, dim: usize, cap: usize) -> usize {
    let mut n = grid_n.max(2);
    while n > 2 && (n as f64).powi(dim as i32) > cap as f64 {
        n -= 1;
    }
    n
}

fn closed_box_grid(eps: f64, dim: usize, per_axis: usize) -> Vec<Vec<f64>> {
    let axis = linspace(-eps / 2.0, eps / 2.0, per_axis);
    grid_points(&vec![axis; dim])
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// Newton inverse of beta_J

/// Damped-Newton inverse of beta_J on the certified box, seeded from a grid.
#[derive(Clone, Debug)]
pub struct ChartInverse {
    data: OrbitalData,
    eps: f64,
    seeds_a: Vec<Vec<f64>>,
    seeds_xi: Vec<Vec<f64>>,
}

/// Result of an unconstrained Newton solve.
#[derive(Clone, Debug, PartialEq)]
pub struct NewtonSolution {
    pub a: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl ChartInverse {
    pub fn new(data: &OrbitalData, eps: f64) -> Result<Self> {
        let n = data.dim_m();
        let per = capped_resolution(17, n, 4096);
        let seeds_a = closed_box_grid(eps, n, per);
        let seeds_xi = seeds_a.iter().map(|a| data.beta(a)).collect::<Result<Vec<_>>>()?;
        Ok(ChartInverse { data: data.clone(), eps, seeds_a, seeds_xi })
    }

    pub fn epsilon(&self) -> f64 {
        self.eps
    }

    pub fn data(&self) -> &OrbitalData {
        &self.data
    }

    fn nearest_seed(&self, xi: &[f64]) -> &[f64] {
        let mut best = 0;
        let mut bd = f64::INFINITY;
        for (i, s) in self.seeds_xi.iter().enumerate() {
            let d = dist(s, xi);
            if d < bd {
                bd = d;
                best = i;
            }
        }
        &self.seeds_a[best]
    }

    /// Newton solve of beta(a) = xi without the box constraint; `None` when
    /// the iteration diverges, leaves a generous neighbourhood of the box or
    /// stalls.
    pub fn solve(&self, xi: &[f64]) -> Option<NewtonSolution> {
        self.solve_from(xi, self.nearest_seed(xi).to_vec())
    }

    pub fn solve_from(&self, xi: &[f64], start: Vec<f64>) -> Option<NewtonSolution> {
        let n = xi.len();
        let tol = 1e-12 * norm_inf(xi).max(1.0);
        let limit = 2.0 * self.eps + 1.0;
        let mut a = start;
        let (mut b, mut jac) = self.data.beta_with_jacobian(&a).ok()?;
        let mut r: Vec<f64> = b.iter().zip(xi).map(|(x, y)| x - y).collect();
        let mut rn = norm_inf(&r);
        for it in 0..100 {
            if rn <= tol {
                return Some(NewtonSolution { a, residual: rn, iterations: it });
            }
            let step = jac.clone().lu().solve(&DMatrix::from_column_slice(n, 1, &r))?;
            let mut t = 1.0;
            loop {
                let cand: Vec<f64> = (0..n).map(|k| a[k] - t * step[k]).collect();
                if norm_inf(&cand) > limit {
                    t *= 0.5;
                    if t < 1e-6 {
                        return None;
                    }
                    continue;
                }
                let (cb, cj) = match self.data.beta_with_jacobian(&cand) {
                    Ok(v) => v,
                    Err(_) => return None,
                };
                let cr: Vec<f64> = cb.iter().zip(xi).map(|(x, y)| x - y).collect();
                let crn = norm_inf(&cr);
                if crn < rn || t < 1e-6 {
                    a = cand;
                    b = cb;
                    jac = cj;
                    r = cr;
                    rn = crn;
                    break;
                }
                t *= 0.5;
            }
            let _ = &b;
        }
        if rn <= tol {
            Some(NewtonSolution { a, residual: rn, iterations: 100 })
        } else {
            None
        }
    }

    /// beta_J^{-1}(xi) inside the closed certified box.
    pub fn invert(&self, xi: &[f64]) -> Result<Vec<f64>> {
        let sol = self.solve(xi).ok_or_else(|| {
            Error::domain(format!("Newton inversion of beta_J did not converge at xi = {xi:?}"))
        })?;
        let half = self.eps / 2.0 * (1.0 + 1e-10);
        if sol.a.iter().any(|v| v.abs() > half) {
            return Err(Error::domain(format!(
                "xi = {xi:?} lies outside beta_J of the certified box (preimage {:?})",
                sol.a
            )));
        }
        Ok(sol.a)
    }
}

// ---------------------------------------------------------------------------
// Certification of the diffeomorphism box

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonAttempt {
    pub epsilon: f64,
    pub accepted: bool,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonCertificate {
    pub epsilon: f64,
    pub grid_resolution: usize,
    pub min_abs_jac_det: f64,
    pub det_at_origin: f64,
    pub injectivity_margin: f64,
    pub image_diameter: f64,
    pub attempts: Vec<EpsilonAttempt>,
}

struct GridEval {
    nodes: Vec<Vec<f64>>,
    images: Vec<Vec<f64>>,
    dets: Vec<f64>,
}

fn evaluate_grid(data: &OrbitalData, eps: f64, per: usize) -> Result<GridEval> {
    let nodes = closed_box_grid(eps, data.dim_m(), per);
    let evals: Vec<Result<(Vec<f64>, f64)>> = nodes
        .par_iter()
        .map(|a| {
            let (b, j) = data.beta_with_jacobian(a)?;
            Ok((b, crate::linalg::det(&j)))
        })
        .collect();
    let mut images = Vec::with_capacity(nodes.len());
    let mut dets = Vec::with_capacity(nodes.len());
    for e in evals {
        let (b, d) = e?;
        images.push(b);
        dets.push(d);
    }
    Ok(GridEval { nodes, images, dets })
}

fn multi_index(mut i: usize, per: usize, dim: usize) -> Vec<i64> {
    let mut idx = vec![0i64; dim];
    for k in (0..dim).rev() {
        idx[k] = (i % per) as i64;
        i /= per;
    }
    idx
}

/// Smallest image distance over node pairs at index distance >= 2 (capped
/// at the hash radius), plus the image diameter.
fn injectivity_margin(images: &[Vec<f64>], per: usize, dim: usize) -> (f64, f64) {
    let n = images.len();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in images {
        for k in 0..dim {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let diam = dist(&lo, &hi);
    // Hash radius: twice the longest step between grid neighbours.
    let mut step: f64 = 0.0;
    for i in 0..n {
        let idx = multi_index(i, per, dim);
        let mut stride = 1;
        for k in (0..dim).rev() {
            if idx[k] + 1 < per as i64 {
                step = step.max(dist(&images[i], &images[i + stride]));
            }
            stride *= per;
        }
    }
    let r = (2.0 * step).max(1e-300);
    let key = |p: &[f64]| -> Vec<i64> { p.iter().map(|v| (v / r).floor() as i64).collect() };
    let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (i, p) in images.iter().enumerate() {
        cells.entry(key(p)).or_default().push(i);
    }
    let offsets = grid_points(&vec![vec![-1.0, 0.0, 1.0]; dim]);
    let margin = (0..n)
        .into_par_iter()
        .map(|i| {
            let ki = key(&images[i]);
            let ii = multi_index(i, per, dim);
            let mut best = r;
            for off in &offsets {
                let kk: Vec<i64> = ki.iter().zip(off).map(|(a, b)| a + *b as i64).collect();
                if let Some(list) = cells.get(&kk) {
                    for &j in list {
                        if j <= i {
                            continue;
                        }
                        let jj = multi_index(j, per, dim);
                        let far = ii.iter().zip(&jj).map(|(a, b)| (a - b).abs()).max().unwrap_or(0) >= 2;
                        if far {
                            best = best.min(dist(&images[i], &images[j]));
                        }
                    }
                }
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min);
    (margin.min(r), diam)
}

/// Node cap for the pairwise injectivity search; the sign check still uses
/// the full grid.
const MAX_INJECTIVITY_NODES: usize = 1 << 15;

/// Every `s`-th node per axis (plus the last) so that at most `cap` remain.
fn subsample(images: &[Vec<f64>], per: usize, dim: usize, cap: usize) -> (Vec<Vec<f64>>, usize) {
    let mut stride = 1;
    let axis = |s: usize| -> Vec<usize> {
        let mut v: Vec<usize> = (0..per).step_by(s).collect();
        if *v.last().unwrap() != per - 1 {
            v.push(per - 1);
        }
        v
    };
    while axis(stride).len().pow(dim as u32) > cap && stride < per {
        stride += 1;
    }
    if stride == 1 {
        return (images.to_vec(), per);
    }
    let keep = axis(stride);
    let m = keep.len();
    let mut out = Vec::with_capacity(m.pow(dim as u32));
    for i in 0..m.pow(dim as u32) {
        let idx = multi_index(i, m, dim);
        let flat = idx.iter().fold(0, |acc, &k| acc * per + keep[k as usize]);
        out.push(images[flat].clone());
    }
    (out, m)
}

/// Certifies a single box `[-eps/2, eps/2]^{n2}`.
pub fn certify_epsilon(data: &OrbitalData, eps: f64, grid_n: usize) -> std::result::Result<EpsilonCertificate, String> {
    let dim = data.dim_m();
    let per = capped_resolution(grid_n, dim, MAX_GRID_NODES);
    let (_, j0) = data.beta_with_jacobian(&vec![0.0; dim]).map_err(|e| e.to_string())?;
    let det0 = crate::linalg::det(&j0);
    if det0 == 0.0 || !det0.is_finite() {
        return Err("Jacobian of beta_J is singular at the origin".into());
    }
    let g = evaluate_grid(data, eps, per).map_err(|e| e.to_string())?;
    let mut min_abs = f64::INFINITY;
    for (a, &d) in g.nodes.iter().zip(&g.dets) {
        if !(d * det0.signum() > 1e-12 * det0.abs()) {
            return Err(format!("Jacobian determinant {d:e} at {a:?} vanishes or changes sign"));
        }
        min_abs = min_abs.min(d.abs());
    }
    let (sub, sub_per) = subsample(&g.images, per, dim, MAX_INJECTIVITY_NODES);
    let (margin, diam) = injectivity_margin(&sub, sub_per, dim);
    if !(margin > 1e-12 * diam.max(1e-300)) {
        return Err(format!("grid images collide (margin {margin:e})"));
    }
    Ok(EpsilonCertificate {
        epsilon: eps,
        grid_resolution: per,
        min_abs_jac_det: min_abs,
        det_at_origin: det0,
        injectivity_margin: margin,
        image_diameter: diam,
        attempts: Vec::new(),
    })
}

/// Largest certified box found by bisection from `eps_max` down to
/// [`EPS_MIN`].
pub fn epsilon_search(data: &OrbitalData, eps_max: f64, grid_n: usize) -> Result<EpsilonCertificate> {
    if !(eps_max > 0.0 && eps_max.is_finite()) {
        return Err(Error::Schema { field: "eps_max".into(), msg: "must be positive and finite".into() });
    }
    let mut attempts = Vec::new();
    let mut record = |eps: f64, r: &std::result::Result<EpsilonCertificate, String>| {
        attempts.push(EpsilonAttempt {
            epsilon: eps,
            accepted: r.is_ok(),
            reason: r.as_ref().err().cloned().unwrap_or_default(),
        });
    };
    let first = certify_epsilon(data, eps_max, grid_n);
    record(eps_max, &first);
    if let Ok(mut c) = first {
        c.attempts = attempts;
        return Ok(c);
    }
    let lo_eps = EPS_MIN.min(eps_max);
    let low = certify_epsilon(data, lo_eps, grid_n);
    record(lo_eps, &low);
    let mut best = match low {
        Ok(c) => c,
        Err(e) => return Err(Error::Certification(format!("no certified box down to eps = {lo_eps}: {e}"))),
    };
    let (mut lo, mut hi) = (lo_eps, eps_max);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let r = certify_epsilon(data, mid, grid_n);
        record(mid, &r);
        match r {
            Ok(c) => {
                lo = mid;
                best = c;
            }
            Err(_) => hi = mid,
        }
    }
    best.attempts = attempts;
    Ok(best)
}

// ---------------------------------------------------------------------------
// Tiling of M

/// The tiling set `Gamma_M = exp(sZ A_1)···exp(sZ A_n)` with tiles
/// `gamma^{-1} e([-s/2, s/2)^n)`.
#[derive(Clone, Debug)]
pub struct Tiling {
    malg: MAlgebra,
    spacing: f64,
}

impl Tiling {
    pub fn new(malg: MAlgebra, spacing: f64) -> Result<Self> {
        if malg.malcev_order() == MalcevOrder::Unsupported {
            return Err(Error::Structural("the basis of m has no ideal chain; M cannot be tiled".into()));
        }
        if !(spacing > 0.0) {
            return Err(Error::domain("tile spacing must be positive"));
        }
        Ok(Tiling { malg, spacing })
    }

    pub fn for_spec(spec: &GroupSpec, spacing: f64) -> Result<Self> {
        Tiling::new(MAlgebra::from_spec(spec), spacing)
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn group(&self) -> &MAlgebra {
        &self.malg
    }

    pub fn dim(&self) -> usize {
        self.malg.dim()
    }

    /// Second-kind coordinates of gamma(k).
    pub fn gamma(&self, k: &[i64]) -> Vec<f64> {
        k.iter().map(|&v| v as f64 * self.spacing).collect()
    }

    /// Coordinates of gamma(k) m.
    pub fn act(&self, k: &[i64], m: &[f64]) -> Result<Vec<f64>> {
        self.malg.mul(&self.gamma(k), m)
    }

    /// Coordinates of gamma(k)^{-1} e(u).
    pub fn point(&self, k: &[i64], u: &[f64]) -> Result<Vec<f64>> {
        let g = self.malg.inv(&self.gamma(k))?;
        self.malg.mul(&g, u)
    }

    pub fn in_box(&self, u: &[f64]) -> bool {
        let h = self.spacing / 2.0;
        u.iter().all(|&v| v >= -h && v < h)
    }

    /// `m = gamma(k)^{-1} e(u)` with `u` in the half-open box.
    pub fn factor(&self, m: &[f64]) -> Result<(Vec<i64>, Vec<f64>)> {
        let n = self.dim();
        let s = self.spacing;
        let shift = |v: f64| ((v + s / 2.0) / s).floor() as i64;
        if self.malg.is_abelian() {
            let k: Vec<i64> = m.iter().map(|&v| -shift(v)).collect();
            let mut u: Vec<f64> = m.iter().zip(&k).map(|(&v, &kk)| v + kk as f64 * s).collect();
            for (uj, kj) in u.iter_mut().zip(&k) {
                // Rounding can leave u_j on the excluded right edge.
                if *uj >= s / 2.0 {
                    *uj -= s;
                    let _ = kj;
                }
            }
            let k: Vec<i64> = m.iter().zip(&u).map(|(&v, &uu)| ((uu - v) / s).round() as i64).collect();
            return Ok((k, u));
        }
        let order: Vec<usize> = match self.malg.malcev_order() {
            MalcevOrder::Prefix => (0..n).rev().collect(),
            _ => (0..n).collect(),
        };
        let mut k = vec![0i64; n];
        for _ in 0..3 {
            for &j in &order {
                let u = self.act(&k, m)?;
                k[j] -= shift(u[j]);
            }
            let u = self.act(&k, m)?;
            if self.in_box(&u) {
                return Ok((k, u));
            }
        }
        Err(Error::domain(format!("tiling factorization did not settle for m = {m:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TilingFailure {
    pub m: Vec<f64>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TilingReport {
    pub samples: usize,
    pub max_reconstruction_error: f64,
    pub failures: Vec<TilingFailure>,
    pub passed: bool,
}

/// Samples points of M in a large box and checks existence and uniqueness of
/// `m = gamma^{-1} omega`.
pub fn tiling_check(spec: &GroupSpec, epsilon: f64, n_samples: usize, seed: u64) -> Result<TilingReport> {
    let tiling = Tiling::for_spec(spec, epsilon)?;
    let n = tiling.dim();
    let radius = 8.0 * epsilon;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Vec<f64>> =
        (0..n_samples).map(|_| (0..n).map(|_| rng.gen_range(-radius..radius)).collect()).collect();
    let offsets: Vec<Vec<i64>> = grid_points(&vec![vec![-1.0, 0.0, 1.0]; n])
        .into_iter()
        .map(|o| o.into_iter().map(|v| v as i64).collect::<Vec<i64>>())
        .filter(|o| o.iter().any(|&v| v != 0))
        .collect();
    let tol_box = 1e-12 * epsilon;
    let results: Vec<(f64, Option<TilingFailure>)> = samples
        .par_iter()
        .map(|m| {
            let fail = |reason: String| (f64::NAN, Some(TilingFailure { m: m.clone(), reason }));
            let (k, u) = match tiling.factor(m) {
                Ok(v) => v,
                Err(e) => return fail(e.to_string()),
            };
            if !tiling.in_box(&u) {
                return fail(format!("omega {u:?} outside the tile"));
            }
            let back = match tiling.point(&k, &u) {
                Ok(v) => v,
                Err(e) => return fail(e.to_string()),
            };
            let err = dist(&back, m) / (1.0 + norm_inf(m));
            if err > 1e-9 {
                return fail(format!("reconstruction error {err:e}"));
            }
            for off in &offsets {
                let kk: Vec<i64> = k.iter().zip(off).map(|(a, b)| a + b).collect();
                let w = match tiling.act(&kk, m) {
                    Ok(v) => v,
                    Err(e) => return fail(e.to_string()),
                };
                let h = epsilon / 2.0;
                if w.iter().all(|&v| v >= -h + tol_box && v < h - tol_box) {
                    return fail(format!("second factorization with gamma index {kk:?}"));
                }
            }
            (err, None)
        })
        .collect();
    let mut failures = Vec::new();
    let mut max_err: f64 = 0.0;
    for (e, f) in results {
        match f {
            Some(f) => failures.push(f),
            None => max_err = max_err.max(e),
        }
    }
    Ok(TilingReport { samples: n_samples, max_reconstruction_error: max_err, passed: failures.is_empty(), failures })
}

// ---------------------------------------------------------------------------
// delta and lattices

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaEstimate {
    /// Refined grid maximum of ||beta_J||_max over the closed box.
    pub grid_max: f64,
    /// `grid_max` times the safety factor.
    pub inflated: f64,
    pub argmax: Vec<f64>,
    pub grid_resolution: usize,
}

/// sup of ||beta_J(a)||_max over the box, by grid search plus local
/// compass refinement.
pub fn delta_sup(data: &OrbitalData, epsilon: f64, grid_n: usize) -> Result<DeltaEstimate> {
    let dim = data.dim_m();
    let per = capped_resolution(grid_n, dim, MAX_GRID_NODES);
    let nodes = closed_box_grid(epsilon, dim, per);
    let vals: Vec<Result<f64>> = nodes.par_iter().map(|a| data.beta(a).map(|b| norm_inf(&b))).collect();
    let mut best = f64::NEG_INFINITY;
    let mut arg = vec![0.0; dim];
    for (a, v) in nodes.iter().zip(vals) {
        let v = v?;
        if v > best {
            best = v;
            arg = a.clone();
        }
    }
    let half = epsilon / 2.0;
    let mut h = epsilon / (per.max(2) - 1) as f64;
    while h > 1e-13 * epsilon {
        let mut improved = false;
        for k in 0..dim {
            for sgn in [-1.0, 1.0] {
                let mut c = arg.clone();
                c[k] = (c[k] + sgn * h).clamp(-half, half);
                let v = norm_inf(&data.beta(&c)?);
                if v > best {
                    best = v;
                    arg = c;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    if !(best > 0.0) {
        return Err(Error::Certification("beta_J vanishes on the whole box".into()));
    }
    Ok(DeltaEstimate { grid_max: best, inflated: best * DELTA_INFLATION, argmax: arg, grid_resolution: per })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticePair {
    pub delta: f64,
    /// Rows of L.
    pub l_matrix: Vec<Vec<f64>>,
    /// Basis vectors L e_j of Lambda (coordinates in {X_j : j in J}).
    pub lambda_basis: Vec<Vec<f64>>,
    /// Basis vectors L^{-T} e_j of Lambda* (coordinates in {X_j* : j in J}).
    pub lambda_star_basis: Vec<Vec<f64>>,
    pub det_l: f64,
    pub frame_bound_prediction: f64,
}

impl LatticePair {
    pub fn l(&self) -> DMatrix<f64> {
        let n = self.l_matrix.len();
        DMatrix::from_fn(n, n, |r, c| self.l_matrix[r][c])
    }

    /// L^{-T}: columns span Lambda*.
    pub fn l_inv_t(&self) -> DMatrix<f64> {
        self.l().try_inverse().expect("L is invertible by construction").transpose()
    }

    pub fn dim(&self) -> usize {
        self.l_matrix.len()
    }
}

/// Default `L = I / (2 delta)` or an invertible override.
pub fn build_lattices(delta: f64, dim: usize, override_l: Option<&DMatrix<f64>>) -> Result<LatticePair> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Lattice(format!("delta must be positive, got {delta}")));
    }
    let l = match override_l {
        Some(m) => {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::Lattice(format!("override must be {dim}x{dim}")));
            }
            m.clone()
        }
        None => DMatrix::identity(dim, dim) / (2.0 * delta),
    };
    let det_l = crate::linalg::det(&l);
    let scale = (0..dim).map(|r| l.row(r).norm()).product::<f64>();
    if !(det_l.abs() > 1e-14 * scale) || !det_l.is_finite() {
        return Err(Error::Lattice("lattice matrix L is singular".into()));
    }
    let inv_t = l.clone().try_inverse().ok_or_else(|| Error::Lattice("lattice matrix L is singular".into()))?.transpose();
    let cols = |m: &DMatrix<f64>| (0..dim).map(|c| m.column(c).iter().copied().collect()).collect();
    Ok(LatticePair {
        delta,
        l_matrix: (0..dim).map(|r| l.row(r).iter().copied().collect()).collect(),
        lambda_basis: cols(&l),
        lambda_star_basis: cols(&inv_t),
        det_l,
        frame_bound_prediction: 1.0 / det_l.abs(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PackingViolation {
    pub a: Vec<f64>,
    pub shift: Vec<i64>,
    pub preimage: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PackingReport {
    pub passed: bool,
    /// Smallest distance between a shifted sample and an unshifted one.
    pub slack: f64,
    pub samples: usize,
    pub shifts_tested: usize,
    pub violations: Vec<PackingViolation>,
}

/// Checks that the Lambda*-translates of beta_J(F_eps) are disjoint.
///
/// Every sample xi of the half-open box image is shifted by each nonzero
/// lattice vector that could land inside the image's bounding box; a shifted
/// point whose Newton preimage lies in the half-open box is a violation.
pub fn check_packing(
    inverse: &ChartInverse,
    lattice: &LatticePair,
    grid_n: usize,
) -> Result<PackingReport> {
    let data = inverse.data();
    let eps = inverse.epsilon();
    let dim = data.dim_m();
    let per = capped_resolution(grid_n, dim, 1 << 15);
    let axis: Vec<f64> = (0..per).map(|i| -eps / 2.0 + eps * i as f64 / per as f64).collect();
    let nodes = grid_points(&vec![axis; dim]);
    let images = nodes.iter().map(|a| data.beta(a)).collect::<Result<Vec<_>>>()?;
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in &images {
        for k in 0..dim {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let ext: Vec<f64> = (0..dim).map(|k| hi[k] - lo[k]).collect();
    let span = ext.iter().fold(0.0f64, |m, &v| m.max(v));
    // Samples miss the excluded faces; widen by two sample steps.
    let pad = 2.0 * span / per as f64 + 1e-9 * span.max(1.0);
    // Candidate shifts m with v = L^{-T} m inside the difference box.
    let l = lattice.l();
    let inv_t = lattice.l_inv_t();
    let lt_norm = (0..dim).map(|r| l.column(r).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0f64, f64::max);
    let bound = (lt_norm * (span + pad)).ceil() as i64 + 1;
    if bound > 50 {
        return Err(Error::Lattice(format!("lattice too fine for the packing check (|m| up to {bound})")));
    }
    let range: Vec<f64> = (-bound..=bound).map(|v| v as f64).collect();
    let shifts: Vec<(Vec<i64>, Vec<f64>)> = grid_points(&vec![range; dim])
        .into_iter()
        .filter(|m| m.iter().any(|&v| v != 0.0))
        .filter_map(|m| {
            let v: Vec<f64> = (0..dim).map(|r| (0..dim).map(|c| inv_t[(r, c)] * m[c]).sum()).collect();
            if v.iter().zip(&ext).all(|(x, e)| x.abs() <= e + pad) {
                Some((m.iter().map(|&x| x as i64).collect(), v))
            } else {
                None
            }
        })
        .collect();
    // Spatial hash of samples for the slack.
    let cell = (span / per as f64).max(1e-300) * 2.0;
    let key = |p: &[f64]| -> Vec<i64> { p.iter().map(|v| (v / cell).floor() as i64).collect() };
    let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (i, p) in images.iter().enumerate() {
        cells.entry(key(p)).or_default().push(i);
    }
    let offsets = grid_points(&vec![vec![-1.0, 0.0, 1.0]; dim]);
    let half = eps / 2.0;
    let results: Vec<(f64, Vec<PackingViolation>)> = images
        .par_iter()
        .zip(nodes.par_iter())
        .map(|(xi, a)| {
            let mut slack = f64::INFINITY;
            let mut viol = Vec::new();
            for (m, v) in &shifts {
                let t: Vec<f64> = xi.iter().zip(v).map(|(x, y)| x + y).collect();
                let outside = t.iter().enumerate().any(|(k, &x)| x < lo[k] - pad || x > hi[k] + pad);
                let kt = key(&t);
                let mut near = cell;
                for off in &offsets {
                    let kk: Vec<i64> = kt.iter().zip(off).map(|(x, y)| x + *y as i64).collect();
                    if let Some(list) = cells.get(&kk) {
                        for &j in list {
                            near = near.min(dist(&images[j], &t));
                        }
                    }
                }
                slack = slack.min(near);
                if outside {
                    continue;
                }
                if let Some(sol) = inverse.solve(&t) {
                    let inside = sol.a.iter().all(|&x| x >= -half - 1e-12 && x < half - 1e-12);
                    if inside {
                        viol.push(PackingViolation { a: a.clone(), shift: m.clone(), preimage: sol.a });
                    }
                }
            }
            (slack, viol)
        })
        .collect();
    let mut slack = f64::INFINITY;
    let mut violations = Vec::new();
    for (s, v) in results {
        slack = slack.min(s);
        for x in v {
            if violations.len() < 10 {
                violations.push(x);
            }
        }
    }
    if shifts.is_empty() {
        slack = slack.min(span);
    }
    Ok(PackingReport {
        passed: violations.is_empty(),
        slack: if slack.is_finite() { slack } else { span },
        samples: images.len(),
        shifts_tested: shifts.len(),
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;
    use crate::orbit::orbital_data;

    const E: f64 = std::f64::consts::E;

    fn data(spec: &GroupSpec) -> OrbitalData {
        orbital_data(spec, spec.lambda()).unwrap()
    }

    #[test]
    fn toy_certifies_eps_one() {
        let toy = gallery::toy3d();
        let c = epsilon_search(&data(&toy), 1.0, 64).unwrap();
        assert_eq!(c.epsilon, 1.0);
        assert!(c.min_abs_jac_det > 0.0 && c.injectivity_margin > 0.0);
    }

    #[test]
    fn folded_map_is_rejected() {
        // beta(a) = a e^{-a} for solvext J=(2) has a fold at a = 1.
        let s = gallery::solvext();
        let d = crate::orbit::orbital_data_with(&s, s.lambda(), Some(&[2])).unwrap();
        let c = epsilon_search(&d, 4.0, 64).unwrap();
        assert!(c.epsilon < 2.0 && c.epsilon > 1.9, "{}", c.epsilon);
        assert!(!c.attempts[0].accepted);
    }

    #[test]
    fn toy_delta() {
        let toy = gallery::toy3d();
        let d = delta_sup(&data(&toy), 1.0, 64).unwrap();
        assert!((d.grid_max - E.sqrt() / 2.0).abs() < 1e-12);
        assert!((d.argmax[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn heisenberg_delta_scales() {
        let h = gallery::heisenberg();
        for eps in [0.25, 1.0, 3.0] {
            let d = delta_sup(&data(&h), eps, 33).unwrap();
            assert!((d.grid_max - eps / 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn example5d_delta_is_e() {
        let ex = gallery::example5d();
        let d = delta_sup(&data(&ex), 1.0, 64).unwrap();
        assert!((d.grid_max - E).abs() < 1e-12);
    }

    #[test]
    fn lattice_prediction() {
        let lp = build_lattices(E.sqrt() / 2.0, 1, None).unwrap();
        assert!((lp.frame_bound_prediction - E.sqrt()).abs() < 1e-15);
        assert!((lp.lambda_star_basis[0][0] - E.sqrt()).abs() < 1e-15);
        assert!((lp.frame_bound_prediction * lp.det_l.abs() - 1.0).abs() < 1e-15);
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(build_lattices(1.0, 2, Some(&sing)), Err(Error::Lattice(_))));
    }

    #[test]
    fn toy_packing_cases() {
        let toy = gallery::toy3d();
        let d = data(&toy);
        let inv = ChartInverse::new(&d, 1.0).unwrap();
        let default = build_lattices(E.sqrt() / 2.0, 1, None).unwrap();
        assert!(check_packing(&inv, &default, 256).unwrap().passed);
        let coarse = build_lattices(1.0, 1, Some(&DMatrix::from_element(1, 1, 2.0))).unwrap();
        assert!(!check_packing(&inv, &coarse, 256).unwrap().passed);
        let c = 2.0 * E.sqrt() / (1.0 + E);
        let exact = build_lattices(1.0, 1, Some(&DMatrix::from_element(1, 1, c))).unwrap();
        let r = check_packing(&inv, &exact, 256).unwrap();
        assert!(r.passed, "{:?}", r.violations);
        assert!(r.slack < 1e-2, "{r:?}");
    }

    #[test]
    fn newton_inverse_round_trip() {
        let ex = gallery::example5d();
        let d = data(&ex);
        let inv = ChartInverse::new(&d, 1.0).unwrap();
        let a = [0.31, -0.44];
        let xi = d.beta(&a).unwrap();
        let back = inv.invert(&xi).unwrap();
        assert!(dist(&back, &a) < 1e-12);
        assert!(inv.invert(&[100.0, 100.0]).is_err());
    }

    #[test]
    fn commutative_tiling_is_cube_tiling() {
        let t = Tiling::for_spec(&gallery::toeplitz(3), 1.0).unwrap();
        let (k, u) = t.factor(&[2.3, -0.5, 0.49]).unwrap();
        assert_eq!(k, vec![-2, 0, 0]);
        assert!((u[0] - 0.3).abs() < 1e-12 && u[1] == -0.5 && u[2] == 0.49);
        let r = tiling_check(&gallery::toeplitz(3), 1.0, 2000, 1).unwrap();
        assert!(r.passed);
    }
}
