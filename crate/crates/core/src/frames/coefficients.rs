use std::collections::BTreeSet;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generator::{FrameDesign, Generator, GeneratorKind};
use super::GridFunction;
use crate::error::{Error, Result};
use crate::geometry::Tiling;
use crate::nufft::Nufft;
use crate::quadrature::{grid_points, linspace, tensor_rule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoeffOptions {
    /// Fixed modulation cut-off; `None` selects it from the shell criterion.
    pub k_mod: Option<usize>,
    /// Stop when the last shell carries less than this fraction of the energy.
    pub shell_tol: f64,
    pub min_order: usize,
    /// Keep every coefficient (for CSV output).
    pub keep: bool,
}

impl Default for CoeffOptions {
    fn default() -> Self {
        CoeffOptions { k_mod: None, shell_tol: 1e-4, min_order: super::DEFAULT_ORDER, keep: false }
    }
}

/// Largest automatic cut-off per dimension of M.
pub fn k_cap(dim: usize) -> usize {
    match dim {
        1 => 256,
        2 => 96,
        3 => 24,
        _ => 8,
    }
}

const K_START: usize = 4;

const DIRECT_LIMIT: usize = 1 << 22;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    pub k_mod: usize,
    pub order: usize,
    pub gamma_spacing: f64,
    /// Gamma_M indices that meet the support of h.
    pub gammas: Vec<Vec<i64>>,
    /// Per gamma, coefficients over `k in [-K, K]^{n2}` (row-major), when kept.
    pub coeffs: Vec<Vec<Complex64>>,
    pub energy: f64,
    pub shell_energy: f64,
    /// Tail estimate: energy of the last shell `max_j |k_j| = K`.
    pub tail: f64,
    pub tail_ok: bool,
    pub suggested_k: Option<usize>,
}

/// Gamma_M indices `k` (spacing of the generator) for which
/// `gamma(k)^{-1} e(supp gen)` meets the tiles of `h`.
pub fn relevant_gammas(h: &GridFunction, gen: &Generator, design: &FrameDesign) -> Result<Vec<Vec<i64>>> {
    let tiling = h.tiling();
    let aligned = (gen.gamma_spacing - tiling.spacing()).abs() <= 1e-15 * tiling.spacing()
        && (gen.half_width - tiling.spacing() / 2.0).abs() <= 1e-15 * tiling.spacing();
    if aligned {
        return Ok(h.tiles());
    }
    let n = design.dim();
    let gt = Tiling::new(tiling.group().clone(), gen.gamma_spacing)?;
    let sigma = gen.gamma_spacing;
    let half_t = tiling.spacing() / 2.0;
    let per = ((2.0 * tiling.spacing() / sigma).ceil() as usize + 1).max(3);
    let samples = grid_points(&vec![linspace(-half_t, half_t, per); n]);
    let reach = (gen.half_width / sigma).ceil() as i64 + 1;
    let offsets: Vec<Vec<i64>> = grid_points(&vec![(-reach..=reach).map(|v| v as f64).collect(); n])
        .into_iter()
        .map(|o| o.into_iter().map(|v| v as i64).collect())
        .collect();
    let hw = gen.half_width;
    let mut out = BTreeSet::new();
    for tile in h.tiles() {
        for u in &samples {
            let m = tiling.point(&tile, u)?;
            let (k0, _) = gt.factor(&m)?;
            for off in &offsets {
                let k: Vec<i64> = k0.iter().zip(off).map(|(a, b)| a + b).collect();
                if out.contains(&k) {
                    continue;
                }
                let a = gt.act(&k, &m)?;
                // Generous: the sample grid only approximates the support.
                if a.iter().all(|v| v.abs() <= hw + sigma) {
                    out.insert(k);
                }
            }
        }
    }
    Ok(out.into_iter().collect())
}

struct NodeSet {
    points: Vec<Vec<f64>>,
    /// Quadrature weight times rho times the generator.
    weights: Vec<f64>,
    /// Per axis j, per node: `eta_j`.
    eta: Vec<Vec<f64>>,
}

fn node_set(design: &FrameDesign, gen: &Generator, order: usize) -> Result<NodeSet> {
    let n = design.dim();
    let hw = gen.half_width;
    let rule = tensor_rule(&vec![-hw; n], &vec![hw; n], order);
    let evals: Vec<Result<(f64, Vec<f64>)>> = (0..rule.len())
        .into_par_iter()
        .map(|i| {
            let a = rule.point(i);
            let w = rule.weights[i] * design.densities().rho(a)? * gen.value(design, a)?;
            Ok((w, design.eta(a)?))
        })
        .collect();
    let mut weights = Vec::with_capacity(rule.len());
    let mut eta = vec![Vec::with_capacity(rule.len()); n];
    for e in evals {
        let (w, et) = e?;
        weights.push(w);
        for j in 0..n {
            eta[j].push(et[j]);
        }
    }
    let points = (0..rule.len()).map(|i| rule.point(i).to_vec()).collect();
    Ok(NodeSet { points, weights, eta })
}

/// Largest extent of eta_j over the generator box, from a coarse grid.
fn eta_extent(design: &FrameDesign, gen: &Generator) -> Result<f64> {
    let n = design.dim();
    let hw = gen.half_width;
    let pts = grid_points(&vec![linspace(-hw, hw, 9); n]);
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for p in &pts {
        let e = design.eta(p)?;
        for j in 0..n {
            lo[j] = lo[j].min(e[j]);
            hi[j] = hi[j].max(e[j]);
        }
    }
    Ok((0..n).map(|j| hi[j] - lo[j]).fold(0.0, f64::max))
}

/// Phase tables `P[j][k + K][i] = exp(-2 pi i eta_j(a_i) k)`.
fn phase_tables(nodes: &NodeSet, k: usize) -> Vec<Vec<Vec<Complex64>>> {
    let tau = 2.0 * std::f64::consts::PI;
    nodes
        .eta
        .iter()
        .map(|eta_j| {
            (-(k as i64)..=(k as i64))
                .map(|kk| eta_j.iter().map(|&e| Complex64::from_polar(1.0, -tau * e * kk as f64)).collect())
                .collect()
        })
        .collect()
}

/// All `sum_i v_i prod_j P[j][k_j][i]`, row-major in `k`.
fn contract(v: &[Complex64], phases: &[Vec<Vec<Complex64>>], level: usize, out: &mut Vec<Complex64>) {
    let table = &phases[level];
    if level + 1 == phases.len() {
        for row in table {
            let mut acc = Complex64::new(0.0, 0.0);
            for (a, b) in v.iter().zip(row) {
                acc += a * b;
            }
            out.push(acc);
        }
        return;
    }
    let mut w = vec![Complex64::new(0.0, 0.0); v.len()];
    for row in table {
        for ((o, a), b) in w.iter_mut().zip(v).zip(row) {
            *o = a * b;
        }
        contract(&w, phases, level + 1, out);
    }
}

fn is_shell(idx: usize, k: usize, n: usize) -> bool {
    let side = 2 * k + 1;
    let mut i = idx;
    for _ in 0..n {
        let c = i % side;
        if c == 0 || c == side - 1 {
            return true;
        }
        i /= side;
    }
    false
}

struct Pass {
    coeffs: Vec<Vec<Complex64>>,
    energy: f64,
    shell: f64,
    order: usize,
}

fn run_pass(
    h: &GridFunction,
    gen: &Generator,
    design: &FrameDesign,
    gammas: &[Vec<i64>],
    k: usize,
    min_order: usize,
    extent: f64,
    keep: bool,
) -> Result<Pass> {
    let n = design.dim();
    let cycles = (k as f64 * extent).ceil() as usize;
    let order = min_order.max(12 + 2 * cycles);
    let nodes = node_set(design, gen, order)?;
    let modes = (2 * k + 1).pow(n as u32);
    // Direct contraction costs modes * nodes; past this the NUFFT wins.
    let fast = modes.saturating_mul(nodes.points.len()) > DIRECT_LIMIT;
    let phases = if fast { Vec::new() } else { phase_tables(&nodes, k) };
    let plan = fast.then(|| {
        let tau = 2.0 * std::f64::consts::PI;
        let pts: Vec<Vec<f64>> =
            (0..nodes.points.len()).map(|i| nodes.eta.iter().map(|e| tau * e[i]).collect()).collect();
        Nufft::new(&pts, k)
    });
    let gt = Tiling::new(h.tiling().group().clone(), gen.gamma_spacing)?;
    let per_gamma: Vec<Result<(Vec<Complex64>, f64, f64)>> = gammas
        .par_iter()
        .map(|g| {
            let mut v = Vec::with_capacity(nodes.points.len());
            for (p, &w) in nodes.points.iter().zip(&nodes.weights) {
                if w == 0.0 {
                    v.push(Complex64::new(0.0, 0.0));
                    continue;
                }
                let m = gt.point(g, p)?;
                v.push(h.eval(&m) * w);
            }
            let mut out = Vec::with_capacity(modes);
            if v.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
                out.resize(modes, Complex64::new(0.0, 0.0));
            } else if let Some(p) = &plan {
                out = p.apply(&v);
            } else {
                contract(&v, &phases, 0, &mut out);
            }
            let mut e = 0.0;
            let mut s = 0.0;
            for (i, c) in out.iter().enumerate() {
                let q = c.norm_sqr();
                e += q;
                if is_shell(i, k, n) {
                    s += q;
                }
            }
            Ok((if keep { out } else { Vec::new() }, e, s))
        })
        .collect();
    let mut coeffs = Vec::with_capacity(gammas.len());
    let (mut energy, mut shell) = (0.0, 0.0);
    for r in per_gamma {
        let (c, e, s) = r?;
        coeffs.push(c);
        energy += e;
        shell += s;
    }
    if !energy.is_finite() {
        return Err(Error::domain("frame coefficients are not finite"));
    }
    Ok(Pass { coeffs, energy, shell, order })
}

/// `<h, pi(gamma^{-1} exp(X)) gen>` for every relevant gamma and every
/// `X = sum (L k)_j X_{J_j}` with `max |k_j| <= K`.
pub fn frame_coefficients(
    h: &GridFunction,
    gen: &Generator,
    design: &FrameDesign,
    opts: &CoeffOptions,
) -> Result<CoefficientTable> {
    if gen.kind == GeneratorKind::TightIndicator && (gen.gamma_spacing - design.epsilon()).abs() > 1e-15 {
        return Err(Error::domain("the indicator generator is used with Gamma_M of spacing eps"));
    }
    let n = design.dim();
    let gammas = relevant_gammas(h, gen, design)?;
    let extent = eta_extent(design, gen)?;
    let cap = k_cap(n);
    let mut k = opts.k_mod.unwrap_or(K_START.min(cap)).max(1);
    loop {
        let pass = run_pass(h, gen, design, &gammas, k, opts.min_order, extent, opts.keep)?;
        let converged = pass.shell <= opts.shell_tol * pass.energy;
        if converged || opts.k_mod.is_some() || k >= cap {
            return Ok(CoefficientTable {
                k_mod: k,
                order: pass.order,
                gamma_spacing: gen.gamma_spacing,
                gammas,
                coeffs: pass.coeffs,
                energy: pass.energy,
                shell_energy: pass.shell,
                tail: pass.shell,
                tail_ok: converged,
                suggested_k: if converged { None } else { Some(2 * k) },
            });
        }
        k = (2 * k).min(cap);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{test_functions, tile_indicator, tight_generator};
    use crate::gallery;
    use crate::geometry::build_lattices;
    use crate::orbit::orbital_data;

    fn heis() -> FrameDesign {
        let s = gallery::heisenberg();
        let d = orbital_data(&s, s.lambda()).unwrap();
        FrameDesign::new(&s, &d, 1.0, build_lattices(0.5, 1, None).unwrap()).unwrap()
    }

    #[test]
    fn indicator_against_itself() {
        let d = heis();
        let g = tight_generator(&d).unwrap();
        let h = tile_indicator(d.tiling(), vec![0], 24).unwrap();
        let opts = CoeffOptions { k_mod: Some(6), keep: true, ..Default::default() };
        let t = frame_coefficients(&h, &g, &d, &opts).unwrap();
        assert_eq!(t.gammas, vec![vec![0]]);
        let c = &t.coeffs[0];
        assert!((c[6] - 1.0).norm() < 1e-12);
        for (i, z) in c.iter().enumerate() {
            if i != 6 {
                assert!(z.norm() < 1e-12, "k = {}: {z}", i as i64 - 6);
            }
        }
    }

    #[test]
    fn distant_gamma_is_skipped() {
        let d = heis();
        let g = tight_generator(&d).unwrap();
        let h = tile_indicator(d.tiling(), vec![3], 24).unwrap();
        let t = frame_coefficients(&h, &g, &d, &CoeffOptions { k_mod: Some(2), ..Default::default() }).unwrap();
        assert_eq!(t.gammas, vec![vec![3]]);
    }

    #[test]
    fn auto_k_converges_for_bumps() {
        let d = heis();
        let g = tight_generator(&d).unwrap();
        let h = &test_functions(d.tiling(), 1, 2, 1, 24).unwrap()[0];
        let t = frame_coefficients(h, &g, &d, &CoeffOptions::default()).unwrap();
        assert!(t.tail_ok);
        assert!((t.energy / h.norm_sq() - 1.0).abs() < 1e-4, "{}", t.energy / h.norm_sq());
    }
}
