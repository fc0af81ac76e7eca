use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coefficients::{frame_coefficients, CoeffOptions, CoefficientTable};
use super::generator::{FrameDesign, Generator, GeneratorKind};
use super::GridFunction;
use crate::error::{Error, Result};
use crate::geometry::Tiling;
use crate::quadrature::{grid_points, linspace, tensor_rule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TightEntry {
    pub index: usize,
    pub tiles: usize,
    pub norm_sq: f64,
    pub coefficient_energy: f64,
    pub ratio: f64,
    pub rel_error: f64,
    pub tail: f64,
    pub k_mod: usize,
    pub order: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TightReport {
    pub bound: f64,
    pub tol: f64,
    pub entries: Vec<TightEntry>,
    /// Ratio for the first test function with the generator scaled by
    /// `|det L|^{1/2}`.
    pub parseval_ratio: Option<f64>,
    pub parseval_passed: bool,
    /// `(max ratio - min ratio) / bound`.
    pub spread: f64,
    pub spread_passed: bool,
    pub passed: bool,
}

fn entry_from(index: usize, h: &GridFunction, t: &CoefficientTable, bound: f64, tol: f64) -> TightEntry {
    let norm_sq = h.norm_sq();
    let ratio = if norm_sq > 0.0 { t.energy / norm_sq } else { 0.0 };
    let tail_rel = if norm_sq > 0.0 { t.tail / norm_sq } else { 0.0 };
    let rel_error = (ratio - bound).abs() / bound;
    TightEntry {
        index,
        tiles: h.tiles().len(),
        norm_sq,
        coefficient_energy: t.energy,
        ratio,
        rel_error,
        tail: t.tail,
        k_mod: t.k_mod,
        order: t.order,
        passed: norm_sq == 0.0 || (ratio - bound).abs() <= tol * bound + tail_rel,
    }
}

/// Checks `sum |<h, pi(gamma^{-1} exp X) f>|^2 = |det L|^{-1} ||h||^2`.
pub fn verify_tight(
    design: &FrameDesign,
    gen: &Generator,
    tests: &[GridFunction],
    opts: &CoeffOptions,
    tol: f64,
) -> Result<TightReport> {
    if gen.kind != GeneratorKind::TightIndicator {
        return Err(Error::Structural("verify_tight needs the tight indicator generator".into()));
    }
    let bound = design.bound() * gen.scale * gen.scale;
    let mut entries = Vec::with_capacity(tests.len());
    for (i, h) in tests.iter().enumerate() {
        let t = frame_coefficients(h, gen, design, opts)?;
        entries.push(entry_from(i, h, &t, bound, tol));
    }
    let mut parseval_ratio = None;
    let mut parseval_passed = true;
    if let Some(h) = tests.iter().find(|h| h.norm_sq() > 0.0) {
        let scaled = gen.with_scale(gen.scale * design.lattice().det_l.abs().sqrt());
        let t = frame_coefficients(h, &scaled, design, opts)?;
        let n = h.norm_sq();
        let r = t.energy / n;
        parseval_passed = (r - 1.0).abs() <= tol + t.tail / n;
        parseval_ratio = Some(r);
    }
    let ratios: Vec<f64> = entries.iter().filter(|e| e.norm_sq > 0.0).map(|e| e.ratio).collect();
    let spread = if ratios.is_empty() {
        0.0
    } else {
        let mx = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mn = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        (mx - mn) / bound
    };
    let spread_passed = spread <= 2.0 * tol;
    let passed = entries.iter().all(|e| e.passed) && parseval_passed && spread_passed;
    Ok(TightReport { bound, tol, entries, parseval_ratio, parseval_passed, spread, spread_passed, passed })
}

/// `sum_gamma Upsilon(gamma m)^2` over Gamma_M with the given spacing.
pub fn upsilon_sum(design: &FrameDesign, gen: &Generator, spacing: f64, m: &[f64]) -> Result<f64> {
    let gt = Tiling::new(design.tiling().group().clone(), spacing)?;
    upsilon_sum_with(design, gen, &gt, m)
}

fn upsilon_sum_with(design: &FrameDesign, gen: &Generator, gt: &Tiling, m: &[f64]) -> Result<f64> {
    let n = design.dim();
    let sigma = gt.spacing();
    let hw = gen.half_width;
    let (k0, _) = gt.factor(m)?;
    let reach = (hw / sigma).ceil() as i64 + 1;
    let mut acc = 0.0;
    let mut off = vec![-reach; n];
    loop {
        let k: Vec<i64> = k0.iter().zip(&off).map(|(a, b)| a + b).collect();
        let a = gt.act(&k, m)?;
        if a.iter().all(|v| v.abs() < hw) {
            acc += gen.upsilon_sq(design, &a)?;
        }
        let mut j = n;
        loop {
            if j == 0 {
                return Ok(acc);
            }
            j -= 1;
            off[j] += 1;
            if off[j] <= reach {
                break;
            }
            off[j] = -reach;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensifyAttempt {
    pub spacing: f64,
    pub grid_inf: f64,
    pub grid_sup: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensifyResult {
    pub spacing: f64,
    /// Grid infimum of `sum_gamma Upsilon(gamma m)^2`.
    pub a_bound: f64,
    /// Grid supremum.
    pub b_bound: f64,
    pub grid_points: usize,
    pub attempts: Vec<DensifyAttempt>,
}

fn cell_grid_per_axis(dim: usize) -> usize {
    match dim {
        1 => 257,
        2 => 65,
        3 => 17,
        _ => 9,
    }
}

/// Grid inf and sup of `sum_gamma Upsilon(gamma e(u))^2` over the closed
/// cell `[-spacing/2, spacing/2]^{n2}`.
pub fn cell_bounds(design: &FrameDesign, gen: &Generator, spacing: f64) -> Result<(f64, f64, usize)> {
    let n = design.dim();
    let gt = Tiling::new(design.tiling().group().clone(), spacing)?;
    let h = spacing / 2.0;
    let pts = grid_points(&vec![linspace(-h, h, cell_grid_per_axis(n)); n]);
    let vals: Vec<Result<f64>> = pts.par_iter().map(|u| upsilon_sum_with(design, gen, &gt, u)).collect();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for v in vals {
        let v = v?;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi, pts.len()))
}

/// Halves the Gamma_M spacing from `start_spacing` until the covering sum is
/// bounded below on a dense grid of one cell.
pub fn densify_gamma_m(design: &FrameDesign, gen: &Generator, start_spacing: f64) -> Result<DensifyResult> {
    if gen.kind != GeneratorKind::SmoothBump {
        return Err(Error::Structural("densify_gamma_M needs the smooth bump generator".into()));
    }
    let floor = 1e-4 * design.epsilon();
    let mut spacing = start_spacing;
    let mut attempts = Vec::new();
    while spacing >= floor {
        let (lo, hi, npts) = cell_bounds(design, gen, spacing)?;
        let accepted = hi > 0.0 && lo > 1e-8 * hi;
        attempts.push(DensifyAttempt { spacing, grid_inf: lo, grid_sup: hi, accepted });
        if accepted {
            return Ok(DensifyResult { spacing, a_bound: lo, b_bound: hi, grid_points: npts, attempts });
        }
        spacing /= 2.0;
    }
    Err(Error::Certification(format!(
        "Gamma_M spacing fell below {floor:e} before the covering sum became positive (bump too narrow)"
    )))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothEntry {
    pub index: usize,
    pub norm_sq: f64,
    pub coefficient_energy: f64,
    pub ratio: f64,
    /// `int |h|^2 sum_gamma Upsilon(gamma m)^2 dmu` by direct quadrature.
    pub identity_rhs: f64,
    pub identity_rel_error: f64,
    pub tail: f64,
    pub k_mod: usize,
    pub gammas: usize,
    pub identity_passed: bool,
    /// The frame inequalities; the identity is reported separately.
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothReport {
    pub spacing: f64,
    pub a_bound: f64,
    pub b_bound: f64,
    pub tol: f64,
    pub identity_tol: f64,
    pub entries: Vec<SmoothEntry>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub identity_max_rel_error: f64,
    pub identity_passed: bool,
    pub passed: bool,
}

pub const IDENTITY_TOL: f64 = 1e-4;

/// Shell criterion used for the identity: the whole tail, not one shell, has
/// to stay below `IDENTITY_TOL`.
pub const IDENTITY_SHELL_TOL: f64 = 1e-6;

/// Checks `A ||h||^2 <= sum |<h, pi(gamma^{-1} exp X) s>|^2 <= B ||h||^2`
/// and the identity `sum = int |h|^2 sum_gamma Upsilon(gamma m)^2 dmu`.
pub fn verify_smooth_frame(
    design: &FrameDesign,
    gen: &Generator,
    bounds: &DensifyResult,
    tests: &[GridFunction],
    opts: &CoeffOptions,
    tol: f64,
) -> Result<SmoothReport> {
    if gen.kind != GeneratorKind::SmoothBump {
        return Err(Error::Structural("verify_smooth_frame needs the smooth bump generator".into()));
    }
    let n = design.dim();
    let hw = gen.half_width;
    let gt = Tiling::new(design.tiling().group().clone(), gen.gamma_spacing)?;
    // Right-hand side nodes: a finer rule than the coefficient quadrature.
    let rule = tensor_rule(&vec![-hw; n], &vec![hw; n], 2 * opts.min_order.max(super::DEFAULT_ORDER));
    let ups: Vec<f64> = (0..rule.len())
        .into_par_iter()
        .map(|i| {
            let a = rule.point(i);
            Ok(rule.weights[i] * design.densities().rho(a)? * gen.upsilon_sq(design, a)?)
        })
        .collect::<Result<_>>()?;
    let scale2 = gen.scale * gen.scale;
    let copts = CoeffOptions { shell_tol: opts.shell_tol.min(IDENTITY_SHELL_TOL), ..opts.clone() };
    let mut entries = Vec::with_capacity(tests.len());
    for (idx, h) in tests.iter().enumerate() {
        let t = frame_coefficients(h, gen, design, &copts)?;
        let norm_sq = h.norm_sq();
        let rhs_parts: Vec<Result<f64>> = t
            .gammas
            .par_iter()
            .map(|g| {
                let mut acc = 0.0;
                for (i, &u) in ups.iter().enumerate() {
                    if u == 0.0 {
                        continue;
                    }
                    let m = gt.point(g, rule.point(i))?;
                    acc += u * h.eval(&m).norm_sqr();
                }
                Ok(acc)
            })
            .collect();
        let mut rhs = 0.0;
        for r in rhs_parts {
            rhs += r?;
        }
        let ratio = if norm_sq > 0.0 { t.energy / norm_sq } else { 0.0 };
        let tail_rel = if norm_sq > 0.0 { t.tail / norm_sq } else { 0.0 };
        let identity_rel_error = if rhs > 0.0 { (t.energy - rhs).abs() / rhs } else { t.energy.abs() };
        let sandwich = norm_sq == 0.0
            || (ratio >= bounds.a_bound * scale2 * (1.0 - tol) && ratio <= bounds.b_bound * scale2 * (1.0 + tol) + tail_rel);
        let identity_ok = identity_rel_error <= IDENTITY_TOL + if rhs > 0.0 { t.tail / rhs } else { 0.0 };
        entries.push(SmoothEntry {
            index: idx,
            norm_sq,
            coefficient_energy: t.energy,
            ratio,
            identity_rhs: rhs,
            identity_rel_error,
            tail: t.tail,
            k_mod: t.k_mod,
            gammas: t.gammas.len(),
            identity_passed: identity_ok,
            passed: sandwich,
        });
    }
    let live: Vec<&SmoothEntry> = entries.iter().filter(|e| e.norm_sq > 0.0).collect();
    let min_ratio = live.iter().map(|e| e.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = live.iter().map(|e| e.ratio).fold(f64::NEG_INFINITY, f64::max);
    let identity_max_rel_error = entries.iter().map(|e| e.identity_rel_error).fold(0.0, f64::max);
    Ok(SmoothReport {
        spacing: gen.gamma_spacing,
        a_bound: bounds.a_bound,
        b_bound: bounds.b_bound,
        tol,
        identity_tol: IDENTITY_TOL,
        identity_passed: entries.iter().all(|e| e.identity_passed),
        passed: entries.iter().all(|e| e.passed),
        entries,
        min_ratio: if min_ratio.is_finite() { min_ratio } else { 0.0 },
        max_ratio: if max_ratio.is_finite() { max_ratio } else { 0.0 },
        identity_max_rel_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{smooth_generator, test_functions, tight_generator};
    use crate::gallery;
    use crate::geometry::build_lattices;
    use crate::orbit::orbital_data;

    fn heis() -> FrameDesign {
        let s = gallery::heisenberg();
        let d = orbital_data(&s, s.lambda()).unwrap();
        FrameDesign::new(&s, &d, 1.0, build_lattices(0.5, 1, None).unwrap()).unwrap()
    }

    #[test]
    fn heisenberg_is_parseval() {
        let d = heis();
        let g = tight_generator(&d).unwrap();
        let tests = test_functions(d.tiling(), 3, 3, 11, 24).unwrap();
        let r = verify_tight(&d, &g, &tests, &CoeffOptions::default(), 1e-4).unwrap();
        assert!(r.passed, "{r:?}");
        assert!((r.bound - 1.0).abs() < 1e-15);
    }

    #[test]
    fn heisenberg_densify_spacing() {
        let d = heis();
        let g = smooth_generator(&d, 0.5).unwrap();
        let r = densify_gamma_m(&d, &g, 1.0).unwrap();
        assert!(r.spacing <= 0.25 + 1e-15 && r.a_bound > 0.0);
        // Spacing equal to the support diameter leaves zeros on the cell boundary.
        assert_eq!(r.attempts[1].spacing, 0.5);
        assert_eq!(r.attempts[1].grid_inf, 0.0);
        // At most three translates overlap at spacing 1/4.
        let max_ups = (-1.0f64).exp().powi(2);
        assert!(r.b_bound <= 3.0 * max_ups);
    }

    #[test]
    fn heisenberg_smooth_sandwich() {
        let d = heis();
        let g = smooth_generator(&d, 0.5).unwrap();
        let r = densify_gamma_m(&d, &g, 1.0).unwrap();
        let g = g.with_gamma_spacing(r.spacing);
        let tests = test_functions(d.tiling(), 3, 2, 4, 24).unwrap();
        let rep = verify_smooth_frame(&d, &g, &r, &tests, &CoeffOptions::default(), 1e-2).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.identity_max_rel_error < 1e-4);
    }
}
