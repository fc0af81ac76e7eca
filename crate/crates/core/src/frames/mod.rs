//! The induced representation on L^2(M), generators, frame coefficients and
//! verification of the frame inequalities.

mod coefficients;
mod generator;
mod verify;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::MAlgebra;
use crate::error::{Error, Result};
use crate::geometry::Tiling;
use crate::measure::rho;
use crate::orbit::OrbitalData;
use crate::quadrature::{grid_points, linspace, tensor_rule};

pub use coefficients::{frame_coefficients, CoeffOptions, CoefficientTable};
pub use generator::{mollifier, smooth_generator, tight_generator, FrameDesign, Generator, GeneratorKind};
pub use verify::{
    densify_gamma_m, upsilon_sum, verify_smooth_frame, verify_tight, DensifyResult, SmoothEntry, SmoothReport,
    TightEntry, TightReport,
};

pub const DEFAULT_ORDER: usize = 24;
/// Per-tile order of [`GridFunction`] nodes.
pub const FUNCTION_ORDER: usize = 32;
pub const DEFAULT_TILE_BUDGET: usize = 4096;

/// `exp(X) e(t)` with `X = sum x_k X_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupElement {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
}

impl GroupElement {
    pub fn identity(n1: usize, n2: usize) -> Self {
        GroupElement { x: vec![0.0; n1], t: vec![0.0; n2] }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.t).all(|v| v.is_finite())
    }
}

/// A function on M given in second-kind coordinates.
pub type SourceFn = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;

/// Quadrature nodes of one tile `gamma^{-1} e(F_eps)`.
#[derive(Clone, Debug)]
pub struct TileNodes {
    pub tile: Vec<i64>,
    /// Second-kind coordinates of the nodes in M.
    pub points: Vec<Vec<f64>>,
    pub values: Vec<Complex64>,
    /// Gauss-Legendre weights times rho.
    pub weights: Vec<f64>,
}

/// Element of L^2(M, mu_M) supported on finitely many tiles.
#[derive(Clone)]
pub struct GridFunction {
    source: SourceFn,
    tiling: Tiling,
    order: usize,
    nodes: Vec<TileNodes>,
}

impl fmt::Debug for GridFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridFunction")
            .field("tiles", &self.tiles())
            .field("order", &self.order)
            .finish()
    }
}

impl GridFunction {
    pub fn new(tiling: Tiling, tiles: impl IntoIterator<Item = Vec<i64>>, order: usize, source: SourceFn) -> Result<Self> {
        let tiles: BTreeSet<Vec<i64>> = tiles.into_iter().collect();
        let n = tiling.dim();
        let h = tiling.spacing() / 2.0;
        let rule = tensor_rule(&vec![-h; n], &vec![h; n], order);
        let dens: Vec<f64> = (0..rule.len()).map(|i| rho(tiling.group(), rule.point(i))).collect::<Result<_>>()?;
        let mut nodes = Vec::with_capacity(tiles.len());
        for k in tiles {
            let mut points = Vec::with_capacity(rule.len());
            let mut values = Vec::with_capacity(rule.len());
            let mut weights = Vec::with_capacity(rule.len());
            for i in 0..rule.len() {
                let m = tiling.point(&k, rule.point(i))?;
                values.push(source(&m));
                points.push(m);
                weights.push(rule.weights[i] * dens[i]);
            }
            nodes.push(TileNodes { tile: k, points, values, weights });
        }
        Ok(GridFunction { source, tiling, order, nodes })
    }

    pub fn tiles(&self) -> Vec<Vec<i64>> {
        self.nodes.iter().map(|t| t.tile.clone()).collect()
    }

    pub fn tiling(&self) -> &Tiling {
        &self.tiling
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[TileNodes] {
        &self.nodes
    }

    pub fn source(&self) -> &SourceFn {
        &self.source
    }

    /// h(m) at an arbitrary point of M.
    pub fn eval(&self, m: &[f64]) -> Complex64 {
        (self.source)(m)
    }

    pub fn norm_sq(&self) -> f64 {
        self.nodes
            .iter()
            .map(|t| t.values.iter().zip(&t.weights).map(|(v, w)| w * v.norm_sqr()).sum::<f64>())
            .sum()
    }

    /// `<self, other>` by quadrature on the tiles of `self`.
    pub fn inner(&self, other: &GridFunction) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for t in &self.nodes {
            for ((p, v), w) in t.points.iter().zip(&t.values).zip(&t.weights) {
                acc += *w * v * other.eval(p).conj();
            }
        }
        acc
    }
}

/// Tiles of the tiling met by `e(t) . tile(k)` for each input tile.
fn translated_tiles(tiling: &Tiling, tiles: &[Vec<i64>], t: &[f64]) -> Result<BTreeSet<Vec<i64>>> {
    let n = tiling.dim();
    let h = tiling.spacing() / 2.0 * (1.0 - 1e-9);
    let per = if tiling.group().is_abelian() { 3 } else { 9 };
    let samples = grid_points(&vec![linspace(-h, h, per); n]);
    let mut out = BTreeSet::new();
    for k in tiles {
        for u in &samples {
            let m = tiling.point(k, u)?;
            let moved = tiling.group().mul(t, &m)?;
            out.insert(tiling.factor(&moved)?.0);
        }
    }
    Ok(out)
}

/// `(pi(g) h)(e(a)) = exp(2 pi i <theta(a), x>) h(e(t)^{-1} e(a))`, re-tiled.
pub fn rep_apply(data: &OrbitalData, g: &GroupElement, h: &GridFunction) -> Result<GridFunction> {
    rep_apply_with_budget(data, g, h, DEFAULT_TILE_BUDGET)
}

pub fn rep_apply_with_budget(data: &OrbitalData, g: &GroupElement, h: &GridFunction, budget: usize) -> Result<GridFunction> {
    if !g.is_finite() {
        return Err(Error::domain("group element has non-finite coordinates"));
    }
    let tiling = h.tiling().clone();
    if g.t.len() != tiling.dim() || g.x.len() != data.coadjoint().dim_p() {
        return Err(Error::domain("group element has the wrong dimension"));
    }
    let tiles = translated_tiles(&tiling, &h.tiles(), &g.t)?;
    if tiles.len() > budget {
        return Err(Error::TileBudget(format!(
            "translated support needs {} tiles, budget is {budget}",
            tiles.len()
        )));
    }
    let malg: MAlgebra = tiling.group().clone();
    let t_inv = malg.inv(&g.t)?;
    let x = g.x.clone();
    let map = data.coadjoint().clone();
    let lambda = data.lambda().to_vec();
    let inner = h.source().clone();
    let trivial_x = x.iter().all(|&v| v == 0.0);
    let source: SourceFn = Arc::new(move |a: &[f64]| {
        let moved = match malg.mul(&t_inv, a) {
            Ok(v) => v,
            Err(_) => return Complex64::new(f64::NAN, f64::NAN),
        };
        let val = inner(&moved);
        if trivial_x || val == Complex64::new(0.0, 0.0) {
            return val;
        }
        match map.theta(&lambda, a) {
            Ok(th) => {
                let q: f64 = th.iter().zip(&x).map(|(u, v)| u * v).sum();
                val * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * q)
            }
            Err(_) => Complex64::new(f64::NAN, f64::NAN),
        }
    });
    GridFunction::new(tiling, tiles, h.order(), source)
}

/// One tile piece of a test function: polynomial times a compact bump.
#[derive(Clone, Debug)]
struct Piece {
    center: Vec<f64>,
    radius: Vec<f64>,
    coeffs: Vec<Complex64>,
    scale: f64,
}

const BUMP_POWER: i32 = 12;

impl Piece {
    fn eval(&self, u: &[f64]) -> Complex64 {
        let mut bump = 1.0;
        for ((&x, &c), &r) in u.iter().zip(&self.center).zip(&self.radius) {
            let s = (x - c) / r;
            if s.abs() >= 1.0 {
                return Complex64::new(0.0, 0.0);
            }
            bump *= (1.0 - s * s).powi(BUMP_POWER);
        }
        let mut p = self.coeffs[0];
        for (j, &x) in u.iter().enumerate() {
            p += self.coeffs[j + 1] * (x / self.scale);
        }
        p * bump
    }
}

/// Seeded test functions, each supported in the interiors of
/// `tiles_per_function` distinct tiles near the identity.
pub fn test_functions(
    tiling: &Tiling,
    count: usize,
    tiles_per_function: usize,
    seed: u64,
    order: usize,
) -> Result<Vec<GridFunction>> {
    let n = tiling.dim();
    let eps = tiling.spacing();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reach: i64 = if n == 1 { 3 } else { 1 };
    let pool: Vec<Vec<i64>> = grid_points(&vec![(-reach..=reach).map(|v| v as f64).collect(); n])
        .into_iter()
        .map(|v| v.into_iter().map(|x| x as i64).collect())
        .collect();
    if tiles_per_function > pool.len() {
        return Err(Error::TileBudget(format!(
            "asked for {tiles_per_function} tiles per test function, only {} available near the identity",
            pool.len()
        )));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut chosen: BTreeSet<Vec<i64>> = BTreeSet::new();
        while chosen.len() < tiles_per_function {
            chosen.insert(pool[rng.gen_range(0..pool.len())].clone());
        }
        let mut pieces: HashMap<Vec<i64>, Piece> = HashMap::new();
        for k in &chosen {
            let center: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.05..0.05) * eps).collect();
            let radius: Vec<f64> = center.iter().map(|c| 0.45 * eps - c.abs()).collect();
            let coeffs: Vec<Complex64> =
                (0..=n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            pieces.insert(k.clone(), Piece { center, radius, coeffs, scale: eps });
        }
        let tl = tiling.clone();
        let source: SourceFn = Arc::new(move |m: &[f64]| match tl.factor(m) {
            Ok((k, u)) => pieces.get(&k).map_or(Complex64::new(0.0, 0.0), |p| p.eval(&u)),
            Err(_) => Complex64::new(f64::NAN, f64::NAN),
        });
        out.push(GridFunction::new(tiling.clone(), chosen, order, source)?);
    }
    Ok(out)
}

/// The indicator of the tile `gamma(k)^{-1} e(F_eps)`.
pub fn tile_indicator(tiling: &Tiling, k: Vec<i64>, order: usize) -> Result<GridFunction> {
    let tl = tiling.clone();
    let target = k.clone();
    let source: SourceFn = Arc::new(move |m: &[f64]| match tl.factor(m) {
        Ok((kk, _)) if kk == target => Complex64::new(1.0, 0.0),
        _ => Complex64::new(0.0, 0.0),
    });
    GridFunction::new(tiling.clone(), [k], order, source)
}
