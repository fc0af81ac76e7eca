//! Tensor-product Gauss–Legendre rules on boxes.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::legendre::GaussLegendre;

/// Nodes and weights on [-1, 1].
#[derive(Clone, Debug)]
pub struct Rule1 {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Cached Gauss–Legendre rule of the given order, nodes ascending.
pub fn gauss_legendre(order: usize) -> Arc<Rule1> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Rule1>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().expect("quadrature cache").get(&order) {
        return r.clone();
    }
    let rule = if order <= 1 {
        Rule1 { nodes: vec![0.0], weights: vec![2.0] }
    } else {
        let gl = GaussLegendre::new(order).expect("order >= 2");
        let mut pairs: Vec<(f64, f64)> = gl.as_node_weight_pairs().to_vec();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Rule1 { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() }
    };
    let rule = Arc::new(rule);
    cache.lock().expect("quadrature cache").insert(order, rule.clone());
    rule
}

/// Tensor rule on a box: `points` is row-major (`len = weights.len() * dim`).
#[derive(Clone, Debug)]
pub struct TensorRule {
    pub dim: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TensorRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Sum of `w_i f(x_i)`.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        (0..self.len()).map(|i| self.weights[i] * f(self.point(i))).sum()
    }
}

/// Tensor Gauss–Legendre rule of `order` points per axis on `[lo, hi]`.
pub fn tensor_rule(lo: &[f64], hi: &[f64], order: usize) -> TensorRule {
    let dim = lo.len();
    let r = gauss_legendre(order);
    let q = r.nodes.len();
    let total = q.pow(dim as u32);
    let mut points = Vec::with_capacity(total * dim);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        let mut w = 1.0;
        for k in 0..dim {
            let half = 0.5 * (hi[k] - lo[k]);
            let mid = 0.5 * (hi[k] + lo[k]);
            points.push(mid + half * r.nodes[idx[k]]);
            w *= half * r.weights[idx[k]];
        }
        weights.push(w);
        for k in (0..dim).rev() {
            idx[k] += 1;
            if idx[k] < q {
                break;
            }
            idx[k] = 0;
        }
    }
    TensorRule { dim, points, weights }
}

/// Composite rule: each axis split into `panels` equal pieces.
pub fn composite_rule(lo: &[f64], hi: &[f64], order: usize, panels: usize) -> TensorRule {
    let dim = lo.len();
    let panels = panels.max(1);
    let mut out = TensorRule { dim, points: Vec::new(), weights: Vec::new() };
    let total = panels.pow(dim as u32);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        let plo: Vec<f64> = (0..dim).map(|k| lo[k] + (hi[k] - lo[k]) * idx[k] as f64 / panels as f64).collect();
        let phi: Vec<f64> = (0..dim).map(|k| lo[k] + (hi[k] - lo[k]) * (idx[k] + 1) as f64 / panels as f64).collect();
        let r = tensor_rule(&plo, &phi, order);
        out.points.extend(r.points);
        out.weights.extend(r.weights);
        for k in (0..dim).rev() {
            idx[k] += 1;
            if idx[k] < panels {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

/// `n` equispaced nodes covering the closed interval `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Cartesian product of per-axis node lists, row-major.
pub fn grid_points(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = axes.len();
    let total: usize = axes.iter().map(|a| a.len()).product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        out.push((0..dim).map(|k| axes[k][idx[k]]).collect());
        for k in (0..dim).rev() {
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}
