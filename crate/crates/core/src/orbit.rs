//! Coadjoint data: C(a), theta_lambda, the admissible index tuples and the
//! chart beta_J.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::algebra::GroupSpec;
use crate::autodiff::{jacobian, value_and_jacobian, Dual, Real};
use crate::error::{Error, Result};
use crate::linalg::{det, exp_matrix, Mat};

/// Upper bound on the number of enumerated index tuples.
pub const MAX_TUPLES: usize = 100_000;
/// Relative determinant threshold for admissibility.
pub const RANK_TOL: f64 = 1e-10;
/// Relative gap below which two |det| values are treated as tied.
const TIE_TOL: f64 = 1e-12;

/// `a ↦ C(a) = e^{-a_n N_n} ··· e^{-a_1 N_1}` with `N_k = ad(A_k)|_p`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoadjointMap {
    gens: Vec<Mat<f64>>,
    commuting: bool,
}

impl CoadjointMap {
    pub fn new(spec: &GroupSpec) -> Self {
        let gens = spec.p_generators();
        let commuting = gens.iter().enumerate().all(|(i, a)| {
            gens[i + 1..].iter().all(|b| {
                let ab = a.matmul(b);
                let ba = b.matmul(a);
                ab.data.iter().zip(&ba.data).all(|(x, y)| (x - y).abs() <= 1e-15 * (1.0 + x.abs()))
            })
        });
        CoadjointMap { gens, commuting }
    }

    pub fn dim_p(&self) -> usize {
        self.gens.first().map_or(0, |g| g.rows)
    }

    pub fn dim_m(&self) -> usize {
        self.gens.len()
    }

    pub fn c_matrix<T: Real>(&self, a: &[T]) -> Result<Mat<T>> {
        let n1 = self.dim_p();
        if a.len() != self.gens.len() {
            return Err(Error::Structural(format!("expected {} coordinates, got {}", self.gens.len(), a.len())));
        }
        if self.commuting {
            // Commuting factors: the ordered product is the exponential of the sum.
            let mut s = Mat::<T>::zeros(n1, n1);
            for (g, &ak) in self.gens.iter().zip(a) {
                for (dst, &v) in s.data.iter_mut().zip(&g.data) {
                    if v != 0.0 {
                        *dst -= ak.scale(v);
                    }
                }
            }
            return exp_matrix(&s);
        }
        let mut c = Mat::<T>::identity(n1);
        for (g, &ak) in self.gens.iter().zip(a) {
            let e = exp_matrix(&Mat::<T>::from_f64(g).scaled(-ak))?;
            c = e.matmul(&c);
        }
        Ok(c)
    }

    /// `theta_k = <lambda, C(a) X_k>`.
    pub fn theta<T: Real>(&self, lambda: &[f64], a: &[T]) -> Result<Vec<T>> {
        let c = self.c_matrix(a)?;
        let n1 = self.dim_p();
        Ok((0..n1)
            .map(|k| {
                let mut s = T::zero();
                for (i, &l) in lambda.iter().enumerate() {
                    if l != 0.0 {
                        s += c.get(i, k).scale(l);
                    }
                }
                s
            })
            .collect())
    }
}

pub fn coadjoint_factor(spec: &GroupSpec, a: &[f64]) -> Result<Mat<f64>> {
    CoadjointMap::new(spec).c_matrix(a)
}

pub fn theta(spec: &GroupSpec, lambda: &[f64], a: &[f64]) -> Result<Vec<f64>> {
    CoadjointMap::new(spec).theta(lambda, a)
}

/// Jacobian of theta_lambda at `a` (n1 x n2).
pub fn theta_jacobian(map: &CoadjointMap, lambda: &[f64], a: &[f64]) -> Result<DMatrix<f64>> {
    let mut err = None;
    let j = jacobian(
        |x: &[Dual]| match map.theta(lambda, x) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                vec![Dual::constant(0.0); map.dim_p()]
            }
        },
        a,
    );
    match err {
        Some(e) => Err(e),
        None => Ok(j),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// 0-based indices.
    pub indices: Vec<usize>,
    pub det: f64,
    pub admissible: bool,
}

/// Chosen chart J with the full determinant table.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitalData {
    map: CoadjointMap,
    lambda: Vec<f64>,
    /// 0-based, strictly increasing.
    pub j: Vec<usize>,
    /// D = Jac theta(0), n1 x n2.
    pub d: DMatrix<f64>,
    pub candidates: Vec<Candidate>,
    pub chosen_det: f64,
}

/// JSON shape of [`OrbitalData`] (1-based indices).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitalSummary {
    #[serde(rename = "J")]
    pub j: Vec<usize>,
    #[serde(rename = "detD_J")]
    pub det_d_j: f64,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
    pub candidates: Vec<CandidateSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    #[serde(rename = "I")]
    pub i: Vec<usize>,
    pub det: f64,
    pub admissible: bool,
}

fn combinations(n: usize, k: usize) -> Result<Vec<Vec<usize>>> {
    let mut count: f64 = 1.0;
    for i in 0..k {
        count = count * (n - i) as f64 / (i + 1) as f64;
    }
    if count.round() > MAX_TUPLES as f64 {
        return Err(Error::Structural(format!("C({n},{k}) = {count:.0} index tuples exceeds the cap {MAX_TUPLES}")));
    }
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if cur[i] < n - k + i {
                cur[i] += 1;
                for j in i + 1..k {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn submatrix_det(d: &DMatrix<f64>, rows: &[usize]) -> (f64, f64) {
    let k = rows.len();
    let sub = DMatrix::from_fn(k, k, |r, c| d[(rows[r], c)]);
    let norms: f64 = (0..k).map(|r| sub.row(r).norm()).product();
    (det(&sub), norms)
}

/// Computes D, enumerates all index tuples and selects J: the spec's
/// preferred tuple if it has one, otherwise the largest |det| with
/// lexicographic tie-break.
pub fn orbital_data(spec: &GroupSpec, lambda: &[f64]) -> Result<OrbitalData> {
    let pref: Option<Vec<usize>> = spec.preferred_j().map(|j| j.to_vec());
    orbital_data_with(spec, lambda, pref.as_deref())
}

/// As [`orbital_data`] with an explicit 1-based J override.
pub fn orbital_data_with(spec: &GroupSpec, lambda: &[f64], j_override: Option<&[usize]>) -> Result<OrbitalData> {
    let (n1, n2) = (spec.dim_p(), spec.dim_m());
    if lambda.len() != n1 {
        return Err(Error::Schema { field: "lambda".into(), msg: format!("expected length {n1}") });
    }
    if n2 > n1 {
        return Err(Error::RankDeficiency(format!("dim m = {n2} exceeds dim p = {n1}")));
    }
    let map = CoadjointMap::new(spec);
    let d = theta_jacobian(&map, lambda, &vec![0.0; n2])?;
    let tuples = combinations(n1, n2)?;
    let candidates: Vec<Candidate> = tuples
        .into_iter()
        .map(|idx| {
            let (dv, norms) = submatrix_det(&d, &idx);
            let admissible = dv.is_finite() && norms > 0.0 && dv.abs() > RANK_TOL * norms;
            Candidate { indices: idx, det: dv, admissible }
        })
        .collect();
    let admissible: Vec<&Candidate> = candidates.iter().filter(|c| c.admissible).collect();
    if admissible.is_empty() {
        return Err(Error::RankDeficiency(
            "no index tuple has a nonsingular Jacobian block at 0; lambda is not in general position".into(),
        ));
    }
    let chosen = match j_override {
        Some(j) => {
            let zero: Vec<usize> = j.iter().map(|&v| v.wrapping_sub(1)).collect();
            let c = candidates.iter().find(|c| c.indices == zero).ok_or_else(|| Error::Schema {
                field: "J".into(),
                msg: format!("{j:?} is not a strictly increasing tuple of {n2} indices in 1..={n1}"),
            })?;
            if !c.admissible {
                return Err(Error::Schema { field: "J".into(), msg: format!("{j:?} is not admissible (det = {:e})", c.det) });
            }
            c
        }
        None => {
            let best = admissible.iter().map(|c| c.det.abs()).fold(0.0, f64::max);
            admissible
                .iter()
                .find(|c| c.det.abs() >= best * (1.0 - TIE_TOL))
                .copied()
                .expect("non-empty admissible set")
        }
    };
    Ok(OrbitalData {
        map,
        lambda: lambda.to_vec(),
        j: chosen.indices.clone(),
        chosen_det: chosen.det,
        d,
        candidates,
    })
}

impl OrbitalData {
    pub fn dim_m(&self) -> usize {
        self.j.len()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn coadjoint(&self) -> &CoadjointMap {
        &self.map
    }

    pub fn theta<T: Real>(&self, a: &[T]) -> Result<Vec<T>> {
        self.map.theta(&self.lambda, a)
    }

    /// beta_J(a): the J components of theta(a).
    pub fn beta<T: Real>(&self, a: &[T]) -> Result<Vec<T>> {
        let th = self.theta(a)?;
        Ok(self.j.iter().map(|&k| th[k]).collect())
    }

    /// beta_J(a) and its Jacobian (n2 x n2).
    pub fn beta_with_jacobian(&self, a: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let mut err = None;
        let (v, j) = value_and_jacobian(
            |x: &[Dual]| match self.beta(x) {
                Ok(v) => v,
                Err(e) => {
                    err = Some(e);
                    vec![Dual::constant(0.0); self.dim_m()]
                }
            },
            a,
        );
        match err {
            Some(e) => Err(e),
            None => Ok((v, j)),
        }
    }

    pub fn summary(&self) -> OrbitalSummary {
        OrbitalSummary {
            j: self.j.iter().map(|v| v + 1).collect(),
            det_d_j: self.chosen_det,
            d: (0..self.d.nrows()).map(|r| self.d.row(r).iter().copied().collect()).collect(),
            candidates: self
                .candidates
                .iter()
                .map(|c| CandidateSummary { i: c.indices.iter().map(|v| v + 1).collect(), det: c.det, admissible: c.admissible })
                .collect(),
        }
    }
}

/// Zeroes every component outside J (0-based indices).
pub fn projection_apply(j: &[usize], v: &[f64]) -> Vec<f64> {
    v.iter().enumerate().map(|(i, &x)| if j.contains(&i) { x } else { 0.0 }).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeActionFailure {
    pub point: Vec<f64>,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeActionReport {
    pub samples: usize,
    pub min_ratio: f64,
    pub failures: Vec<FreeActionFailure>,
    pub passed: bool,
}

/// Checks `rank Jac theta_lambda(a) = n2` through the singular values.
pub fn free_action_check(spec: &GroupSpec, lambda: &[f64], points: &[Vec<f64>]) -> Result<FreeActionReport> {
    let map = CoadjointMap::new(spec);
    let mut failures = Vec::new();
    let mut min_ratio = f64::INFINITY;
    for p in points {
        let j = theta_jacobian(&map, lambda, p)?;
        let sv = j.singular_values();
        let smax = sv.max();
        let ratio = if smax > 0.0 { sv.min() / smax } else { 0.0 };
        let ratio = if sv.len() < spec.dim_m() { 0.0 } else { ratio };
        min_ratio = min_ratio.min(ratio);
        if !(ratio > 1e-9) {
            failures.push(FreeActionFailure { point: p.clone(), ratio });
        }
    }
    Ok(FreeActionReport { samples: points.len(), min_ratio, passed: failures.is_empty(), failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;

    const E: f64 = std::f64::consts::E;

    #[test]
    fn toy_c_matrix_at_one() {
        let c = coadjoint_factor(&gallery::toy3d(), &[1.0]).unwrap();
        let want = [1.0 / E, -1.0 / E, 0.0, 1.0 / E];
        for (x, y) in c.data.iter().zip(want) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn c_at_zero_is_identity() {
        for (_, spec) in gallery::all() {
            let c = coadjoint_factor(&spec, &vec![0.0; spec.dim_m()]).unwrap();
            assert_eq!(c, Mat::identity(spec.dim_p()));
        }
    }

    #[test]
    fn heisenberg_c_matrix() {
        let a = 0.8;
        let c = coadjoint_factor(&gallery::heisenberg(), &[a]).unwrap();
        assert_eq!(c.data, vec![1.0, -a, 0.0, 1.0]);
    }

    #[test]
    fn theta_values() {
        let toy = gallery::toy3d();
        let t = theta(&toy, toy.lambda(), &[1.0]).unwrap();
        assert!((t[0] - 1.0 / E).abs() < 1e-15 && (t[1] + 1.0 / E).abs() < 1e-15);
        let ex = gallery::example5d();
        assert_eq!(theta(&ex, ex.lambda(), &[0.0, 0.0]).unwrap(), vec![1.0, -1.0, 1.0]);
    }

    #[test]
    fn toy_orbital_data() {
        let toy = gallery::toy3d();
        let plain = orbital_data_with(&toy, toy.lambda(), None).unwrap();
        // D = (-1, -1): both tuples admissible, tie broken to (1).
        assert_eq!(plain.summary().j, vec![1]);
        assert!(plain.candidates.iter().all(|c| c.admissible && (c.det.abs() - 1.0).abs() < 1e-14));
        // The builtin carries the preferred J = (2).
        let data = orbital_data(&toy, toy.lambda()).unwrap();
        assert_eq!(data.j, vec![1]);
        let b = data.beta(&[1.0]).unwrap();
        assert!((b[0] + 1.0 / E).abs() < 1e-15);
    }

    #[test]
    fn example5d_orbital_data() {
        let ex = gallery::example5d();
        let data = orbital_data(&ex, ex.lambda()).unwrap();
        let adm: Vec<Vec<usize>> = data.summary().candidates.into_iter().filter(|c| c.admissible).map(|c| c.i).collect();
        assert_eq!(adm, vec![vec![1, 2], vec![2, 3]]);
        assert_eq!(data.summary().j, vec![2, 3]);
        assert_eq!(data.beta(&[0.0, 0.0]).unwrap(), vec![-1.0, 1.0]);
    }

    #[test]
    fn heisenberg_only_j2() {
        let h = gallery::heisenberg();
        let data = orbital_data(&h, h.lambda()).unwrap();
        assert_eq!(data.summary().j, vec![2]);
        assert!(!data.candidates[0].admissible);
        assert!((data.beta(&[0.5]).unwrap()[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn override_must_be_admissible() {
        let h = gallery::heisenberg();
        assert!(matches!(orbital_data_with(&h, h.lambda(), Some(&[1])), Err(Error::Schema { .. })));
        let ex = gallery::example5d();
        let d = orbital_data_with(&ex, ex.lambda(), Some(&[1, 2])).unwrap();
        assert_eq!(d.j, vec![0, 1]);
    }

    #[test]
    fn zero_lambda_is_rank_deficient() {
        let h = gallery::heisenberg();
        assert!(matches!(orbital_data_with(&h, &[0.0, 0.0], None), Err(Error::RankDeficiency(_))));
    }

    #[test]
    fn projection_examples() {
        assert_eq!(projection_apply(&[1], &[3.0, 4.0]), vec![0.0, 4.0]);
        assert_eq!(projection_apply(&[0, 1], &[3.0, 4.0]), vec![3.0, 4.0]);
        assert_eq!(projection_apply(&[1, 2], &[1.0, 1.0, 1.0]), vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn free_action_flags_zero_lambda() {
        let toy = gallery::toy3d();
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.3 - 0.6]).collect();
        assert!(free_action_check(&toy, toy.lambda(), &pts).unwrap().passed);
        let r = free_action_check(&toy, &[0.0, 0.0], &pts).unwrap();
        assert!(!r.passed && r.failures.len() == 5);
    }

    #[test]
    fn combinations_enumerate_lexicographically() {
        assert_eq!(combinations(4, 2).unwrap(), vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert!(combinations(60, 30).is_err());
    }
}
