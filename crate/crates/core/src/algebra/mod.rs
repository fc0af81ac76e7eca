//! Lie algebra g = p + m given by structure constants.

mod bch;
mod validate;

pub use bch::{bch_nu, MAlgebra, MalcevOrder};
pub use validate::{check, validate, CheckResult, ValidationReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// One structure constant: `[Z_i, Z_j]` has coefficient `c` on `Z_k`
/// (1-based indices, matching the JSON schema).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketEntry(pub usize, pub usize, pub usize, pub f64);

/// Structure of the subalgebra m.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MClass {
    Commutative,
    /// Nilpotent of the given step: BCH terminates.
    Nilpotent(usize),
    /// General solvable: BCH truncated at the given order with a guard.
    General(usize),
}

pub const DEFAULT_BCH_ORDER: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    dim_p: usize,
    dim_m: usize,
    basis_names: Vec<String>,
    brackets: Vec<BracketEntry>,
    lambda: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m_class: Option<MClass>,
    #[serde(default, rename = "J", skip_serializing_if = "Option::is_none")]
    preferred_j: Option<Vec<usize>>,
}

/// The algebra, its p/m split and the functional lambda.
///
/// Basis order is `X_1..X_{n1}` (spanning p) followed by `A_1..A_{n2}`
/// (spanning m). Dense structure constants are cached at construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct GroupSpec {
    dim_p: usize,
    dim_m: usize,
    basis_names: Vec<String>,
    brackets: Vec<BracketEntry>,
    lambda: Vec<f64>,
    m_class: MClass,
    m_class_given: bool,
    preferred_j: Option<Vec<usize>>,
    consts: Vec<f64>,
}

impl TryFrom<RawSpec> for GroupSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let mut spec = GroupSpec::new(raw.dim_p, raw.dim_m, raw.basis_names, raw.brackets, raw.lambda, raw.m_class)?;
        if let Some(j) = raw.preferred_j {
            spec = spec.with_preferred_j(j)?;
        }
        Ok(spec)
    }
}

impl From<GroupSpec> for RawSpec {
    fn from(s: GroupSpec) -> Self {
        RawSpec {
            dim_p: s.dim_p,
            dim_m: s.dim_m,
            basis_names: s.basis_names,
            brackets: s.brackets,
            lambda: s.lambda,
            m_class: if s.m_class_given { Some(s.m_class) } else { None },
            preferred_j: s.preferred_j,
        }
    }
}

impl GroupSpec {
    /// Parses the JSON config format. Syntax and shape errors carry the
    /// line and column; semantic errors name the offending field.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawSpec = serde_json::from_str(text)
            .map_err(|e| Error::Parse { line: e.line(), column: e.column(), msg: e.to_string() })?;
        GroupSpec::try_from(raw)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }
}

fn schema(field: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Schema { field: field.into(), msg: msg.into() }
}

impl GroupSpec {
    /// Builds a spec, checking shapes and index ranges. `m_class = None`
    /// infers the class from the brackets inside m.
    pub fn new(
        dim_p: usize,
        dim_m: usize,
        basis_names: Vec<String>,
        brackets: Vec<BracketEntry>,
        lambda: Vec<f64>,
        m_class: Option<MClass>,
    ) -> Result<Self> {
        if dim_p == 0 {
            return Err(schema("dim_p", "must be at least 1"));
        }
        if dim_m == 0 {
            return Err(schema("dim_m", "must be at least 1"));
        }
        let d = dim_p + dim_m;
        if basis_names.len() != d {
            return Err(schema(
                "basis_names",
                format!("expected {d} names (dim_p + dim_m), found {}", basis_names.len()),
            ));
        }
        if lambda.len() != dim_p {
            return Err(schema("lambda", format!("expected length dim_p = {dim_p}, found {}", lambda.len())));
        }
        if let Some(i) = lambda.iter().position(|v| !v.is_finite()) {
            return Err(schema(format!("lambda[{i}]"), "entry is not finite"));
        }
        let mut consts = vec![0.0; d * d * d];
        let mut seen = std::collections::HashSet::new();
        for (n, &BracketEntry(i, j, k, c)) in brackets.iter().enumerate() {
            for (name, idx) in [("i", i), ("j", j), ("k", k)] {
                if idx == 0 || idx > d {
                    return Err(schema(
                        format!("brackets[{n}]"),
                        format!("index {name} = {idx} out of range 1..={d}"),
                    ));
                }
            }
            if !c.is_finite() {
                return Err(schema(format!("brackets[{n}]"), "coefficient is not finite"));
            }
            if !seen.insert((i, j, k)) {
                return Err(schema(format!("brackets[{n}]"), format!("duplicate entry for ({i},{j},{k})")));
            }
            consts[((i - 1) * d + (j - 1)) * d + (k - 1)] = c;
        }
        let m_class_given = m_class.is_some();
        let mut spec = GroupSpec {
            dim_p,
            dim_m,
            basis_names,
            brackets,
            lambda,
            m_class: MClass::Commutative,
            m_class_given,
            preferred_j: None,
            consts,
        };
        spec.m_class = match m_class {
            Some(MClass::General(0)) => return Err(schema("m_class", "bch order must be at least 1")),
            Some(MClass::Nilpotent(0)) => return Err(schema("m_class", "nilpotency step must be at least 1")),
            Some(c) => c,
            None => spec.infer_m_class(),
        };
        Ok(spec)
    }

    /// Records a preferred index tuple J (1-based, strictly increasing).
    pub fn with_preferred_j(mut self, j: Vec<usize>) -> Result<Self> {
        if j.len() != self.dim_m {
            return Err(schema("J", format!("expected {} indices, found {}", self.dim_m, j.len())));
        }
        if j.iter().any(|&v| v == 0 || v > self.dim_p) || j.windows(2).any(|w| w[0] >= w[1]) {
            return Err(schema("J", format!("must be strictly increasing indices in 1..={}", self.dim_p)));
        }
        self.preferred_j = Some(j);
        Ok(self)
    }

    /// Same algebra with a different functional.
    pub fn with_lambda(&self, lambda: Vec<f64>) -> Result<Self> {
        GroupSpec::new(
            self.dim_p,
            self.dim_m,
            self.basis_names.clone(),
            self.brackets.clone(),
            lambda,
            if self.m_class_given { Some(self.m_class) } else { None },
        )
        .map(|mut s| {
            s.preferred_j = self.preferred_j.clone();
            s
        })
    }

    fn infer_m_class(&self) -> MClass {
        let m = MAlgebra::from_spec_unchecked(self);
        if m.is_abelian() {
            return MClass::Commutative;
        }
        match m.nilpotency_step(self.dim_m + 1) {
            Some(s) => MClass::Nilpotent(s),
            None => MClass::General(DEFAULT_BCH_ORDER),
        }
    }

    pub fn dim_p(&self) -> usize {
        self.dim_p
    }
    pub fn dim_m(&self) -> usize {
        self.dim_m
    }
    pub fn dim(&self) -> usize {
        self.dim_p + self.dim_m
    }
    pub fn basis_names(&self) -> &[String] {
        &self.basis_names
    }
    pub fn brackets(&self) -> &[BracketEntry] {
        &self.brackets
    }
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }
    pub fn m_class(&self) -> MClass {
        self.m_class
    }
    /// Preferred J, 1-based.
    pub fn preferred_j(&self) -> Option<&[usize]> {
        self.preferred_j.as_deref()
    }

    /// Coefficient of `Z_k` in `[Z_i, Z_j]` (0-based).
    #[inline]
    pub fn c(&self, i: usize, j: usize, k: usize) -> f64 {
        let d = self.dim();
        self.consts[(i * d + j) * d + k]
    }

    /// `[x, y]` for coordinate vectors in the full basis.
    pub fn bracket(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d];
        for i in 0..d {
            if x[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                if y[j] == 0.0 {
                    continue;
                }
                let s = x[i] * y[j];
                for (k, o) in out.iter_mut().enumerate() {
                    *o += s * self.c(i, j, k);
                }
            }
        }
        out
    }

    /// Matrix of ad(z) on g: column j holds the coordinates of `[z, Z_j]`.
    pub fn ad_matrix(&self, z: &[f64]) -> Mat<f64> {
        let d = self.dim();
        let mut m = Mat::zeros(d, d);
        for i in 0..d {
            if z[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                for k in 0..d {
                    let c = self.c(i, j, k);
                    if c != 0.0 {
                        m.data[k * d + j] += z[i] * c;
                    }
                }
            }
        }
        m
    }

    /// `N_k = ad(A_k)` restricted to p, for k = 1..n2.
    pub fn p_generators(&self) -> Vec<Mat<f64>> {
        (0..self.dim_m)
            .map(|k| {
                let mut z = vec![0.0; self.dim()];
                z[self.dim_p + k] = 1.0;
                ad(self, &z, AdBasis::P).matrix
            })
            .collect()
    }

    /// Name of basis element `i` (0-based).
    pub fn name(&self, i: usize) -> &str {
        &self.basis_names[i]
    }
}

/// Basis on which an [`AdOperator`] acts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdBasis {
    /// Restricted to p (top-left n1 x n1 block).
    P,
    /// Restricted to m (bottom-right n2 x n2 block).
    M,
    Full,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdOperator {
    pub matrix: Mat<f64>,
    pub basis: AdBasis,
}

/// ad(z) for `z` given in the full basis of g, optionally restricted.
pub fn ad(spec: &GroupSpec, z: &[f64], basis: AdBasis) -> AdOperator {
    assert_eq!(z.len(), spec.dim(), "ad: element has wrong dimension");
    let full = spec.ad_matrix(z);
    let (lo, n) = match basis {
        AdBasis::Full => (0, spec.dim()),
        AdBasis::P => (0, spec.dim_p()),
        AdBasis::M => (spec.dim_p(), spec.dim_m()),
    };
    let mut m = Mat::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            m.data[r * n + c] = full.get(lo + r, lo + c);
        }
    }
    AdOperator { matrix: m, basis }
}

/// Functional on p in the dual basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Functional {
    pub coeffs: Vec<f64>,
}

impl Functional {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("functional has non-finite entries"));
        }
        if coeffs.iter().all(|&v| v == 0.0) {
            return Err(Error::domain("functional is identically zero"));
        }
        Ok(Functional { coeffs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;

    #[test]
    fn toy_ad_on_p() {
        let spec = gallery::toy3d();
        let a = 0.7;
        let m = ad(&spec, &[0.0, 0.0, a], AdBasis::P).matrix;
        assert_eq!(m.data, vec![a, a, 0.0, a]);
    }

    #[test]
    fn ad_of_zero_is_zero() {
        let spec = gallery::example5d();
        let m = ad(&spec, &vec![0.0; spec.dim()], AdBasis::Full).matrix;
        assert!(m.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn heisenberg_ad_maps_x2_to_x1() {
        let spec = gallery::heisenberg();
        let m = ad(&spec, &[0.0, 0.0, 1.0], AdBasis::P).matrix;
        assert_eq!(m.data, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn lambda_length_mismatch_names_field() {
        let err = GroupSpec::new(2, 1, vec!["X1".into(), "X2".into(), "A1".into()], vec![], vec![1.0, 0.0, 0.0], None)
            .unwrap_err();
        match err {
            Error::Schema { field, .. } => assert_eq!(field, "lambda"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn bracket_index_out_of_range() {
        let err = GroupSpec::new(
            1,
            1,
            vec!["X1".into(), "A1".into()],
            vec![BracketEntry(3, 1, 1, 1.0)],
            vec![1.0],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema { ref field, .. } if field == "brackets[0]"));
    }

    #[test]
    fn m_class_inference() {
        assert_eq!(gallery::toy3d().m_class(), MClass::Commutative);
        let names = ["X1", "A1", "A2", "A3"].iter().map(|s| s.to_string()).collect();
        let s = GroupSpec::new(
            1,
            3,
            names,
            vec![BracketEntry(2, 3, 4, 1.0), BracketEntry(3, 2, 4, -1.0)],
            vec![1.0],
            None,
        )
        .unwrap();
        assert_eq!(s.m_class(), MClass::Nilpotent(2));
    }

    #[test]
    fn json_round_trip() {
        let spec = gallery::toy3d();
        let s = serde_json::to_string(&spec).unwrap();
        let back: GroupSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(spec, back);
    }
}
