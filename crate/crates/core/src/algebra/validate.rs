use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{ad, AdBasis, GroupSpec, MAlgebra, MClass, MalcevOrder};
use crate::error::{Error, Result};

const TOL: f64 = 1e-12;
const SPECTRUM_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Hard checks make validation fail; soft ones only warn.
    pub hard: bool,
    pub residual: f64,
    pub offenders: Vec<String>,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.hard)
    }

    pub fn warnings(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed && !c.hard).collect()
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn summary(&self) -> String {
        let failed: Vec<String> = self
            .checks
            .iter()
            .filter(|c| !c.passed && c.hard)
            .map(|c| format!("{} [{}]", c.name, c.offenders.join(", ")))
            .collect();
        if failed.is_empty() {
            "all hard checks passed".into()
        } else {
            failed.join("; ")
        }
    }
}

fn result(name: &str, hard: bool, residual: f64, offenders: Vec<String>, detail: String) -> CheckResult {
    CheckResult { name: name.into(), passed: offenders.is_empty(), hard, residual, offenders, detail }
}

/// Runs every structural check and returns the full report.
pub fn check(spec: &GroupSpec) -> ValidationReport {
    let d = spec.dim();
    let (n1, n2) = (spec.dim_p(), spec.dim_m());
    let nm = |i: usize| spec.name(i).to_string();
    let mut checks = Vec::new();

    // antisymmetry
    let mut res: f64 = 0.0;
    let mut off = Vec::new();
    for i in 0..d {
        for j in i..d {
            let mut worst: f64 = 0.0;
            for k in 0..d {
                let r = (spec.c(i, j, k) + spec.c(j, i, k)).abs();
                worst = worst.max(r);
            }
            res = res.max(worst);
            if worst > TOL {
                off.push(format!("({},{})", nm(j), nm(i)));
            }
        }
    }
    checks.push(result("antisymmetry", true, res, off, "[Z_i,Z_j] = -[Z_j,Z_i]".into()));

    // Jacobi
    let e = |i: usize| {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    };
    let mut res: f64 = 0.0;
    let mut off = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            for l in j + 1..d {
                let a = spec.bracket(&e(i), &spec.bracket(&e(j), &e(l)));
                let b = spec.bracket(&e(j), &spec.bracket(&e(l), &e(i)));
                let c = spec.bracket(&e(l), &spec.bracket(&e(i), &e(j)));
                let r = (0..d).map(|k| (a[k] + b[k] + c[k]).abs()).fold(0.0, f64::max);
                res = res.max(r);
                if r > TOL {
                    off.push(format!("({},{},{})", nm(i), nm(j), nm(l)));
                }
            }
        }
    }
    checks.push(result("jacobi", true, res, off, "max-norm Jacobi residual over basis triples".into()));

    // p is an ideal
    let mut res: f64 = 0.0;
    let mut off = Vec::new();
    for i in 0..d {
        for j in 0..n1 {
            let r = (n1..d).map(|k| spec.c(i, j, k).abs()).fold(0.0, f64::max);
            res = res.max(r);
            if r > TOL {
                off.push(format!("({},{})", nm(i), nm(j)));
            }
        }
    }
    checks.push(result("p_ideal", true, res, off, "[Z_i, X_j] stays in p".into()));

    // m is a subalgebra
    let mut res: f64 = 0.0;
    let mut off = Vec::new();
    for i in n1..d {
        for j in n1..d {
            let r = (0..n1).map(|k| spec.c(i, j, k).abs()).fold(0.0, f64::max);
            res = res.max(r);
            if r > TOL {
                off.push(format!("({},{})", nm(i), nm(j)));
            }
        }
    }
    checks.push(result("m_subalgebra", true, res, off, "[A_i, A_j] stays in m".into()));

    // subordination
    let lam = spec.lambda();
    let mut res: f64 = 0.0;
    let mut off = Vec::new();
    for i in 0..n1 {
        for j in i + 1..n1 {
            let r = (0..n1).map(|k| lam[k] * spec.c(i, j, k)).sum::<f64>().abs();
            res = res.max(r);
            if r > TOL {
                off.push(format!("({},{})", nm(i), nm(j)));
            }
        }
    }
    checks.push(result("subordination", true, res, off, "lambda([p, p]) = 0".into()));

    // functional
    let off = if lam.iter().all(|&v| v == 0.0) { vec!["lambda".to_string()] } else { vec![] };
    checks.push(result("functional_nonzero", true, 0.0, off, "lambda is not identically zero".into()));

    // m class consistency
    let m = MAlgebra::from_spec(spec);
    let (off, detail) = match spec.m_class() {
        MClass::Commutative => {
            let off = if m.is_abelian() { vec![] } else { vec!["m_class".to_string()] };
            (off, "declared commutative".to_string())
        }
        MClass::Nilpotent(s) => {
            // ad(A)^{s+1} on m must vanish and the lower central series must
            // end by step s so that BCH truncation is exact.
            let mut off = Vec::new();
            for k in 0..n2 {
                let mut z = vec![0.0; d];
                z[n1 + k] = 1.0;
                let a = ad(spec, &z, AdBasis::M).matrix;
                let mut p = a.clone();
                for _ in 0..s {
                    p = p.matmul(&a);
                }
                if p.max_abs() > TOL {
                    off.push(nm(n1 + k));
                }
            }
            match m.nilpotency_step(s) {
                Some(_) => {}
                None => off.push("m_class".into()),
            }
            (off, format!("declared nilpotent of step {s}"))
        }
        MClass::General(order) => (vec![], format!("general, BCH order {order}")),
    };
    checks.push(result("m_class", true, 0.0, off, detail));

    // real spectrum heuristic (soft)
    let mut res: f64 = 0.0;
    let mut off = Vec::new();
    for i in 0..d {
        let a = ad(spec, &e(i), AdBasis::Full).matrix;
        let na = DMatrix::from_row_slice(d, d, &a.data);
        let ev = na.complex_eigenvalues();
        let im = ev.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        res = res.max(im);
        if im > SPECTRUM_TOL {
            off.push(nm(i));
        }
    }
    checks.push(result(
        "real_spectrum",
        false,
        res,
        off,
        "eigenvalues of ad(Z_i) are real (basis-level heuristic for complete solvability)".into(),
    ));

    // ordering of m (soft: only the tiling and translations need it)
    let order = m.malcev_order();
    let off = if order == MalcevOrder::Unsupported { vec!["m basis".to_string()] } else { vec![] };
    checks.push(result(
        "malcev_order",
        false,
        0.0,
        off,
        format!("{order:?} ideal chain in m (needed for tiling and translations)"),
    ));

    ValidationReport { checks }
}

/// Checks a spec; any failing hard check is an error carrying the report.
pub fn validate(spec: &GroupSpec) -> Result<ValidationReport> {
    let report = check(spec);
    if report.passed() {
        Ok(report)
    } else {
        Err(Error::Validation(Box::new(report)))
    }
}
