//! Haar density of M in second-kind coordinates, the modular function and
//! the Plancherel-type densities Theta and Psi on the chart image.

use nalgebra::DMatrix;

use crate::algebra::{GroupSpec, MAlgebra};
use crate::autodiff::{jacobian, Dual};
use crate::error::{Error, Result};
use crate::geometry::ChartInverse;
use crate::linalg::{det, exp_matrix, Mat};
use crate::orbit::OrbitalData;

/// ad(z) restricted to m, in the basis A_1..A_n.
pub fn ad_m(malg: &MAlgebra, z: &[f64]) -> Mat<f64> {
    let n = malg.dim();
    let mut out = Mat::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        for (k, v) in malg.bracket(z, &e).into_iter().enumerate() {
            out.set(k, j, v);
        }
    }
    out
}

/// `(1 - e^{-X}) / X` as a power series, with halving when `||X|| > 1`.
pub fn phi_matrix(x: &Mat<f64>) -> Result<Mat<f64>> {
    let n = x.rows;
    let norm = x.norm_inf();
    let halvings = if norm > 1.0 { norm.log2().ceil() as i32 } else { 0 };
    let y = x.scaled(0.5f64.powi(halvings));
    let mut sum = Mat::identity(n);
    let mut pow = Mat::identity(n);
    let mut fact = 1.0;
    for k in 1..40 {
        pow = pow.matmul(&y).scaled(-1.0);
        fact *= (k + 1) as f64;
        let term = pow.scaled(1.0 / fact);
        sum.add_assign(&term);
        if term.norm_inf() < 1e-18 * sum.norm_inf() {
            break;
        }
    }
    if halvings > 0 {
        let mut e = exp_matrix(&y.scaled(-1.0))?;
        for _ in 0..halvings {
            let mut f = Mat::identity(n);
            f.add_assign(&e);
            sum = sum.matmul(&f).scaled(0.5);
            e = e.matmul(&e);
        }
    }
    Ok(sum)
}

/// Left Haar density of M in first-kind coordinates: `|det phi(ad Z|_m)|`.
pub fn weight_w(malg: &MAlgebra, z: &[f64]) -> Result<f64> {
    if malg.is_abelian() {
        return Ok(1.0);
    }
    Ok(det(&phi_matrix(&ad_m(malg, z))?.to_nalgebra()).abs())
}

/// Left Haar density rho(a) in second-kind coordinates.
pub fn rho(malg: &MAlgebra, a: &[f64]) -> Result<f64> {
    if malg.is_abelian() {
        return Ok(1.0);
    }
    let z = malg.nu(a)?;
    let mut err = None;
    let jac = jacobian(
        |x: &[Dual]| match malg.nu(x) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                vec![Dual::constant(0.0); x.len()]
            }
        },
        a,
    );
    if let Some(e) = err {
        return Err(e);
    }
    Ok(weight_w(malg, &z)? * det(&jac).abs())
}

/// Modular function `|det Ad(e(a))|_m|^{-1}`.
pub fn modular_delta(malg: &MAlgebra, a: &[f64]) -> Result<f64> {
    let n = malg.dim();
    let mut prod = Mat::identity(n);
    for k in 0..n {
        let mut z = vec![0.0; n];
        z[k] = a[k];
        prod = prod.matmul(&exp_matrix(&ad_m(malg, &z))?);
    }
    Ok(1.0 / det(&prod.to_nalgebra()).abs())
}

/// True when the modular function is identically one.
pub fn is_unimodular(malg: &MAlgebra) -> bool {
    let n = malg.dim();
    (0..n).all(|k| {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        let m = ad_m(malg, &e);
        let tr: f64 = (0..n).map(|i| m.get(i, i)).sum();
        tr.abs() < 1e-12
    })
}

/// Densities attached to a chart on a certified box.
#[derive(Clone, Debug)]
pub struct Densities {
    malg: MAlgebra,
    inverse: ChartInverse,
}

impl Densities {
    pub fn new(spec: &GroupSpec, data: &OrbitalData, epsilon: f64) -> Result<Self> {
        Ok(Densities { malg: MAlgebra::from_spec(spec), inverse: ChartInverse::new(data, epsilon)? })
    }

    pub fn from_parts(malg: MAlgebra, inverse: ChartInverse) -> Self {
        Densities { malg, inverse }
    }

    pub fn group(&self) -> &MAlgebra {
        &self.malg
    }

    pub fn inverse(&self) -> &ChartInverse {
        &self.inverse
    }

    pub fn data(&self) -> &OrbitalData {
        self.inverse.data()
    }

    pub fn epsilon(&self) -> f64 {
        self.inverse.epsilon()
    }

    pub fn rho(&self, a: &[f64]) -> Result<f64> {
        rho(&self.malg, a)
    }

    /// `|det D beta_J(a)|`.
    pub fn jac_det(&self, a: &[f64]) -> Result<f64> {
        let (_, j) = self.data().beta_with_jacobian(a)?;
        Ok(det(&j).abs())
    }

    /// Theta(xi) = 1 / |det D beta_J| at the preimage of xi.
    pub fn theta(&self, xi: &[f64]) -> Result<f64> {
        let a = self.inverse.invert(xi)?;
        Ok(1.0 / self.jac_det(&a)?)
    }

    /// Psi(xi) = rho(beta^{-1} xi) Theta(xi).
    pub fn psi(&self, xi: &[f64]) -> Result<f64> {
        let a = self.inverse.invert(xi)?;
        Ok(self.rho(&a)? / self.jac_det(&a)?)
    }

    /// Psi(beta(a)) evaluated from `a` directly.
    pub fn psi_at(&self, a: &[f64]) -> Result<f64> {
        if a.iter().any(|v| v.abs() > self.epsilon() / 2.0 * (1.0 + 1e-12)) {
            return Err(Error::domain(format!("a = {a:?} lies outside the certified box")));
        }
        Ok(self.rho(a)? / self.jac_det(a)?)
    }

    /// Psi(xi) recomputed as the density of the pushforward of Haar measure
    /// through `nu o beta^{-1}`, with a central-difference Jacobian.
    pub fn psi_finite_difference(&self, xi: &[f64], h: f64) -> Result<f64> {
        let n = xi.len();
        let map = |x: &[f64]| -> Result<Vec<f64>> { self.malg.nu(&self.inverse.invert(x)?) };
        let mut jac = DMatrix::zeros(n, n);
        for c in 0..n {
            let mut p = xi.to_vec();
            let mut m = xi.to_vec();
            p[c] += h;
            m[c] -= h;
            let (fp, fm) = (map(&p)?, map(&m)?);
            for r in 0..n {
                jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        let z = map(xi)?;
        Ok(weight_w(&self.malg, &z)? * det(&jac).abs())
    }
}
