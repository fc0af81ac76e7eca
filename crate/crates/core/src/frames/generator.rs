use serde::{Deserialize, Serialize};

use crate::algebra::{GroupSpec, MAlgebra};
use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::geometry::{check_packing, ChartInverse, LatticePair, Tiling};
use crate::measure::Densities;
use crate::orbit::OrbitalData;
use crate::quadrature::tensor_rule;

/// Everything the frame construction needs: chart, certified box, tiling and
/// lattices.
#[derive(Clone, Debug)]
pub struct FrameDesign {
    spec: GroupSpec,
    densities: Densities,
    tiling: Tiling,
    lattice: LatticePair,
    l_t: Vec<Vec<f64>>,
}

impl FrameDesign {
    pub fn new(spec: &GroupSpec, data: &OrbitalData, epsilon: f64, lattice: LatticePair) -> Result<Self> {
        let densities = Densities::new(spec, data, epsilon)?;
        Self::from_parts(spec, densities, lattice)
    }

    pub fn from_parts(spec: &GroupSpec, densities: Densities, lattice: LatticePair) -> Result<Self> {
        if lattice.dim() != spec.dim_m() {
            return Err(Error::Lattice(format!("lattice has dimension {}, expected {}", lattice.dim(), spec.dim_m())));
        }
        let tiling = Tiling::new(MAlgebra::from_spec(spec), densities.epsilon())?;
        let l = lattice.l();
        let n = lattice.dim();
        let l_t = (0..n).map(|r| (0..n).map(|c| l[(c, r)]).collect()).collect();
        Ok(FrameDesign { spec: spec.clone(), densities, tiling, lattice, l_t })
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }
    pub fn data(&self) -> &OrbitalData {
        self.densities.data()
    }
    pub fn densities(&self) -> &Densities {
        &self.densities
    }
    pub fn tiling(&self) -> &Tiling {
        &self.tiling
    }
    pub fn lattice(&self) -> &LatticePair {
        &self.lattice
    }
    pub fn epsilon(&self) -> f64 {
        self.densities.epsilon()
    }
    pub fn dim(&self) -> usize {
        self.tiling.dim()
    }

    /// Predicted tight frame bound `|det L|^{-1}`.
    pub fn bound(&self) -> f64 {
        self.lattice.frame_bound_prediction
    }

    /// `L^T beta_J(a)`: the modulation phase of `exp(sum_j (Lk)_j X_{J_j})`
    /// is `<eta(a), k>`.
    pub fn eta(&self, a: &[f64]) -> Result<Vec<f64>> {
        let b = self.data().beta(a)?;
        Ok(self.l_t.iter().map(|row| row.iter().zip(&b).map(|(x, y)| x * y).sum()).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    TightIndicator,
    SmoothBump,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub kind: GeneratorKind,
    pub epsilon: f64,
    /// Support fraction of the smooth bump (1 for the indicator).
    pub theta: f64,
    /// Half side of the box carrying the support.
    pub half_width: f64,
    /// Constant factor (1, or |det L|^{1/2} for the Parseval normalisation).
    pub scale: f64,
    /// Spacing of Gamma_M used with this generator.
    pub gamma_spacing: f64,
    /// Squared L^2(M) norm.
    pub norm_sq: f64,
}

/// `exp(-1/(1-u^2))` on `|u| < 1`, zero outside.
pub fn mollifier<T: Real>(u: T) -> T {
    let x = u.re();
    if !(x.abs() < 1.0) {
        return T::zero();
    }
    (-(T::one() / (T::one() - u * u))).exp()
}

impl Generator {
    pub fn with_scale(&self, scale: f64) -> Generator {
        Generator { scale, norm_sq: self.norm_sq / (self.scale * self.scale) * scale * scale, ..self.clone() }
    }

    pub fn with_gamma_spacing(&self, spacing: f64) -> Generator {
        Generator { gamma_spacing: spacing, ..self.clone() }
    }

    /// Generator value at `e(a)`.
    pub fn value(&self, design: &FrameDesign, a: &[f64]) -> Result<f64> {
        match self.kind {
            GeneratorKind::TightIndicator => {
                let h = self.half_width;
                if a.iter().any(|&v| v < -h || v >= h) {
                    return Ok(0.0);
                }
                let d = design.densities();
                Ok(self.scale * (d.jac_det(a)? / d.rho(a)?).sqrt())
            }
            GeneratorKind::SmoothBump => Ok(self.scale * self.bump(a)),
        }
    }

    fn bump(&self, a: &[f64]) -> f64 {
        let w = self.theta * self.epsilon;
        a.iter().map(|&v| mollifier(2.0 * v / w)).product()
    }

    /// `Upsilon(e(a))^2 = Psi(beta(a)) s(a)^2 |det L|^{-1}`.
    pub fn upsilon_sq(&self, design: &FrameDesign, a: &[f64]) -> Result<f64> {
        let s = self.value(design, a)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        Ok(design.densities().psi_at(a)? * s * s * design.bound())
    }
}

fn box_norm(design: &FrameDesign, half: f64, f: impl Fn(&[f64]) -> Result<f64>) -> Result<f64> {
    let n = design.dim();
    let rule = tensor_rule(&vec![-half; n], &vec![half; n], 32);
    let mut acc = 0.0;
    for i in 0..rule.len() {
        acc += rule.weights[i] * f(rule.point(i))?;
    }
    Ok(acc)
}

/// `f(e(a)) = (rho(a) Theta(beta(a)))^{-1/2}` on the half-open box.
pub fn tight_generator(design: &FrameDesign) -> Result<Generator> {
    let eps = design.epsilon();
    // ||f||^2 = int |det D beta| da = |beta(F_eps)|.
    let norm_sq = box_norm(design, eps / 2.0, |a| design.densities().jac_det(a))?;
    Ok(Generator {
        kind: GeneratorKind::TightIndicator,
        epsilon: eps,
        theta: 1.0,
        half_width: eps / 2.0,
        scale: 1.0,
        gamma_spacing: eps,
        norm_sq,
    })
}

/// Product mollifier supported on `[-theta eps/2, theta eps/2]^{n2}`; the
/// image of the support must pack under Lambda*.
pub fn smooth_generator(design: &FrameDesign, theta: f64) -> Result<Generator> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Schema { field: "bump_theta".into(), msg: format!("must lie in (0, 1), got {theta}") });
    }
    let eps = design.epsilon();
    let half = theta * eps / 2.0;
    let inner = ChartInverse::new(design.data(), theta * eps)?;
    let packing = check_packing(&inner, design.lattice(), 256)?;
    if !packing.passed {
        return Err(Error::Lattice(format!(
            "lattice refinement required: the bump support image overlaps {} lattice translate(s)",
            packing.violations.len()
        )));
    }
    let mut g = Generator {
        kind: GeneratorKind::SmoothBump,
        epsilon: eps,
        theta,
        half_width: half,
        scale: 1.0,
        gamma_spacing: eps,
        norm_sq: 0.0,
    };
    let gg = g.clone();
    g.norm_sq = box_norm(design, half, |a| {
        let s = gg.bump(a);
        Ok(s * s * design.densities().rho(a)?)
    })?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Jet;
    use crate::gallery;
    use crate::geometry::build_lattices;
    use crate::orbit::orbital_data;

    fn design(name: &str, delta: f64) -> FrameDesign {
        let s = gallery::by_name(name).unwrap();
        let d = orbital_data(&s, s.lambda()).unwrap();
        let lp = build_lattices(delta, s.dim_m(), None).unwrap();
        FrameDesign::new(&s, &d, 1.0, lp).unwrap()
    }

    #[test]
    fn toy_tight_generator_values() {
        let e = std::f64::consts::E;
        let d = design("toy3d", e.sqrt() / 2.0);
        let g = tight_generator(&d).unwrap();
        assert!((g.value(&d, &[0.0]).unwrap() - 1.0).abs() < 1e-15);
        let r = g.value(&d, &[-0.5]).unwrap();
        assert!((r - (1.5 * e.sqrt()).sqrt()).abs() < 1e-14, "{r}");
        assert_eq!(g.value(&d, &[0.5]).unwrap(), 0.0);
    }

    #[test]
    fn heisenberg_indicator_norm() {
        let d = design("heisenberg", 0.5);
        let g = tight_generator(&d).unwrap();
        assert!((g.norm_sq - 1.0).abs() < 1e-14);
        assert_eq!(g.value(&d, &[0.3]).unwrap(), 1.0);
    }

    #[test]
    fn mollifier_values_and_flat_edges() {
        assert!((mollifier(0.0) - (-1.0f64).exp()).abs() < 1e-16);
        assert_eq!(mollifier(1.0), 0.0);
        let j = mollifier(Jet::<5>::variable(1.0 - 1e-3));
        for k in 0..5 {
            assert!(j.derivative(k).abs() < 1e-150, "derivative {k}: {}", j.derivative(k));
        }
        let out = mollifier(Jet::<5>::variable(1.0));
        assert!((0..5).all(|k| out.derivative(k) == 0.0));
    }

    #[test]
    fn heisenberg_upsilon_is_scaled_bump() {
        let d = design("heisenberg", 0.5);
        let g = smooth_generator(&d, 0.5).unwrap();
        for a in [0.0, 0.1, -0.2] {
            let s = g.value(&d, &[a]).unwrap();
            assert!((g.upsilon_sq(&d, &[a]).unwrap() - s * s).abs() < 1e-15);
        }
        assert!(smooth_generator(&d, 1.0).is_err());
    }
}
