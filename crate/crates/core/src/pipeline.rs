//! Stage orchestration, the JSON report and CSV output.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{check, GroupSpec, ValidationReport};
use crate::error::{Error, Result};
use crate::frames::{
    densify_gamma_m, frame_coefficients, smooth_generator, test_functions, tight_generator, verify_smooth_frame,
    verify_tight, CoeffOptions, CoefficientTable, DensifyResult, FrameDesign, Generator, SmoothReport, TightReport,
    FUNCTION_ORDER,
};
use crate::gallery;
use crate::geometry::{
    build_lattices, check_packing, delta_sup, epsilon_search, tiling_check, ChartInverse, DeltaEstimate,
    EpsilonCertificate, LatticePair, PackingReport, TilingReport, DEFAULT_GRID_N,
};
use crate::measure::Densities;
use crate::orbit::{free_action_check, orbital_data_with, OrbitalData, OrbitalSummary, FreeActionReport};
use crate::quadrature::{grid_points, linspace};

/// Reads a JSON group config from disk.
pub fn parse_group_config(path: &Path) -> Result<GroupSpec> {
    let text = std::fs::read_to_string(path)?;
    GroupSpec::from_json_str(&text)
}

/// A builtin by name or a config file.
pub fn load_spec(example: Option<&str>, config: Option<&Path>) -> Result<GroupSpec> {
    match (example, config) {
        (Some(name), None) => gallery::by_name(name),
        (None, Some(p)) => parse_group_config(p),
        (Some(_), Some(_)) => Err(Error::Schema { field: "input".into(), msg: "give either an example or a config".into() }),
        (None, None) => Err(Error::Schema { field: "input".into(), msg: "an example name or a config path is required".into() }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Validate,
    Orbit,
    Certify,
    Lattice,
    Tight,
    Smooth,
    Full,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Orbit => "orbit",
            Command::Certify => "certify",
            Command::Lattice => "lattice",
            Command::Tight => "tight",
            Command::Smooth => "smooth",
            Command::Full => "full",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// 1-based J override.
    pub j: Option<Vec<usize>>,
    pub eps_max: f64,
    pub grid_n: usize,
    pub k_mod: Option<usize>,
    pub tol: f64,
    /// Diagonal entries of L (one value broadcasts).
    pub lattice_override: Option<Vec<f64>>,
    pub bump_theta: f64,
    pub seed: u64,
    pub test_functions: usize,
    pub tiles_per_function: Option<usize>,
    pub tiling_samples: usize,
    pub keep_coefficients: bool,
    pub timings: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            j: None,
            eps_max: 1.0,
            grid_n: DEFAULT_GRID_N,
            k_mod: None,
            tol: 1e-3,
            lattice_override: None,
            bump_theta: 0.8,
            seed: 7,
            test_functions: 5,
            tiles_per_function: None,
            tiling_samples: 10_000,
            keep_coefficients: false,
            timings: false,
        }
    }
}

/// Tiles per test function when not given: enough to exercise the tiling
/// without exploding the cost in higher dimension.
pub fn default_tiles_per_function(dim_m: usize) -> usize {
    match dim_m {
        1 => 5,
        2 => 2,
        _ => 1,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeSource {
    Default,
    DefaultInflated,
    Override,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub command: Command,
    pub spec: GroupSpec,
    pub validation: Option<ValidationReport>,
    pub orbit: Option<OrbitalSummary>,
    pub free_action: Option<FreeActionReport>,
    pub certificate: Option<EpsilonCertificate>,
    pub tiling: Option<TilingReport>,
    pub delta: Option<DeltaEstimate>,
    pub lattice: Option<LatticePair>,
    pub lattice_source: Option<LatticeSource>,
    pub packing: Option<PackingReport>,
    pub tight_generator: Option<Generator>,
    pub tight: Option<TightReport>,
    pub smooth_generator: Option<Generator>,
    pub densify: Option<DensifyResult>,
    pub smooth: Option<SmoothReport>,
    pub failure: Option<StageFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Vec<StageTiming>>,
    pub passed: bool,
}

impl PipelineReport {
    fn new(command: Command, spec: &GroupSpec) -> Self {
        PipelineReport {
            command,
            spec: spec.clone(),
            validation: None,
            orbit: None,
            free_action: None,
            certificate: None,
            tiling: None,
            delta: None,
            lattice: None,
            lattice_source: None,
            packing: None,
            tight_generator: None,
            tight: None,
            smooth_generator: None,
            densify: None,
            smooth: None,
            failure: None,
            timings: None,
            passed: false,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.failure.as_ref().map_or(0, |f| f.exit_code)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Objects built along the way, for CSV output.
#[derive(Clone, Debug, Default)]
pub struct Artifacts {
    pub data: Option<OrbitalData>,
    pub design: Option<FrameDesign>,
    pub tight_coefficients: Option<CoefficientTable>,
}

/// Exit code 1: a verification that ran but did not pass.
const VERIFICATION_FAILED: i32 = 1;

struct Runner {
    report: PipelineReport,
    timings: Vec<StageTiming>,
    clock: Instant,
}

impl Runner {
    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.push(StageTiming { stage: stage.into(), seconds: (now - self.clock).as_secs_f64() });
        self.clock = now;
    }

    fn fail(&mut self, stage: &str, err: &Error) {
        self.report.failure = Some(StageFailure { stage: stage.into(), message: err.to_string(), exit_code: err.exit_code() });
    }

    fn unverified(&mut self, stage: &str, message: String) {
        self.report.failure = Some(StageFailure { stage: stage.into(), message, exit_code: VERIFICATION_FAILED });
    }
}

fn random_points(dim: usize, n: usize, radius: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-radius..=radius)).collect()).collect()
}

fn override_matrix(values: &[f64], dim: usize) -> Result<DMatrix<f64>> {
    let diag: Vec<f64> = match values.len() {
        1 => vec![values[0]; dim],
        n if n == dim => values.to_vec(),
        n => {
            return Err(Error::Lattice(format!("lattice override has {n} entries, expected 1 or {dim}")));
        }
    };
    Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)))
}

/// Runs the stage chain of `command` and returns the report with whatever
/// was produced before a failure.
pub fn run_pipeline(command: Command, spec: &GroupSpec, opts: &PipelineOptions) -> (PipelineReport, Artifacts) {
    let mut run = Runner { report: PipelineReport::new(command, spec), timings: Vec::new(), clock: Instant::now() };
    let mut art = Artifacts::default();
    stages(command, spec, opts, &mut run, &mut art);
    run.report.passed = run.report.failure.is_none();
    if opts.timings {
        run.report.timings = Some(run.timings.clone());
    }
    (run.report, art)
}

fn stages(command: Command, spec: &GroupSpec, opts: &PipelineOptions, run: &mut Runner, art: &mut Artifacts) {
    // validate
    let v = check(spec);
    let ok = v.passed();
    run.report.validation = Some(v.clone());
    run.lap("validate");
    if !ok {
        run.fail("validate", &Error::Validation(Box::new(v)));
        return;
    }
    if command == Command::Validate {
        return;
    }

    // orbit
    let j = opts.j.as_deref().or(spec.preferred_j());
    let data = match orbital_data_with(spec, spec.lambda(), j) {
        Ok(d) => d,
        Err(e) => return run.fail("orbit", &e),
    };
    run.report.orbit = Some(data.summary());
    let pts = random_points(spec.dim_m(), 100, 1.0, opts.seed);
    match free_action_check(spec, spec.lambda(), &pts) {
        Ok(r) => {
            let passed = r.passed;
            run.report.free_action = Some(r);
            if !passed {
                run.unverified("orbit", "the Jacobian of theta_lambda loses rank".into());
                return;
            }
        }
        Err(e) => return run.fail("orbit", &e),
    }
    art.data = Some(data.clone());
    run.lap("orbit");
    if command == Command::Orbit {
        return;
    }

    // certify
    let cert = match epsilon_search(&data, opts.eps_max, opts.grid_n) {
        Ok(c) => c,
        Err(e) => return run.fail("certify", &e),
    };
    let eps = cert.epsilon;
    run.report.certificate = Some(cert);
    match tiling_check(spec, eps, opts.tiling_samples, opts.seed) {
        Ok(t) => {
            let passed = t.passed;
            run.report.tiling = Some(t);
            if !passed {
                run.unverified("certify", "tiling factorization of M failed".into());
                return;
            }
        }
        Err(e) => return run.fail("certify", &e),
    }
    run.lap("certify");
    if command == Command::Certify {
        return;
    }

    // lattice
    let delta = match delta_sup(&data, eps, opts.grid_n) {
        Ok(d) => d,
        Err(e) => return run.fail("lattice", &e),
    };
    run.report.delta = Some(delta.clone());
    let inverse = match ChartInverse::new(&data, eps) {
        Ok(i) => i,
        Err(e) => return run.fail("lattice", &e),
    };
    let n = spec.dim_m();
    let candidates: Vec<(LatticeSource, Result<LatticePair>)> = match &opts.lattice_override {
        Some(vals) => vec![(
            LatticeSource::Override,
            override_matrix(vals, n).and_then(|m| build_lattices(delta.grid_max, n, Some(&m))),
        )],
        None => vec![
            (LatticeSource::Default, build_lattices(delta.grid_max, n, None)),
            (LatticeSource::DefaultInflated, build_lattices(delta.inflated, n, None)),
        ],
    };
    let mut chosen = None;
    for (source, lp) in candidates {
        let lp = match lp {
            Ok(l) => l,
            Err(e) => return run.fail("lattice", &e),
        };
        let packing = match check_packing(&inverse, &lp, 256) {
            Ok(p) => p,
            Err(e) => return run.fail("lattice", &e),
        };
        let passed = packing.passed;
        run.report.lattice = Some(lp.clone());
        run.report.lattice_source = Some(source);
        run.report.packing = Some(packing);
        if passed {
            chosen = Some(lp);
            break;
        }
    }
    let lattice = match chosen {
        Some(l) => l,
        None => {
            run.unverified("lattice", "lattice translates of beta_J(F_eps) overlap".into());
            return;
        }
    };
    run.lap("lattice");
    if command == Command::Lattice {
        return;
    }

    let design = match FrameDesign::from_parts(spec, Densities::from_parts(crate::algebra::MAlgebra::from_spec(spec), inverse), lattice) {
        Ok(d) => d,
        Err(e) => return run.fail("frames", &e),
    };
    art.design = Some(design.clone());
    let tiles = opts.tiles_per_function.unwrap_or_else(|| default_tiles_per_function(n));
    let tests = match test_functions(design.tiling(), opts.test_functions, tiles, opts.seed, FUNCTION_ORDER) {
        Ok(t) => t,
        Err(e) => return run.fail("frames", &e),
    };
    let copts = CoeffOptions { k_mod: opts.k_mod, ..Default::default() };

    if matches!(command, Command::Tight | Command::Full) {
        let gen = match tight_generator(&design) {
            Ok(g) => g,
            Err(e) => return run.fail("tight", &e),
        };
        run.report.tight_generator = Some(gen.clone());
        let rep = match verify_tight(&design, &gen, &tests, &copts, opts.tol) {
            Ok(r) => r,
            Err(e) => return run.fail("tight", &e),
        };
        if opts.keep_coefficients {
            if let Some(h) = tests.first() {
                let keep = CoeffOptions { keep: true, ..copts.clone() };
                match frame_coefficients(h, &gen, &design, &keep) {
                    Ok(t) => art.tight_coefficients = Some(t),
                    Err(e) => return run.fail("tight", &e),
                }
            }
        }
        let passed = rep.passed;
        run.report.tight = Some(rep);
        run.lap("tight");
        if !passed {
            run.unverified("tight", "tight frame ratio outside tolerance".into());
            return;
        }
    }

    if matches!(command, Command::Smooth | Command::Full) {
        let gen = match smooth_generator(&design, opts.bump_theta) {
            Ok(g) => g,
            Err(e) => return run.fail("smooth", &e),
        };
        let dens = match densify_gamma_m(&design, &gen, eps) {
            Ok(d) => d,
            Err(e) => return run.fail("smooth", &e),
        };
        let gen = gen.with_gamma_spacing(dens.spacing);
        run.report.smooth_generator = Some(gen.clone());
        run.report.densify = Some(dens.clone());
        // The sandwich uses the looser of the user tolerance and 1e-2.
        let tol = opts.tol.max(1e-2);
        let rep = match verify_smooth_frame(&design, &gen, &dens, &tests, &copts, tol) {
            Ok(r) => r,
            Err(e) => return run.fail("smooth", &e),
        };
        let passed = rep.passed;
        run.report.smooth = Some(rep);
        run.lap("smooth");
        if !passed {
            run.unverified("smooth", "smooth frame sandwich violated".into());
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Coefficient table as CSV: gamma indices, k indices, real, imaginary, |c|^2.
pub fn write_coefficients_csv(path: &Path, table: &CoefficientTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let n = table.gammas.first().map_or(0, |g| g.len());
    let mut header: Vec<String> = (1..=n).map(|j| format!("gamma{j}")).collect();
    header.extend((1..=n).map(|j| format!("k{j}")));
    header.extend(["re".into(), "im".into(), "abs2".into()]);
    w.write_record(&header).map_err(csv_err)?;
    let side = 2 * table.k_mod + 1;
    for (g, coeffs) in table.gammas.iter().zip(&table.coeffs) {
        for (idx, c) in coeffs.iter().enumerate() {
            let mut ks = vec![0i64; n];
            let mut i = idx;
            for j in (0..n).rev() {
                ks[j] = (i % side) as i64 - table.k_mod as i64;
                i /= side;
            }
            let mut rec: Vec<String> = g.iter().map(|v| v.to_string()).collect();
            rec.extend(ks.iter().map(|v| v.to_string()));
            rec.extend([c.re.to_string(), c.im.to_string(), c.norm_sqr().to_string()]);
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// beta_J profile and densities on a grid of the certified box.
pub fn write_density_csv(path: &Path, design: &FrameDesign) -> Result<()> {
    let n = design.dim();
    let per = match n {
        1 => 201,
        2 => 41,
        _ => 11,
    };
    let h = design.epsilon() / 2.0;
    let pts = grid_points(&vec![linspace(-h, h, per); n]);
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> = (1..=n).map(|j| format!("a{j}")).collect();
    header.extend((1..=n).map(|j| format!("beta{j}")));
    header.extend(["rho".into(), "jac_det".into(), "theta".into(), "psi".into()]);
    w.write_record(&header).map_err(csv_err)?;
    let d = design.densities();
    for a in &pts {
        let b = design.data().beta(a)?;
        let rho = d.rho(a)?;
        let jd = d.jac_det(a)?;
        let mut rec: Vec<String> = a.iter().chain(&b).map(|v| v.to_string()).collect();
        rec.extend([rho.to_string(), jd.to_string(), (1.0 / jd).to_string(), (rho / jd).to_string()]);
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `beta_J` along each coordinate axis of the certified box, as `axis,x,y1..yn`.
pub fn write_profile_csv(path: &Path, design: &FrameDesign) -> Result<()> {
    let n = design.dim();
    let h = design.epsilon() / 2.0;
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["axis".to_string(), "x".to_string()];
    header.extend((1..=n).map(|j| format!("y{j}")));
    w.write_record(&header).map_err(csv_err)?;
    for axis in 0..n {
        for x in linspace(-h, h, 201) {
            let mut a = vec![0.0; n];
            a[axis] = x;
            let b = design.data().beta(&a)?;
            let mut rec = vec![(axis + 1).to_string(), x.to_string()];
            rec.extend(b.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_length_error_names_field() {
        let text = r#"{"dim_p": 2, "dim_m": 1, "basis_names": ["X1","X2","A1"],
            "brackets": [[3,1,1,1.0],[1,3,1,-1.0]], "lambda": [1.0, 0.0, 0.0]}"#;
        match GroupSpec::from_json_str(text) {
            Err(Error::Schema { field, .. }) => assert_eq!(field, "lambda"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_json_has_location() {
        let text = "{\n  \"dim_p\": 2,\n  \"dim_m\": ,\n}";
        match GroupSpec::from_json_str(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn orbit_stage_on_example5d() {
        let (r, _) = run_pipeline(Command::Orbit, &gallery::example5d(), &PipelineOptions::default());
        assert!(r.passed);
        let o = r.orbit.unwrap();
        let adm: Vec<Vec<usize>> = o.candidates.iter().filter(|c| c.admissible).map(|c| c.i.clone()).collect();
        assert_eq!(adm, vec![vec![1, 2], vec![2, 3]]);
    }

    #[test]
    fn report_round_trips() {
        let opts = PipelineOptions { tiling_samples: 500, ..Default::default() };
        let (r, _) = run_pipeline(Command::Lattice, &gallery::toy3d(), &opts);
        assert!(r.passed, "{:?}", r.failure);
        let back: PipelineReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.lattice_source, Some(LatticeSource::Default));
    }
}
