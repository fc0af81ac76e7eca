//! One line per acceptance criterion; exits non-zero if any criterion fails.

use std::f64::consts::{E, PI};
use std::process::Command as Process;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use solvframe::algebra::{GroupSpec, MAlgebra};
use solvframe::frames::{rep_apply, test_functions, upsilon_sum, GridFunction, GroupElement, FUNCTION_ORDER};
use solvframe::gallery;
use solvframe::geometry::tiling_check;
use solvframe::measure::{weight_w, Densities};
use solvframe::orbit::{free_action_check, orbital_data, orbital_data_with, OrbitalData};
use solvframe::pipeline::{run_pipeline, Command, PipelineOptions};
use solvframe::quadrature::{linspace, tensor_rule};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(lo..hi)).collect()
}

/// 1. Toy group with the measure-exact lattice, through the binary.
fn toy_exact_lattice() -> Outcome {
    let c = 2.0 * E.sqrt() / (1.0 + E);
    let expected = (1.0 + E) / (2.0 * E.sqrt());
    let start = Instant::now();
    let out = Process::new(env!("CARGO_BIN_EXE_solvframe"))
        .args(["full", "--example", "toy3d", "--lattice-override", &c.to_string(), "--test-functions", "5"])
        .env("RAYON_NUM_THREADS", "1")
        .output()
        .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let r: Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let entries = r["tight"]["entries"].as_array().ok_or("no tight entries")?;
    let mut worst: f64 = 0.0;
    let mut ok = out.status.code() == Some(0) && entries.len() >= 5 && secs <= 60.0;
    for e in entries {
        let ratio = e["ratio"].as_f64().unwrap_or(f64::NAN);
        let tail = e["tail"].as_f64().unwrap_or(0.0) / e["norm_sq"].as_f64().unwrap_or(1.0);
        let rel = (ratio - expected).abs() / expected;
        worst = worst.max(rel);
        ok &= rel <= 1e-3 + tail / expected && e["tiles"].as_u64().unwrap_or(0) >= 5;
    }
    check(
        ok,
        format!("ratio vs (1+e)/(2 sqrt e) = {expected:.7}: worst rel err {worst:.2e} over {} functions, {secs:.1}s", entries.len()),
    )
}

/// 2. Toy group with the generic 2 delta lattice.
fn toy_default_lattice() -> Outcome {
    let (rep, _) = run_pipeline(Command::Tight, &gallery::toy3d(), &PipelineOptions::default());
    // Oracle: dense scan of |t e^{-t}| on [-1/2, 1/2].
    let oracle = linspace(-0.5, 0.5, 200_001).iter().map(|t| (t * (-t).exp()).abs()).fold(0.0, f64::max);
    let delta = rep.delta.as_ref().ok_or("no delta")?.grid_max;
    let tight = rep.tight.as_ref().ok_or("no tight report")?;
    let target = E.sqrt();
    let worst = tight.entries.iter().map(|e| (e.ratio - target).abs()).fold(0.0, f64::max);
    check(
        (delta - oracle).abs() <= 1e-6 && (delta - E.sqrt() / 2.0).abs() <= 1e-6 && worst <= 1e-3 && tight.passed,
        format!("delta {delta:.9} (oracle {oracle:.9}), max |ratio - sqrt e| = {worst:.2e}"),
    )
}

/// Classical Gabor sum for the window 1_[-1/2,1/2), shifts and modulations 1,
/// by direct Fourier series of h on each unit cell.
fn gabor_oracle(h: &GridFunction, cells: &[i64], k_max: i64) -> f64 {
    let n = 8192;
    let mut total = 0.0;
    for &c in cells {
        let ts: Vec<f64> = (0..n).map(|i| c as f64 - 0.5 + (i as f64 + 0.5) / n as f64).collect();
        let vals: Vec<Complex64> = ts.iter().map(|&t| h.eval(&[t])).collect();
        for k in -k_max..=k_max {
            let coeff: Complex64 = ts
                .iter()
                .zip(&vals)
                .map(|(&t, &v)| v * Complex64::from_polar(1.0, -2.0 * PI * k as f64 * t))
                .sum::<Complex64>()
                / n as f64;
            total += coeff.norm_sqr();
        }
    }
    total
}

/// 3. Heisenberg group reduces to the Gabor system.
fn gabor_reduction() -> Outcome {
    let spec = gallery::heisenberg();
    let opts = PipelineOptions { tol: 1e-4, ..Default::default() };
    let (rep, art) = run_pipeline(Command::Tight, &spec, &opts);
    let tight = rep.tight.as_ref().ok_or("no tight report")?;
    let design = art.design.as_ref().ok_or("no design")?;
    let parseval = tight.parseval_ratio.ok_or("no Parseval ratio")?;
    let tests = test_functions(design.tiling(), 5, 5, opts.seed, FUNCTION_ORDER).map_err(|e| e.to_string())?;
    let mut worst_oracle: f64 = 0.0;
    let mut worst_frame: f64 = 0.0;
    for (h, e) in tests.iter().zip(&tight.entries) {
        // Tile k covers the unit cell around gamma(k)^{-1}.
        let cells: Vec<i64> = h.nodes().iter().map(|t| t.points[0][0].round() as i64).collect();
        let norm = h.norm_sq();
        let oracle = gabor_oracle(h, &cells, 200) / norm;
        worst_oracle = worst_oracle.max((oracle - 1.0).abs());
        worst_frame = worst_frame.max((e.ratio - 1.0).abs());
    }
    check(
        (tight.bound - 1.0).abs() < 1e-12 && (parseval - 1.0).abs() <= 1e-4 && worst_frame <= 1e-4 && worst_oracle <= 1e-4,
        format!("bound {:.3}, Parseval {parseval:.8}, frame |R-1| {worst_frame:.1e}, Gabor oracle |R-1| {worst_oracle:.1e}", tight.bound),
    )
}

/// 4. example5d orbital charts against their closed forms.
fn example5d_closed_forms() -> Outcome {
    let spec = gallery::example5d();
    let d12 = orbital_data_with(&spec, spec.lambda(), Some(&[1, 2])).map_err(|e| e.to_string())?;
    let d23 = orbital_data_with(&spec, spec.lambda(), Some(&[2, 3])).map_err(|e| e.to_string())?;
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let t = uniform(&mut r, 2, -1.0, 1.0);
        let b12 = d12.beta(&t).map_err(|e| e.to_string())?;
        let b23 = d23.beta(&t).map_err(|e| e.to_string())?;
        let (e2, f) = ((-t[1]).exp(), (-t[1]).exp() * (t[0] - 1.0));
        for (x, y) in b12.iter().zip([e2, f]).chain(b23.iter().zip([f, (2.0 * t[1]).exp()])) {
            worst = worst.max((x - y).abs());
        }
    }
    let summary = orbital_data(&spec, spec.lambda()).map_err(|e| e.to_string())?.summary();
    let admissible: Vec<Vec<usize>> =
        summary.candidates.iter().filter(|c| c.admissible).map(|c| c.i.clone()).collect();
    check(
        worst <= 1e-10 && admissible == vec![vec![1, 2], vec![2, 3]],
        format!("max deviation {worst:.1e} at 100 points, admissible {admissible:?}"),
    )
}

/// 5. w = 1 for nilpotent m.
fn nilpotent_haar_weight() -> Outcome {
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    let mut names = Vec::new();
    // The builtins all have abelian m; add a Heisenberg m acting on R by one character.
    let heis_m = GroupSpec::from_json_str(
        r#"{"dim_p": 1, "dim_m": 3, "basis_names": ["X1", "A1", "A2", "A3"],
            "brackets": [[2,3,4,1.0],[3,2,4,-1.0],[2,1,1,1.0],[1,2,1,-1.0]],
            "lambda": [1.0], "m_class": {"nilpotent": 2}}"#,
    )
    .map_err(|e| e.to_string())?;
    let mut specs = gallery::all();
    specs.push(("heisenberg-m", heis_m));
    for (name, spec) in specs {
        let malg = MAlgebra::from_spec(&spec);
        if malg.nilpotency_step(spec.dim_m() + 1).is_none() {
            continue;
        }
        names.push(name);
        for _ in 0..100 {
            let z = uniform(&mut r, spec.dim_m(), -2.0, 2.0);
            worst = worst.max((weight_w(&malg, &z).map_err(|e| e.to_string())? - 1.0).abs());
        }
    }
    check(worst <= 1e-9 && !names.is_empty(), format!("max |w - 1| = {worst:.1e} over {} nilpotent algebras {names:?}", names.len()))
}

/// 6. Existence and uniqueness of the tile factorization.
fn tiling_partition() -> Outcome {
    let mut failed = Vec::new();
    let mut worst: f64 = 0.0;
    for (name, spec) in gallery::all() {
        let rep = tiling_check(&spec, 1.0, 10_000, 6).map_err(|e| e.to_string())?;
        worst = worst.max(rep.max_reconstruction_error);
        if !rep.passed || rep.samples != 10_000 {
            failed.push(name);
        }
    }
    check(failed.is_empty(), format!("10^4 samples per builtin, max reconstruction error {worst:.1e}, failures {failed:?}"))
}

fn design_parts(spec: &GroupSpec) -> Result<(OrbitalData, Densities), String> {
    let d = orbital_data(spec, spec.lambda()).map_err(|e| e.to_string())?;
    let dens = Densities::new(spec, &d, 1.0).map_err(|e| e.to_string())?;
    Ok((d, dens))
}

/// `|beta(box)|` from the boundary: `(1/n) sum over faces of int beta . normal dS`.
fn image_volume(d: &OrbitalData, half: f64) -> Result<f64, String> {
    let n = d.dim_m();
    let rule = tensor_rule(&vec![-half; n.max(2) - 1], &vec![half; n.max(2) - 1], 48);
    let mut acc = 0.0;
    if n == 1 {
        let hi = d.beta(&[half]).map_err(|e| e.to_string())?[0];
        let lo = d.beta(&[-half]).map_err(|e| e.to_string())?[0];
        return Ok((hi - lo).abs());
    }
    for axis in 0..n {
        for (side, sign) in [(half, 1.0), (-half, -1.0)] {
            for q in 0..rule.len() {
                let u = rule.point(q);
                let mut a = Vec::with_capacity(n);
                let mut it = u.iter();
                for j in 0..n {
                    a.push(if j == axis { side } else { *it.next().unwrap() });
                }
                let (b, jac) = d.beta_with_jacobian(&a).map_err(|e| e.to_string())?;
                // Oriented normal: cofactor of the dropped column.
                let mut m = jac.clone();
                for r in 0..n {
                    m[(r, axis)] = b[r];
                }
                acc += sign * rule.weights[q] * solvframe::linalg::det(&m);
            }
        }
    }
    Ok((acc / n as f64).abs())
}

/// 7. Theta |det Jac| = 1, change of variables for Psi, volume identity.
fn density_identities() -> Outcome {
    let mut worst_prod: f64 = 0.0;
    let mut worst_cov: f64 = 0.0;
    let mut worst_vol: f64 = 0.0;
    for (_, spec) in gallery::all() {
        let n = spec.dim_m();
        let (d, dens) = design_parts(&spec)?;
        let per = if n == 3 { 17 } else { 33 };
        let rule = tensor_rule(&vec![-0.5; n], &vec![0.5; n], 24);
        let axis = linspace(-0.5, 0.5, per);
        let grid = solvframe::quadrature::grid_points(&vec![axis; n]);
        for a in &grid {
            let xi = d.beta(a).map_err(|e| e.to_string())?;
            let prod = dens.theta(&xi).map_err(|e| e.to_string())? * dens.jac_det(a).map_err(|e| e.to_string())?;
            worst_prod = worst_prod.max((prod - 1.0).abs());
        }
        // |beta(K)| = int_K (Theta o beta)^{-1}.
        let mut lhs = 0.0;
        for q in 0..rule.len() {
            let a = rule.point(q);
            let xi = d.beta(a).map_err(|e| e.to_string())?;
            lhs += rule.weights[q] / dens.theta(&xi).map_err(|e| e.to_string())?;
        }
        let vol = image_volume(&d, 0.5)?;
        worst_vol = worst_vol.max((lhs - vol).abs() / vol);
        if n == 1 {
            // int_{beta(F)} phi Psi dxi = int_F phi(beta) rho da.
            let phi = |x: f64| x.cos() + x * x;
            let (b0, b1) = (d.beta(&[-0.5]).unwrap()[0], d.beta(&[0.5]).unwrap()[0]);
            let xr = tensor_rule(&[b0.min(b1)], &[b0.max(b1)], 64);
            let mut in_xi = 0.0;
            for q in 0..xr.len() {
                let x = xr.point(q)[0];
                in_xi += xr.weights[q] * phi(x) * dens.psi(&[x]).map_err(|e| e.to_string())?;
            }
            let ar = tensor_rule(&[-0.5], &[0.5], 64);
            let mut in_a = 0.0;
            for q in 0..ar.len() {
                let a = ar.point(q);
                in_a += ar.weights[q] * phi(d.beta(a).unwrap()[0]) * dens.rho(a).map_err(|e| e.to_string())?;
            }
            worst_cov = worst_cov.max((in_xi - in_a).abs() / in_a.abs());
        }
    }
    check(
        worst_prod <= 1e-9 && worst_cov <= 1e-6 && worst_vol <= 1e-6,
        format!("max |Theta det - 1| {worst_prod:.1e}, change of variables {worst_cov:.1e}, volume {worst_vol:.1e}"),
    )
}

/// 8. Smooth frame sandwich and the proof identity.
fn smooth_sandwich() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for name in ["heisenberg", "toy3d"] {
        let spec = gallery::by_name(name).map_err(|e| e.to_string())?;
        let opts = PipelineOptions::default();
        let (rep, art) = run_pipeline(Command::Smooth, &spec, &opts);
        let s = rep.smooth.as_ref().ok_or(format!("{name}: no smooth report ({:?})", rep.failure))?;
        let gen = rep.smooth_generator.as_ref().ok_or("no generator")?;
        let design = art.design.as_ref().ok_or("no design")?;
        let tests = test_functions(design.tiling(), opts.test_functions, 5, opts.seed, FUNCTION_ORDER)
            .map_err(|e| e.to_string())?;
        // Independent right-hand side: h's own nodes against the Upsilon sum.
        let mut worst_id: f64 = 0.0;
        for (h, e) in tests.iter().zip(&s.entries) {
            let mut rhs = 0.0;
            for tile in h.nodes() {
                for ((p, v), w) in tile.points.iter().zip(&tile.values).zip(&tile.weights) {
                    rhs += w * v.norm_sqr() * upsilon_sum(design, gen, gen.gamma_spacing, p).map_err(|e| e.to_string())?;
                }
            }
            worst_id = worst_id.max((e.coefficient_energy - rhs).abs() / rhs);
        }
        let inside = s.entries.iter().all(|e| {
            e.ratio >= s.a_bound * (1.0 - 1e-2) && e.ratio <= s.b_bound * (1.0 + 1e-2)
        });
        ok &= s.a_bound > 0.0 && inside && s.entries.len() == 5 && worst_id <= 1e-4 && s.identity_max_rel_error <= 1e-4;
        lines.push(format!(
            "{name}: A {:.4} B {:.4} ratios [{:.4}, {:.4}] identity {:.1e} (oracle {:.1e})",
            s.a_bound, s.b_bound, s.min_ratio, s.max_ratio, s.identity_max_rel_error, worst_id
        ));
    }
    check(ok, lines.join("; "))
}

/// 9. Free action of M on lambda.
fn free_action() -> Outcome {
    let mut r = rng(9);
    let mut worst = f64::INFINITY;
    let mut failed = Vec::new();
    for (name, spec) in gallery::all() {
        let pts: Vec<Vec<f64>> = (0..100).map(|_| uniform(&mut r, spec.dim_m(), -2.0, 2.0)).collect();
        let rep = free_action_check(&spec, spec.lambda(), &pts).map_err(|e| e.to_string())?;
        worst = worst.min(rep.min_ratio);
        if !rep.passed {
            failed.push(name);
        }
    }
    check(failed.is_empty() && worst > 1e-9, format!("min sigma_min/sigma_max {worst:.2e}, failures {failed:?}"))
}

/// 10. Unitarity of the representation.
fn unitarity() -> Outcome {
    let mut r = rng(10);
    let mut worst: f64 = 0.0;
    for (_, spec) in gallery::all() {
        let d = orbital_data(&spec, spec.lambda()).map_err(|e| e.to_string())?;
        let tiling = solvframe::geometry::Tiling::for_spec(&spec, 1.0).map_err(|e| e.to_string())?;
        let hs = test_functions(&tiling, 50, 1, r.gen(), FUNCTION_ORDER).map_err(|e| e.to_string())?;
        for h in &hs {
            let g = GroupElement { x: uniform(&mut r, spec.dim_p(), -2.0, 2.0), t: uniform(&mut r, spec.dim_m(), -1.0, 1.0) };
            let gh = rep_apply(&d, &g, h).map_err(|e| e.to_string())?;
            worst = worst.max((gh.norm_sq().sqrt() / h.norm_sq().sqrt() - 1.0).abs());
        }
    }
    check(worst <= 1e-8, format!("max | ||pi(g)h|| / ||h|| - 1 | = {worst:.1e} over 50 pairs per builtin"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("toy tight bound with the exact lattice", toy_exact_lattice),
        ("toy bound with the generic lattice", toy_default_lattice),
        ("Gabor reduction on heisenberg", gabor_reduction),
        ("example5d orbital closed forms", example5d_closed_forms),
        ("nilpotent Haar weight", nilpotent_haar_weight),
        ("tiling partition", tiling_partition),
        ("density identities", density_identities),
        ("smooth frame sandwich", smooth_sandwich),
        ("free action rank", free_action),
        ("unitarity", unitarity),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] criterion {}: {name}: {detail} ({:.1}s)", i + 1, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
