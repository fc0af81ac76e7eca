use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use solvframe::gallery;
use solvframe::pipeline::{
    load_spec, run_pipeline, write_coefficients_csv, write_density_csv, write_profile_csv, Command, PipelineOptions,
    PipelineReport,
};
use solvframe::Error;

#[derive(Parser)]
#[command(name = "solvframe", version, about = "Frames from induced representations of completely solvable Lie groups")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the structure constants and the functional.
    Validate {
        /// Group config (JSON).
        path: Option<PathBuf>,
        #[command(flatten)]
        flags: Flags,
    },
    /// Coadjoint map, candidate tuples and the chosen J.
    Orbit(Flags),
    /// Certify epsilon and check the tiling of M.
    Certify(Flags),
    /// Build the lattices and check packing.
    Lattice(Flags),
    /// Verify the tight frame.
    Tight(Flags),
    /// Verify the smooth frame.
    Smooth(Flags),
    /// Run every stage.
    Full(Flags),
    /// Print the builtin examples.
    ListExamples,
}

#[derive(Args, Clone, Debug, Default)]
struct Flags {
    /// Builtin example name.
    #[arg(long, conflicts_with = "config")]
    example: Option<String>,
    /// Group config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// 1-based tuple J, e.g. "1,2".
    #[arg(long = "J", value_delimiter = ',')]
    j: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1.0)]
    eps_max: f64,
    #[arg(long, default_value_t = 64)]
    grid_n: usize,
    /// Fixed modulation cutoff (automatic when absent).
    #[arg(long)]
    kmod: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// Diagonal of L, e.g. "0.5,0.5" (a single value is broadcast).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    lattice_override: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.8)]
    bump_theta: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    test_functions: usize,
    #[arg(long)]
    tiles_per_function: Option<usize>,
    /// Report path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dump_coeffs: Option<PathBuf>,
    #[arg(long)]
    dump_density: Option<PathBuf>,
    /// beta_J profiles along each axis as x,y columns.
    #[arg(long)]
    dump_profile: Option<PathBuf>,
    /// Include stage timings (makes the report non-deterministic).
    #[arg(long)]
    timings: bool,
}

impl Flags {
    fn options(&self) -> PipelineOptions {
        PipelineOptions {
            j: self.j.clone(),
            eps_max: self.eps_max,
            grid_n: self.grid_n,
            k_mod: self.kmod,
            tol: self.tol,
            lattice_override: self.lattice_override.clone(),
            bump_theta: self.bump_theta,
            seed: self.seed,
            test_functions: self.test_functions,
            tiles_per_function: self.tiles_per_function,
            keep_coefficients: self.dump_coeffs.is_some(),
            timings: self.timings,
            ..Default::default()
        }
    }
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(err.exit_code() as u8)
}

fn emit(report: &PipelineReport, out: Option<&Path>) -> Result<(), Error> {
    let text = report.to_json();
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn run(command: Command, flags: Flags, path: Option<PathBuf>) -> ExitCode {
    let config = path.or(flags.config.clone());
    let spec = match load_spec(flags.example.as_deref(), config.as_deref()) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let (report, art) = run_pipeline(command, &spec, &flags.options());
    if let Err(e) = emit(&report, flags.out.as_deref()) {
        return fail(&e);
    }
    let dumps = || -> Result<(), Error> {
        if let (Some(p), Some(t)) = (&flags.dump_coeffs, &art.tight_coefficients) {
            write_coefficients_csv(p, t)?;
        }
        if let (Some(p), Some(d)) = (&flags.dump_density, &art.design) {
            write_density_csv(p, d)?;
        }
        if let (Some(p), Some(d)) = (&flags.dump_profile, &art.design) {
            write_profile_csv(p, d)?;
        }
        Ok(())
    };
    if let Err(e) = dumps() {
        return fail(&e);
    }
    if let Some(f) = &report.failure {
        eprintln!("{} failed: {}", f.stage, f.message);
    }
    ExitCode::from(report.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Cmd::Validate { path, flags } => run(Command::Validate, flags, path),
        Cmd::Orbit(f) => run(Command::Orbit, f, None),
        Cmd::Certify(f) => run(Command::Certify, f, None),
        Cmd::Lattice(f) => run(Command::Lattice, f, None),
        Cmd::Tight(f) => run(Command::Tight, f, None),
        Cmd::Smooth(f) => run(Command::Smooth, f, None),
        Cmd::Full(f) => run(Command::Full, f, None),
        Cmd::ListExamples => {
            for (name, spec) in gallery::all() {
                println!("{name:<12} n1={} n2={}  {}", spec.dim_p(), spec.dim_m(), gallery::describe(name));
            }
            ExitCode::SUCCESS
        }
    }
}
