//! Command-line entry point: problem presets, file I/O, ledger emission and
//! plot-script generation. The binary is a thin wrapper over this module.
//!
//! Exit codes: 0 success, 2 bad input, 3 non-convergence, 4 certificate
//! failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};

use crate::dual::dual_norm;
use crate::error::{Error, Result};
use crate::grid::{Field, TorusGrid};
use crate::hierarchy::{
    default_lambda1, energy_ledger, run_hierarchy, Decomposition, EnergyLedger,
    HierarchyOptions, ProblemSpec, ScaleLadder,
};
use crate::io;
use crate::jmin::{minimize_j, oracle_solve_with, OracleParams, SolverParams};
use crate::norms::{compute_norm, l2_norm, phi_map, project_zero_mean, NormSpec};
use crate::ops::OperatorSpec;
use crate::prox::DataTerm;
use crate::verify::{
    self, check_extremality, gn_constant_experiment, hminus1_bound_check, measure_beta,
    perturbed_extremality_gap, vanishing_threshold, CertificateReport, GnShape,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_BAD_INPUT: u8 = 2;
pub const EXIT_NO_CONVERGENCE: u8 = 3;
pub const EXIT_CERTIFICATE: u8 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "hiersolve",
    about = "Hierarchical multiscale solutions of div/curl/identity equations on the torus",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the hierarchical decomposition for a problem preset on an HSF1 field
    Solve(SolveArgs),
    /// Run a certificate suite
    Verify(VerifyArgs),
    /// Multiscale (BV, L2) decomposition of a PGM image
    Image(ImageArgs),
    /// Tiny-instance cross-check of the solver against the subgradient oracle
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// div x = f on T^2, B = Linf, p = 2
    Div2d,
    /// div x = f on T^3, B = Linf, p = 3
    Div3d,
    /// curl x = f on T^3, B = Linf + W1,3, p = 3
    Curl3d,
    /// f = u + r on T^2, B = BV, p = 2
    ImageBvl2,
}

impl Preset {
    pub fn problem(&self, p_override: Option<f64>) -> Result<(ProblemSpec, usize)> {
        let (op, b, p, dim) = match self {
            Preset::Div2d => (OperatorSpec::Divergence, NormSpec::Linf, 2.0, 2),
            Preset::Div3d => (OperatorSpec::Divergence, NormSpec::Linf, 3.0, 3),
            Preset::Curl3d => (OperatorSpec::Curl3, NormSpec::LinfPlusW1d, 3.0, 3),
            Preset::ImageBvl2 => (OperatorSpec::Identity, NormSpec::Bv, 2.0, 2),
        };
        Ok((ProblemSpec::new(op, b, p_override.unwrap_or(p))?, dim))
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long, value_enum)]
    pub preset: Preset,
    /// Input field (HSF1)
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    /// Scale ratio zeta (> 1); defaults to 2^(p-1)
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Positive number or "auto"
    #[arg(long, default_value = "auto")]
    pub lambda1: String,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_iters: usize,
    /// Override for the measured GN constant used by auto lambda1 and bounds
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// One of: extremality, threshold, homogeneity, gn, hminus1, all
    #[arg(long)]
    pub suite: String,
    /// Grid resolution for the sharpness experiments
    #[arg(long, default_value_t = 256)]
    pub grid: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Optional report output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImageArgs {
    /// Input image (binary PGM, 8- or 16-bit)
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub levels: usize,
    #[arg(long, default_value = "auto")]
    pub lambda1: String,
    #[arg(long, default_value_t = 2.0)]
    pub zeta: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_iters: usize,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 3)]
    pub instances: usize,
    #[arg(long, default_value_t = 4242)]
    pub seed: u64,
    /// Oracle subgradient iterations per start
    #[arg(long, default_value_t = 200_000)]
    pub iters: usize,
}

/// Parse the process arguments and run; used by the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(dispatch(cli))
}

pub fn dispatch(cli: Cli) -> u8 {
    let outcome = match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Verify(args) => cmd_verify(&args),
        Command::Image(args) => cmd_image(&args),
        Command::Oracle(args) => cmd_oracle(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::SolverFailure(_) => EXIT_NO_CONVERGENCE,
        _ => EXIT_BAD_INPUT,
    }
}

/// One run per output directory: guards against concurrent writers.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<DirLock> {
        fs::create_dir_all(dir)?;
        let path = dir.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Malformed(
                format!("output directory is locked ({} exists)", path.display()),
            )),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn parse_lambda1(
    raw: &str,
    f: &Field,
    problem: &ProblemSpec,
    beta: f64,
    params: &SolverParams,
) -> Result<f64> {
    if raw == "auto" {
        default_lambda1(f, problem, beta, params)
    } else {
        let v: f64 = raw
            .parse()
            .map_err(|_| Error::Malformed(format!("lambda1 = {raw}")))?;
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InadmissibleLambda(format!("lambda1 = {v}")));
        }
        Ok(v)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn levels_csv(d: &Decomposition) -> String {
    let mut out =
        String::from("j,lambda,b_norm,res_p,res_dual,extremality_gap,iters,converged\n");
    for l in &d.levels {
        out.push_str(&format!(
            "{},{:.17e},{:.17e},{:.17e},{},{:.3e},{},{}\n",
            l.j,
            l.lambda,
            l.b_norm,
            l.residual_p_norm,
            l.residual_dual_norm
                .map_or(String::from(""), |v| format!("{v:.17e}")),
            l.extremality_gap,
            l.iterations,
            l.converged
        ));
    }
    out
}

fn energy_csv(energy: &EnergyLedger, d: &Decomposition) -> String {
    let mut out = String::from("j,inv_lambda,weighted_b,tu_sq\n");
    for (e, l) in energy.per_level.iter().zip(&d.levels) {
        out.push_str(&format!(
            "{},{:.17e},{:.17e},{:.17e}\n",
            e.j,
            1.0 / l.lambda,
            e.weighted_b,
            e.tu_sq
        ));
    }
    out
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Render residual decay and the energy ledger from levels.csv/energy.csv."""
import csv
import sys
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
levels = list(csv.DictReader(open(here / "levels.csv")))
energy = list(csv.DictReader(open(here / "energy.csv")))

j = [int(r["j"]) for r in levels]
res = [float(r["res_p"]) for r in levels]
fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
ax1.semilogy(j, res, "o-")
ax1.set_xlabel("level j")
ax1.set_ylabel("||r_j||_p")
ax1.set_title("residual decay")

ej = [int(r["j"]) for r in energy]
wb = [float(r["weighted_b"]) for r in energy]
tu = [float(r["tu_sq"]) for r in energy]
ax2.bar([x - 0.2 for x in ej], wb, width=0.4, label="||u_j||_B / lambda_j")
ax2.bar([x + 0.2 for x in ej], tu, width=0.4, label="||T u_j||_2^2")
ax2.set_yscale("log")
ax2.set_xlabel("level j")
ax2.legend()
ax2.set_title("energy ledger")
fig.tight_layout()
fig.savefig(here / "hierarchy.png", dpi=150)
print("wrote", here / "hierarchy.png")
"#;

/// Write the standard artifact set for a decomposition.
fn write_artifacts(dir: &Path, d: &Decomposition, energy: &EnergyLedger) -> Result<()> {
    let mut x = Field::zeros(d.f.grid(), d.problem.op.input_components(d.f.grid()));
    for l in &d.levels {
        io::write_hsf1(&dir.join(format!("u_{:03}.hsf", l.j)), &l.u)?;
        x = x.add(&l.u)?;
        io::write_hsf1(&dir.join(format!("x_{:03}.hsf", l.j)), &x)?;
    }
    io::write_hsf1(&dir.join("residual.hsf"), &d.final_residual)?;
    io::write_hsf1(&dir.join("input.hsf"), &d.f)?;
    let ledger = serde_json::to_string_pretty(&d.ledger_doc(energy))
        .map_err(|e| Error::Malformed(e.to_string()))?;
    write_text(&dir.join("ledger.json"), &ledger)?;
    write_text(&dir.join("levels.csv"), &levels_csv(d))?;
    write_text(&dir.join("energy.csv"), &energy_csv(energy, d))?;
    write_text(&dir.join("plot.py"), PLOT_SCRIPT)?;
    Ok(())
}

/// Certificate evaluation shared by `solve` and the acceptance suite: the
/// residual dual-norm law and the energy identities.
pub fn run_certificates(d: &Decomposition, energy: &EnergyLedger) -> Vec<CertificateReport> {
    let mut reports = Vec::new();
    for l in &d.levels {
        if let Some(dn) = l.residual_dual_norm {
            if l.b_norm > 1e-12 && l.converged {
                reports.push(CertificateReport::check(
                    format!("dual-law-level-{}", l.j),
                    l.lambda * dn,
                    1.0,
                    0.02,
                    false,
                    "lambda_j ||T* phi(r_j)||_* = 1",
                ));
            }
        }
    }
    // finite-depth energy identity for p = 2:
    // sum (1/lambda_j)||u_j||_B + sum ||T u_j||^2 + ||r_k||^2 = ||f||^2
    if d.problem.p == 2.0 && !d.levels.is_empty() {
        let res_sq = l2_norm(&d.final_residual).powi(2);
        let gap = (energy.weighted_b_total + energy.tu_sq_total + res_sq - energy.rhs).abs()
            / energy.rhs.max(f64::MIN_POSITIVE);
        reports.push(CertificateReport::check(
            "energy-equality",
            gap,
            0.0,
            0.01,
            false,
            "p = 2 finite-depth energy identity (relative gap)",
        ));
    }
    if !d.levels.is_empty() {
        reports.push(CertificateReport::bound(
            "energy-inequality",
            energy.inequality_slack,
            1e-9,
            "sum (1/lambda_j)||u_j||_B <= [f]_Phi",
        ));
    }
    reports
}

fn cmd_solve(args: &SolveArgs) -> Result<u8> {
    let _lock = DirLock::acquire(&args.out)?;
    let f = io::read_hsf1(&args.input)?;
    let (problem, dim) = args.preset.problem(args.p)?;
    if f.grid().dim() != dim {
        return Err(Error::InvalidGrid(format!(
            "preset expects a {dim}D grid, input is {}D",
            f.grid().dim()
        )));
    }
    let want = problem.op.output_components(f.grid());
    if f.components() != want {
        return Err(Error::ComponentMismatch {
            expected: want,
            got: f.components(),
        });
    }

    let params = SolverParams {
        max_iters: args.max_iters,
        tol: args.tol,
        ..Default::default()
    };

    if l2_norm(&f) == 0.0 {
        eprintln!("warning: zero input field; writing an empty decomposition");
        let d = Decomposition {
            f: f.clone(),
            problem,
            ladder: ScaleLadder::new(1.0, 2.0, 1)?,
            levels: Vec::new(),
            final_residual: f,
        };
        let energy = energy_ledger(&d)?;
        write_artifacts(&args.out, &d, &energy)?;
        return Ok(EXIT_OK);
    }

    let compat = problem.op.compatibility();
    let incompat = compat.incompatibility(&f)?;
    if incompat > 1e-10 {
        return Err(Error::IncompatibleRhs(format!(
            "relative incompatible part {incompat:.3e} (project the data first)"
        )));
    }

    let beta = match args.beta {
        Some(b) => b,
        None => {
            let q = problem.p / (problem.p - 1.0);
            measure_beta(f.grid(), q, 4, 0xbe7a)?
        }
    };
    let lambda1 = parse_lambda1(&args.lambda1, &f, &problem, beta, &params)?;
    let zeta = args
        .zeta
        .unwrap_or_else(|| ScaleLadder::default_zeta(problem.p));
    let levels = args.levels.unwrap_or(8);
    let ladder = ScaleLadder::new(lambda1, zeta, levels)?;

    println!(
        "solve: {} grid {:?} lambda1 {:.6e} zeta {} levels {} beta {:.4}",
        problem.label(),
        f.grid().sizes(),
        lambda1,
        zeta,
        levels,
        beta
    );
    let d = run_hierarchy(&f, &problem, &ladder, &params, &HierarchyOptions::default())?;
    let energy = energy_ledger(&d)?;
    write_artifacts(&args.out, &d, &energy)?;

    for l in &d.levels {
        println!(
            "  level {}: lambda {:.4e} ||u||_B {:.6e} ||r||_p {:.6e} dual {} iters {} {}",
            l.j,
            l.lambda,
            l.b_norm,
            l.residual_p_norm,
            l.residual_dual_norm
                .map_or("n/a".into(), |v| format!("{:.4}", l.lambda * v)),
            l.iterations,
            if l.converged { "ok" } else { "UNCONVERGED" }
        );
    }

    if d.levels.iter().any(|l| !l.converged) {
        eprintln!("non-convergence: at least one level hit the iteration limit");
        return Ok(EXIT_NO_CONVERGENCE);
    }
    let reports = run_certificates(&d, &energy);
    let mut ok = true;
    for r in &reports {
        println!("  {}", r.summary_line());
        ok &= r.pass;
    }
    Ok(if ok { EXIT_OK } else { EXIT_CERTIFICATE })
}

fn cmd_verify(args: &VerifyArgs) -> Result<u8> {
    // certificate suites couple the certificate window to the solver
    // tolerance (capped at 1%), so a corrupted tolerance fails loudly
    let params = SolverParams::strict(args.tol);
    let mut reports: Vec<CertificateReport> = Vec::new();
    let suite = args.suite.as_str();
    let known = ["extremality", "threshold", "homogeneity", "gn", "hminus1", "all"];
    if !known.contains(&suite) {
        return Err(Error::Malformed(format!(
            "unknown suite '{suite}' (expected one of {known:?})"
        )));
    }

    if suite == "extremality" || suite == "all" {
        let grid = TorusGrid::square(16)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(101);
        let data: Vec<f64> = (0..grid.num_points())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let f = project_zero_mean(&Field::new(grid, 1, data)?)?;
        let lam = 2.0 / l2_norm(&f);
        let res = minimize_j(
            &f,
            OperatorSpec::Divergence,
            NormSpec::Linf,
            DataTerm::new(2.0, lam)?,
            &params,
        )?;
        reports.push(check_extremality(
            &res,
            lam,
            &OperatorSpec::Divergence,
            &NormSpec::Linf,
            2.0,
            &params,
        )?);
        // negative control: the perturbed point must fail by a wide margin
        let gap = perturbed_extremality_gap(
            &res,
            &f,
            lam,
            &OperatorSpec::Divergence,
            &NormSpec::Linf,
            2.0,
            1.0,
            7,
        )?;
        reports.push(CertificateReport {
            name: "extremality-negative-control".into(),
            measured: gap,
            target: 0.1,
            tolerance: 0.0,
            relative: false,
            pass: gap > 0.1,
            note: "perturbed minimizer must violate the certificate".into(),
        });
    }

    if suite == "threshold" || suite == "all" {
        let grid = TorusGrid::square(32)?;
        let f = Field::from_fn(&grid, |x| x[0].cos());
        let (lambda_star, mut rs) = vanishing_threshold(
            &f,
            &OperatorSpec::Divergence,
            &NormSpec::Linf,
            2.0,
            &params,
        )?;
        println!(
            "threshold lambda* = {lambda_star:.6e} (continuum 1/(16 pi) = {:.6e})",
            1.0 / (16.0 * std::f64::consts::PI)
        );
        reports.append(&mut rs);
    }

    if suite == "homogeneity" || suite == "all" {
        let grid = TorusGrid::square(16)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(55);
        let data: Vec<f64> = (0..grid.num_points())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let f = project_zero_mean(&Field::new(grid, 1, data)?)?;
        let problem = ProblemSpec::new(OperatorSpec::Divergence, NormSpec::Linf, 2.0)?;
        let lambda1 = 0.3 / l2_norm(&f);
        for alpha in [2.0, -1.0, 0.5] {
            reports.push(verify::check_homogeneity(
                &f, alpha, &problem, lambda1, 3, 2.0, &params, 1e-4,
            )?);
        }
    }

    if suite == "gn" || suite == "all" {
        let grid = TorusGrid::square(args.grid)?;
        let pi = std::f64::consts::PI;
        reports.push(gn_constant_experiment(GnShape::Square { side: pi }, &grid)?);
        reports.push(gn_constant_experiment(GnShape::Disc { radius: pi / 2.0 }, &grid)?);
        reports.push(gn_constant_experiment(GnShape::Bump { sigma: 0.6 }, &grid)?);
    }

    if suite == "hminus1" || suite == "all" {
        let grid = TorusGrid::square(64)?;
        let f = Field::from_fn(&grid, |x| x[0].cos());
        reports.push(hminus1_bound_check(&f, 1.0)?);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for i in 0..3 {
            let mut f = Field::zeros(&grid, 1);
            for _ in 0..5 {
                let kx = rng.random_range(-4i64..=4) as f64;
                let ky = rng.random_range(-4i64..=4) as f64;
                if kx == 0.0 && ky == 0.0 {
                    continue;
                }
                let amp: f64 = rng.random_range(-1.0..1.0);
                let wave = Field::from_fn(&grid, |x| amp * (kx * x[0] + ky * x[1]).cos());
                f = f.add(&wave)?;
            }
            let mut r = hminus1_bound_check(&f, 1.0)?;
            r.name = format!("hminus1-bound-random-{i}");
            reports.push(r);
        }
    }

    let mut ok = true;
    for r in &reports {
        println!("{}", r.summary_line());
        ok &= r.pass;
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&reports)
            .map_err(|e| Error::Malformed(e.to_string()))?;
        write_text(&dir.join("reports.json"), &json)?;
        write_text(&dir.join("reports.csv"), &verify::reports_to_csv(&reports))?;
    }
    Ok(if ok { EXIT_OK } else { EXIT_CERTIFICATE })
}

fn cmd_image(args: &ImageArgs) -> Result<u8> {
    let _lock = DirLock::acquire(&args.out)?;
    let img = io::read_pgm(&args.input)?;
    let mean = img.mean()?;
    let f = project_zero_mean(&img)?;
    let problem = ProblemSpec::new(OperatorSpec::Identity, NormSpec::Bv, 2.0)?;
    let params = SolverParams {
        max_iters: args.max_iters,
        tol: args.tol,
        ..Default::default()
    };

    if l2_norm(&f) == 0.0 {
        eprintln!("warning: constant image; all levels are zero (mean re-added on output)");
        io::write_pgm(&args.out.join("reconstruction.pgm"), &img, 255)?;
        return Ok(EXIT_OK);
    }

    let lambda1 = if args.lambda1 == "auto" {
        let dn = dual_norm(&problem.op, &problem.bnorm, &phi_map(&f, 2.0), &params)?;
        1.1 / dn
    } else {
        parse_lambda1(&args.lambda1, &f, &problem, 0.0, &params)?
    };
    let ladder = ScaleLadder::new(lambda1, args.zeta, args.levels)?;
    println!(
        "image: {:?} mean {:.4} lambda1 {:.6e} zeta {} levels {}",
        f.grid().sizes(),
        mean,
        lambda1,
        args.zeta,
        args.levels
    );

    let d = run_hierarchy(&f, &problem, &ladder, &params, &HierarchyOptions::default())?;
    let energy = energy_ledger(&d)?;
    write_artifacts(&args.out, &d, &energy)?;

    // image artifacts: per-level details and mean-restored partial sums
    let mut x = Field::zeros(f.grid(), 1);
    let mut scale_energy = String::from("j,inv_lambda,u_bv\n");
    for l in &d.levels {
        io::write_pgm_normalized(&args.out.join(format!("u_{:03}.pgm", l.j)), &l.u)?;
        x = x.add(&l.u)?;
        let mut partial = x.clone();
        for v in partial.data_mut() {
            *v += mean;
        }
        io::write_pgm(&args.out.join(format!("x_{:03}.pgm", l.j)), &partial, 255)?;
        scale_energy.push_str(&format!(
            "{},{:.17e},{:.17e}\n",
            l.j,
            1.0 / l.lambda,
            compute_norm(&l.u, &NormSpec::Bv)?
        ));
        println!(
            "  level {}: lambda {:.4e} ||u||_BV {:.6e} ||r||_2 {:.6e} {}",
            l.j,
            l.lambda,
            l.b_norm,
            l.residual_p_norm,
            if l.converged { "ok" } else { "UNCONVERGED" }
        );
    }
    write_text(&args.out.join("scale_energy.csv"), &scale_energy)?;

    if d.levels.iter().any(|l| !l.converged) {
        return Ok(EXIT_NO_CONVERGENCE);
    }
    let reports = run_certificates(&d, &energy);
    let mut ok = true;
    for r in &reports {
        println!("  {}", r.summary_line());
        ok &= r.pass;
    }
    Ok(if ok { EXIT_OK } else { EXIT_CERTIFICATE })
}

fn cmd_oracle(args: &OracleArgs) -> Result<u8> {
    let grid = TorusGrid::square(4)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    let params = SolverParams::with_tol(1e-11);
    let oracle_params = OracleParams {
        starts: 20,
        iters_per_start: args.iters,
        seed: args.seed ^ 0xabcd,
    };
    let mut ok = true;
    for i in 0..args.instances {
        let data: Vec<f64> = (0..grid.num_points())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let f = project_zero_mean(&Field::new(grid.clone(), 1, data)?)?;
        for (op, b) in [
            (OperatorSpec::Divergence, NormSpec::Linf),
            (OperatorSpec::Identity, NormSpec::Bv),
        ] {
            let lam = 2.0 / l2_norm(&f);
            let dt = DataTerm::new(2.0, lam)?;
            let res = minimize_j(&f, op, b, dt, &params)?;
            let oracle = oracle_solve_with(&f, op, b, dt, &oracle_params)?;
            let diff = (res.objective - oracle.objective).abs();
            let pass = diff < 1e-5;
            ok &= pass;
            println!(
                "instance {i} {}/{}: solver {:.9e} oracle {:.9e} diff {:.2e} {}",
                op.label(),
                b.label(),
                res.objective,
                oracle.objective,
                diff,
                if pass { "ok" } else { "MISMATCH" }
            );
        }
    }
    Ok(if ok { EXIT_OK } else { EXIT_CERTIFICATE })
}
