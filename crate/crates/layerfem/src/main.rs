//! Command-line driver: convergence sweeps, mesh diagnostics, and the
//! property verification suite.
//!
//! Exit codes: 0 success, 2 invalid configuration or failed checks,
//! 3 solver failure.

use std::io::Write;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use layerfem::harness::{run_convergence, verify_suite, write_csv, RunConfig};
use layerfem::meshgen::{build_mesh, verify_lemma1, MeshKind, MeshParams};
use layerfem::Error;

#[derive(Parser)]
#[command(name = "layerfem", version, about = "Reaction-diffusion solver on layer-adapted meshes")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the manufactured problem over an (N, epsilon) sweep and
    /// write the error tables as CSV.
    Run(RunArgs),
    /// Build one mesh and print its diagnostic report.
    CheckMesh(CheckMeshArgs),
    /// Run the property verification suite.
    Verify,
}

#[derive(Args)]
struct MeshArgs {
    /// Mesh family: roos | kopteva
    #[arg(long = "mesh", default_value = "roos")]
    mesh: String,
    /// Grading exponent sigma
    #[arg(long, default_value_t = 2.0)]
    sigma: f64,
    /// Layer strength lower bound beta
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Transition constant of the kopteva family: auto | VALUE
    #[arg(long, default_value = "auto")]
    c1: String,
}

impl MeshArgs {
    fn kind(&self) -> Result<MeshKind, Error> {
        self.mesh.parse()
    }

    fn c1(&self) -> Result<Option<f64>, Error> {
        if self.c1 == "auto" {
            return Ok(None);
        }
        self.c1
            .parse::<f64>()
            .map(Some)
            .map_err(|_| Error::InvalidParams(format!("c1 must be 'auto' or a number, got '{}'", self.c1)))
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    mesh: MeshArgs,
    /// Element degree (1..3)
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Comma-separated epsilon sweep
    #[arg(long = "eps", value_delimiter = ',', default_value = "1e-3,1e-4,1e-5,1e-6")]
    eps: Vec<f64>,
    /// Comma-separated cell counts, increasing
    #[arg(long = "N", value_delimiter = ',', default_value = "12,24,48,96")]
    n: Vec<usize>,
    /// Errors to measure (balanced is always on): balanced,energy,supercloseness
    #[arg(long, value_delimiter = ',', default_value = "balanced")]
    errors: Vec<String>,
    /// Relative CG tolerance
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// CSV output path (stdout when omitted)
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct CheckMeshArgs {
    #[command(flatten)]
    mesh: MeshArgs,
    /// Cell count
    #[arg(long = "N")]
    n: usize,
    /// Perturbation parameter
    #[arg(long)]
    eps: f64,
    /// Also write the mesh points to this file
    #[arg(long)]
    dump: Option<std::path::PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::CheckMesh(args) => cmd_check_mesh(args),
        Cmd::Verify => cmd_verify(),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NoConvergence { .. } | Error::Singular(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, Error> {
    let mut with_energy = false;
    let mut with_superclose = false;
    for e in &args.errors {
        match e.as_str() {
            "balanced" => {}
            "energy" => with_energy = true,
            "supercloseness" => with_superclose = true,
            other => {
                return Err(Error::InvalidParams(format!(
                    "unknown error kind '{other}' (expected balanced, energy, supercloseness)"
                )))
            }
        }
    }
    let cfg = RunConfig {
        kind: args.mesh.kind()?,
        k: args.k,
        sigma: args.mesh.sigma,
        beta: args.mesh.beta,
        c1: args.mesh.c1()?,
        epsilons: args.eps.clone(),
        ns: args.n.clone(),
        with_energy,
        with_superclose,
        tol: args.tol,
    };
    let table = run_convergence(&cfg)?;

    // human-readable aggregate to stderr so stdout stays machine-readable
    for a in &table.aggregate {
        let mut line = format!("N = {:4}  e_c = {:.4e}", a.n, a.e_c);
        if let Some(p) = a.p_c {
            line.push_str(&format!("  p_c = {p:.2}"));
        }
        if let Some(s) = a.e_s {
            line.push_str(&format!("  e_s = {s:.4e}"));
        }
        if let Some(p) = a.p_s {
            line.push_str(&format!("  p_s = {p:.2}"));
        }
        eprintln!("{line}");
    }
    for e in &table.excluded {
        eprintln!("excluded: N = {}, epsilon = {:e} ({})", e.n, e.epsilon, e.reason);
    }

    let io_err = |e: std::io::Error| Error::InvalidParams(format!("cannot write output: {e}"));
    match &args.out {
        Some(path) => {
            let mut f = std::fs::File::create(path).map_err(io_err)?;
            write_csv(&table, &mut f).map_err(io_err)?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_csv(&table, &mut lock).map_err(io_err)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_check_mesh(args: CheckMeshArgs) -> Result<ExitCode, Error> {
    let params = match args.mesh.kind()? {
        MeshKind::Roos => MeshParams::roos(args.n, args.eps, args.mesh.sigma, args.mesh.beta)?,
        MeshKind::Kopteva => {
            MeshParams::kopteva(args.n, args.eps, args.mesh.sigma, args.mesh.beta, args.mesh.c1()?)?
        }
    };
    let mesh = build_mesh(&params)?;
    if let Some(path) = &args.dump {
        let mut f = std::fs::File::create(path)
            .map_err(|e| Error::InvalidParams(format!("cannot write dump: {e}")))?;
        mesh.dump(&mut f)
            .map_err(|e| Error::InvalidParams(format!("cannot write dump: {e}")))?;
        f.flush().ok();
    }
    let report = verify_lemma1(&mesh)?;
    print!("{report}");
    Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn cmd_verify() -> Result<ExitCode, Error> {
    let report = verify_suite();
    for line in &report.lines {
        println!("{} {} ({})", if line.pass { "PASS" } else { "FAIL" }, line.name, line.detail);
    }
    Ok(if report.all_pass() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}
