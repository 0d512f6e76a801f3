//! `lopt`: command-line front end for exact discrete optimal (partial)
//! transport, embeddings, interpolation, and the benchmark harness.
//!
//! Exit codes: 0 on success, 2 for input errors (bad arguments, malformed
//! files, infeasible preconditions), 3 for numerical failures inside a
//! solver. `LOPT_THREADS` caps the worker pool used by the `bench` commands.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use lopt_cli::datagen::{add_noise, generate_gaussians};
use lopt_cli::experiments::{
    bench_relative_error, bench_timing, write_records_csv, SkippedPairs,
};
use lopt_core::analysis::{ot_barycenter, pca};
use lopt_core::embeddings::{
    lopt_discrepancy, lopt_embed, lot_discrepancy, lot_embed, LoptEmbedding, LotEmbedding,
    ReferenceId,
};
use lopt_core::interpolation::{
    lopt_interpolate, lot_geodesic, opt_interpolate, ot_geodesic, InterpolationMode,
    InterpolationRequest,
};
use lopt_core::projections::{opt_barycentric_projection, ot_barycentric_projection};
use lopt_core::{solve_opt, solve_ot, DiscreteMeasure, Error, Result};

#[derive(Parser)]
#[command(name = "lopt", version, about = "Exact discrete optimal (partial) transport toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a family of Gaussian point sets plus a reference cloud
    GenerateGaussians(GenerateArgs),
    /// Append uniform background noise to a point set
    AddNoise(NoiseArgs),
    /// Solve the balanced transport problem between two point sets
    SolveOt(SolveOtArgs),
    /// Solve the partial transport problem between two point sets
    SolveOpt(SolveOptArgs),
    /// Barycentric projection of a target onto a reference support
    Project(ProjectArgs),
    /// Embed a target against a reference
    Embed(EmbedArgs),
    /// Discrepancy between two embeddings sharing a reference
    Discrepancy(DiscrepancyArgs),
    /// Evaluate an interpolation curve at a list of times
    Interpolate(InterpolateArgs),
    /// Free-support barycenter of several point sets
    Barycenter(BarycenterArgs),
    /// Principal components of a set of embeddings
    Pca(PcaArgs),
    /// Benchmark harness
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Args)]
struct GenerateArgs {
    /// Atoms per measure
    #[arg(long)]
    n: usize,
    /// Number of measures
    #[arg(long)]
    k: usize,
    #[arg(long)]
    seed: u64,
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct NoiseArgs {
    #[arg(long)]
    input: PathBuf,
    /// Noise mass as a fraction of the input atom count
    #[arg(long)]
    eta: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Sampling box `lo0,hi0,lo1,hi1,...`; defaults to the input bounding box
    #[arg(long)]
    bbox: Option<String>,
}

#[derive(Args)]
struct SolveOtArgs {
    mu0: PathBuf,
    muj: PathBuf,
    /// Write the optimal plan as JSON
    #[arg(long)]
    plan: Option<PathBuf>,
}

#[derive(Args)]
struct SolveOptArgs {
    mu0: PathBuf,
    muj: PathBuf,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    plan: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum BalancedOrPartial {
    Ot,
    Opt,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum EmbedKind {
    Lot,
    Lopt,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long, value_enum)]
    mode: BalancedOrPartial,
    reference: PathBuf,
    target: PathBuf,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long, value_enum)]
    mode: EmbedKind,
    #[arg(long)]
    reference: PathBuf,
    target: PathBuf,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiscrepancyArgs {
    #[arg(long, value_enum)]
    mode: EmbedKind,
    #[arg(long)]
    reference: PathBuf,
    a: PathBuf,
    b: PathBuf,
    /// Add the mass-deficit correction (partial mode only); use when the
    /// value should approximate the exact partial cost
    #[arg(long)]
    include_deficit: bool,
}

#[derive(Args)]
struct InterpolateArgs {
    /// ot | lot | opt | lopt
    #[arg(long)]
    mode: String,
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Required for the embedded modes (lot, lopt)
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Required for the partial modes (opt, lopt)
    #[arg(long)]
    lambda: Option<f64>,
    /// Comma-separated times in [0, 1]
    #[arg(long)]
    ts: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BarycenterArgs {
    #[arg(long)]
    support_size: usize,
    #[arg(long)]
    iters: usize,
    #[arg(long)]
    seed: u64,
    /// Rescale the output to this total mass
    #[arg(long)]
    total_mass: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Input point-set files
    #[arg(required = true)]
    measures: Vec<PathBuf>,
}

#[derive(Args)]
struct PcaArgs {
    #[arg(long, value_enum)]
    mode: EmbedKind,
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    components: usize,
    #[arg(long)]
    out: PathBuf,
    /// Embedding JSON files produced by `embed`
    #[arg(required = true)]
    embeddings: Vec<PathBuf>,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Mean relative error of the embedded approximation vs exact pairwise
    /// costs over a lambda sweep
    RelativeError(BenchErrorArgs),
    /// Wall-clock: pairwise exact solves vs embeddings + cheap evaluations
    Timing(BenchTimingArgs),
}

#[derive(Args)]
struct BenchErrorArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    /// Comma-separated penalty values
    #[arg(long)]
    lambdas: String,
    #[arg(long)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchTimingArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn threads_from_env() -> usize {
    // 0 lets the pool pick the machine default.
    std::env::var("LOPT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0)
}

fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>> {
    let values: std::result::Result<Vec<f64>, _> =
        text.split(',').map(|s| s.trim().parse::<f64>()).collect();
    values.map_err(|_| Error::InvalidParameter(format!("cannot parse {what} list `{text}`")))
}

fn require_lambda(lambda: Option<f64>, mode: &str) -> Result<f64> {
    lambda.ok_or_else(|| Error::InvalidParameter(format!("mode {mode} requires --lambda")))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenerateGaussians(args) => cmd_generate(args),
        Command::AddNoise(args) => cmd_noise(args),
        Command::SolveOt(args) => cmd_solve_ot(args),
        Command::SolveOpt(args) => cmd_solve_opt(args),
        Command::Project(args) => cmd_project(args),
        Command::Embed(args) => cmd_embed(args),
        Command::Discrepancy(args) => cmd_discrepancy(args),
        Command::Interpolate(args) => cmd_interpolate(args),
        Command::Barycenter(args) => cmd_barycenter(args),
        Command::Pca(args) => cmd_pca(args),
        Command::Bench(BenchCommand::RelativeError(args)) => cmd_bench_error(args),
        Command::Bench(BenchCommand::Timing(args)) => cmd_bench_timing(args),
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let fam = generate_gaussians(args.n, args.k, args.seed)?;
    fs::create_dir_all(&args.out)?;
    for (i, m) in fam.measures.iter().enumerate() {
        m.write_csv(&args.out.join(format!("measure_{i:02}.csv")))?;
    }
    fam.reference.write_csv(&args.out.join("reference.csv"))?;
    Ok(())
}

fn cmd_noise(args: NoiseArgs) -> Result<()> {
    let input = DiscreteMeasure::read_csv(&args.input)?;
    let bbox = match &args.bbox {
        Some(text) => {
            let flat = parse_f64_list(text, "bounding box")?;
            if flat.len() % 2 != 0 {
                return Err(Error::InvalidParameter(
                    "bounding box needs lo,hi per coordinate".into(),
                ));
            }
            Some(flat.chunks(2).map(|c| (c[0], c[1])).collect::<Vec<_>>())
        }
        None => None,
    };
    let noisy = add_noise(&input, args.eta, args.seed, bbox.as_deref())?;
    noisy.write_csv(&args.out)?;
    Ok(())
}

fn cmd_solve_ot(args: SolveOtArgs) -> Result<()> {
    let mu0 = DiscreteMeasure::read_csv(&args.mu0)?;
    let muj = DiscreteMeasure::read_csv(&args.muj)?;
    let sol = solve_ot(&mu0, &muj)?;
    println!("cost {}", sol.cost);
    if let Some(path) = args.plan {
        sol.plan.write_json(&path)?;
    }
    Ok(())
}

fn cmd_solve_opt(args: SolveOptArgs) -> Result<()> {
    let mu0 = DiscreteMeasure::read_csv(&args.mu0)?;
    let muj = DiscreteMeasure::read_csv(&args.muj)?;
    let sol = solve_opt(&mu0, &muj, args.lambda)?;
    println!("cost {}", sol.cost);
    println!("transported_mass {}", sol.transported_mass);
    println!("destroyed_mass {}", sol.destroyed_mass);
    println!("created_mass {}", sol.created_mass);
    if let Some(path) = args.plan {
        sol.plan.write_json(&path)?;
    }
    Ok(())
}

fn cmd_project(args: ProjectArgs) -> Result<()> {
    let reference = DiscreteMeasure::read_csv(&args.reference)?;
    let target = DiscreteMeasure::read_csv(&args.target)?;
    let proj = match args.mode {
        BalancedOrPartial::Ot => {
            let sol = solve_ot(&reference, &target)?;
            ot_barycentric_projection(&reference, &target, &sol.plan)?
        }
        BalancedOrPartial::Opt => {
            let lambda = require_lambda(args.lambda, "opt")?;
            let sol = solve_opt(&reference, &target, lambda)?;
            opt_barycentric_projection(&reference, &target, &sol.plan)?
        }
    };
    proj.measure.write_csv(&args.out)?;
    println!("deficit {}", proj.deficit);
    Ok(())
}

fn cmd_embed(args: EmbedArgs) -> Result<()> {
    let reference = DiscreteMeasure::read_csv(&args.reference)?;
    let target = DiscreteMeasure::read_csv(&args.target)?;
    match args.mode {
        EmbedKind::Lot => {
            let e = lot_embed(&reference, &target)?;
            e.write_json(&args.out)?;
        }
        EmbedKind::Lopt => {
            let lambda = require_lambda(args.lambda, "lopt")?;
            let e = lopt_embed(&reference, &target, lambda)?;
            e.write_json(&args.out)?;
        }
    }
    Ok(())
}

fn cmd_discrepancy(args: DiscrepancyArgs) -> Result<()> {
    let reference = DiscreteMeasure::read_csv(&args.reference)?;
    let value = match args.mode {
        EmbedKind::Lot => {
            if args.include_deficit {
                return Err(Error::InvalidParameter(
                    "--include-deficit only applies to lopt embeddings".into(),
                ));
            }
            let a = LotEmbedding::read_json(&args.a)?;
            let b = LotEmbedding::read_json(&args.b)?;
            lot_discrepancy(&a, &b, &reference)?
        }
        EmbedKind::Lopt => {
            let a = LoptEmbedding::read_json(&args.a)?;
            let b = LoptEmbedding::read_json(&args.b)?;
            lopt_discrepancy(&a, &b, &reference, args.include_deficit)?
        }
    };
    println!("{value}");
    Ok(())
}

#[derive(Serialize)]
struct CurveManifest {
    mode: String,
    ts: Vec<f64>,
    lambda: Option<f64>,
    files: Vec<String>,
}

fn cmd_interpolate(args: InterpolateArgs) -> Result<()> {
    let mode: InterpolationMode = args.mode.parse()?;
    let ts = parse_f64_list(&args.ts, "time")?;
    if ts.is_empty() {
        return Err(Error::InvalidParameter("need at least one t".into()));
    }
    let source = DiscreteMeasure::read_csv(&args.source)?;
    let target = DiscreteMeasure::read_csv(&args.target)?;
    let reference = match &args.reference {
        Some(path) => Some(DiscreteMeasure::read_csv(path)?),
        None if mode.needs_reference() => {
            return Err(Error::InvalidParameter(format!(
                "mode {mode} requires --reference"
            )));
        }
        None => None,
    };
    let lambda = if mode.needs_lambda() {
        Some(require_lambda(args.lambda, &args.mode)?)
    } else {
        None
    };
    for t in &ts {
        InterpolationRequest { mode, t: *t, lambda }.validate()?;
    }

    fs::create_dir_all(&args.out)?;
    let mut files = Vec::with_capacity(ts.len());

    // Embedded modes solve once per endpoint, then every t is arithmetic.
    let lot_pair = if mode == InterpolationMode::LotGeodesic {
        let r = reference.as_ref().unwrap();
        Some((lot_embed(r, &source)?, lot_embed(r, &target)?))
    } else {
        None
    };
    let lopt_pair = if mode == InterpolationMode::LoptInterp {
        let r = reference.as_ref().unwrap();
        let l = lambda.unwrap();
        Some((lopt_embed(r, &source, l)?, lopt_embed(r, &target, l)?))
    } else {
        None
    };

    for (idx, t) in ts.iter().enumerate() {
        let measure = match mode {
            InterpolationMode::OtGeodesic => ot_geodesic(&source, &target, *t)?,
            InterpolationMode::OptInterp => {
                opt_interpolate(&source, &target, lambda.unwrap(), *t)?
            }
            InterpolationMode::LotGeodesic => {
                let (a, b) = lot_pair.as_ref().unwrap();
                lot_geodesic(a, b, reference.as_ref().unwrap(), *t)?
            }
            InterpolationMode::LoptInterp => {
                let (a, b) = lopt_pair.as_ref().unwrap();
                lopt_interpolate(a, b, reference.as_ref().unwrap(), *t)?
            }
        };
        let name = format!("t{idx:03}.csv");
        measure.write_csv(&args.out.join(&name))?;
        files.push(name);
    }

    let manifest = CurveManifest { mode: mode.to_string(), ts, lambda, files };
    fs::write(args.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn cmd_barycenter(args: BarycenterArgs) -> Result<()> {
    let measures: Vec<DiscreteMeasure> = args
        .measures
        .iter()
        .map(|p| DiscreteMeasure::read_csv(p))
        .collect::<Result<_>>()?;
    let mut bary = ot_barycenter(&measures, args.support_size, args.iters, args.seed)?;
    if let Some(total) = args.total_mass {
        bary = bary.scaled_to_total(total)?;
    }
    bary.write_csv(&args.out)?;
    Ok(())
}

fn cmd_pca(args: PcaArgs) -> Result<()> {
    let reference = DiscreteMeasure::read_csv(&args.reference)?;
    let expected = ReferenceId::of(&reference);
    let mut rows = Vec::with_capacity(args.embeddings.len());
    let mut labels = Vec::with_capacity(args.embeddings.len());
    for path in &args.embeddings {
        let (u, id) = match args.mode {
            EmbedKind::Lot => {
                let e = LotEmbedding::read_json(path)?;
                (e.displacements().to_vec(), e.reference_id().clone())
            }
            EmbedKind::Lopt => {
                let e = LoptEmbedding::read_json(path)?;
                (e.displacements().to_vec(), e.reference_id().clone())
            }
        };
        if id != expected {
            return Err(Error::ReferenceMismatch(format!(
                "{} was not embedded against the supplied reference",
                path.display()
            )));
        }
        rows.push(u);
        labels.push(
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
        );
    }
    let result = pca(&rows, reference.weights(), args.components)?;

    let mut out = String::new();
    for c in 0..args.components {
        out.push_str(&format!("pc{},", c + 1));
    }
    out.push_str("label\n");
    for (proj, label) in result.projections.iter().zip(&labels) {
        for v in proj {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{label}\n"));
    }
    fs::write(&args.out, out)?;
    Ok(())
}

#[derive(Serialize)]
struct BenchErrorSidecar<'a> {
    command: &'a str,
    n: usize,
    k: usize,
    lambdas: &'a [f64],
    trials: usize,
    seed: u64,
    threads: usize,
    skipped_pairs: &'a [SkippedPairs],
}

fn cmd_bench_error(args: BenchErrorArgs) -> Result<()> {
    let lambdas = parse_f64_list(&args.lambdas, "lambda")?;
    let threads = threads_from_env();
    let report = bench_relative_error(args.n, args.k, &lambdas, args.trials, args.seed, threads)?;
    write_records_csv(&args.out, &report.records)?;
    let sidecar = BenchErrorSidecar {
        command: "bench relative-error",
        n: args.n,
        k: args.k,
        lambdas: &lambdas,
        trials: args.trials,
        seed: args.seed,
        threads,
        skipped_pairs: &report.skipped,
    };
    fs::write(
        args.out.with_extension("params.json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}

#[derive(Serialize)]
struct BenchTimingSidecar<'a> {
    command: &'a str,
    n: usize,
    k: usize,
    lambda: f64,
    seed: u64,
    threads: usize,
}

fn cmd_bench_timing(args: BenchTimingArgs) -> Result<()> {
    let threads = threads_from_env();
    let records = bench_timing(args.n, args.k, args.lambda, args.seed, threads)?;
    write_records_csv(&args.out, &records)?;
    let sidecar = BenchTimingSidecar {
        command: "bench timing",
        n: args.n,
        k: args.k,
        lambda: args.lambda,
        seed: args.seed,
        threads,
    };
    fs::write(
        args.out.with_extension("params.json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}
