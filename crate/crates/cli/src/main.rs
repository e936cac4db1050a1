mod commands;
mod io;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use archimax::inference::blockmax::BlockRule;
use archimax::inference::{Norm, PairwiseMethod, Scaling};
use archimax::{Error, Result};
use clap::{Parser, Subcommand, ValueEnum};

use commands::{FitOptions, FitTarget, Outcome, TestOptions};
use manifest::{FileDigest, Manifest};

#[derive(Parser, Debug)]
#[command(name = "archimax", version, about = "Clustered Archimax copulas: simulation, extremes and inference")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a sample on the copula scale.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the limiting stdf at a point.
    EvalStdf {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated point, e.g. `1,0.5,0,2`.
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[arg(long, default_value_t = 200_000)]
        n_mc: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Empirical χ(q) curves with 95% intervals.
    Chi {
        #[arg(long)]
        data: PathBuf,
        /// 1-based pairs, e.g. `1-2,4-7`.
        #[arg(long)]
        pairs: String,
        /// Comma-separated levels.
        #[arg(long, conflicts_with = "q_grid", required_unless_present = "q_grid")]
        q: Option<String>,
        /// `start:end:count`.
        #[arg(long)]
        q_grid: Option<String>,
        /// Data are already uniform; skip the rank transform.
        #[arg(long)]
        copula_scale: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Upper tail coefficients of the limiting stdf.
    Tailcoeff {
        #[arg(long)]
        config: PathBuf,
        /// 1-based pairs; all pairs when omitted.
        #[arg(long)]
        pairs: Option<String>,
        #[arg(long, default_value_t = 200_000)]
        n_mc: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate generator parameters, Pickands functions or radial correlations.
    Fit {
        #[arg(value_enum)]
        target: Target,
        #[arg(long)]
        data: PathBuf,
        /// Partition and families; parameters are ignored except by `radial`.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Shared)]
        method: Method,
        /// Simplex grid resolution for Pickands estimates (1/m steps).
        #[arg(long, default_value_t = 10)]
        grid_step: usize,
        /// Quadrature nodes per axis for the radial likelihood.
        #[arg(long, default_value_t = 64)]
        nodes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Test equality of the generator parameter within each cluster.
    Test {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        n_mc: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = NormArg::Euclid)]
        norm: NormArg,
        #[arg(long, value_enum, default_value_t = ScalingArg::SqrtN)]
        scaling: ScalingArg,
        #[arg(long, value_enum, default_value_t = Method::Shared)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
    },
    /// Block maxima of dated series over selected months.
    Preprocess {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "date")]
        date_column: String,
        /// e.g. `sep,oct,nov` or `9,10,11`.
        #[arg(long)]
        months: String,
        #[arg(long, value_enum, default_value_t = BlockArg::Month)]
        block: BlockArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run a manifest and compare output digests.
    Replay {
        manifest: PathBuf,
        /// Where the re-run writes (default: a fresh temporary directory).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Target {
    Theta,
    Pickands,
    Radial,
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Method {
    Shared,
    Pseudo,
    Moment,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum NormArg {
    Sup,
    Euclid,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ScalingArg {
    SqrtN,
    Raw,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum BlockArg {
    Month,
    Year,
}

impl From<Method> for PairwiseMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Shared => PairwiseMethod::SharedPseudoLikelihood,
            Method::Pseudo => PairwiseMethod::PseudoLikelihood,
            Method::Moment => PairwiseMethod::MomentInversion,
        }
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::EvalStdf { .. } => "eval-stdf",
            Command::Chi { .. } => "chi",
            Command::Tailcoeff { .. } => "tailcoeff",
            Command::Fit { .. } => "fit",
            Command::Test { .. } => "test",
            Command::Preprocess { .. } => "preprocess",
            Command::Replay { .. } => "replay",
        }
    }
}

fn execute(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Simulate { config, n, seed, out } => commands::simulate(config, *n, *seed, out),
        Command::EvalStdf { config, x, n_mc, seed, out } => commands::eval_stdf(config, x, *n_mc, *seed, out),
        Command::Chi { data, pairs, q, q_grid, copula_scale, out } => {
            let levels = match (q, q_grid) {
                (Some(q), _) => commands::parse_list(q)?,
                (None, Some(g)) => commands::parse_grid(g)?,
                (None, None) => return Err(Error::domain("give --q or --q-grid")),
            };
            commands::chi(data, pairs, &levels, *copula_scale, out)
        }
        Command::Tailcoeff { config, pairs, n_mc, seed, out } => commands::tailcoeff(config, pairs.as_deref(), *n_mc, *seed, out),
        Command::Fit { target, data, config, method, grid_step, nodes, out } => {
            let target = match target {
                Target::Theta => FitTarget::Theta,
                Target::Pickands => FitTarget::Pickands,
                Target::Radial => FitTarget::Radial,
                Target::All => FitTarget::All,
            };
            let opts = FitOptions { method: (*method).into(), grid_step: *grid_step, nodes: *nodes };
            commands::fit(target, data, config, &opts, out)
        }
        Command::Test { data, config, n_mc, seed, norm, scaling, method, out } => {
            let opts = TestOptions {
                method: (*method).into(),
                norm: match norm {
                    NormArg::Sup => Norm::Sup,
                    NormArg::Euclid => Norm::Euclid,
                },
                scaling: match scaling {
                    ScalingArg::SqrtN => Scaling::SqrtN,
                    ScalingArg::Raw => Scaling::Raw,
                },
                n_mc: *n_mc,
                seed: *seed,
            };
            commands::test(data, config, &opts, out)
        }
        Command::Preprocess { data, date_column, months, block, out } => {
            let rule = match block {
                BlockArg::Month => BlockRule::Month,
                BlockArg::Year => BlockRule::Year,
            };
            commands::preprocess(data, date_column, months, rule, out)
        }
        Command::Replay { .. } => unreachable!("replay is dispatched separately"),
    }
}

/// Runs a command and writes its manifest next to the primary output.
fn run_recorded(cmd: &Command, args: Vec<String>) -> Result<Outcome> {
    let start = Instant::now();
    let outcome = execute(cmd)?;
    let digests = |paths: &[PathBuf]| paths.iter().map(|p| FileDigest::of(p)).collect::<Result<Vec<_>>>();
    let m = Manifest {
        command: cmd.name().to_string(),
        args,
        cwd: std::env::current_dir()?,
        seed: outcome.seed,
        config: outcome.config.clone(),
        versions: manifest::versions(),
        threads: rayon::current_num_threads(),
        wall_seconds: start.elapsed().as_secs_f64(),
        inputs: digests(&outcome.inputs)?,
        outputs: digests(&outcome.outputs)?,
        summary: outcome.summary.clone(),
    };
    m.write(&outcome.outputs[0])?;
    Ok(outcome)
}

/// `args` with the value of `--out` replaced.
fn rewrite_out(args: &[String], out: &Path) -> Result<Vec<String>> {
    let mut res = Vec::with_capacity(args.len());
    let mut found = false;
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--out" {
            it.next();
            res.push(a.clone());
            res.push(out.display().to_string());
            found = true;
        } else if a.starts_with("--out=") {
            res.push(format!("--out={}", out.display()));
            found = true;
        } else {
            res.push(a.clone());
        }
    }
    if found {
        Ok(res)
    } else {
        Err(Error::domain("manifest arguments have no --out"))
    }
}

fn replay(path: &Path, out_dir: Option<&Path>) -> Result<()> {
    let m = Manifest::read(path)?;
    let changed = m.changed_inputs()?;
    if !changed.is_empty() {
        let list: Vec<String> = changed.iter().map(|p| p.display().to_string()).collect();
        return Err(Error::domain(format!("inputs changed since the recorded run: {}", list.join(", "))));
    }
    let dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => std::env::temp_dir().join(format!("archimax-replay-{}", std::process::id())),
    };
    std::fs::create_dir_all(&dir)?;
    let dir = std::fs::canonicalize(&dir)?;
    let primary = m.outputs.first().ok_or_else(|| Error::domain("manifest records no outputs"))?;
    let name = primary.path.file_name().ok_or_else(|| Error::domain("recorded output has no file name"))?;
    let args = rewrite_out(&m.args, &dir.join(name))?;
    let cli = Cli::try_parse_from(std::iter::once("archimax".to_string()).chain(args.iter().cloned()))
        .map_err(|e| Error::domain(format!("recorded arguments no longer parse: {e}")))?;
    std::env::set_current_dir(&m.cwd)?;
    let outcome = run_recorded(&cli.command, args)?;
    let mut mismatched = Vec::new();
    for (rec, new) in m.outputs.iter().zip(&outcome.outputs) {
        let got = FileDigest::of(new)?;
        if got.sha256 != rec.sha256 {
            mismatched.push(rec.path.display().to_string());
        }
    }
    if m.outputs.len() != outcome.outputs.len() {
        mismatched.push(format!("{} outputs recorded, {} produced", m.outputs.len(), outcome.outputs.len()));
    }
    if !mismatched.is_empty() {
        return Err(Error::numerical(format!("replay differs from the recorded run: {}", mismatched.join(", "))));
    }
    println!("replay identical: {} output(s) in {}", outcome.outputs.len(), dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot configure {t} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let res = match &cli.command {
        Command::Replay { manifest, out_dir } => replay(manifest, out_dir.as_deref()),
        cmd => run_recorded(cmd, raw).map(|_| ()),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
