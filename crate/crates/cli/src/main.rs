use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use subdiff::cq::CQContext;
use subdiff::experiments::{run_adaptive, run_convergence, selftest, MeshFamily, StudyConfig};

#[derive(Parser)]
#[command(name = "subdiff", version, about = "Convergence and adaptivity studies for time-fractional subdiffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Error and estimator table over a sequence of N, as CSV.
    Converge(StudyArgs),
    /// Mark-and-bisect run plus a uniform baseline, written into the --out directory.
    Adaptive(StudyArgs),
    /// Convolution quadrature and L1 weights of one mesh, as CSV.
    Weights(WeightArgs),
    /// Fast internal consistency checks.
    Selftest,
}

/// Flags override entries of the config file.
#[derive(Args)]
struct StudyArgs {
    /// Flat `key = value` file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    /// l1, l1corr or cq.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    /// uniform, adaptive or an exponent k ≥ 1.
    #[arg(long)]
    grading: Option<String>,
    /// Comma separated, increasing.
    #[arg(long)]
    n_list: Option<String>,
    #[arg(long)]
    theta_mark: Option<String>,
    #[arg(long)]
    m_sub: Option<String>,
    #[arg(long)]
    elements: Option<String>,
    /// Any config key, as `key=value`; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// CSV file for `converge`, directory for `adaptive`.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct WeightArgs {
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value = "uniform")]
    grading: String,
    /// Number of intervals.
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl StudyArgs {
    fn config(&self) -> Result<StudyConfig> {
        let mut cfg = StudyConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
        }
        let flags = [
            ("problem", &self.problem),
            ("scheme", &self.scheme),
            ("beta", &self.beta),
            ("lambda", &self.lambda),
            ("grading", &self.grading),
            ("n_list", &self.n_list),
            ("theta_mark", &self.theta_mark),
            ("m_sub", &self.m_sub),
            ("elements", &self.elements),
            ("out", &self.out),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v).with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        for kv in &self.set {
            let Some((k, v)) = kv.split_once('=') else {
                bail!("--set expects key=value, got {kv:?}");
            };
            cfg.set(k, v).with_context(|| format!("--set {kv}"))?;
        }
        Ok(cfg)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn converge(args: &StudyArgs) -> Result<()> {
    let cfg = args.config()?;
    let table = run_convergence(&cfg)?;
    emit(cfg.out.as_deref().map(Path::new), &table.to_csv())
}

fn adaptive(args: &StudyArgs) -> Result<()> {
    let cfg = args.config()?;
    let study = run_adaptive(&cfg)?;
    let Some(dir) = cfg.out.as_deref() else {
        return emit(None, &study.trace.to_csv());
    };
    let dir = Path::new(dir);
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    emit(Some(&dir.join("adaptive.csv")), &study.trace.to_csv())?;
    emit(Some(&dir.join("uniform.csv")), &study.baseline_csv())?;
    emit(Some(&dir.join("steps.csv")), &study.steps_csv())?;
    emit(Some(&dir.join("mesh.txt")), &study.trace.last().mesh().dump())?;
    eprintln!("{} iterations, stop: {:?}, final N = {}", study.trace.steps.len(), study.trace.stop, study.trace.last().intervals());
    Ok(())
}

fn weights(args: &WeightArgs) -> Result<()> {
    let family: MeshFamily = args.grading.parse()?;
    if family == MeshFamily::Adaptive {
        bail!("weights need a uniform or graded mesh");
    }
    let mesh = family.build(args.horizon, args.n)?;
    let csv = CQContext::new(&mesh, args.beta)?.weights_csv()?;
    emit(args.out.as_deref(), &csv)
}

fn run_selftest() -> Result<bool> {
    let checks = selftest()?;
    let mut ok = true;
    for c in &checks {
        println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
        ok &= c.passed;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Converge(a) => converge(a).map(|_| true),
        Command::Adaptive(a) => adaptive(a).map(|_| true),
        Command::Weights(a) => weights(a).map(|_| true),
        Command::Selftest => run_selftest(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: self-test failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
