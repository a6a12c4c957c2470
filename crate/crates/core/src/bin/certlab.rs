use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use certlab::experiments::{
    run_certify, run_experiment, run_glm_bound, run_solve, run_width, thread_pool, threads_from_env, write_outputs,
    ExperimentConfig, ExperimentKind, OutputFormat, ProblemConfig,
};
use certlab::Error;

#[derive(Parser)]
#[command(name = "certlab", version, about = "Structured-ℓ1 estimation, certificates and recovery experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (experiments default to the configured one, problems to stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configured trial count.
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Penalized estimator or basis pursuit for one problem.
    Solve,
    /// Global, tangent and interior certificates at the anchor.
    Certify,
    /// Monte Carlo Gaussian width at the anchor.
    Width,
    /// Recovery rate against the Gordon prediction over `n_grid`.
    Phase,
    /// Inequality slacks on seeded solved instances.
    OracleAudit,
    /// Lasso, group and mixed estimators on shared data.
    MixedDemo,
    /// Nuclear-norm matrix completion.
    MatcompDemo,
    /// GLM oracle bound with grid-certified curvature.
    GlmBound,
}

impl Command {
    fn experiment(self) -> Option<ExperimentKind> {
        match self {
            Command::Phase => Some(ExperimentKind::Phase),
            Command::OracleAudit => Some(ExperimentKind::OracleAudit),
            Command::MixedDemo => Some(ExperimentKind::MixedDemo),
            Command::MatcompDemo => Some(ExperimentKind::MatcompDemo),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Certify => "certify",
            Command::Width => "width",
            Command::GlmBound => "glm_bound",
            Command::Phase => "phase",
            Command::OracleAudit => "oracle_audit",
            Command::MixedDemo => "mixed_demo",
            Command::MatcompDemo => "matcomp_demo",
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("certlab: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: &Cli) -> certlab::Result<()> {
    let path = cli
        .global
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let pool = thread_pool(threads_from_env()?)?;
    match cli.command.experiment() {
        Some(kind) => pool.install(|| run_experiment_cmd(cli, path, kind)),
        None => pool.install(|| run_problem_cmd(cli, path)),
    }
}

fn run_experiment_cmd(cli: &Cli, path: &Path, kind: ExperimentKind) -> certlab::Result<()> {
    let mut cfg = ExperimentConfig::load(path)?;
    if cfg.kind != kind {
        return Err(Error::Config(format!("config kind is {:?}, command expects {:?}", cfg.kind, kind)));
    }
    if let Some(seed) = cli.global.seed {
        cfg.seed = seed;
    }
    if let Some(t) = cli.global.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    let outcome = run_experiment(&cfg)?;
    let dir = cli.global.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let format = match cli.global.format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    for p in write_outputs(&cfg, &outcome, &dir, format)? {
        println!("{}", p.display());
    }
    let errors = outcome.records().iter().filter(|r| r.is_error()).count();
    if errors > 0 {
        eprintln!("certlab: {errors} trial(s) failed; see the status column");
    }
    Ok(())
}

fn run_problem_cmd(cli: &Cli, path: &Path) -> certlab::Result<()> {
    let mut cfg = ProblemConfig::load(path)?;
    if let Some(seed) = cli.global.seed {
        cfg.seed = seed;
    }
    if let Some(t) = cli.global.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    let value = match cli.command {
        Command::Solve => run_solve(&cfg)?,
        Command::Certify => run_certify(&cfg)?,
        Command::Width => run_width(&cfg)?,
        Command::GlmBound => run_glm_bound(&cfg)?,
        _ => unreachable!("experiments are dispatched separately"),
    };
    let text = match cli.global.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&value).map_err(|e| Error::Io(e.to_string()))?;
            s.push('\n');
            s
        }
        Format::Csv => flat_csv(&value),
    };
    match &cli.global.out {
        None => print!("{text}"),
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let ext = match cli.global.format {
                Format::Csv => "csv",
                Format::Json => "json",
            };
            let file = dir.join(format!("{}.{ext}", cli.command.name()));
            std::fs::write(&file, text)?;
            println!("{}", file.display());
        }
    }
    Ok(())
}

/// `key,value` rows with dotted paths; arrays are indexed.
fn flat_csv(v: &serde_json::Value) -> String {
    fn walk(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, String)>) {
        let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
        match v {
            serde_json::Value::Object(m) => m.iter().for_each(|(k, x)| walk(&join(k), x, out)),
            serde_json::Value::Array(a) => a.iter().enumerate().for_each(|(i, x)| walk(&join(&i.to_string()), x, out)),
            serde_json::Value::Null => out.push((prefix.to_string(), String::new())),
            serde_json::Value::String(s) => out.push((prefix.to_string(), s.clone())),
            other => out.push((prefix.to_string(), other.to_string())),
        }
    }
    let mut rows = Vec::new();
    walk("", v, &mut rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["key", "value"]).expect("in-memory write");
    for (k, x) in rows {
        w.write_record([k, x]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}
