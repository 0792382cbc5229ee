use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use adafix::analysis::{recede_bound, recede_bound_scalar, BoundForm, RecedeBoundInput, RecedeScalars};
use adafix::harness::config::parse_vector;
use adafix::harness::{
    compare_optimizers, export_csv, run_experiment, run_verification_suite, ExperimentConfig,
    SuiteKind, SuiteOptions,
};
use adafix::{Error, OptimizerKind};

const EXIT_USAGE: u8 = 1;
const EXIT_SUITE_FAILURE: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "adafix", version, about = "Adaptive optimizer experiments and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its trajectory as CSV.
    Run(RunArgs),
    /// Run a randomised verification suite and print a JSON report.
    Verify(VerifyArgs),
    /// Run several optimizers on the same setup and print a JSON summary.
    Compare(CompareArgs),
    /// Print the recede bound for the given inputs.
    Bound(BoundArgs),
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` assignments applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    objective: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated starting point.
    #[arg(long)]
    x0: Option<String>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    record_every: Option<u64>,
    #[arg(long)]
    l0: Option<f64>,
    /// AdaFix: compare the signed gradient maximum against L * eta.
    #[arg(long)]
    gate_signed: bool,
    /// AdaFix: never reopen the gate once it has closed.
    #[arg(long)]
    freeze_permanent: bool,
}

impl ConfigArgs {
    fn build(&self, optimizer: Option<&str>) -> Result<ExperimentConfig, Error> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_text(&std::fs::read_to_string(path)?)?;
        }
        let mut pairs: Vec<(String, String)> = Vec::new();
        if let Some(v) = &self.objective {
            pairs.push(("objective".into(), v.clone()));
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            pairs.push((k.into(), v.into()));
        }
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k.into(), v));
            }
        };
        push("optimizer", optimizer.map(str::to_string));
        push("eta", self.eta.map(|v| v.to_string()));
        push("steps", self.steps.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("x0", self.x0.clone());
        push("noise_sigma", self.noise_sigma.map(|v| v.to_string()));
        push("record_every", self.record_every.map(|v| v.to_string()));
        push("l0", self.l0.map(|v| v.to_string()));
        if self.gate_signed {
            push("gate", Some("signed".into()));
        }
        if self.freeze_permanent {
            push("freeze_permanent", Some("true".into()));
        }
        for (k, v) in pairs {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    optimizer: Option<String>,
    /// CSV output path; overrides `output` in the config. Without either,
    /// CSV goes to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// theorem31, gradients or optimizer_properties.
    #[arg(long)]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    cases: usize,
    /// Steps per run for optimizer_properties.
    #[arg(long, default_value_t = 1000)]
    run_steps: u64,
    /// Use the literal printed bound expression instead of the exact root.
    #[arg(long)]
    bound_literal: bool,
    /// Write the full report here; stdout gets only the summary.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Comma-separated optimizer names.
    #[arg(long, default_value = "adam,adafix,amsgrad")]
    optimizers: String,
    /// Directory to write one trajectory CSV per optimizer.
    #[arg(long)]
    csv_dir: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    eta: f64,
    /// |x - x*|; use with --grad-norm.
    #[arg(long, requires = "grad_norm", conflicts_with_all = ["x", "x_star", "grad"])]
    dist: Option<f64>,
    #[arg(long)]
    grad_norm: Option<f64>,
    /// Comma-separated iterate; use with --x-star and --grad.
    #[arg(long, requires_all = ["x_star", "grad"])]
    x: Option<String>,
    #[arg(long)]
    x_star: Option<String>,
    #[arg(long)]
    grad: Option<String>,
    #[arg(long)]
    bound_literal: bool,
}

fn form(literal: bool) -> BoundForm {
    if literal {
        BoundForm::Literal
    } else {
        BoundForm::Exact
    }
}

fn write_json(value: &impl serde::Serialize, path: Option<&PathBuf>) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<u8, Error> {
    let mut cfg = args.cfg.build(args.optimizer.as_deref())?;
    if let Some(out) = args.output {
        cfg.output = Some(out);
    }
    let record = run_experiment(&cfg)?;
    if cfg.output.is_none() {
        record.write_csv(std::io::stdout().lock())?;
    }
    if let Some(d) = &record.divergence {
        eprintln!("diverged at step {}: {}", d.step, d.reason);
        return Ok(EXIT_DIVERGED);
    }
    Ok(0)
}

fn verify(args: VerifyArgs) -> Result<u8, Error> {
    let kind: SuiteKind = args.suite.parse()?;
    let opts = SuiteOptions {
        bound_form: form(args.bound_literal),
        run_steps: args.run_steps,
    };
    let report = run_verification_suite(kind, args.seed, args.cases, &opts)?;
    if let Some(path) = &args.output {
        write_json(&report, Some(path))?;
    }
    let summary = serde_json::json!({
        "kind": report.kind,
        "seed": report.seed,
        "n_cases": report.n_cases,
        "passed": report.passed,
        "failed": report.failed,
        "checks": report.checks,
        "failures": report.cases.iter().filter(|c| !c.pass).take(5).collect::<Vec<_>>(),
    });
    write_json(&summary, None)?;
    Ok(if report.all_passed() { 0 } else { EXIT_SUITE_FAILURE })
}

fn compare(args: CompareArgs) -> Result<u8, Error> {
    let cfgs = args
        .optimizers
        .split(',')
        .map(|name| {
            let kind: OptimizerKind = name.trim().parse()?;
            args.cfg.build(Some(kind.name()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let summary = compare_optimizers(&cfgs)?;
    if let Some(dir) = &args.csv_dir {
        for cfg in &cfgs {
            export_csv(&run_experiment(cfg)?, &dir.join(format!("{}.csv", cfg.optimizer)))?;
        }
    }
    write_json(&summary, args.output.as_ref())?;
    Ok(0)
}

fn bound(args: BoundArgs) -> Result<u8, Error> {
    let form = form(args.bound_literal);
    let value = match (args.dist, args.grad_norm, &args.x) {
        (Some(dist), Some(grad_norm), None) => recede_bound_scalar(
            &RecedeScalars {
                dist,
                grad_norm,
                delta: args.delta,
                eta: args.eta,
            },
            form,
        )?,
        (None, _, Some(x)) => {
            let input = RecedeBoundInput {
                x: parse_vector("x", x)?,
                x_star: parse_vector("x_star", args.x_star.as_deref().unwrap_or_default())?,
                g: parse_vector("grad", args.grad.as_deref().unwrap_or_default())?,
                delta: args.delta,
                eta: args.eta,
            };
            recede_bound(&input, form)?
        }
        _ => {
            return Err(Error::Config(
                "give either --dist and --grad-norm or --x, --x-star and --grad".into(),
            ))
        }
    };
    println!("{value:?}");
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Verify(a) => verify(a),
        Command::Compare(a) => compare(a),
        Command::Bound(a) => bound(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
