use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use tailspec::experiment::{
    emit_report, run_experiment, run_fsm, run_plan, run_tune, run_verify, Emit, ExperimentConfig, FsmTrace,
    OutputFormat, TuneConfig, VerifyConfig,
};

#[derive(Parser)]
#[command(name = "tailspec", version, about = "Simulated adaptive speculative decoding for long-tail RL rollouts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full simulated RL run, baseline and speculative arms on the same seed.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Print the default configuration as TOML and exit.
        #[arg(long)]
        print_defaults: bool,
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Bandit tuner on a synthetic reward environment.
    Tune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        print_defaults: bool,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        swap_at: Option<usize>,
    },
    /// Losslessness suites: greedy token equality and sampled distributions.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        print_defaults: bool,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        cases: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Capture-plan memory, vanilla against bucketed.
    Plan {
        #[command(flatten)]
        common: Common,
    },
    /// Replay a scripted coordinator event trace (JSON).
    Fsm {
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report files.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

struct Failure {
    code: u8,
    body: Value,
}

impl Failure {
    fn new(code: u8, kind: &str, message: impl ToString) -> Self {
        Self {
            code,
            body: json!({ "error": kind, "message": message.to_string() }),
        }
    }

    fn with(mut self, key: &str, value: impl Serialize) -> Self {
        self.body[key] = serde_json::to_value(value).expect("error detail serialises");
        self
    }
}

fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::new(2, "config_read", e).with("path", path.display().to_string()))?;
    toml::from_str(&text)
        .map_err(|e| Failure::new(2, "config_parse", e.message()).with("path", path.display().to_string()))
}

fn invalid(e: tailspec::experiment::ConfigError) -> Failure {
    Failure::new(2, "config_invalid", &e.message).with("field", &e.path)
}

fn write<R: Emit>(report: &R, out: Option<&Path>, format: Format) -> Result<Vec<String>, Failure> {
    let Some(dir) = out else {
        return Ok(Vec::new());
    };
    let files = emit_report(report, dir, format.into()).map_err(|e| Failure::new(1, "output", e))?;
    Ok(files.iter().map(|p| p.display().to_string()).collect())
}

fn print_toml<T: Serialize>(value: &T) {
    print!("{}", toml::to_string_pretty(value).expect("config serialises"));
}

fn run(cli: Cli) -> Result<Option<Value>, Failure> {
    match cli.command {
        Command::Simulate {
            common,
            print_defaults,
            steps,
        } => {
            if print_defaults {
                print_toml(&ExperimentConfig::default());
                return Ok(None);
            }
            let mut cfg: ExperimentConfig = load(common.config.as_deref())?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            if let Some(s) = steps {
                cfg.rl_steps = s;
            }
            let report = run_experiment(&cfg).map_err(invalid)?;
            let files = write(&report, common.out.as_deref(), common.format)?;
            Ok(Some(json!({
                "seed": report.seed,
                "steps": report.steps.len(),
                "baseline_total": report.baseline_total,
                "tlt_total": report.tlt_total,
                "aggregate_speedup": report.aggregate_speedup,
                "files": files,
            })))
        }
        Command::Tune {
            common,
            print_defaults,
            epsilon,
            window,
            rounds,
            swap_at,
        } => {
            if print_defaults {
                print_toml(&TuneConfig::default());
                return Ok(None);
            }
            let mut cfg: TuneConfig = load(common.config.as_deref())?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            cfg.epsilon = epsilon.unwrap_or(cfg.epsilon);
            cfg.window = window.unwrap_or(cfg.window);
            cfg.rounds = rounds.unwrap_or(cfg.rounds);
            cfg.swap_at = swap_at.or(cfg.swap_at);
            let report = run_tune(&cfg).map_err(invalid)?;
            let files = write(&report, common.out.as_deref(), common.format)?;
            Ok(Some(json!({ "summary": report.summary, "files": files })))
        }
        Command::Verify {
            common,
            print_defaults,
            temperature,
            cases,
            samples,
        } => {
            if print_defaults {
                print_toml(&VerifyConfig::default());
                return Ok(None);
            }
            let mut cfg: VerifyConfig = load(common.config.as_deref())?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            cfg.temperature = temperature.unwrap_or(cfg.temperature);
            cfg.cases = cases.unwrap_or(cfg.cases);
            cfg.samples = samples.unwrap_or(cfg.samples);
            let report = run_verify(&cfg).map_err(invalid)?;
            let files = write(&report, common.out.as_deref(), common.format)?;
            let summary = json!({
                "temperature": report.temperature,
                "cases": report.cases.len(),
                "mismatches": report.mismatches,
                "identical": report.mismatches == 0,
                "max_tv": report.max_tv,
                "passed": report.passed,
                "files": files,
            });
            if report.passed {
                Ok(Some(summary))
            } else {
                Err(Failure::new(1, "verification_failed", "speculative output diverged from the reference")
                    .with("report", summary))
            }
        }
        Command::Plan { common } => {
            let mut cfg: ExperimentConfig = load(common.config.as_deref())?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            let report = run_plan(&cfg).map_err(invalid)?;
            let files = write(&report, common.out.as_deref(), common.format)?;
            Ok(Some(json!({ "summary": report.summary, "files": files })))
        }
        Command::Fsm { trace, out, format } => {
            let text = fs::read_to_string(&trace)
                .map_err(|e| Failure::new(2, "trace_read", e).with("path", trace.display().to_string()))?;
            let trace_doc: FsmTrace = serde_json::from_str(&text)
                .map_err(|e| Failure::new(2, "trace_parse", e).with("path", trace.display().to_string()))?;
            let report = run_fsm(&trace_doc)
                .map_err(|e| Failure::new(1, "fsm", &e).with("detail", &e))?;
            let files = write(&report, out.as_deref(), format)?;
            Ok(Some(json!({
                "events": report.events.len(),
                "messages": report.log.len(),
                "files": files,
            })))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let body = json!({ "error": "usage", "message": e.kind().to_string(), "detail": e.to_string() });
            eprintln!("{body}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(Some(summary)) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.body);
            ExitCode::from(f.code)
        }
    }
}
