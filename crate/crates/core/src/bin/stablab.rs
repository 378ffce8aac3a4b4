use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use stablab::experiments::{emit_report, execute, init_threads, ExperimentConfig, ExperimentKind, Status};

/// Run one experiment and write its report.
#[derive(Parser)]
#[command(name = "stablab", version)]
struct Cli {
    /// multiplier_audit, toy_oracle, linear_scan, amplification_scan,
    /// nonlinear_decay, threshold_sweep, convergence or residual_check
    experiment: String,
    /// JSON configuration merged over the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one field by dotted path, e.g. `physics.mu=1e-3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = |s: Status| ExitCode::from(s.exit_code() as u8);
    let cfg = cli
        .experiment
        .parse::<ExperimentKind>()
        .and_then(|kind| ExperimentConfig::load_file(kind, cli.config.as_deref(), &cli.set));
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("stablab: {e}");
            let config = serde_json::json!({ "set": cli.set, "config_file": cli.config });
            let threads = init_threads();
            if let Ok(path) = emit_report(&cli.out, &cli.experiment, &config, 0, Err(&e), 0.0, threads) {
                println!("manifest: {}", path.display());
            }
            return code(Status::ConfigError);
        }
    };
    if cli.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return code(Status::Pass);
    }
    match execute(&cfg, &cli.out) {
        Ok(run) => {
            if let Some(art) = &run.artifacts {
                for c in art.checks.iter() {
                    println!("{} {} = {:.6e} ({})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.target);
                }
                for c in art.exploratory.iter() {
                    println!("INFO {} = {:.6e} ({}: {})", c.name, c.value, c.target, if c.pass { "met" } else { "not met" });
                }
            }
            if let Some(e) = &run.error {
                eprintln!("stablab: {e}");
            }
            println!("manifest: {}", run.manifest.display());
            code(run.status)
        }
        Err(e) => {
            eprintln!("stablab: cannot write report: {e}");
            code(Status::ConfigError)
        }
    }
}
