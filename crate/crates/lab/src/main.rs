use clap::{Parser, Subcommand};
use lab::{Config, Experiment, RunManifest};
use std::path::PathBuf;
use std::process::ExitCode;

/// Runs the bbmre experiments. Exit status: 0 when every check passes,
/// 2 when a check fails, 1 on errors.
#[derive(Parser)]
#[command(name = "lab", version)]
struct Cli {
    /// Output root; defaults to $BBMRE_OUT, else ./lab-output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Run the default config of one experiment, or of all of them with
    /// `acceptance`, and print one line per check or criterion.
    Check {
        suite: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Spread-against-median run on the lattice.
    Figure1 {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Environment seeds, e.g. `--seeds 1,2`.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Lattice environment file; replaces the seeds.
        #[arg(long)]
        env_file: Option<String>,
        /// Further overrides as `key=value` with a TOML value.
        #[arg(long = "set")]
        overrides: Vec<String>,
    },
    /// List the documented keys of an experiment.
    Keys { experiment: String },
}

fn parse_override(text: &str) -> lab::Result<(String, toml::Value)> {
    let (k, v) = text.split_once('=').ok_or_else(|| lab::Error::Config(format!("expected key=value, got {text:?}")))?;
    let doc: toml::Table = toml::from_str(&format!("v = {v}"))?;
    Ok((k.trim().to_string(), doc["v"].clone()))
}

fn execute(cli: Cli) -> lab::Result<bool> {
    let root = cli.out.unwrap_or_else(lab::output_root);
    let report = |m: &RunManifest| {
        for line in lab::check_lines(m) {
            println!("{line}");
        }
        for w in &m.warnings {
            println!("WARN {w}");
        }
        m.passed()
    };
    match cli.command {
        Command::Run { config } => {
            let c = Config::parse(&std::fs::read_to_string(&config)?)?;
            let m = lab::run(&c, &root)?;
            println!("{} -> {}", m.experiment, lab::run_dir(&c, &root).display());
            Ok(report(&m))
        }
        Command::Check { suite, seed } => {
            if suite == "acceptance" {
                let mut manifests = Vec::new();
                for e in Experiment::ALL {
                    manifests.push(lab::run(&Config::new(e, seed), &root)?);
                }
                let results = lab::criteria(&manifests);
                for r in &results {
                    println!(
                        "{} criterion {}: {}",
                        if r.passed { "PASS" } else { "FAIL" },
                        r.criterion,
                        r.details.join("; ")
                    );
                }
                Ok(results.iter().all(|r| r.passed))
            } else {
                let m = lab::run(&Config::new(Experiment::from_name(&suite)?, seed), &root)?;
                Ok(report(&m))
            }
        }
        Command::Figure1 { seed, seeds, env_file, overrides } => {
            let mut c = Config::new(Experiment::Figure1, seed);
            if !seeds.is_empty() {
                c.set("seeds", toml::Value::Array(seeds.iter().map(|s| toml::Value::Integer(*s as i64)).collect()))?;
            }
            if let Some(f) = env_file {
                c.set("env_file", toml::Value::String(f))?;
            }
            for o in &overrides {
                let (k, v) = parse_override(o)?;
                c.set(&k, v)?;
            }
            let m = lab::run(&c, &root)?;
            println!("figure1 -> {}", lab::run_dir(&c, &root).display());
            Ok(report(&m))
        }
        Command::Keys { experiment } => {
            for k in Experiment::from_name(&experiment)?.keys() {
                println!("{} = {}  # {}", k.name, k.default.unwrap_or("(unset)"), k.doc);
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
