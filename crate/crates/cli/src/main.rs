use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{debug, LevelFilter};

use scfr_core::experiment::{
    comparison_table, emit_plots, read_records, run_matrix, run_scenario, write_records, ExperimentError, PlotOptions,
    RunRecord, ScenarioConfig, ScenarioRun,
};

#[derive(Parser, Debug)]
#[command(name = "scfr", version, about = "Source clock frequency recovery laboratory")]
struct Cli {
    /// Only print errors.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write its per-packet CSV.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Directory for `<config stem>.csv`.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also write plot data and scripts into the output directory.
        #[arg(long)]
        plots: bool,
    },
    /// Run several scenarios in parallel and print a comparison table.
    Matrix {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        /// Write each run's CSV here as well.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit plot scripts for previously written run CSVs.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Source clock frequency the runs used.
        #[arg(long, default_value_t = 90_018.0)]
        source_hz: f64,
        /// Take PSD and convergence settings from this scenario file.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone, Copy)]
struct Overrides {
    /// Replace the seed of every scenario.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the packet count of every scenario.
    #[arg(long)]
    packets: Option<u64>,
}

enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        if e.is_validation() {
            Failure::Invalid(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn load_config(path: &Path, overrides: Overrides) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    let mut config = ScenarioConfig::parse(&text).map_err(|e| {
        let lines: Vec<_> = e.0.iter().map(|v| format!("{}: {v}", path.display())).collect();
        Failure::Invalid(lines.join("\n"))
    })?;
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(packets) = overrides.packets {
        config.traffic.packets = packets;
    }
    config
        .validate()
        .map_err(|e| Failure::Invalid(format!("{}:\n{e}", path.display())))?;
    Ok(config)
}

/// File stems as labels, suffixed when two inputs share one.
fn labels(paths: &[PathBuf]) -> Vec<String> {
    let mut seen = HashSet::new();
    paths
        .iter()
        .map(|p| {
            let stem = p.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
            let mut label = stem.clone();
            let mut n = 2;
            while !seen.insert(label.clone()) {
                label = format!("{stem}-{n}");
                n += 1;
            }
            label
        })
        .collect()
}

fn write_csv(dir: &Path, label: &str, records: &[RunRecord]) -> Result<PathBuf, Failure> {
    let runtime = |e: std::io::Error| Failure::Runtime(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(runtime)?;
    let path = dir.join(format!("{label}.csv"));
    let file = File::create(&path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    write_records(&mut out, records)?;
    out.flush()
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let quiet = cli.quiet;
    let say = |line: String| {
        if !quiet {
            println!("{line}");
        }
    };
    match cli.command {
        Command::Run {
            config,
            overrides,
            out,
            plots,
        } => {
            let label = labels(std::slice::from_ref(&config)).remove(0);
            let scenario = load_config(&config, overrides)?;
            let result = run_scenario(&scenario)?;
            let path = write_csv(&out, &label, &result.records)?;
            say(format!("{label}\n{}", result.summary.to_string().trim_end()));
            say(format!("wrote {}", path.display()));
            if plots && !result.records.is_empty() {
                let options = PlotOptions {
                    source_hz: result.summary.source_hz,
                    analysis: scenario.analysis.clone(),
                };
                for p in emit_plots(&[(label, &result.records)], &out, &options)? {
                    if p != path {
                        say(format!("wrote {}", p.display()));
                    }
                }
            }
        }
        Command::Matrix {
            configs,
            overrides,
            out,
        } => {
            // collect every problem before refusing to start
            let mut scenarios = Vec::new();
            let mut problems = Vec::new();
            for path in &configs {
                match load_config(path, overrides) {
                    Ok(c) => scenarios.push(c),
                    Err(Failure::Invalid(msg) | Failure::Runtime(msg)) => problems.push(msg),
                }
            }
            if !problems.is_empty() {
                return Err(Failure::Invalid(problems.join("\n")));
            }
            let runs: Vec<ScenarioRun> = run_matrix(&scenarios)?;
            let names = labels(&configs);
            if let Some(dir) = &out {
                for (label, run) in names.iter().zip(&runs) {
                    let path = write_csv(dir, label, &run.records)?;
                    say(format!("wrote {}", path.display()));
                }
            }
            let rows: Vec<_> = names.iter().cloned().zip(runs.iter().map(|r| &r.summary)).collect();
            say(comparison_table(&rows).trim_end().to_string());
        }
        Command::Plot {
            csv,
            out,
            source_hz,
            config,
        } => {
            let analysis = match &config {
                Some(path) => {
                    load_config(
                        path,
                        Overrides {
                            seed: None,
                            packets: None,
                        },
                    )?
                    .analysis
                }
                None => ScenarioConfig::default().analysis,
            };
            if !(source_hz.is_finite() && source_hz > 0.0) {
                return Err(Failure::Invalid(format!(
                    "--source-hz must be positive, got {source_hz}"
                )));
            }
            let mut runs = Vec::new();
            for path in &csv {
                let file = File::open(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
                let records = read_records(BufReader::new(file))
                    .map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
                debug!("{}: {} records", path.display(), records.len());
                runs.push(records);
            }
            let named: Vec<_> = labels(&csv).into_iter().zip(runs.iter().map(Vec::as_slice)).collect();
            let options = PlotOptions { source_hz, analysis };
            for p in emit_plots(&named, &out, &options)? {
                say(format!("wrote {}", p.display()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.quiet {
            LevelFilter::Error
        } else {
            LevelFilter::Warn
        })
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
