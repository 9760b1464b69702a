mod config;
mod output;
mod tasks;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::Value;

use config::ExperimentConfig;
use stable_harnack::Error;

#[derive(Parser)]
#[command(
    name = "stable-harnack",
    version,
    about = "Experiments on harmonic functions of symmetric stable processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment described by a config file
    Run {
        /// Path to the config file
        #[arg(long)]
        config: PathBuf,
        /// Override the seed given in the config
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: the config's [output] dir, else runs/<task>)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every config matching a glob pattern and write a summary table
    Sweep {
        /// Glob pattern selecting config files, e.g. 'configs/*.cfg'
        #[arg(long)]
        configs: String,
        /// Directory for per-run outputs and summary.csv (default: runs/sweep)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse a config and construct its model without running anything
    Validate {
        /// Path to the config file
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, seed, out } => cmd_run(&config, seed, out.as_deref()),
        Command::Sweep { configs, out } => cmd_sweep(&configs, out.as_deref()),
        Command::Validate { config } => cmd_validate(&config),
    };
    ExitCode::from(code)
}

/// Errors that mean "the verification could not conclude at this budget"
/// rather than "the run is broken"; they map to exit status 2.
fn soft_failure(e: &Error) -> bool {
    matches!(e, Error::NoiseFloor(_) | Error::McBudget(_))
}

fn resolve_out_dir(cfg: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    if let Some(dir) = out {
        return dir.to_path_buf();
    }
    if let Some(dir) = &cfg.out_dir {
        return dir.clone();
    }
    PathBuf::from("runs").join(&cfg.task)
}

fn cmd_run(config_path: &Path, seed: Option<u64>, out: Option<&Path>) -> u8 {
    let mut cfg = match config::load(config_path) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out_dir = resolve_out_dir(&cfg, out);
    let (code, _) = run_into(&cfg, &out_dir);
    code
}

/// Runs one config into `out_dir`; returns the exit code and, when the task
/// produced a report, its JSON value for summary extraction.
fn run_into(cfg: &ExperimentConfig, out_dir: &Path) -> (u8, Option<Value>) {
    if let Err(e) = output::ensure_dir(out_dir) {
        eprintln!("error: cannot create {}: {e}", out_dir.display());
        return (1, None);
    }
    let started = Instant::now();
    match tasks::run_task(cfg, out_dir) {
        Ok(outcome) => {
            let wall = started.elapsed().as_secs_f64();
            let status = if outcome.conclusive {
                "conclusive"
            } else {
                "inconclusive"
            };
            let io = output::write_report(out_dir, &cfg.task, cfg.seed, &outcome.report)
                .and_then(|()| output::write_manifest(out_dir, cfg, &outcome, wall, status));
            if let Err(e) = io {
                eprintln!("error: writing artifacts to {}: {e}", out_dir.display());
                return (1, None);
            }
            println!(
                "{}: {} ({} s) -> {}",
                cfg.task,
                status,
                format_args!("{wall:.2}"),
                out_dir.display()
            );
            (if outcome.conclusive { 0 } else { 2 }, Some(outcome.report))
        }
        Err(e) => {
            let soft = soft_failure(&e);
            let _ = output::write_error_report(out_dir, &cfg.task, cfg.seed, &e.to_string());
            eprintln!("error: {e}");
            (if soft { 2 } else { 1 }, None)
        }
    }
}

fn cmd_validate(config_path: &Path) -> u8 {
    let cfg = match config::load(config_path) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match tasks::validate(&cfg) {
        Ok(hash) => {
            println!(
                "ok: task={} dimension={} alpha={} seed={} model={hash}",
                cfg.task, cfg.model.dimension, cfg.model.alpha, cfg.seed
            );
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Headline columns per task, as (column name, JSON pointer into the report).
fn headline_columns(task: &str) -> &'static [(&'static str, &'static str)] {
    match task {
        "symbol" => &[
            ("phi_e1", "/phi_e1"),
            ("anisotropy_ratio", "/anisotropy_ratio"),
            ("homogeneity_defect", "/homogeneity_defect"),
        ],
        "density" => &[
            ("mass", "/mass"),
            ("ringing", "/ringing"),
            ("heat_kernel_constant", "/heat_kernel_constant"),
        ],
        "green" => &[
            ("g_at_unit_e1", "/g_at_unit_e1"),
            ("homogeneity_defect", "/homogeneity_defect"),
        ],
        "exit" => &[
            ("mean_steps", "/mean_steps"),
            ("ks_vs_exact_radial_law", "/ks_vs_exact_radial_law"),
        ],
        "green_avg_bound" => &[("c_avg", "/constants/c_avg")],
        "green_lower_bound" => &[
            ("c_floor", "/constants/c_floor"),
            ("delta1", "/constants/delta1"),
        ],
        "green_comparison" => &[("c_ratio", "/constants/c_ratio")],
        "harnack" => &[("c1", "/c1"), ("n_paths_total", "/n_paths_total")],
        "hoelder" => &[
            ("beta_theory", "/iteration/beta_theory"),
            ("beta_fit", "/exponent/beta_fit"),
            ("beta_std_err", "/exponent/beta_std_err"),
        ],
        "tail" => &[
            ("zeta_fit", "/zeta_fit"),
            ("c_fit", "/c_fit"),
            ("max_residual", "/max_residual"),
        ],
        _ => &[],
    }
}

fn cmd_sweep(pattern: &str, out: Option<&Path>) -> u8 {
    let paths = match glob::glob(pattern) {
        Ok(iter) => {
            let mut v: Vec<PathBuf> = Vec::new();
            for entry in iter {
                match entry {
                    Ok(p) => v.push(p),
                    Err(e) => {
                        eprintln!("error: reading glob entry: {e}");
                        return 1;
                    }
                }
            }
            v.sort();
            v
        }
        Err(e) => {
            eprintln!("error: bad glob pattern '{pattern}': {e}");
            return 1;
        }
    };

    let sweep_dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("runs").join("sweep"));
    if let Err(e) = output::ensure_dir(&sweep_dir) {
        eprintln!("error: cannot create {}: {e}", sweep_dir.display());
        return 1;
    }

    // empty match set: still a valid (vacuous) sweep
    if paths.is_empty() {
        if let Err(e) = std::fs::write(sweep_dir.join("summary.csv"), "config,task,status\n") {
            eprintln!("error: {e}");
            return 1;
        }
        println!("sweep: 0 configs matched '{pattern}'");
        return 0;
    }

    // all configs must parse and agree on the task before anything runs
    let mut configs = Vec::new();
    for path in &paths {
        match config::load(path) {
            Ok(cfg) => configs.push(cfg),
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return 1;
            }
        }
    }
    let task = configs[0].task.clone();
    if let Some(odd) = configs.iter().find(|c| c.task != task) {
        eprintln!(
            "error: mixed tasks in sweep: '{}' ({}) vs '{}' ({})",
            task,
            configs[0].source_path.display(),
            odd.task,
            odd.source_path.display()
        );
        return 1;
    }

    let columns = headline_columns(&task);
    let mut csv = String::from("config,task,status");
    for (name, _) in columns {
        csv.push(',');
        csv.push_str(name);
    }
    csv.push('\n');

    let mut any_error = false;
    let mut any_inconclusive = false;
    for (idx, cfg) in configs.iter().enumerate() {
        let stem = Path::new(&cfg.source_path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("config_{idx}"));
        let run_dir = sweep_dir.join(format!("{idx:03}_{stem}"));
        // a failed row keeps the sweep going; the exit code reflects the worst row
        let (code, report) = run_into(cfg, &run_dir);
        match code {
            0 => {}
            2 => any_inconclusive = true,
            _ => any_error = true,
        }
        let status = match code {
            0 => "conclusive",
            2 => "inconclusive",
            _ => "error",
        };
        csv.push_str(&format!("{},{task},{status}", cfg.source_path.display()));
        for (_, pointer) in columns {
            csv.push(',');
            if let Some(v) = report.as_ref().and_then(|r| r.pointer(pointer)) {
                match v {
                    Value::Number(n) => csv.push_str(&n.to_string()),
                    Value::Null => {}
                    other => csv.push_str(&other.to_string()),
                }
            }
        }
        csv.push('\n');
    }

    if let Err(e) = std::fs::write(sweep_dir.join("summary.csv"), &csv) {
        eprintln!("error: {e}");
        return 1;
    }
    println!(
        "sweep: {} configs, summary at {}",
        configs.len(),
        sweep_dir.join("summary.csv").display()
    );
    if any_error {
        1
    } else if any_inconclusive {
        2
    } else {
        0
    }
}
