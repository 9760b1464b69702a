//! Strict INI-style experiment configs. Four sections are recognized
//! ([model], [task], [params], [output]); unknown sections, unknown keys
//! and duplicate keys are all hard errors so that a typo cannot silently
//! change an experiment.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// How the spectral measure is specified on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureSpec {
    Isotropic { kappa: f64 },
    Cos2 { a: f64, b: f64 },
    AxisAtoms { weight: f64 },
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub dimension: usize,
    pub alpha: f64,
    pub measure: MeasureSpec,
}

pub const TASKS: &[&str] = &[
    "symbol",
    "density",
    "green",
    "exit",
    "green_avg_bound",
    "green_lower_bound",
    "green_comparison",
    "harnack",
    "hoelder",
    "tail",
];

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub task: String,
    pub seed: u64,
    /// Task-specific parameters, validated by the task itself.
    pub params: BTreeMap<String, String>,
    pub out_dir: Option<PathBuf>,
    /// Verbatim file contents, echoed into the run manifest.
    pub raw_text: String,
    pub source_path: PathBuf,
}

struct Section {
    entries: BTreeMap<String, String>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    fn require(&mut self, key: &str, section: &str) -> Result<String, ConfigError> {
        self.take(key)
            .ok_or_else(|| ConfigError(format!("[{section}] is missing required key '{key}'")))
    }

    fn finish(self, section: &str) -> Result<(), ConfigError> {
        if let Some(key) = self.entries.keys().next() {
            return err(format!("unknown key '{key}' in [{section}]"));
        }
        Ok(())
    }
}

fn parse_sections(text: &str) -> Result<BTreeMap<String, Section>, ConfigError> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return err(format!("line {}: unterminated section header", lineno + 1));
            };
            let name = name.trim().to_string();
            if !["model", "task", "params", "output"].contains(&name.as_str()) {
                return err(format!(
                    "line {}: unknown section [{name}] (expected model, task, params or output)",
                    lineno + 1
                ));
            }
            if sections.contains_key(&name) {
                return err(format!("line {}: duplicate section [{name}]", lineno + 1));
            }
            sections.insert(
                name.clone(),
                Section {
                    entries: BTreeMap::new(),
                },
            );
            current = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return err(format!(
                "line {}: expected 'key = value', got '{line}'",
                lineno + 1
            ));
        };
        let Some(section) = &current else {
            return err(format!(
                "line {}: key before any section header",
                lineno + 1
            ));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let entries = &mut sections.get_mut(section).unwrap().entries;
        if entries.contains_key(&key) {
            return err(format!(
                "line {}: duplicate key '{key}' in [{section}]",
                lineno + 1
            ));
        }
        entries.insert(key, value);
    }
    Ok(sections)
}

fn parse_f64(value: &str, key: &str) -> Result<f64, ConfigError> {
    value
        .parse::<f64>()
        .map_err(|_| ConfigError(format!("'{key}' must be a number, got '{value}'")))
}

fn parse_usize(value: &str, key: &str) -> Result<usize, ConfigError> {
    value
        .parse::<usize>()
        .map_err(|_| ConfigError(format!("'{key}' must be a non-negative integer, got '{value}'")))
}

pub fn parse(text: &str, source: &Path) -> Result<ExperimentConfig, ConfigError> {
    let mut sections = parse_sections(text)?;

    let mut model = sections
        .remove("model")
        .ok_or_else(|| ConfigError("missing [model] section".into()))?;
    let dimension = parse_usize(&model.require("dimension", "model")?, "dimension")?;
    if dimension != 2 && dimension != 3 {
        return err(format!("dimension must be 2 or 3, got {dimension}"));
    }
    let alpha = parse_f64(&model.require("alpha", "model")?, "alpha")?;
    let measure_kind = model.require("measure", "model")?;
    let measure = match measure_kind.as_str() {
        "isotropic" => MeasureSpec::Isotropic {
            kappa: parse_f64(&model.require("kappa", "model")?, "kappa")?,
        },
        "cos2" => MeasureSpec::Cos2 {
            a: parse_f64(&model.require("a", "model")?, "a")?,
            b: parse_f64(&model.require("b", "model")?, "b")?,
        },
        "axis_atoms" => MeasureSpec::AxisAtoms {
            weight: parse_f64(&model.require("weight", "model")?, "weight")?,
        },
        other => {
            return err(format!(
                "unknown measure '{other}' (expected isotropic, cos2 or axis_atoms)"
            ))
        }
    };
    model.finish("model")?;

    let mut task_section = sections
        .remove("task")
        .ok_or_else(|| ConfigError("missing [task] section".into()))?;
    let task = task_section.require("name", "task")?;
    if !TASKS.contains(&task.as_str()) {
        return err(format!(
            "unknown task '{task}' (expected one of: {})",
            TASKS.join(", ")
        ));
    }
    let seed = match task_section.take("seed") {
        Some(s) => s
            .parse::<u64>()
            .map_err(|_| ConfigError(format!("'seed' must be a u64, got '{s}'")))?,
        None => 0,
    };
    task_section.finish("task")?;

    let params = sections
        .remove("params")
        .map(|s| s.entries)
        .unwrap_or_default();

    let out_dir = match sections.remove("output") {
        Some(mut out) => {
            let dir = out.take("dir").map(PathBuf::from);
            out.finish("output")?;
            dir
        }
        None => None,
    };

    Ok(ExperimentConfig {
        model: ModelSpec {
            dimension,
            alpha,
            measure,
        },
        task,
        seed,
        params,
        out_dir,
        raw_text: text.to_string(),
        source_path: source.to_path_buf(),
    })
}

pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, path)
}
