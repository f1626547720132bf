//! The `tracewatch` command line.
//!
//! Exit status: 0 when every log passes (or matches), 1 when violations or
//! mismatches were found, 2 for usage, parse and I/O errors.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::compiler::{compile_with_epsilon, to_dot, Automaton, PredicateRegistry};
use crate::event::{EventKind, Log};
use crate::learner::{self, EqualityConfig, LearnedModel};
use crate::logmaker::{self, ClockAnchor, IngestConfig};
use crate::monitor::{self, Report};
use crate::spec::{parse_spec, pretty_print, Spec};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FOUND: u8 = 1;
pub const EXIT_ERROR: u8 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{source}")]
    Spec {
        path: PathBuf,
        #[source]
        source: crate::spec::SpecError,
    },
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "tracewatch", version, about = "Check event logs against temporal pattern specifications")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct IngestArgs {
    /// JSON ingest configuration (kind_field, time_field, kind_aliases, time_unit)
    #[arg(long, value_name = "FILE")]
    pub ingest: Option<PathBuf>,
    /// JSON clock anchors used to remap event times
    #[arg(long, value_name = "FILE")]
    pub time_anchors: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check logs against a specification
    Check {
        spec: PathBuf,
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Write the report here instead of standard output
        #[arg(long, short, value_name = "FILE")]
        output: Option<PathBuf>,
        /// Also write one DOT file per pattern into DIR
        #[arg(long, value_name = "DIR")]
        dot: Option<PathBuf>,
        /// Show at most N violations per log (0 = all)
        #[arg(long, value_name = "N", default_value_t = 0)]
        max_violations: usize,
        /// Tolerance for numeric equality in constraints
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        #[command(flatten)]
        ingest: IngestArgs,
    },
    /// Parse a specification and print it in canonical form
    Parse { spec: PathBuf },
    /// Write one Graphviz file per pattern
    Viz { spec: PathBuf, out_dir: PathBuf },
    /// Learn a trace model from good runs
    Learn {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// JSON equality configuration; without it events compare on kind alone
        #[arg(long, value_name = "FILE")]
        equality: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Endorse the model right away
        #[arg(long)]
        endorse: bool,
        #[command(flatten)]
        ingest: IngestArgs,
    },
    /// Compare a log against a learned model
    Diff {
        model: PathBuf,
        log: PathBuf,
        #[command(flatten)]
        ingest: IngestArgs,
    },
    /// Mark a (possibly hand-edited) model as endorsed
    Endorse {
        model: PathBuf,
        /// Defaults to rewriting MODEL in place
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Print a log in canonical JSON-lines form
    Normalize {
        log: PathBuf,
        #[command(flatten)]
        ingest: IngestArgs,
    },
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn input_error(path: &Path, message: impl ToString) -> CliError {
    CliError::Input {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn load_spec(path: &Path) -> Result<Spec, CliError> {
    parse_spec(&read(path)?).map_err(|source| CliError::Spec {
        path: path.to_path_buf(),
        source,
    })
}

fn compile_spec(path: &Path, spec: &Spec, epsilon: f64) -> Result<Vec<Automaton>, CliError> {
    compile_with_epsilon(spec, &PredicateRegistry::with_builtins(), epsilon).map_err(|e| input_error(path, e))
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum AnchorFile {
    Plain(Vec<ClockAnchor>),
    Scoped {
        anchors: Vec<ClockAnchor>,
        #[serde(default)]
        kinds: Option<Vec<EventKind>>,
    },
}

/// Ingest settings shared by every log of one invocation.
struct Loader {
    cfg: IngestConfig,
    anchors: Option<(Vec<ClockAnchor>, Option<Vec<EventKind>>)>,
}

impl Loader {
    fn new(args: &IngestArgs) -> Result<Self, CliError> {
        let cfg = match &args.ingest {
            Some(p) => {
                let cfg: IngestConfig = serde_json::from_str(&read(p)?).map_err(|e| input_error(p, e))?;
                cfg.validate().map_err(|e| input_error(p, e))?;
                cfg
            }
            None => IngestConfig::default(),
        };
        let anchors = match &args.time_anchors {
            Some(p) => {
                let file: AnchorFile = serde_json::from_str(&read(p)?).map_err(|e| input_error(p, e))?;
                Some(match file {
                    AnchorFile::Plain(a) => (a, None),
                    AnchorFile::Scoped { anchors, kinds } => (anchors, kinds),
                })
            }
            None => None,
        };
        Ok(Loader { cfg, anchors })
    }

    fn load(&self, path: &Path) -> Result<Log, CliError> {
        let text = read(path)?;
        let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let events = if is_csv {
            logmaker::ingest_csv(&text, &self.cfg)
        } else {
            logmaker::ingest(&text, &self.cfg)
        }
        .map_err(|e| input_error(path, e))?;
        let events = match &self.anchors {
            None => Ok(events),
            Some((anchors, None)) => logmaker::time_align(events, anchors),
            Some((anchors, Some(kinds))) => logmaker::time_align_kinds(events, anchors, kinds),
        }
        .map_err(|e| input_error(path, e))?;
        let log = logmaker::finalize(events, &path.display().to_string());
        let ties = log.timestamp_ties().len();
        if ties > 0 {
            eprintln!(
                "warning: {}: {ties} event(s) share a timestamp with the previous event; input order kept",
                log.source_id
            );
        }
        Ok(log)
    }
}

fn write_dots(dir: &Path, automata: &[Automaton]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for a in automata {
        write(&dir.join(format!("{}.dot", a.pattern_name)), &to_dot(a))?;
    }
    Ok(())
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), CliError> {
    match output {
        Some(p) => write(p, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| CliError::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_check(
    spec_path: &Path,
    log_paths: &[PathBuf],
    format: Format,
    output: Option<&Path>,
    dot: Option<&Path>,
    max_violations: usize,
    epsilon: f64,
    ingest: &IngestArgs,
) -> Result<u8, CliError> {
    let spec = load_spec(spec_path)?;
    let automata = compile_spec(spec_path, &spec, epsilon)?;
    if let Some(dir) = dot {
        write_dots(dir, &automata)?;
    }
    let loader = Loader::new(ingest)?;
    let results: Vec<Result<(Log, Report), CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = log_paths
            .iter()
            .map(|path| {
                let (loader, automata) = (&loader, &automata);
                scope.spawn(move || {
                    let log = loader.load(path)?;
                    let report = monitor::check(automata, &log).map_err(|e| input_error(path, e))?;
                    Ok((log, report))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(CliError::Other("checker thread panicked".into()))))
            .collect()
    });
    let mut text = String::new();
    let mut failed = false;
    for r in results {
        let (log, report) = r?;
        failed |= !report.passed();
        match format {
            Format::Text => text.push_str(&report.to_text(&log, max_violations)),
            Format::Json => {
                text.push_str(&report.to_json(max_violations).to_string());
                text.push('\n');
            }
        }
    }
    emit(output, &text)?;
    Ok(if failed { EXIT_FOUND } else { EXIT_OK })
}

fn load_model(path: &Path) -> Result<LearnedModel, CliError> {
    LearnedModel::from_json(&read(path)?).map_err(|e| input_error(path, e))
}

pub fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Check {
            spec,
            logs,
            format,
            output,
            dot,
            max_violations,
            epsilon,
            ingest,
        } => cmd_check(
            &spec,
            &logs,
            format,
            output.as_deref(),
            dot.as_deref(),
            max_violations,
            epsilon,
            &ingest,
        ),
        Command::Parse { spec } => {
            let parsed = load_spec(&spec)?;
            emit(None, &pretty_print(&parsed))?;
            Ok(EXIT_OK)
        }
        Command::Viz { spec, out_dir } => {
            let parsed = load_spec(&spec)?;
            let automata = compile_spec(&spec, &parsed, 0.0)?;
            write_dots(&out_dir, &automata)?;
            Ok(EXIT_OK)
        }
        Command::Learn {
            logs,
            equality,
            out,
            endorse,
            ingest,
        } => {
            let cfg = match &equality {
                Some(path) => EqualityConfig::from_json(&read(path)?).map_err(|e| input_error(path, e))?,
                None => EqualityConfig::default(),
            };
            let loader = Loader::new(&ingest)?;
            let logs = logs.iter().map(|p| loader.load(p)).collect::<Result<Vec<_>, _>>()?;
            let mut model = learner::learn(&logs, &cfg).map_err(|e| CliError::Other(e.to_string()))?;
            if endorse {
                model = learner::endorse(model);
            }
            write(&out, &model.to_json())?;
            Ok(EXIT_OK)
        }
        Command::Diff { model, log, ingest } => {
            let m = load_model(&model)?;
            let loader = Loader::new(&ingest)?;
            let log = loader.load(&log)?;
            let report = learner::diff(&m, &log);
            emit(None, &report.to_text())?;
            Ok(if report.is_match() { EXIT_OK } else { EXIT_FOUND })
        }
        Command::Endorse { model, out } => {
            let m = learner::endorse(load_model(&model)?);
            write(out.as_deref().unwrap_or(&model), &m.to_json())?;
            Ok(EXIT_OK)
        }
        Command::Normalize { log, ingest } => {
            let loader = Loader::new(&ingest)?;
            let log = loader.load(&log)?;
            emit(None, &logmaker::serialize_log(&log))?;
            Ok(EXIT_OK)
        }
    }
}

/// Parses `std::env::args`, runs, and maps errors to exit status 2.
pub fn main() -> std::process::ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return std::process::ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => std::process::ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::ExitCode::from(EXIT_ERROR)
        }
    }
}
