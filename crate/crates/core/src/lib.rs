//! Offline runtime verification of structured event logs.
//!
//! Logs are normalized into [`event::Log`]s by [`logmaker`], specifications
//! written in the pattern language are parsed by [`spec`] and compiled into
//! parameterized automata by [`compiler`], and [`monitor`] runs logs through
//! them to produce violation reports. [`learner`] records the abstract traces
//! of known-good runs and diffs new runs against them.
//!
//! ```
//! use tracewatch::{compiler, logmaker, monitor, spec};
//!
//! let spec = spec::parse_spec(
//!     "pattern Ack: COMMAND{Stem: x} => EVR{Ack: x}",
//! ).unwrap();
//! let automata = compiler::compile(&spec, &compiler::PredicateRegistry::with_builtins()).unwrap();
//! let log = logmaker::load_jsonl(
//!     "{\"kind\":\"COMMAND\",\"time\":1,\"Stem\":\"PICT\"}\n\
//!      {\"kind\":\"EVR\",\"time\":2,\"Ack\":\"PICT\"}\n",
//!     "run1",
//!     &logmaker::IngestConfig::default(),
//! ).unwrap();
//! let report = monitor::check(&automata, &log).unwrap();
//! assert!(report.passed());
//! ```

pub mod cli;
pub mod compiler;
pub mod event;
pub mod learner;
pub mod logmaker;
pub mod monitor;
pub mod spec;

pub use compiler::{compile, to_dot, Automaton, Binding, PredicateRegistry};
pub use event::{Event, EventKind, Log, Value};
pub use monitor::{check, oracle_check, Report, Session, Violation, ViolationKind};
pub use spec::{parse_spec, pretty_print, Spec, SpecError};
