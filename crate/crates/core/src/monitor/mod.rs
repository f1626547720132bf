//! Checking logs against compiled automata.
//!
//! Semantics, in brief:
//!
//! * every trigger match starts an independent instance; its obligations
//!   only look at events strictly after the trigger;
//! * a required constraint completes at its earliest match, and an ordered
//!   scope moves on from there;
//! * a prohibition inside an ordered scope is active until the next
//!   non-prohibition sibling completes (that completing event excluded);
//!   everywhere else it stays active to the end of the log;
//! * one event may serve several obligations at once;
//! * at the end of the log every open requirement is a `MissingEvent`.

mod oracle;
mod report;
mod session;

pub use oracle::{oracle_check, oracle_check_bounded, DEFAULT_ORACLE_BOUND};
pub use report::{PatternReport, Report, Verdict, Violation, ViolationKind};
pub use session::{check, Obligation, Session};

use crate::compiler::{GuardError, PredicateFailure};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MonitorError {
    #[error(transparent)]
    Predicate(#[from] PredicateFailure),
    #[error(transparent)]
    Guard(#[from] GuardError),
    #[error("events fed out of order: index {got} after {last}")]
    OutOfOrder { last: usize, got: usize },
    #[error("log has {len} events, the oracle accepts at most {max}")]
    LogTooLarge { len: usize, max: usize },
}

/// `new_session` as a free function.
pub fn new_session(automata: &[crate::compiler::Automaton]) -> Session<'_> {
    Session::new(automata)
}
