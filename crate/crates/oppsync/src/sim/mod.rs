//! Discrete-event simulation: input formats, the engine, and the run log.

pub mod engine;
pub mod log;
pub mod trace;

pub use engine::{run, RolePolicy, SimConfig, SimError, SimOutput};
pub use log::{parse_log, render_log, validate_log, CheckReport, LogRecord, TimedRecord};
pub use trace::{AppEvent, AppScenario, ContactEvent, ContactTrace, DeclaredRole, TimedContact};
