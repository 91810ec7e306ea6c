//! Discovery of data modification rules in process event logs.
//!
//! A model is an unordered, acyclic set of `IF condition THEN update` rules
//! describing how event attributes change along a trace. Models are scored
//! with a two-part MDL code (`L(M) + L(D | M)`) and mined greedily.
//!
//! ```
//! use modrule_core::{log_model::parse_csv, log_model::ParseOptions, scorer, Model};
//!
//! let csv = "trace_id,event_index,activity,vendor\nt1,0,a,C\nt1,1,b,C\n";
//! let log = parse_csv(csv, &ParseOptions::default()).unwrap();
//! let score = scorer::total_score(&log, &Model::default(), &Default::default()).unwrap();
//! assert!(score.total > 0.0);
//! ```

pub mod error;
pub mod evaluation;
pub mod log_model;
pub mod mdl_codec;
pub mod rule_model;
pub mod scorer;
pub mod search;
pub mod synthgen;

pub use error::{Error, Result};
pub use log_model::{Domain, Event, EventLog, Histogram, Kind, Schema, Trace, Value, VariableSchema};
pub use mdl_codec::CodecConfig;
pub use rule_model::{Condition, Constant, Model, Operator, Rule, Test, Update, UpdateRule, UpdateType};
pub use scorer::ScoreBreakdown;
pub use search::SearchConfig;

/// Placeholder for a missing categorical value.
pub const MISSING_TOKEN: &str = "⊥";
