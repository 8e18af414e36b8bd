//! Quasi-hyperbolic discounting with partial awareness of present bias.
//!
//! The crate covers the value model ([`discounting`]), recovery of awareness
//! from willingness-to-pay answers ([`estimation`]), the two-stage titration
//! questionnaire ([`elicitation`]), synthetic respondents ([`agent`]) and CSV
//! persistence with summary tables ([`dataset`]).

pub mod agent;
pub mod dataset;
pub mod discounting;
pub mod elicitation;
mod error;
pub mod estimation;

pub use agent::{
    brute_force_recover, simulate_session, ChoiceTime, GridAxis, SyntheticAgent, WtpPolicy,
};
pub use dataset::{
    load_records, map_external, save_records, summarize, write_records, LoadReport, SummaryOptions,
    SummaryReport,
};
pub use discounting::{Beliefs, ChoiceProblem, Pick, QhdParams, RewardOption};
pub use elicitation::{
    Answer, Arm, Gender, Phase, Question, SessionConfig, SessionRecord, SessionState, Stage,
};
pub use error::{Error, Result};
pub use estimation::{
    estimate_record, EstimationResult, Flag, RecordEstimate, WtpKind, WtpObservation,
};
