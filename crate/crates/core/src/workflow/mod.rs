//! Scenario engine: declarative, branching step sequences run through one
//! persistent session, plus the interactive loop over the same machinery.

mod interactive;
mod run;
mod scenario;

pub use interactive::{interactive_session, VerbHandler};
pub use run::{install_one, run_scenario, Overall, RunConfig, RunSummary, StepOutcome, StepRecord};
pub use scenario::{load_scenario, Action, Branch, Scenario, Step};

#[derive(Debug, thiserror::Error)]
pub enum WorkflowError {
    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("step references unknown step {0:?}")]
    UnresolvedStepRef(String),
    #[error("steps {} form a cycle without a max_visits bound", .0.join(", "))]
    CycleWithoutRetryBound(Vec<String>),
    #[error("duplicate step id {0:?}")]
    DuplicateStep(String),
    #[error("step {id:?}: {message}")]
    InvalidStep { id: String, message: String },
    #[error("{0}")]
    InvalidScenario(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}
