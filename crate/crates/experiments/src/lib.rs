//! Parameter sweeps over the slot model and the protocol simulator, with
//! CSV outputs and a reproducibility manifest.

pub mod analysis;
pub mod error;
pub mod instance;
pub mod output;
pub mod run;
pub mod solar;
pub mod spec;
pub mod stats;
pub mod table;

pub use error::{ExperimentError, Result};
pub use run::{run_experiment, Check, ExperimentOutcome, Severity};
pub use spec::{ExperimentSpec, Family, PolicyName};
pub use table::{ResultTable, Row, RowStatus};
