//! Workload generation, the discrete-event simulator and trace replay.

pub mod assign;
pub mod bundled;
pub mod engine;
mod kvfile;
pub mod synthspec;
pub mod replay;
pub mod scenario;
pub mod synthetic;
pub mod trace;

pub use assign::LinkAssigner;
pub use bundled::{bundled, BUNDLED};
pub use engine::{run, FlowState, Population, RunOutput, RunSummary};
pub use replay::{replay, replay_mb, ReplayConfig, ReplayOutput};
pub use scenario::{DelayModel, HiddenClients, Scenario, ScenarioFile};
pub use synthspec::{parse_windows, SyntheticModel, SyntheticSpec, SYNTHETIC_HEADER};
pub use synthetic::{synthetic_cbr, synthetic_pareto, ArrivalSchedule, CbrConfig, ParetoConfig};
pub use trace::{read_trace, write_trace, RecordKind, TraceRecord};
