//! Study apparatus: scenario fixtures, sessions with a five-trial protocol,
//! scripted agents and JSON-lines event logs.

mod agents;
mod events;
mod scenario;
mod session;

pub use agents::{run_agent, simulate_session, AgentKind, AgentPolicy};
pub use events::{load_session, read_log, replay, Event, LoadError, LogLine, PlannedEgg, SessionLog};
pub use scenario::{
    load_scenarios, load_scenarios_file, scenario_decision, shipped_scenarios, Catalog, ParamBounds, Scenario,
    ScenarioError, ScenarioSummary, SHIPPED_SCENARIOS,
};
pub use session::{
    Block, BlockRates, Condition, CurrentEgg, EggMetrics, EggRun, EggView, HarnessError, Session, SessionMetrics,
    SessionStatus, SessionView, TrialOutcome, TrialRecord, TrialView, MAX_TRIALS,
};
