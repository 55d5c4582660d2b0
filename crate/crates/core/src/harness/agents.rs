use chrono::{DateTime, TimeDelta, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scenario::{Catalog, Scenario};
use super::session::{Condition, HarnessError, Session, SessionMetrics, SessionStatus};
use crate::egg::{cooking_time_s, EggParameters, Param};
use crate::render::{parse_language, parse_rules, parse_visual, RenderedExplanation};

const MAX_DRAWS: usize = 1000;
const AGENT_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    ExplanationFollowing,
    RangeUniform,
    Random,
    Midpoint,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [AgentKind::ExplanationFollowing, AgentKind::RangeUniform, AgentKind::Random, AgentKind::Midpoint];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::ExplanationFollowing => "explanation-following",
            AgentKind::RangeUniform => "range-uniform",
            AgentKind::Random => "random",
            AgentKind::Midpoint => "midpoint",
        }
    }
}

impl std::str::FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown policy {s:?}; expected one of explanation-following, range-uniform, random, midpoint"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentPolicy {
    pub kind: AgentKind,
    pub seed: u64,
}

/// Tune ranges recovered from whatever the participant was shown.
fn tune_ranges(rendered: &RenderedExplanation) -> Option<Vec<(Param, [f64; 2])>> {
    let partition = match rendered {
        RenderedExplanation::Rules(t) => parse_rules(t).ok()?,
        RenderedExplanation::Visual(v) => parse_visual(v).ok()?,
        RenderedExplanation::Language(t) => parse_language(t).ok()?,
        RenderedExplanation::None => return None,
    };
    let ranges: Vec<(Param, [f64; 2])> = partition
        .tune
        .into_iter()
        .filter_map(|(name, r)| Param::from_key(&name).map(|p| (p, r)))
        .collect();
    (!ranges.is_empty()).then_some(ranges)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo { rng.random_range(lo..=hi) } else { lo }
}

fn range_uniform(s: &Scenario, rng: &mut ChaCha8Rng) -> EggParameters {
    let mut x = s.recommended;
    for p in s.tunable() {
        let (lo, hi) = s.bound(p);
        x.set(p, uniform(rng, lo, hi));
    }
    x
}

fn propose(kind: AgentKind, s: &Scenario, ranges: Option<&[(Param, [f64; 2])]>, rng: &mut ChaCha8Rng) -> EggParameters {
    let mut x = s.recommended;
    match (kind, ranges) {
        (AgentKind::ExplanationFollowing, Some(r)) => {
            for (p, [lo, hi]) in r {
                x.set(*p, uniform(rng, *lo, *hi));
            }
            x
        }
        (AgentKind::Midpoint, Some(r)) => {
            for (p, [lo, hi]) in r {
                x.set(*p, 0.5 * (lo + hi));
            }
            x
        }
        (AgentKind::Random, _) => {
            for p in s.tunable() {
                let (lo, hi) = s.bound(p);
                let v = x.get(p) + rng.random_range(-0.1..=0.1) * (hi - lo);
                x.set(p, v.clamp(lo, hi));
            }
            x
        }
        _ => range_uniform(s, rng),
    }
}

fn acceptable(s: &Scenario, x: &EggParameters) -> bool {
    cooking_time_s(x).is_ok() && s.tunable().iter().any(|&p| x.get(p) != s.recommended.get(p))
}

/// Plays a full session with a scripted policy. Timestamps are synthetic so
/// the resulting session is a pure function of its inputs.
pub fn simulate_session(policy: AgentPolicy, condition: Condition, catalog: &Catalog) -> Result<Session, HarnessError> {
    let t0 = DateTime::<Utc>::UNIX_EPOCH;
    let clock = |s: &Session| t0 + TimeDelta::seconds(s.seq as i64);
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    rng.set_stream(AGENT_STREAM);
    let (mut session, _) = Session::start(&format!("agent-{}-{}", policy.kind.name(), policy.seed), condition, policy.seed, catalog, t0)?;
    while session.status == SessionStatus::InProgress {
        let id = session.current_egg().expect("active session has an egg").scenario_id.clone();
        let scenario = catalog.get(&id).ok_or_else(|| HarnessError::UnknownScenario(id.clone()))?;
        let now = clock(&session);
        let (rendered, _) = session.explanation(catalog, None, now)?;
        let ranges = tune_ranges(&rendered);
        let mut x = propose(policy.kind, scenario, ranges.as_deref(), &mut rng);
        let mut draws = 1;
        while !acceptable(scenario, &x) {
            // deterministic policies that land on an uncookable point fall back to sampling
            x = if draws < MAX_DRAWS { propose(policy.kind, scenario, ranges.as_deref(), &mut rng) } else { range_uniform(scenario, &mut rng) };
            draws += 1;
        }
        let now = clock(&session);
        session.submit_trial(catalog, None, x, now)?;
    }
    Ok(session)
}

pub fn run_agent(policy: AgentPolicy, condition: Condition, catalog: &Catalog) -> Result<SessionMetrics, HarnessError> {
    Ok(simulate_session(policy, condition, catalog)?.metrics())
}
