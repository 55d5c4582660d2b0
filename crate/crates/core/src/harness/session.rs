use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::events::{Event, LogLine, PlannedEgg};
use super::scenario::{Catalog, ScenarioSummary};
use crate::egg::{cooking_time_s, EggParameters, FeedbackBands, FeedbackGrade, Param};
use crate::render::{llm_rewrite, render, ExplanationFormat, RenderedExplanation, TextService};
use crate::tntrules::TuneDecision;

pub const MAX_TRIALS: usize = 5;
const BLOCK_SIZE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Visual,
    Rules,
    Language,
}

impl Condition {
    pub fn format(self) -> ExplanationFormat {
        match self {
            Condition::Visual => ExplanationFormat::Visual,
            Condition::Rules => ExplanationFormat::Rules,
            Condition::Language => ExplanationFormat::Language,
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "visual" => Ok(Condition::Visual),
            "rules" => Ok(Condition::Rules),
            "language" => Ok(Condition::Language),
            other => Err(format!("unknown condition {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Training,
    Baseline,
    Treatment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    InProgress,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("a session needs at least 7 scenarios, got {0}")]
    NotEnoughScenarios(usize),
    #[error("a session needs exactly one training scenario, got {0}")]
    TrainingCount(usize),
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("the session is already completed")]
    SessionCompleted,
    #[error("all {MAX_TRIALS} trials for {0} have been used")]
    TrialsExhausted(String),
    #[error("{0} was already cooked perfectly")]
    EggAlreadySolved(String),
    #[error("{0} is not the current egg")]
    NotCurrentEgg(String),
    #[error("{0} is fixed and cannot be changed")]
    FixedParameterModified(Param),
    #[error("{param} = {value} outside [{lo}, {hi}]")]
    OutOfBounds { param: Param, value: f64, lo: f64, hi: f64 },
    #[error("adjust at least one parameter before cooking")]
    NoAdjustment,
    #[error("uncookable configuration: {0}")]
    Uncookable(String),
    #[error("difficulty rating must be between 1 and 7, got {0}")]
    InvalidRating(i64),
    #[error("no egg has been completed yet")]
    NothingToRate,
    #[error("event does not fit the session: {0}")]
    Replay(String),
}

impl HarnessError {
    /// Machine-readable reason code.
    pub fn code(&self) -> &'static str {
        match self {
            HarnessError::NotEnoughScenarios(_) | HarnessError::TrainingCount(_) => "invalid_scenarios",
            HarnessError::UnknownScenario(_) => "unknown_scenario",
            HarnessError::SessionCompleted => "session_completed",
            HarnessError::TrialsExhausted(_) => "trials_exhausted",
            HarnessError::EggAlreadySolved(_) => "egg_already_solved",
            HarnessError::NotCurrentEgg(_) => "not_current_egg",
            HarnessError::FixedParameterModified(_) => "fixed_parameter_modified",
            HarnessError::OutOfBounds { .. } => "out_of_bounds",
            HarnessError::NoAdjustment => "no_adjustment",
            HarnessError::Uncookable(_) => "uncookable",
            HarnessError::InvalidRating(_) => "invalid_rating",
            HarnessError::NothingToRate => "nothing_to_rate",
            HarnessError::Replay(_) => "replay_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub scenario_id: String,
    /// 1-based.
    pub index: u8,
    pub submitted: EggParameters,
    pub cook_time_s: f64,
    pub grade: FeedbackGrade,
    pub ts: DateTime<Utc>,
    pub within_explanation_range: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EggRun {
    pub scenario_id: String,
    pub block: Block,
    pub trials: Vec<TrialRecord>,
    /// `Some(true)` once cooked perfectly, `Some(false)` after the last failed trial.
    pub outcome: Option<bool>,
    pub difficulty: Option<u8>,
    pub explanation: Option<RenderedExplanation>,
}

impl EggRun {
    pub fn trials_to_success(&self) -> Option<u8> {
        (self.outcome == Some(true)).then(|| self.trials.len() as u8 - 1)
    }

    pub fn adherent(&self) -> bool {
        self.trials.iter().all(|t| t.within_explanation_range)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PendingTrial {
    index: u8,
    submitted: EggParameters,
    ts: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub condition: Condition,
    pub seed: u64,
    pub started_at: DateTime<Utc>,
    pub eggs: Vec<EggRun>,
    /// Index of the active egg; equals `eggs.len()` once finished.
    pub current: usize,
    pub status: SessionStatus,
    /// Set when a language rewrite fell back to the template.
    pub llm_fallback: bool,
    /// Sequence number of the last applied event.
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pending: Option<PendingTrial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub scenario_id: String,
    pub index: u8,
    pub grade: FeedbackGrade,
    pub within_explanation_range: bool,
    pub trials_remaining: usize,
    /// Present when this trial finished the egg.
    pub egg_success: Option<bool>,
    pub next_scenario: Option<String>,
    pub session_completed: bool,
}

/// Trial as shown to clients (no cooking time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialView {
    pub index: u8,
    pub submitted: EggParameters,
    pub grade: FeedbackGrade,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EggView {
    pub scenario_id: String,
    pub block: Block,
    pub trials: Vec<TrialView>,
    pub outcome: Option<bool>,
    pub difficulty: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentEgg {
    pub scenario: ScenarioSummary,
    pub block: Block,
    pub recommended: EggParameters,
    pub trials_used: usize,
    pub trials_remaining: usize,
    pub has_explanation: bool,
}

/// Client-facing session state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub condition: Condition,
    pub seed: u64,
    pub status: SessionStatus,
    pub current: Option<CurrentEgg>,
    pub eggs: Vec<EggView>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockRates {
    pub training: Option<f64>,
    pub baseline: Option<f64>,
    pub treatment: Option<f64>,
}

impl BlockRates {
    pub fn get(&self, b: Block) -> Option<f64> {
        match b {
            Block::Training => self.training,
            Block::Baseline => self.baseline,
            Block::Treatment => self.treatment,
        }
    }

    fn set(&mut self, b: Block, v: Option<f64>) {
        match b {
            Block::Training => self.training = v,
            Block::Baseline => self.baseline = v,
            Block::Treatment => self.treatment = v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EggMetrics {
    pub scenario_id: String,
    pub block: Block,
    pub success: Option<bool>,
    pub trials_used: usize,
    /// Retries before the perfect trial (0..=4); `None` unless successful.
    pub trials_to_success: Option<u8>,
    pub adherent: bool,
    pub difficulty: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub session_id: String,
    pub condition: Condition,
    /// False while eggs remain; rates then count unfinished eggs as failures.
    pub complete: bool,
    pub success_rate: BlockRates,
    /// Mean over successful eggs of each block.
    pub mean_trials_to_success: BlockRates,
    /// Share of successful treatment eggs where every trial stayed inside the Tune ranges.
    pub adherence: Option<f64>,
    pub eggs: Vec<EggMetrics>,
    pub llm_fallback: bool,
}

fn within_ranges(d: &TuneDecision, x: &EggParameters) -> bool {
    d.tune().all(|(name, [lo, hi])| {
        Param::from_key(name).is_some_and(|p| {
            let v = x.get(p);
            lo <= v && v <= hi
        })
    })
}

fn plan(catalog: &Catalog, seed: u64) -> Result<Vec<PlannedEgg>, HarnessError> {
    let all = catalog.scenarios();
    if all.len() < 1 + 2 * BLOCK_SIZE {
        return Err(HarnessError::NotEnoughScenarios(all.len()));
    }
    let training: Vec<&str> = all.iter().filter(|s| s.is_training).map(|s| s.id.as_str()).collect();
    if training.len() != 1 {
        return Err(HarnessError::TrainingCount(training.len()));
    }
    let mut rest: Vec<&str> = all.iter().filter(|s| !s.is_training).map(|s| s.id.as_str()).collect();
    if rest.len() < 2 * BLOCK_SIZE {
        return Err(HarnessError::NotEnoughScenarios(all.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rest.shuffle(&mut rng);
    let egg = |id: &str, block| PlannedEgg { scenario_id: id.to_string(), block };
    let mut eggs = vec![egg(training[0], Block::Training)];
    eggs.extend(rest[..BLOCK_SIZE].iter().map(|id| egg(id, Block::Baseline)));
    eggs.extend(rest[BLOCK_SIZE..2 * BLOCK_SIZE].iter().map(|id| egg(id, Block::Treatment)));
    Ok(eggs)
}

impl Session {
    /// Creates a session: training egg first, then the other scenarios
    /// shuffled by `seed` and split into baseline and treatment blocks.
    pub fn start(id: &str, condition: Condition, seed: u64, catalog: &Catalog, now: DateTime<Utc>) -> Result<(Session, Vec<LogLine>), HarnessError> {
        let eggs = plan(catalog, seed)?;
        let line = LogLine::new(now, id, 1, &Event::SessionStarted { condition, seed, eggs });
        let session = Session::from_start(&line, &line.decode().expect("own event decodes"))?;
        Ok((session, vec![line]))
    }

    pub(crate) fn from_start(line: &LogLine, event: &Event) -> Result<Session, HarnessError> {
        let Event::SessionStarted { condition, seed, eggs } = event else {
            return Err(HarnessError::Replay(format!("first event is {}, not session_started", line.event)));
        };
        Ok(Session {
            id: line.session_id.clone(),
            condition: *condition,
            seed: *seed,
            started_at: line.ts,
            eggs: eggs
                .iter()
                .map(|e| EggRun {
                    scenario_id: e.scenario_id.clone(),
                    block: e.block,
                    trials: Vec::new(),
                    outcome: None,
                    difficulty: None,
                    explanation: None,
                })
                .collect(),
            current: 0,
            status: SessionStatus::InProgress,
            llm_fallback: false,
            seq: line.seq,
            pending: None,
        })
    }

    pub fn current_egg(&self) -> Option<&EggRun> {
        self.eggs.get(self.current)
    }

    fn egg_mut(&mut self, scenario_id: &str) -> Result<&mut EggRun, HarnessError> {
        self.eggs
            .iter_mut()
            .find(|e| e.scenario_id == scenario_id)
            .ok_or_else(|| HarnessError::Replay(format!("scenario {scenario_id} is not part of the session")))
    }

    /// Applies one logged event. Events at or below the current sequence
    /// number are ignored.
    pub fn apply(&mut self, line: &LogLine, event: &Event) -> Result<(), HarnessError> {
        if line.seq <= self.seq {
            return Ok(());
        }
        if line.session_id != self.id {
            return Err(HarnessError::Replay(format!("event belongs to session {}", line.session_id)));
        }
        match event {
            Event::SessionStarted { .. } => return Err(HarnessError::Replay("session_started after start".into())),
            Event::TrialSubmitted { scenario_id, index, submitted } => {
                if self.current_egg().map(|e| e.scenario_id.as_str()) != Some(scenario_id) {
                    return Err(HarnessError::Replay(format!("trial for {scenario_id}, which is not current")));
                }
                self.pending = Some(PendingTrial { index: *index, submitted: *submitted, ts: line.ts });
            }
            Event::FeedbackIssued { scenario_id, index, cook_time_s, grade, within_explanation_range } => {
                let pending = self
                    .pending
                    .take()
                    .filter(|p| p.index == *index)
                    .ok_or_else(|| HarnessError::Replay(format!("feedback for unsubmitted trial {index}")))?;
                let egg = self.egg_mut(scenario_id)?;
                egg.trials.push(TrialRecord {
                    scenario_id: scenario_id.clone(),
                    index: *index,
                    submitted: pending.submitted,
                    cook_time_s: *cook_time_s,
                    grade: *grade,
                    ts: pending.ts,
                    within_explanation_range: *within_explanation_range,
                });
            }
            Event::ExplanationServed { scenario_id, explanation, fallback } => {
                self.egg_mut(scenario_id)?.explanation = Some(explanation.clone());
                self.llm_fallback |= *fallback;
            }
            Event::EggCompleted { scenario_id, success } => {
                self.egg_mut(scenario_id)?.outcome = Some(*success);
                if self.current_egg().map(|e| e.scenario_id.as_str()) == Some(scenario_id) {
                    self.current += 1;
                }
            }
            Event::DifficultyRated { scenario_id, rating } => {
                self.egg_mut(scenario_id)?.difficulty = Some(*rating);
            }
            Event::SessionCompleted {} => {
                self.status = SessionStatus::Completed;
                self.current = self.eggs.len();
            }
        }
        self.seq = line.seq;
        Ok(())
    }

    fn emit(&mut self, now: DateTime<Utc>, event: Event, out: &mut Vec<LogLine>) -> Result<(), HarnessError> {
        let line = LogLine::new(now, &self.id, self.seq + 1, &event);
        self.apply(&line, &event)?;
        out.push(line);
        Ok(())
    }

    fn ensure_active(&self) -> Result<&EggRun, HarnessError> {
        if self.status == SessionStatus::Completed {
            return Err(HarnessError::SessionCompleted);
        }
        self.current_egg().ok_or(HarnessError::SessionCompleted)
    }

    /// Validates and cooks one trial on the current egg.
    ///
    /// When `scenario_id` is given it must name the current egg; naming an
    /// egg that is already finished reports why it is closed.
    pub fn submit_trial(
        &mut self,
        catalog: &Catalog,
        scenario_id: Option<&str>,
        proposed: EggParameters,
        now: DateTime<Utc>,
    ) -> Result<(TrialOutcome, Vec<LogLine>), HarnessError> {
        if let Some(id) = scenario_id {
            if let Some(egg) = self.eggs.iter().find(|e| e.scenario_id == id) {
                match egg.outcome {
                    Some(true) => return Err(HarnessError::EggAlreadySolved(id.to_string())),
                    Some(false) => return Err(HarnessError::TrialsExhausted(id.to_string())),
                    None => {}
                }
            }
        }
        let egg = self.ensure_active()?;
        let id = egg.scenario_id.clone();
        if scenario_id.is_some_and(|s| s != id) {
            return Err(HarnessError::NotCurrentEgg(scenario_id.unwrap_or_default().to_string()));
        }
        if egg.trials.len() >= MAX_TRIALS {
            return Err(HarnessError::TrialsExhausted(id));
        }
        let scenario = catalog.get(&id).ok_or_else(|| HarnessError::UnknownScenario(id.clone()))?;
        for p in Param::ALL {
            let v = proposed.get(p);
            if let Some(fixed) = scenario.fixed.get(&p) {
                if v.to_bits() != fixed.to_bits() {
                    return Err(HarnessError::FixedParameterModified(p));
                }
            }
            let (lo, hi) = scenario.bound(p);
            if !(lo <= v && v <= hi) {
                return Err(HarnessError::OutOfBounds { param: p, value: v, lo, hi });
            }
        }
        if scenario.tunable().iter().all(|&p| proposed.get(p) == scenario.recommended.get(p)) {
            return Err(HarnessError::NoAdjustment);
        }
        let cook_time_s = cooking_time_s(&proposed).map_err(|e| HarnessError::Uncookable(e.to_string()))?;
        let grade = FeedbackBands::default().classify(cook_time_s).map_err(|e| HarnessError::Uncookable(e.to_string()))?;
        let within = catalog.decision(&id).is_some_and(|(d, _)| within_ranges(d, &proposed));
        let index = egg.trials.len() as u8 + 1;

        let mut lines = Vec::new();
        self.emit(now, Event::TrialSubmitted { scenario_id: id.clone(), index, submitted: proposed }, &mut lines)?;
        self.emit(
            now,
            Event::FeedbackIssued { scenario_id: id.clone(), index, cook_time_s, grade, within_explanation_range: within },
            &mut lines,
        )?;
        let mut egg_success = None;
        if grade == FeedbackGrade::Perfect || index as usize == MAX_TRIALS {
            let success = grade == FeedbackGrade::Perfect;
            egg_success = Some(success);
            self.emit(now, Event::EggCompleted { scenario_id: id.clone(), success }, &mut lines)?;
            if self.current >= self.eggs.len() {
                self.emit(now, Event::SessionCompleted {}, &mut lines)?;
            }
        }
        let outcome = TrialOutcome {
            scenario_id: id,
            index,
            grade,
            within_explanation_range: within,
            trials_remaining: if egg_success.is_some() { 0 } else { MAX_TRIALS - index as usize },
            egg_success,
            next_scenario: self.current_egg().map(|e| e.scenario_id.clone()),
            session_completed: self.status == SessionStatus::Completed,
        };
        Ok((outcome, lines))
    }

    /// The explanation for the current egg in the session's format, or
    /// [`RenderedExplanation::None`] outside the treatment block. The first
    /// rendering is logged and reused afterwards.
    pub fn explanation(
        &mut self,
        catalog: &Catalog,
        text_service: Option<&dyn TextService>,
        now: DateTime<Utc>,
    ) -> Result<(RenderedExplanation, Vec<LogLine>), HarnessError> {
        let egg = self.ensure_active()?;
        if egg.block != Block::Treatment {
            return Ok((RenderedExplanation::None, Vec::new()));
        }
        if let Some(cached) = &egg.explanation {
            return Ok((cached.clone(), Vec::new()));
        }
        let id = egg.scenario_id.clone();
        let (decision, impacts) = catalog.decision(&id).ok_or_else(|| HarnessError::UnknownScenario(id.clone()))?;
        let mut rendered = render(decision, impacts, self.condition.format());
        let mut fallback = false;
        if let (RenderedExplanation::Language(text), Some(service)) = (&rendered, text_service) {
            let rw = llm_rewrite(text, decision, service);
            fallback = rw.fallback;
            rendered = RenderedExplanation::Language(rw.text);
        }
        let mut lines = Vec::new();
        self.emit(now, Event::ExplanationServed { scenario_id: id, explanation: rendered.clone(), fallback }, &mut lines)?;
        Ok((rendered, lines))
    }

    /// Records a 1–7 difficulty rating for the most recently completed egg.
    pub fn rate_difficulty(&mut self, rating: i64, now: DateTime<Utc>) -> Result<(String, Vec<LogLine>), HarnessError> {
        if !(1..=7).contains(&rating) {
            return Err(HarnessError::InvalidRating(rating));
        }
        let id = self
            .eggs
            .iter()
            .rev()
            .find(|e| e.outcome.is_some())
            .map(|e| e.scenario_id.clone())
            .ok_or(HarnessError::NothingToRate)?;
        let mut lines = Vec::new();
        self.emit(now, Event::DifficultyRated { scenario_id: id.clone(), rating: rating as u8 }, &mut lines)?;
        Ok((id, lines))
    }

    pub fn metrics(&self) -> SessionMetrics {
        let eggs: Vec<EggMetrics> = self
            .eggs
            .iter()
            .map(|e| EggMetrics {
                scenario_id: e.scenario_id.clone(),
                block: e.block,
                success: e.outcome,
                trials_used: e.trials.len(),
                trials_to_success: e.trials_to_success(),
                adherent: e.adherent(),
                difficulty: e.difficulty,
            })
            .collect();
        let mut success_rate = BlockRates::default();
        let mut mean_trials = BlockRates::default();
        for b in [Block::Training, Block::Baseline, Block::Treatment] {
            let in_block: Vec<&EggMetrics> = eggs.iter().filter(|e| e.block == b).collect();
            if in_block.is_empty() {
                continue;
            }
            let wins: Vec<u8> = in_block.iter().filter_map(|e| e.trials_to_success).collect();
            success_rate.set(b, Some(wins.len() as f64 / in_block.len() as f64));
            mean_trials.set(b, (!wins.is_empty()).then(|| wins.iter().map(|&t| t as f64).sum::<f64>() / wins.len() as f64));
        }
        let solved: Vec<&EggMetrics> = eggs.iter().filter(|e| e.block == Block::Treatment && e.success == Some(true)).collect();
        let adherence = (!solved.is_empty()).then(|| solved.iter().filter(|e| e.adherent).count() as f64 / solved.len() as f64);
        SessionMetrics {
            session_id: self.id.clone(),
            condition: self.condition,
            complete: self.status == SessionStatus::Completed,
            success_rate,
            mean_trials_to_success: mean_trials,
            adherence,
            eggs,
            llm_fallback: self.llm_fallback,
        }
    }

    pub fn view(&self, catalog: &Catalog) -> SessionView {
        let current = self.current_egg().filter(|_| self.status == SessionStatus::InProgress).and_then(|e| {
            let s = catalog.get(&e.scenario_id)?;
            Some(CurrentEgg {
                scenario: s.summary(),
                block: e.block,
                recommended: s.recommended,
                trials_used: e.trials.len(),
                trials_remaining: MAX_TRIALS - e.trials.len(),
                has_explanation: e.block == Block::Treatment,
            })
        });
        SessionView {
            id: self.id.clone(),
            condition: self.condition,
            seed: self.seed,
            status: self.status,
            current,
            eggs: self
                .eggs
                .iter()
                .map(|e| EggView {
                    scenario_id: e.scenario_id.clone(),
                    block: e.block,
                    trials: e.trials.iter().map(|t| TrialView { index: t.index, submitted: t.submitted, grade: t.grade }).collect(),
                    outcome: e.outcome,
                    difficulty: e.difficulty,
                })
                .collect(),
        }
    }
}
