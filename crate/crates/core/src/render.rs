//! Rendering a [`TuneDecision`] as rule text, a bar-chart spec or a
//! natural-language paragraph, plus parsers that recover the decision from
//! each rendered form.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::egg::Param;
use crate::tntrules::TuneDecision;

/// Length of the stub bar drawn for No-Tune parameters.
pub const SENTINEL: f64 = 0.05;
pub const AXIS_LABEL: &str = "Impact on predicted objective if left untuned";
const EMPTY: &str = "—";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplanationFormat {
    Rules,
    Visual,
    Language,
}

impl std::str::FromStr for ExplanationFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rules" => Ok(ExplanationFormat::Rules),
            "visual" => Ok(ExplanationFormat::Visual),
            "language" => Ok(ExplanationFormat::Language),
            other => Err(format!("unknown explanation format {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TuneClass {
    Tune,
    NoTune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub name: String,
    pub signed_length: f64,
    pub tune_class: TuneClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualSpec {
    pub bars: Vec<Bar>,
    pub axis_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", content = "payload", rename_all = "snake_case")]
pub enum RenderedExplanation {
    Rules(String),
    Visual(VisualSpec),
    Language(String),
    None,
}

pub fn render(d: &TuneDecision, impacts: &[f64], format: ExplanationFormat) -> RenderedExplanation {
    match format {
        ExplanationFormat::Rules => RenderedExplanation::Rules(render_rules(d)),
        ExplanationFormat::Visual => RenderedExplanation::Visual(render_visual(d, impacts)),
        ExplanationFormat::Language => RenderedExplanation::Language(render_language(d)),
    }
}

fn param(name: &str) -> Option<Param> {
    Param::from_key(name)
}

fn symbol(name: &str) -> &str {
    match param(name) {
        Some(p) => p.symbol(),
        None => name,
    }
}

/// Value at the parameter's display precision (2 decimals for unknown names).
pub fn format_value(name: &str, v: f64) -> String {
    let dp = param(name).map_or(2, Param::decimals);
    let s = format!("{v:.dp$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') { s[1..].to_string() } else { s }
}

/// Like [`format_value`] with trailing zeros removed ("0.60" → "0.6").
pub fn format_trimmed(name: &str, v: f64) -> String {
    let s = format_value(name, v);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// `No tune: a, b, Tune: x ∈ [lo, hi], …` followed by the predicted
/// objective interval on a second line.
pub fn render_rules(d: &TuneDecision) -> String {
    let no_tune: Vec<&str> = d.no_tune().map(symbol).collect();
    let tune: Vec<String> = d
        .tune()
        .map(|(n, [lo, hi])| format!("{} ∈ [{}, {}]", symbol(n), format_value(n, lo), format_value(n, hi)))
        .collect();
    let join = |v: Vec<String>| if v.is_empty() { EMPTY.to_string() } else { v.join(", ") };
    format!(
        "No tune: {}, Tune: {}\nPredicted objective (95%): [{:.1}, {:.1}]",
        join(no_tune.into_iter().map(str::to_string).collect()),
        join(tune),
        d.interval[0],
        d.interval[1]
    )
}

/// Bars in parameter order. Tune bars point left with length proportional
/// to their impact; No-Tune bars are short stubs pointing right.
pub fn render_visual(d: &TuneDecision, impacts: &[f64]) -> VisualSpec {
    let max = d
        .params
        .iter()
        .enumerate()
        .filter(|(_, p)| p.tune.is_some())
        .map(|(i, _)| impacts.get(i).copied().unwrap_or(0.0))
        .fold(0.0, f64::max);
    let bars = d
        .params
        .iter()
        .enumerate()
        .map(|(i, p)| match p.tune {
            Some(r) => {
                let imp = impacts.get(i).copied().unwrap_or(0.0).max(0.0);
                let len = if max > 0.0 && imp > 0.0 { -(imp / max) } else { -SENTINEL };
                Bar { name: p.name.clone(), signed_length: len, tune_class: TuneClass::Tune, range: Some(r) }
            }
            None => Bar { name: p.name.clone(), signed_length: SENTINEL, tune_class: TuneClass::NoTune, range: None },
        })
        .collect();
    VisualSpec { bars, axis_label: AXIS_LABEL.to_string() }
}

fn described(name: &str) -> String {
    match param(name) {
        Some(p) => format!("{} ({})", p.label(), p.symbol()),
        None => name.to_string(),
    }
}

fn sort_key(name: &str) -> String {
    match param(name) {
        Some(p) => p.label().to_lowercase(),
        None => name.to_lowercase(),
    }
}

fn oxford(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{}, and {}", init.join(", "), last),
    }
}

/// Two-sentence template. Items within each sentence are listed
/// alphabetically by their label.
pub fn render_language(d: &TuneDecision) -> String {
    let mut no_tune: Vec<&str> = d.no_tune().collect();
    no_tune.sort_by_key(|n| sort_key(n));
    let mut tune: Vec<(&str, [f64; 2])> = d.tune().collect();
    tune.sort_by_key(|(n, _)| sort_key(n));

    let mut sentences = Vec::new();
    if !no_tune.is_empty() {
        let items: Vec<String> = no_tune.iter().map(|n| described(n)).collect();
        sentences.push(format!("Maintain stability for {}.", oxford(&items)));
    }
    if !tune.is_empty() {
        let items: Vec<String> = tune
            .iter()
            .map(|(n, [lo, hi])| format!("{} between {} and {}", described(n), format_trimmed(n, *lo), format_trimmed(n, *hi)))
            .collect();
        sentences.push(format!("Fine-tune {} for optimal performance.", oxford(&items)));
    }
    sentences.join(" ")
}

/// Tune/No-Tune partition recovered from a rendered explanation, keyed by
/// parameter name in the order it appeared.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Partition {
    pub no_tune: Vec<String>,
    pub tune: Vec<(String, [f64; 2])>,
}

impl Partition {
    pub fn of(d: &TuneDecision) -> Partition {
        Partition {
            no_tune: d.no_tune().map(str::to_string).collect(),
            tune: d.tune().map(|(n, r)| (n.to_string(), r)).collect(),
        }
    }

    /// Both lists sorted by name, for order-insensitive comparison.
    pub fn canonical(mut self) -> Partition {
        self.no_tune.sort();
        self.tune.sort_by(|a, b| a.0.cmp(&b.0));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("cannot parse explanation: {0}")]
pub struct ParseError(String);

fn err(msg: impl Into<String>) -> ParseError {
    ParseError(msg.into())
}

fn name_from_symbol(s: &str) -> String {
    Param::from_symbol(s).map_or_else(|| s.to_string(), |p| p.key().to_string())
}

fn number(s: &str) -> Result<f64, ParseError> {
    s.trim().parse().map_err(|_| err(format!("bad number {s:?}")))
}

pub fn parse_rules(text: &str) -> Result<Partition, ParseError> {
    let first = text.lines().next().unwrap_or("");
    let rest = first.strip_prefix("No tune: ").ok_or_else(|| err("missing 'No tune:' prefix"))?;
    let split = rest.find("Tune: ").ok_or_else(|| err("missing 'Tune:' section"))?;
    let no_tune_part = rest[..split].trim_end().strip_suffix(',').ok_or_else(|| err("missing separator"))?;
    let tune_part = &rest[split + "Tune: ".len()..];

    let no_tune = if no_tune_part == EMPTY {
        Vec::new()
    } else {
        no_tune_part.split(", ").map(name_from_symbol).collect()
    };
    let mut tune = Vec::new();
    if tune_part != EMPTY {
        for item in tune_part.split("], ") {
            let item = item.trim_end_matches(']');
            let (sym, range) = item.split_once(" ∈ [").ok_or_else(|| err(format!("bad tune item {item:?}")))?;
            let (lo, hi) = range.split_once(", ").ok_or_else(|| err(format!("bad range {range:?}")))?;
            tune.push((name_from_symbol(sym), [number(lo)?, number(hi)?]));
        }
    }
    Ok(Partition { no_tune, tune })
}

pub fn parse_visual(spec: &VisualSpec) -> Result<Partition, ParseError> {
    let mut p = Partition::default();
    for bar in &spec.bars {
        match (bar.tune_class, bar.range) {
            (TuneClass::Tune, Some(r)) => p.tune.push((bar.name.clone(), r)),
            (TuneClass::Tune, None) => return Err(err(format!("tune bar {} has no range", bar.name))),
            (TuneClass::NoTune, _) => p.no_tune.push(bar.name.clone()),
        }
    }
    Ok(p)
}

fn split_list(list: &str) -> Vec<&str> {
    let items: Vec<&str> = list.split(", ").collect();
    let n = items.len();
    items
        .into_iter()
        .enumerate()
        .map(|(i, s)| if n > 1 && i == n - 1 { s.strip_prefix("and ").unwrap_or(s) } else { s })
        .collect()
}

fn name_from_described(item: &str) -> String {
    match item.rsplit_once(" (") {
        Some((_, sym)) => name_from_symbol(sym.trim_end_matches(')')),
        None => item.to_string(),
    }
}

pub fn parse_language(text: &str) -> Result<Partition, ParseError> {
    const NO_TUNE: &str = "Maintain stability for ";
    const TUNE: &str = "Fine-tune ";
    const TUNE_END: &str = " for optimal performance.";
    let mut p = Partition::default();
    let mut rest = text;
    if let Some(r) = rest.strip_prefix(NO_TUNE) {
        let end = r.find(". ").map_or_else(|| r.strip_suffix('.').map(str::len), Some).ok_or_else(|| err("unterminated sentence"))?;
        p.no_tune = split_list(&r[..end]).into_iter().map(name_from_described).collect();
        rest = r[end..].trim_start_matches('.').trim_start();
    }
    if let Some(r) = rest.strip_prefix(TUNE) {
        let body = r.strip_suffix(TUNE_END).ok_or_else(|| err("unterminated tune sentence"))?;
        for item in split_list(body) {
            let (desc, range) = item.split_once(" between ").ok_or_else(|| err(format!("bad tune item {item:?}")))?;
            let (lo, hi) = range.split_once(" and ").ok_or_else(|| err(format!("bad range {range:?}")))?;
            p.tune.push((name_from_described(desc), [number(lo)?, number(hi)?]));
        }
    } else if !rest.is_empty() {
        return Err(err(format!("unexpected text {rest:?}")));
    }
    Ok(p)
}

/// Instruction text sent to the external text-generation service.
pub const LLM_PROMPT: &str = "Based on the provided tuning recommendations, generate a textual explanation in natural language:\n\
1. Clearly identify the parameters that should not be tuned (stated as \"maintain stability\").\n\
2. Highlight the parameters that should be fine-tuned, specifying the recommended ranges.\n\
3. Use clear and concise language for readability.";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("text service request failed: {0}")]
    Transport(String),
    #[error("text service reply malformed: {0}")]
    Malformed(String),
}

/// Single-endpoint text-generation service.
pub trait TextService {
    fn generate(&self, prompt: &str, facts: &serde_json::Value) -> Result<String, LlmError>;
}

/// JSON-over-HTTP client: POSTs `{prompt, facts}` and expects `{text}`.
#[derive(Debug, Clone)]
pub struct HttpTextService {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpTextService {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        HttpTextService { endpoint: endpoint.into(), api_key, timeout: Duration::from_secs(10) }
    }
}

#[derive(Deserialize)]
struct TextReply {
    text: String,
}

impl TextService for HttpTextService {
    fn generate(&self, prompt: &str, facts: &serde_json::Value) -> Result<String, LlmError> {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(self.timeout)).build().into();
        let mut req = agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(serde_json::json!({ "prompt": prompt, "facts": facts }))
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let reply: TextReply = resp.body_mut().read_json().map_err(|e| LlmError::Malformed(e.to_string()))?;
        Ok(reply.text)
    }
}

/// Facts passed alongside the prompt.
pub fn llm_facts(d: &TuneDecision) -> serde_json::Value {
    let tune: Vec<serde_json::Value> = d
        .tune()
        .map(|(n, [lo, hi])| {
            serde_json::json!({
                "name": described(n),
                "lower": format_trimmed(n, lo),
                "upper": format_trimmed(n, hi),
            })
        })
        .collect();
    let no_tune: Vec<String> = d.no_tune().map(described).collect();
    serde_json::json!({ "tune": tune, "no_tune": no_tune })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rewrite {
    pub text: String,
    /// The template was used because the service failed or its reply was rejected.
    pub fallback: bool,
}

fn numbers_in(text: &str) -> Vec<String> {
    // unsigned: "70-74" is a range, not 70 and -74
    let re = regex::Regex::new(r"\d+(?:\.\d+)?").expect("static regex");
    re.find_iter(text).map(|m| m.as_str().to_string()).collect()
}

/// A reply is accepted when it mentions every parameter label and every
/// range bound, and contains no other numbers.
pub fn validate_rewrite(d: &TuneDecision, reply: &str) -> bool {
    let lower = reply.to_lowercase();
    let names_ok = d
        .params
        .iter()
        .all(|p| lower.contains(&sort_key(&p.name)));
    let bounds: Vec<String> = d
        .tune()
        .flat_map(|(n, [lo, hi])| [format_trimmed(n, lo), format_trimmed(n, hi)])
        .map(|b| b.trim_start_matches('-').to_string())
        .collect();
    let bounds_ok = bounds.iter().all(|b| numbers_in(reply).contains(b));
    let no_extra = numbers_in(reply).iter().all(|n| bounds.contains(n));
    names_ok && bounds_ok && no_extra
}

/// Rewrites the template text through `service`, falling back to the
/// template on any failure.
pub fn llm_rewrite(template_text: &str, d: &TuneDecision, service: &dyn TextService) -> Rewrite {
    match service.generate(LLM_PROMPT, &llm_facts(d)) {
        Ok(reply) if validate_rewrite(d, &reply) => Rewrite { text: reply, fallback: false },
        Ok(reply) => {
            log::warn!("rejected rewritten explanation: {reply:?}");
            Rewrite { text: template_text.to_string(), fallback: true }
        }
        Err(e) => {
            log::warn!("{e}");
            Rewrite { text: template_text.to_string(), fallback: true }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tntrules::ParamDecision;

    pub(crate) fn worked_example() -> TuneDecision {
        let tune = |p: Param, r: Option<[f64; 2]>| ParamDecision { name: p.key().into(), fixed: false, tune: r };
        TuneDecision {
            params: vec![
                tune(Param::Mass, Some([70.0, 74.0])),
                tune(Param::Lambda, None),
                tune(Param::Ywr, Some([0.6, 0.9])),
                tune(Param::TEgg, None),
                tune(Param::TYolk, None),
                tune(Param::Altitude, None),
            ],
            interval: [1.25, 20.5],
            converged: false,
        }
    }

    #[test]
    fn rules_text() {
        assert_eq!(
            render_rules(&worked_example()),
            "No tune: λ, Tegg, Tyolk, A, Tune: M ∈ [70, 74], ywr ∈ [0.60, 0.90]\nPredicted objective (95%): [1.2, 20.5]"
        );
    }

    #[test]
    fn two_item_list_uses_comma_and() {
        assert_eq!(oxford(&["a".into(), "b".into()]), "a, and b");
        assert_eq!(oxford(&["a".into()]), "a");
    }

    #[test]
    fn visual_lengths() {
        let d = worked_example();
        let v = render_visual(&d, &[2.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let lens: Vec<f64> = v.bars.iter().map(|b| b.signed_length).collect();
        assert_eq!(lens, vec![-1.0, SENTINEL, -0.5, SENTINEL, SENTINEL, SENTINEL]);
        let zero = render_visual(&d, &[0.0; 6]);
        assert!(zero.bars.iter().all(|b| b.signed_length.abs() == SENTINEL));
    }

    #[test]
    fn rendered_json_shape() {
        let r = render(&worked_example(), &[1.0; 6], ExplanationFormat::Visual);
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["format"], "visual");
        assert_eq!(v["payload"]["bars"].as_array().unwrap().len(), 6);
        assert_eq!(serde_json::to_value(RenderedExplanation::None).unwrap()["format"], "none");
    }

    struct Canned(Result<String, ()>);

    impl TextService for Canned {
        fn generate(&self, _: &str, _: &serde_json::Value) -> Result<String, LlmError> {
            self.0.clone().map_err(|_| LlmError::Transport("offline".into()))
        }
    }

    #[test]
    fn rewrite_validation() {
        let d = worked_example();
        let template = render_language(&d);
        let good = "Keep lambda, altitude, egg temperature and yolk temperature steady. Adjust mass to 70-74 \
                    and the yolk-to-white ratio to 0.6-0.9.";
        assert_eq!(llm_rewrite(&template, &d, &Canned(Ok(good.into()))), Rewrite { text: good.into(), fallback: false });
        let missing = good.replace("0.9", "0.8");
        assert!(llm_rewrite(&template, &d, &Canned(Ok(missing))).fallback);
        let extra = format!("{good} Cook for 5 minutes.");
        assert!(llm_rewrite(&template, &d, &Canned(Ok(extra))).fallback);
        let down = llm_rewrite(&template, &d, &Canned(Err(())));
        assert_eq!(down, Rewrite { text: template, fallback: true });
    }

    #[test]
    fn unreachable_endpoint_falls_back() {
        let d = worked_example();
        let mut svc = HttpTextService::new("http://127.0.0.1:9/generate", Some("k".into()));
        svc.timeout = Duration::from_secs(2);
        assert!(llm_rewrite("t", &d, &svc).fallback);
    }
}
