//! Tune/No-Tune rule extraction from a fitted surrogate.
//!
//! Pipeline:
//! 1. sample the search space uniformly and annotate each sample with the
//!    GP posterior mean and std ([`generate_dataset`]);
//! 2. Ward-linkage agglomerative clustering of the column-normalized
//!    `[inputs, mu, sigma]` matrix ([`cluster`]);
//! 3. top-down variance pruning: a subtree is kept whole when the variance
//!    of `mu` within it is at most `t_s` ([`variance_prune`]);
//! 4. one IF-THEN rule per kept cluster: bounding box of the inputs as
//!    antecedent, `mu* ± 2 sigma*` of the cluster's lowest-mean row as
//!    consequent ([`construct_rules`]);
//! 5. coverage / support / confidence / relevance and their weighted sum
//!    ([`score_rules`]), thresholding ([`filter_rules`]);
//! 6. per-parameter impact of the top rule and the Tune/No-Tune split
//!    ([`binarize_tune`]).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bo::SearchSpace;
use crate::gp::GpModel;

pub const MIN_SAMPLES: usize = 50;
const IMPACT_GRID: usize = 33;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExplainError {
    #[error("explanation dataset needs at least {MIN_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error("clustering needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("rule weights must be non-negative and sum to 1, got {0:?}")]
    BadWeights([f64; 4]),
    #[error("no rules could be constructed")]
    NoRules,
    #[error("recommendation has {got} coordinates, space has {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

/// Uniform sample of the search space annotated with the GP posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationDataset {
    pub inputs: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl ExplanationDataset {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    /// Rows of `[inputs, mu, sigma]` scaled to `[0, 1]` per column.
    pub fn normalized_rows(&self) -> Vec<Vec<f64>> {
        let rows: Vec<Vec<f64>> = (0..self.len())
            .map(|i| {
                let mut r = self.inputs[i].clone();
                r.push(self.mu[i]);
                r.push(self.sigma[i]);
                r
            })
            .collect();
        let cols = rows.first().map_or(0, Vec::len);
        let mut lo = vec![f64::INFINITY; cols];
        let mut hi = vec![f64::NEG_INFINITY; cols];
        for r in &rows {
            for (c, v) in r.iter().enumerate() {
                lo[c] = lo[c].min(*v);
                hi[c] = hi[c].max(*v);
            }
        }
        rows.into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .map(|(c, v)| if hi[c] > lo[c] { (v - lo[c]) / (hi[c] - lo[c]) } else { 0.0 })
                    .collect()
            })
            .collect()
    }
}

pub fn generate_dataset(model: &GpModel, space: &SearchSpace, n_e: usize, seed: u64) -> Result<ExplanationDataset, ExplainError> {
    if n_e < MIN_SAMPLES {
        return Err(ExplainError::TooFewSamples(n_e));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Vec<f64>> = (0..n_e)
        .map(|_| {
            space
                .dims()
                .iter()
                .map(|d| match d.fixed {
                    Some(v) => v,
                    None => d.lower + rng.random::<f64>() * (d.upper - d.lower),
                })
                .collect()
        })
        .collect();
    let post = model.predict(&inputs);
    Ok(ExplanationDataset {
        inputs,
        mu: post.iter().map(|p| p.mean).collect(),
        sigma: post.iter().map(|p| p.std).collect(),
    })
}

/// One agglomeration step. Node ids follow the usual convention: `0..n` are
/// the original rows, `n + i` is the cluster created by merge `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linkage {
    pub n: usize,
    pub merges: Vec<Merge>,
}

impl Linkage {
    pub fn root(&self) -> usize {
        if self.merges.is_empty() { 0 } else { self.n + self.merges.len() - 1 }
    }

    pub fn children(&self, node: usize) -> Option<(usize, usize)> {
        (node >= self.n).then(|| {
            let m = &self.merges[node - self.n];
            (m.left, m.right)
        })
    }

    pub fn height(&self, node: usize) -> f64 {
        if node < self.n { 0.0 } else { self.merges[node - self.n].height }
    }

    /// Rows under `node`, ascending.
    pub fn members(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(v) = stack.pop() {
            match self.children(v) {
                Some((a, b)) => {
                    stack.push(a);
                    stack.push(b);
                }
                None => out.push(v),
            }
        }
        out.sort_unstable();
        out
    }

    /// Partition obtained by undoing the last `k - 1` merges.
    pub fn cut(&self, k: usize) -> Vec<Vec<usize>> {
        let k = k.clamp(1, self.n);
        let mut nodes = vec![self.root()];
        for i in (0..self.merges.len()).rev().take(k - 1) {
            let m = &self.merges[i];
            nodes.retain(|&v| v != self.n + i);
            nodes.push(m.left);
            nodes.push(m.right);
        }
        let mut parts: Vec<Vec<usize>> = nodes.into_iter().map(|v| self.members(v)).collect();
        parts.sort();
        parts
    }
}

fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    n * i - i * (i + 1) / 2 + (j - i - 1)
}

/// Ward linkage on Euclidean distances using the nearest-neighbour chain
/// algorithm with Lance–Williams updates. Merge heights are the Ward
/// distances (same scale as SciPy's `linkage(method="ward")`).
pub fn ward_linkage(points: &[Vec<f64>]) -> Result<Linkage, ExplainError> {
    let n = points.len();
    if n < 2 {
        return Err(ExplainError::TooFewRows(n));
    }
    // squared distances
    let mut d = vec![0.0f64; n * (n - 1) / 2];
    for i in 0..n {
        for j in i + 1..n {
            d[condensed_index(n, i, j)] = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut chain: Vec<usize> = Vec::with_capacity(n);
    let mut raw: Vec<(usize, usize, f64)> = Vec::with_capacity(n - 1);

    while raw.len() < n - 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("an active cluster remains"));
        }
        let (a, b) = loop {
            let a = *chain.last().unwrap();
            let prev = (chain.len() >= 2).then(|| chain[chain.len() - 2]);
            let mut best = prev;
            let mut best_d = prev.map_or(f64::INFINITY, |p| d[condensed_index(n, a, p)]);
            for x in 0..n {
                if x == a || !active[x] {
                    continue;
                }
                let dx = d[condensed_index(n, a, x)];
                if dx < best_d {
                    best_d = dx;
                    best = Some(x);
                }
            }
            let b = best.expect("at least two active clusters");
            if Some(b) == prev {
                chain.pop();
                chain.pop();
                break (a, b);
            }
            chain.push(b);
        };
        let dab = d[condensed_index(n, a, b)];
        let (keep, gone) = if a < b { (b, a) } else { (a, b) };
        let (na, nb) = (size[keep] as f64, size[gone] as f64);
        active[gone] = false;
        for k in 0..n {
            if !active[k] || k == keep {
                continue;
            }
            let nk = size[k] as f64;
            let dk_keep = d[condensed_index(n, k, keep)];
            let dk_gone = d[condensed_index(n, k, gone)];
            d[condensed_index(n, k, keep)] = ((na + nk) * dk_keep + (nb + nk) * dk_gone - nk * dab) / (na + nb + nk);
        }
        size[keep] += size[gone];
        raw.push((gone, keep, dab.max(0.0).sqrt()));
    }

    // stable sort keeps children ahead of parents on equal heights
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&x, &y| raw[x].2.total_cmp(&raw[y].2));

    // relabel with union-find
    let mut parent: Vec<usize> = (0..n).collect();
    let mut label: Vec<usize> = (0..n).collect();
    let mut sz = vec![1usize; n];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut merges = Vec::with_capacity(n - 1);
    for (step, &idx) in order.iter().enumerate() {
        let (a, b, h) = raw[idx];
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        let (la, lb) = (label[ra], label[rb]);
        let (left, right) = if la < lb { (la, lb) } else { (lb, la) };
        parent[ra] = rb;
        sz[rb] += sz[ra];
        label[rb] = n + step;
        merges.push(Merge { left, right, height: h, size: sz[rb] });
    }
    Ok(Linkage { n, merges })
}

/// Ward clustering of the explanation dataset.
pub fn cluster(dataset: &ExplanationDataset) -> Result<Linkage, ExplainError> {
    ward_linkage(&dataset.normalized_rows())
}

/// Accepted clusters after variance pruning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub clusters: Vec<Vec<usize>>,
    /// Merge height of each accepted node (0 for single rows).
    pub heights: Vec<f64>,
}

/// Population variance, computed on values shifted by the first one so
/// identical inputs give exactly zero.
pub fn variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let Some(shift) = values.clone().next() else {
        return 0.0;
    };
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + (v - shift)));
    let mean = sum / n as f64;
    values.map(|v| (v - shift - mean).powi(2)).sum::<f64>() / n as f64
}

/// Top-down traversal: a node whose rows have `Var(mu) <= t_s` is accepted
/// whole, otherwise both children are examined. Single rows are always
/// accepted.
pub fn variance_prune(tree: &Linkage, dataset: &ExplanationDataset, t_s: f64) -> ClusterSet {
    let mut clusters = Vec::new();
    let mut heights = Vec::new();
    let mut stack = vec![tree.root()];
    while let Some(node) = stack.pop() {
        let rows = tree.members(node);
        let var = variance(rows.iter().map(|&r| dataset.mu[r]));
        match tree.children(node) {
            Some((a, b)) if !(var <= t_s) => {
                stack.push(b);
                stack.push(a);
            }
            _ => {
                heights.push(tree.height(node));
                clusters.push(rows);
            }
        }
    }
    ClusterSet { clusters, heights }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleMetrics {
    pub coverage: f64,
    pub support: f64,
    pub confidence: f64,
    pub relevance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub antecedent: Vec<(f64, f64)>,
    pub consequent: (f64, f64),
    pub metrics: RuleMetrics,
    pub interestingness: f64,
    /// Dataset rows of the cluster the rule was built from.
    #[serde(skip)]
    pub rows: Vec<usize>,
}

impl Rule {
    pub fn contains(&self, x: &[f64]) -> bool {
        self.antecedent.iter().zip(x).all(|((lo, hi), v)| *lo <= *v && *v <= *hi)
    }
}

pub fn construct_rules(dataset: &ExplanationDataset, clusters: &ClusterSet) -> Vec<Rule> {
    let d = dataset.dim();
    clusters
        .clusters
        .iter()
        .filter(|c| !c.is_empty())
        .map(|rows| {
            let antecedent = (0..d)
                .map(|j| {
                    rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                        let v = dataset.inputs[r][j];
                        (lo.min(v), hi.max(v))
                    })
                })
                .collect();
            // representative: lowest mean, earliest row on ties
            let rep = *rows
                .iter()
                .min_by(|&&a, &&b| dataset.mu[a].total_cmp(&dataset.mu[b]).then(a.cmp(&b)))
                .unwrap();
            let (m, s) = (dataset.mu[rep], dataset.sigma[rep]);
            Rule {
                antecedent,
                consequent: (m - 2.0 * s, m + 2.0 * s),
                metrics: RuleMetrics::default(),
                interestingness: 0.0,
                rows: rows.clone(),
            }
        })
        .collect()
}

/// Weights for coverage, support, confidence and relevance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights(pub [f64; 4]);

impl Default for Weights {
    fn default() -> Self {
        Weights([0.25; 4])
    }
}

impl Weights {
    pub fn validate(&self) -> Result<(), ExplainError> {
        let sum: f64 = self.0.iter().sum();
        if self.0.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(ExplainError::BadWeights(self.0));
        }
        Ok(())
    }
}

/// Gaussian proximity of a predicted mean to the best predicted mean.
fn proximity(mu: f64, sigma: f64, best: f64) -> f64 {
    let diff = mu - best;
    if sigma > 0.0 {
        (-(diff * diff) / (2.0 * sigma * sigma)).exp()
    } else if diff == 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn score_rules(mut rules: Vec<Rule>, dataset: &ExplanationDataset, weights: Weights) -> Result<Vec<Rule>, ExplainError> {
    weights.validate()?;
    let n = dataset.len() as f64;
    let best = dataset.mu.iter().copied().fold(f64::INFINITY, f64::min);
    for rule in &mut rules {
        let mut covered = 0usize;
        let mut supported = 0usize;
        let mut relevance: f64 = 0.0;
        for i in 0..dataset.len() {
            if !rule.contains(&dataset.inputs[i]) {
                continue;
            }
            covered += 1;
            let mu = dataset.mu[i];
            if rule.consequent.0 <= mu && mu <= rule.consequent.1 {
                supported += 1;
                relevance = relevance.max(proximity(mu, dataset.sigma[i], best));
            }
        }
        let coverage = if n > 0.0 { covered as f64 / n } else { 0.0 };
        let support = if n > 0.0 { supported as f64 / n } else { 0.0 };
        let confidence = if covered > 0 { support / coverage } else { 0.0 };
        rule.metrics = RuleMetrics { coverage, support, confidence, relevance };
        let w = weights.0;
        rule.interestingness = w[0] * coverage + w[1] * support + w[2] * confidence + w[3] * relevance;
    }
    Ok(rules)
}

fn lexicographic(a: &Rule, b: &Rule) -> std::cmp::Ordering {
    for ((alo, ahi), (blo, bhi)) in a.antecedent.iter().zip(&b.antecedent) {
        let o = alo.total_cmp(blo).then(ahi.total_cmp(bhi));
        if o.is_ne() {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}

fn rank(rules: &mut [Rule]) {
    rules.sort_by(|a, b| {
        b.interestingness
            .total_cmp(&a.interestingness)
            .then(b.metrics.support.total_cmp(&a.metrics.support))
            .then_with(|| lexicographic(a, b))
    });
}

/// Rules ranked by interestingness, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
}

impl RuleSet {
    /// Export with named antecedent ranges.
    pub fn to_json(&self, space: &SearchSpace) -> serde_json::Value {
        let rules: Vec<serde_json::Value> = self
            .rules
            .iter()
            .map(|r| {
                let antecedent: serde_json::Map<String, serde_json::Value> = space
                    .dims()
                    .iter()
                    .zip(&r.antecedent)
                    .map(|(d, (lo, hi))| (d.name.clone(), serde_json::json!([lo, hi])))
                    .collect();
                serde_json::json!({
                    "antecedent": antecedent,
                    "consequent": [r.consequent.0, r.consequent.1],
                    "covr": r.metrics.coverage,
                    "supp": r.metrics.support,
                    "con": r.metrics.confidence,
                    "rel": r.metrics.relevance,
                    "alpha": r.interestingness,
                })
            })
            .collect();
        serde_json::json!({ "rules": rules })
    }
}

/// Keeps rules with `alpha >= t_alpha`, sorted by alpha, then support, then
/// antecedent.
pub fn filter_rules(rules: &[Rule], t_alpha: f64) -> RuleSet {
    let mut kept: Vec<Rule> = rules.iter().filter(|r| r.interestingness >= t_alpha).cloned().collect();
    rank(&mut kept);
    RuleSet { rules: kept }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDecision {
    pub name: String,
    #[serde(default)]
    pub fixed: bool,
    /// `Some([lo, hi])` when the parameter should be tuned.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tune: Option<[f64; 2]>,
}

/// The actionable explanation: which parameters to tune and where.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneDecision {
    pub params: Vec<ParamDecision>,
    /// Predicted objective interval (approximately 95%).
    pub interval: [f64; 2],
    #[serde(default)]
    pub converged: bool,
}

impl TuneDecision {
    pub fn tune(&self) -> impl Iterator<Item = (&str, [f64; 2])> {
        self.params.iter().filter_map(|p| p.tune.map(|r| (p.name.as_str(), r)))
    }

    pub fn no_tune(&self) -> impl Iterator<Item = &str> {
        self.params.iter().filter(|p| p.tune.is_none()).map(|p| p.name.as_str())
    }

    pub fn range_of(&self, name: &str) -> Option<[f64; 2]> {
        self.params.iter().find(|p| p.name == name).and_then(|p| p.tune)
    }
}

/// Splits parameters into Tune / No-Tune by how much the predicted
/// objective improves when each free parameter alone is swept across the
/// rule's antecedent range (others held at the recommendation).
pub fn binarize_tune(
    best_rule: &Rule,
    rec: &[f64],
    space: &SearchSpace,
    model: &GpModel,
    threshold: f64,
) -> Result<(TuneDecision, Vec<f64>), ExplainError> {
    if rec.len() != space.len() {
        return Err(ExplainError::DimensionMismatch { got: rec.len(), expected: space.len() });
    }
    let base = model.predict_one(rec).mean;
    let impacts: Vec<f64> = space
        .dims()
        .iter()
        .enumerate()
        .map(|(i, d)| {
            if d.fixed.is_some() {
                return 0.0;
            }
            let (lo, hi) = best_rule.antecedent[i];
            let mut x = rec.to_vec();
            let best = (0..IMPACT_GRID)
                .map(|k| {
                    x[i] = lo + (hi - lo) * k as f64 / (IMPACT_GRID - 1) as f64;
                    model.predict_one(&x).mean
                })
                .fold(f64::INFINITY, f64::min);
            (base - best).max(0.0)
        })
        .collect();
    let max_impact = impacts.iter().copied().fold(0.0, f64::max);
    let converged = !(max_impact > 0.0);
    if converged {
        log::info!("no parameter improves the prediction; treating the recommendation as converged");
    }
    let params = space
        .dims()
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let (lo, hi) = best_rule.antecedent[i];
            let tune = (d.fixed.is_none() && !converged && impacts[i] >= threshold * max_impact && hi > lo)
                .then_some([lo, hi]);
            ParamDecision { name: d.name.clone(), fixed: d.fixed.is_some(), tune }
        })
        .collect();
    Ok((
        TuneDecision {
            params,
            interval: [best_rule.consequent.0, best_rule.consequent.1],
            converged,
        },
        impacts,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    pub n_e: usize,
    /// Variance threshold; `None` uses `(0.05 * range(mu))^2`.
    pub t_s: Option<f64>,
    pub t_alpha: f64,
    pub weights: Weights,
    pub seed: u64,
    pub tune_threshold: f64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            n_e: 2000,
            t_s: None,
            t_alpha: 0.5,
            weights: Weights::default(),
            seed: 0,
            tune_threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub decision: TuneDecision,
    pub rules: RuleSet,
    pub impacts: Vec<f64>,
    /// Variance threshold that was applied.
    pub t_s: f64,
    /// Set when no rule passed `t_alpha` and the best unfiltered rule was used.
    pub fallback: bool,
}

pub fn default_t_s(dataset: &ExplanationDataset) -> f64 {
    let (lo, hi) = dataset
        .mu
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let range = if hi > lo { hi - lo } else { 0.0 };
    (0.05 * range).powi(2)
}

/// End-to-end explanation of a recommendation.
pub fn explain(model: &GpModel, space: &SearchSpace, rec: &[f64], config: &ExplainConfig) -> Result<Explanation, ExplainError> {
    config.weights.validate()?;
    let dataset = generate_dataset(model, space, config.n_e, config.seed)?;
    let tree = cluster(&dataset)?;
    let t_s = config.t_s.unwrap_or_else(|| default_t_s(&dataset));
    let clusters = variance_prune(&tree, &dataset, t_s);
    let scored = score_rules(construct_rules(&dataset, &clusters), &dataset, config.weights)?;
    let mut rules = filter_rules(&scored, config.t_alpha);
    let fallback = rules.rules.is_empty();
    if fallback {
        log::warn!("no rule reached t_alpha = {}; using the best unfiltered rule", config.t_alpha);
        let mut all = scored.clone();
        rank(&mut all);
        all.truncate(1);
        rules = RuleSet { rules: all };
    }
    let top = rules.rules.first().ok_or(ExplainError::NoRules)?;
    let (decision, impacts) = binarize_tune(top, rec, space, model, config.tune_threshold)?;
    Ok(Explanation { decision, rules, impacts, t_s, fallback })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bo::Dimension;
    use crate::gp::KernelConfig;

    fn dataset(inputs: Vec<Vec<f64>>, mu: Vec<f64>, sigma: Vec<f64>) -> ExplanationDataset {
        ExplanationDataset { inputs, mu, sigma }
    }

    #[test]
    fn duplicated_rows_merge_first_at_zero() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 0.0], vec![5.0, 0.0]];
        let l = ward_linkage(&pts).unwrap();
        assert_eq!(l.merges[0].height, 0.0);
        assert_eq!((l.merges[0].left, l.merges[0].right), (0, 2));
        assert_eq!(l.merges.last().unwrap().size, 4);
    }

    #[test]
    fn linkage_needs_two_rows() {
        assert!(matches!(ward_linkage(&[vec![1.0]]), Err(ExplainError::TooFewRows(1))));
    }

    #[test]
    fn ward_heights_monotone() {
        let pts: Vec<Vec<f64>> = (0..30).map(|i| vec![((i * 37) % 17) as f64, ((i * 11) % 7) as f64 * 0.3]).collect();
        let l = ward_linkage(&pts).unwrap();
        assert!(l.merges.windows(2).all(|w| w[0].height <= w[1].height));
        assert_eq!(l.members(l.root()), (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn prune_extremes() {
        let ds = dataset(
            (0..6).map(|i| vec![i as f64]).collect(),
            vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            vec![0.1; 6],
        );
        let tree = cluster(&ds).unwrap();
        let all = variance_prune(&tree, &ds, f64::INFINITY);
        assert_eq!(all.clusters, vec![(0..6).collect::<Vec<_>>()]);
        let singles = variance_prune(&tree, &ds, 0.0);
        assert_eq!(singles.clusters.len(), 6);
    }

    #[test]
    fn singleton_and_full_rules() {
        let ds = dataset(
            vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![1.0, -1.0], vec![0.5, 0.5]],
            vec![3.0, 1.0, 2.0, 1.0],
            vec![0.5, 0.25, 0.1, 2.0],
        );
        let single = construct_rules(&ds, &ClusterSet { clusters: vec![vec![2]], heights: vec![0.0] });
        assert_eq!(single[0].antecedent, vec![(1.0, 1.0), (-1.0, -1.0)]);
        let full = construct_rules(&ds, &ClusterSet { clusters: vec![vec![0, 1, 2, 3]], heights: vec![1.0] });
        assert_eq!(full[0].antecedent, vec![(0.0, 2.0), (-1.0, 3.0)]);
        // rows 1 and 3 tie on mu = 1.0; the earlier row represents the cluster
        assert_eq!(full[0].consequent, (0.5, 1.5));
    }

    #[test]
    fn filter_thresholds() {
        let mk = |a: f64, s: f64, lo: f64| Rule {
            antecedent: vec![(lo, lo + 1.0)],
            consequent: (0.0, 1.0),
            metrics: RuleMetrics { support: s, ..Default::default() },
            interestingness: a,
            rows: vec![],
        };
        let rules = vec![mk(0.3, 0.1, 0.0), mk(0.7, 0.2, 1.0), mk(0.7, 0.3, 2.0), mk(0.7, 0.3, -1.0)];
        assert_eq!(filter_rules(&rules, 0.0).rules.len(), 4);
        assert!(filter_rules(&rules, 0.71).rules.is_empty());
        let kept = filter_rules(&rules, 0.5);
        let los: Vec<f64> = kept.rules.iter().map(|r| r.antecedent[0].0).collect();
        assert_eq!(los, vec![-1.0, 2.0, 1.0]);
    }

    #[test]
    fn bad_weights_rejected() {
        let ds = dataset(vec![vec![0.0]], vec![0.0], vec![0.0]);
        assert!(score_rules(vec![], &ds, Weights([0.5, 0.5, 0.5, -0.5])).is_err());
        assert!(score_rules(vec![], &ds, Weights([0.5, 0.5, 0.5, 0.5])).is_err());
    }

    fn fixed_space() -> SearchSpace {
        SearchSpace::new(vec![
            Dimension { name: "a".into(), lower: 0.0, upper: 1.0, fixed: Some(0.3) },
            Dimension { name: "b".into(), lower: 0.0, upper: 1.0, fixed: Some(0.6) },
        ])
        .unwrap()
    }

    fn toy_model() -> GpModel {
        let x = vec![vec![0.1, 0.2], vec![0.9, 0.4], vec![0.5, 0.8]];
        let y = vec![1.0, 0.0, 2.0];
        GpModel::with_config(&x, &y, &[(0.0, 1.0), (0.0, 1.0)], KernelConfig::isotropic(2, 0.4, 1.0, 1e-6)).unwrap()
    }

    #[test]
    fn all_fixed_space_gives_identical_rows_and_no_tune() {
        let model = toy_model();
        let space = fixed_space();
        let ds = generate_dataset(&model, &space, 50, 1).unwrap();
        assert!(ds.inputs.iter().all(|r| r == &vec![0.3, 0.6]));
        assert_eq!(variance(ds.mu.iter().copied()), 0.0);
        let ex = explain(&model, &space, &[0.3, 0.6], &ExplainConfig { n_e: 50, t_alpha: 0.0, ..Default::default() }).unwrap();
        assert!(ex.decision.params.iter().all(|p| p.tune.is_none() && p.fixed));
        assert!(ex.decision.converged);
    }

    #[test]
    fn too_few_samples_rejected() {
        let model = toy_model();
        let space = fixed_space();
        assert!(matches!(generate_dataset(&model, &space, 49, 0), Err(ExplainError::TooFewSamples(49))));
    }

    #[test]
    fn one_free_dimension_with_impact_is_tuned() {
        let model = toy_model();
        let space = SearchSpace::new(vec![
            Dimension { name: "a".into(), lower: 0.0, upper: 1.0, fixed: None },
            Dimension { name: "b".into(), lower: 0.0, upper: 1.0, fixed: Some(0.4) },
        ])
        .unwrap();
        let rule = Rule {
            antecedent: vec![(0.0, 1.0), (0.4, 0.4)],
            consequent: (-1.0, 1.0),
            metrics: RuleMetrics::default(),
            interestingness: 1.0,
            rows: vec![],
        };
        let (d, impacts) = binarize_tune(&rule, &[0.1, 0.4], &space, &model, 0.1).unwrap();
        assert!(impacts[0] > 0.0);
        assert_eq!(d.params[0].tune, Some([0.0, 1.0]));
        assert!(d.params[1].tune.is_none() && d.params[1].fixed);
    }

    #[test]
    fn min_sample_pipeline_yields_a_rule() {
        let model = toy_model();
        let space = SearchSpace::new(vec![
            Dimension { name: "a".into(), lower: 0.0, upper: 1.0, fixed: None },
            Dimension { name: "b".into(), lower: 0.0, upper: 1.0, fixed: None },
        ])
        .unwrap();
        let cfg = ExplainConfig { n_e: 50, t_alpha: 0.0, seed: 4, ..Default::default() };
        let ex = explain(&model, &space, &[0.5, 0.5], &cfg).unwrap();
        assert!(!ex.rules.rules.is_empty());
        assert!(!ex.fallback);
        let again = explain(&model, &space, &[0.5, 0.5], &cfg).unwrap();
        assert_eq!(ex, again);
        let json = ex.rules.to_json(&space);
        assert!(json["rules"][0]["antecedent"]["a"].is_array());
    }
}
