//! Factual/counterfactual teaching with a tabular memory-based learner.
//!
//! Each training episode draws a hidden task parameter, then alternates:
//! the learner predicts the expert's action from its table, samples its
//! own action from that prediction, and is scored against the action the
//! expert would have taken (counterfactual teaching); the environment then
//! answers the learner's action and the learner is scored on predicting it
//! (factual teaching). The learner's own action is appended to the memory as
//! an intervention and never serves as a target.
//!
//! The learner is a smoothed counting estimator keyed by the tagged
//! history, which is exactly the log-loss minimizer for each key, so the
//! tables converge to Q(a_t | do(a_<t), o_<t) and Q(o_t | do(a_<=t), o_<t).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::policies::TaggedHistory;
use crate::process::{CausalProcess, EvidenceItem, Mode, Role};
use crate::rng::{split_seed, stream, StreamRng};
use crate::rounds::{unroll_rounds, RoundStructure};

/// Memory state of the learner: the tagged history itself.
pub type HistoryKey = TaggedHistory;

/// Event counts over one alphabet per history key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable {
    domain: usize,
    rows: BTreeMap<HistoryKey, Vec<u64>>,
}

impl CountTable {
    pub fn new(domain: usize) -> Self {
        Self {
            domain,
            rows: BTreeMap::new(),
        }
    }

    pub fn domain(&self) -> usize {
        self.domain
    }

    pub fn record(&mut self, key: &HistoryKey, symbol: usize) {
        assert!(symbol < self.domain, "symbol outside the table alphabet");
        if let Some(row) = self.rows.get_mut(key) {
            row[symbol] += 1;
        } else {
            let mut row = vec![0; self.domain];
            row[symbol] = 1;
            self.rows.insert(key.clone(), row);
        }
    }

    pub fn counts(&self, key: &HistoryKey) -> Option<&[u64]> {
        self.rows.get(key).map(Vec::as_slice)
    }

    pub fn total(&self, key: &HistoryKey) -> u64 {
        self.counts(key).map_or(0, |c| c.iter().sum())
    }

    pub fn rows(&self) -> impl Iterator<Item = (&HistoryKey, &[u64])> {
        self.rows.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// (counts + alpha) / (total + alpha * domain); uniform for an unseen
    /// key when alpha is zero.
    pub fn predictive(&self, key: &HistoryKey, alpha: f64) -> Distribution {
        let zeros = vec![0; self.domain];
        let counts = self.counts(key).unwrap_or(&zeros);
        let total = counts.iter().sum::<u64>() as f64 + alpha * self.domain as f64;
        if total <= 0.0 {
            return Distribution::uniform(self.domain);
        }
        Distribution::from_weights(counts.iter().map(|&c| (c as f64 + alpha) / total).collect())
            .expect("smoothed counts are positive")
    }

    pub fn merge(&mut self, other: &CountTable) {
        assert_eq!(self.domain, other.domain, "alphabet mismatch");
        for (key, counts) in &other.rows {
            let row = self.rows.entry(key.clone()).or_insert_with(|| vec![0; self.domain]);
            for (a, b) in row.iter_mut().zip(counts) {
                *a += b;
            }
        }
    }
}

/// Action table (f_A) and observation table (f_O) of the learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerTable {
    pub alpha: f64,
    pub actions: CountTable,
    pub observations: CountTable,
}

impl LearnerTable {
    pub fn new(action_domain: usize, observation_domain: usize, alpha: f64) -> Self {
        Self {
            alpha,
            actions: CountTable::new(action_domain),
            observations: CountTable::new(observation_domain),
        }
    }

    /// Untrained learner sized for a round-structured process.
    pub fn for_process(process: &CausalProcess, alpha: f64) -> Result<Self> {
        let rs = RoundStructure::detect(process)?;
        let (a, o) = rs.rounds[0];
        Ok(Self::new(process.domain_size(a), process.domain_size(o), alpha))
    }

    pub fn action_predictive(&self, key: &HistoryKey) -> Distribution {
        self.actions.predictive(key, self.alpha)
    }

    pub fn observation_predictive(&self, key: &HistoryKey) -> Distribution {
        self.observations.predictive(key, self.alpha)
    }

    pub fn merge(&mut self, other: &LearnerTable) {
        self.actions.merge(&other.actions);
        self.observations.merge(&other.observations);
    }

    /// Action keys hold intervened actions and conditioned observations
    /// only; observation keys additionally end with the intervened action
    /// being answered.
    pub fn check_key_discipline(&self, process: &CausalProcess) -> Result<()> {
        let check = |key: &HistoryKey| -> Result<()> {
            for e in key.items() {
                let var = process
                    .variables
                    .get(e.variable)
                    .ok_or_else(|| Error::UnknownVariable(format!("#{}", e.variable)))?;
                let ok = match var.role {
                    Role::Action => e.mode == Mode::Intervene,
                    Role::Observation => e.mode == Mode::Condition,
                    _ => false,
                };
                if !ok {
                    return Err(Error::InvalidHistory(format!("key {key} mixes tags")));
                }
            }
            Ok(())
        };
        for (key, _) in self.actions.rows() {
            check(key)?;
        }
        for (key, _) in self.observations.rows() {
            check(key)?;
            match key.items().last() {
                Some(e) if e.mode == Mode::Intervene => {}
                _ => {
                    return Err(Error::InvalidHistory(format!(
                        "observation key {key} does not end with an action"
                    )))
                }
            }
        }
        Ok(())
    }

    /// Canonical text form: a header, then one line per row, keys sorted.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "learner-table v1").unwrap();
        writeln!(out, "alpha {:?}", self.alpha).unwrap();
        writeln!(out, "action-domain {}", self.actions.domain()).unwrap();
        writeln!(out, "observation-domain {}", self.observations.domain()).unwrap();
        for (kind, table) in [("action", &self.actions), ("observation", &self.observations)] {
            for (key, counts) in table.rows() {
                let counts: Vec<String> = counts.iter().map(u64::to_string).collect();
                writeln!(out, "{kind} {key} : {}", counts.join(" ")).unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::InvalidArgument(format!("learner table line {line}: {msg}"));
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut header = |expected: &str| -> Result<String> {
            let (i, line) = lines.next().ok_or_else(|| bad(0, "truncated header"))?;
            let rest = line
                .strip_prefix(expected)
                .ok_or_else(|| bad(i + 1, &format!("expected {expected:?}")))?;
            Ok(rest.trim().to_string())
        };
        if !header("learner-table")?.eq("v1") {
            return Err(bad(1, "unsupported version"));
        }
        let alpha: f64 = header("alpha")?.parse().map_err(|_| bad(2, "invalid alpha"))?;
        let ad: usize = header("action-domain")?.parse().map_err(|_| bad(3, "invalid domain"))?;
        let od: usize = header("observation-domain")?
            .parse()
            .map_err(|_| bad(4, "invalid domain"))?;
        let mut table = Self::new(ad, od, alpha);
        for (i, line) in lines {
            let (head, counts) = line.split_once(" : ").ok_or_else(|| bad(i + 1, "expected ' : '"))?;
            let (kind, key) = head.split_once(' ').ok_or_else(|| bad(i + 1, "expected a key"))?;
            let key = parse_key(key).ok_or_else(|| bad(i + 1, "invalid key"))?;
            let counts: Vec<u64> = counts
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(i + 1, "invalid count"))?;
            let target = match kind {
                "action" => &mut table.actions,
                "observation" => &mut table.observations,
                _ => return Err(bad(i + 1, "expected 'action' or 'observation'")),
            };
            if counts.len() != target.domain {
                return Err(bad(i + 1, "wrong number of counts"));
            }
            if target.rows.insert(key, counts).is_some() {
                return Err(bad(i + 1, "duplicate key"));
            }
        }
        Ok(table)
    }
}

/// Inverse of the `Display` form of [`TaggedHistory`].
pub fn parse_key(text: &str) -> Option<HistoryKey> {
    if text == "-" {
        return Some(HistoryKey::default());
    }
    let mut items = Vec::new();
    for term in text.split(',') {
        let (inner, mode) = match term.strip_prefix("do(").and_then(|t| t.strip_suffix(')')) {
            Some(inner) => (inner, Mode::Intervene),
            None => (term, Mode::Condition),
        };
        let (var, value) = inner.split_once('=')?;
        items.push(EvidenceItem {
            variable: var.parse().ok()?,
            value: value.parse().ok()?,
            mode,
        });
    }
    Some(HistoryKey::new(items))
}

/// One round of a training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BraidedRound {
    pub agent_action: usize,
    /// Expert's counterfactual action; scored, then discarded.
    pub expert_action: Option<usize>,
    pub observation: usize,
    /// -log P(expert_action | history) under the learner that acted.
    pub action_loss: Option<f64>,
    /// -log P(observation | history, do(agent_action)).
    pub observation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BraidedEpisode {
    pub theta: Vec<usize>,
    pub rounds: Vec<BraidedRound>,
}

impl BraidedEpisode {
    /// (a_1, o_1, ..., a_T, o_T) as seen by the agent.
    pub fn agent_trajectory(&self) -> Vec<(usize, usize)> {
        self.rounds.iter().map(|r| (r.agent_action, r.observation)).collect()
    }
}

/// How the acting learner evolves during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingVariant {
    /// The agent acts uniformly at random throughout; episodes are
    /// independent and may be generated in parallel.
    Frozen,
    /// The agent acts from the table being trained.
    Interleaved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub horizon: usize,
    pub episodes: usize,
    pub alpha: f64,
    pub seed: u64,
    pub variant: TrainingVariant,
    pub workers: usize,
}

impl TrainingConfig {
    pub fn new(horizon: usize, episodes: usize, seed: u64) -> Self {
        Self {
            horizon,
            episodes,
            alpha: 1.0,
            seed,
            variant: TrainingVariant::Interleaved,
            workers: 1,
        }
    }
}

/// Process unrolled to a horizon, with its round structure.
#[derive(Debug, Clone)]
pub struct TrainingTask {
    pub process: CausalProcess,
    pub rounds: RoundStructure,
}

impl TrainingTask {
    pub fn new(q: &CausalProcess, horizon: usize) -> Result<Self> {
        let process = unroll_rounds(q, horizon)?;
        let rounds = RoundStructure::detect(&process)?;
        if rounds.latent_count == 0 {
            return Err(Error::NotRoundStructured("no latent parameter".into()));
        }
        Ok(Self { process, rounds })
    }

    pub fn horizon(&self) -> usize {
        self.rounds.horizon()
    }

    fn sample_latents(&self, world: &mut [usize], rng: &mut StreamRng) {
        for v in 0..self.rounds.latent_count {
            world[v] = self.process.mechanisms[v].row(&self.process, world).sample(rng);
        }
    }

    /// Generates one episode. The random streams for the task parameter and
    /// observations, the agent, and the expert are disjoint, so skipping the
    /// expert (`with_expert = false`) leaves every continuation unchanged.
    pub fn episode(&self, agent: &LearnerTable, seed: u64, with_expert: bool) -> BraidedEpisode {
        let mut world_rng = stream(seed, 0);
        let mut agent_rng = stream(seed, 1);
        let mut expert_rng = stream(seed, 2);
        let mut world = vec![0usize; self.process.len()];
        self.sample_latents(&mut world, &mut world_rng);
        let mut key = HistoryKey::default();
        let mut rounds = Vec::with_capacity(self.horizon());
        for &(a, o) in &self.rounds.rounds {
            let action_prediction = agent.action_predictive(&key);
            let expert_action = with_expert.then(|| {
                self.process.mechanisms[a]
                    .row(&self.process, &world)
                    .sample(&mut expert_rng)
            });
            let agent_action = action_prediction.sample(&mut agent_rng);
            world[a] = agent_action;
            key.push(EvidenceItem::intervene(a, agent_action));
            let observation_prediction = agent.observation_predictive(&key);
            let observation = self.process.mechanisms[o]
                .row(&self.process, &world)
                .sample(&mut world_rng);
            world[o] = observation;
            key.push(EvidenceItem::condition(o, observation));
            rounds.push(BraidedRound {
                agent_action,
                expert_action,
                observation,
                action_loss: expert_action.map(|e| -action_prediction.prob(e).ln()),
                observation_loss: -observation_prediction.prob(observation).ln(),
            });
        }
        BraidedEpisode {
            theta: world[..self.rounds.latent_count].to_vec(),
            rounds,
        }
    }

    /// Keys (history before a_t, history after do(a_t)) of round `t`, 0-based.
    pub fn keys(&self, episode: &BraidedEpisode, t: usize) -> (HistoryKey, HistoryKey) {
        let mut before = HistoryKey::default();
        for (r, round) in episode.rounds[..t].iter().enumerate() {
            let (a, o) = self.rounds.rounds[r];
            before.push(EvidenceItem::intervene(a, round.agent_action));
            before.push(EvidenceItem::condition(o, round.observation));
        }
        let mut after = before.clone();
        after.push(EvidenceItem::intervene(
            self.rounds.action(t),
            episode.rounds[t].agent_action,
        ));
        (before, after)
    }

    /// Counts the expert's actions and the observations; the agent's own
    /// actions only shape the keys.
    pub fn record(&self, table: &mut LearnerTable, episode: &BraidedEpisode) {
        let mut key = HistoryKey::default();
        for (&(a, o), round) in self.rounds.rounds.iter().zip(&episode.rounds) {
            if let Some(expert) = round.expert_action {
                table.actions.record(&key, expert);
            }
            key.push(EvidenceItem::intervene(a, round.agent_action));
            table.observations.record(&key, round.observation);
            key.push(EvidenceItem::condition(o, round.observation));
        }
    }
}

/// Episodes generated by a frozen learner, seeds split from `seed`.
pub fn generate_episodes(
    q: &CausalProcess,
    agent: &LearnerTable,
    horizon: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<BraidedEpisode>> {
    let task = TrainingTask::new(q, horizon)?;
    Ok((0..count)
        .map(|i| task.episode(agent, split_seed(seed, i as u64), true))
        .collect())
}

fn run_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map(|pool| pool.install(job))
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Trains a learner by factual/counterfactual teaching.
pub fn run_training(q: &CausalProcess, config: &TrainingConfig) -> Result<LearnerTable> {
    if config.episodes == 0 {
        return Err(Error::InvalidArgument("episode count must be at least 1".into()));
    }
    if !(config.alpha >= 0.0 && config.alpha.is_finite()) {
        return Err(Error::InvalidArgument("alpha must be finite and non-negative".into()));
    }
    let task = TrainingTask::new(q, config.horizon)?;
    let empty = LearnerTable::for_process(&task.process, config.alpha)?;
    match config.variant {
        TrainingVariant::Interleaved => {
            let mut table = empty;
            for i in 0..config.episodes {
                let episode = task.episode(&table, split_seed(config.seed, i as u64), true);
                task.record(&mut table, &episode);
            }
            Ok(table)
        }
        TrainingVariant::Frozen => {
            // Uniform acting policy regardless of alpha.
            let policy = LearnerTable::for_process(&task.process, 1.0)?;
            run_pool(config.workers, || {
                (0..config.episodes)
                    .into_par_iter()
                    .fold(
                        || empty.clone(),
                        |mut table, i| {
                            let episode = task.episode(&policy, split_seed(config.seed, i as u64), true);
                            task.record(&mut table, &episode);
                            table
                        },
                    )
                    .reduce(
                        || empty.clone(),
                        |mut a, b| {
                            a.merge(&b);
                            a
                        },
                    )
            })
        }
    }
}

/// B(theta, a, abar, o): the probability of a training episode when the
/// agent acts from `learner`'s predictive.
pub fn braided_probability(q: &CausalProcess, learner: &LearnerTable, episode: &BraidedEpisode) -> Result<f64> {
    let task = TrainingTask::new(q, episode.rounds.len())?;
    let process = &task.process;
    let mut world = vec![0usize; process.len()];
    if episode.theta.len() != task.rounds.latent_count {
        return Err(Error::InvalidArgument("episode latent block has the wrong size".into()));
    }
    world[..episode.theta.len()].copy_from_slice(&episode.theta);
    let mut p: f64 = (0..task.rounds.latent_count)
        .map(|v| process.mechanisms[v].prob(process, &world))
        .product();
    let mut key = HistoryKey::default();
    for (&(a, o), round) in task.rounds.rounds.iter().zip(&episode.rounds) {
        let expert = round
            .expert_action
            .ok_or_else(|| Error::InvalidArgument("episode lacks expert actions".into()))?;
        p *= learner.action_predictive(&key).prob(round.agent_action);
        p *= process.mechanisms[a].row(process, &world).prob(expert);
        world[a] = round.agent_action;
        world[o] = round.observation;
        p *= process.mechanisms[o].prob(process, &world);
        key.push(EvidenceItem::intervene(a, round.agent_action));
        key.push(EvidenceItem::condition(o, round.observation));
    }
    Ok(p)
}

/// Mean per-round losses over held-out episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// Mean -log P(abar_t | a_<t, o_<t), one entry per round.
    pub action: Vec<f64>,
    /// Mean -log P(o_t | a_<=t, o_<t).
    pub observation: Vec<f64>,
}

pub fn loss_report(q: &CausalProcess, learner: &LearnerTable, episodes: &[BraidedEpisode]) -> Result<LossReport> {
    let horizon = episodes.first().map_or(0, |e| e.rounds.len());
    if horizon == 0 {
        return Err(Error::InvalidArgument("no held-out rounds".into()));
    }
    let task = TrainingTask::new(q, horizon)?;
    let mut action = vec![0.0; horizon];
    let mut observation = vec![0.0; horizon];
    for episode in episodes {
        if episode.rounds.len() != horizon {
            return Err(Error::InvalidArgument("held-out episodes differ in length".into()));
        }
        for (t, round) in episode.rounds.iter().enumerate() {
            let (before, after) = task.keys(episode, t);
            let expert = round
                .expert_action
                .ok_or_else(|| Error::InvalidArgument("episode lacks expert actions".into()))?;
            action[t] -= learner.action_predictive(&before).prob(expert).ln();
            observation[t] -= learner.observation_predictive(&after).prob(round.observation).ln();
        }
    }
    let n = episodes.len() as f64;
    Ok(LossReport {
        action: action.into_iter().map(|x| x / n).collect(),
        observation: observation.into_iter().map(|x| x / n).collect(),
    })
}

/// Checks that every row's predictive is the pseudo-count estimate
/// (counts + alpha) / (total + alpha * domain), the minimizer of the
/// empirical log-loss under the smoothing prior.
pub fn minimizer_check(learner: &LearnerTable) -> bool {
    let check = |table: &CountTable, predictive: &dyn Fn(&HistoryKey) -> Distribution| {
        table.rows().all(|(key, counts)| {
            let p = predictive(key);
            let total = counts.iter().sum::<u64>() as f64 + learner.alpha * table.domain() as f64;
            let sum: f64 = p.probs().iter().sum();
            (sum - 1.0).abs() < 1e-12
                && counts
                    .iter()
                    .zip(p.probs())
                    .all(|(&c, &pi)| (pi * total - (c as f64 + learner.alpha)).abs() <= 1e-12 * total.max(1.0))
        })
    };
    check(&learner.actions, &|k| learner.action_predictive(k))
        && check(&learner.observations, &|k| learner.observation_predictive(k))
}
