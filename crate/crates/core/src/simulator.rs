//! Seeded interaction loops between a policy and an environment with a
//! hidden task parameter, batch experiments, and the offline confounding
//! demonstration.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::meta_trainer::{HistoryKey, LearnerTable};
use crate::policies::{action_distribution_conditional, action_distribution_interventional, PosteriorFilter};
use crate::process::{CausalProcess, EvidenceItem, Mode};
use crate::rng::{split_seed, stream, StreamRng};
use crate::rounds::{unroll_rounds, RoundStructure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Conditional,
    Interventional,
    Learned,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Conditional => "conditional",
            PolicyKind::Interventional => "interventional",
            PolicyKind::Learned => "learned",
        }
    }

    /// How the policy's own actions enter its history.
    pub fn action_mode(self) -> Mode {
        match self {
            PolicyKind::Conditional => Mode::Condition,
            _ => Mode::Intervene,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    /// Acts from P(a_t | a_<t, o_<t): its own actions count as evidence.
    Conditional,
    /// Acts from P(a_t | do(a_<t), o_<t).
    Interventional,
    /// Acts from a trained action table.
    Learned(&'a LearnerTable),
}

impl Policy<'_> {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::Conditional => PolicyKind::Conditional,
            Policy::Interventional => PolicyKind::Interventional,
            Policy::Learned(_) => PolicyKind::Learned,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub action: usize,
    pub observation: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub theta: Vec<usize>,
    pub policy: PolicyKind,
    pub steps: Vec<Step>,
    /// Set when the conditional policy met a history of probability zero;
    /// `steps` then holds the rounds played before it.
    pub aborted: bool,
}

/// Process unrolled to a horizon with the per-(theta, action) best arm
/// bookkeeping needed by the summaries.
#[derive(Debug, Clone)]
pub struct Environment {
    template: CausalProcess,
    process: Option<CausalProcess>,
    rounds: Option<RoundStructure>,
    latent_count: usize,
    rewards: Vec<f64>,
}

impl Environment {
    pub fn new(q: &CausalProcess, horizon: usize) -> Result<Self> {
        let template_rounds = RoundStructure::detect(q)?;
        let (process, rounds) = if horizon == 0 {
            (None, None)
        } else {
            let process = unroll_rounds(q, horizon)?;
            let rounds = RoundStructure::detect(&process)?;
            (Some(process), Some(rounds))
        };
        let o = template_rounds.observation(0);
        let rewards = q.variables[o]
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| l.parse::<f64>().unwrap_or(i as f64))
            .collect();
        Ok(Self {
            template: q.clone(),
            process,
            rounds,
            latent_count: template_rounds.latent_count,
            rewards,
        })
    }

    pub fn horizon(&self) -> usize {
        self.rounds.as_ref().map_or(0, RoundStructure::horizon)
    }

    pub fn process(&self) -> Option<&CausalProcess> {
        self.process.as_ref()
    }

    /// Reward attached to an observation symbol: its label read as a number,
    /// or the symbol index when the label is not numeric.
    pub fn reward(&self, observation: usize) -> f64 {
        self.rewards[observation]
    }

    /// Action maximizing the expected reward given the latent block; ties go
    /// to the lowest symbol.
    pub fn best_action(&self, theta: &[usize]) -> usize {
        let rs = RoundStructure::detect(&self.template).expect("checked on construction");
        let (a, o) = (rs.action(0), rs.observation(0));
        let mut world = vec![0; self.template.len()];
        world[..theta.len()].copy_from_slice(theta);
        let mut best = (0, f64::NEG_INFINITY);
        for action in 0..self.template.domain_size(a) {
            world[a] = action;
            let row = self.template.mechanisms[o].row(&self.template, &world);
            let value: f64 = row.probs().iter().zip(&self.rewards).map(|(p, r)| p * r).sum();
            if value > best.1 + 1e-12 {
                best = (action, value);
            }
        }
        best.0
    }

    fn sample_latents(&self, rng: &mut StreamRng) -> Vec<usize> {
        let mut world = vec![0; self.template.len()];
        for v in 0..self.latent_count {
            world[v] = self.template.mechanisms[v].row(&self.template, &world).sample(rng);
        }
        world.truncate(self.latent_count);
        world
    }

    pub fn run_episode(&self, policy: Policy, seed: u64) -> EpisodeRecord {
        let mut world_rng = stream(seed, 0);
        let mut agent_rng = stream(seed, 1);
        let theta = self.sample_latents(&mut world_rng);
        let mut record = EpisodeRecord {
            seed,
            theta,
            policy: policy.kind(),
            steps: Vec::with_capacity(self.horizon()),
            aborted: false,
        };
        let (Some(process), Some(rounds)) = (&self.process, &self.rounds) else {
            return record;
        };
        let mut world = vec![0; process.len()];
        world[..self.latent_count].copy_from_slice(&record.theta);
        let mode = policy.kind().action_mode();
        let mut filter = PosteriorFilter::new(process);
        let mut key = HistoryKey::default();
        for &(a, o) in &rounds.rounds {
            let prediction = match policy {
                Policy::Learned(table) => Ok(table.action_predictive(&key)),
                _ => filter.predictive(a),
            };
            let prediction = match prediction {
                Ok(p) => p,
                Err(_) => {
                    record.aborted = true;
                    return record;
                }
            };
            let action = prediction.sample(&mut agent_rng);
            world[a] = action;
            let observation = process.mechanisms[o].row(process, &world).sample(&mut world_rng);
            world[o] = observation;
            let item = EvidenceItem {
                variable: a,
                value: action,
                mode,
            };
            if !matches!(policy, Policy::Learned(_))
                && (filter.absorb(item).is_err() || filter.absorb(EvidenceItem::condition(o, observation)).is_err())
            {
                record.steps.push(Step {
                    action,
                    observation,
                    reward: self.reward(observation),
                });
                record.aborted = true;
                return record;
            }
            key.push(EvidenceItem::intervene(a, action));
            key.push(EvidenceItem::condition(o, observation));
            record.steps.push(Step {
                action,
                observation,
                reward: self.reward(observation),
            });
        }
        record
    }
}

pub fn run_episode(q: &CausalProcess, policy: Policy, horizon: usize, seed: u64) -> Result<EpisodeRecord> {
    Ok(Environment::new(q, horizon)?.run_episode(policy, seed))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Episodes `0..count`, episode `i` seeded by `split_seed(root_seed, i)`.
/// The result is in episode order whatever the worker count.
pub fn run_episodes(
    q: &CausalProcess,
    policy: Policy,
    horizon: usize,
    count: usize,
    root_seed: u64,
    workers: usize,
) -> Result<Vec<EpisodeRecord>> {
    let env = Environment::new(q, horizon)?;
    let run = || {
        (0..count as u64)
            .into_par_iter()
            .map(|i| env.run_episode(policy, split_seed(root_seed, i)))
            .collect()
    };
    if workers <= 1 {
        Ok((0..count as u64)
            .map(|i| env.run_episode(policy, split_seed(root_seed, i)))
            .collect())
    } else {
        Ok(pool(workers)?.install(run))
    }
}

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        if samples.is_empty() {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = samples.iter().sum::<f64>() / n;
        let se = if samples.len() < 2 {
            0.0
        } else {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        };
        Self { mean, se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub policy: PolicyKind,
    pub horizon: usize,
    pub episodes: usize,
    pub aborted: usize,
    /// Per-episode mean reward per step, averaged over completed episodes.
    pub mean_reward: Estimate,
    /// Fraction of completed episodes whose last action is the best arm.
    pub best_arm_rate: Estimate,
    /// Per-episode fraction of steps t > 1 with a_t = a_{t-1}.
    pub repeat_rate: Estimate,
}

pub fn summarize(env: &Environment, policy: PolicyKind, records: &[EpisodeRecord]) -> ExperimentSummary {
    let done: Vec<&EpisodeRecord> = records.iter().filter(|r| !r.aborted && !r.steps.is_empty()).collect();
    let rewards: Vec<f64> = done
        .iter()
        .map(|r| r.steps.iter().map(|s| s.reward).sum::<f64>() / r.steps.len() as f64)
        .collect();
    let best: Vec<f64> = done
        .iter()
        .map(|r| f64::from(u8::from(r.steps.last().unwrap().action == env.best_action(&r.theta))))
        .collect();
    let repeats: Vec<f64> = done
        .iter()
        .filter(|r| r.steps.len() > 1)
        .map(|r| {
            let n = r.steps.windows(2).filter(|w| w[0].action == w[1].action).count();
            n as f64 / (r.steps.len() - 1) as f64
        })
        .collect();
    ExperimentSummary {
        policy,
        horizon: env.horizon(),
        episodes: records.len(),
        aborted: records.iter().filter(|r| r.aborted).count(),
        mean_reward: Estimate::from_samples(&rewards),
        best_arm_rate: Estimate::from_samples(&best),
        repeat_rate: Estimate::from_samples(&repeats),
    }
}

/// Runs `count` episodes and summarizes them, returning the records too.
pub fn run_experiment(
    q: &CausalProcess,
    policy: Policy,
    horizon: usize,
    count: usize,
    root_seed: u64,
    workers: usize,
) -> Result<(ExperimentSummary, Vec<EpisodeRecord>)> {
    if count == 0 {
        return Err(Error::InvalidArgument("episode count must be at least 1".into()));
    }
    let env = Environment::new(q, horizon)?;
    let records = run_episodes(q, policy, horizon, count, root_seed, workers)?;
    Ok((summarize(&env, policy.kind(), &records), records))
}

#[derive(Serialize)]
struct JsonStep {
    t: usize,
    action: usize,
    action_mode: &'static str,
    observation: usize,
    reward: f64,
}

#[derive(Serialize)]
struct JsonEpisode<'a> {
    seed: u64,
    policy: &'static str,
    theta: &'a [usize],
    aborted: bool,
    steps: Vec<JsonStep>,
}

/// One JSON object per episode and line:
/// `{"seed","policy","theta","aborted","steps":[{"t","action","action_mode","observation","reward"}]}`.
pub fn write_jsonl<W: Write>(mut out: W, records: &[EpisodeRecord]) -> io::Result<()> {
    for r in records {
        let mode = match r.policy.action_mode() {
            Mode::Condition => "cond",
            Mode::Intervene => "do",
        };
        let line = JsonEpisode {
            seed: r.seed,
            policy: r.policy.as_str(),
            theta: &r.theta,
            aborted: r.aborted,
            steps: r
                .steps
                .iter()
                .enumerate()
                .map(|(i, s)| JsonStep {
                    t: i + 1,
                    action: s.action,
                    action_mode: mode,
                    observation: s.observation,
                    reward: s.reward,
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub const SUMMARY_CSV_HEADER: &str = "policy,horizon,episodes,aborted,mean_reward,mean_reward_se,best_arm_rate,best_arm_rate_se,repeat_rate,repeat_rate_se";

pub fn write_summary_csv<W: Write>(mut out: W, summaries: &[ExperimentSummary]) -> io::Result<()> {
    writeln!(out, "{SUMMARY_CSV_HEADER}")?;
    for s in summaries {
        writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            s.policy.as_str(),
            s.horizon,
            s.episodes,
            s.aborted,
            s.mean_reward.mean,
            s.mean_reward.se,
            s.best_arm_rate.mean,
            s.best_arm_rate.se,
            s.repeat_rate.mean,
            s.repeat_rate.se
        )?;
    }
    Ok(())
}

/// Total variation between an empirical distribution from `n` samples and a
/// fixed target, with its delta-method standard error.
pub fn tv_with_se(empirical: &Distribution, target: &Distribution, n: u64) -> (f64, f64) {
    let tv = empirical.total_variation(target);
    if n == 0 {
        return (tv, f64::NAN);
    }
    let s: Vec<f64> = empirical
        .probs()
        .iter()
        .zip(target.probs())
        .map(|(p, q)| 0.5 * (p - q).signum())
        .collect();
    let mean: f64 = s.iter().zip(empirical.probs()).map(|(s, p)| s * p).sum();
    let second: f64 = s.iter().zip(empirical.probs()).map(|(s, p)| s * s * p).sum();
    (tv, ((second - mean * mean).max(0.0) / n as f64).sqrt())
}

/// One history key of the offline comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineRow {
    pub key: HistoryKey,
    pub samples: u64,
    /// Smoothed next-action estimate fitted on the demonstrations.
    pub fitted: Distribution,
    /// P(a_t | a_<t, o_<t).
    pub conditional: Distribution,
    /// P(a_t | do(a_<t), o_<t).
    pub interventional: Distribution,
    pub tv_conditional: f64,
    pub tv_interventional: f64,
    /// Standard errors of the two distances, from the unsmoothed counts.
    pub tv_conditional_se: f64,
    pub tv_interventional_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineReport {
    pub trajectories: usize,
    pub horizon: usize,
    pub rows: Vec<OfflineRow>,
    /// Learner table holding the fit, keyed like a trained table.
    pub table: LearnerTable,
    /// The fit deployed as a policy.
    pub deployed: ExperimentSummary,
}

impl OfflineReport {
    pub fn row(&self, key: &HistoryKey) -> Option<&OfflineRow> {
        self.rows.iter().find(|r| &r.key == key)
    }
}

/// Fits a next-action model on expert demonstrations, where the expert acts
/// with knowledge of the task parameter, compares it with the two exact
/// targets for every observed history, and deploys it.
pub fn offline_demo(
    q: &CausalProcess,
    horizon: usize,
    trajectories: usize,
    root_seed: u64,
    alpha: f64,
) -> Result<OfflineReport> {
    if trajectories == 0 {
        return Err(Error::InvalidArgument("dataset size must be at least 1".into()));
    }
    let env = Environment::new(q, horizon)?;
    let (process, rounds) = match (env.process(), env.rounds.as_ref()) {
        (Some(p), Some(r)) => (p, r),
        _ => return Err(Error::InvalidArgument("horizon must be at least 1".into())),
    };
    let mut table = LearnerTable::for_process(process, alpha)?;
    for i in 0..trajectories as u64 {
        let mut rng = stream(split_seed(root_seed, i), 0);
        let mut world = vec![0; process.len()];
        let mut key = HistoryKey::default();
        for v in 0..process.len() {
            world[v] = process.mechanisms[v].row(process, &world).sample(&mut rng);
        }
        for &(a, o) in &rounds.rounds {
            table.actions.record(&key, world[a]);
            key.push(EvidenceItem::intervene(a, world[a]));
            table.observations.record(&key, world[o]);
            key.push(EvidenceItem::condition(o, world[o]));
        }
    }
    let mut rows = Vec::new();
    for (key, counts) in table.actions.rows() {
        let samples: u64 = counts.iter().sum();
        let raw = Distribution::from_weights(counts.iter().map(|&c| c as f64).collect())?;
        let fitted = table.action_predictive(key);
        let conditional = action_distribution_conditional(process, key)?;
        let interventional = action_distribution_interventional(process, key)?;
        let (tv_c, se_c) = tv_with_se(&raw, &conditional, samples);
        let (tv_i, se_i) = tv_with_se(&raw, &interventional, samples);
        rows.push(OfflineRow {
            key: key.clone(),
            samples,
            tv_conditional: fitted.total_variation(&conditional),
            tv_interventional: fitted.total_variation(&interventional),
            tv_conditional_se: if tv_c > 0.0 { se_c } else { 0.0 },
            tv_interventional_se: if tv_i > 0.0 { se_i } else { 0.0 },
            fitted,
            conditional,
            interventional,
        });
    }
    let deployed_records: Vec<EpisodeRecord> = (0..trajectories.min(10_000) as u64)
        .map(|i| env.run_episode(Policy::Learned(&table), split_seed(root_seed ^ 0x000f_f11e, i)))
        .collect();
    let deployed = summarize(&env, PolicyKind::Learned, &deployed_records);
    Ok(OfflineReport {
        trajectories,
        horizon,
        rows,
        table,
        deployed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::{build_bandit, build_prize_or_frog};
    use crate::process::{act, cond};

    #[test]
    fn horizon_zero_is_an_empty_record() {
        let q = build_bandit(1).unwrap();
        let r = run_episode(&q, Policy::Interventional, 0, 5).unwrap();
        assert!(r.steps.is_empty());
        assert_eq!(r.theta.len(), 1);
        assert!(r.theta[0] < 5);
    }

    #[test]
    fn episodes_are_deterministic() {
        let q = build_bandit(1).unwrap();
        for policy in [Policy::Conditional, Policy::Interventional] {
            let a = run_episode(&q, policy, 20, 11).unwrap();
            let b = run_episode(&q, policy, 20, 11).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.steps.len(), 20);
        }
    }

    #[test]
    fn worker_count_does_not_change_records() {
        let q = build_bandit(1).unwrap();
        let one = run_episodes(&q, Policy::Interventional, 5, 200, 3, 1).unwrap();
        let four = run_episodes(&q, Policy::Interventional, 5, 200, 3, 4).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn best_arm_is_theta_for_the_bandit() {
        let env = Environment::new(&build_bandit(1).unwrap(), 2).unwrap();
        for theta in 0..5 {
            assert_eq!(env.best_action(&[theta]), theta);
        }
        assert_eq!(env.reward(1), 1.0);
    }

    #[test]
    fn single_episode_summary_matches_it() {
        let q = build_bandit(1).unwrap();
        let (summary, records) = run_experiment(&q, Policy::Conditional, 4, 1, 8, 1).unwrap();
        let r = &records[0];
        let mean = r.steps.iter().map(|s| s.reward).sum::<f64>() / 4.0;
        assert_eq!(summary.mean_reward.mean, mean);
        assert_eq!(summary.mean_reward.se, 0.0);
        assert_eq!(summary.episodes, 1);
    }

    #[test]
    fn deluded_zero_probability_history_aborts() {
        // The prize-or-frog expert always opens the prize box, so the deluded
        // agent believes the prize is wherever it looked first. A frog then
        // has probability zero and the episode aborts.
        let q = build_prize_or_frog();
        let (summary, records) = run_experiment(&q, Policy::Conditional, 3, 50, 1, 1).unwrap();
        assert!(summary.aborted > 0 && summary.aborted < 50);
        for r in &records {
            assert_eq!(r.aborted, r.steps[0].action != r.theta[0]);
            assert_eq!(r.steps.len(), if r.aborted { 1 } else { 3 });
        }
        let (summary, _) = run_experiment(&q, Policy::Interventional, 3, 50, 1, 1).unwrap();
        assert_eq!(summary.aborted, 0);
    }

    #[test]
    fn jsonl_layout() {
        let q = build_bandit(1).unwrap();
        let r = run_episode(&q, Policy::Interventional, 2, 1).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &[r]).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["policy"], "interventional");
        assert_eq!(v["steps"][1]["t"], 2);
        assert_eq!(v["steps"][0]["action_mode"], "do");
    }

    #[test]
    fn tv_standard_error_is_zero_for_point_masses() {
        let p = Distribution::point_mass(3, 1);
        let (tv, se) = tv_with_se(&p, &Distribution::uniform(3), 10);
        assert!((tv - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn offline_single_trajectory_is_mostly_prior() {
        let q = build_bandit(1).unwrap();
        let report = offline_demo(&q, 2, 1, 4, 1.0).unwrap();
        assert_eq!(report.rows.len(), 2);
        let unseen = HistoryKey::new(vec![act(1, 4), cond(2, 1)]);
        if report.row(&unseen).is_none() {
            assert_eq!(report.table.action_predictive(&unseen), Distribution::uniform(5));
        }
    }
}
