//! Brute-force reference computations.
//!
//! Everything here works on the full outcome table: enumerate every joint
//! assignment, weight it by the literal product of (possibly replaced)
//! mechanism entries, filter on the evidence, sum. None of it calls into the
//! engine, the recursive filter or the trainer, so agreement between them
//! and this module is a real cross-check.

use std::collections::BTreeMap;

use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::meta_trainer::{HistoryKey, LearnerTable};
use crate::process::{CausalProcess, EvidenceItem, Mode};
use crate::rounds::{unroll_rounds, RoundStructure};

/// Oracle enumeration cap.
pub const ORACLE_CAP: u128 = 1 << 20;

/// Weighted list of full assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTable {
    pub entries: Vec<(Vec<usize>, f64)>,
}

impl OutcomeTable {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }
}

fn odometer(radices: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let count: usize = radices.iter().product();
    (0..count).map(move |mut index| {
        let mut digits = vec![0; radices.len()];
        for k in (0..radices.len()).rev() {
            digits[k] = index % radices[k];
            index /= radices[k];
        }
        digits
    })
}

/// Entry of the raw table of `var` selected by `assignment`.
fn table_entry(process: &CausalProcess, var: usize, assignment: &[usize]) -> f64 {
    let mech = &process.mechanisms[var];
    let mut index = 0;
    for &p in &mech.parents {
        index = index * process.variables[p].labels.len() + assignment[p];
    }
    mech.rows[index].probs()[assignment[var]]
}

fn check_cap(required: u128) -> Result<()> {
    if required > ORACLE_CAP {
        return Err(Error::Capacity {
            required,
            cap: ORACLE_CAP,
        });
    }
    Ok(())
}

/// Full joint of the process after forcing `interventions` (variable, value):
/// forced variables contribute an indicator instead of their table entry.
pub fn enumerate_process(process: &CausalProcess, interventions: &[(usize, usize)]) -> Result<OutcomeTable> {
    let radices: Vec<usize> = process.variables.iter().map(|v| v.labels.len()).collect();
    check_cap(radices.iter().map(|&r| r as u128).product())?;
    let entries = odometer(&radices)
        .map(|assignment| {
            let mut p = 1.0;
            for var in 0..process.variables.len() {
                match interventions.iter().find(|(v, _)| *v == var) {
                    Some(&(_, forced)) => {
                        if assignment[var] != forced {
                            p = 0.0;
                        }
                    }
                    None => p *= table_entry(process, var, &assignment),
                }
            }
            (assignment, p)
        })
        .collect();
    Ok(OutcomeTable { entries })
}

fn validate(process: &CausalProcess, targets: &[usize], evidence: &[EvidenceItem]) -> Result<()> {
    for &t in targets {
        if t >= process.variables.len() {
            return Err(Error::UnknownVariable(format!("#{t}")));
        }
    }
    for (i, e) in evidence.iter().enumerate() {
        let var = process
            .variables
            .get(e.variable)
            .ok_or_else(|| Error::UnknownVariable(format!("#{}", e.variable)))?;
        if e.value >= var.labels.len() {
            return Err(Error::ValueOutOfRange {
                variable: var.name.clone(),
                value: e.value,
                domain_size: var.labels.len(),
            });
        }
        if evidence[..i].iter().any(|f| f.variable == e.variable) {
            return Err(Error::DuplicateEvidence(var.name.clone()));
        }
        if targets.contains(&e.variable) {
            return Err(Error::TargetInEvidence(var.name.clone()));
        }
    }
    Ok(())
}

/// Joint distribution of `targets` (mixed radix, first target most
/// significant) given mixed evidence.
pub fn oracle_joint_query(
    process: &CausalProcess,
    targets: &[usize],
    evidence: &[EvidenceItem],
) -> Result<Distribution> {
    validate(process, targets, evidence)?;
    let forced: Vec<(usize, usize)> = evidence
        .iter()
        .filter(|e| e.mode == Mode::Intervene)
        .map(|e| (e.variable, e.value))
        .collect();
    let table = enumerate_process(process, &forced)?;
    let size: usize = targets.iter().map(|&t| process.variables[t].labels.len()).product();
    let mut weights = vec![0.0; size];
    for (assignment, p) in &table.entries {
        if evidence.iter().all(|e| assignment[e.variable] == e.value) {
            let mut index = 0;
            for &t in targets {
                index = index * process.variables[t].labels.len() + assignment[t];
            }
            weights[index] += p;
        }
    }
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::ZeroProbabilityEvidence);
    }
    Distribution::from_weights(weights)
}

pub fn oracle_query(process: &CausalProcess, target: usize, evidence: &[EvidenceItem]) -> Result<Distribution> {
    oracle_joint_query(process, &[target], evidence)
}

/// Exact braided law over (theta block, a_1, abar_1, o_1, ..., a_T, abar_T, o_T)
/// for a frozen learner `agent`. Only single-round-template processes are
/// supported.
#[derive(Debug, Clone)]
pub struct BraidedTable {
    pub latent_count: usize,
    pub horizon: usize,
    pub table: OutcomeTable,
}

impl BraidedTable {
    fn agent_action(&self, entry: &[usize], round: usize) -> usize {
        entry[self.latent_count + 3 * round]
    }
    fn expert_action(&self, entry: &[usize], round: usize) -> usize {
        entry[self.latent_count + 3 * round + 1]
    }
    fn observation(&self, entry: &[usize], round: usize) -> usize {
        entry[self.latent_count + 3 * round + 2]
    }

    /// Agent-visible prefix (a_1, o_1, ..., a_r, o_r) of an entry; with
    /// `with_action` the agent's action of round `r + 1` is appended.
    fn prefix(&self, entry: &[usize], rounds: usize, with_action: bool) -> Vec<usize> {
        let mut key = Vec::with_capacity(2 * rounds + 1);
        for r in 0..rounds {
            key.push(self.agent_action(entry, r));
            key.push(self.observation(entry, r));
        }
        if with_action {
            key.push(self.agent_action(entry, rounds));
        }
        key
    }

    /// For round `t` (1-based), the weight of each agent history
    /// (a_<t, o_<t) split by the expert's action abar_t.
    pub fn expert_action_weights(&self, t: usize) -> BTreeMap<Vec<usize>, Vec<f64>> {
        let mut out: BTreeMap<Vec<usize>, Vec<f64>> = BTreeMap::new();
        for (entry, p) in &self.table.entries {
            let key = self.prefix(entry, t - 1, false);
            let row = out.entry(key).or_default();
            let abar = self.expert_action(entry, t - 1);
            if row.len() <= abar {
                row.resize(abar + 1, 0.0);
            }
            row[abar] += p;
        }
        out
    }

    /// For round `t`, the weight of each (a_<=t, o_<t) split by o_t.
    pub fn observation_weights(&self, t: usize) -> BTreeMap<Vec<usize>, Vec<f64>> {
        let mut out: BTreeMap<Vec<usize>, Vec<f64>> = BTreeMap::new();
        for (entry, p) in &self.table.entries {
            let key = self.prefix(entry, t - 1, true);
            let row = out.entry(key).or_default();
            let o = self.observation(entry, t - 1);
            if row.len() <= o {
                row.resize(o + 1, 0.0);
            }
            row[o] += p;
        }
        out
    }
}

/// Enumerates the braided distribution of training episodes in which the
/// agent acts from the frozen predictive of `agent`.
pub fn oracle_braided(q: &CausalProcess, agent: &LearnerTable, horizon: usize) -> Result<BraidedTable> {
    let q = unroll_rounds(q, horizon)?;
    let rs = RoundStructure::detect(&q)?;
    let lc = rs.latent_count;
    let mut radices: Vec<usize> = (0..lc).map(|v| q.variables[v].labels.len()).collect();
    for &(a, o) in &rs.rounds {
        let na = q.variables[a].labels.len();
        radices.extend([na, na, q.variables[o].labels.len()]);
    }
    check_cap(radices.iter().map(|&r| r as u128).product())?;

    let mut entries = Vec::new();
    for entry in odometer(&radices) {
        let mut p = 1.0;
        // Process assignment seen by Q: latents plus the agent's actions and
        // the observations. The expert's action never enters it.
        let mut world = vec![0usize; q.variables.len()];
        world[..lc].copy_from_slice(&entry[..lc]);
        for v in 0..lc {
            p *= table_entry(&q, v, &world);
        }
        let mut key = HistoryKey::default();
        for (r, &(a, o)) in rs.rounds.iter().enumerate() {
            let (agent_a, expert_a, obs) = (entry[lc + 3 * r], entry[lc + 3 * r + 1], entry[lc + 3 * r + 2]);
            p *= agent.action_predictive(&key).probs()[agent_a];
            world[a] = expert_a;
            p *= table_entry(&q, a, &world);
            world[a] = agent_a;
            world[o] = obs;
            p *= table_entry(&q, o, &world);
            key.push(EvidenceItem::intervene(a, agent_a));
            key.push(EvidenceItem::condition(o, obs));
        }
        entries.push((entry, p));
    }
    Ok(BraidedTable {
        latent_count: lc,
        horizon,
        table: OutcomeTable { entries },
    })
}

/// Minimizes the expected log-loss -sum_i w_i log p_i over the simplex by
/// gradient descent on softmax logits. Symbols with zero weight sit on the
/// boundary of the minimizer and are pinned to zero. Returns None for
/// all-zero weights.
pub fn minimize_cross_entropy(weights: &[f64]) -> Option<Distribution> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let support: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
    let w: Vec<f64> = support.iter().map(|&i| weights[i]).collect();
    let mut logits = vec![0.0f64; w.len()];
    let softmax = |z: &[f64]| {
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    // The gradient is Lipschitz with constant at most `total`.
    let step = 1.0 / total;
    for _ in 0..100_000 {
        let p = softmax(&logits);
        let grad: Vec<f64> = p.iter().zip(&w).map(|(pi, wi)| total * pi - wi).collect();
        if grad.iter().map(|g| g.abs()).fold(0.0, f64::max) < 1e-15 * total {
            break;
        }
        for (z, g) in logits.iter_mut().zip(&grad) {
            *z -= step * g;
        }
    }
    let mut probs = vec![0.0; weights.len()];
    for (&i, p) in support.iter().zip(softmax(&logits)) {
        probs[i] = p;
    }
    Distribution::new(probs).ok()
}

/// Named reference value produced by [`mint_constants`].
#[derive(Debug, Clone, PartialEq)]
pub struct MintedConstant {
    pub name: &'static str,
    pub value: f64,
}

/// Reference values for the bandit delusion gap, the language toy and the
/// goal process, computed by enumeration alone.
///
/// Bandit symbols are 0-based: arm symbol 0 is arm "1", reward symbol 1 is a
/// win. The language-toy instance is the (x1, x2, x3) maximizing the gap
/// between conditioning on x2 and intervening on it, first in
/// lexicographic order on ties.
pub fn mint_constants() -> Result<Vec<MintedConstant>> {
    use crate::library::{build_bandit, build_goal_process, build_language_toy};
    let mut out = Vec::new();
    let mut put = |name, value| out.push(MintedConstant { name, value });

    let bandit = build_bandit(2)?;
    let (a1, o1, a2) = (1, 2, 3);
    let cond = |o| EvidenceItem::condition(o1, o);
    let int_repeat = |o| oracle_query(&bandit, a2, &[EvidenceItem::intervene(a1, 0), cond(o)]).map(|d| d.prob(0));
    let cond_repeat = |o| oracle_query(&bandit, a2, &[EvidenceItem::condition(a1, 0), cond(o)]).map(|d| d.prob(0));
    let p_win = oracle_query(&bandit, o1, &[EvidenceItem::intervene(a1, 0)])?.prob(1);
    let (i1, i0, c1, c0) = (int_repeat(1)?, int_repeat(0)?, cond_repeat(1)?, cond_repeat(0)?);
    put("bandit.p_o1_win", p_win);
    put("bandit.int_repeat_after_win", i1);
    put("bandit.int_repeat_after_loss", i0);
    put("bandit.cond_repeat_after_win", c1);
    put("bandit.cond_repeat_after_loss", c0);
    // The first action is uniform under either policy, so the horizon-2
    // repeat rate mixes the two branches with P(win).
    put("bandit.int_repeat_rate_h2", p_win * i1 + (1.0 - p_win) * i0);
    put("bandit.cond_repeat_rate_h2", p_win * c1 + (1.0 - p_win) * c0);

    let toy = build_language_toy();
    let mut best = (0, 0, 0, f64::NEG_INFINITY);
    for x1 in 0..3 {
        for x2 in 0..3 {
            for x3 in 0..3 {
                let c = |m| {
                    vec![
                        EvidenceItem::condition(1, x1),
                        EvidenceItem {
                            variable: 2,
                            value: x2,
                            mode: m,
                        },
                        EvidenceItem::condition(3, x3),
                    ]
                };
                let seen = oracle_query(&toy, 4, &c(Mode::Condition))?;
                let done = oracle_query(&toy, 4, &c(Mode::Intervene))?;
                let tv = seen.total_variation(&done);
                if tv > best.3 {
                    best = (x1, x2, x3, tv);
                }
            }
        }
    }
    put("language.x1", best.0 as f64);
    put("language.x2", best.1 as f64);
    put("language.x3", best.2 as f64);
    put("language.tv", best.3);

    let goal = build_goal_process();
    put(
        "goal.theta1_given_g1",
        oracle_query(&goal, 0, &[EvidenceItem::condition(3, 1)])?.prob(1),
    );
    put(
        "goal.theta1_given_do_g1",
        oracle_query(&goal, 0, &[EvidenceItem::intervene(3, 1)])?.prob(1),
    );
    Ok(out)
}

/// One `name value` line per constant, values in round-trip exponent form.
pub fn format_constants(constants: &[MintedConstant]) -> String {
    constants
        .iter()
        .map(|c| format!("{} {:.17e}\n", c.name, c.value))
        .collect()
}

/// Inverse of [`format_constants`].
pub fn parse_constants(text: &str) -> Result<BTreeMap<String, f64>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let (name, value) = l
                .split_once(' ')
                .ok_or_else(|| Error::InvalidArgument(format!("bad constant line {l:?}")))?;
            let value = value
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad constant value {value:?}")))?;
            Ok((name.to_string(), value))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::{build_bandit, build_prize_or_frog};
    use crate::process::{act, cond};

    #[test]
    fn prize_or_frog_values() {
        let p = build_prize_or_frog();
        assert_eq!(oracle_query(&p, 0, &[cond(1, 1)]).unwrap().probs(), &[0.0, 1.0]);
        assert_eq!(oracle_query(&p, 0, &[act(1, 1)]).unwrap().probs(), &[0.5, 0.5]);
        assert_eq!(oracle_query(&p, 2, &[cond(1, 1)]).unwrap().probs(), &[0.0, 1.0]);
        assert_eq!(oracle_query(&p, 2, &[act(1, 1)]).unwrap().probs(), &[0.5, 0.5]);
        assert_eq!(
            oracle_query(&p, 0, &[cond(1, 1), cond(2, 0)]),
            Err(Error::ZeroProbabilityEvidence)
        );
    }

    #[test]
    fn outcome_tables_normalize() {
        let t = enumerate_process(&build_bandit(2).unwrap(), &[]).unwrap();
        assert!((t.total() - 1.0).abs() < 1e-12);
        let t = enumerate_process(&build_bandit(2).unwrap(), &[(1, 3)]).unwrap();
        assert!((t.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn braided_table_normalizes() {
        let learner = LearnerTable::new(5, 2, 1.0);
        let b = oracle_braided(&build_bandit(1).unwrap(), &learner, 1).unwrap();
        assert!((b.table.total() - 1.0).abs() < 1e-12);
        assert_eq!(b.table.entries.len(), 5 * 5 * 5 * 2);
    }

    #[test]
    fn minimizer_recovers_normalized_weights() {
        let d = minimize_cross_entropy(&[0.3, 0.1, 0.0, 0.6]).unwrap();
        assert!((d.prob(0) - 0.3).abs() < 1e-12);
        assert!((d.prob(1) - 0.1).abs() < 1e-12);
        assert_eq!(d.prob(2), 0.0);
        assert!(minimize_cross_entropy(&[0.0, 0.0]).is_none());
    }

    #[test]
    fn minted_bandit_values() {
        let m = parse_constants(&format_constants(&mint_constants().unwrap())).unwrap();
        assert!((m["bandit.int_repeat_after_win"] - 2.2 / 7.0).abs() < 1e-12);
        assert!((m["bandit.cond_repeat_after_win"] - 5.6 / 11.0).abs() < 1e-12);
        assert!((m["bandit.p_o1_win"] - 0.35).abs() < 1e-12);
        assert!((m["goal.theta1_given_do_g1"] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cap_is_enforced() {
        let big = crate::rounds::unroll_rounds(&build_bandit(1).unwrap(), 7).unwrap();
        assert!(matches!(enumerate_process(&big, &[]), Err(Error::Capacity { .. })));
    }
}
