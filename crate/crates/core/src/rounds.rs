//! Bandit-style round structure: a block of latent variables followed by
//! repeated (action, observation) rounds whose mechanisms look only at the
//! latent block and the current round's action.

use crate::error::{Error, Result};
use crate::process::{CausalProcess, Mechanism, Role, VariableSpec};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundStructure {
    /// Ids `0..latent_count` are the latent block.
    pub latent_count: usize,
    /// (action id, observation id) per round.
    pub rounds: Vec<(usize, usize)>,
}

impl RoundStructure {
    pub fn detect(process: &CausalProcess) -> Result<Self> {
        let vars = &process.variables;
        let latent_count = vars.iter().take_while(|v| v.role == Role::Latent).count();
        if latent_count == 0 {
            return Err(Error::NotRoundStructured("no leading latent variable".into()));
        }
        let rest = &vars[latent_count..];
        if rest.is_empty() || !rest.len().is_multiple_of(2) {
            return Err(Error::NotRoundStructured(
                "expected (action, observation) pairs after the latent block".into(),
            ));
        }
        let mut rounds = Vec::new();
        for pair in rest.chunks(2) {
            if pair[0].role != Role::Action || pair[1].role != Role::Observation {
                return Err(Error::NotRoundStructured(format!(
                    "{} / {} is not an (action, observation) pair",
                    pair[0].name, pair[1].name
                )));
            }
            let (a, o) = (pair[0].id, pair[1].id);
            if process.mechanisms[a].parents.iter().any(|&p| p >= latent_count) {
                return Err(Error::NotRoundStructured(format!(
                    "action {} depends on the interaction history",
                    pair[0].name
                )));
            }
            if process.mechanisms[o]
                .parents
                .iter()
                .any(|&p| p >= latent_count && p != a)
            {
                return Err(Error::NotRoundStructured(format!(
                    "observation {} depends on earlier rounds",
                    pair[1].name
                )));
            }
            rounds.push((a, o));
        }
        Ok(Self { latent_count, rounds })
    }

    pub fn horizon(&self) -> usize {
        self.rounds.len()
    }

    pub fn action(&self, round: usize) -> usize {
        self.rounds[round].0
    }

    pub fn observation(&self, round: usize) -> usize {
        self.rounds[round].1
    }
}

fn stem(name: &str) -> &str {
    name.trim_end_matches(|c: char| c.is_ascii_digit())
}

fn round_mechanism(template: &Mechanism, template_action: usize, variable: usize, action: usize) -> Mechanism {
    Mechanism {
        variable,
        parents: template
            .parents
            .iter()
            .map(|&p| if p == template_action { action } else { p })
            .collect(),
        rows: template.rows.clone(),
    }
}

/// Rebuilds `process` with `horizon` copies of its first round. Every
/// existing round must equal the first, so the process is stationary.
/// No enumeration cap applies; exact queries on the result still enforce
/// theirs.
pub fn unroll_rounds(process: &CausalProcess, horizon: usize) -> Result<CausalProcess> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let rs = RoundStructure::detect(process)?;
    let (a0, o0) = rs.rounds[0];
    for &(a, o) in &rs.rounds[1..] {
        let same_action = round_mechanism(&process.mechanisms[a0], a0, a, a) == process.mechanisms[a];
        let same_obs = round_mechanism(&process.mechanisms[o0], a0, o, a) == process.mechanisms[o];
        let same_labels = process.variables[a].labels == process.variables[a0].labels
            && process.variables[o].labels == process.variables[o0].labels;
        if !(same_action && same_obs && same_labels) {
            return Err(Error::NotRoundStructured(format!(
                "round {} differs from the first round",
                process.variables[a].name
            )));
        }
    }
    if horizon == rs.horizon() {
        return Ok(process.clone());
    }

    let mut variables: Vec<VariableSpec> = process.variables[..rs.latent_count].to_vec();
    let mut mechanisms: Vec<Mechanism> = process.mechanisms[..rs.latent_count].to_vec();
    let (action_spec, obs_spec) = (&process.variables[a0], &process.variables[o0]);
    for t in 1..=horizon {
        let a = variables.len();
        let o = a + 1;
        variables.push(VariableSpec {
            id: a,
            name: format!("{}{t}", stem(&action_spec.name)),
            ..action_spec.clone()
        });
        variables.push(VariableSpec {
            id: o,
            name: format!("{}{t}", stem(&obs_spec.name)),
            ..obs_spec.clone()
        });
        mechanisms.push(round_mechanism(&process.mechanisms[a0], a0, a, a));
        mechanisms.push(round_mechanism(&process.mechanisms[o0], a0, o, a));
    }
    CausalProcess::new(process.name.clone(), variables, mechanisms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::{build_bandit, build_language_toy, build_prize_or_frog, build_two_round_binary};

    #[test]
    fn bandit_is_round_structured() {
        let rs = RoundStructure::detect(&build_bandit(3).unwrap()).unwrap();
        assert_eq!(rs.latent_count, 1);
        assert_eq!(rs.rounds, vec![(1, 2), (3, 4), (5, 6)]);
    }

    #[test]
    fn unrolling_matches_the_direct_construction() {
        let one = build_bandit(1).unwrap();
        assert_eq!(unroll_rounds(&one, 4).unwrap(), build_bandit(4).unwrap());
        assert_eq!(
            unroll_rounds(&build_bandit(4).unwrap(), 2).unwrap(),
            build_bandit(2).unwrap()
        );
        let long = unroll_rounds(&one, 20).unwrap();
        assert_eq!(long.len(), 41);
        assert_eq!(long.variables[40].name, "O20");
    }

    #[test]
    fn prize_or_frog_unrolls_with_numbered_names() {
        let p = unroll_rounds(&build_prize_or_frog(), 2).unwrap();
        assert_eq!(p.variables[3].name, "A2");
        assert_eq!(p.mechanisms[4].parents, vec![0, 3]);
    }

    #[test]
    fn history_dependent_processes_are_rejected() {
        assert!(RoundStructure::detect(&build_two_round_binary()).is_err());
        assert!(RoundStructure::detect(&build_language_toy()).is_err());
    }
}
