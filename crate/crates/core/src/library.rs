//! Built-in processes.
//!
//! Symbol conventions: prize-or-frog boxes are labelled `1`/`2` (symbols 0
//! and 1) and its outcome `-1`/`+1` (symbols 0 and 1, so symbol 1 is the
//! prize). Bandit arms are labelled `1`..`5` and rewards `0`/`1`.

use crate::engine::ENUMERATION_CAP;
use crate::error::{Error, Result};
use crate::process::{CausalProcess, ProcessBuilder, Role};

pub const PRIZE_OR_FROG: &str = "prize-or-frog";
pub const PRIZE_OR_FROG_REVERSED: &str = "prize-or-frog-reversed";
pub const BANDIT: &str = "bandit";
pub const TWO_ROUND_BINARY: &str = "two-round-binary";
pub const LANGUAGE_TOY: &str = "language-toy";
pub const GOAL: &str = "goal";

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 6] = [
    PRIZE_OR_FROG,
    PRIZE_OR_FROG_REVERSED,
    BANDIT,
    TWO_ROUND_BINARY,
    LANGUAGE_TOY,
    GOAL,
];

pub const BANDIT_ARMS: usize = 5;
/// Probability that the noisy expert pulls the best arm.
pub const BANDIT_EXPERT_MATCH: f64 = 0.6;
pub const BANDIT_EXPERT_MISMATCH: f64 = 0.1;
/// Reward probability of the best arm and of every other arm.
pub const BANDIT_REWARD_BEST: f64 = 0.75;
pub const BANDIT_REWARD_OTHER: f64 = 0.25;

fn labels(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn numbered(count: usize, first: usize) -> Vec<String> {
    (first..first + count).map(|i| i.to_string()).collect()
}

fn indicator(size: usize, symbol: usize) -> Vec<f64> {
    (0..size).map(|s| if s == symbol { 1.0 } else { 0.0 }).collect()
}

/// Looks up a built-in by name. `horizon` only affects the bandit.
pub fn builtin(name: &str, horizon: usize) -> Result<CausalProcess> {
    match name {
        PRIZE_OR_FROG => Ok(build_prize_or_frog()),
        PRIZE_OR_FROG_REVERSED => Ok(build_prize_or_frog_reversed()),
        BANDIT => build_bandit(horizon),
        TWO_ROUND_BINARY => Ok(build_two_round_binary()),
        LANGUAGE_TOY => Ok(build_language_toy()),
        GOAL => Ok(build_goal_process()),
        other => Err(Error::InvalidArgument(format!(
            "unknown process {other:?}; valid names are {}",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}

/// Every built-in at its smallest horizon.
pub fn all_builtins() -> Vec<CausalProcess> {
    BUILTIN_NAMES
        .iter()
        .map(|n| builtin(n, 1).expect("built-ins are valid"))
        .collect()
}

/// Theta (prize location), A (expert's box), O (prize or frog). The expert
/// always opens the box holding the prize.
pub fn build_prize_or_frog() -> CausalProcess {
    let mut b = ProcessBuilder::new(PRIZE_OR_FROG);
    let theta = b.labelled_variable("Theta", Role::Latent, labels(&["1", "2"]));
    let a = b.labelled_variable("A", Role::Action, labels(&["1", "2"]));
    let o = b.labelled_variable("O", Role::Observation, labels(&["-1", "+1"]));
    b.mechanism(theta, &[], |_| vec![0.5, 0.5]).unwrap();
    b.mechanism(a, &[theta], |p| indicator(2, p[0])).unwrap();
    b.mechanism(o, &[theta, a], |p| indicator(2, usize::from(p[0] == p[1])))
        .unwrap();
    b.build().expect("prize-or-frog is valid")
}

/// Same joint as [`build_prize_or_frog`] but with the action causally
/// preceding the box configuration.
pub fn build_prize_or_frog_reversed() -> CausalProcess {
    let mut b = ProcessBuilder::new(PRIZE_OR_FROG_REVERSED);
    let a = b.labelled_variable("A", Role::Action, labels(&["1", "2"]));
    let theta = b.labelled_variable("Theta", Role::Latent, labels(&["1", "2"]));
    let o = b.labelled_variable("O", Role::Observation, labels(&["-1", "+1"]));
    b.mechanism(a, &[], |_| vec![0.5, 0.5]).unwrap();
    b.mechanism(theta, &[a], |p| indicator(2, p[0])).unwrap();
    b.mechanism(o, &[theta, a], |p| indicator(2, usize::from(p[0] == p[1])))
        .unwrap();
    b.build().expect("reversed prize-or-frog is valid")
}

/// Five-armed Bernoulli bandit played by a noisy expert who knows the best
/// arm Theta. Variables: Theta, A1, O1, ..., A{h}, O{h}.
pub fn build_bandit(horizon: usize) -> Result<CausalProcess> {
    let process = bandit_unchecked(horizon)?;
    if process.joint_size() > ENUMERATION_CAP {
        return Err(Error::Capacity {
            required: process.joint_size(),
            cap: ENUMERATION_CAP,
        });
    }
    Ok(process)
}

pub(crate) fn bandit_unchecked(horizon: usize) -> Result<CausalProcess> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("bandit horizon must be at least 1".into()));
    }
    let mut b = ProcessBuilder::new(BANDIT);
    let theta = b.labelled_variable("Theta", Role::Latent, numbered(BANDIT_ARMS, 1));
    b.mechanism(theta, &[], |_| vec![1.0 / BANDIT_ARMS as f64; BANDIT_ARMS])?;
    for t in 1..=horizon {
        let a = b.labelled_variable(&format!("A{t}"), Role::Action, numbered(BANDIT_ARMS, 1));
        let o = b.labelled_variable(&format!("O{t}"), Role::Observation, labels(&["0", "1"]));
        b.mechanism(a, &[theta], |p| {
            (0..BANDIT_ARMS)
                .map(|arm| {
                    if arm == p[0] {
                        BANDIT_EXPERT_MATCH
                    } else {
                        BANDIT_EXPERT_MISMATCH
                    }
                })
                .collect()
        })?;
        b.mechanism(o, &[theta, a], |p| {
            let win = if p[0] == p[1] {
                BANDIT_REWARD_BEST
            } else {
                BANDIT_REWARD_OTHER
            };
            vec![1.0 - win, win]
        })?;
    }
    b.build()
}

/// Two rounds of (Theta_t, A_t, O_t) binary variables. Every variable lists
/// its full causal past as parents; the tables only use part of it.
///
/// Theta1 is a fair coin, Theta2 keeps Theta1 with probability 0.9, the
/// expert matches the current Theta with probability 0.8, and the outcome is
/// 1 with probability 0.7 on a match and 0.3 otherwise.
pub fn build_two_round_binary() -> CausalProcess {
    let mut b = ProcessBuilder::new(TWO_ROUND_BINARY);
    let t1 = b.variable("Theta1", Role::Latent, 2);
    let a1 = b.variable("A1", Role::Action, 2);
    let o1 = b.variable("O1", Role::Observation, 2);
    let t2 = b.variable("Theta2", Role::Latent, 2);
    let a2 = b.variable("A2", Role::Action, 2);
    let o2 = b.variable("O2", Role::Observation, 2);
    let expert = |theta: usize| if theta == 1 { vec![0.2, 0.8] } else { vec![0.8, 0.2] };
    let outcome = |theta: usize, a: usize| if theta == a { vec![0.3, 0.7] } else { vec![0.7, 0.3] };
    b.mechanism(t1, &[], |_| vec![0.5, 0.5]).unwrap();
    b.mechanism(a1, &[t1], |p| expert(p[0])).unwrap();
    b.mechanism(o1, &[t1, a1], |p| outcome(p[0], p[1])).unwrap();
    b.mechanism(t2, &[t1, a1, o1], |p| {
        if p[0] == 1 {
            vec![0.1, 0.9]
        } else {
            vec![0.9, 0.1]
        }
    })
    .unwrap();
    b.mechanism(a2, &[t1, a1, o1, t2], |p| expert(p[3])).unwrap();
    b.mechanism(o2, &[t1, a1, o1, t2, a2], |p| outcome(p[3], p[4])).unwrap();
    b.build().expect("two-round binary process is valid")
}

/// Token distribution of every position under each intention.
pub const LANGUAGE_TOKENS: [[f64; 3]; 2] = [[0.7, 0.2, 0.1], [0.1, 0.2, 0.7]];

/// Theta (the speaker's intention) and four words X1..X4 over a vocabulary of
/// three. X2 and X4 are tagged as model actions, X1 and X3 as expert words.
pub fn build_language_toy() -> CausalProcess {
    let mut b = ProcessBuilder::new(LANGUAGE_TOY);
    let theta = b.variable("Theta", Role::Latent, 2);
    b.mechanism(theta, &[], |_| vec![0.5, 0.5]).unwrap();
    for (i, role) in [Role::Observation, Role::Action, Role::Observation, Role::Action]
        .into_iter()
        .enumerate()
    {
        let x = b.variable(&format!("X{}", i + 1), role, 3);
        b.mechanism(x, &[theta], |p| LANGUAGE_TOKENS[p[0]].to_vec()).unwrap();
    }
    b.build().expect("language toy is valid")
}

/// Theta, A, O as a noisy two-armed task whose payoff depends on Theta,
/// followed by a goal signal G that copies O with probability 0.9.
///
/// Arm 1 pays 0.9 when it is the right arm, arm 0 pays 0.6 when it is the
/// right arm, and a wrong arm pays 0.2. The asymmetry makes O, and hence G,
/// informative about Theta.
pub fn build_goal_process() -> CausalProcess {
    let mut b = ProcessBuilder::new(GOAL);
    let theta = b.variable("Theta", Role::Latent, 2);
    let a = b.variable("A", Role::Action, 2);
    let o = b.variable("O", Role::Observation, 2);
    let g = b.variable("G", Role::Goal, 2);
    b.mechanism(theta, &[], |_| vec![0.5, 0.5]).unwrap();
    b.mechanism(a, &[theta], |p| if p[0] == 1 { vec![0.2, 0.8] } else { vec![0.8, 0.2] })
        .unwrap();
    b.mechanism(o, &[theta, a], |p| {
        let win = match (p[0] == p[1], p[0]) {
            (true, 1) => 0.9,
            (true, _) => 0.6,
            (false, _) => 0.2,
        };
        vec![1.0 - win, win]
    })
    .unwrap();
    b.mechanism(
        g,
        &[theta, o],
        |p| if p[1] == 1 { vec![0.1, 0.9] } else { vec![0.9, 0.1] },
    )
    .unwrap();
    b.build().expect("goal process is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{joint_probability, query};
    use crate::process::{act, cond};

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn prize_or_frog_examples() {
        let p = build_prize_or_frog();
        assert_eq!(query(&p, 1, &[]).unwrap().probs(), &[0.5, 0.5]);
        assert_eq!(query(&p, 2, &[cond(1, 0)]).unwrap().probs(), &[0.0, 1.0]);
        assert_eq!(query(&p, 2, &[act(1, 0)]).unwrap().probs(), &[0.5, 0.5]);
    }

    #[test]
    fn reversed_graph_shares_the_joint() {
        let p = build_prize_or_frog();
        let r = build_prize_or_frog_reversed();
        for t in 0..2 {
            for a in 0..2 {
                for o in 0..2 {
                    assert_eq!(
                        joint_probability(&p, &[t, a, o]).unwrap(),
                        joint_probability(&r, &[a, t, o]).unwrap()
                    );
                }
            }
        }
        // Intervening on A now does fix Theta.
        assert_eq!(query(&r, 1, &[act(0, 0)]).unwrap().probs(), &[1.0, 0.0]);
        assert_eq!(query(&r, 1, &[cond(0, 0)]).unwrap().probs(), &[1.0, 0.0]);
    }

    #[test]
    fn bandit_tables_and_first_round_queries() {
        let p = build_bandit(1).unwrap();
        assert!(close(query(&p, 1, &[]).unwrap().probs(), &[0.2; 5], 1e-12));
        let post = query(&p, 0, &[cond(1, 1)]).unwrap();
        assert!(close(post.probs(), &[0.1, 0.6, 0.1, 0.1, 0.1], 1e-12));
        assert!(close(query(&p, 0, &[act(1, 1)]).unwrap().probs(), &[0.2; 5], 1e-12));
        assert_eq!(p.mechanisms[0].rows[0].probs(), &[0.2; 5]);
        for theta in 0..5 {
            for arm in 0..5 {
                let expert = p.mechanisms[1].rows[theta].prob(arm);
                let win = p.mechanisms[2].rows[theta * 5 + arm].prob(1);
                let (e, w) = if arm == theta { (0.6, 0.75) } else { (0.1, 0.25) };
                assert_eq!((expert, win), (e, w));
            }
        }
    }

    #[test]
    fn bandit_capacity() {
        assert!(build_bandit(5).is_ok());
        assert!(matches!(build_bandit(6), Err(Error::Capacity { .. })));
        assert!(matches!(build_bandit(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn unknown_builtin_lists_valid_names() {
        let err = builtin("frog", 1).unwrap_err().to_string();
        for name in BUILTIN_NAMES {
            assert!(err.contains(name));
        }
    }

    #[test]
    fn goal_conditioning_is_informative_but_intervening_is_not() {
        let p = build_goal_process();
        let prior = query(&p, 0, &[]).unwrap();
        let conditioned = query(&p, 0, &[cond(3, 1)]).unwrap();
        assert!(conditioned.total_variation(&prior) > 0.01);
        assert_eq!(query(&p, 0, &[act(3, 1)]).unwrap(), prior);
    }
}
