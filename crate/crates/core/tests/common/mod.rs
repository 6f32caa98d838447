#![allow(dead_code)]

use causeq::{CausalProcess, EvidenceItem, Mode, ProcessBuilder, Role};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random probability row; with `sparse`, entries are zeroed now and then
/// so that zero-probability evidence shows up.
pub fn random_row(rng: &mut impl Rng, size: usize, sparse: bool) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..size)
            .map(|_| {
                if sparse && rng.random_bool(0.2) {
                    0.0
                } else {
                    rng.random::<f64>() + 1e-3
                }
            })
            .collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            return w.into_iter().map(|x| x / total).collect();
        }
    }
}

/// Up to `max_vars` variables with up to `max_symbols` symbols each, random
/// parent sets and roles.
pub fn random_process(rng: &mut impl Rng, max_vars: usize, max_symbols: usize, sparse: bool) -> CausalProcess {
    let n = rng.random_range(1..=max_vars);
    let mut b = ProcessBuilder::new("fuzz");
    let roles = [Role::Latent, Role::Action, Role::Observation, Role::Goal];
    for v in 0..n {
        let size = rng.random_range(1..=max_symbols);
        let role = roles[rng.random_range(0..roles.len())];
        let id = b.variable(&format!("V{v}"), role, size);
        let parents: Vec<usize> = (0..v).filter(|_| rng.random_bool(0.5)).collect();
        b.mechanism(id, &parents, |_| random_row(rng, size, sparse)).unwrap();
    }
    b.build().unwrap()
}

/// Up to `max_items` evidence items on distinct variables other than `target`.
pub fn random_evidence(
    rng: &mut impl Rng,
    process: &CausalProcess,
    target: usize,
    max_items: usize,
) -> Vec<EvidenceItem> {
    let mut candidates: Vec<usize> = (0..process.len()).filter(|&v| v != target).collect();
    let count = rng.random_range(0..=max_items.min(candidates.len()));
    let mut out = Vec::new();
    for _ in 0..count {
        let v = candidates.swap_remove(rng.random_range(0..candidates.len()));
        let mode = if rng.random_bool(0.5) {
            Mode::Condition
        } else {
            Mode::Intervene
        };
        out.push(EvidenceItem {
            variable: v,
            value: rng.random_range(0..process.domain_size(v)),
            mode,
        });
    }
    out
}

/// Theta -> A -> O with Theta also a parent of O, random tables.
pub fn random_triple(rng: &mut impl Rng) -> CausalProcess {
    let mut b = ProcessBuilder::new("triple");
    let nt = rng.random_range(2..=4);
    let na = rng.random_range(2..=4);
    let no = rng.random_range(2..=4);
    let t = b.variable("Theta", Role::Latent, nt);
    let a = b.variable("A", Role::Action, na);
    let o = b.variable("O", Role::Observation, no);
    b.mechanism(t, &[], |_| random_row(rng, nt, false)).unwrap();
    b.mechanism(a, &[t], |_| random_row(rng, na, false)).unwrap();
    b.mechanism(o, &[t, a], |_| random_row(rng, no, false)).unwrap();
    b.build().unwrap()
}

/// P(theta | a, o) and P(theta | do(a), o) straight from the three tables.
pub fn twin_posteriors(process: &CausalProcess, a: usize, o: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    let m = &process.mechanisms;
    let nt = process.domain_size(0);
    let na = process.domain_size(1);
    let prior = |t: usize| m[0].rows[0].probs()[t];
    let expert = |t: usize| m[1].rows[t].probs()[a];
    let outcome = |t: usize| m[2].rows[t * na + a].probs()[o];
    let seen: Vec<f64> = (0..nt).map(|t| prior(t) * expert(t) * outcome(t)).collect();
    let done: Vec<f64> = (0..nt).map(|t| prior(t) * outcome(t)).collect();
    let (zs, zd) = (seen.iter().sum::<f64>(), done.iter().sum::<f64>());
    if zs <= 0.0 || zd <= 0.0 {
        return None;
    }
    Some((
        seen.iter().map(|x| x / zs).collect(),
        done.iter().map(|x| x / zd).collect(),
    ))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Agent prefix (a_1, o_1, ...) of a braided table as a tagged history over
/// a process with `latent_count` leading latents.
pub fn flat_to_key(flat: &[usize], latent_count: usize) -> causeq::HistoryKey {
    let items = flat
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let v = latent_count + i;
            if i % 2 == 0 {
                causeq::act(v, x)
            } else {
                causeq::cond(v, x)
            }
        })
        .collect::<Vec<_>>();
    causeq::HistoryKey::new(items)
}
