//! Exact queries with mixed conditioning and intervening evidence.
//!
//! Interventions are applied by truncated factorization: each intervened
//! variable loses its parents and its mechanism becomes a point mass on the
//! forced value. Conditioning is then ordinary Bayesian conditioning in the
//! mutilated process, computed by enumeration.

use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::process::{CausalProcess, EvidenceItem, Mechanism, Mode};

/// Largest number of free assignments a single query may enumerate.
pub const ENUMERATION_CAP: u128 = 1 << 22;

/// Product of the mechanism rows selected by a full assignment.
pub fn joint_probability(process: &CausalProcess, assignment: &[usize]) -> Result<f64> {
    if assignment.len() != process.len() {
        return Err(Error::InvalidAssignment(format!(
            "expected {} symbols, got {}",
            process.len(),
            assignment.len()
        )));
    }
    for (var, &value) in process.variables.iter().zip(assignment) {
        if value >= var.domain_size() {
            return Err(Error::InvalidAssignment(format!(
                "symbol {value} out of range for {} (domain size {})",
                var.name,
                var.domain_size()
            )));
        }
    }
    Ok(process.mechanisms.iter().map(|m| m.prob(process, assignment)).product())
}

/// Returns the mutilated process for the `Intervene` items of `interventions`.
/// `Condition` items are ignored.
pub fn apply_interventions(process: &CausalProcess, interventions: &[EvidenceItem]) -> Result<CausalProcess> {
    let forced: Vec<&EvidenceItem> = interventions.iter().filter(|e| e.mode == Mode::Intervene).collect();
    check_items(process, forced.iter().copied())?;
    let mut mutilated = process.clone();
    for item in forced {
        let size = process.domain_size(item.variable);
        mutilated.mechanisms[item.variable] = Mechanism::point_mass(item.variable, size, item.value);
    }
    Ok(mutilated)
}

fn check_items<'a>(process: &CausalProcess, items: impl IntoIterator<Item = &'a EvidenceItem>) -> Result<()> {
    let mut seen = vec![false; process.len()];
    for item in items {
        let var = process
            .variables
            .get(item.variable)
            .ok_or_else(|| Error::UnknownVariable(format!("#{}", item.variable)))?;
        if item.value >= var.domain_size() {
            return Err(Error::ValueOutOfRange {
                variable: var.name.clone(),
                value: item.value,
                domain_size: var.domain_size(),
            });
        }
        if std::mem::replace(&mut seen[item.variable], true) {
            return Err(Error::DuplicateEvidence(var.name.clone()));
        }
    }
    Ok(())
}

/// P(target | evidence) where `Intervene` items act through the do-operator
/// and `Condition` items are observed in the mutilated process.
pub fn query(process: &CausalProcess, target: usize, evidence: &[EvidenceItem]) -> Result<Distribution> {
    if target >= process.len() {
        return Err(Error::UnknownVariable(format!("#{target}")));
    }
    check_items(process, evidence)?;
    if evidence.iter().any(|e| e.variable == target) {
        return Err(Error::TargetInEvidence(process.variable(target).name.clone()));
    }
    let mutilated = apply_interventions(process, evidence)?;

    // Variables after both the target and every evidence item are barren:
    // they sum out to one and never need enumerating.
    let last = evidence
        .iter()
        .map(|e| e.variable)
        .chain(std::iter::once(target))
        .max()
        .unwrap_or(target);

    let mut fixed: Vec<Option<usize>> = vec![None; last + 1];
    for e in evidence {
        fixed[e.variable] = Some(e.value);
    }
    let required = (0..=last)
        .filter(|&v| fixed[v].is_none())
        .fold(1u128, |acc, v| acc.saturating_mul(process.domain_size(v) as u128));
    if required > ENUMERATION_CAP {
        return Err(Error::Capacity {
            required,
            cap: ENUMERATION_CAP,
        });
    }

    let mut weights = vec![0.0; process.domain_size(target)];
    let mut assignment = vec![0usize; process.len()];
    let mut search = Enumeration {
        process: &mutilated,
        fixed: &fixed,
        target,
        weights: &mut weights,
    };
    search.visit(0, 1.0, &mut assignment);
    Distribution::from_weights(weights)
}

struct Enumeration<'a> {
    process: &'a CausalProcess,
    fixed: &'a [Option<usize>],
    target: usize,
    weights: &'a mut [f64],
}

impl Enumeration<'_> {
    fn visit(&mut self, var: usize, weight: f64, assignment: &mut [usize]) {
        if var == self.fixed.len() {
            self.weights[assignment[self.target]] += weight;
            return;
        }
        let row = self.process.mechanisms[var].row(self.process, assignment);
        match self.fixed[var] {
            Some(value) => {
                let p = row.prob(value);
                if p > 0.0 {
                    assignment[var] = value;
                    self.visit(var + 1, weight * p, assignment);
                }
            }
            None => {
                let probs = row.probs().to_vec();
                for (value, p) in probs.into_iter().enumerate() {
                    if p > 0.0 {
                        assignment[var] = value;
                        self.visit(var + 1, weight * p, assignment);
                    }
                }
            }
        }
    }
}
