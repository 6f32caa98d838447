//! Acting from a causal process whose latent parameters are hidden.
//!
//! The interventional policy samples the next action from
//! P(a_{t+1} | do(a_{1:t}), o_{1:t}); the conditional (deluded) baseline
//! conditions on its own past actions instead. Both are computed by a
//! forward filter over the latent block that only ever multiplies raw
//! mechanism entries: conditioned symbols contribute their likelihood,
//! intervened symbols contribute nothing.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::process::{CausalProcess, EvidenceItem, Mode, Role};

/// Interaction prefix in which every symbol carries its mode.
///
/// `do(x)` and `x` are different symbols: two histories that differ only in
/// a tag are different keys.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaggedHistory {
    items: Vec<EvidenceItem>,
}

impl TaggedHistory {
    pub fn new(items: Vec<EvidenceItem>) -> Self {
        Self { items }
    }

    pub fn items(&self) -> &[EvidenceItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, item: EvidenceItem) {
        self.items.push(item);
    }

    pub fn last_variable(&self) -> Option<usize> {
        self.items.last().map(|e| e.variable)
    }

    /// Copy with every action retagged as `mode`.
    pub fn with_action_mode(&self, process: &CausalProcess, mode: Mode) -> Self {
        Self {
            items: self
                .items
                .iter()
                .map(|e| match process.variables.get(e.variable).map(|v| v.role) {
                    Some(Role::Action) => EvidenceItem { mode, ..*e },
                    _ => *e,
                })
                .collect(),
        }
    }

    /// Copy with every item tagged `Condition`.
    pub fn all_conditioned(&self) -> Self {
        Self {
            items: self
                .items
                .iter()
                .map(|e| EvidenceItem {
                    mode: Mode::Condition,
                    ..*e
                })
                .collect(),
        }
    }

    /// Ids strictly increasing, symbols in range, latents and observations
    /// only conditioned.
    pub fn validate(&self, process: &CausalProcess) -> Result<()> {
        let mut previous: Option<usize> = None;
        for item in &self.items {
            let var = process
                .variables
                .get(item.variable)
                .ok_or_else(|| Error::UnknownVariable(format!("#{}", item.variable)))?;
            if previous.is_some_and(|p| p >= item.variable) {
                return Err(Error::InvalidHistory(format!("{} is out of order", var.name)));
            }
            previous = Some(item.variable);
            if item.value >= var.domain_size() {
                return Err(Error::ValueOutOfRange {
                    variable: var.name.clone(),
                    value: item.value,
                    domain_size: var.domain_size(),
                });
            }
            if matches!(var.role, Role::Latent | Role::Observation) && item.mode == Mode::Intervene {
                return Err(Error::InvalidHistory(format!(
                    "{} is a {} and cannot be intervened on here",
                    var.name, var.role
                )));
            }
        }
        Ok(())
    }
}

impl From<Vec<EvidenceItem>> for TaggedHistory {
    fn from(items: Vec<EvidenceItem>) -> Self {
        Self::new(items)
    }
}

impl fmt::Display for TaggedHistory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.items.is_empty() {
            return f.write_str("-");
        }
        for (i, e) in self.items.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match e.mode {
                Mode::Condition => write!(f, "{}={}", e.variable, e.value)?,
                Mode::Intervene => write!(f, "do({}={})", e.variable, e.value)?,
            }
        }
        Ok(())
    }
}

/// Posterior over the hidden latent variables enumerated so far. States are
/// in mixed radix over `variables`, first variable most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorStep {
    pub variables: Vec<usize>,
    pub posterior: Distribution,
    /// Predictive probability of the symbol absorbed at this step; 1 for the
    /// prior and for intervened symbols.
    pub normalizer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTrace {
    pub steps: Vec<PosteriorStep>,
}

impl PosteriorTrace {
    pub fn last(&self) -> &PosteriorStep {
        self.steps.last().expect("a trace always holds the prior step")
    }
}

#[derive(Debug, Clone)]
struct FilterState {
    assignment: Vec<usize>,
    weight: f64,
}

/// Forward filter over the latent block of a process.
///
/// Variables are visited in order. Hidden latents are expanded into the
/// state set, conditioned symbols reweight it by their mechanism entry and
/// intervened symbols only fix a value. Every variable that is neither
/// latent nor supplied must not be skipped over.
#[derive(Debug, Clone)]
pub struct PosteriorFilter<'a> {
    process: &'a CausalProcess,
    cursor: usize,
    hidden: Vec<usize>,
    states: Vec<FilterState>,
}

impl<'a> PosteriorFilter<'a> {
    pub fn new(process: &'a CausalProcess) -> Self {
        Self {
            process,
            cursor: 0,
            hidden: Vec::new(),
            states: vec![FilterState {
                assignment: vec![0; process.len()],
                weight: 1.0,
            }],
        }
    }

    /// Id of the next variable the filter has not visited.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    fn expand_until(&mut self, stop: usize) -> Result<()> {
        while self.cursor < stop {
            let var = self.process.variable(self.cursor);
            if var.role != Role::Latent {
                return Err(Error::InvalidHistory(format!(
                    "{} is missing from the history",
                    var.name
                )));
            }
            let mech = &self.process.mechanisms[self.cursor];
            let mut next = Vec::with_capacity(self.states.len() * var.domain_size());
            for state in &self.states {
                let row = mech.row(self.process, &state.assignment);
                for (value, p) in row.probs().iter().enumerate() {
                    let mut assignment = state.assignment.clone();
                    assignment[self.cursor] = value;
                    next.push(FilterState {
                        assignment,
                        weight: state.weight * p,
                    });
                }
            }
            self.states = next;
            self.hidden.push(self.cursor);
            self.cursor += 1;
        }
        Ok(())
    }

    /// Expands the latents that directly follow the cursor.
    pub fn settle(&mut self) {
        let mut stop = self.cursor;
        while stop < self.process.len() && self.process.variable(stop).role == Role::Latent {
            stop += 1;
        }
        self.expand_until(stop).expect("only latents are expanded");
    }

    /// Absorbs one symbol and returns its predictive probability (1 for an
    /// intervention).
    pub fn absorb(&mut self, item: EvidenceItem) -> Result<f64> {
        if item.variable < self.cursor || item.variable >= self.process.len() {
            return Err(Error::InvalidHistory(format!(
                "variable #{} is out of order",
                item.variable
            )));
        }
        self.expand_until(item.variable)?;
        let mech = &self.process.mechanisms[item.variable];
        for state in &mut self.states {
            state.assignment[item.variable] = item.value;
            if item.mode == Mode::Condition {
                state.weight *= mech.prob(self.process, &state.assignment);
            }
        }
        self.cursor = item.variable + 1;
        let normalizer: f64 = self.states.iter().map(|s| s.weight).sum();
        if normalizer <= 0.0 {
            return Err(Error::ZeroProbabilityEvidence);
        }
        for state in &mut self.states {
            state.weight /= normalizer;
        }
        Ok(normalizer)
    }

    pub fn posterior(&self) -> (Vec<usize>, Distribution) {
        let weights: Vec<f64> = self.states.iter().map(|s| s.weight).collect();
        (
            self.hidden.clone(),
            Distribution::from_weights(weights).expect("filter weights stay normalized"),
        )
    }

    /// Posterior predictive of `target`, a variable at or after the cursor.
    pub fn predictive(&mut self, target: usize) -> Result<Distribution> {
        Ok(self.thompson(target)?.marginal())
    }

    /// Decomposition of the predictive of `target` into posterior states and
    /// the mechanism row each state selects.
    pub fn thompson(&mut self, target: usize) -> Result<ThompsonSampler> {
        if target < self.cursor || target >= self.process.len() {
            return Err(Error::InvalidHistory(format!(
                "variable #{target} is not ahead of the history"
            )));
        }
        self.expand_until(target)?;
        let mech = &self.process.mechanisms[target];
        let (weights, rows) = self
            .states
            .iter()
            .map(|s| (s.weight, mech.row(self.process, &s.assignment).clone()))
            .unzip::<_, _, Vec<f64>, Vec<Distribution>>();
        Ok(ThompsonSampler {
            posterior: Distribution::from_weights(weights)?,
            rows,
        })
    }
}

/// Samples latents from the posterior, then the action from the expert
/// mechanism given them.
#[derive(Debug, Clone)]
pub struct ThompsonSampler {
    posterior: Distribution,
    rows: Vec<Distribution>,
}

impl ThompsonSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let state = self.posterior.sample(rng);
        self.rows[state].sample(rng)
    }

    /// Exact action marginal of [`Self::sample`].
    pub fn marginal(&self) -> Distribution {
        let mut weights = vec![0.0; self.rows[0].len()];
        for (w, row) in self.posterior.probs().iter().zip(&self.rows) {
            for (acc, p) in weights.iter_mut().zip(row.probs()) {
                *acc += w * p;
            }
        }
        Distribution::from_weights(weights).expect("mixture of rows is normalized")
    }
}

/// The first action variable after the history.
pub fn next_action(process: &CausalProcess, history: &TaggedHistory) -> Result<usize> {
    let start = history.last_variable().map_or(0, |v| v + 1);
    (start..process.len())
        .find(|&v| process.variable(v).role == Role::Action)
        .ok_or_else(|| Error::InvalidHistory("no action follows the history".into()))
}

/// Posterior over the latent block after each history symbol, with every
/// action treated as an intervention.
pub fn posterior_recursive(process: &CausalProcess, history: &TaggedHistory) -> Result<PosteriorTrace> {
    history.validate(process)?;
    if let Some(e) = history
        .items()
        .iter()
        .find(|e| process.variable(e.variable).role == Role::Action && e.mode != Mode::Intervene)
    {
        return Err(Error::InvalidHistory(format!(
            "action {} must be tagged as an intervention",
            process.variable(e.variable).name
        )));
    }
    let mut filter = PosteriorFilter::new(process);
    filter.settle();
    let step = |filter: &PosteriorFilter, normalizer| {
        let (variables, posterior) = filter.posterior();
        PosteriorStep {
            variables,
            posterior,
            normalizer,
        }
    };
    let mut steps = vec![step(&filter, 1.0)];
    for &item in history.items() {
        let normalizer = filter.absorb(item)?;
        filter.settle();
        steps.push(step(&filter, normalizer));
    }
    Ok(PosteriorTrace { steps })
}

fn filtered_next_action(process: &CausalProcess, history: &TaggedHistory) -> Result<Distribution> {
    history.validate(process)?;
    let target = next_action(process, history)?;
    let mut filter = PosteriorFilter::new(process);
    for &item in history.items() {
        filter.absorb(item)?;
    }
    filter.predictive(target)
}

/// P(a_{t+1} | do(a_{1:t}), o_{1:t}). Actions in `history` are retagged as
/// interventions whatever their tag.
pub fn action_distribution_interventional(process: &CausalProcess, history: &TaggedHistory) -> Result<Distribution> {
    filtered_next_action(process, &history.with_action_mode(process, Mode::Intervene))
}

/// P(a_{t+1} | a_{1:t}, o_{1:t}), the deluded baseline. Every symbol in
/// `history` is retagged as a condition.
pub fn action_distribution_conditional(process: &CausalProcess, history: &TaggedHistory) -> Result<Distribution> {
    filtered_next_action(process, &history.all_conditioned())
}

/// Sampler for the interventional next action.
pub fn thompson_sampler(process: &CausalProcess, history: &TaggedHistory) -> Result<ThompsonSampler> {
    let history = history.with_action_mode(process, Mode::Intervene);
    history.validate(process)?;
    let target = next_action(process, &history)?;
    let mut filter = PosteriorFilter::new(process);
    for &item in history.items() {
        filter.absorb(item)?;
    }
    filter.thompson(target)
}

/// Draws latents from the intervened posterior, then the expert's action.
pub fn thompson_sample<R: Rng + ?Sized>(
    process: &CausalProcess,
    history: &TaggedHistory,
    rng: &mut R,
) -> Result<usize> {
    Ok(thompson_sampler(process, history)?.sample(rng))
}
