//! Finite discrete causal processes.
//!
//! A [`CausalProcess`] is an ordered list of variables together with one
//! [`Mechanism`] per variable. Parents always precede their child, so the
//! declaration order is a topological order and acyclicity needs no check.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::distribution::Distribution;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Latent,
    Action,
    Observation,
    Goal,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Latent => "latent",
            Role::Action => "action",
            Role::Observation => "observation",
            Role::Goal => "goal",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "latent" => Some(Role::Latent),
            "action" => Some(Role::Action),
            "observation" => Some(Role::Observation),
            "goal" => Some(Role::Goal),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A variable with symbols `0..domain_size`. Labels are the display names
/// of the symbols, used by the text format and the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub id: usize,
    pub name: String,
    pub role: Role,
    pub labels: Vec<String>,
}

impl VariableSpec {
    pub fn domain_size(&self) -> usize {
        self.labels.len()
    }

    pub fn symbol_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Conditional probability table of one variable given its parents.
///
/// Rows are indexed in mixed radix over the parent symbols, first parent
/// most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub variable: usize,
    pub parents: Vec<usize>,
    pub rows: Vec<Distribution>,
}

impl Mechanism {
    pub fn point_mass(variable: usize, domain_size: usize, value: usize) -> Self {
        Self {
            variable,
            parents: Vec::new(),
            rows: vec![Distribution::point_mass(domain_size, value)],
        }
    }

    /// Row index selected by the parent values in a (possibly partial)
    /// assignment indexed by variable id.
    pub fn row_index(&self, process: &CausalProcess, assignment: &[usize]) -> usize {
        self.parents
            .iter()
            .fold(0, |idx, &p| idx * process.variables[p].domain_size() + assignment[p])
    }

    pub fn row<'a>(&'a self, process: &CausalProcess, assignment: &[usize]) -> &'a Distribution {
        &self.rows[self.row_index(process, assignment)]
    }

    /// Probability of `assignment[self.variable]` given the parent values.
    pub fn prob(&self, process: &CausalProcess, assignment: &[usize]) -> f64 {
        self.row(process, assignment).prob(assignment[self.variable])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalProcess {
    pub name: String,
    pub variables: Vec<VariableSpec>,
    pub mechanisms: Vec<Mechanism>,
}

impl CausalProcess {
    /// Checks every structural invariant: consecutive ids, non-empty
    /// domains, one mechanism per variable, parents strictly earlier, full
    /// row coverage and normalized rows.
    pub fn new(name: impl Into<String>, variables: Vec<VariableSpec>, mechanisms: Vec<Mechanism>) -> Result<Self> {
        let process = Self {
            name: name.into(),
            variables,
            mechanisms,
        };
        process.validate()?;
        Ok(process)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variables.len() != self.mechanisms.len() {
            return Err(Error::InvalidProcess(format!(
                "{} variables but {} mechanisms",
                self.variables.len(),
                self.mechanisms.len()
            )));
        }
        for (i, var) in self.variables.iter().enumerate() {
            if var.id != i {
                return Err(Error::InvalidProcess(format!(
                    "variable {} has id {} at position {i}",
                    var.name, var.id
                )));
            }
            if var.labels.is_empty() {
                return Err(Error::InvalidProcess(format!(
                    "variable {} has an empty domain",
                    var.name
                )));
            }
            if self.variables[..i].iter().any(|v| v.name == var.name) {
                return Err(Error::InvalidProcess(format!("variable {} declared twice", var.name)));
            }
            let mech = &self.mechanisms[i];
            if mech.variable != i {
                return Err(Error::InvalidProcess(format!(
                    "mechanism at position {i} belongs to variable {}",
                    mech.variable
                )));
            }
            let mut rows_needed = 1usize;
            for (k, &p) in mech.parents.iter().enumerate() {
                if p >= i {
                    return Err(Error::InvalidProcess(format!(
                        "variable {} has parent id {p}, which is not earlier",
                        var.name
                    )));
                }
                if mech.parents[..k].contains(&p) {
                    return Err(Error::InvalidProcess(format!(
                        "variable {} lists parent {} twice",
                        var.name, self.variables[p].name
                    )));
                }
                rows_needed = rows_needed.saturating_mul(self.variables[p].domain_size());
            }
            if mech.rows.len() != rows_needed {
                return Err(Error::InvalidProcess(format!(
                    "variable {} has {} rows, expected {rows_needed}",
                    var.name,
                    mech.rows.len()
                )));
            }
            for row in &mech.rows {
                if row.len() != var.domain_size() {
                    return Err(Error::InvalidProcess(format!(
                        "variable {} has a row of width {}, expected {}",
                        var.name,
                        row.len(),
                        var.domain_size()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn variable(&self, id: usize) -> &VariableSpec {
        &self.variables[id]
    }

    pub fn variable_by_name(&self, name: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn id_of(&self, name: &str) -> Result<usize> {
        self.variable_by_name(name)
            .map(|v| v.id)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn domain_size(&self, id: usize) -> usize {
        self.variables[id].domain_size()
    }

    /// Number of full joint assignments, saturating.
    pub fn joint_size(&self) -> u128 {
        self.variables
            .iter()
            .fold(1u128, |acc, v| acc.saturating_mul(v.domain_size() as u128))
    }

    pub fn ids_with_role(&self, role: Role) -> Vec<usize> {
        self.variables.iter().filter(|v| v.role == role).map(|v| v.id).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Condition,
    Intervene,
}

/// One observed (`Condition`) or forced (`Intervene`) symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub variable: usize,
    pub value: usize,
    pub mode: Mode,
}

impl EvidenceItem {
    pub fn condition(variable: usize, value: usize) -> Self {
        Self {
            variable,
            value,
            mode: Mode::Condition,
        }
    }

    pub fn intervene(variable: usize, value: usize) -> Self {
        Self {
            variable,
            value,
            mode: Mode::Intervene,
        }
    }
}

/// Shorthand for [`EvidenceItem::condition`].
pub fn cond(variable: usize, value: usize) -> EvidenceItem {
    EvidenceItem::condition(variable, value)
}

/// Shorthand for [`EvidenceItem::intervene`].
pub fn act(variable: usize, value: usize) -> EvidenceItem {
    EvidenceItem::intervene(variable, value)
}

impl CausalProcess {
    /// Parses comma-separated terms `X=v` (condition) and `do(X=v)`
    /// (intervene), where `X` is a variable name and `v` one of its labels.
    pub fn parse_evidence(&self, text: &str) -> Result<Vec<EvidenceItem>> {
        let bad = |msg: String| Error::InvalidArgument(msg);
        let mut items = Vec::new();
        for term in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (inner, mode) = match term.strip_prefix("do(") {
                Some(rest) => (
                    rest.strip_suffix(')')
                        .ok_or_else(|| bad(format!("unclosed do( in evidence term {term:?}")))?,
                    Mode::Intervene,
                ),
                None => (term, Mode::Condition),
            };
            let (name, label) = inner
                .split_once('=')
                .ok_or_else(|| bad(format!("evidence term {term:?} is not X=v or do(X=v)")))?;
            let (name, label) = (name.trim(), label.trim());
            let var = self
                .variable_by_name(name)
                .ok_or_else(|| Error::UnknownVariable(name.to_string()))?;
            let value = var.symbol_of(label).ok_or_else(|| {
                bad(format!(
                    "{label:?} is not a value of {name}; values are {}",
                    var.labels.join(" ")
                ))
            })?;
            items.push(EvidenceItem {
                variable: var.id,
                value,
                mode,
            });
        }
        Ok(items)
    }
}

/// Incremental construction of a process by variable name.
#[derive(Debug, Default)]
pub struct ProcessBuilder {
    name: String,
    variables: Vec<VariableSpec>,
    mechanisms: Vec<Option<Mechanism>>,
}

impl ProcessBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    /// Adds a variable whose labels are its symbol indices.
    pub fn variable(&mut self, name: &str, role: Role, domain_size: usize) -> usize {
        let labels = (0..domain_size).map(|s| s.to_string()).collect();
        self.labelled_variable(name, role, labels)
    }

    pub fn labelled_variable(&mut self, name: &str, role: Role, labels: Vec<String>) -> usize {
        let id = self.variables.len();
        self.variables.push(VariableSpec {
            id,
            name: name.to_string(),
            role,
            labels,
        });
        self.mechanisms.push(None);
        id
    }

    /// Sets the table of `variable`. `row_fn` receives the parent symbols in
    /// parent order and returns its probability row.
    pub fn mechanism<F>(&mut self, variable: usize, parents: &[usize], mut row_fn: F) -> Result<()>
    where
        F: FnMut(&[usize]) -> Vec<f64>,
    {
        let radices: Vec<usize> = parents
            .iter()
            .map(|&p| {
                self.variables
                    .get(p)
                    .map(|v| v.domain_size())
                    .ok_or_else(|| Error::UnknownVariable(p.to_string()))
            })
            .collect::<Result<_>>()?;
        let rows_needed: usize = radices.iter().product();
        let mut rows = Vec::with_capacity(rows_needed);
        let mut digits = vec![0usize; parents.len()];
        for _ in 0..rows_needed {
            rows.push(
                Distribution::new(row_fn(&digits))
                    .map_err(|e| Error::InvalidProcess(format!("{}: {e}", self.variables[variable].name)))?,
            );
            for k in (0..digits.len()).rev() {
                digits[k] += 1;
                if digits[k] < radices[k] {
                    break;
                }
                digits[k] = 0;
            }
        }
        self.mechanisms[variable] = Some(Mechanism {
            variable,
            parents: parents.to_vec(),
            rows,
        });
        Ok(())
    }

    pub fn build(self) -> Result<CausalProcess> {
        let mechanisms = self
            .mechanisms
            .into_iter()
            .zip(&self.variables)
            .map(|(m, v)| m.ok_or_else(|| Error::InvalidProcess(format!("{} has no mechanism", v.name))))
            .collect::<Result<_>>()?;
        CausalProcess::new(self.name, self.variables, mechanisms)
    }
}
