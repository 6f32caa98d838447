//! Plain-text process documents.
//!
//! ```text
//! # comment
//! process prize-or-frog
//! variable Theta latent : 1 2
//! variable A action : 1 2
//! variable O observation : -1 +1
//! mechanism Theta
//! row : 0.5 0.5
//! mechanism A given Theta
//! row 1 : 1 0
//! row 2 : 0 1
//! mechanism O given Theta A
//! row 1 1 : 0 1
//! ...
//! ```
//!
//! One statement per line. Variables are numbered in declaration order and
//! a mechanism may only name parents declared before its variable. Each
//! `row` lists one label per parent, a colon, then one probability per
//! symbol of the variable. Rows may appear in any order but must cover
//! every parent combination exactly once and sum to one within 1e-12.
//!
//! [`serialize_process`] writes the canonical form: variables first, rows in
//! mixed-radix order of the parent symbols, probabilities with 17
//! significant digits so that parsing restores every value bit for bit.

use std::fmt::Write as _;

use thiserror::Error;

use crate::distribution::{Distribution, NORMALIZATION_TOLERANCE};
use crate::process::{CausalProcess, Mechanism, Role, VariableSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: variable {variable} has unknown role {role:?}")]
    UnknownRole {
        line: usize,
        variable: String,
        role: String,
    },
    #[error("line {line}: unknown variable {name}")]
    UnknownVariable { line: usize, name: String },
    #[error("line {line}: variable {variable} lists parent {parent}, which is declared after it")]
    Ordering {
        line: usize,
        variable: String,
        parent: String,
    },
    #[error("line {line}: a row of variable {variable} sums to {sum}, not 1")]
    Normalization { line: usize, variable: String, sum: f64 },
    #[error("variable {variable}: {message}")]
    Semantic { variable: String, message: String },
}

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    for (idx, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(Token {
                    text: &line[s..idx],
                    column: line[..s].chars().count() + 1,
                });
            }
        } else if start.is_none() {
            start = Some(idx);
        }
    }
    if let Some(s) = start {
        tokens.push(Token {
            text: &line[s..],
            column: line[..s].chars().count() + 1,
        });
    }
    tokens
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> SpecError {
    SpecError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

struct VariableDecl {
    line: usize,
    name: String,
    role: Role,
    labels: Vec<String>,
}

struct RowDecl {
    line: usize,
    column: usize,
    parent_labels: Vec<(String, usize)>,
    probs: Vec<f64>,
}

struct MechanismDecl {
    line: usize,
    variable: String,
    parents: Vec<(String, usize)>,
    rows: Vec<RowDecl>,
}

/// Parses a process document. Syntax errors carry line and column;
/// semantic errors name the offending variable.
pub fn parse_process_spec(document: &str) -> Result<CausalProcess, SpecError> {
    let mut name: Option<String> = None;
    let mut variables: Vec<VariableDecl> = Vec::new();
    let mut mechanisms: Vec<MechanismDecl> = Vec::new();

    for (idx, raw) in document.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let tokens = tokenize(content);
        let Some(head) = tokens.first() else { continue };
        match head.text {
            "process" => {
                if name.is_some() {
                    return Err(syntax(line, head.column, "duplicate process statement"));
                }
                if !variables.is_empty() || !mechanisms.is_empty() {
                    return Err(syntax(line, head.column, "process statement must come first"));
                }
                match tokens.as_slice() {
                    [_, n] => name = Some(n.text.to_string()),
                    [_] => return Err(syntax(line, head.column + head.text.len(), "expected a process name")),
                    [_, _, extra, ..] => return Err(syntax(line, extra.column, "unexpected token")),
                    [] => unreachable!(),
                }
            }
            "variable" => {
                if name.is_none() {
                    return Err(syntax(line, head.column, "expected a process statement first"));
                }
                let var = tokens
                    .get(1)
                    .ok_or_else(|| syntax(line, head.column + head.text.len(), "expected a variable name"))?;
                if !is_identifier(var.text) {
                    return Err(syntax(
                        line,
                        var.column,
                        format!("invalid variable name {:?}", var.text),
                    ));
                }
                let role_tok = tokens
                    .get(2)
                    .ok_or_else(|| syntax(line, var.column + var.text.len(), "expected a role"))?;
                let colon = tokens
                    .get(3)
                    .ok_or_else(|| syntax(line, role_tok.column + role_tok.text.len(), "expected ':'"))?;
                if colon.text != ":" {
                    return Err(syntax(line, colon.column, "expected ':'"));
                }
                let labels: Vec<String> = tokens[4..].iter().map(|t| t.text.to_string()).collect();
                if labels.is_empty() {
                    return Err(syntax(line, colon.column + 1, "expected at least one symbol label"));
                }
                if let Some(t) = tokens[4..].iter().find(|t| t.text == ":") {
                    return Err(syntax(line, t.column, "unexpected ':'"));
                }
                for (k, label) in labels.iter().enumerate() {
                    if labels[..k].contains(label) {
                        return Err(SpecError::Semantic {
                            variable: var.text.to_string(),
                            message: format!("label {label:?} repeated"),
                        });
                    }
                }
                let role = Role::parse(role_tok.text).ok_or_else(|| SpecError::UnknownRole {
                    line,
                    variable: var.text.to_string(),
                    role: role_tok.text.to_string(),
                })?;
                if variables.iter().any(|v| v.name == var.text) {
                    return Err(SpecError::Semantic {
                        variable: var.text.to_string(),
                        message: "declared twice".into(),
                    });
                }
                variables.push(VariableDecl {
                    line,
                    name: var.text.to_string(),
                    role,
                    labels,
                });
            }
            "mechanism" => {
                if name.is_none() {
                    return Err(syntax(line, head.column, "expected a process statement first"));
                }
                let var = tokens
                    .get(1)
                    .ok_or_else(|| syntax(line, head.column + head.text.len(), "expected a variable name"))?;
                let parents = match tokens.get(2) {
                    None => Vec::new(),
                    Some(t) if t.text == "given" => {
                        if tokens.len() == 3 {
                            return Err(syntax(line, t.column + t.text.len(), "expected parent names"));
                        }
                        tokens[3..].iter().map(|t| (t.text.to_string(), t.column)).collect()
                    }
                    Some(t) => return Err(syntax(line, t.column, "expected 'given'")),
                };
                mechanisms.push(MechanismDecl {
                    line,
                    variable: var.text.to_string(),
                    parents,
                    rows: Vec::new(),
                });
            }
            "row" => {
                let mech = mechanisms
                    .last_mut()
                    .ok_or_else(|| syntax(line, head.column, "row outside of a mechanism"))?;
                let colon_at = tokens
                    .iter()
                    .position(|t| t.text == ":")
                    .ok_or_else(|| syntax(line, head.column, "expected ':' in row"))?;
                let parent_labels = tokens[1..colon_at]
                    .iter()
                    .map(|t| (t.text.to_string(), t.column))
                    .collect();
                let mut probs = Vec::new();
                for t in &tokens[colon_at + 1..] {
                    let p: f64 = t
                        .text
                        .parse()
                        .map_err(|_| syntax(line, t.column, format!("invalid probability {:?}", t.text)))?;
                    if !p.is_finite() || p < 0.0 {
                        return Err(syntax(line, t.column, "probabilities must be finite and non-negative"));
                    }
                    probs.push(p);
                }
                if probs.is_empty() {
                    return Err(syntax(line, tokens[colon_at].column + 1, "expected probabilities"));
                }
                mech.rows.push(RowDecl {
                    line,
                    column: head.column,
                    parent_labels,
                    probs,
                });
            }
            other => {
                return Err(syntax(line, head.column, format!("unknown statement {other:?}")));
            }
        }
    }

    let name = name.ok_or_else(|| syntax(1, 1, "missing process statement"))?;
    assemble(name, variables, mechanisms)
}

fn assemble(
    name: String,
    decls: Vec<VariableDecl>,
    mech_decls: Vec<MechanismDecl>,
) -> Result<CausalProcess, SpecError> {
    let variables: Vec<VariableSpec> = decls
        .iter()
        .enumerate()
        .map(|(id, d)| VariableSpec {
            id,
            name: d.name.clone(),
            role: d.role,
            labels: d.labels.clone(),
        })
        .collect();
    let id_of = |n: &str| variables.iter().position(|v| v.name == n);

    let mut mechanisms: Vec<Option<Mechanism>> = vec![None; variables.len()];
    for md in mech_decls {
        let var = id_of(&md.variable).ok_or_else(|| SpecError::UnknownVariable {
            line: md.line,
            name: md.variable.clone(),
        })?;
        if mechanisms[var].is_some() {
            return Err(SpecError::Semantic {
                variable: md.variable,
                message: "mechanism defined twice".into(),
            });
        }
        let mut parents = Vec::with_capacity(md.parents.len());
        for (pname, _) in &md.parents {
            let p = id_of(pname).ok_or_else(|| SpecError::UnknownVariable {
                line: md.line,
                name: pname.clone(),
            })?;
            if p >= var {
                return Err(SpecError::Ordering {
                    line: md.line,
                    variable: md.variable.clone(),
                    parent: pname.clone(),
                });
            }
            if parents.contains(&p) {
                return Err(SpecError::Semantic {
                    variable: md.variable.clone(),
                    message: format!("parent {pname} listed twice"),
                });
            }
            parents.push(p);
        }

        let width = variables[var].domain_size();
        let rows_needed: usize = parents.iter().map(|&p| variables[p].domain_size()).product();
        let mut rows: Vec<Option<Distribution>> = vec![None; rows_needed];
        for row in md.rows {
            if row.parent_labels.len() != parents.len() {
                return Err(syntax(
                    row.line,
                    row.column,
                    format!(
                        "expected {} parent labels, got {}",
                        parents.len(),
                        row.parent_labels.len()
                    ),
                ));
            }
            let mut index = 0;
            for ((label, column), &p) in row.parent_labels.iter().zip(&parents) {
                let symbol = variables[p].symbol_of(label).ok_or_else(|| {
                    syntax(
                        row.line,
                        *column,
                        format!("{label:?} is not a label of {}", variables[p].name),
                    )
                })?;
                index = index * variables[p].domain_size() + symbol;
            }
            if row.probs.len() != width {
                return Err(SpecError::Semantic {
                    variable: md.variable.clone(),
                    message: format!(
                        "row on line {} has {} entries, expected {width}",
                        row.line,
                        row.probs.len()
                    ),
                });
            }
            let sum: f64 = row.probs.iter().sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(SpecError::Normalization {
                    line: row.line,
                    variable: md.variable.clone(),
                    sum,
                });
            }
            if rows[index].is_some() {
                return Err(SpecError::Semantic {
                    variable: md.variable.clone(),
                    message: format!("row on line {} repeats a parent combination", row.line),
                });
            }
            rows[index] = Some(Distribution::new(row.probs).map_err(|e| SpecError::Semantic {
                variable: md.variable.clone(),
                message: e.to_string(),
            })?);
        }
        let rows = rows
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| SpecError::Semantic {
                variable: md.variable.clone(),
                message: "table does not cover every parent combination".into(),
            })?;
        mechanisms[var] = Some(Mechanism {
            variable: var,
            parents,
            rows,
        });
    }

    let mechanisms = mechanisms
        .into_iter()
        .zip(&decls)
        .map(|(m, d)| {
            m.ok_or_else(|| SpecError::Semantic {
                variable: d.name.clone(),
                message: format!("declared on line {} but has no mechanism", d.line),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    CausalProcess::new(name, variables, mechanisms).map_err(|e| SpecError::Semantic {
        variable: String::new(),
        message: e.to_string(),
    })
}

/// Formats a probability with 17 significant digits.
pub fn format_probability(p: f64) -> String {
    format!("{p:.16e}")
}

pub fn serialize_process(process: &CausalProcess) -> String {
    let mut out = String::new();
    writeln!(out, "process {}", process.name).unwrap();
    for v in &process.variables {
        writeln!(out, "variable {} {} : {}", v.name, v.role, v.labels.join(" ")).unwrap();
    }
    for m in &process.mechanisms {
        let var = &process.variables[m.variable];
        if m.parents.is_empty() {
            writeln!(out, "mechanism {}", var.name).unwrap();
        } else {
            let parents: Vec<&str> = m.parents.iter().map(|&p| process.variables[p].name.as_str()).collect();
            writeln!(out, "mechanism {} given {}", var.name, parents.join(" ")).unwrap();
        }
        let radices: Vec<usize> = m.parents.iter().map(|&p| process.domain_size(p)).collect();
        for (index, row) in m.rows.iter().enumerate() {
            let mut rem = index;
            let mut digits = vec![0; radices.len()];
            for k in (0..radices.len()).rev() {
                digits[k] = rem % radices[k];
                rem /= radices[k];
            }
            let labels: Vec<&str> = digits
                .iter()
                .zip(&m.parents)
                .map(|(&d, &p)| process.variables[p].labels[d].as_str())
                .collect();
            let probs: Vec<String> = row.probs().iter().map(|&p| format_probability(p)).collect();
            if labels.is_empty() {
                writeln!(out, "row : {}", probs.join(" ")).unwrap();
            } else {
                writeln!(out, "row {} : {}", labels.join(" "), probs.join(" ")).unwrap();
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::{all_builtins, build_prize_or_frog};

    const PRIZE: &str = "\
# boxes
process prize-or-frog
variable Theta latent : 1 2
variable A action : 1 2
variable O observation : -1 +1
mechanism Theta
row : 0.5 0.5
mechanism A given Theta
row 2 : 0 1
row 1 : 1 0
mechanism O given Theta A
row 1 1 : 0 1
row 1 2 : 1 0
row 2 1 : 1 0
row 2 2 : 0 1
";

    #[test]
    fn handwritten_document_matches_builder() {
        assert_eq!(parse_process_spec(PRIZE).unwrap(), build_prize_or_frog());
    }

    #[test]
    fn builtins_round_trip_exactly() {
        for p in all_builtins() {
            let text = serialize_process(&p);
            let back = parse_process_spec(&text).unwrap();
            assert_eq!(back, p, "{}", p.name);
            assert_eq!(serialize_process(&back), text);
        }
    }

    #[test]
    fn unnormalized_row_names_the_variable() {
        let doc = PRIZE.replace("row : 0.5 0.5", "row : 0.5 0.6");
        match parse_process_spec(&doc) {
            Err(SpecError::Normalization { variable, line, .. }) => {
                assert_eq!(variable, "Theta");
                assert_eq!(line, 7);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parent_declared_after_child_is_an_ordering_error() {
        let doc = "process p\nvariable X latent : 0 1\nvariable Y latent : 0 1\nmechanism X given Y\nrow 0 : 1 0\nrow 1 : 0 1\nmechanism Y\nrow : 0.5 0.5\n";
        assert!(matches!(
            parse_process_spec(doc),
            Err(SpecError::Ordering { ref variable, ref parent, line: 4 }) if variable == "X" && parent == "Y"
        ));
    }

    #[test]
    fn unknown_role_is_semantic() {
        let doc = PRIZE.replace("variable A action", "variable A actor");
        assert!(matches!(
            parse_process_spec(&doc),
            Err(SpecError::UnknownRole { ref variable, .. }) if variable == "A"
        ));
    }

    #[test]
    fn syntax_errors_are_positioned() {
        let doc = PRIZE.replace("row : 0.5 0.5", "row : 0.5 half");
        assert_eq!(
            parse_process_spec(&doc),
            Err(SpecError::Syntax {
                line: 7,
                column: 11,
                message: "invalid probability \"half\"".into()
            })
        );
        let doc = PRIZE.replace("mechanism A given Theta", "mechanism A with Theta");
        assert!(matches!(
            parse_process_spec(&doc),
            Err(SpecError::Syntax {
                line: 8,
                column: 13,
                ..
            })
        ));
        assert!(matches!(
            parse_process_spec("variable X latent : 0 1"),
            Err(SpecError::Syntax { line: 1, column: 1, .. })
        ));
    }

    #[test]
    fn incomplete_and_duplicate_rows() {
        let doc = PRIZE.replace("row 2 2 : 0 1\n", "");
        assert!(matches!(parse_process_spec(&doc), Err(SpecError::Semantic { ref variable, .. }) if variable == "O"));
        let doc = PRIZE.replace("row 2 2 : 0 1", "row 2 1 : 1 0");
        assert!(matches!(parse_process_spec(&doc), Err(SpecError::Semantic { ref variable, .. }) if variable == "O"));
        let doc = PRIZE.replace("row 2 2 : 0 1", "row 2 3 : 0 1");
        assert!(matches!(
            parse_process_spec(&doc),
            Err(SpecError::Syntax {
                line: 15,
                column: 7,
                ..
            })
        ));
    }
}
