use std::collections::{BTreeSet, HashMap};
use std::fmt;

use super::{Pcfg, Symbol, MASS_TOLERANCE};

/// A well-formedness rule broken by a grammar. Violations are data: a
/// grammar is usable for sampling only when [`Pcfg::validate`] is empty.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    MissingStart(String),
    InvalidProbability { nonterminal: String, probability: f64 },
    DistributionDeficit { nonterminal: String, deficit: f64 },
    DistributionExcess { nonterminal: String, excess: f64 },
    UndefinedNonterminal { name: String, referenced_by: String },
    NonTerminating(String),
    LineBreakInTerminal { nonterminal: String },
    EmptyNumericRange { nonterminal: String },
    /// Terminal or variable output that is not enclosed by any section.
    OutsideSection { nonterminal: String },
    /// Variable whose nearest enclosing section carries no field.
    UntaggedVariable { nonterminal: String },
    UndefinedSection(String),
}

impl Violation {
    pub fn nonterminal(&self) -> &str {
        match self {
            Violation::MissingStart(n)
            | Violation::NonTerminating(n)
            | Violation::UndefinedSection(n) => n,
            Violation::InvalidProbability { nonterminal, .. }
            | Violation::DistributionDeficit { nonterminal, .. }
            | Violation::DistributionExcess { nonterminal, .. }
            | Violation::LineBreakInTerminal { nonterminal }
            | Violation::EmptyNumericRange { nonterminal }
            | Violation::OutsideSection { nonterminal }
            | Violation::UntaggedVariable { nonterminal } => nonterminal,
            Violation::UndefinedNonterminal { referenced_by, .. } => referenced_by,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingStart(n) => write!(f, "start symbol {n} has no productions"),
            Violation::InvalidProbability { nonterminal, probability } => {
                write!(f, "{nonterminal}: probability {probability} outside (0, 1]")
            }
            Violation::DistributionDeficit { nonterminal, deficit } => {
                write!(f, "{nonterminal}: distribution short of 1 by {deficit}")
            }
            Violation::DistributionExcess { nonterminal, excess } => {
                write!(f, "{nonterminal}: distribution exceeds 1 by {excess}")
            }
            Violation::UndefinedNonterminal { name, referenced_by } => {
                write!(f, "{referenced_by}: references undefined nonterminal {name}")
            }
            Violation::NonTerminating(n) => {
                write!(f, "{n}: derivation does not terminate with probability 1")
            }
            Violation::LineBreakInTerminal { nonterminal } => {
                write!(f, "{nonterminal}: terminal contains CR or LF")
            }
            Violation::EmptyNumericRange { nonterminal } => {
                write!(f, "{nonterminal}: numeric range is empty or includes 0")
            }
            Violation::OutsideSection { nonterminal } => {
                write!(f, "{nonterminal}: produces output outside any section")
            }
            Violation::UntaggedVariable { nonterminal } => {
                write!(f, "{nonterminal}: variable inside a section without a field")
            }
            Violation::UndefinedSection(n) => write!(f, "section {n} has no productions"),
        }
    }
}

pub(super) fn validate(g: &Pcfg) -> Vec<Violation> {
    let mut out = Vec::new();
    let names = g.nonterminals();

    if !g.is_defined(g.start()) {
        out.push(Violation::MissingStart(g.start().to_string()));
    }
    for (name, _) in g.sections() {
        if !g.is_defined(name) {
            out.push(Violation::UndefinedSection(name.clone()));
        }
    }

    for p in g.productions() {
        if !(p.probability > 0.0 && p.probability <= 1.0) {
            out.push(Violation::InvalidProbability {
                nonterminal: p.lhs.clone(),
                probability: p.probability,
            });
        }
        for sym in &p.rhs {
            match sym {
                Symbol::Nonterminal(n) if !g.is_defined(n) => {
                    out.push(Violation::UndefinedNonterminal {
                        name: n.clone(),
                        referenced_by: p.lhs.clone(),
                    });
                }
                Symbol::Terminal(t) if t.contains(['\r', '\n']) => {
                    out.push(Violation::LineBreakInTerminal {
                        nonterminal: p.lhs.clone(),
                    });
                }
                Symbol::Numeric { min, max } if *min == 0 || min > max => {
                    out.push(Violation::EmptyNumericRange {
                        nonterminal: p.lhs.clone(),
                    });
                }
                _ => {}
            }
        }
    }

    for name in &names {
        let mass = g.mass(name);
        if mass < 1.0 - MASS_TOLERANCE {
            out.push(Violation::DistributionDeficit {
                nonterminal: name.to_string(),
                deficit: 1.0 - mass,
            });
        } else if mass > 1.0 + MASS_TOLERANCE {
            out.push(Violation::DistributionExcess {
                nonterminal: name.to_string(),
                excess: mass - 1.0,
            });
        }
    }

    let halting = termination_probabilities(g);
    for name in &names {
        if halting[*name] < 1.0 - 1e-6 {
            out.push(Violation::NonTerminating(name.to_string()));
        }
    }

    check_sections(g, &mut out);
    out
}

/// Least fixed point of `q(A) = sum_p P(p) * prod_{B in rhs(p)} q(B)`: the
/// probability that expanding `A` eventually stops. Probabilities are
/// renormalized per nonterminal so a mass deficit is not mistaken for
/// divergence; undefined nonterminals count as halting (both are reported
/// separately).
fn termination_probabilities(g: &Pcfg) -> HashMap<&str, f64> {
    let names = g.nonterminals();
    let mut q: HashMap<&str, f64> = names.iter().map(|n| (*n, 0.0)).collect();
    for _ in 0..100_000 {
        let mut delta: f64 = 0.0;
        for name in &names {
            let mass = g.mass(name);
            if mass <= 0.0 {
                continue;
            }
            let next: f64 = g
                .productions_for(name)
                .map(|p| {
                    p.rhs.iter().fold(p.probability / mass, |acc, s| match s {
                        Symbol::Nonterminal(n) => acc * q.get(n.as_str()).copied().unwrap_or(1.0),
                        _ => acc,
                    })
                })
                .sum();
            delta = delta.max((next - q[name]).abs());
            q.insert(name, next);
        }
        if delta < 1e-12 {
            break;
        }
    }
    q
}

fn check_sections(g: &Pcfg, out: &mut Vec<Violation>) {
    let emits = |name: &str, pred: &dyn Fn(&Symbol) -> bool| {
        g.productions_for(name).any(|p| p.rhs.iter().any(pred))
    };
    let is_output = |s: &Symbol| !matches!(s, Symbol::Nonterminal(_));

    // Output reachable from the start symbol without entering a section.
    if g.section(g.start()).is_none() {
        for name in reachable_outside(g, g.start()) {
            if emits(&name, &is_output) {
                out.push(Violation::OutsideSection { nonterminal: name });
            }
        }
    }
    // Variables under a section that has no field tag.
    for (section, info) in g.sections() {
        if info.field.is_some() {
            continue;
        }
        for name in reachable_outside(g, section) {
            if emits(&name, &|s| matches!(s, Symbol::Variable)) {
                out.push(Violation::UntaggedVariable { nonterminal: name });
            }
        }
    }
}

/// `root` plus every nonterminal reachable from it without passing through
/// another section nonterminal.
fn reachable_outside(g: &Pcfg, root: &str) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![root.to_string()];
    while let Some(name) = stack.pop() {
        if !seen.insert(name.clone()) {
            continue;
        }
        for p in g.productions_for(&name) {
            for s in &p.rhs {
                if let Symbol::Nonterminal(n) = s {
                    if g.section(n).is_none() && !seen.contains(n) {
                        stack.push(n.clone());
                    }
                }
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldId;
    use crate::grammar::{Production, Section, SectionKind};

    fn body_section(name: &str) -> Vec<(String, Section)> {
        vec![(
            name.to_string(),
            Section {
                kind: SectionKind::Body,
                field: Some(FieldId::Body),
            },
        )]
    }

    #[test]
    fn lone_partial_production_reports_deficit() {
        let g = Pcfg::new(
            "X",
            body_section("X"),
            vec![Production::new("X", 0.7, vec![Symbol::Terminal("a".into())])],
        );
        let v = g.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        match &v[0] {
            Violation::DistributionDeficit { nonterminal, deficit } => {
                assert_eq!(nonterminal, "X");
                assert!((deficit - 0.3).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(g.with_epsilon_closure().validate().is_empty());
    }

    #[test]
    fn certain_self_loop_is_non_terminating() {
        let g = Pcfg::new(
            "X",
            body_section("X"),
            vec![Production::new("X", 1.0, vec![Symbol::Nonterminal("X".into())])],
        );
        assert_eq!(g.validate(), vec![Violation::NonTerminating("X".into())]);
    }

    #[test]
    fn supercritical_recursion_is_non_terminating() {
        // X -> X X (0.75) | "a" (0.25) halts with probability 1/3.
        let x = || Symbol::Nonterminal("X".into());
        let g = Pcfg::new(
            "X",
            body_section("X"),
            vec![
                Production::new("X", 0.75, vec![x(), x()]),
                Production::new("X", 0.25, vec![Symbol::Terminal("a".into())]),
            ],
        );
        assert_eq!(g.validate(), vec![Violation::NonTerminating("X".into())]);
        let q = termination_probabilities(&g);
        assert!((q["X"] - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn subcritical_recursion_is_fine() {
        let x = || Symbol::Nonterminal("X".into());
        let g = Pcfg::new(
            "X",
            body_section("X"),
            vec![
                Production::new("X", 0.3, vec![x(), x()]),
                Production::new("X", 0.7, vec![Symbol::Terminal("a".into())]),
            ],
        );
        assert!(g.validate().is_empty());
    }

    #[test]
    fn structural_violations() {
        let g = Pcfg::new(
            "S",
            vec![(
                "H".to_string(),
                Section {
                    kind: SectionKind::Header,
                    field: None,
                },
            )],
            vec![
                Production::new(
                    "S",
                    1.0,
                    vec![
                        Symbol::Terminal("x\r\n".into()),
                        Symbol::Nonterminal("H".into()),
                        Symbol::Nonterminal("Nope".into()),
                    ],
                ),
                Production::new("H", 0.5, vec![Symbol::Variable]),
                Production::new("H", 0.5, vec![Symbol::Numeric { min: 0, max: 3 }]),
            ],
        );
        let v = g.validate();
        assert!(v.contains(&Violation::LineBreakInTerminal { nonterminal: "S".into() }));
        assert!(v.contains(&Violation::UndefinedNonterminal {
            name: "Nope".into(),
            referenced_by: "S".into()
        }));
        assert!(v.contains(&Violation::EmptyNumericRange { nonterminal: "H".into() }));
        assert!(v.contains(&Violation::OutsideSection { nonterminal: "S".into() }));
        assert!(v.contains(&Violation::UntaggedVariable { nonterminal: "H".into() }));
    }

    #[test]
    fn bad_probabilities() {
        let g = Pcfg::new(
            "X",
            body_section("X"),
            vec![
                Production::new("X", 0.0, vec![]),
                Production::new("X", 1.5, vec![]),
            ],
        );
        let v = g.validate();
        assert_eq!(
            v.iter()
                .filter(|x| matches!(x, Violation::InvalidProbability { .. }))
                .count(),
            2
        );
        assert!(v.iter().any(|x| matches!(x, Violation::DistributionExcess { .. })));
        assert!(Pcfg::new("Q", vec![], vec![])
            .validate()
            .contains(&Violation::MissingStart("Q".into())));
    }
}
