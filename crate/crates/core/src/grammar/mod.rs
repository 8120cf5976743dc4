//! Probabilistic context-free grammar for HTTP response templates.
//!
//! A [`Pcfg`] is a set of weighted productions over terminals, nonterminals,
//! fresh variables and bounded positive integers. Some nonterminals are
//! declared as *sections*: the yield of a section becomes one part of the
//! response (a status-line piece, one header line, or body bytes) and every
//! variable derived inside it is tagged with the section's [`FieldId`].

mod builtin;
mod sample;
mod text;
mod validate;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::field::FieldId;

pub use builtin::{builtin_grammar, BUILTIN_GRAMMAR_TEXT};
pub use sample::{
    sample_template, Part, PlaceholderId, ResponseTemplate, SampleError, Sampler, Segment,
    DEFAULT_MAX_EXPANSIONS,
};
pub use text::ParseError;
pub use validate::Violation;

/// Tolerance used for every probability-mass comparison.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Right-hand-side symbol of a production.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Symbol {
    Terminal(String),
    Nonterminal(String),
    /// A fresh placeholder, later bound to a token.
    Variable,
    /// A uniformly sampled integer in `min..=max` (both positive).
    Numeric { min: u64, max: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Production {
    pub lhs: String,
    pub rhs: Vec<Symbol>,
    pub probability: f64,
    /// Added by [`Pcfg::with_epsilon_closure`]; never exported.
    pub implicit: bool,
    /// `#` comment lines attached in the text form.
    pub comments: Vec<String>,
}

impl Production {
    pub fn new(lhs: impl Into<String>, probability: f64, rhs: Vec<Symbol>) -> Self {
        Production {
            lhs: lhs.into(),
            rhs,
            probability,
            implicit: false,
            comments: Vec::new(),
        }
    }

    pub fn is_epsilon(&self) -> bool {
        self.rhs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectionKind {
    Status,
    Header,
    Body,
}

impl SectionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SectionKind::Status => "status",
            SectionKind::Header => "header",
            SectionKind::Body => "body",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Section {
    pub kind: SectionKind,
    pub field: Option<FieldId>,
}

/// An immutable PCFG with a per-nonterminal production index.
#[derive(Debug, Clone)]
pub struct Pcfg {
    start: String,
    sections: Vec<(String, Section)>,
    productions: Vec<Production>,
    preamble: Vec<String>,
    by_lhs: HashMap<String, Vec<usize>>,
}

impl Pcfg {
    pub fn new(
        start: impl Into<String>,
        sections: Vec<(String, Section)>,
        productions: Vec<Production>,
    ) -> Self {
        Self::with_preamble(start, sections, productions, Vec::new())
    }

    pub(crate) fn with_preamble(
        start: impl Into<String>,
        sections: Vec<(String, Section)>,
        productions: Vec<Production>,
        preamble: Vec<String>,
    ) -> Self {
        let mut by_lhs: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, p) in productions.iter().enumerate() {
            by_lhs.entry(p.lhs.clone()).or_default().push(i);
        }
        Pcfg {
            start: start.into(),
            sections,
            productions,
            preamble,
            by_lhs,
        }
    }

    pub fn start(&self) -> &str {
        &self.start
    }

    pub fn productions(&self) -> &[Production] {
        &self.productions
    }

    pub fn sections(&self) -> &[(String, Section)] {
        &self.sections
    }

    pub fn section(&self, nonterminal: &str) -> Option<Section> {
        self.sections
            .iter()
            .find(|(name, _)| name == nonterminal)
            .map(|(_, s)| *s)
    }

    /// Nonterminals that have at least one production, in first-definition order.
    pub fn nonterminals(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for p in &self.productions {
            if !seen.contains(&p.lhs.as_str()) {
                seen.push(p.lhs.as_str());
            }
        }
        seen
    }

    pub fn productions_for<'a>(&'a self, lhs: &str) -> impl Iterator<Item = &'a Production> + 'a {
        self.by_lhs
            .get(lhs)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
            .iter()
            .map(move |&i| &self.productions[i])
    }

    pub fn is_defined(&self, nonterminal: &str) -> bool {
        self.by_lhs.contains_key(nonterminal)
    }

    /// Sum of production probabilities for one nonterminal.
    pub fn mass(&self, lhs: &str) -> f64 {
        self.productions_for(lhs).map(|p| p.probability).sum()
    }

    /// Adds an implicit empty production to every nonterminal whose listed
    /// mass falls short of 1, carrying exactly the deficit.
    pub fn with_epsilon_closure(self) -> Pcfg {
        let Pcfg {
            start,
            sections,
            mut productions,
            preamble,
            ..
        } = self;
        productions.retain(|p| !p.implicit);
        let mut mass: HashMap<String, f64> = HashMap::new();
        let mut remaining: HashMap<String, usize> = HashMap::new();
        for p in &productions {
            *mass.entry(p.lhs.clone()).or_default() += p.probability;
            *remaining.entry(p.lhs.clone()).or_default() += 1;
        }
        let mut closed = Vec::with_capacity(productions.len() + mass.len());
        // Each implicit production goes right after the last explicit one of its lhs.
        for p in productions {
            let lhs = p.lhs.clone();
            closed.push(p);
            let left = remaining.get_mut(&lhs).expect("counted above");
            *left -= 1;
            if *left == 0 {
                let deficit = 1.0 - mass[&lhs];
                if deficit > MASS_TOLERANCE {
                    closed.push(Production {
                        lhs,
                        rhs: Vec::new(),
                        probability: deficit,
                        implicit: true,
                        comments: Vec::new(),
                    });
                }
            }
        }
        Pcfg::with_preamble(start, sections, closed, preamble)
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate::validate(self)
    }

    pub fn from_text(text: &str) -> Result<Pcfg, ParseError> {
        text::parse(text)
    }

    /// Canonical text form; implicit productions are omitted.
    pub fn to_text(&self) -> String {
        text::export(self)
    }

    pub(crate) fn preamble(&self) -> &[String] {
        &self.preamble
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Terminal(s) => f.write_str(&text::quote(s)),
            Symbol::Nonterminal(n) => f.write_str(n),
            Symbol::Variable => f.write_str("$t"),
            Symbol::Numeric { min, max } => write!(f, "#{min}..{max}"),
        }
    }
}
