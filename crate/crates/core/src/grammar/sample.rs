use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{Pcfg, SectionKind, Symbol};
use crate::field::FieldId;
use crate::message::HttpMessage;

pub const DEFAULT_MAX_EXPANSIONS: usize = 10_000;

/// Identifier of a variable occurrence, unique within one template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlaceholderId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Part {
    Literal(String),
    Placeholder { id: PlaceholderId, field: FieldId },
}

/// The yield of one section nonterminal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SectionKind,
    pub field: Option<FieldId>,
    pub parts: Vec<Part>,
}

impl Segment {
    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    fn fill(&self, fill: &mut impl FnMut(PlaceholderId, FieldId) -> String) -> String {
        let mut s = String::new();
        for part in &self.parts {
            match part {
                Part::Literal(l) => s.push_str(l),
                Part::Placeholder { id, field } => s.push_str(&fill(*id, *field)),
            }
        }
        s
    }
}

/// An HTTP response with unbound variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseTemplate {
    pub seed: u64,
    pub segments: Vec<Segment>,
}

impl ResponseTemplate {
    pub fn placeholders(&self) -> impl Iterator<Item = (PlaceholderId, FieldId)> + '_ {
        self.segments.iter().flat_map(|s| &s.parts).filter_map(|p| match p {
            Part::Placeholder { id, field } => Some((*id, *field)),
            Part::Literal(_) => None,
        })
    }

    /// Builds the message: status segments joined by one space, one header
    /// line per non-empty header segment, body segments concatenated.
    pub fn instantiate(&self, mut fill: impl FnMut(PlaceholderId, FieldId) -> String) -> HttpMessage {
        let mut status = Vec::new();
        let mut headers = Vec::new();
        let mut body = String::new();
        for seg in &self.segments {
            match seg.kind {
                SectionKind::Status => status.push(seg.fill(&mut fill)),
                SectionKind::Header if !seg.is_empty() => headers.push(seg.fill(&mut fill)),
                SectionKind::Header => {}
                SectionKind::Body => body.push_str(&seg.fill(&mut fill)),
            }
        }
        HttpMessage {
            status_line: status.join(" "),
            headers,
            body: body.into_bytes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SampleError {
    #[error("derivation exceeded {limit} expansions")]
    DepthExceeded { limit: usize },
    #[error("nonterminal {0} has no productions")]
    UndefinedNonterminal(String),
    #[error("{0} produced output outside any section")]
    OutsideSection(String),
    #[error("{0} produced a variable in a section without a field")]
    UntaggedVariable(String),
}

/// Seeded leftmost-derivation sampler. RNG: ChaCha20 seeded from a `u64`.
#[derive(Debug, Clone, Copy)]
pub struct Sampler<'g> {
    grammar: &'g Pcfg,
    max_expansions: usize,
}

pub fn sample_template(grammar: &Pcfg, seed: u64) -> Result<ResponseTemplate, SampleError> {
    Sampler::new(grammar).sample(seed)
}

enum Work<'g> {
    Sym(&'g Symbol, &'g str),
    Expand(&'g str),
    Close,
}

impl<'g> Sampler<'g> {
    pub fn new(grammar: &'g Pcfg) -> Self {
        Sampler {
            grammar,
            max_expansions: DEFAULT_MAX_EXPANSIONS,
        }
    }

    pub fn max_expansions(mut self, limit: usize) -> Self {
        self.max_expansions = limit;
        self
    }

    pub fn sample(&self, seed: u64) -> Result<ResponseTemplate, SampleError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let g = self.grammar;
        let mut segments: Vec<Segment> = Vec::new();
        let mut open: Vec<usize> = Vec::new();
        let mut stack = vec![Work::Expand(g.start())];
        let mut expansions = 0usize;
        let mut next_id = 0u32;

        while let Some(work) = stack.pop() {
            match work {
                Work::Close => {
                    open.pop();
                }
                Work::Expand(name) => {
                    expansions += 1;
                    if expansions > self.max_expansions {
                        return Err(SampleError::DepthExceeded {
                            limit: self.max_expansions,
                        });
                    }
                    let prod = self.choose(name, &mut rng)?;
                    if let Some(section) = g.section(name) {
                        segments.push(Segment {
                            kind: section.kind,
                            field: section.field,
                            parts: Vec::new(),
                        });
                        open.push(segments.len() - 1);
                        stack.push(Work::Close);
                    }
                    for sym in prod.rhs.iter().rev() {
                        stack.push(Work::Sym(sym, &prod.lhs));
                    }
                }
                Work::Sym(Symbol::Nonterminal(n), _) => stack.push(Work::Expand(n)),
                Work::Sym(sym, lhs) => {
                    let Some(&seg_idx) = open.last() else {
                        return Err(SampleError::OutsideSection(lhs.to_string()));
                    };
                    let seg = &mut segments[seg_idx];
                    match sym {
                        Symbol::Terminal(t) => push_literal(&mut seg.parts, t),
                        Symbol::Numeric { min, max } => {
                            let n = rng.random_range(*min..=*max);
                            push_literal(&mut seg.parts, &n.to_string());
                        }
                        Symbol::Variable => {
                            let field = seg
                                .field
                                .ok_or_else(|| SampleError::UntaggedVariable(lhs.to_string()))?;
                            seg.parts.push(Part::Placeholder {
                                id: PlaceholderId(next_id),
                                field,
                            });
                            next_id += 1;
                        }
                        Symbol::Nonterminal(_) => unreachable!("handled above"),
                    }
                }
            }
        }
        Ok(ResponseTemplate { seed, segments })
    }

    fn choose(&self, name: &str, rng: &mut ChaCha20Rng) -> Result<&'g super::Production, SampleError> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = None;
        for p in self.grammar.productions_for(name) {
            acc += p.probability;
            last = Some(p);
            if u < acc {
                return Ok(p);
            }
        }
        last.ok_or_else(|| SampleError::UndefinedNonterminal(name.to_string()))
    }
}

fn push_literal(parts: &mut Vec<Part>, s: &str) {
    if s.is_empty() {
        return;
    }
    if let Some(Part::Literal(prev)) = parts.last_mut() {
        prev.push_str(s);
    } else {
        parts.push(Part::Literal(s.to_string()));
    }
}
