//! Line-oriented text form of a [`Pcfg`].
//!
//! ```text
//! # comment lines attach to the next production
//! @start Resp
//! @section Stat status StatusMessage
//! Resp 1 Vers Stat Head Body
//! Succ 0.5 "200 " $t
//! STSA 0.111 "max-age=" #1..31536000
//! ```
//!
//! One production per line: lhs, probability, then the rhs symbols. A line
//! with no rhs is an explicit empty production.

use std::fmt::Write as _;

use super::{Pcfg, Production, Section, SectionKind, Symbol};
use crate::field::FieldId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("grammar line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        message: message.into(),
    }
}

pub(super) fn parse(text: &str) -> Result<Pcfg, ParseError> {
    let mut start = None;
    let mut sections = Vec::new();
    let mut productions: Vec<Production> = Vec::new();
    let mut preamble = Vec::new();
    let mut comments = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            comments.push(line.to_string());
            continue;
        }
        if let Some(rest) = line.strip_prefix('@') {
            if productions.is_empty() {
                preamble.append(&mut comments);
            } else if !comments.is_empty() {
                return Err(err(lineno, "directives must precede productions"));
            }
            let words: Vec<&str> = rest.split_whitespace().collect();
            match words.as_slice() {
                ["start", name] => start = Some(name.to_string()),
                ["section", name, kind, field @ ..] if field.len() <= 1 => {
                    let kind = match *kind {
                        "status" => SectionKind::Status,
                        "header" => SectionKind::Header,
                        "body" => SectionKind::Body,
                        other => return Err(err(lineno, format!("unknown section kind `{other}`"))),
                    };
                    let field = match field.first() {
                        Some(f) => Some(f.parse::<FieldId>().map_err(|e| err(lineno, e.to_string()))?),
                        None => None,
                    };
                    sections.push((name.to_string(), Section { kind, field }));
                }
                _ => return Err(err(lineno, format!("malformed directive `{line}`"))),
            }
            continue;
        }

        let mut symbols = tokenize(line).map_err(|m| err(lineno, m))?;
        if symbols.len() < 2 {
            return Err(err(lineno, "expected `<lhs> <probability> <symbols...>`"));
        }
        let rhs_words = symbols.split_off(2);
        let lhs = match &symbols[0] {
            Word::Bare(w) if is_ident(w) => w.clone(),
            _ => return Err(err(lineno, "lhs must be an identifier")),
        };
        let probability: f64 = match &symbols[1] {
            Word::Bare(w) => w
                .parse()
                .map_err(|_| err(lineno, format!("bad probability `{w}`")))?,
            Word::Quoted(_) => return Err(err(lineno, "probability must not be quoted")),
        };
        let rhs = rhs_words
            .into_iter()
            .map(|w| symbol(w).map_err(|m| err(lineno, m)))
            .collect::<Result<Vec<_>, _>>()?;
        let mut p = Production::new(lhs, probability, rhs);
        p.comments = std::mem::take(&mut comments);
        productions.push(p);
    }

    let start = start
        .or_else(|| productions.first().map(|p| p.lhs.clone()))
        .ok_or_else(|| err(0, "empty grammar"))?;
    Ok(Pcfg::with_preamble(start, sections, productions, preamble))
}

pub(super) fn export(g: &Pcfg) -> String {
    let mut out = String::new();
    for c in g.preamble() {
        out.push_str(c);
        out.push('\n');
    }
    let _ = writeln!(out, "@start {}", g.start());
    for (name, s) in g.sections() {
        let _ = write!(out, "@section {} {}", name, s.kind.as_str());
        if let Some(f) = s.field {
            let _ = write!(out, " {f}");
        }
        out.push('\n');
    }
    for p in g.productions().iter().filter(|p| !p.implicit) {
        if !p.comments.is_empty() {
            out.push('\n');
            for c in &p.comments {
                out.push_str(c);
                out.push('\n');
            }
        }
        let _ = write!(out, "{} {}", p.lhs, p.probability);
        for s in &p.rhs {
            let _ = write!(out, " {s}");
        }
        out.push('\n');
    }
    out
}

pub(super) fn quote(s: &str) -> String {
    let mut q = String::with_capacity(s.len() + 2);
    q.push('"');
    for c in s.chars() {
        match c {
            '"' => q.push_str("\\\""),
            '\\' => q.push_str("\\\\"),
            c if c.is_control() || c == '\u{a0}' => {
                let _ = write!(q, "\\u{{{:x}}}", c as u32);
            }
            c => q.push(c),
        }
    }
    q.push('"');
    q
}

enum Word {
    Bare(String),
    Quoted(String),
}

fn is_ident(w: &str) -> bool {
    let mut chars = w.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn symbol(w: Word) -> Result<Symbol, String> {
    match w {
        Word::Quoted(s) => Ok(Symbol::Terminal(s)),
        Word::Bare(b) if b == "$t" => Ok(Symbol::Variable),
        Word::Bare(b) if b.starts_with('#') => {
            let (min, max) = b[1..]
                .split_once("..")
                .ok_or_else(|| format!("numeric range `{b}` must be `#min..max`"))?;
            let parse = |v: &str| v.parse::<u64>().map_err(|_| format!("bad bound in `{b}`"));
            Ok(Symbol::Numeric {
                min: parse(min)?,
                max: parse(max)?,
            })
        }
        Word::Bare(b) if is_ident(&b) => Ok(Symbol::Nonterminal(b)),
        Word::Bare(b) => Err(format!("unrecognized symbol `{b}`")),
    }
}

fn tokenize(line: &str) -> Result<Vec<Word>, String> {
    let mut words = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if c == '"' {
            chars.next();
            let mut s = String::new();
            loop {
                match chars.next() {
                    None => return Err("unterminated string".into()),
                    Some('"') => break,
                    Some('\\') => match chars.next() {
                        Some('"') => s.push('"'),
                        Some('\\') => s.push('\\'),
                        Some('u') => {
                            if chars.next() != Some('{') {
                                return Err("expected `{` after \\u".into());
                            }
                            let hex: String = chars.by_ref().take_while(|&c| c != '}').collect();
                            let code = u32::from_str_radix(&hex, 16)
                                .ok()
                                .and_then(char::from_u32)
                                .ok_or_else(|| format!("bad escape \\u{{{hex}}}"))?;
                            s.push(code);
                        }
                        other => return Err(format!("unknown escape {other:?}")),
                    },
                    Some(c) => s.push(c),
                }
            }
            words.push(Word::Quoted(s));
        } else {
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_whitespace() {
                    break;
                }
                s.push(c);
                chars.next();
            }
            words.push(Word::Bare(s));
        }
    }
    Ok(words)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_symbol_kinds() {
        let g = parse(
            "@start S\n@section S body Body\nS 0.25 \"a \\\"q\\\" \\u{a0}\" $t #1..9 T\nT 1\n",
        )
        .unwrap();
        let p = &g.productions()[0];
        assert_eq!(p.probability, 0.25);
        assert_eq!(
            p.rhs,
            vec![
                Symbol::Terminal("a \"q\" \u{a0}".into()),
                Symbol::Variable,
                Symbol::Numeric { min: 1, max: 9 },
                Symbol::Nonterminal("T".into()),
            ]
        );
        assert!(g.productions()[1].is_epsilon());
        assert_eq!(g.section("S").unwrap().field, Some(FieldId::Body));
    }

    #[test]
    fn export_round_trips() {
        let src = "# top\n@start S\n@section S body Body\n\n# why\nS 0.25 \"a\\\\b\" $t\nS 0.75\n";
        let g = parse(src).unwrap();
        assert_eq!(export(&g), src);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse("@start S\nS zero \"a\"\n").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(parse("S 1 \"open\n").is_err());
        assert!(parse("@section S sideways\n").is_err());
        assert!(parse("S 1 #5\n").is_err());
        assert!(parse("").is_err());
    }
}
