use std::sync::OnceLock;

use super::Pcfg;

/// Canonical text of the shipped grammar; [`Pcfg::to_text`] of
/// [`builtin_grammar`] reproduces it byte for byte.
pub const BUILTIN_GRAMMAR_TEXT: &str = include_str!("builtin.pcfg");

/// The shipped response-template grammar, with epsilon closure applied.
pub fn builtin_grammar() -> Pcfg {
    static CACHE: OnceLock<Pcfg> = OnceLock::new();
    CACHE
        .get_or_init(|| {
            Pcfg::from_text(BUILTIN_GRAMMAR_TEXT)
                .expect("embedded grammar parses")
                .with_epsilon_closure()
        })
        .clone()
}
