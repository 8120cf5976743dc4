use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

/// A lowercase hyphenated UUID marking one injectable location.
///
/// Tokens are recognizable (122 random bits) and inert in HTML: the
/// alphabet is `[0-9a-f-]`, so no escaping step can alter them.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Token(String);

pub const TOKEN_LEN: usize = 36;
const HYPHENS: [usize; 4] = [8, 13, 18, 23];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("`{0}` is not a lowercase hyphenated UUID")]
pub struct InvalidToken(pub String);

impl Token {
    /// Version-4 UUID from 16 bytes of `rng`.
    pub fn generate(rng: &mut impl RngCore) -> Token {
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        let id = uuid::Builder::from_random_bytes(bytes).into_uuid();
        Token(id.hyphenated().to_string())
    }

    pub fn parse(s: &str) -> Result<Token, InvalidToken> {
        if has_uuid_shape(s.as_bytes()) && !s.bytes().any(|b| b.is_ascii_uppercase()) {
            Ok(Token(s.to_string()))
        } else {
            Err(InvalidToken(s.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// 8-4-4-4-12 hex digits of either case.
pub(crate) fn has_uuid_shape(b: &[u8]) -> bool {
    b.len() == TOKEN_LEN
        && b.iter().enumerate().all(|(i, c)| {
            if HYPHENS.contains(&i) {
                *c == b'-'
            } else {
                c.is_ascii_hexdigit()
            }
        })
}

/// True when `s` holds none of the characters HTML treats specially.
pub fn is_html_inert(s: &str) -> bool {
    !s.contains(['<', '>', '&', '"', '\'', ' '])
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for Token {
    type Error = InvalidToken;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Token::parse(&s)
    }
}

impl From<Token> for String {
    fn from(t: Token) -> String {
        t.0
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}
