//! The closed set of response fields a token can be planted in.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the 14 injectable locations of a crafted HTTP response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FieldId {
    StatusMessage,
    Server,
    XPoweredBy,
    Location,
    SetCookie,
    XContentTypeOptions,
    XAspNetVersion,
    XAspNetMvcVersion,
    XVarnish,
    StrictTransportSecurity,
    ContentSecurityPolicy,
    XXssProtection,
    XFrameOptions,
    Body,
}

impl FieldId {
    pub const COUNT: usize = 14;

    pub const ALL: [FieldId; Self::COUNT] = [
        FieldId::StatusMessage,
        FieldId::Server,
        FieldId::XPoweredBy,
        FieldId::Location,
        FieldId::SetCookie,
        FieldId::XContentTypeOptions,
        FieldId::XAspNetVersion,
        FieldId::XAspNetMvcVersion,
        FieldId::XVarnish,
        FieldId::StrictTransportSecurity,
        FieldId::ContentSecurityPolicy,
        FieldId::XXssProtection,
        FieldId::XFrameOptions,
        FieldId::Body,
    ];

    /// Position in [`FieldId::ALL`]; used as the row/column index of field matrices.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FieldId::StatusMessage => "StatusMessage",
            FieldId::Server => "Server",
            FieldId::XPoweredBy => "XPoweredBy",
            FieldId::Location => "Location",
            FieldId::SetCookie => "SetCookie",
            FieldId::XContentTypeOptions => "XContentTypeOptions",
            FieldId::XAspNetVersion => "XAspNetVersion",
            FieldId::XAspNetMvcVersion => "XAspNetMvcVersion",
            FieldId::XVarnish => "XVarnish",
            FieldId::StrictTransportSecurity => "StrictTransportSecurity",
            FieldId::ContentSecurityPolicy => "ContentSecurityPolicy",
            FieldId::XXssProtection => "XXssProtection",
            FieldId::XFrameOptions => "XFrameOptions",
            FieldId::Body => "Body",
        }
    }

    /// The wire header name carrying this field, `None` for the status line and body.
    pub fn header_name(self) -> Option<&'static str> {
        Some(match self {
            FieldId::StatusMessage | FieldId::Body => return None,
            FieldId::Server => "Server",
            FieldId::XPoweredBy => "X-Powered-By",
            FieldId::Location => "Location",
            FieldId::SetCookie => "Set-Cookie",
            FieldId::XContentTypeOptions => "X-Content-Type-Options",
            FieldId::XAspNetVersion => "X-AspNet-Version",
            FieldId::XAspNetMvcVersion => "X-AspNetMvc-Version",
            FieldId::XVarnish => "X-Varnish",
            FieldId::StrictTransportSecurity => "Strict-Transport-Security",
            FieldId::ContentSecurityPolicy => "Content-Security-Policy",
            FieldId::XXssProtection => "X-XSS-Protection",
            FieldId::XFrameOptions => "X-Frame-Options",
        })
    }

    /// Case-insensitive reverse lookup of [`FieldId::header_name`].
    pub fn from_header_name(name: &str) -> Option<FieldId> {
        FieldId::ALL
            .into_iter()
            .find(|f| f.header_name().is_some_and(|h| h.eq_ignore_ascii_case(name)))
    }
}

impl fmt::Display for FieldId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown field `{0}`")]
pub struct UnknownField(pub String);

impl FromStr for FieldId {
    type Err = UnknownField;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FieldId::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| UnknownField(s.to_string()))
    }
}
