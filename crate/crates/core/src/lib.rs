//! Black-box XSS testing of network scanning systems.
//!
//! The scanner under test is pointed at a stub that answers with
//! grammar-fuzzed HTTP responses carrying unique tokens (Phase 1). Tokens
//! that resurface in the scanner's report mark tainted flows. Each tainted
//! flow is then replayed with an XSS payload in place of its token
//! (Phase 2), and the resulting report is checked for an executable payload.

pub mod analyzer;
pub mod client;
pub mod field;
pub mod grammar;
pub mod ledger;
pub mod message;
pub mod mock;
pub mod orchestrator;
pub mod payload;
pub mod stub;

pub use field::FieldId;
