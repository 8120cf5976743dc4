//! Rendered responses checked against an independent HTTP/1.1 parser.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use revstrike::grammar::{builtin_grammar, Sampler};
use revstrike::ledger::Token;
use revstrike::message::{render_head, render_http, HttpMessage};
use revstrike::payload::builtin_payloads;

struct Parsed {
    version: u8,
    code: u16,
    /// Raw phrase from the status line; httparse's own reason is checked
    /// against it whenever it is ASCII.
    reason: String,
    headers: Vec<(String, Vec<u8>)>,
    body: Vec<u8>,
}

fn parse(wire: &[u8]) -> Parsed {
    let mut headers = [httparse::EMPTY_HEADER; 64];
    let mut resp = httparse::Response::new(&mut headers);
    let n = match resp.parse(wire).expect("parses") {
        httparse::Status::Complete(n) => n,
        httparse::Status::Partial => panic!("incomplete head"),
    };
    let headers: Vec<(String, Vec<u8>)> = resp
        .headers
        .iter()
        .map(|h| (h.name.to_string(), h.value.to_vec()))
        .collect();
    let len: usize = headers
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case("content-length"))
        .map(|(_, v)| std::str::from_utf8(v).unwrap().parse().unwrap())
        .expect("content-length");
    assert_eq!(wire.len() - n, len, "body length matches Content-Length");
    let line_end = wire.windows(2).position(|w| w == b"\r\n").unwrap();
    let line = std::str::from_utf8(&wire[..line_end]).unwrap();
    let reason = line.splitn(3, ' ').nth(2).unwrap_or("").to_string();
    if reason.is_ascii() {
        assert_eq!(resp.reason.unwrap(), reason);
    }
    Parsed {
        version: resp.version.unwrap(),
        code: resp.code.unwrap(),
        reason,
        headers,
        body: wire[n..].to_vec(),
    }
}

fn assert_round_trip(msg: &HttpMessage) {
    let p = parse(&render_http(msg));
    let mut status = msg.status_line.splitn(3, ' ');
    let version = status.next().unwrap();
    assert_eq!(format!("HTTP/1.{}", p.version), version);
    assert_eq!(p.code.to_string(), status.next().unwrap());
    assert_eq!(p.reason, status.next().unwrap_or(""));
    let expected: Vec<(String, Vec<u8>)> = msg
        .header_fields()
        .map(|(n, v)| (n.to_string(), v.as_bytes().to_vec()))
        .collect();
    assert_eq!(&p.headers[..expected.len()], &expected[..]);
    assert_eq!(p.body, msg.body);
}

/// Fill values: tokens, payloads, or random printable text with NBSP and
/// non-ASCII characters, never CR or LF, never leading/trailing whitespace.
fn fuzz_value(rng: &mut ChaCha20Rng) -> String {
    match rng.random_range(0..4) {
        0 => Token::generate(rng).to_string(),
        1 => builtin_payloads()[rng.random_range(0..3)].text.clone(),
        _ => {
            let len = rng.random_range(1..40);
            let mut s: String = (0..len)
                .map(|_| match rng.random_range(0..10) {
                    0 => '\u{a0}',
                    1 => 'é',
                    2 => ' ',
                    _ => rng.random_range('!'..='~'),
                })
                .collect();
            s = s.trim_matches([' ', '\t']).to_string();
            if s.is_empty() {
                s.push('x');
            }
            s
        }
    }
}

#[test]
fn thousand_fuzzed_responses_round_trip() {
    let g = builtin_grammar();
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    for seed in 0..1000u64 {
        let t = Sampler::new(&g).sample(seed).unwrap();
        let msg = t.instantiate(|_, _| fuzz_value(&mut rng));
        assert_round_trip(&msg);
    }
}

#[test]
fn head_rendering_omits_the_body_only() {
    let msg = HttpMessage {
        status_line: "HTTP/1.1 200 OK".into(),
        headers: vec!["Server: x".into()],
        body: b"hello".to_vec(),
    };
    let head = render_head(&msg);
    let full = render_http(&msg);
    assert_eq!(&full[..head.len()], &head[..]);
    assert_eq!(&full[head.len()..], b"hello");
    assert!(String::from_utf8(head).unwrap().contains("Content-Length: 5\r\n"));
}

#[test]
fn exact_bytes_of_a_minimal_response() {
    let msg = HttpMessage {
        status_line: "HTTP/1.1 200 OK".into(),
        headers: vec!["Server: nginx/1.17.0".into()],
        body: Vec::new(),
    };
    assert_eq!(
        render_http(&msg),
        b"HTTP/1.1 200 OK\r\nServer: nginx/1.17.0\r\nContent-Length: 0\r\nConnection: close\r\n\r\n"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Swapping a token for any builtin payload keeps the framing valid.
    #[test]
    fn payload_substitution_preserves_framing(seed in any::<u64>(), which in 0usize..3) {
        let g = builtin_grammar();
        let t = Sampler::new(&g).sample(seed).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let tokens: Vec<Token> = t.placeholders().map(|_| Token::generate(&mut rng)).collect();
        let mut it = tokens.iter();
        let msg = t.instantiate(|_, _| it.next().unwrap().to_string());
        assert_round_trip(&msg);
        let payload = &builtin_payloads()[which];
        for tok in &tokens {
            assert_round_trip(&msg.substitute(tok.as_str(), &payload.text));
        }
    }
}
