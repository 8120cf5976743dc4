use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;

use revstrike::client::{get, parse_response};
use revstrike::grammar::builtin_grammar;
use revstrike::ledger::{audit, uuid_candidates, Ledger, Token};
use revstrike::payload::builtin_payloads;
use revstrike::stub::{craft_for_connection, serve, StubError, StubMode};
use std::time::Duration;

const T: Duration = Duration::from_secs(5);

fn phase1(dir: &std::path::Path, seed: u64) -> (Arc<Ledger>, revstrike::stub::StubHandle) {
    let ledger = Arc::new(Ledger::create(dir, "stub-test", seed).unwrap());
    let mode = StubMode::Phase1 {
        grammar: Arc::new(builtin_grammar()),
        seed,
    };
    let h = serve("127.0.0.1:0", mode, Arc::clone(&ledger)).unwrap();
    (ledger, h)
}

fn raw_request(addr: std::net::SocketAddr, request: &[u8]) -> Vec<u8> {
    let mut s = TcpStream::connect(addr).unwrap();
    s.write_all(request).unwrap();
    let mut out = Vec::new();
    s.read_to_end(&mut out).unwrap();
    out
}

#[test]
fn every_served_token_is_already_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let (ledger, stub) = phase1(dir.path(), 5);
    let mut seen = 0;
    for _ in 0..20 {
        let raw = raw_request(stub.local_addr(), b"GET / HTTP/1.1\r\nHost: a\r\n\r\n");
        // Checked the moment the bytes arrive: the record must predate them.
        for (_, candidate) in uuid_candidates(&raw) {
            let token = Token::parse(&candidate).unwrap();
            assert!(ledger.lookup_by_token(&token).is_some(), "{token} served unrecorded");
            seen += 1;
        }
    }
    assert!(seen > 20);
    stub.shutdown();
    assert_eq!(ledger.responses().len(), 20);
    assert_eq!(ledger.requests().unwrap().len(), 20);
    assert!(audit(dir.path()).unwrap().is_clean());
}

#[test]
fn concurrent_connections_get_the_seeded_response_set() {
    let dir = tempfile::tempdir().unwrap();
    let (ledger, stub) = phase1(dir.path(), 77);
    let url = stub.url();
    let threads: Vec<_> = (0..16)
        .map(|_| {
            let u = url.clone();
            std::thread::spawn(move || get(&u, T).unwrap())
        })
        .collect();
    for t in threads {
        t.join().unwrap();
    }
    stub.shutdown();

    let g = builtin_grammar();
    let served: BTreeSet<Vec<u8>> = ledger.responses().iter().map(|r| r.rendered()).collect();
    let expected: BTreeSet<Vec<u8>> = (0..16)
        .map(|i| craft_for_connection(&g, "stub-test", 77, i).unwrap().rendered())
        .collect();
    assert_eq!(served, expected);
}

#[test]
fn request_content_and_method_do_not_change_the_answer() {
    let dir = tempfile::tempdir().unwrap();
    let ledger = Arc::new(Ledger::create(dir.path(), "p2", 1).unwrap());
    let g = builtin_grammar();
    let crafted = (0..)
        .map(|i| craft_for_connection(&g, "p2", 1, i).unwrap())
        .find(|c| !c.bindings.is_empty())
        .unwrap();
    let token = crafted.bindings[0].token.clone();
    let id = ledger.record_response(crafted).unwrap();
    let payload = builtin_payloads()[0].clone();
    let stub = serve(
        "127.0.0.1:0",
        StubMode::Phase2 {
            response_id: id.clone(),
            target_token: token.clone(),
            payload: payload.clone(),
        },
        Arc::clone(&ledger),
    )
    .unwrap();
    let get1 = raw_request(stub.local_addr(), b"GET / HTTP/1.1\r\nHost: a\r\n\r\n");
    let post = raw_request(
        stub.local_addr(),
        b"POST /x?y=1 HTTP/1.1\r\nHost: b\r\nContent-Length: 5\r\n\r\nhello",
    );
    let head = raw_request(stub.local_addr(), b"HEAD / HTTP/1.1\r\nHost: a\r\n\r\n");
    stub.shutdown();

    assert_eq!(get1, post);
    assert!(get1.starts_with(&head));
    let parsed = parse_response(&get1).unwrap();
    let n = parsed.headers.iter().filter(|(_, v)| v.contains(&payload.text)).count()
        + usize::from(parsed.reason.contains(&payload.text))
        + usize::from(String::from_utf8_lossy(&parsed.body).contains(&payload.text));
    assert_eq!(n, 1, "payload appears exactly where the token was");
    assert!(!String::from_utf8_lossy(&get1).contains(token.as_str()));
    let log = ledger.requests().unwrap();
    assert_eq!(log.len(), 3);
    assert!(log.iter().all(|e| e.response_id == id && e.mode == "phase2:polyglot"));
    assert!(log[1].request_line.starts_with("POST /x?y=1"));
}

#[test]
fn phase2_rejects_unknown_combinations() {
    let dir = tempfile::tempdir().unwrap();
    let ledger = Arc::new(Ledger::create(dir.path(), "p2", 1).unwrap());
    let r = serve(
        "127.0.0.1:0",
        StubMode::Phase2 {
            response_id: "resp-999999".into(),
            target_token: Token::parse("018d54ae-b0d3-4e89-aa32-6f5106e00683").unwrap(),
            payload: builtin_payloads()[0].clone(),
        },
        ledger,
    );
    assert!(matches!(r, Err(StubError::InvalidMode(_))));
}

#[test]
fn bind_failure_and_silent_connections() {
    let dir = tempfile::tempdir().unwrap();
    let (ledger, stub) = phase1(dir.path(), 3);
    let taken = serve(
        stub.local_addr(),
        StubMode::Phase1 {
            grammar: Arc::new(builtin_grammar()),
            seed: 3,
        },
        Arc::clone(&ledger),
    );
    assert!(matches!(taken, Err(StubError::BindFailure(_))));

    drop(TcpStream::connect(stub.local_addr()).unwrap());
    std::thread::sleep(Duration::from_millis(100));
    assert_eq!(stub.accepted(), 1);
    assert_eq!(stub.connections(), 0);
    stub.shutdown();
    assert!(ledger.responses().is_empty());
}
