//! The test stub: the host a scanner is pointed at.
//!
//! In Phase 1 every request gets a freshly sampled, freshly tokenized
//! response that is recorded before the first byte goes out. In Phase 2 every
//! request gets one stored response with one token swapped for a payload.
//! Request content never influences the answer.

use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::grammar::{Pcfg, Sampler};
use crate::ledger::{derive_seed, now_ms, CraftedResponse, Ledger, RequestLogEntry, Token};
use crate::message::HttpMessage;
pub use crate::message::{render_head, render_http};
use crate::payload::Payload;

const MAX_HEAD_BYTES: usize = 64 * 1024;
const MAX_DRAIN_BYTES: usize = 1 << 20;
const READ_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone)]
pub enum StubMode {
    Phase1 {
        grammar: Arc<Pcfg>,
        seed: u64,
    },
    Phase2 {
        response_id: String,
        target_token: Token,
        payload: Payload,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum StubError {
    #[error("cannot bind stub: {0}")]
    BindFailure(#[source] io::Error),
    #[error("invalid stub mode: {0}")]
    InvalidMode(String),
}

/// Seed of the `index`-th connection under a Phase-1 master seed.
pub fn connection_seed(master: u64, index: u64) -> u64 {
    derive_seed(master, &format!("conn-{index}"))
}

/// Samples and tokenizes the response for one Phase-1 connection.
pub fn craft_for_connection(
    grammar: &Pcfg,
    campaign_id: &str,
    master: u64,
    index: u64,
) -> Result<CraftedResponse, crate::grammar::SampleError> {
    let seed = connection_seed(master, index);
    let template = Sampler::new(grammar).sample(seed)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(1);
    Ok(CraftedResponse::from_template(&template, campaign_id, &mut rng))
}

enum Prepared {
    Phase1 { grammar: Arc<Pcfg>, seed: u64 },
    Phase2 { response_id: String, message: HttpMessage, label: String },
}

struct Shared {
    ledger: Arc<Ledger>,
    prepared: Prepared,
    next_conn: AtomicU64,
    accepted: AtomicU64,
    stop: AtomicBool,
}

/// A running stub. Dropping the handle shuts it down.
pub struct StubHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    accept: Option<JoinHandle<()>>,
}

impl StubHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// `http://addr/` reachable from this host.
    pub fn url(&self) -> String {
        let mut a = self.addr;
        if a.ip().is_unspecified() {
            a.set_ip([127, 0, 0, 1].into());
        }
        format!("http://{a}/")
    }

    /// Number of requests answered (or being answered) so far.
    pub fn connections(&self) -> u64 {
        self.shared.next_conn.load(Ordering::SeqCst)
    }

    /// Number of TCP connections accepted so far, including ones that never
    /// sent a request.
    pub fn accepted(&self) -> u64 {
        self.shared.accepted.load(Ordering::SeqCst)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        let mut wake = self.addr;
        if wake.ip().is_unspecified() {
            wake.set_ip(if wake.is_ipv4() { [127, 0, 0, 1].into() } else { std::net::Ipv6Addr::LOCALHOST.into() });
        }
        let _ = TcpStream::connect_timeout(&wake, Duration::from_secs(1));
        if let Some(t) = self.accept.take() {
            let _ = t.join();
        }
    }
}

impl Drop for StubHandle {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.stop();
        }
    }
}

/// Binds and starts serving on a background thread.
pub fn serve(
    bind: impl ToSocketAddrs,
    mode: StubMode,
    ledger: Arc<Ledger>,
) -> Result<StubHandle, StubError> {
    let prepared = match mode {
        StubMode::Phase1 { grammar, seed } => Prepared::Phase1 { grammar, seed },
        StubMode::Phase2 {
            response_id,
            target_token,
            payload,
        } => {
            let crafted = ledger
                .response(&response_id)
                .ok_or_else(|| StubError::InvalidMode(format!("unknown response {response_id}")))?;
            if crafted.binding(&target_token).is_none() {
                return Err(StubError::InvalidMode(format!(
                    "token {target_token} is not bound in {response_id}"
                )));
            }
            Prepared::Phase2 {
                message: crafted.message.substitute(target_token.as_str(), &payload.text),
                label: format!("phase2:{}", payload.payload_id),
                response_id,
            }
        }
    };
    let listener = TcpListener::bind(bind).map_err(StubError::BindFailure)?;
    let addr = listener.local_addr().map_err(StubError::BindFailure)?;
    let shared = Arc::new(Shared {
        ledger,
        prepared,
        next_conn: AtomicU64::new(0),
        accepted: AtomicU64::new(0),
        stop: AtomicBool::new(false),
    });
    let accept_shared = Arc::clone(&shared);
    let accept = std::thread::Builder::new()
        .name("stub-accept".into())
        .spawn(move || accept_loop(listener, accept_shared))
        .map_err(StubError::BindFailure)?;
    Ok(StubHandle {
        addr,
        shared,
        accept: Some(accept),
    })
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    let mut workers = Vec::new();
    for conn in listener.incoming() {
        if shared.stop.load(Ordering::SeqCst) {
            break;
        }
        match conn {
            Ok(stream) => {
                shared.accepted.fetch_add(1, Ordering::SeqCst);
                let s = Arc::clone(&shared);
                workers.push(std::thread::spawn(move || {
                    if let Err(e) = handle(stream, &s) {
                        debug!("stub connection: {e}");
                    }
                }));
                workers.retain(|w| !w.is_finished());
            }
            Err(e) => warn!("stub accept: {e}"),
        }
    }
    for w in workers {
        let _ = w.join();
    }
}

struct Request {
    line: String,
    headers: Vec<String>,
    is_head: bool,
}

fn read_request(stream: &mut TcpStream) -> io::Result<Option<Request>> {
    let mut buf = Vec::with_capacity(1024);
    let mut chunk = [0u8; 4096];
    let head_end = loop {
        if let Some(i) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
            break i + 4;
        }
        if buf.len() > MAX_HEAD_BYTES {
            break buf.len();
        }
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            if buf.is_empty() {
                return Ok(None);
            }
            break buf.len();
        }
        buf.extend_from_slice(&chunk[..n]);
    };

    let head = &buf[..head_end];
    let text = String::from_utf8_lossy(head);
    let mut lines = text.split("\r\n");
    let line = lines.next().unwrap_or_default().to_string();
    let headers: Vec<String> = lines.take_while(|l| !l.is_empty()).map(str::to_string).collect();

    let mut parsed_headers = [httparse::EMPTY_HEADER; 64];
    let mut req = httparse::Request::new(&mut parsed_headers);
    let (is_head, body_len) = match req.parse(head) {
        Ok(_) => {
            let len = req
                .headers
                .iter()
                .find(|h| h.name.eq_ignore_ascii_case("content-length"))
                .and_then(|h| std::str::from_utf8(h.value).ok()?.trim().parse::<usize>().ok())
                .unwrap_or(0);
            (req.method == Some("HEAD"), len)
        }
        Err(_) => (line.starts_with("HEAD "), 0),
    };

    // Drain and discard the request body.
    let mut remaining = body_len.min(MAX_DRAIN_BYTES).saturating_sub(buf.len() - head_end);
    while remaining > 0 {
        let n = stream.read(&mut chunk[..remaining.min(4096)])?;
        if n == 0 {
            break;
        }
        remaining -= n;
    }
    Ok(Some(Request {
        line,
        headers,
        is_head,
    }))
}

fn handle(mut stream: TcpStream, shared: &Shared) -> io::Result<()> {
    stream.set_read_timeout(Some(READ_TIMEOUT))?;
    let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
    let Some(req) = read_request(&mut stream)? else {
        return Ok(());
    };
    if shared.stop.load(Ordering::SeqCst) {
        return Ok(());
    }
    let (response_id, message, mode) = match &shared.prepared {
        Prepared::Phase1 { grammar, seed } => {
            let index = shared.next_conn.fetch_add(1, Ordering::SeqCst);
            let crafted = craft_for_connection(grammar, shared.ledger.campaign_id(), *seed, index)
                .map_err(io::Error::other)?;
            let message = crafted.message.clone();
            // Never serve a tokenized response the ledger does not know about.
            let id = shared.ledger.record_response(crafted).map_err(io::Error::other)?;
            (id, message, "phase1".to_string())
        }
        Prepared::Phase2 {
            response_id,
            message,
            label,
        } => {
            shared.next_conn.fetch_add(1, Ordering::SeqCst);
            (response_id.clone(), message.clone(), label.clone())
        }
    };
    let wire = if req.is_head {
        render_head(&message)
    } else {
        render_http(&message)
    };
    stream.write_all(&wire)?;
    stream.flush()?;
    let _ = stream.shutdown(Shutdown::Write);

    shared
        .ledger
        .log_request(&RequestLogEntry {
            timestamp_ms: now_ms(),
            peer,
            request_line: req.line,
            headers: req.headers,
            response_id,
            mode,
        })
        .map_err(io::Error::other)
}
