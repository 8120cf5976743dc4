//! Hash-chained newline-delimited JSON files.
//!
//! Each line is `{"record":<json>,"digest":"<hex>"}` where the digest is
//! `sha256(previous digest hex || record bytes as written)`. The first
//! record chains from the empty string. Any edit, deletion or reordering of
//! a historical line breaks the chain from that line on.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

#[derive(Deserialize)]
struct Envelope<'a> {
    #[serde(borrow)]
    record: &'a RawValue,
    digest: String,
}

pub(crate) fn chain_digest(prev: &str, record: &str) -> String {
    let mut h = Sha256::new();
    h.update(prev.as_bytes());
    h.update(record.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug)]
pub(crate) struct Journal {
    path: PathBuf,
    file: File,
    last_digest: String,
    known_len: u64,
}

impl Journal {
    pub fn open(path: &Path) -> io::Result<Journal> {
        let file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)?;
        let mut j = Journal {
            path: path.to_path_buf(),
            file,
            last_digest: String::new(),
            known_len: 0,
        };
        j.resync()?;
        Ok(j)
    }

    /// Re-reads the chain tail; needed when another process appended.
    fn resync(&mut self) -> io::Result<()> {
        let scan = scan_file(&self.path)?;
        self.last_digest = scan.last_digest;
        self.known_len = self.file.metadata()?.len();
        Ok(())
    }

    pub fn append<T: Serialize>(&mut self, record: &T) -> io::Result<()> {
        let body = serde_json::to_string(record).map_err(io::Error::other)?;
        self.file.lock()?;
        let result = (|| {
            let mut len = self.file.metadata()?.len();
            if len > 0 && !ends_with_newline(&mut self.file, len)? {
                // Drop the uncommitted tail left by a crashed writer.
                len = committed_len(&mut self.file, len)?;
                self.file.set_len(len)?;
            }
            if len != self.known_len {
                self.resync()?;
            }
            let mut line = String::with_capacity(body.len() + 96);
            let digest = chain_digest(&self.last_digest, &body);
            line.push_str("{\"record\":");
            line.push_str(&body);
            line.push_str(",\"digest\":\"");
            line.push_str(&digest);
            line.push_str("\"}\n");
            self.file.write_all(line.as_bytes())?;
            self.file.flush()?;
            self.last_digest = digest;
            self.known_len = len + line.len() as u64;
            Ok(())
        })();
        let _ = self.file.unlock();
        result
    }
}

fn ends_with_newline(file: &mut File, len: u64) -> io::Result<bool> {
    let mut last = [0u8; 1];
    let mut reader = &*file;
    reader.seek(SeekFrom::Start(len - 1))?;
    reader.read_exact(&mut last)?;
    Ok(last[0] == b'\n')
}

/// Length of the prefix ending at the last newline.
fn committed_len(file: &mut File, len: u64) -> io::Result<u64> {
    let mut reader = &*file;
    let mut end = len;
    let mut buf = [0u8; 4096];
    while end > 0 {
        let start = end.saturating_sub(buf.len() as u64);
        let chunk = &mut buf[..(end - start) as usize];
        reader.seek(SeekFrom::Start(start))?;
        reader.read_exact(chunk)?;
        if let Some(i) = chunk.iter().rposition(|&b| b == b'\n') {
            return Ok(start + i as u64 + 1);
        }
        end = start;
    }
    Ok(0)
}

/// Result of reading a journal from disk.
#[derive(Debug, Default)]
pub(crate) struct Scan {
    /// `(1-based line number, raw record json)` for every intact line.
    pub records: Vec<(usize, String)>,
    /// Lines whose digest does not match the chain.
    pub broken: Vec<usize>,
    /// Lines that are not valid envelopes.
    pub malformed: Vec<usize>,
    /// A final line without a newline (a write in progress).
    pub partial_tail: bool,
    pub last_digest: String,
}

pub(crate) fn scan_file(path: &Path) -> io::Result<Scan> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Scan::default()),
        Err(e) => return Err(e),
    };
    Ok(scan_bytes(&bytes))
}

pub(crate) fn scan_bytes(bytes: &[u8]) -> Scan {
    let mut scan = Scan::default();
    let mut prev = String::new();
    let mut rest = bytes;
    let mut lineno = 0;
    while !rest.is_empty() {
        lineno += 1;
        let (line, complete) = match rest.iter().position(|&b| b == b'\n') {
            Some(i) => {
                let l = &rest[..i];
                rest = &rest[i + 1..];
                (l, true)
            }
            None => {
                let l = rest;
                rest = &[];
                (l, false)
            }
        };
        if !complete {
            // Every committed record ends in a newline.
            scan.partial_tail = true;
            break;
        }
        let parsed = std::str::from_utf8(line)
            .ok()
            .and_then(|s| serde_json::from_str::<Envelope>(s).ok());
        match parsed {
            Some(env) => {
                let raw = env.record.get();
                if chain_digest(&prev, raw) != env.digest {
                    scan.broken.push(lineno);
                }
                prev = env.digest.clone();
                scan.records.push((lineno, raw.to_string()));
            }
            None => scan.malformed.push(lineno),
        }
    }
    scan.last_digest = prev;
    scan
}

/// Decodes every intact record of a journal, skipping a partial tail.
pub(crate) fn read_records<T: DeserializeOwned>(path: &Path) -> io::Result<Vec<T>> {
    scan_file(path)?
        .records
        .into_iter()
        .map(|(line, raw)| {
            serde_json::from_str(&raw).map_err(|e| {
                io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("{}:{line}: {e}", path.display()),
                )
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct R {
        n: u32,
    }

    #[test]
    fn chain_detects_mutation_and_tolerates_partial_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.ndjson");
        let mut j = Journal::open(&path).unwrap();
        for n in 0..3 {
            j.append(&R { n }).unwrap();
        }
        let clean = scan_file(&path).unwrap();
        assert_eq!(clean.records.len(), 3);
        assert!(clean.broken.is_empty() && clean.malformed.is_empty() && !clean.partial_tail);

        let mut bytes = std::fs::read(&path).unwrap();
        bytes.extend_from_slice(b"{\"record\":{\"n\":");
        let torn = scan_bytes(&bytes);
        assert!(torn.partial_tail);
        assert_eq!(torn.records.len(), 3);

        let text = String::from_utf8(std::fs::read(&path).unwrap()).unwrap();
        let tampered = text.replacen("{\"n\":1}", "{\"n\":7}", 1);
        let scan = scan_bytes(tampered.as_bytes());
        assert_eq!(scan.broken, vec![2]);
    }

    #[test]
    fn reopen_continues_chain_and_repairs_torn_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.ndjson");
        Journal::open(&path).unwrap().append(&R { n: 1 }).unwrap();
        {
            let mut f = OpenOptions::new().append(true).open(&path).unwrap();
            f.write_all(b"{\"rec").unwrap();
        }
        let mut j = Journal::open(&path).unwrap();
        j.append(&R { n: 2 }).unwrap();
        let scan = scan_file(&path).unwrap();
        assert_eq!(scan.records.len(), 2);
        assert!(scan.malformed.is_empty());
        assert!(!scan.partial_tail);
        assert!(scan.broken.is_empty());
        let recs: Vec<R> = read_records(&path).unwrap();
        assert_eq!(recs, vec![R { n: 1 }, R { n: 2 }]);
    }

    #[test]
    fn two_handles_share_one_chain() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.ndjson");
        let mut a = Journal::open(&path).unwrap();
        let mut b = Journal::open(&path).unwrap();
        a.append(&R { n: 1 }).unwrap();
        b.append(&R { n: 2 }).unwrap();
        a.append(&R { n: 3 }).unwrap();
        assert!(scan_file(&path).unwrap().broken.is_empty());
    }
}
