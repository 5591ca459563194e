//! Byte-exact wire framing for challenges and reports, plus a small TCP
//! challenge-response service.
//!
//! Frames are self-describing: a 4-byte magic, a kind byte, then the
//! fixed-layout payload. On a TCP stream each frame (and the trailing
//! verdict JSON) is preceded by a little-endian u32 length.
//!
//! Challenge frame (62 bytes with no IV, 94 with one):
//! `"CFA1" || 0x01 || program_digest (32) || region_begin u32 LE ||
//! region_end u32 LE || nonce (16) || iv flag u8 || [iv (32)]`
//!
//! Report frame (103 bytes + 39 per loop record + 36 per path entry + 4 per
//! break/anomaly address):
//! `"CFA1" || 0x02 || Auth canonical bytes || tag (32)`

use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};

use thiserror::Error;

use crate::cfg::{AnalyzedProgram, MeasurementDb};
use crate::engine::{Auth, Report};
use crate::isa::FaultInjection;
use crate::prover::{run_attested, RunResult};
use crate::verifier::{verify_report, Challenge, Policy, ReplayWindow, Verdict};

pub const MAGIC: [u8; 4] = *b"CFA1";
pub const KIND_CHALLENGE: u8 = 0x01;
pub const KIND_REPORT: u8 = 0x02;

/// Frame length of a challenge with no IV.
pub const CHALLENGE_LEN_NO_IV: usize = 4 + 1 + 32 + 4 + 4 + 16 + 1;
/// Frame length of a challenge carrying an IV.
pub const CHALLENGE_LEN_WITH_IV: usize = CHALLENGE_LEN_NO_IV + 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("bad magic: expected 43464131 (\"CFA1\")")]
    BadMagic,
    #[error("unexpected frame kind {got:#04x}, expected {want:#04x}")]
    BadKind { got: u8, want: u8 },
    #[error("frame truncated or malformed at offset {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
    #[error("invalid field value: {0}")]
    BadField(&'static str),
}

pub fn encode_challenge(c: &Challenge) -> Vec<u8> {
    let mut out = Vec::with_capacity(CHALLENGE_LEN_WITH_IV);
    out.extend_from_slice(&MAGIC);
    out.push(KIND_CHALLENGE);
    out.extend_from_slice(&c.program_digest);
    out.extend_from_slice(&c.region_begin.to_le_bytes());
    out.extend_from_slice(&c.region_end.to_le_bytes());
    out.extend_from_slice(&c.nonce);
    match c.iv {
        None => out.push(0),
        Some(iv) => {
            out.push(1);
            out.extend_from_slice(&iv);
        }
    }
    out
}

pub fn decode_challenge(bytes: &[u8]) -> Result<Challenge, WireError> {
    let mut at = 0usize;
    let take = |at: &mut usize, n: usize| -> Result<&[u8], WireError> {
        let s = bytes.get(*at..*at + n).ok_or(WireError::Truncated(*at))?;
        *at += n;
        Ok(s)
    };
    if take(&mut at, 4)? != MAGIC {
        return Err(WireError::BadMagic);
    }
    let kind = take(&mut at, 1)?[0];
    if kind != KIND_CHALLENGE {
        return Err(WireError::BadKind {
            got: kind,
            want: KIND_CHALLENGE,
        });
    }
    let program_digest: [u8; 32] = take(&mut at, 32)?.try_into().unwrap();
    let region_begin = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap());
    let region_end = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap());
    let nonce: [u8; 16] = take(&mut at, 16)?.try_into().unwrap();
    let iv = match take(&mut at, 1)?[0] {
        0 => None,
        1 => Some(take(&mut at, 32)?.try_into().unwrap()),
        _ => return Err(WireError::BadField("iv flag")),
    };
    if at != bytes.len() {
        return Err(WireError::TrailingBytes(bytes.len() - at));
    }
    Ok(Challenge {
        program_digest,
        region_begin,
        region_end,
        nonce,
        iv,
    })
}

pub fn encode_report(r: &Report) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.push(KIND_REPORT);
    out.extend_from_slice(&r.auth.to_canonical_bytes());
    out.extend_from_slice(&r.tag);
    out
}

pub fn decode_report(bytes: &[u8]) -> Result<Report, WireError> {
    if bytes.len() < 5 {
        return Err(WireError::Truncated(bytes.len()));
    }
    if bytes[..4] != MAGIC {
        return Err(WireError::BadMagic);
    }
    if bytes[4] != KIND_REPORT {
        return Err(WireError::BadKind {
            got: bytes[4],
            want: KIND_REPORT,
        });
    }
    let (auth, used) = Auth::from_canonical_bytes(&bytes[5..]).ok_or(WireError::Truncated(5))?;
    let rest = &bytes[5 + used..];
    if rest.len() < 32 {
        return Err(WireError::Truncated(5 + used));
    }
    let tag: [u8; 32] = rest[..32].try_into().unwrap();
    if rest.len() > 32 {
        return Err(WireError::TrailingBytes(rest.len() - 32));
    }
    Ok(Report { auth, tag })
}

/// Attestation key: 32 raw bytes from the file named by `CFA_KEY_FILE`, or
/// a fixed demo key when the variable is unset.
pub fn load_key() -> io::Result<[u8; 32]> {
    match std::env::var_os("CFA_KEY_FILE") {
        Some(path) => {
            let bytes = std::fs::read(&path)?;
            bytes.as_slice().try_into().map_err(|_| {
                io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("key file must hold exactly 32 bytes, got {}", bytes.len()),
                )
            })
        }
        None => Ok([0x42u8; 32]),
    }
}

/// Write one length-prefixed frame (u32 little-endian length, then bytes).
pub fn write_frame(stream: &mut TcpStream, frame: &[u8]) -> io::Result<()> {
    stream.write_all(&(frame.len() as u32).to_le_bytes())?;
    stream.write_all(frame)?;
    stream.flush()
}

/// Read one length-prefixed frame; frames above 16 MiB are rejected.
pub fn read_frame(stream: &mut TcpStream) -> io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    stream.read_exact(&mut len)?;
    let len = u32::from_le_bytes(len) as usize;
    if len > 1 << 24 {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut buf = vec![0u8; len];
    stream.read_exact(&mut buf)?;
    Ok(buf)
}

fn wire_err(e: WireError) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e)
}

/// Verifier service: per connection, send a fresh challenge, read the
/// report, reply with the verdict as one JSON frame. Returns after
/// `max_sessions` connections when given, otherwise serves forever.
pub fn serve(
    addr: impl ToSocketAddrs,
    template: &Challenge,
    db: &MeasurementDb,
    policy: &Policy,
    key: &[u8; 32],
    max_sessions: Option<usize>,
    on_verdict: impl FnMut(&Verdict),
) -> io::Result<()> {
    let listener = TcpListener::bind(addr)?;
    serve_listener(listener, template, db, policy, key, max_sessions, on_verdict)
}

/// [`serve`] over an already-bound listener (lets callers learn the port
/// before the first session).
pub fn serve_listener(
    listener: TcpListener,
    template: &Challenge,
    db: &MeasurementDb,
    policy: &Policy,
    key: &[u8; 32],
    max_sessions: Option<usize>,
    mut on_verdict: impl FnMut(&Verdict),
) -> io::Result<()> {
    let mut replay = ReplayWindow::new();
    let mut served = 0usize;
    for stream in listener.incoming() {
        let mut stream = stream?;
        let challenge = Challenge::fresh(template.program_digest)
            .with_region(template.region_begin, template.region_end);
        let challenge = match template.iv {
            Some(iv) => challenge.with_iv(iv),
            None => challenge,
        };
        write_frame(&mut stream, &encode_challenge(&challenge))?;
        let report = decode_report(&read_frame(&mut stream)?).map_err(wire_err)?;
        let verdict = verify_report(&report, &challenge, db, policy, key, &mut replay);
        let json = serde_json::to_vec(&verdict)?;
        write_frame(&mut stream, &json)?;
        on_verdict(&verdict);
        served += 1;
        if max_sessions.is_some_and(|m| served >= m) {
            break;
        }
    }
    Ok(())
}

/// Prover client: connect, receive the challenge, run the program under
/// measurement, send the report, and return the verifier's verdict.
pub fn attest(
    addr: impl ToSocketAddrs,
    analyzed: &AnalyzedProgram,
    input: Vec<i32>,
    key: &[u8; 32],
    fault: Option<FaultInjection>,
) -> io::Result<(Challenge, RunResult, Report, Verdict)> {
    let mut stream = TcpStream::connect(addr)?;
    let challenge = decode_challenge(&read_frame(&mut stream)?).map_err(wire_err)?;
    let (result, report) = run_attested(analyzed, input, &challenge, key, fault)
        .map_err(|e| io::Error::new(io::ErrorKind::Other, e.to_string()))?;
    write_frame(&mut stream, &encode_report(&report))?;
    let verdict: Verdict = serde_json::from_slice(&read_frame(&mut stream)?)?;
    Ok((challenge, result, report, verdict))
}
