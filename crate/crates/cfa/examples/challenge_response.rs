//! Full challenge-response loop over TCP on localhost: a verifier thread
//! issues a fresh-nonce challenge per connection, the prover runs under
//! measurement and sends the signed report back, and the verdict returns
//! over the same socket. A second pass replays the first report to show
//! nonce freshness being enforced.
//!
//!     cargo run --example challenge_response

use std::net::{TcpListener, TcpStream};
use std::thread;

use cfa::attacklab::{corpus_source, DEMO_KEY};
use cfa::cfg::{enumerate_measurements, AnalyzedProgram, EnumBounds};
use cfa::isa::parse_asm;
use cfa::verifier::{Challenge, Policy, Verdict};
use cfa::wire::{
    attest, decode_challenge, encode_report, read_frame, serve_listener, write_frame,
};

fn main() {
    let src = corpus_source("while").unwrap();
    let a = AnalyzedProgram::analyze(parse_asm(src, "while").unwrap()).unwrap();
    let db = enumerate_measurements(&a, &EnumBounds::default());

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let template = Challenge::fresh(a.cfg.program_digest);
    let server = {
        let db = db.clone();
        thread::spawn(move || {
            serve_listener(
                listener,
                &template,
                &db,
                &Policy::default(),
                &DEMO_KEY,
                Some(2),
                |v| println!("verifier saw {v:?}"),
            )
            .unwrap();
        })
    };

    // Session 1: honest prover.
    let (challenge, result, report, verdict) =
        attest(addr, &a, vec![3], &DEMO_KEY, None).unwrap();
    println!("nonce {}", hex::encode(challenge.nonce));
    println!("prover output {:?} over {} events", result.output, result.events);
    println!("verdict: {verdict:?}");
    assert!(verdict.is_valid());

    // Session 2: replay the session-1 report against the new challenge.
    // The tag was computed over the old nonce, so it can't verify.
    let mut stream = TcpStream::connect(addr).unwrap();
    let _fresh = decode_challenge(&read_frame(&mut stream).unwrap()).unwrap();
    write_frame(&mut stream, &encode_report(&report)).unwrap();
    let verdict: Verdict = serde_json::from_slice(&read_frame(&mut stream).unwrap()).unwrap();
    println!("replayed report: {verdict:?}");
    assert!(!verdict.is_valid());

    server.join().unwrap();
}
