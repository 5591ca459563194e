//! Attest only a sub-range of a program, seeded with a verifier-chosen
//! initialization value. Code executed outside [begin, end) never touches
//! the chain, and the IV binds the measurement to this challenge.
//!
//!     cargo run --example region_attestation

use cfa::attacklab::{corpus_source, DEMO_KEY};
use cfa::cfg::{enumerate_region, AnalyzedProgram, EnumBounds};
use cfa::isa::parse_asm;
use cfa::prover::run_attested;
use cfa::verifier::{verify_report, Challenge, Policy, ReplayWindow};

fn main() {
    // pump: attest everything from the scan loop (5) until shutdown (24),
    // leaving the key-map initialization block unmeasured.
    let src = corpus_source("pump").unwrap();
    let a = AnalyzedProgram::analyze(parse_asm(src, "pump").unwrap()).unwrap();
    let (begin, end) = (5, 24);
    let db = enumerate_region(&a, &EnumBounds::default(), begin, end);

    let challenge = Challenge::fresh(a.cfg.program_digest)
        .with_region(begin, end)
        .with_iv([0x07; 32]);
    let input = vec![11, 3, 22, 0]; // set quantity 3, dispense, stop
    let (result, report) = run_attested(&a, input, &challenge, &DEMO_KEY, None).unwrap();
    println!(
        "measured {} events of the run (full run output {:?})",
        result.events, result.output
    );
    println!("final hash {}", hex::encode(report.auth.final_hash));

    let mut replay = ReplayWindow::new();
    let verdict = verify_report(&report, &challenge, &db, &Policy::default(), &DEMO_KEY, &mut replay);
    println!("verdict: {verdict:?}");
    assert!(verdict.is_valid());

    // The same run under a different IV yields a different final hash:
    // reports are not transferable between challenges.
    let other = Challenge::fresh(a.cfg.program_digest)
        .with_region(begin, end)
        .with_iv([0x08; 32]);
    let (_, other_report) =
        run_attested(&a, vec![11, 3, 22, 0], &other, &DEMO_KEY, None).unwrap();
    assert_ne!(report.auth.final_hash, other_report.auth.final_hash);
    println!("IV change moved the final hash, as intended");
}
