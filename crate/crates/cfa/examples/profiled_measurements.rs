//! Building the legal-measurement database by profiling: run the program
//! over representative inputs and record the observed measurements. This
//! is how databases get built when exhaustive enumeration is off the
//! table, at the cost of rejecting legal-but-unprofiled paths.
//!
//!     cargo run --example profiled_measurements

use cfa::attacklab::{corpus_source, DEMO_KEY};
use cfa::cfg::{AnalyzedProgram, MeasurementDb};
use cfa::isa::parse_asm;
use cfa::prover::run_attested;
use cfa::verifier::{
    profile_db, verify_report, Challenge, Policy, ReplayWindow, REGION_END_HALT,
};

fn main() {
    let src = corpus_source("recursion").unwrap();
    let a = AnalyzedProgram::analyze(parse_asm(src, "recursion").unwrap()).unwrap();

    // Start from an empty database: nothing enumerated, nothing profiled.
    let mut db = MeasurementDb {
        program_digest: a.cfg.program_digest,
        region_begin: 0,
        region_end: REGION_END_HALT,
        entries: Vec::new(),
        profiled: Vec::new(),
        loop_paths: Default::default(),
        complete: false,
    };
    let challenge = Challenge::fresh(a.cfg.program_digest);
    let (_, report) = run_attested(&a, vec![4], &challenge, &DEMO_KEY, None).unwrap();
    let mut replay = ReplayWindow::new();
    let v = verify_report(&report, &challenge, &db, &Policy::default(), &DEMO_KEY, &mut replay);
    println!("empty database: {v:?}");
    assert!(!v.is_valid());

    // Profile inputs 0..=5, then the same report verifies.
    db = profile_db(&a, &(0..=5).map(|n| vec![n]).collect::<Vec<_>>(), &DEMO_KEY);
    println!(
        "profiled {} runs; {} enumerated entries were merged in",
        db.profiled.len(),
        db.entries.len()
    );
    // A fresh replay window: re-verifying the same nonce would otherwise
    // be (correctly) rejected as a replay.
    let mut replay = ReplayWindow::new();
    let v = verify_report(&report, &challenge, &db, &Policy::default(), &DEMO_KEY, &mut replay);
    println!("after profiling: {v:?}");
    assert!(v.is_valid());

    // Recursion is treated as a dynamic loop: one call-cycle record per
    // activation, so the record count reveals the depth while the final
    // hash stays depth-independent.
    println!(
        "input [4] recursed {} activations deep (records for header @{})",
        report.auth.records.len(),
        report.auth.records[0].header_entry
    );
}
