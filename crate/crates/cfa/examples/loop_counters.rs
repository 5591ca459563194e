//! Loops are measured as sub-programs: the main chain's final hash is the
//! same no matter how many iterations run, while the loop record carries
//! per-path iteration counters that a policy can pin.
//!
//!     cargo run --example loop_counters

use cfa::attacklab::{corpus_source, pump, DEMO_KEY};
use cfa::cfg::{enumerate_measurements, AnalyzedProgram, EnumBounds};
use cfa::prover::run_attested;
use cfa::isa::parse_asm;
use cfa::verifier::{verify_report, Challenge, Policy, ReplayWindow};

fn main() {
    let src = corpus_source("pump").unwrap();
    let a = AnalyzedProgram::analyze(parse_asm(src, "pump").unwrap()).unwrap();
    let db = enumerate_measurements(&a, &EnumBounds::default());
    let challenge = Challenge::fresh(a.cfg.program_digest);

    let mut finals = Vec::new();
    for q in [1, 10, 100] {
        let input = vec![pump::CODE_SET, q, pump::CODE_DISPENSE, 0];
        let (result, report) =
            run_attested(&a, input, &challenge, &DEMO_KEY, None).unwrap();
        let dispense_record = report
            .auth
            .records
            .iter()
            .find(|r| r.header_entry == pump::DLOOP)
            .expect("dispense loop record");
        println!(
            "quantity {q:>3}: final {}  dispense-loop count {}  poured {} units",
            hex::encode(report.auth.final_hash),
            dispense_record.total_count(),
            result.output.len()
        );
        assert_eq!(dispense_record.total_count(), q as u32);
        finals.push(report.auth.final_hash);
    }
    assert!(finals.windows(2).all(|w| w[0] == w[1]));
    println!("final hash is independent of the iteration count");

    // A policy turns the counter into a verdict: expect exactly 10 units.
    let policy = Policy::default().expect_exact(pump::DLOOP, 10);
    let mut replay = ReplayWindow::new();
    for q in [10, 100] {
        let input = vec![pump::CODE_SET, q, pump::CODE_DISPENSE, 0];
        let challenge = Challenge::fresh(a.cfg.program_digest);
        let (_, report) = run_attested(&a, input, &challenge, &DEMO_KEY, None).unwrap();
        let verdict = verify_report(&report, &challenge, &db, &policy, &DEMO_KEY, &mut replay);
        println!("policy 'exactly 10' on quantity {q:>3}: {verdict:?}");
    }
}
