//! Returns are measured as edges back to the matching call site, so a
//! subroutine called from two places yields exactly two legal final
//! hashes — and a return "crossed over" to the other site lands outside
//! that set even though the target address is a legal return site.
//!
//!     cargo run --example call_return_binding

use std::collections::HashSet;

use cfa::attacklab::{corpus_source, DEMO_KEY};
use cfa::cfg::{enumerate_measurements, AnalyzedProgram, EnumBounds};
use cfa::engine::ZERO_HASH;
use cfa::isa::{parse_asm, Fault, FaultInjection};
use cfa::prover::run_attested;
use cfa::verifier::{Challenge, REGION_END_HALT};

fn main() {
    let src = corpus_source("twocalls").unwrap();
    let a = AnalyzedProgram::analyze(parse_asm(src, "twocalls").unwrap()).unwrap();
    let db = enumerate_measurements(&a, &EnumBounds::default());
    let view = db.view(ZERO_HASH, 0, REGION_END_HALT);
    let legal: HashSet<[u8; 32]> = view.final_hashes.keys().copied().collect();
    println!("{} legal final hashes:", legal.len());
    for (h, d) in &view.final_hashes {
        println!("  {}  {d}", hex::encode(h));
    }

    let challenge = Challenge::fresh(a.cfg.program_digest);
    for input in [0, 1] {
        let (_, report) = run_attested(&a, vec![input], &challenge, &DEMO_KEY, None).unwrap();
        assert!(legal.contains(&report.auth.final_hash));
        println!("input {input}: final in the legal set");
    }

    // Cross the return: the subroutine was entered from the call at 3 but
    // returns to 6, the resume address of the *other* call site.
    let crossed = FaultInjection::single(Fault::HijackReturn {
        ret_pc: 9,
        occurrence: 0,
        target: 6,
    });
    let (_, report) =
        run_attested(&a, vec![0], &challenge, &DEMO_KEY, Some(crossed)).unwrap();
    assert!(!legal.contains(&report.auth.final_hash));
    println!(
        "crossed return: final {} is outside the legal set",
        hex::encode(report.auth.final_hash)
    );
}
