//! A loop left through its header and the same loop left early by a break
//! resume the main chain at different points, so the two exits produce
//! different final hashes and differently-tagged loop records.
//!
//!     cargo run --example break_vs_normal

use cfa::attacklab::{corpus_source, DEMO_KEY};
use cfa::cfg::AnalyzedProgram;
use cfa::engine::ExitKind;
use cfa::isa::parse_asm;
use cfa::prover::run_attested;
use cfa::verifier::Challenge;

fn main() {
    // breakloop: counts r0 down by 2; if it ever hits the sentinel value 1
    // the loop breaks out early. Even input 8 -> normal exit at 0, odd
    // input 7 -> break at 1.
    let src = corpus_source("breakloop").unwrap();
    let a = AnalyzedProgram::analyze(parse_asm(src, "breakloop").unwrap()).unwrap();
    let challenge = Challenge::fresh(a.cfg.program_digest);

    let mut finals = Vec::new();
    for input in [8, 7] {
        let (result, report) =
            run_attested(&a, vec![input], &challenge, &DEMO_KEY, None).unwrap();
        let record = &report.auth.records[0];
        let exit = match record.exit_kind {
            ExitKind::Normal => "normal (through the header)".to_string(),
            ExitKind::Break(from) => format!("break (from {from})"),
            ExitKind::Anomaly(at) => format!("anomaly (at {at})"),
        };
        println!(
            "input {input}: output {:?}  iterations {}  exit {exit}\n  final {}",
            result.output,
            record.total_count(),
            hex::encode(report.auth.final_hash)
        );
        finals.push(report.auth.final_hash);
    }
    assert_ne!(finals[0], finals[1]);
    println!("the exit route is visible in the final hash, not just the record");
}
