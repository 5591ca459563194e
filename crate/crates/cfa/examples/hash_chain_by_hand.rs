//! Recompute an attested run's final hash from first principles: fold the
//! `extend` primitive over the node path by hand and compare it with what
//! the measurement engine reported.
//!
//!     cargo run --example hash_chain_by_hand

use cfa::attacklab::{corpus_source, DEMO_KEY};
use cfa::cfg::AnalyzedProgram;
use cfa::engine::extend;
use cfa::isa::parse_asm;
use cfa::prover::run_attested;
use cfa::verifier::Challenge;

fn main() {
    // branch.asm: input 1 takes the privileged arm (call at 3), anything
    // else the unprivileged one (call at 5). No loops, so the whole run is
    // a single chain of extends on the main hash.
    let src = corpus_source("branch").unwrap();
    let a = AnalyzedProgram::analyze(parse_asm(src, "branch").unwrap()).unwrap();
    let challenge = Challenge::fresh(a.cfg.program_digest);
    let (_, report) = run_attested(&a, vec![1], &challenge, &DEMO_KEY, None).unwrap();

    // Hand-replayed node path for input 1. Each branch event measures the
    // basic block being *left* as its (entry, exit) pair, so the chain is a
    // fold over the executed blocks in order. A not-taken conditional
    // branch is measured too: it is an executed control-flow instruction
    // whose destination is the fall-through.
    let steps: &[(u32, u32)] = &[
        (0, 2), // IN/CMP/BNE block, left by the not-taken BNE at 2
        (3, 3), // the BL to fpriv is a block of its own
        (8, 9), // fpriv's body, left by its RET at 9
        (4, 4), // the jump to the join block after returning
    ];
    let mut h = challenge.iv_or_zero();
    for &(entry, exit) in steps {
        h = extend(&h, entry, exit);
        println!("extend(entry {entry:>2}, exit {exit:>2}) -> {}", hex::encode(h));
    }

    println!("engine reported        {}", hex::encode(report.auth.final_hash));
    assert_eq!(h, report.auth.final_hash);
    println!("hand fold matches the engine");
}
