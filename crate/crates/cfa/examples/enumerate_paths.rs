//! Enumerate the legal measurement database for a corpus program: every
//! whole-program final hash with loops abstracted, plus each loop's legal
//! iteration-path hashes and per-path-count exit structure.
//!
//!     cargo run --example enumerate_paths

use cfa::attacklab::corpus_source;
use cfa::cfg::{enumerate_measurements, AnalyzedProgram, EnumBounds};
use cfa::engine::ZERO_HASH;
use cfa::isa::parse_asm;
use cfa::verifier::REGION_END_HALT;

fn main() {
    for name in ["branch", "breakloop", "pump"] {
        let src = corpus_source(name).unwrap();
        let a = AnalyzedProgram::analyze(parse_asm(src, name).unwrap()).unwrap();
        let db = enumerate_measurements(&a, &EnumBounds::default());
        let view = db.view(ZERO_HASH, 0, REGION_END_HALT);

        println!("== {name} (complete: {}) ==", db.complete);
        println!("{} legal final hashes:", view.final_hashes.len());
        let mut finals: Vec<_> = view.final_hashes.iter().collect();
        finals.sort_by(|a, b| a.1.cmp(b.1));
        for (hash, description) in finals {
            println!("  {}  {description}", hex::encode(hash));
        }
        for (header, set) in &db.loop_paths {
            println!("loop @{header}: {} iteration paths", set.paths.len());
            for (hash, description) in &set.paths {
                println!("  {hash}  {description}");
            }
        }
        println!();
    }
}
