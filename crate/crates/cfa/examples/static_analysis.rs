//! Static analysis of a corpus program: basic blocks, edges, natural
//! loops, and matched call/return sites.
//!
//!     cargo run --example static_analysis

use cfa::attacklab::corpus_source;
use cfa::cfg::AnalyzedProgram;
use cfa::isa::parse_asm;

fn main() {
    let src = corpus_source("pump").unwrap();
    let program = parse_asm(src, "pump").expect("assembles");
    let a = AnalyzedProgram::analyze(program).expect("analyzes");

    println!("nodes (engine-visible basic blocks):");
    for (i, n) in a.cfg.nodes.iter().enumerate() {
        println!("  n{i}: [{}..{}]", n.entry, n.exit);
    }
    println!("edges:");
    for e in &a.cfg.edges {
        let s = a.cfg.node(e.src);
        let d = a.cfg.node(e.dst);
        println!("  ({},{}) -> ({},{})  {:?}", s.entry, s.exit, d.entry, d.exit, e.kind);
    }
    println!("loops:");
    for l in &a.loops.loops {
        let exits: Vec<String> = l
            .exits
            .iter()
            .map(|x| {
                format!(
                    "{}->{} ({:?})",
                    a.cfg.node(x.src).exit,
                    a.cfg.node(x.dst).entry,
                    x.class
                )
            })
            .collect();
        println!(
            "  {:?} header@{}  body {} nodes  back edges {}  exits [{}]",
            l.kind,
            l.header_entry,
            l.body.len(),
            l.back_edges.len(),
            exits.join(", ")
        );
    }
}
