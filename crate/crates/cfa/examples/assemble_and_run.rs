//! Assemble a program from source and run it on the VM, printing the
//! branch events the measurement engine would see.
//!
//!     cargo run --example assemble_and_run

use cfa::isa::{parse_asm, program_digest, serialize_asm, vm_run};

fn main() {
    let src = "\
IN r0
loop: CMP r0, 0
BEQ done
OUT r0
SUB r0, 1
B loop
done: HALT
";
    let program = parse_asm(src, "countdown").expect("assembles");
    println!("program digest {}", hex::encode(program_digest(&program)));
    println!("canonical listing:\n{}", serialize_asm(&program));

    let mut events = Vec::new();
    let (output, steps, outcome) = vm_run(&program, vec![3], |e| events.push(e), None);
    println!("input [3] -> output {output:?} in {steps} steps ({outcome:?})");
    println!("branch events (one per executed control-flow instruction):");
    for e in &events {
        println!("  {:>4} -> {:<4} {:?}", e.src, e.dst, e.kind);
    }
}
