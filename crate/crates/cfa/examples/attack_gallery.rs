//! Run the canned attack scenarios against the dispenser firmware: each
//! one executes a clean baseline and an attacked run, attests both, and
//! shows the verifier catching the attack that the output alone might not.
//!
//!     cargo run --example attack_gallery

use cfa::attacklab::{all_scenarios, scenario_keymap_with_policy};

fn main() {
    for s in all_scenarios() {
        println!("== {} on {} ==", s.name, s.program);
        println!("   {}", s.description);
        println!("   baseline output {:?} -> {:?}", s.baseline_output, s.baseline_verdict);
        println!("   attacked output {:?} -> {:?}", s.attacked_output, s.attacked_verdict);
        println!("   detected: {}\n", s.detected());
        assert!(s.detected());
    }

    // The keymap attack is pure data corruption: without a policy pinning
    // the lookup count, every traversed edge is legal and the verifier has
    // nothing to object to.
    let unpinned = scenario_keymap_with_policy(false);
    println!(
        "keymap without a lookup-count policy: {:?} (undetected by design)",
        unpinned.attacked_verdict
    );
    assert!(unpinned.attacked_verdict.is_valid());
}
