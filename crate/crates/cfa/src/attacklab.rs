//! Demo corpus and attack scenarios: each scenario runs a program twice —
//! clean and under an injected memory-error-style fault — attests both
//! runs, and shows the verifier catching the attacked one.

use serde::Serialize;

use crate::cfg::{enumerate_measurements, AnalyzedProgram, EnumBounds, MeasurementDb};
use crate::isa::{parse_asm, Fault, FaultInjection};
use crate::prover::run_attested;
use crate::verifier::{verify_report, Challenge, CountPredicate, Policy, ReplayWindow, Verdict};

pub const DEMO_KEY: [u8; 32] = [0x42u8; 32];

/// Pump landmarks used by the scenarios (instruction addresses).
pub mod pump {
    /// Key-lookup loop header; its iteration count reveals the pressed key.
    pub const KLOOP: u32 = 10;
    /// Call site of the dispense routine (the trigger handler).
    pub const TRIGGER_CALL: u32 = 22;
    /// First instruction of the dispense routine (loads the quantity).
    pub const DISPENSE_ENTRY: u32 = 28;
    /// Dispense loop header; one iteration per unit poured.
    pub const DLOOP: u32 = 30;
    /// Return instruction of the set-quantity handler.
    pub const SETQ_RET: u32 = 27;
    /// An address in the middle of the key-lookup header block.
    pub const MID_NODE: u32 = 11;
    /// Raw key codes as initialized in the key map.
    pub const CODE_SET: i32 = 11;
    pub const CODE_DISPENSE: i32 = 22;
}

/// One program of the demo corpus, pre-analyzed.
pub struct CorpusProgram {
    pub name: &'static str,
    pub source: &'static str,
    pub analyzed: AnalyzedProgram,
    /// An input that exercises the program end to end.
    pub demo_input: Vec<i32>,
}

const CORPUS: &[(&str, &str, &[i32])] = &[
    ("pump", include_str!("../corpus/pump.asm"), &[11, 5, 22, 0]),
    ("branch", include_str!("../corpus/branch.asm"), &[0]),
    ("while", include_str!("../corpus/while.asm"), &[4]),
    ("breakloop", include_str!("../corpus/breakloop.asm"), &[7]),
    ("twocalls", include_str!("../corpus/twocalls.asm"), &[1]),
    ("recursion", include_str!("../corpus/recursion.asm"), &[3]),
    ("loopcall", include_str!("../corpus/loopcall.asm"), &[2]),
];

pub fn corpus_source(name: &str) -> Option<&'static str> {
    CORPUS.iter().find(|(n, _, _)| *n == name).map(|&(_, s, _)| s)
}

pub fn build_corpus() -> Vec<CorpusProgram> {
    CORPUS
        .iter()
        .map(|&(name, source, input)| CorpusProgram {
            name,
            source,
            analyzed: AnalyzedProgram::analyze(parse_asm(source, name).expect("corpus parses"))
                .expect("corpus analyzes"),
            demo_input: input.to_vec(),
        })
        .collect()
}

/// Result of one scenario: the same program attested clean and attacked.
#[derive(Debug, Serialize)]
pub struct ScenarioOutcome {
    pub name: &'static str,
    pub program: &'static str,
    pub description: &'static str,
    pub faults: FaultInjection,
    pub baseline_output: Vec<i32>,
    pub attacked_output: Vec<i32>,
    pub baseline_verdict: Verdict,
    pub attacked_verdict: Verdict,
}

impl ScenarioOutcome {
    /// The attack succeeded at runtime but attestation caught it.
    pub fn detected(&self) -> bool {
        self.baseline_verdict.is_valid() && !self.attacked_verdict.is_valid()
    }
}

fn run_scenario(
    name: &'static str,
    program: &'static str,
    description: &'static str,
    input: &[i32],
    faults: FaultInjection,
    policy: &Policy,
) -> ScenarioOutcome {
    let source = corpus_source(program).expect("known program");
    let analyzed =
        AnalyzedProgram::analyze(parse_asm(source, program).unwrap()).expect("corpus analyzes");
    let db: MeasurementDb = enumerate_measurements(&analyzed, &EnumBounds::default());
    let mut replay = ReplayWindow::new();
    let mut attest = |fault: Option<FaultInjection>| {
        let challenge = Challenge::fresh(analyzed.cfg.program_digest);
        let (res, report) =
            run_attested(&analyzed, input.to_vec(), &challenge, &DEMO_KEY, fault).expect("runs");
        let verdict = verify_report(&report, &challenge, &db, policy, &DEMO_KEY, &mut replay);
        (res.output, verdict)
    };
    let (baseline_output, baseline_verdict) = attest(None);
    let (attacked_output, attacked_verdict) = attest(Some(faults.clone()));
    ScenarioOutcome {
        name,
        program,
        description,
        faults,
        baseline_output,
        attacked_output,
        baseline_verdict,
        attacked_verdict,
    }
}

/// Corrupted return address: the set-quantity handler's return is
/// redirected to the dispense call site, pouring liquid although the
/// trigger key was never pressed. The illegal return edge drives the hash
/// chain to a value outside the legal set.
pub fn scenario_hijack_return() -> ScenarioOutcome {
    run_scenario(
        "hijack-return",
        "pump",
        "the set-quantity handler's return is redirected into the dispense \
         path, dispensing without a trigger keypress",
        &[pump::CODE_SET, 5, 0],
        FaultInjection::single(Fault::HijackReturn {
            ret_pc: pump::SETQ_RET,
            occurrence: 0,
            target: pump::TRIGGER_CALL,
        }),
        &Policy::default(),
    )
}

/// Variant of the return hijack landing in the middle of a basic block:
/// the measured node entry no longer matches any block entry, so the chain
/// is unknown for that reason alone.
pub fn scenario_hijack_return_mid_node() -> ScenarioOutcome {
    run_scenario(
        "hijack-return-mid-node",
        "pump",
        "the hijacked return lands mid-block: the engine-visible node entry \
         matches no block boundary and the chain leaves the legal set",
        &[pump::CODE_SET, 5, 0],
        FaultInjection::single(Fault::HijackReturn {
            ret_pc: pump::SETQ_RET,
            occurrence: 0,
            target: pump::MID_NODE,
        }),
        &Policy::default(),
    )
}

/// Data-only attack: the stored quantity is overwritten as dispensing
/// starts. Every traversed edge stays legal and the final hash is
/// unchanged; only the dispense loop's iteration counter betrays the
/// attack, so the verifier must pin it with a policy.
pub fn scenario_loop_count() -> ScenarioOutcome {
    scenario_loop_count_with(50)
}

/// [`scenario_loop_count`] with a chosen overwritten quantity (the
/// configured quantity is 5, so 5 makes the fault a no-op).
pub fn scenario_loop_count_with(tampered: i32) -> ScenarioOutcome {
    let mut policy = Policy::default();
    policy.loops.insert(pump::DLOOP, CountPredicate::Exact(5));
    run_scenario(
        "loop-count",
        "pump",
        "a memory write changes the stored quantity right as dispensing \
         starts: path and final hash stay legal, only the iteration \
         counter in the loop record reveals the wrong dose",
        &[pump::CODE_SET, 5, pump::CODE_DISPENSE, 0],
        FaultInjection::single(Fault::WriteData {
            pc: pump::DISPENSE_ENTRY,
            addr: 0,
            value: tampered,
        }),
        &policy,
    )
}

/// Key-map corruption: the raw code for set-quantity is remapped to the
/// dispense key. The lookup loop takes one extra iteration, which is the
/// only trace — the verifier needs a policy pinning the lookup count of
/// the key it believes was pressed.
pub fn scenario_keymap() -> ScenarioOutcome {
    scenario_keymap_with_policy(true)
}

pub fn scenario_keymap_with_policy(pin_lookup: bool) -> ScenarioOutcome {
    let mut policy = Policy::default();
    if pin_lookup {
        // The set-quantity code matches the first key-map slot: zero
        // lookup-loop back edges.
        policy.loops.insert(pump::KLOOP, CountPredicate::Exact(0));
    }
    run_scenario(
        "keymap",
        "pump",
        "the key-map array is corrupted so the innocuous set-quantity code \
         maps to the dispense key; the lookup loop's iteration count is \
         the only evidence of which key appeared to be pressed",
        &[pump::CODE_SET, 0, 0],
        FaultInjection {
            faults: vec![
                Fault::WriteData {
                    pc: 5,
                    addr: 1,
                    value: 99,
                },
                Fault::WriteData {
                    pc: 5,
                    addr: 2,
                    value: pump::CODE_SET,
                },
            ],
        },
        &policy,
    )
}

pub fn all_scenarios() -> Vec<ScenarioOutcome> {
    vec![
        scenario_hijack_return(),
        scenario_loop_count(),
        scenario_keymap(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_parses_and_analyzes() {
        let corpus = build_corpus();
        assert_eq!(corpus.len(), 7);
        for prog in &corpus {
            assert!(!prog.analyzed.cfg.nodes.is_empty(), "{}", prog.name);
        }
    }

    #[test]
    fn every_corpus_program_attests_cleanly_on_demo_input() {
        for prog in build_corpus() {
            let db = enumerate_measurements(&prog.analyzed, &EnumBounds::default());
            let challenge = Challenge::fresh(prog.analyzed.cfg.program_digest);
            let (_, report) = run_attested(
                &prog.analyzed,
                prog.demo_input.clone(),
                &challenge,
                &DEMO_KEY,
                None,
            )
            .unwrap_or_else(|e| panic!("{}: {e}", prog.name));
            let mut replay = ReplayWindow::new();
            let v = verify_report(
                &report,
                &challenge,
                &db,
                &Policy::default(),
                &DEMO_KEY,
                &mut replay,
            );
            assert!(v.is_valid(), "{}: {v:?}", prog.name);
        }
    }

    #[test]
    fn hijack_return_dispenses_without_trigger_and_is_detected() {
        let s = scenario_hijack_return();
        // The attack worked at runtime: liquid flowed with no trigger key.
        assert_eq!(s.baseline_output, Vec::<i32>::new());
        assert_eq!(s.attacked_output, vec![5, 4, 3, 2, 1]);
        assert!(s.detected(), "{s:?}");
        assert!(matches!(s.attacked_verdict, Verdict::UnknownPath { .. }));
    }

    #[test]
    fn hijack_to_mid_node_address_is_unknown_path() {
        let s = scenario_hijack_return_mid_node();
        assert!(s.detected(), "{s:?}");
        assert!(matches!(s.attacked_verdict, Verdict::UnknownPath { .. }));
    }

    #[test]
    fn loop_count_tamper_keeps_path_legal_but_fails_policy() {
        let s = scenario_loop_count();
        assert_eq!(s.baseline_output, vec![5, 4, 3, 2, 1]);
        assert_eq!(s.attacked_output.len(), 50);
        assert!(s.detected(), "{s:?}");
        assert!(matches!(
            s.attacked_verdict,
            Verdict::PolicyViolation {
                loop_header: pump::DLOOP,
                observed: 50,
                ..
            }
        ));
    }

    #[test]
    fn loop_count_noop_fault_stays_valid() {
        let s = scenario_loop_count_with(5);
        assert!(s.baseline_verdict.is_valid());
        assert!(s.attacked_verdict.is_valid(), "{s:?}");
    }

    #[test]
    fn loop_count_zeroed_quantity_is_rejected() {
        let s = scenario_loop_count_with(0);
        assert!(s.detected(), "{s:?}");
    }

    #[test]
    fn keymap_corruption_detected_only_with_lookup_policy() {
        let s = scenario_keymap();
        // Both runs produce no output: the evidence is the loop counter.
        assert_eq!(s.baseline_output, Vec::<i32>::new());
        assert_eq!(s.attacked_output, Vec::<i32>::new());
        assert!(s.detected(), "{s:?}");
        assert!(matches!(
            s.attacked_verdict,
            Verdict::PolicyViolation {
                loop_header: pump::KLOOP,
                observed: 1,
                ..
            }
        ));
        // Without the policy every traversed path is legal: the verifier
        // must know which key it expects.
        let unpinned = scenario_keymap_with_policy(false);
        assert!(unpinned.attacked_verdict.is_valid(), "{unpinned:?}");
    }
}