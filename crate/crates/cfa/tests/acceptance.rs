//! Acceptance gate: one test per criterion, each printing a pass/fail
//! line. Run with `cargo test --test acceptance -- --nocapture` to see the
//! lines on success as well.

use std::collections::HashSet;
use std::net::TcpListener;
use std::panic::{catch_unwind, resume_unwind, UnwindSafe};
use std::thread;
use std::time::Instant;

use blake2::{Blake2s256, Digest};

use cfa::attacklab::{
    all_scenarios, corpus_source, pump, scenario_keymap, DEMO_KEY,
};
use cfa::cfg::{enumerate_measurements, AnalyzedProgram, EnumBounds};
use cfa::engine::{extend, ExitKind, ZERO_HASH};
use cfa::isa::{parse_asm, Fault, FaultInjection};
use cfa::prover::run_attested;
use cfa::verifier::{
    verify_report, Challenge, Policy, ReplayWindow, Verdict, REGION_END_HALT,
};
use cfa::wire::{attest, encode_challenge, encode_report, serve_listener};

fn criterion(name: &str, body: impl FnOnce() + UnwindSafe) {
    match catch_unwind(body) {
        Ok(()) => println!("criterion {name}: PASS"),
        Err(e) => {
            println!("criterion {name}: FAIL");
            resume_unwind(e);
        }
    }
}

fn analyzed(name: &str) -> AnalyzedProgram {
    AnalyzedProgram::analyze(parse_asm(corpus_source(name).unwrap(), name).unwrap()).unwrap()
}

#[test]
fn c1_deterministic_reports() {
    criterion("1 deterministic reports", || {
        let a = analyzed("pump");
        let challenge = Challenge::fresh(a.cfg.program_digest);
        let input = vec![pump::CODE_SET, 3, pump::CODE_DISPENSE, 0];
        let first = {
            let (_, report) =
                run_attested(&a, input.clone(), &challenge, &DEMO_KEY, None).unwrap();
            encode_report(&report)
        };
        for _ in 0..19 {
            let (_, report) =
                run_attested(&a, input.clone(), &challenge, &DEMO_KEY, None).unwrap();
            assert_eq!(encode_report(&report), first, "report bytes drifted");
        }
    });
}

#[test]
fn c2_loop_abstraction() {
    criterion("2 loop abstraction", || {
        let a = analyzed("pump");
        let challenge = Challenge::fresh(a.cfg.program_digest);
        let mut finals = Vec::new();
        for q in [1u32, 10, 100, 1000] {
            let input = vec![pump::CODE_SET, q as i32, pump::CODE_DISPENSE, 0];
            let (_, report) = run_attested(&a, input, &challenge, &DEMO_KEY, None).unwrap();
            let dispense = report
                .auth
                .records
                .iter()
                .find(|r| r.header_entry == pump::DLOOP)
                .expect("dispense loop record");
            assert_eq!(dispense.total_count(), q);
            finals.push(report.auth.final_hash);
        }
        assert!(finals.windows(2).all(|w| w[0] == w[1]));
    });
}

#[test]
fn c3_oracle_equivalence() {
    criterion("3 oracle equivalence", || {
        // First, the shared primitive itself against a from-scratch oracle:
        // extend is BLAKE2s-256 over h_prev || LE32(entry) || LE32(exit).
        let h = [0x5au8; 32];
        let mut oracle = Blake2s256::new();
        oracle.update(h);
        oracle.update(7u32.to_le_bytes());
        oracle.update(9u32.to_le_bytes());
        assert_eq!(extend(&h, 7, 9), <[u8; 32]>::from(oracle.finalize()));

        // Then dual-route agreement: every executed measurement over an
        // exhaustive small input space must fall inside the independently
        // enumerated database.
        let mut cases: Vec<(&str, Vec<Vec<i32>>)> = vec![
            ("branch", (0..3).map(|n| vec![n]).collect()),
            ("while", (0..5).map(|n| vec![n]).collect()),
            ("breakloop", (0..9).map(|n| vec![n]).collect()),
            ("twocalls", (0..3).map(|n| vec![n]).collect()),
        ];
        // pump: all key sequences of length <= 2 over the raw alphabet
        // {set, dispense, unmapped}, each terminated by the stop code.
        let keys = [pump::CODE_SET, pump::CODE_DISPENSE, 99];
        let mut pump_inputs = vec![vec![0]];
        for &k1 in &keys {
            let mut one = vec![k1];
            if k1 == pump::CODE_SET {
                one.push(2);
            }
            pump_inputs.push([one.clone(), vec![0]].concat());
            for &k2 in &keys {
                let mut two = one.clone();
                two.push(k2);
                if k2 == pump::CODE_SET {
                    two.push(3);
                }
                two.push(0);
                pump_inputs.push(two);
            }
        }
        cases.push(("pump", pump_inputs));

        for (name, inputs) in cases {
            let a = analyzed(name);
            let db = enumerate_measurements(&a, &EnumBounds::default());
            assert!(db.complete, "{name}: enumeration hit bounds");
            let mut replay = ReplayWindow::new();
            for input in inputs {
                let challenge = Challenge::fresh(a.cfg.program_digest);
                let (_, report) =
                    run_attested(&a, input.clone(), &challenge, &DEMO_KEY, None).unwrap();
                let v = verify_report(
                    &report,
                    &challenge,
                    &db,
                    &Policy::default(),
                    &DEMO_KEY,
                    &mut replay,
                );
                assert!(v.is_valid(), "{name} input {input:?}: {v:?}");
            }
        }
    });
}

#[test]
fn c4_attack_detection() {
    criterion("4 attack detection", || {
        let outcomes = all_scenarios();
        assert_eq!(outcomes.len(), 3);
        for s in outcomes {
            assert!(s.baseline_verdict.is_valid(), "{}: baseline {:?}", s.name, s.baseline_verdict);
            assert!(s.detected(), "{}: attacked {:?}", s.name, s.attacked_verdict);
        }
        assert!(matches!(
            scenario_keymap().attacked_verdict,
            Verdict::PolicyViolation { .. }
        ));
    });
}

#[test]
fn c5_call_return_binding() {
    criterion("5 call-return binding", || {
        let a = analyzed("twocalls");
        let db = enumerate_measurements(&a, &EnumBounds::default());
        let view = db.view(ZERO_HASH, 0, REGION_END_HALT);
        let legal: HashSet<[u8; 32]> = view.final_hashes.keys().copied().collect();
        assert_eq!(legal.len(), 2, "one subroutine, two call sites");

        let challenge = Challenge::fresh(a.cfg.program_digest);
        let mut replay = ReplayWindow::new();
        for input in [0, 1] {
            let challenge = Challenge::fresh(a.cfg.program_digest);
            let (_, report) =
                run_attested(&a, vec![input], &challenge, &DEMO_KEY, None).unwrap();
            assert!(legal.contains(&report.auth.final_hash));
            let v = verify_report(
                &report,
                &challenge,
                &db,
                &Policy::default(),
                &DEMO_KEY,
                &mut replay,
            );
            assert!(v.is_valid(), "input {input}: {v:?}");
        }

        // Return from the first call crossed over to the second site's
        // resume address: outside the legal set despite targeting a
        // genuine return site.
        let crossed = FaultInjection::single(Fault::HijackReturn {
            ret_pc: 9,
            occurrence: 0,
            target: 6,
        });
        let (_, report) =
            run_attested(&a, vec![0], &challenge, &DEMO_KEY, Some(crossed)).unwrap();
        assert!(!legal.contains(&report.auth.final_hash));
    });
}

#[test]
fn c6_break_vs_normal_exit() {
    criterion("6 break vs normal exit", || {
        let a = analyzed("breakloop");
        let challenge = Challenge::fresh(a.cfg.program_digest);
        // Even input drains to 0 (normal exit through the header); odd
        // input hits the sentinel 1 and breaks out mid-body.
        let (_, normal) = run_attested(&a, vec![8], &challenge, &DEMO_KEY, None).unwrap();
        let (_, broken) = run_attested(&a, vec![7], &challenge, &DEMO_KEY, None).unwrap();
        assert_ne!(normal.auth.final_hash, broken.auth.final_hash);
        assert!(matches!(normal.auth.records[0].exit_kind, ExitKind::Normal));
        assert!(matches!(broken.auth.records[0].exit_kind, ExitKind::Break(_)));
    });
}

#[test]
fn c7_protocol_loopback() {
    criterion("7 protocol loopback", || {
        // Golden challenge frame, field by field against fixed bytes.
        let c = Challenge {
            program_digest: [0xaa; 32],
            region_begin: 6,
            region_end: 12,
            nonce: [0xbb; 16],
            iv: None,
        };
        let mut golden = Vec::new();
        golden.extend_from_slice(b"CFA1");
        golden.push(0x01);
        golden.extend_from_slice(&[0xaa; 32]);
        golden.extend_from_slice(&6u32.to_le_bytes());
        golden.extend_from_slice(&12u32.to_le_bytes());
        golden.extend_from_slice(&[0xbb; 16]);
        golden.push(0x00);
        assert_eq!(encode_challenge(&c), golden);

        // Live loopback: session 1 verifies, session 2 replays session 1's
        // report against a fresh nonce and is rejected.
        let a = analyzed("while");
        let db = enumerate_measurements(&a, &EnumBounds::default());
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let template = Challenge::fresh(a.cfg.program_digest);
        let server = {
            let db = db.clone();
            thread::spawn(move || {
                let mut verdicts = Vec::new();
                serve_listener(
                    listener,
                    &template,
                    &db,
                    &Policy::default(),
                    &DEMO_KEY,
                    Some(2),
                    |v| verdicts.push(v.clone()),
                )
                .unwrap();
                verdicts
            })
        };
        let (_, _, report, verdict) = attest(addr, &a, vec![3], &DEMO_KEY, None).unwrap();
        assert!(verdict.is_valid(), "{verdict:?}");

        use cfa::wire::{decode_challenge, read_frame, write_frame};
        let mut stream = std::net::TcpStream::connect(addr).unwrap();
        let _fresh = decode_challenge(&read_frame(&mut stream).unwrap()).unwrap();
        write_frame(&mut stream, &encode_report(&report)).unwrap();
        let replayed: Verdict =
            serde_json::from_slice(&read_frame(&mut stream).unwrap()).unwrap();
        assert!(!replayed.is_valid(), "replay accepted: {replayed:?}");

        let verdicts = server.join().unwrap();
        assert_eq!(verdicts.len(), 2);
        assert!(verdicts[0].is_valid() && !verdicts[1].is_valid());
    });
}

#[test]
fn c8_linear_overhead() {
    criterion("8 linear measurement overhead", || {
        // Measurement cost must grow linearly with the number of branch
        // events: time attested runs at event counts spanning 10^3..10^6
        // and check the least-squares fit.
        let a = analyzed("while");
        let challenge = Challenge::fresh(a.cfg.program_digest);
        let mut points = Vec::new();
        for target_events in [1_000u64, 10_000, 100_000, 1_000_000] {
            // Each iteration of the counted loop contributes two events,
            // plus one entering and one leaving the loop.
            let n = ((target_events - 2) / 2) as i32;
            let start = Instant::now();
            let (result, _) =
                run_attested(&a, vec![n], &challenge, &DEMO_KEY, None).unwrap();
            let secs = start.elapsed().as_secs_f64();
            assert_eq!(result.events, target_events);
            points.push((result.events as f64, secs));
        }

        let n = points.len() as f64;
        let (sx, sy): (f64, f64) = (
            points.iter().map(|p| p.0).sum(),
            points.iter().map(|p| p.1).sum(),
        );
        let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let intercept = (sy - slope * sx) / n;
        let mean_y = sy / n;
        let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
        let ss_res: f64 = points
            .iter()
            .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
            .sum();
        let r2 = 1.0 - ss_res / ss_tot;
        println!("  events vs seconds {points:?}  R^2 {r2:.5}");
        assert!(r2 >= 0.99, "nonlinear overhead: R^2 {r2:.5} from {points:?}");
    });
}
