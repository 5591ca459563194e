//! The trusted measurement engine: consumes branch events, maintains the
//! cumulative hash chain with per-loop sub-chains and path counters, matches
//! calls to returns on a shadow stack, and signs the resulting authenticator.
//!
//! Loops are measured as sub-programs: entering a loop captures the chain
//! value as the loop's context hash and starts a fresh sub-chain; each return
//! to the header counts one iteration path; leaving the loop resumes the
//! outer chain from the context hash extended by the exit node, so the final
//! main-chain hash is independent of the iteration count.

use std::collections::{BTreeMap, HashSet};

use blake2::digest::{FixedOutput, KeyInit, Update};
use blake2::{Blake2s256, Blake2sMac256, Digest};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cfg::AnalyzedProgram;
use crate::isa::{Addr, BranchEvent, BranchKind};
use crate::verifier::Challenge;

pub const ZERO_HASH: [u8; 32] = [0u8; 32];

/// One measurement step: BLAKE2s-256 over the 40-byte input
/// `h_prev || LE32(node_entry) || LE32(branch_src)`, where the node id is the
/// (entry, exit) address pair of the basic block just executed.
pub fn extend(h_prev: &[u8; 32], node_entry: Addr, branch_src: Addr) -> [u8; 32] {
    let mut h = Blake2s256::new();
    Digest::update(&mut h, h_prev);
    Digest::update(&mut h, node_entry.to_le_bytes());
    Digest::update(&mut h, branch_src.to_le_bytes());
    h.finalize().into()
}

/// Keyed BLAKE2s-256 MAC over the canonical Auth serialization and the
/// challenge nonce.
pub fn report_tag(key: &[u8; 32], auth_bytes: &[u8], nonce: &[u8; 16]) -> [u8; 32] {
    let mut mac = <Blake2sMac256 as KeyInit>::new_from_slice(key).expect("32-byte key");
    Update::update(&mut mac, auth_bytes);
    Update::update(&mut mac, nonce);
    let out = mac.finalize_fixed();
    out.into()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("challenge digest does not match the analyzed program")]
    DigestMismatch,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitKind {
    Normal,
    /// The loop was terminated from the body node whose entry is given.
    Break(Addr),
    /// Shadow-stack underflow observed at the given return destination;
    /// not a loop record, but serialized alongside them as evidence.
    Anomaly(Addr),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopRecord {
    pub header_entry: Addr,
    #[serde(with = "crate::hex32")]
    pub context_hash: [u8; 32],
    /// Distinct iteration-path hashes with their observed counts, in order
    /// of first occurrence.
    pub paths: Vec<([u8; 32], u32)>,
    pub exit_kind: ExitKind,
}

impl LoopRecord {
    pub fn is_anomaly(&self) -> bool {
        matches!(self.exit_kind, ExitKind::Anomaly(_))
    }

    pub fn total_count(&self) -> u32 {
        self.paths.iter().map(|(_, c)| c).sum()
    }
}

/// The attestation payload: final main-chain hash plus per-loop records.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Auth {
    #[serde(with = "crate::hex32")]
    pub final_hash: [u8; 32],
    pub records: Vec<LoopRecord>,
    #[serde(with = "crate::hex32")]
    pub program_digest: [u8; 32],
}

impl Auth {
    /// Canonical serialization, also the MAC input:
    /// final_hash (32) || program_digest (32) || u16 LE record count ||
    /// records, each header_entry u32 || context_hash (32) || exit_kind u8
    /// (0 Normal, 1 Break, 2 anomaly) || [address u32 for Break/anomaly] ||
    /// u16 LE path count || (path_hash (32) || count u32)*.
    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.final_hash);
        out.extend_from_slice(&self.program_digest);
        out.extend_from_slice(&(self.records.len() as u16).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&r.header_entry.to_le_bytes());
            out.extend_from_slice(&r.context_hash);
            match r.exit_kind {
                ExitKind::Normal => out.push(0),
                ExitKind::Break(addr) => {
                    out.push(1);
                    out.extend_from_slice(&addr.to_le_bytes());
                }
                ExitKind::Anomaly(addr) => {
                    out.push(2);
                    out.extend_from_slice(&addr.to_le_bytes());
                }
            }
            out.extend_from_slice(&(r.paths.len() as u16).to_le_bytes());
            for (h, c) in &r.paths {
                out.extend_from_slice(h);
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out
    }

    pub fn from_canonical_bytes(bytes: &[u8]) -> Option<(Auth, usize)> {
        let mut at = 0usize;
        let take = |at: &mut usize, n: usize| -> Option<&[u8]> {
            let s = bytes.get(*at..*at + n)?;
            *at += n;
            Some(s)
        };
        let final_hash: [u8; 32] = take(&mut at, 32)?.try_into().ok()?;
        let program_digest: [u8; 32] = take(&mut at, 32)?.try_into().ok()?;
        let count = u16::from_le_bytes(take(&mut at, 2)?.try_into().ok()?);
        let mut records = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let header_entry = u32::from_le_bytes(take(&mut at, 4)?.try_into().ok()?);
            let context_hash: [u8; 32] = take(&mut at, 32)?.try_into().ok()?;
            let exit_kind = match take(&mut at, 1)?[0] {
                0 => ExitKind::Normal,
                1 => ExitKind::Break(u32::from_le_bytes(take(&mut at, 4)?.try_into().ok()?)),
                2 => ExitKind::Anomaly(u32::from_le_bytes(take(&mut at, 4)?.try_into().ok()?)),
                _ => return None,
            };
            let path_count = u16::from_le_bytes(take(&mut at, 2)?.try_into().ok()?);
            let mut paths = Vec::with_capacity(path_count as usize);
            for _ in 0..path_count {
                let h: [u8; 32] = take(&mut at, 32)?.try_into().ok()?;
                let c = u32::from_le_bytes(take(&mut at, 4)?.try_into().ok()?);
                paths.push((h, c));
            }
            records.push(LoopRecord {
                header_entry,
                context_hash,
                paths,
                exit_kind,
            });
        }
        Some((
            Auth {
                final_hash,
                records,
                program_digest,
            },
            at,
        ))
    }
}

/// Signed attestation response.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub auth: Auth,
    #[serde(with = "crate::hex32")]
    pub tag: [u8; 32],
}

impl Report {
    pub fn verify_tag(&self, key: &[u8; 32], nonce: &[u8; 16]) -> bool {
        self.tag == report_tag(key, &self.auth.to_canonical_bytes(), nonce)
    }
}

#[derive(Clone, Debug)]
struct LoopContext {
    header_entry: Addr,
    /// Chain value captured at loop entry, including the entering node.
    context_hash: [u8; 32],
    sub_hash: [u8; 32],
    /// (path hash, count) in order of first occurrence.
    path_counts: Vec<([u8; 32], u32)>,
    /// Call depth at loop entry; detection is suspended while the current
    /// depth exceeds it, and the context is closed when depth drops below.
    entry_depth: usize,
}

/// Static lookup tables the engine needs at runtime: which addresses are
/// loop headers and which instruction addresses belong to each loop body.
#[derive(Clone, Debug)]
pub struct EngineTables {
    pub program_digest: [u8; 32],
    bodies: BTreeMap<Addr, HashSet<Addr>>,
}

impl EngineTables {
    pub fn from_analysis(a: &AnalyzedProgram) -> Self {
        EngineTables {
            program_digest: a.cfg.program_digest,
            bodies: a.loops.body_addr_sets(&a.cfg).into_iter().collect(),
        }
    }

    fn is_header(&self, addr: Addr) -> bool {
        self.bodies.contains_key(&addr)
    }

    fn body(&self, header: Addr) -> &HashSet<Addr> {
        &self.bodies[&header]
    }
}

/// Live measurement state of one attestation session.
#[derive(Clone, Debug)]
pub struct MeasurementState {
    tables: EngineTables,
    main_hash: [u8; 32],
    loop_stack: Vec<LoopContext>,
    /// (expected return address, loop stack depth at the call).
    shadow_stack: Vec<(Addr, usize)>,
    call_depth: usize,
    records: Vec<LoopRecord>,
    current_node_entry: Addr,
    challenge_iv: [u8; 32],
    events_seen: u64,
}

impl MeasurementState {
    /// Hash of the innermost open sub-chain, or the main chain.
    fn active(&self) -> [u8; 32] {
        self.loop_stack
            .last()
            .map(|c| c.sub_hash)
            .unwrap_or(self.main_hash)
    }

    fn set_active(&mut self, h: [u8; 32]) {
        match self.loop_stack.last_mut() {
            Some(c) => c.sub_hash = h,
            None => self.main_hash = h,
        }
    }

    pub fn current_node_entry(&self) -> Addr {
        self.current_node_entry
    }

    pub fn main_hash(&self) -> [u8; 32] {
        self.main_hash
    }

    pub fn events_seen(&self) -> u64 {
        self.events_seen
    }

    /// Open loop contexts, innermost last. Exposed for inspection in tests
    /// and examples.
    pub fn open_loops(&self) -> Vec<Addr> {
        self.loop_stack.iter().map(|c| c.header_entry).collect()
    }

    fn open_context(&mut self, header: Addr) {
        let context_hash = self.active();
        self.loop_stack.push(LoopContext {
            header_entry: header,
            context_hash,
            sub_hash: ZERO_HASH,
            path_counts: Vec::new(),
            entry_depth: self.call_depth,
        });
    }

    /// Feed one branch event. `ev.src` must lie in the node whose entry is
    /// the current node entry; the destination becomes the next node entry.
    pub fn record_event(&mut self, ev: BranchEvent) {
        self.events_seen += 1;
        let node_entry = self.current_node_entry;
        let node_exit = ev.src;

        // Call bookkeeping. A mismatched return does not abort: the illegal
        // edge drives the chain to an unknown value, which is the detection
        // mechanism. Underflow is recorded as evidence.
        match ev.kind {
            BranchKind::Call | BranchKind::IndirectCall => {
                self.shadow_stack.push((ev.src + 1, self.loop_stack.len()));
                self.call_depth += 1;
            }
            BranchKind::Return => {
                if self.shadow_stack.pop().is_none() {
                    self.records.push(LoopRecord {
                        header_entry: ev.src,
                        context_hash: self.active(),
                        paths: Vec::new(),
                        exit_kind: ExitKind::Anomaly(ev.dst),
                    });
                }
                self.call_depth = self.call_depth.saturating_sub(1);
            }
            _ => {}
        }

        let mut node_applied = false;

        // Loop exits, cascading outward. A context closes when the event
        // leaves its body by an exit edge, or when the call depth drops
        // below the depth it was opened at.
        loop {
            let Some(ctx) = self.loop_stack.last() else {
                break;
            };
            let depth_exit = self.call_depth < ctx.entry_depth;
            let suspended = self.call_depth > ctx.entry_depth;
            let body = self.tables.body(ctx.header_entry);
            let edge_exit =
                !suspended && body.contains(&ev.src) && !body.contains(&ev.dst);
            if !(depth_exit || edge_exit) {
                break;
            }
            let ctx = self.loop_stack.pop().unwrap();
            let exit_kind = if !depth_exit && node_entry == ctx.header_entry {
                ExitKind::Normal
            } else {
                ExitKind::Break(node_entry)
            };
            self.records.push(LoopRecord {
                header_entry: ctx.header_entry,
                context_hash: ctx.context_hash,
                paths: ctx.path_counts,
                exit_kind,
            });
            // Resume the outer chain from right before the loop was entered,
            // extended by the node the loop exited through.
            let resumed = extend(&ctx.context_hash, node_entry, node_exit);
            self.set_active(resumed);
            node_applied = true;
        }

        // Back edge: one more iteration of the innermost open loop.
        let mut back_edge = false;
        if let Some(ctx) = self.loop_stack.last() {
            if self.call_depth == ctx.entry_depth
                && ev.dst == ctx.header_entry
                && self.tables.body(ctx.header_entry).contains(&ev.src)
            {
                let ctx = self.loop_stack.last_mut().unwrap();
                if !node_applied {
                    ctx.sub_hash = extend(&ctx.sub_hash, node_entry, node_exit);
                }
                let h = ctx.sub_hash;
                match ctx.path_counts.iter_mut().find(|(ph, _)| *ph == h) {
                    Some((_, c)) => *c += 1,
                    None => ctx.path_counts.push((h, 1)),
                }
                ctx.sub_hash = ZERO_HASH;
                node_applied = true;
                back_edge = true;
            }
        }

        // Loop entry: the chain value including the entering node becomes
        // the context hash, and a fresh sub-chain starts at zero.
        if !back_edge && self.tables.is_header(ev.dst) {
            if !node_applied {
                let h = extend(&self.active(), node_entry, node_exit);
                self.set_active(h);
                node_applied = true;
            }
            self.open_context(ev.dst);
        }

        if !node_applied {
            let h = extend(&self.active(), node_entry, node_exit);
            self.set_active(h);
        }

        self.current_node_entry = ev.dst;
    }

    /// Close out the session: force-close any loops still open (the program
    /// halted inside them) and produce the authenticator.
    pub fn finalize(mut self) -> Auth {
        while let Some(ctx) = self.loop_stack.pop() {
            self.records.push(LoopRecord {
                header_entry: ctx.header_entry,
                context_hash: ctx.context_hash,
                paths: ctx.path_counts,
                exit_kind: ExitKind::Break(self.current_node_entry),
            });
            let resumed = ctx.context_hash;
            match self.loop_stack.last_mut() {
                Some(outer) => outer.sub_hash = resumed,
                None => self.main_hash = resumed,
            }
        }
        Auth {
            final_hash: self.main_hash,
            records: self.records,
            program_digest: self.tables.program_digest,
        }
    }
}

/// The isolated component holding the attestation key.
#[derive(Clone)]
pub struct MeasurementEngine {
    key: [u8; 32],
}

impl MeasurementEngine {
    pub fn new(key: [u8; 32]) -> Self {
        MeasurementEngine { key }
    }

    /// Initialize a fresh control-flow trace for the challenge, starting at
    /// `begin`. The main chain starts at the challenge IV (zero when none).
    pub fn cfa_init(
        &self,
        challenge: &Challenge,
        tables: &EngineTables,
        begin: Addr,
    ) -> Result<MeasurementState, EngineError> {
        if challenge.program_digest != tables.program_digest {
            return Err(EngineError::DigestMismatch);
        }
        let mut state = MeasurementState {
            tables: tables.clone(),
            main_hash: challenge.iv_or_zero(),
            loop_stack: Vec::new(),
            shadow_stack: Vec::new(),
            call_depth: 0,
            records: Vec::new(),
            current_node_entry: begin,
            challenge_iv: challenge.iv_or_zero(),
            events_seen: 0,
        };
        // Starting directly on a loop header: open its context immediately,
        // keyed by the IV, so the first iteration lands on the sub-chain.
        if state.tables.is_header(begin) {
            state.open_context(begin);
        }
        Ok(state)
    }

    /// Finalize the trace and sign it against the challenge nonce.
    pub fn cfa_quote(&self, state: MeasurementState, challenge: &Challenge) -> Report {
        debug_assert_eq!(state.challenge_iv, challenge.iv_or_zero());
        let auth = state.finalize();
        let tag = report_tag(&self.key, &auth.to_canonical_bytes(), &challenge.nonce);
        Report { auth, tag }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::AnalyzedProgram;
    use crate::isa::{parse_asm, vm_run, Fault, FaultInjection};

    const KEY: [u8; 32] = [7u8; 32];

    fn attest(src: &str, input: Vec<i32>, fault: Option<FaultInjection>) -> (Auth, [u8; 32]) {
        let p = parse_asm(src, "t").unwrap();
        let a = AnalyzedProgram::analyze(p).unwrap();
        let tables = EngineTables::from_analysis(&a);
        let engine = MeasurementEngine::new(KEY);
        let challenge = crate::verifier::Challenge::fresh(a.cfg.program_digest);
        let mut state = engine.cfa_init(&challenge, &tables, 0).unwrap();
        let (_, _, outcome) = vm_run(&a.program, input, |e| state.record_event(e), fault);
        assert!(outcome.is_halted());
        (state.finalize(), a.cfg.program_digest)
    }

    #[test]
    fn extend_matches_manual_blake2s_input_layout() {
        // Independent oracle for the 40-byte preimage layout.
        let h_prev = [0xabu8; 32];
        let mut buf = Vec::new();
        buf.extend_from_slice(&h_prev);
        buf.extend_from_slice(&0x01020304u32.to_le_bytes());
        buf.extend_from_slice(&0x0a0b0c0du32.to_le_bytes());
        let expect: [u8; 32] = Blake2s256::digest(&buf).into();
        assert_eq!(extend(&h_prev, 0x01020304, 0x0a0b0c0d), expect);
    }

    // Counted loop entered by branch:
    //   0 MOV r0, 3 / 1 B loop / 2 loop: CMP r0, 0 / 3 BEQ done
    //   4 SUB r0, 1 / 5 B loop / 6 done: HALT
    const COUNTED: &str = "\
MOV r0, 3
B loop
loop: CMP r0, 0
BEQ done
SUB r0, 1
B loop
done: HALT";

    #[test]
    fn counted_loop_hand_replayed() {
        let (auth, _) = attest(COUNTED, vec![], None);
        // Hand fold. Entry event (node 0..1, src 1) lands on header 2:
        // context includes it. Each iteration: not-taken BEQ (node 2..3,
        // src 3) then back edge B (node 4..5, src 5). Exit: taken BEQ from
        // the header node.
        let context = extend(&ZERO_HASH, 0, 1);
        let path = extend(&extend(&ZERO_HASH, 2, 3), 4, 5);
        let final_hash = extend(&context, 2, 3);
        assert_eq!(auth.final_hash, final_hash);
        assert_eq!(
            auth.records,
            vec![LoopRecord {
                header_entry: 2,
                context_hash: context,
                paths: vec![(path, 3)],
                exit_kind: ExitKind::Normal,
            }]
        );
    }

    #[test]
    fn final_hash_is_loop_count_independent() {
        // Same program shape, different trip counts: identical final hash,
        // identical path hash, different counter.
        let three = attest(COUNTED, vec![], None).0;
        let five = attest(&COUNTED.replace("MOV r0, 3", "MOV r0, 5"), vec![], None).0;
        // Digest differs (different immediate) but chain structure matches.
        assert_eq!(three.final_hash, five.final_hash);
        assert_eq!(three.records[0].paths[0].0, five.records[0].paths[0].0);
        assert_eq!(three.records[0].paths[0].1, 3);
        assert_eq!(five.records[0].paths[0].1, 5);
    }

    // Loop with a break path:
    //   0 MOV r0, 2 / 1 B loop / 2 loop: CMP r0, 0 / 3 BEQ done
    //   4 CMP r0, 1 / 5 BEQ brk / 6 SUB r0, 1 / 7 B loop
    //   8 brk: MOV r1, 9 / 9 B done / 10 done: HALT
    const BREAKY: &str = "\
MOV r0, 2
B loop
loop: CMP r0, 0
BEQ done
CMP r0, 1
BEQ brk
SUB r0, 1
B loop
brk: MOV r1, 9
B done
done: HALT";

    #[test]
    fn break_exit_hand_replayed() {
        let (auth, _) = attest(BREAKY, vec![], None);
        let context = extend(&ZERO_HASH, 0, 1);
        // One completed iteration: BEQ@3 not taken, BEQ@5 not taken, back
        // edge B@7.
        let path = extend(&extend(&extend(&ZERO_HASH, 2, 3), 4, 5), 6, 7);
        // Break from node (4..5) to 8, then B@9 to done.
        let final_hash = extend(&extend(&context, 4, 5), 8, 9);
        assert_eq!(auth.final_hash, final_hash);
        assert_eq!(
            auth.records,
            vec![LoopRecord {
                header_entry: 2,
                context_hash: context,
                paths: vec![(path, 1)],
                exit_kind: ExitKind::Break(4),
            }]
        );
    }

    #[test]
    fn break_and_normal_exits_reach_distinct_finals() {
        let brk = attest(BREAKY, vec![], None).0;
        let normal = attest(&BREAKY.replace("MOV r0, 2", "MOV r0, 0"), vec![], None).0;
        assert_ne!(brk.final_hash, normal.final_hash);
        assert_eq!(normal.records[0].exit_kind, ExitKind::Normal);
        assert!(normal.records[0].paths.is_empty());
    }

    // Direct recursion, measured as a dynamic loop:
    //   0 IN r0 / 1 BL sum / 2 HALT / 3 sum: CMP r0, 0 / 4 BEQ base
    //   5 SUB r0, 1 / 6 BL sum / 7 RET / 8 base: RET
    const RECUR: &str = "\
IN r0
BL sum
HALT
sum: CMP r0, 0
BEQ base
SUB r0, 1
BL sum
RET
base: RET";

    #[test]
    fn recursion_final_is_depth_independent() {
        let depth2 = attest(RECUR, vec![2], None).0;
        let depth5 = attest(RECUR, vec![5], None).0;
        assert_eq!(depth2.final_hash, depth5.final_hash);
        // One record per activation: n + 1 activations for input n.
        assert_eq!(depth2.records.len(), 3);
        assert_eq!(depth5.records.len(), 6);
        // Hand fold: the outermost activation's record carries the main
        // chain's context, and the final hash resumes from it through the
        // outer RET at 7 (second pop of the doubled RET).
        let c1 = extend(&ZERO_HASH, 0, 1);
        assert_eq!(depth2.records.last().unwrap().context_hash, c1);
        assert_eq!(depth2.final_hash, extend(&c1, 7, 7));
        // All deeper activations share one context: the recursive call site
        // reached the same way in every frame.
        let c_rec = extend(&extend(&ZERO_HASH, 3, 4), 5, 6);
        for rec in &depth5.records[..depth5.records.len() - 1] {
            assert_eq!(rec.context_hash, c_rec);
            assert!(rec.paths.is_empty());
        }
    }

    #[test]
    fn hijacked_return_perturbs_the_chain() {
        // Legal vs hijacked-return run of an if/else with two calls.
        let src = "\
IN r0
CMP r0, 1
BNE unpriv
BL fpriv
B join
unpriv: BL funpriv
join: OUT r0
HALT
fpriv: MOV r1, 1
RET
funpriv: MOV r1, 2
RET";
        let legal = attest(src, vec![0], None).0;
        // Redirect funpriv's return into the privileged join path target 4.
        let fault = FaultInjection::single(Fault::HijackReturn {
            ret_pc: 11,
            occurrence: 0,
            target: 4,
        });
        let hijacked = attest(src, vec![0], Some(fault)).0;
        assert_ne!(legal.final_hash, hijacked.final_hash);
    }

    #[test]
    fn auth_canonical_bytes_roundtrip_and_tag() {
        let (auth, _) = attest(BREAKY, vec![], None);
        let bytes = auth.to_canonical_bytes();
        let (back, used) = Auth::from_canonical_bytes(&bytes).unwrap();
        assert_eq!(used, bytes.len());
        assert_eq!(back, auth);

        let nonce = [3u8; 16];
        let tag = report_tag(&KEY, &bytes, &nonce);
        let report = Report { auth, tag };
        assert!(report.verify_tag(&KEY, &nonce));
        assert!(!report.verify_tag(&KEY, &[4u8; 16]));
        assert!(!report.verify_tag(&[8u8; 32], &nonce));
    }

    #[test]
    fn anomaly_record_on_shadow_stack_underflow() {
        // Feed a bare return event with no preceding call.
        let p = parse_asm(COUNTED, "t").unwrap();
        let a = AnalyzedProgram::analyze(p).unwrap();
        let tables = EngineTables::from_analysis(&a);
        let engine = MeasurementEngine::new(KEY);
        let challenge = crate::verifier::Challenge::fresh(a.cfg.program_digest);
        let mut state = engine.cfa_init(&challenge, &tables, 0).unwrap();
        state.record_event(crate::isa::BranchEvent {
            kind: crate::isa::BranchKind::Return,
            src: 5,
            dst: 0,
        });
        let auth = state.finalize();
        assert!(auth.records.iter().any(|r| r.is_anomaly()));
    }
}
