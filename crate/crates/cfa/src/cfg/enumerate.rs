//! Static enumeration of every measurement a legal execution can produce.
//!
//! This is the verifier's independent route to the hash values the engine
//! computes at run time: a DFS over the CFG that folds the same `extend`
//! primitive over node steps, with loops abstracted the way the engine
//! abstracts them (per-loop sub-chains starting at zero, outer chains
//! resuming from the loop's context hash extended by the exit node).
//!
//! Main-chain paths are stored as explicit step sequences rather than
//! hashes, so the database answers queries for any challenge IV: the final
//! and context hashes are folds of the stored steps from the IV. Loop path
//! hashes are IV-independent because every sub-chain starts at zero.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::engine::{extend, Auth, ZERO_HASH};
use crate::isa::{Addr, Opcode};

use super::{AnalyzedProgram, EdgeKind, ExitClass, LoopKind, NodeId};

/// Exploration limits. Enumeration stops (and marks the database
/// incomplete) rather than exceed them.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnumBounds {
    /// Maximum number of distinct whole-region paths.
    pub max_paths: usize,
    /// Total DFS step budget across the whole enumeration.
    pub max_steps: usize,
    /// Fixpoint rounds for recursive-call abstraction.
    pub max_rounds: usize,
}

impl Default for EnumBounds {
    fn default() -> Self {
        EnumBounds {
            max_paths: 100_000,
            max_steps: 2_000_000,
            max_rounds: 8,
        }
    }
}

/// Where a loop exit resumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExitTo {
    /// Fixed address (branch-target exits).
    Addr(Addr),
    /// Return to the caller's return site; the concrete address depends on
    /// the call site and is filled in where the loop is abstracted.
    Caller,
}

/// One loop-leaving measurement step `(node entry, branch source)` plus
/// where it lands, as seen by the outer chain when the loop is abstracted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExitStep {
    pub entry: Addr,
    pub src: Addr,
    pub to: ExitTo,
    pub class: ExitClass,
}

/// Everything enumerable about one loop: its legal iteration-path hashes,
/// the context hashes it can be entered with from enclosing sub-chains
/// (IV-dependent top-level contexts live in [`PathEntry::context_points`]
/// instead), and its exit steps.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LoopPathSet {
    pub header: Addr,
    pub kind: LoopKind,
    /// Lowercase-hex path hash -> human description of the iteration path.
    pub paths: BTreeMap<String, String>,
    /// IV-independent context hashes (loop entered from within another
    /// sub-chain, or recursion activations), lowercase hex.
    pub fixed_contexts: BTreeSet<String>,
    pub exits: Vec<ExitStep>,
    /// The program can halt while this loop is still open.
    pub halt_inside: bool,
    pub complete: bool,
}

/// One legal whole-region control-flow path with loops abstracted.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathEntry {
    /// Measurement steps `(node entry, branch source)` in execution order.
    pub steps: Vec<(Addr, Addr)>,
    /// `(loop header, i)`: folding the first `i` steps from the IV yields a
    /// legal context hash for that loop on this path.
    pub context_points: Vec<(Addr, usize)>,
    pub description: String,
}

/// A measurement observed by actually running the program, valid only for
/// the zero IV (profiling runs use unkeyed whole-program challenges).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfiledEntry {
    pub input: Vec<i32>,
    #[serde(with = "crate::hex32")]
    pub final_hash: [u8; 32],
    /// (loop header, context hash hex) pairs from the observed records.
    pub contexts: Vec<(Addr, String)>,
    pub description: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasurementDb {
    #[serde(with = "crate::hex32")]
    pub program_digest: [u8; 32],
    pub region_begin: Addr,
    pub region_end: Addr,
    pub entries: Vec<PathEntry>,
    pub profiled: Vec<ProfiledEntry>,
    pub loop_paths: BTreeMap<Addr, LoopPathSet>,
    /// False when bounds were hit or indirect targets remain unresolved;
    /// an incomplete database can reject paths that are actually legal.
    pub complete: bool,
}

/// Hash-indexed answers for one (IV, region) query.
#[derive(Clone, Debug, Default)]
pub struct DbView {
    pub final_hashes: HashMap<[u8; 32], String>,
    pub contexts: HashMap<Addr, HashSet<[u8; 32]>>,
}

/// Fold measurement steps over the extend primitive starting from `iv`.
pub fn fold_steps(iv: &[u8; 32], steps: &[(Addr, Addr)]) -> [u8; 32] {
    steps
        .iter()
        .fold(*iv, |h, &(entry, src)| extend(&h, entry, src))
}

impl MeasurementDb {
    pub fn view(&self, iv: [u8; 32], begin: Addr, end: Addr) -> DbView {
        let mut view = DbView::default();
        if (begin, end) != (self.region_begin, self.region_end) {
            return view;
        }
        for entry in &self.entries {
            // One prefix-fold pass serves both the final hash and every
            // context point.
            let mut prefix = Vec::with_capacity(entry.steps.len() + 1);
            let mut h = iv;
            prefix.push(h);
            for &(e, s) in &entry.steps {
                h = extend(&h, e, s);
                prefix.push(h);
            }
            view.final_hashes
                .entry(h)
                .or_insert_with(|| entry.description.clone());
            for &(header, i) in &entry.context_points {
                view.contexts.entry(header).or_default().insert(prefix[i]);
            }
        }
        for (&header, set) in &self.loop_paths {
            let ctxs = view.contexts.entry(header).or_default();
            for hx in &set.fixed_contexts {
                if let Ok(bytes) = hex_to_32(hx) {
                    ctxs.insert(bytes);
                }
            }
        }
        if iv == ZERO_HASH {
            for p in &self.profiled {
                view.final_hashes
                    .entry(p.final_hash)
                    .or_insert_with(|| p.description.clone());
                for (header, hx) in &p.contexts {
                    if let Ok(bytes) = hex_to_32(hx) {
                        view.contexts.entry(*header).or_default().insert(bytes);
                    }
                }
            }
        }
        view
    }

    /// Merge a measurement observed from a real (zero-IV, whole-region)
    /// profiling run: its final hash, loop contexts, and loop path hashes
    /// become known-legal.
    pub fn absorb_profiled(&mut self, auth: &Auth, input: &[i32]) {
        if auth.records.iter().any(|r| r.is_anomaly()) {
            return;
        }
        let mut contexts = Vec::new();
        for rec in &auth.records {
            contexts.push((rec.header_entry, hex::encode(rec.context_hash)));
            let set = self
                .loop_paths
                .entry(rec.header_entry)
                .or_insert_with(|| LoopPathSet {
                    header: rec.header_entry,
                    kind: LoopKind::Natural,
                    paths: BTreeMap::new(),
                    fixed_contexts: BTreeSet::new(),
                    exits: Vec::new(),
                    halt_inside: false,
                    complete: false,
                });
            for (h, _) in &rec.paths {
                set.paths
                    .entry(hex::encode(h))
                    .or_insert_with(|| format!("observed profiling input {input:?}"));
            }
        }
        self.profiled.push(ProfiledEntry {
            input: input.to_vec(),
            final_hash: auth.final_hash,
            contexts,
            description: format!("profiled input {input:?}"),
        });
    }
}

fn hex_to_32(s: &str) -> Result<[u8; 32], ()> {
    let v = hex::decode(s).map_err(|_| ())?;
    v.try_into().map_err(|_| ())
}

/// Enumerate the measurement database for a whole-program run (entry to
/// HALT).
pub fn enumerate_measurements(a: &AnalyzedProgram, bounds: &EnumBounds) -> MeasurementDb {
    enumerate_region(a, bounds, 0, crate::verifier::REGION_END_HALT)
}

/// Enumerate for an attested region `[begin, end)`: measurement starts with
/// the first event after `begin` and stops when the program counter reaches
/// `end` (an event landing exactly on `end` is still measured) or halts.
pub fn enumerate_region(
    a: &AnalyzedProgram,
    bounds: &EnumBounds,
    begin: Addr,
    end: Addr,
) -> MeasurementDb {
    let mut e = Enumerator::new(a, bounds, end);
    e.run_loops();
    let entries = e.run_main(begin);
    e.finish(begin, entries)
}

/// Per-loop enumeration result, before packaging into [`LoopPathSet`].
#[derive(Clone, Debug, Default)]
struct LoopSummary {
    paths: BTreeMap<String, String>,
    exits: BTreeSet<ExitStep>,
    halt_inside: bool,
    complete: bool,
}

#[derive(Clone, Debug)]
struct WalkState {
    node: NodeId,
    cur_entry: Addr,
    /// Call stack of (edge index, return address) for matching returns.
    calls: Vec<(u32, Addr)>,
    trail: Vec<String>,
}

struct Enumerator<'a> {
    a: &'a AnalyzedProgram,
    bounds: &'a EnumBounds,
    end: Addr,
    /// Loop body instruction-address sets keyed by header entry.
    bodies: BTreeMap<Addr, HashSet<Addr>>,
    kinds: BTreeMap<Addr, LoopKind>,
    summaries: BTreeMap<Addr, LoopSummary>,
    fixed_contexts: BTreeMap<Addr, BTreeSet<[u8; 32]>>,
    work: usize,
    complete: bool,
}

impl<'a> Enumerator<'a> {
    fn new(a: &'a AnalyzedProgram, bounds: &'a EnumBounds, end: Addr) -> Self {
        let bodies = a.loops.body_addr_sets(&a.cfg);
        let kinds = a
            .loops
            .loops
            .iter()
            .map(|l| (l.header_entry, l.kind))
            .collect();
        Enumerator {
            a,
            bounds,
            end,
            bodies,
            kinds,
            summaries: BTreeMap::new(),
            fixed_contexts: BTreeMap::new(),
            work: 0,
            complete: a.cfg.unresolved_indirect.is_empty(),
        }
    }

    fn spend(&mut self) -> bool {
        self.work += 1;
        if self.work > self.bounds.max_steps {
            self.complete = false;
            return false;
        }
        true
    }

    fn exit_op(&self, node: NodeId) -> Opcode {
        let exit = self.a.cfg.node(node).exit;
        self.a.program.instruction(exit).unwrap().opcode
    }

    /// Process every loop, innermost dependencies first. A loop whose body
    /// reaches another loop's header defers until that loop is summarized.
    fn run_loops(&mut self) {
        let mut pending: Vec<Addr> = self.bodies.keys().copied().collect();
        while !pending.is_empty() {
            let mut progressed = false;
            let mut still = Vec::new();
            for header in pending {
                match self.explore_loop(header) {
                    Ok(summary) => {
                        self.summaries.insert(header, summary);
                        progressed = true;
                    }
                    Err(_defer) => still.push(header),
                }
            }
            pending = still;
            if !progressed {
                // Abstraction cycle (should be ruled out by analysis);
                // give the stragglers empty, incomplete summaries.
                self.complete = false;
                for header in pending.drain(..) {
                    self.summaries.insert(
                        header,
                        LoopSummary {
                            complete: false,
                            ..LoopSummary::default()
                        },
                    );
                }
            }
        }
    }

    fn explore_loop(&mut self, header: Addr) -> Result<LoopSummary, Addr> {
        let kind = self.kinds[&header];
        let start = self
            .a
            .cfg
            .node_at_entry(header)
            .expect("loop header is a block entry");
        let mut exits: BTreeSet<ExitStep> = BTreeSet::new();
        let rounds = match kind {
            LoopKind::Natural => 1,
            LoopKind::CallCycle => self.bounds.max_rounds,
        };
        let mut out = LoopSummary::default();
        for round in 0..rounds {
            out = LoopSummary {
                complete: true,
                ..LoopSummary::default()
            };
            let st = WalkState {
                node: start,
                cur_entry: header,
                calls: Vec::new(),
                trail: vec![header.to_string()],
            };
            self.walk_local(header, st, ZERO_HASH, &exits, &mut out)?;
            if kind == LoopKind::Natural || (round > 0 && out.exits == exits) {
                return Ok(out);
            }
            exits = out.exits.clone();
        }
        // Recursion abstraction did not reach a fixpoint within bounds.
        out.complete = false;
        self.complete = false;
        Ok(out)
    }

    fn walk_local(
        &mut self,
        header: Addr,
        st: WalkState,
        h: [u8; 32],
        self_exits: &BTreeSet<ExitStep>,
        out: &mut LoopSummary,
    ) -> Result<(), Addr> {
        if !self.spend() {
            out.complete = false;
            return Ok(());
        }
        let node = *self.a.cfg.node(st.node);
        match self.exit_op(st.node) {
            Opcode::Halt => {
                out.halt_inside = true;
                Ok(())
            }
            op if !op.is_control_flow() => {
                // Fall-through block boundary: no branch event, the
                // engine-visible node keeps growing.
                let next = self
                    .a
                    .cfg
                    .successors(st.node)
                    .find(|e| e.kind == EdgeKind::Jump)
                    .map(|e| e.dst);
                match next {
                    Some(n) => {
                        let mut st = st;
                        st.node = n;
                        self.walk_local(header, st, h, self_exits, out)
                    }
                    None => Ok(()), // runs off the end; VM faults, no measurement
                }
            }
            op => {
                let step = (st.cur_entry, node.exit);
                if op == Opcode::Ret && st.calls.is_empty() {
                    // Returning out of the frame the loop lives in.
                    out.exits.insert(ExitStep {
                        entry: st.cur_entry,
                        src: node.exit,
                        to: ExitTo::Caller,
                        class: ExitClass::Break,
                    });
                    return Ok(());
                }
                let edges: Vec<_> = self.a.cfg.successors(st.node).copied().collect();
                for edge in edges {
                    match edge.kind {
                        EdgeKind::Return => {
                            let &(idx, ret) = st.calls.last().unwrap();
                            if edge.index != Some(idx) {
                                continue;
                            }
                            let mut st2 = st.clone();
                            st2.calls.pop();
                            self.after_local(header, st2, h, step, ret, false, self_exits, out)?;
                        }
                        EdgeKind::Call => {
                            let dst = self.a.cfg.node(edge.dst).entry;
                            let mut st2 = st.clone();
                            if self.bodies.contains_key(&dst) {
                                self.after_local(header, st2, h, step, dst, true, self_exits, out)?;
                            } else {
                                st2.calls.push((edge.index.unwrap(), node.exit + 1));
                                self.after_local(header, st2, h, step, dst, false, self_exits, out)?;
                            }
                        }
                        _ => {
                            let dst = self.a.cfg.node(edge.dst).entry;
                            self.after_local(
                                header,
                                st.clone(),
                                h,
                                step,
                                dst,
                                false,
                                self_exits,
                                out,
                            )?;
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// Apply one measurement step inside loop `header`'s sub-chain and
    /// classify the destination: back edge, loop exit, nested-loop
    /// abstraction, or plain continuation. Mirrors the engine's event
    /// phases.
    #[allow(clippy::too_many_arguments)]
    fn after_local(
        &mut self,
        header: Addr,
        mut st: WalkState,
        h: [u8; 32],
        step: (Addr, Addr),
        dst: Addr,
        via_call: bool,
        self_exits: &BTreeSet<ExitStep>,
        out: &mut LoopSummary,
    ) -> Result<(), Addr> {
        if !self.spend() {
            out.complete = false;
            return Ok(());
        }
        let body = &self.bodies[&header];
        let suspended = !st.calls.is_empty();

        // Back edge: one completed iteration path.
        if dst == header && !via_call && !suspended {
            let h = extend(&h, step.0, step.1);
            out.paths
                .entry(hex::encode(h))
                .or_insert_with(|| format!("iteration {}", st.trail.join("→")));
            return Ok(());
        }

        // Leaving the loop body (only visible while not inside a call).
        if !suspended && !body.contains(&dst) && !self.bodies.contains_key(&dst) {
            out.exits.insert(ExitStep {
                entry: step.0,
                src: step.1,
                to: ExitTo::Addr(dst),
                class: if step.0 == header {
                    ExitClass::Normal
                } else {
                    ExitClass::Break
                },
            });
            return Ok(());
        }
        if !suspended && !body.contains(&dst) && self.bodies.contains_key(&dst) {
            // Exit landing directly on another loop's header: still an exit
            // of this loop; the outer chain handles the new loop.
            out.exits.insert(ExitStep {
                entry: step.0,
                src: step.1,
                to: ExitTo::Addr(dst),
                class: if step.0 == header {
                    ExitClass::Normal
                } else {
                    ExitClass::Break
                },
            });
            return Ok(());
        }

        // Nested loop (or recursion activation): abstract it.
        if self.bodies.contains_key(&dst) {
            let summary = if dst == header {
                LoopSummary {
                    exits: self_exits.clone(),
                    complete: true,
                    ..LoopSummary::default()
                }
            } else {
                match self.summaries.get(&dst) {
                    Some(s) => s.clone(),
                    None => return Err(dst),
                }
            };
            let h = extend(&h, step.0, step.1);
            self.fixed_contexts.entry(dst).or_default().insert(h);
            st.trail.push(format!("[loop {dst}]"));
            if summary.halt_inside {
                out.halt_inside = true;
            }
            if !summary.complete {
                out.complete = false;
            }
            for exit in &summary.exits {
                let mut st2 = st.clone();
                let resume_dst = match exit.to {
                    ExitTo::Addr(d) => d,
                    ExitTo::Caller => {
                        if via_call {
                            step.1 + 1
                        } else {
                            match st2.calls.pop() {
                                Some((_, ret)) => ret,
                                None => {
                                    // The inner loop returns past this
                                    // frame: that exits this loop too.
                                    out.exits.insert(ExitStep {
                                        entry: exit.entry,
                                        src: exit.src,
                                        to: ExitTo::Caller,
                                        class: ExitClass::Break,
                                    });
                                    continue;
                                }
                            }
                        }
                    }
                };
                self.after_local(
                    header,
                    st2,
                    h,
                    (exit.entry, exit.src),
                    resume_dst,
                    false,
                    self_exits,
                    out,
                )?;
            }
            return Ok(());
        }

        // Plain step.
        let h = extend(&h, step.0, step.1);
        st.cur_entry = dst;
        st.trail.push(dst.to_string());
        st.node = self
            .a
            .cfg
            .node_at_entry(dst)
            .expect("branch targets are block entries");
        self.walk_local(header, st, h, self_exits, out)
    }

    /// Enumerate the main-chain paths for the region starting at `begin`.
    fn run_main(&mut self, begin: Addr) -> Vec<PathEntry> {
        let mut entries = Vec::new();
        let mut seen: HashSet<Vec<(Addr, Addr)>> = HashSet::new();
        let Some(start) = self.a.cfg.node_containing(begin) else {
            self.complete = false;
            return entries;
        };
        let st = MainState {
            walk: WalkState {
                node: start,
                cur_entry: begin,
                calls: Vec::new(),
                trail: vec![begin.to_string()],
            },
            arrival: begin,
            steps: Vec::new(),
            cpoints: Vec::new(),
        };
        if self.bodies.contains_key(&begin) {
            // Region starts on a loop header: the engine opens the context
            // at init with the IV itself as context hash.
            let mut st = st;
            st.cpoints.push((begin, 0));
            self.enter_abstraction(begin, st, false, 0, &mut entries, &mut seen);
        } else {
            self.walk_main(st, &mut entries, &mut seen);
        }
        entries
    }

    fn emit(
        &mut self,
        st: &MainState,
        note: &str,
        entries: &mut Vec<PathEntry>,
        seen: &mut HashSet<Vec<(Addr, Addr)>>,
    ) {
        if entries.len() >= self.bounds.max_paths {
            self.complete = false;
            return;
        }
        if !seen.insert(st.steps.clone()) {
            return;
        }
        let mut description = st.walk.trail.join("→");
        if !note.is_empty() {
            description.push_str("→");
            description.push_str(note);
        }
        entries.push(PathEntry {
            steps: st.steps.clone(),
            context_points: st.cpoints.clone(),
            description,
        });
    }

    fn walk_main(
        &mut self,
        st: MainState,
        entries: &mut Vec<PathEntry>,
        seen: &mut HashSet<Vec<(Addr, Addr)>>,
    ) {
        if !self.spend() {
            return;
        }
        let node = *self.a.cfg.node(st.walk.node);
        // Region end reached within this block (no event fires on the way).
        if self.end != crate::verifier::REGION_END_HALT
            && st.arrival <= self.end
            && self.end <= node.exit
        {
            self.emit(&st, "end", entries, seen);
            return;
        }
        match self.exit_op(st.walk.node) {
            Opcode::Halt => self.emit(&st, "halt", entries, seen),
            op if !op.is_control_flow() => {
                let next = self
                    .a
                    .cfg
                    .successors(st.walk.node)
                    .find(|e| e.kind == EdgeKind::Jump)
                    .map(|e| e.dst);
                if let Some(n) = next {
                    let mut st = st;
                    st.walk.node = n;
                    st.arrival = self.a.cfg.node(n).entry;
                    self.walk_main(st, entries, seen);
                }
            }
            op => {
                let step = (st.walk.cur_entry, node.exit);
                if op == Opcode::Ret && st.walk.calls.is_empty() {
                    return; // top-level return underflows the VM: no report
                }
                let edges: Vec<_> = self.a.cfg.successors(st.walk.node).copied().collect();
                for edge in edges {
                    match edge.kind {
                        EdgeKind::Return => {
                            let &(idx, ret) = st.walk.calls.last().unwrap();
                            if edge.index != Some(idx) {
                                continue;
                            }
                            let mut st2 = st.clone();
                            st2.walk.calls.pop();
                            self.after_main(st2, step, ret, false, entries, seen);
                        }
                        EdgeKind::Call => {
                            let dst = self.a.cfg.node(edge.dst).entry;
                            let mut st2 = st.clone();
                            if !self.bodies.contains_key(&dst) {
                                st2.walk.calls.push((edge.index.unwrap(), node.exit + 1));
                            }
                            self.after_main(
                                st2,
                                step,
                                dst,
                                self.bodies.contains_key(&dst),
                                entries,
                                seen,
                            );
                        }
                        _ => {
                            let dst = self.a.cfg.node(edge.dst).entry;
                            self.after_main(st.clone(), step, dst, false, entries, seen);
                        }
                    }
                }
            }
        }
    }

    fn after_main(
        &mut self,
        mut st: MainState,
        step: (Addr, Addr),
        dst: Addr,
        via_call: bool,
        entries: &mut Vec<PathEntry>,
        seen: &mut HashSet<Vec<(Addr, Addr)>>,
    ) {
        if !self.spend() {
            return;
        }
        st.steps.push(step);
        if self.bodies.contains_key(&dst) {
            st.cpoints.push((dst, st.steps.len()));
            st.walk.trail.push(format!("[loop {dst}]"));
            if dst == self.end {
                // Measurement stops on the entering event.
                self.emit(&st, "end", entries, seen);
                return;
            }
            self.enter_abstraction(dst, st, via_call, step.1, entries, seen);
            return;
        }
        st.walk.cur_entry = dst;
        st.walk.trail.push(dst.to_string());
        st.walk.node = self
            .a
            .cfg
            .node_at_entry(dst)
            .expect("branch targets are block entries");
        st.arrival = dst;
        self.walk_main(st, entries, seen);
    }

    /// Continue the main chain past an abstracted loop at `header`.
    fn enter_abstraction(
        &mut self,
        header: Addr,
        st: MainState,
        via_call: bool,
        call_src: Addr,
        entries: &mut Vec<PathEntry>,
        seen: &mut HashSet<Vec<(Addr, Addr)>>,
    ) {
        let summary = self.summaries[&header].clone();
        if !summary.complete {
            self.complete = false;
        }
        if summary.halt_inside {
            // Halting inside the loop: finalization resumes the outer chain
            // at the context hash, so the path ends here.
            self.emit(&st, "halt-in-loop", entries, seen);
        }
        for exit in &summary.exits {
            let mut st2 = st.clone();
            let resume_dst = match exit.to {
                ExitTo::Addr(d) => d,
                ExitTo::Caller => {
                    if via_call {
                        call_src + 1
                    } else {
                        match st2.walk.calls.pop() {
                            Some((_, ret)) => ret,
                            None => continue, // returns past the entry frame
                        }
                    }
                }
            };
            self.after_main(st2, (exit.entry, exit.src), resume_dst, false, entries, seen);
        }
    }

    fn finish(mut self, begin: Addr, entries: Vec<PathEntry>) -> MeasurementDb {
        // A region end buried inside a loop body is invisible to the
        // abstraction; flag the database incomplete rather than miss paths.
        if self.end != crate::verifier::REGION_END_HALT
            && self.bodies.values().any(|b| b.contains(&self.end))
        {
            self.complete = false;
        }
        let mut loop_paths = BTreeMap::new();
        let all_complete = self.summaries.values().all(|s| s.complete);
        for (header, s) in &self.summaries {
            loop_paths.insert(
                *header,
                LoopPathSet {
                    header: *header,
                    kind: self.kinds[header],
                    paths: s.paths.clone(),
                    fixed_contexts: self
                        .fixed_contexts
                        .get(header)
                        .map(|set| set.iter().map(hex::encode).collect())
                        .unwrap_or_default(),
                    exits: s.exits.iter().copied().collect(),
                    halt_inside: s.halt_inside,
                    complete: s.complete,
                },
            );
        }
        MeasurementDb {
            program_digest: self.a.cfg.program_digest,
            region_begin: begin,
            region_end: self.end,
            entries,
            profiled: Vec::new(),
            loop_paths,
            complete: self.complete && all_complete,
        }
    }
}

#[derive(Clone, Debug)]
struct MainState {
    walk: WalkState,
    /// Address execution arrives at in the current block (region-end check).
    arrival: Addr,
    steps: Vec<(Addr, Addr)>,
    cpoints: Vec<(Addr, usize)>,
}
