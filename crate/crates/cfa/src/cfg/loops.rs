//! Natural-loop detection via dominator analysis, plus call-graph cycle
//! detection: directly recursive functions are registered as dynamic loops
//! keyed by the callee's entry node, and mutual recursion is rejected.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::isa::{Addr, Opcode, Program};

use super::{
    AnalysisError, Cfg, EdgeKind, ExitClass, LoopExit, LoopInfo, LoopKind, LoopTable, NodeId,
};

/// Iterative dominator computation over one function's intra-procedural
/// subgraph. `succ` maps local indices; returns immediate-dominator-closed
/// dominator sets as bitvectors over local indices.
fn dominators(n: usize, entry: usize, preds: &[Vec<usize>]) -> Vec<BTreeSet<usize>> {
    let all: BTreeSet<usize> = (0..n).collect();
    let mut dom: Vec<BTreeSet<usize>> = (0..n)
        .map(|i| {
            if i == entry {
                BTreeSet::from([entry])
            } else {
                all.clone()
            }
        })
        .collect();
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n {
            if i == entry {
                continue;
            }
            let mut new: Option<BTreeSet<usize>> = None;
            for &p in &preds[i] {
                new = Some(match new {
                    None => dom[p].clone(),
                    Some(acc) => acc.intersection(&dom[p]).copied().collect(),
                });
            }
            let mut new = new.unwrap_or_default();
            new.insert(i);
            if new != dom[i] {
                dom[i] = new;
                changed = true;
            }
        }
    }
    dom
}

/// Intra-procedural successors of a node for loop analysis: call edges are
/// replaced by an edge to the return site, return edges are dropped.
fn intra_successors(cfg: &Cfg, p: &Program, n: NodeId) -> Vec<NodeId> {
    let exit_op = p.instruction(cfg.nodes[n].exit).unwrap().opcode;
    if matches!(exit_op, Opcode::Bl | Opcode::Blx) {
        return cfg
            .node_at_entry(cfg.nodes[n].exit + 1)
            .into_iter()
            .collect();
    }
    cfg.successors(n)
        .filter(|e| e.kind != EdgeKind::Call && e.kind != EdgeKind::Return)
        .map(|e| e.dst)
        .collect()
}

pub fn detect_loops(p: &Program, cfg: &Cfg) -> Result<LoopTable, AnalysisError> {
    let mut loops: Vec<LoopInfo> = Vec::new();

    for (&fentry, body) in &cfg.function_bodies {
        let local: BTreeMap<NodeId, usize> =
            body.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let n = body.len();
        if n == 0 {
            continue;
        }
        let entry_local = local[&cfg.node_at_entry(fentry).unwrap()];
        let succs: Vec<Vec<usize>> = body
            .iter()
            .map(|&node| {
                intra_successors(cfg, p, node)
                    .into_iter()
                    .filter_map(|d| local.get(&d).copied())
                    .collect()
            })
            .collect();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (s, ds) in succs.iter().enumerate() {
            for &d in ds {
                preds[d].push(s);
            }
        }
        let dom = dominators(n, entry_local, &preds);

        // Retreating edges: target is a DFS ancestor. Reducible iff every
        // retreating edge's target dominates its source.
        let retreating = retreating_edges(n, entry_local, &succs);
        for &(s, t) in &retreating {
            if !dom[s].contains(&t) {
                return Err(AnalysisError::IrreducibleLoop {
                    addr: cfg.nodes[body[t]].entry,
                });
            }
        }

        // Natural loops, merged per header.
        let mut by_header: BTreeMap<usize, (Vec<usize>, BTreeSet<usize>)> = BTreeMap::new();
        for &(s, t) in &retreating {
            let entry = by_header.entry(t).or_insert_with(|| {
                let mut body_set = BTreeSet::from([t]);
                body_set.insert(t);
                (Vec::new(), body_set)
            });
            entry.0.push(s);
            // Body: s plus everything reaching s without passing the header.
            let mut stack = vec![s];
            while let Some(x) = stack.pop() {
                if x == t || !entry.1.insert(x) {
                    continue;
                }
                for &pr in &preds[x] {
                    stack.push(pr);
                }
            }
        }

        for (header_local, (back_srcs, body_set)) in &by_header {
            let header = body[*header_local];
            let header_entry = cfg.nodes[header].entry;

            // The engine observes loop entry and exit through branch events;
            // fall-through across the loop boundary would be invisible.
            for &pr in &preds[*header_local] {
                if body_set.contains(&pr) {
                    continue;
                }
                let pred_node = body[pr];
                let pred_exit_op = p.instruction(cfg.nodes[pred_node].exit).unwrap().opcode;
                if !pred_exit_op.is_control_flow() {
                    return Err(AnalysisError::FallthroughLoopEntry {
                        header: header_entry,
                    });
                }
            }

            let mut exits = Vec::new();
            for &b in body_set.iter() {
                for &d in &succs[b] {
                    if body_set.contains(&d) {
                        continue;
                    }
                    let src_node = body[b];
                    let exit_op = p.instruction(cfg.nodes[src_node].exit).unwrap().opcode;
                    if !exit_op.is_control_flow() {
                        return Err(AnalysisError::FallthroughLoopExit {
                            header: header_entry,
                            src: cfg.nodes[src_node].entry,
                        });
                    }
                    exits.push(LoopExit {
                        src: src_node,
                        dst: body[d],
                        class: if b == *header_local {
                            ExitClass::Normal
                        } else {
                            ExitClass::Break
                        },
                    });
                }
                // A return inside the loop body also leaves the loop.
                let src_node = body[b];
                if p.instruction(cfg.nodes[src_node].exit).unwrap().opcode == Opcode::Ret {
                    for e in cfg.successors(src_node).filter(|e| e.kind == EdgeKind::Return) {
                        exits.push(LoopExit {
                            src: src_node,
                            dst: e.dst,
                            class: ExitClass::Break,
                        });
                    }
                }
            }

            loops.push(LoopInfo {
                kind: LoopKind::Natural,
                header,
                header_entry,
                back_edges: back_srcs.iter().map(|&s| body[s]).collect(),
                body: body_set.iter().map(|&b| body[b]).collect(),
                exits,
                parent: None,
            });
        }
    }

    // Call-graph cycles. Direct recursion becomes a CallCycle loop over the
    // function body; longer cycles are rejected.
    let call_graph = build_call_graph(p, cfg);
    reject_mutual_recursion(&call_graph)?;
    for (&caller, callees) in &call_graph {
        if callees.contains(&caller) {
            let body = cfg.function_bodies.get(&caller).cloned().unwrap_or_default();
            let header = cfg.node_at_entry(caller).unwrap();
            let self_call_sites: Vec<NodeId> = body
                .iter()
                .copied()
                .filter(|&nid| {
                    cfg.successors(nid).any(|e| {
                        e.kind == EdgeKind::Call && cfg.nodes[e.dst].entry == caller
                    })
                })
                .collect();
            let exits = body
                .iter()
                .copied()
                .filter(|&nid| p.instruction(cfg.nodes[nid].exit).unwrap().opcode == Opcode::Ret)
                .flat_map(|nid| {
                    cfg.successors(nid)
                        .filter(|e| e.kind == EdgeKind::Return)
                        .map(move |e| LoopExit {
                            src: nid,
                            dst: e.dst,
                            class: ExitClass::Break,
                        })
                })
                .collect();
            loops.push(LoopInfo {
                kind: LoopKind::CallCycle,
                header,
                header_entry: caller,
                back_edges: self_call_sites,
                body,
                exits,
                parent: None,
            });
        }
    }

    // Nesting: parent is the smallest strictly-containing loop.
    let bodies: Vec<HashSet<NodeId>> = loops
        .iter()
        .map(|l| l.body.iter().copied().collect())
        .collect();
    for i in 0..loops.len() {
        let mut parent: Option<usize> = None;
        for j in 0..loops.len() {
            if i == j || !bodies[j].is_superset(&bodies[i]) || bodies[j].len() == bodies[i].len() {
                continue;
            }
            if parent.map_or(true, |pp| bodies[j].len() < bodies[pp].len()) {
                parent = Some(j);
            }
        }
        loops[i].parent = parent;
    }

    Ok(LoopTable { loops })
}

/// DFS retreating edges (s, t): t is on the DFS stack when s -> t is seen.
fn retreating_edges(n: usize, entry: usize, succs: &[Vec<usize>]) -> Vec<(usize, usize)> {
    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        White,
        Gray,
        Black,
    }
    let mut color = vec![Color::White; n];
    let mut out = Vec::new();
    // Explicit stack of (node, next-successor-index).
    let mut stack: Vec<(usize, usize)> = vec![(entry, 0)];
    color[entry] = Color::Gray;
    while let Some(top) = stack.last_mut() {
        let node = top.0;
        if top.1 < succs[node].len() {
            let s = succs[node][top.1];
            top.1 += 1;
            match color[s] {
                Color::Gray => out.push((node, s)),
                Color::White => {
                    color[s] = Color::Gray;
                    stack.push((s, 0));
                }
                Color::Black => {}
            }
        } else {
            color[node] = Color::Black;
            stack.pop();
        }
    }
    out
}

fn build_call_graph(p: &Program, cfg: &Cfg) -> BTreeMap<Addr, BTreeSet<Addr>> {
    let mut g: BTreeMap<Addr, BTreeSet<Addr>> = BTreeMap::new();
    for (&fentry, body) in &cfg.function_bodies {
        let callees = g.entry(fentry).or_default();
        for &nid in body {
            for e in cfg.successors(nid) {
                if e.kind == EdgeKind::Call {
                    callees.insert(cfg.nodes[e.dst].entry);
                }
            }
        }
    }
    let _ = p;
    g
}

fn reject_mutual_recursion(g: &BTreeMap<Addr, BTreeSet<Addr>>) -> Result<(), AnalysisError> {
    // A cycle of length >= 2 in the call graph. DFS with a path set,
    // ignoring self-edges.
    fn dfs(
        g: &BTreeMap<Addr, BTreeSet<Addr>>,
        node: Addr,
        path: &mut Vec<Addr>,
        done: &mut BTreeSet<Addr>,
    ) -> Result<(), AnalysisError> {
        if done.contains(&node) {
            return Ok(());
        }
        if let Some(pos) = path.iter().position(|&x| x == node) {
            if path.len() - pos >= 2 {
                return Err(AnalysisError::MutualRecursion {
                    a: node,
                    b: *path.last().unwrap(),
                });
            }
            return Ok(());
        }
        path.push(node);
        for &c in g.get(&node).into_iter().flatten() {
            if c != node {
                dfs(g, c, path, done)?;
            }
        }
        path.pop();
        done.insert(node);
        Ok(())
    }
    let mut done = BTreeSet::new();
    for &f in g.keys() {
        dfs(g, f, &mut Vec::new(), &mut done)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::build_cfg;
    use crate::isa::parse_asm;

    fn analyze(src: &str) -> (Program, Cfg, LoopTable) {
        let p = parse_asm(src, "t").unwrap();
        let cfg = super::super::index_call_returns(build_cfg(&p).unwrap()).unwrap();
        let loops = detect_loops(&p, &cfg).unwrap();
        (p, cfg, loops)
    }

    #[test]
    fn loop_free_program_empty_table() {
        let (_, _, loops) = analyze("MOV r0, 1\nOUT r0\nHALT");
        assert!(loops.loops.is_empty());
    }

    // The while/if-else shape: manual dominator computation on the 7-node
    // intra-procedural graph gives header = the CMP/BEQ test node, which
    // dominates the whole body; the only exit leaves via the header.
    const WHILE_IF_ELSE: &str = "\
IN r0
B loop
loop: CMP r0, 0
BEQ done
CMP r0, 2
BLT odd
MOV r2, 1
B tail
odd: MOV r2, 2
tail: SUB r0, 1
B loop
done: OUT r2
HALT";

    #[test]
    fn while_if_else_single_natural_loop() {
        let (_, cfg, loops) = analyze(WHILE_IF_ELSE);
        assert_eq!(loops.loops.len(), 1);
        let l = &loops.loops[0];
        assert_eq!(l.kind, LoopKind::Natural);
        assert_eq!(l.header_entry, 2);
        assert_eq!(l.exits.len(), 1);
        assert_eq!(l.exits[0].class, ExitClass::Normal);
        assert_eq!(cfg.nodes[l.exits[0].dst].entry, 11);
        // Two distinct body paths: through the then-block and the else-block.
        let body_entries: Vec<Addr> = l.body.iter().map(|&n| cfg.nodes[n].entry).collect();
        assert!(body_entries.contains(&6));
        assert!(body_entries.contains(&8));
    }

    #[test]
    fn break_adds_break_classed_exit() {
        let src = "\
IN r0
B loop
loop: CMP r0, 0
BEQ done
CMP r0, 2
BEQ brk
SUB r0, 1
B loop
brk: B done
done: OUT r0
HALT";
        let (_, cfg, loops) = analyze(src);
        assert_eq!(loops.loops.len(), 1);
        let l = &loops.loops[0];
        let classes: Vec<ExitClass> = l.exits.iter().map(|e| e.class).collect();
        assert!(classes.contains(&ExitClass::Normal));
        assert!(classes.contains(&ExitClass::Break));
        let brk = l.exits.iter().find(|e| e.class == ExitClass::Break).unwrap();
        // The break leaves from the body node testing cond_2, jumping to brk.
        assert_eq!(cfg.nodes[brk.src].entry, 4);
    }

    #[test]
    fn nested_loop_membership_is_contained() {
        let src = "\
MOV r0, 3
B outer
outer: CMP r0, 0
BEQ done
MOV r1, 2
B inner
inner: CMP r1, 0
BEQ itail
SUB r1, 1
B inner
itail: SUB r0, 1
B outer
done: HALT";
        let (_, _, loops) = analyze(src);
        assert_eq!(loops.loops.len(), 2);
        let outer = loops.loops.iter().find(|l| l.header_entry == 2).unwrap();
        let inner = loops.loops.iter().find(|l| l.header_entry == 6).unwrap();
        let outer_body: HashSet<NodeId> = outer.body.iter().copied().collect();
        assert!(inner.body.iter().all(|n| outer_body.contains(n)));
        let inner_idx = loops.loops.iter().position(|l| l.header_entry == 6).unwrap();
        let outer_idx = loops.loops.iter().position(|l| l.header_entry == 2).unwrap();
        assert_eq!(loops.loops[inner_idx].parent, Some(outer_idx));
        assert_eq!(loops.loops[outer_idx].parent, None);
    }

    #[test]
    fn direct_recursion_becomes_call_cycle() {
        let src = "\
MOV r0, 3
BL fact
OUT r1
HALT
fact: CMP r0, 0
BEQ base
SUB r0, 1
BL fact
ADD r1, 1
RET
base: MOV r1, 1
RET";
        let (_, _, loops) = analyze(src);
        let cc = loops
            .loops
            .iter()
            .find(|l| l.kind == LoopKind::CallCycle)
            .expect("recursion detected");
        assert_eq!(cc.header_entry, 4);
        assert!(!cc.back_edges.is_empty());
    }

    #[test]
    fn mutual_recursion_rejected() {
        let src = "\
BL even
HALT
even: CMP r0, 0
BEQ edone
SUB r0, 1
BL odd
edone: RET
odd: CMP r0, 0
BEQ odone
SUB r0, 1
BL even
odone: RET";
        let p = parse_asm(src, "t").unwrap();
        let cfg = build_cfg(&p).unwrap();
        let err = detect_loops(&p, &cfg).unwrap_err();
        assert!(matches!(err, AnalysisError::MutualRecursion { .. }));
    }

    #[test]
    fn fallthrough_loop_entry_rejected() {
        // Loop header at 1 is entered by falling through from instruction 0.
        let src = "MOV r0, 3\nloop: SUB r0, 1\nBNE loop\nHALT";
        let p = parse_asm(src, "t").unwrap();
        let cfg = build_cfg(&p).unwrap();
        let err = detect_loops(&p, &cfg).unwrap_err();
        assert_eq!(err, AnalysisError::FallthroughLoopEntry { header: 1 });
    }
}
