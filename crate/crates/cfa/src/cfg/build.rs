//! CFG construction and call/return edge indexing.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::isa::{Addr, Opcode, Program};

use super::{Cfg, Edge, EdgeKind, Node, NodeId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("empty program: entry is unreachable")]
    EmptyProgram,
    #[error("irreducible loop: node at {addr} is entered from multiple points")]
    IrreducibleLoop { addr: Addr },
    #[error("loop header at {header} is reachable by fall-through; enter loops via a branch")]
    FallthroughLoopEntry { header: Addr },
    #[error("loop at {header} exits by fall-through from node at {src}; exit loops via a branch")]
    FallthroughLoopExit { header: Addr, src: Addr },
    #[error("mutual recursion between functions at {a} and {b} is not supported")]
    MutualRecursion { a: Addr, b: Addr },
    #[error("return edge targeting {target} which is not any call site + 1")]
    InvalidReturnEdge { target: Addr },
}

/// Static successors of the instruction at `pc`, ignoring returns (return
/// edges are derived from call sites) and unresolved indirect branches.
fn static_successors(
    p: &Program,
    pc: Addr,
    profiled: &BTreeMap<Addr, Vec<Addr>>,
) -> Vec<Addr> {
    let ins = match p.instruction(pc) {
        Some(i) => *i,
        None => return vec![],
    };
    let next = pc + 1;
    let in_bounds = |a: Addr| (a as usize) < p.len();
    match ins.opcode {
        Opcode::Halt => vec![],
        Opcode::B => ins.target().into_iter().collect(),
        Opcode::Beq | Opcode::Bne | Opcode::Blt | Opcode::Bge => {
            let mut v: Vec<Addr> = ins.target().into_iter().collect();
            if in_bounds(next) {
                v.push(next);
            }
            v
        }
        Opcode::Bl => {
            let mut v: Vec<Addr> = ins.target().into_iter().collect();
            if in_bounds(next) {
                v.push(next); // return site
            }
            v
        }
        Opcode::Blx => {
            let mut v: Vec<Addr> = profiled.get(&pc).cloned().unwrap_or_default();
            if in_bounds(next) {
                v.push(next); // return site
            }
            v
        }
        Opcode::Bx => profiled.get(&pc).cloned().unwrap_or_default(),
        Opcode::Ret => vec![],
        _ => {
            if in_bounds(next) {
                vec![next]
            } else {
                vec![]
            }
        }
    }
}

pub fn build_cfg(p: &Program) -> Result<Cfg, AnalysisError> {
    build_cfg_with(p, &BTreeMap::new())
}

/// Build the CFG, resolving indirect branches through `profiled` target sets
/// gathered from profiling runs.
pub fn build_cfg_with(
    p: &Program,
    profiled: &BTreeMap<Addr, Vec<Addr>>,
) -> Result<Cfg, AnalysisError> {
    if p.is_empty() {
        return Err(AnalysisError::EmptyProgram);
    }

    // Reachability over instruction addresses.
    let mut reachable = vec![false; p.len()];
    let mut queue = VecDeque::from([0 as Addr]);
    while let Some(pc) = queue.pop_front() {
        if reachable[pc as usize] {
            continue;
        }
        reachable[pc as usize] = true;
        for s in static_successors(p, pc, profiled) {
            if !reachable[s as usize] {
                queue.push_back(s);
            }
        }
    }

    // Leaders: entry, branch targets, and the instruction after any
    // control-flow instruction.
    let mut leaders: BTreeSet<Addr> = BTreeSet::from([0]);
    for pc in 0..p.len() as Addr {
        if !reachable[pc as usize] {
            continue;
        }
        let ins = p.instruction(pc).unwrap();
        if !ins.opcode.is_control_flow() {
            continue;
        }
        if let Some(t) = ins.target() {
            leaders.insert(t);
        }
        if let Some(ts) = profiled.get(&pc) {
            leaders.extend(ts.iter().copied());
        }
        let next = pc + 1;
        if (next as usize) < p.len() && reachable[next as usize] {
            leaders.insert(next);
        }
    }
    leaders.retain(|&l| reachable[l as usize]);

    // Blocks: a leader's block runs to its terminating control-flow
    // instruction, or to the instruction before the next leader.
    let leader_list: Vec<Addr> = leaders.iter().copied().collect();
    let mut nodes = Vec::new();
    for (i, &entry) in leader_list.iter().enumerate() {
        let block_end = leader_list
            .get(i + 1)
            .map(|&nl| nl - 1)
            .unwrap_or(p.len() as Addr - 1);
        let exit = match p.next_control_flow(entry) {
            Some(cf) if cf <= block_end => cf,
            _ => block_end,
        };
        nodes.push(Node { entry, exit });
    }

    let node_at = |entry: Addr| -> Option<NodeId> { leader_list.binary_search(&entry).ok() };

    // Intra-procedural and call edges.
    let mut edges: Vec<Edge> = Vec::new();
    let mut unresolved_indirect = Vec::new();
    let push = |edges: &mut Vec<Edge>, src, dst, kind| {
        edges.push(Edge {
            src,
            dst,
            kind,
            index: None,
        });
    };
    for (id, node) in nodes.iter().enumerate() {
        let ins = p.instruction(node.exit).unwrap();
        let next = node.exit + 1;
        match ins.opcode {
            Opcode::B => {
                push(&mut edges, id, node_at(ins.target().unwrap()).unwrap(), EdgeKind::Jump);
            }
            Opcode::Beq | Opcode::Bne | Opcode::Blt | Opcode::Bge => {
                push(&mut edges, id, node_at(ins.target().unwrap()).unwrap(), EdgeKind::CondTrue);
                if let Some(n) = node_at(next) {
                    push(&mut edges, id, n, EdgeKind::CondFalse);
                }
            }
            Opcode::Bl => {
                push(&mut edges, id, node_at(ins.target().unwrap()).unwrap(), EdgeKind::Call);
            }
            Opcode::Blx => {
                let targets = profiled.get(&node.exit).cloned().unwrap_or_default();
                if targets.is_empty() {
                    unresolved_indirect.push(id);
                }
                for t in targets {
                    if let Some(n) = node_at(t) {
                        push(&mut edges, id, n, EdgeKind::Call);
                    }
                }
            }
            Opcode::Bx => {
                let targets = profiled.get(&node.exit).cloned().unwrap_or_default();
                if targets.is_empty() {
                    unresolved_indirect.push(id);
                }
                for t in targets {
                    if let Some(n) = node_at(t) {
                        push(&mut edges, id, n, EdgeKind::Indirect);
                    }
                }
            }
            Opcode::Ret | Opcode::Halt => {}
            _ => {
                // Fall-through block.
                if let Some(n) = node_at(next) {
                    push(&mut edges, id, n, EdgeKind::Jump);
                }
            }
        }
    }

    // Function entries: program entry plus every call target.
    let mut function_entries: BTreeSet<Addr> = BTreeSet::from([0]);
    for e in &edges {
        if e.kind == EdgeKind::Call {
            function_entries.insert(nodes[e.dst].entry);
        }
    }

    // Function bodies: intra-procedural traversal where a call continues at
    // its return site.
    let mut function_bodies: BTreeMap<Addr, Vec<NodeId>> = BTreeMap::new();
    for &fentry in &function_entries {
        let start = node_at(fentry).expect("call target is a leader");
        let mut seen = vec![false; nodes.len()];
        let mut q = VecDeque::from([start]);
        let mut body = Vec::new();
        while let Some(n) = q.pop_front() {
            if seen[n] {
                continue;
            }
            seen[n] = true;
            body.push(n);
            let exit_op = p.instruction(nodes[n].exit).unwrap().opcode;
            if matches!(exit_op, Opcode::Bl | Opcode::Blx) {
                // Continue at the return site, not inside the callee.
                if let Some(rs) = node_at(nodes[n].exit + 1) {
                    q.push_back(rs);
                }
            } else {
                for e in edges.iter().filter(|e| e.src == n) {
                    if e.kind != EdgeKind::Call && e.kind != EdgeKind::Return {
                        q.push_back(e.dst);
                    }
                }
            }
        }
        body.sort_unstable();
        function_bodies.insert(fentry, body);
    }

    // Return edges: each RET node of function f targets (call site + 1) for
    // every call site of f.
    let mut return_edges = Vec::new();
    for (&fentry, body) in &function_bodies {
        let ret_nodes: Vec<NodeId> = body
            .iter()
            .copied()
            .filter(|&n| p.instruction(nodes[n].exit).unwrap().opcode == Opcode::Ret)
            .collect();
        if ret_nodes.is_empty() {
            continue;
        }
        let ftarget = node_at(fentry).unwrap();
        let call_sites: Vec<Addr> = edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Call && e.dst == ftarget)
            .map(|e| nodes[e.src].exit)
            .collect();
        for &r in &ret_nodes {
            for &site in &call_sites {
                if let Some(dst) = node_at(site + 1) {
                    return_edges.push(Edge {
                        src: r,
                        dst,
                        kind: EdgeKind::Return,
                        index: None,
                    });
                }
            }
        }
    }
    edges.extend(return_edges);

    Ok(Cfg {
        entry_node: node_at(0).unwrap(),
        nodes,
        edges,
        program_digest: crate::isa::program_digest(p),
        function_entries: function_entries.into_iter().collect(),
        function_bodies,
        unresolved_indirect,
        profiled_targets: profiled.clone(),
    })
}

/// Assign matching indices to direct call edges and their return edges:
/// the i-th call edge (in call-site address order) gets index i+1, and every
/// return edge from its callee back to (call site + 1) gets the same index.
pub fn index_call_returns(mut cfg: Cfg) -> Result<Cfg, AnalysisError> {
    let mut call_edges: Vec<usize> = (0..cfg.edges.len())
        .filter(|&i| cfg.edges[i].kind == EdgeKind::Call)
        .collect();
    call_edges.sort_by_key(|&i| (cfg.nodes[cfg.edges[i].src].exit, cfg.nodes[cfg.edges[i].dst].entry));

    for (ord, &ei) in call_edges.iter().enumerate() {
        let index = ord as u32 + 1;
        cfg.edges[ei].index = Some(index);
        let callee_entry = cfg.nodes[cfg.edges[ei].dst].entry;
        let return_site = cfg.nodes[cfg.edges[ei].src].exit + 1;
        let callee_body = cfg
            .function_bodies
            .get(&callee_entry)
            .cloned()
            .unwrap_or_default();
        for rj in 0..cfg.edges.len() {
            let e = cfg.edges[rj];
            if e.kind == EdgeKind::Return
                && callee_body.contains(&e.src)
                && cfg.nodes[e.dst].entry == return_site
            {
                cfg.edges[rj].index = Some(index);
            }
        }
    }

    // Every return edge must land at some call site + 1.
    let call_return_sites: BTreeSet<Addr> = cfg
        .edges
        .iter()
        .filter(|e| e.kind == EdgeKind::Call)
        .map(|e| cfg.nodes[e.src].exit + 1)
        .collect();
    for e in &cfg.edges {
        if e.kind == EdgeKind::Return {
            let target = cfg.nodes[e.dst].entry;
            if !call_return_sites.contains(&target) {
                return Err(AnalysisError::InvalidReturnEdge { target });
            }
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_asm;

    #[test]
    fn single_halt_program() {
        let p = parse_asm("HALT", "t").unwrap();
        let cfg = build_cfg(&p).unwrap();
        assert_eq!(cfg.nodes.len(), 1);
        assert_eq!(cfg.edges.len(), 0);
        assert_eq!(cfg.nodes[0], Node { entry: 0, exit: 0 });
    }

    #[test]
    fn empty_program_rejected() {
        let p = parse_asm("", "t").unwrap();
        assert_eq!(build_cfg(&p).unwrap_err(), AnalysisError::EmptyProgram);
    }

    #[test]
    fn if_else_with_calls_matches_hand_drawn_graph() {
        // Hand-drawn CFG: cond node, two call-site nodes, two callees, a
        // fall-through node after the first call, and the join. 7 nodes.
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
        let p = parse_asm(src, "fig3").unwrap();
        let cfg = index_call_returns(build_cfg(&p).unwrap()).unwrap();
        assert_eq!(cfg.nodes.len(), 7);
        let expect_nodes = vec![
            Node { entry: 0, exit: 2 },
            Node { entry: 3, exit: 3 },
            Node { entry: 4, exit: 4 },
            Node { entry: 5, exit: 5 },
            Node { entry: 6, exit: 7 },
            Node { entry: 8, exit: 9 },
            Node { entry: 10, exit: 11 },
        ];
        assert_eq!(cfg.nodes, expect_nodes);
        // Edge-by-edge against the hand-drawn graph.
        let has = |src: Addr, dst: Addr, kind: EdgeKind| {
            cfg.edges.iter().any(|e| {
                cfg.nodes[e.src].entry == src && cfg.nodes[e.dst].entry == dst && e.kind == kind
            })
        };
        assert!(has(0, 5, EdgeKind::CondTrue));
        assert!(has(0, 3, EdgeKind::CondFalse));
        assert!(has(3, 8, EdgeKind::Call));
        assert!(has(8, 4, EdgeKind::Return));
        assert!(has(4, 6, EdgeKind::Jump));
        assert!(has(5, 10, EdgeKind::Call));
        assert!(has(10, 6, EdgeKind::Return));
        assert_eq!(cfg.edges.len(), 7);
    }

    #[test]
    fn call_return_indices_pair_up() {
        let src = "BL sub\nOUT r0\nHALT\nsub: MOV r0, 1\nRET";
        let p = parse_asm(src, "t").unwrap();
        let cfg = index_call_returns(build_cfg(&p).unwrap()).unwrap();
        let call = cfg.edges.iter().find(|e| e.kind == EdgeKind::Call).unwrap();
        let ret = cfg.edges.iter().find(|e| e.kind == EdgeKind::Return).unwrap();
        assert_eq!(call.index, Some(1));
        assert_eq!(ret.index, Some(1));
    }

    #[test]
    fn two_calls_one_subroutine_no_crossed_indices() {
        let src = "\
IN r0
CMP r0, 1
BEQ second
BL sub
B end
second: BL sub
end: OUT r0
HALT
sub: ADD r0, 1
RET";
        let p = parse_asm(src, "fig6").unwrap();
        let cfg = index_call_returns(build_cfg(&p).unwrap()).unwrap();
        // Enumerate (call index, return-site) pairings.
        let mut pairs: Vec<(u32, Addr)> = Vec::new();
        for e in cfg.edges.iter().filter(|e| e.kind == EdgeKind::Return) {
            pairs.push((e.index.unwrap(), cfg.nodes[e.dst].entry));
        }
        pairs.sort_unstable();
        // Call at pc 3 is C1 returning to 4; call at pc 5 is C2 returning to 6.
        assert_eq!(pairs, vec![(1, 4), (2, 6)]);
        // The crossed pairing (C1 returning to 6) is absent.
        assert!(!pairs.contains(&(1, 6)));
    }

    #[test]
    fn indirect_branch_without_profile_is_unresolved() {
        let src = "MOV r0, 3\nBX r0\nHALT\nOUT r0\nHALT";
        let p = parse_asm(src, "t").unwrap();
        let cfg = build_cfg(&p).unwrap();
        assert_eq!(cfg.unresolved_indirect.len(), 1);
    }

    #[test]
    fn profiled_indirect_targets_become_edges() {
        let src = "MOV r0, 3\nBX r0\nHALT\nOUT r0\nHALT";
        let p = parse_asm(src, "t").unwrap();
        let profiled = BTreeMap::from([(1, vec![3])]);
        let cfg = build_cfg_with(&p, &profiled).unwrap();
        assert!(cfg.unresolved_indirect.is_empty());
        assert!(cfg
            .edges
            .iter()
            .any(|e| e.kind == EdgeKind::Indirect && cfg.nodes[e.dst].entry == 3));
    }
}
