//! Static analysis over toy-ISA programs: basic-block CFG construction,
//! natural-loop detection, call/return edge indexing, and enumeration of the
//! legal measurement database.
//!
//! Node granularity is basic blocks ending in any control-flow instruction.
//! A node's id is its (entry address, exit address) pair, where the exit is
//! the index of the terminating control-flow instruction, or the last
//! instruction of the block when it falls through into a branch-target
//! boundary.

mod build;
mod enumerate;
mod loops;

pub use build::{build_cfg, index_call_returns, AnalysisError};
pub use enumerate::{
    enumerate_measurements, enumerate_region, fold_steps, DbView, EnumBounds, ExitStep, ExitTo,
    LoopPathSet, MeasurementDb, PathEntry, ProfiledEntry,
};
pub use loops::detect_loops;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::isa::{Addr, Program};

/// Index into [`Cfg::nodes`].
pub type NodeId = usize;
pub type LoopId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Node {
    pub entry: Addr,
    pub exit: Addr,
}

impl Node {
    /// Instruction addresses spanned by this block.
    pub fn addrs(&self) -> impl Iterator<Item = Addr> {
        self.entry..=self.exit
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    /// Unconditional jump or fall-through into the next block.
    Jump,
    CondTrue,
    CondFalse,
    Call,
    Return,
    Indirect,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
    /// Pairing index for Call/Return edges: the Call edge indexed `C_i`
    /// matches the Return edge indexed `R_i`.
    pub index: Option<u32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Cfg {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub entry_node: NodeId,
    #[serde(with = "crate::hex32")]
    pub program_digest: [u8; 32],
    /// Function entry addresses (program entry plus every call target).
    pub function_entries: Vec<Addr>,
    /// Per function entry: the node ids making up its body.
    pub function_bodies: BTreeMap<Addr, Vec<NodeId>>,
    /// Nodes ending in an indirect branch whose target set is still empty;
    /// profiling refines these.
    pub unresolved_indirect: Vec<NodeId>,
    /// Indirect branch targets learned from profiling, keyed by the branch
    /// instruction address.
    pub profiled_targets: BTreeMap<Addr, Vec<Addr>>,
}

impl Cfg {
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    /// Node whose entry is exactly `addr`.
    pub fn node_at_entry(&self, addr: Addr) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.entry == addr)
    }

    /// Node containing instruction address `addr`.
    pub fn node_containing(&self, addr: Addr) -> Option<NodeId> {
        self.nodes
            .iter()
            .position(|n| n.entry <= addr && addr <= n.exit)
    }

    pub fn successors(&self, id: NodeId) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.src == id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExitClass {
    /// Leaves the loop via its header.
    Normal,
    /// Leaves the loop from a non-header body node.
    Break,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopExit {
    pub src: NodeId,
    pub dst: NodeId,
    pub class: ExitClass,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoopKind {
    /// Natural loop found by dominator analysis.
    Natural,
    /// Directly recursive function, treated as a dynamic loop keyed by the
    /// callee's entry node.
    CallCycle,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LoopInfo {
    pub kind: LoopKind,
    pub header: NodeId,
    pub header_entry: Addr,
    /// Sources of back edges (or self-call sites for a call cycle).
    pub back_edges: Vec<NodeId>,
    pub body: Vec<NodeId>,
    pub exits: Vec<LoopExit>,
    pub parent: Option<LoopId>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct LoopTable {
    pub loops: Vec<LoopInfo>,
}

impl LoopTable {
    pub fn is_header(&self, addr: Addr) -> bool {
        self.loops.iter().any(|l| l.header_entry == addr)
    }

    pub fn by_header(&self, addr: Addr) -> Option<&LoopInfo> {
        self.loops.iter().find(|l| l.header_entry == addr)
    }

    /// Instruction-address membership set for each loop body, keyed by
    /// header entry. This is the view the measurement engine works from.
    pub fn body_addr_sets(&self, cfg: &Cfg) -> BTreeMap<Addr, HashSet<Addr>> {
        self.loops
            .iter()
            .map(|l| {
                let addrs = l
                    .body
                    .iter()
                    .flat_map(|&n| cfg.node(n).addrs())
                    .collect::<HashSet<_>>();
                (l.header_entry, addrs)
            })
            .collect()
    }
}

/// Map from control-flow instruction address to static target address.
/// Direct branches only; indirect branches and returns are not present.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct BranchTable {
    pub targets: BTreeMap<Addr, Addr>,
}

impl BranchTable {
    pub fn from_program(p: &Program) -> Self {
        let targets = p
            .instructions
            .iter()
            .enumerate()
            .filter_map(|(i, ins)| ins.target().map(|t| (i as Addr, t)))
            .collect();
        BranchTable { targets }
    }
}

/// The full static-analysis product for one program: what both the prover's
/// measurement engine and the verifier consume.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalyzedProgram {
    pub program: Program,
    pub cfg: Cfg,
    pub loops: LoopTable,
    pub branch_table: BranchTable,
}

impl AnalyzedProgram {
    /// Run the whole pipeline: CFG, call/return indexing, loop detection.
    pub fn analyze(program: Program) -> Result<Self, AnalysisError> {
        let cfg = build_cfg(&program)?;
        let cfg = index_call_returns(cfg)?;
        let loops = detect_loops(&program, &cfg)?;
        let branch_table = BranchTable::from_program(&program);
        Ok(AnalyzedProgram {
            program,
            cfg,
            loops,
            branch_table,
        })
    }
}
