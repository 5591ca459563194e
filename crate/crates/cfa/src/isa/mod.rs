//! Toy instruction set and the deterministic virtual machine that executes it.
//!
//! Addresses are instruction indices, not byte offsets; address 0 is the entry
//! point. Every executed control-flow instruction emits exactly one
//! [`BranchEvent`], including not-taken conditionals, which is the hook the
//! measurement engine attaches to.

mod asm;
mod vm;

pub use asm::{parse_asm, serialize_asm, AsmError};
pub use vm::{vm_run, Fault, FaultInjection, MachineState, RunOutcome, Vm, VmError};

use blake2::{Blake2s256, Digest};
use serde::{Deserialize, Serialize};

/// Instruction address: an index into the program's instruction sequence.
pub type Addr = u32;

/// Register index, 0..=7.
pub type Reg = u8;

pub const NUM_REGS: usize = 8;

/// Default step budget for a VM run.
pub const DEFAULT_STEP_BUDGET: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Opcode {
    Mov,
    Add,
    Sub,
    Cmp,
    Ldr,
    Str,
    In,
    Out,
    B,
    Beq,
    Bne,
    Blt,
    Bge,
    Bl,
    Blx,
    Bx,
    Ret,
    Halt,
}

impl Opcode {
    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Mov => "MOV",
            Opcode::Add => "ADD",
            Opcode::Sub => "SUB",
            Opcode::Cmp => "CMP",
            Opcode::Ldr => "LDR",
            Opcode::Str => "STR",
            Opcode::In => "IN",
            Opcode::Out => "OUT",
            Opcode::B => "B",
            Opcode::Beq => "BEQ",
            Opcode::Bne => "BNE",
            Opcode::Blt => "BLT",
            Opcode::Bge => "BGE",
            Opcode::Bl => "BL",
            Opcode::Blx => "BLX",
            Opcode::Bx => "BX",
            Opcode::Ret => "RET",
            Opcode::Halt => "HALT",
        }
    }

    /// True for every opcode that ends a basic block.
    pub fn is_control_flow(self) -> bool {
        matches!(
            self,
            Opcode::B
                | Opcode::Beq
                | Opcode::Bne
                | Opcode::Blt
                | Opcode::Bge
                | Opcode::Bl
                | Opcode::Blx
                | Opcode::Bx
                | Opcode::Ret
        )
    }

    /// Direct branches carry a static target address.
    pub fn is_direct_branch(self) -> bool {
        matches!(
            self,
            Opcode::B | Opcode::Beq | Opcode::Bne | Opcode::Blt | Opcode::Bge | Opcode::Bl
        )
    }

    pub fn is_conditional(self) -> bool {
        matches!(self, Opcode::Beq | Opcode::Bne | Opcode::Blt | Opcode::Bge)
    }
}

/// Operand layout of one instruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operands {
    None,
    /// Single register: IN/OUT/BLX/BX.
    R(Reg),
    /// Single address: B/BEQ/BNE/BLT/BGE/BL.
    A(Addr),
    /// Register pair: MOV/ADD/SUB/CMP/LDR/STR rd, rs.
    Rr(Reg, Reg),
    /// Register + immediate: MOV/ADD/SUB/CMP/LDR/STR rd, #imm.
    Ri(Reg, i32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub opcode: Opcode,
    pub operands: Operands,
}

impl Instruction {
    pub fn new(opcode: Opcode, operands: Operands) -> Self {
        Instruction { opcode, operands }
    }

    /// Static branch target for direct branches, if any.
    pub fn target(&self) -> Option<Addr> {
        match (self.opcode.is_direct_branch(), self.operands) {
            (true, Operands::A(a)) => Some(a),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub name: String,
    pub instructions: Vec<Instruction>,
    /// Word count of zero-initialized data memory.
    pub data_size: u32,
}

impl Program {
    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn instruction(&self, addr: Addr) -> Option<&Instruction> {
        self.instructions.get(addr as usize)
    }

    /// Address of the first control-flow instruction at or after `addr`,
    /// or `None` if the remaining tail is straight-line.
    pub fn next_control_flow(&self, addr: Addr) -> Option<Addr> {
        (addr as usize..self.instructions.len())
            .find(|&i| self.instructions[i].opcode.is_control_flow())
            .map(|i| i as Addr)
    }

    /// Canonical binary serialization: magic "CFAP", version 0x01, u32 LE
    /// instruction count, 8-byte records (opcode u8, operand-form u8,
    /// operand u32 LE, spare u16), u32 LE data_size.
    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + 8 * self.instructions.len());
        out.extend_from_slice(b"CFAP");
        out.push(0x01);
        out.extend_from_slice(&(self.instructions.len() as u32).to_le_bytes());
        for ins in &self.instructions {
            let (form, operand): (u8, u32) = match ins.operands {
                Operands::None => (0, 0),
                Operands::R(r) => (1, r as u32),
                Operands::A(a) => (2, a),
                Operands::Rr(rd, rs) => (3 | (rd as u8) << 4, rs as u32),
                Operands::Ri(rd, imm) => (4 | (rd as u8) << 4, imm as u32),
            };
            out.push(opcode_byte(ins.opcode));
            out.push(form);
            out.extend_from_slice(&operand.to_le_bytes());
            out.extend_from_slice(&0u16.to_le_bytes());
        }
        out.extend_from_slice(&self.data_size.to_le_bytes());
        out
    }
}

fn opcode_byte(op: Opcode) -> u8 {
    match op {
        Opcode::Mov => 0x00,
        Opcode::Add => 0x01,
        Opcode::Sub => 0x02,
        Opcode::Cmp => 0x03,
        Opcode::Ldr => 0x04,
        Opcode::Str => 0x05,
        Opcode::In => 0x06,
        Opcode::Out => 0x07,
        Opcode::B => 0x08,
        Opcode::Beq => 0x09,
        Opcode::Bne => 0x0a,
        Opcode::Blt => 0x0b,
        Opcode::Bge => 0x0c,
        Opcode::Bl => 0x0d,
        Opcode::Blx => 0x0e,
        Opcode::Bx => 0x0f,
        Opcode::Ret => 0x10,
        Opcode::Halt => 0x11,
    }
}

/// 32-byte BLAKE2s digest of the canonical program serialization. This is the
/// static-attestation measurement of the program image.
pub fn program_digest(p: &Program) -> [u8; 32] {
    let mut h = Blake2s256::new();
    h.update(p.to_canonical_bytes());
    h.finalize().into()
}

/// One entry in the branch-event stream: emitted per executed control-flow
/// instruction, including not-taken conditionals (dst = src + 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchEvent {
    pub kind: BranchKind,
    /// Address of the control-flow instruction.
    pub src: Addr,
    /// Address execution continues at.
    pub dst: Addr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchKind {
    DirectJump,
    CondTaken,
    CondNotTaken,
    Call,
    IndirectCall,
    IndirectJump,
    Return,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn halt_program() -> Program {
        parse_asm("HALT", "halt").unwrap()
    }

    #[test]
    fn digest_round_trips_through_asm() {
        let src = "loop: SUB r0, 1\nBNE loop\nHALT";
        let p = parse_asm(src, "t").unwrap();
        let q = parse_asm(&serialize_asm(&p), "t").unwrap();
        assert_eq!(program_digest(&p), program_digest(&q));
    }

    #[test]
    fn digest_distinguishes_one_immediate() {
        let a = parse_asm("MOV r0, 5\nHALT", "t").unwrap();
        let b = parse_asm("MOV r0, 6\nHALT", "t").unwrap();
        assert_ne!(program_digest(&a), program_digest(&b));
    }

    #[test]
    fn canonical_bytes_of_halt_program() {
        let p = halt_program();
        let bytes = p.to_canonical_bytes();
        let mut expect = Vec::new();
        expect.extend_from_slice(b"CFAP");
        expect.push(0x01);
        expect.extend_from_slice(&1u32.to_le_bytes());
        expect.extend_from_slice(&[0x11, 0, 0, 0, 0, 0, 0, 0]);
        expect.extend_from_slice(&0u32.to_le_bytes());
        assert_eq!(bytes, expect);
    }

    #[test]
    fn next_control_flow_scans_forward() {
        let p = parse_asm("MOV r0, 1\nMOV r1, 2\nB 0\nHALT", "t").unwrap();
        assert_eq!(p.next_control_flow(0), Some(2));
        assert_eq!(p.next_control_flow(2), Some(2));
        assert_eq!(p.next_control_flow(3), None);
    }
}
