//! Assembly text format: one instruction per line, `;` comments, labels as
//! `name:`, registers `r0`..`r7`, immediates as plain integers or `#n`,
//! branch targets as labels or absolute instruction indices.
//!
//! The `.data N` directive sets the word count of zero-initialized data
//! memory. See docs/isa.md for the full grammar.

use std::collections::HashMap;

use thiserror::Error;

use super::{Addr, Instruction, Opcode, Operands, Program, Reg};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AsmError {
    #[error("line {line}: unknown mnemonic `{mnemonic}`")]
    UnknownMnemonic { line: usize, mnemonic: String },
    #[error("line {line}: undefined label `{label}`")]
    UndefinedLabel { line: usize, label: String },
    #[error("line {line}: duplicate label `{label}`")]
    DuplicateLabel { line: usize, label: String },
    #[error("line {line}: bad operands for {mnemonic}: {detail}")]
    BadOperands {
        line: usize,
        mnemonic: String,
        detail: String,
    },
    #[error("line {line}: operand out of range: {detail}")]
    OutOfRange { line: usize, detail: String },
    #[error("line {line}: branch target {target} outside program of {len} instructions")]
    TargetOutOfBounds { line: usize, target: Addr, len: usize },
}

enum PendingOperand {
    Resolved(Operands),
    /// Direct branch whose target is a label, fixed up in the second pass.
    Label(String),
}

struct PendingInstruction {
    opcode: Opcode,
    operand: PendingOperand,
    line: usize,
}

pub fn parse_asm(source: &str, name: &str) -> Result<Program, AsmError> {
    let mut labels: HashMap<String, Addr> = HashMap::new();
    let mut pending: Vec<PendingInstruction> = Vec::new();
    let mut data_size: u32 = 0;

    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        let mut text = raw;
        if let Some(pos) = text.find(';') {
            text = &text[..pos];
        }
        let mut text = text.trim();
        // Leading labels, possibly several on one line.
        while let Some(pos) = text.find(':') {
            let (label, rest) = text.split_at(pos);
            let label = label.trim();
            if label.is_empty() || !is_identifier(label) {
                break;
            }
            if labels
                .insert(label.to_string(), pending.len() as Addr)
                .is_some()
            {
                return Err(AsmError::DuplicateLabel {
                    line,
                    label: label.to_string(),
                });
            }
            text = rest[1..].trim();
        }
        if text.is_empty() {
            continue;
        }
        if let Some(rest) = text.strip_prefix(".data") {
            data_size = rest.trim().parse().map_err(|_| AsmError::OutOfRange {
                line,
                detail: format!("bad .data size `{}`", rest.trim()),
            })?;
            continue;
        }
        let (mnemonic, rest) = match text.split_once(char::is_whitespace) {
            Some((m, r)) => (m, r.trim()),
            None => (text, ""),
        };
        let opcode = parse_mnemonic(mnemonic).ok_or_else(|| AsmError::UnknownMnemonic {
            line,
            mnemonic: mnemonic.to_string(),
        })?;
        let operand = parse_operands(opcode, mnemonic, rest, line)?;
        pending.push(PendingInstruction {
            opcode,
            operand,
            line,
        });
    }

    let len = pending.len();
    let mut instructions = Vec::with_capacity(len);
    for p in pending {
        let operands = match p.operand {
            PendingOperand::Resolved(ops) => ops,
            PendingOperand::Label(label) => {
                let target = *labels.get(&label).ok_or_else(|| AsmError::UndefinedLabel {
                    line: p.line,
                    label: label.clone(),
                })?;
                Operands::A(target)
            }
        };
        if let Operands::A(target) = operands {
            if target as usize >= len {
                return Err(AsmError::TargetOutOfBounds {
                    line: p.line,
                    target,
                    len,
                });
            }
        }
        instructions.push(Instruction::new(p.opcode, operands));
    }

    Ok(Program {
        name: name.to_string(),
        instructions,
        data_size,
    })
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_mnemonic(m: &str) -> Option<Opcode> {
    Some(match m.to_ascii_uppercase().as_str() {
        "MOV" => Opcode::Mov,
        "ADD" => Opcode::Add,
        "SUB" => Opcode::Sub,
        "CMP" => Opcode::Cmp,
        "LDR" => Opcode::Ldr,
        "STR" => Opcode::Str,
        "IN" => Opcode::In,
        "OUT" => Opcode::Out,
        "B" => Opcode::B,
        "BEQ" => Opcode::Beq,
        "BNE" => Opcode::Bne,
        "BLT" => Opcode::Blt,
        "BGE" => Opcode::Bge,
        "BL" => Opcode::Bl,
        "BLX" => Opcode::Blx,
        "BX" => Opcode::Bx,
        "RET" => Opcode::Ret,
        "HALT" => Opcode::Halt,
        _ => return None,
    })
}

fn parse_reg(tok: &str, line: usize, mnemonic: &str) -> Result<Reg, AsmError> {
    let err = || AsmError::BadOperands {
        line,
        mnemonic: mnemonic.to_string(),
        detail: format!("expected register r0..r7, got `{tok}`"),
    };
    let rest = tok
        .strip_prefix('r')
        .or_else(|| tok.strip_prefix('R'))
        .ok_or_else(err)?;
    let n: u8 = rest.parse().map_err(|_| err())?;
    if n > 7 {
        return Err(AsmError::OutOfRange {
            line,
            detail: format!("register index {n} > 7"),
        });
    }
    Ok(n)
}

fn parse_imm(tok: &str, line: usize) -> Result<i32, AsmError> {
    let tok = tok.strip_prefix('#').unwrap_or(tok);
    tok.parse().map_err(|_| AsmError::OutOfRange {
        line,
        detail: format!("bad immediate `{tok}`"),
    })
}

fn parse_operands(
    opcode: Opcode,
    mnemonic: &str,
    rest: &str,
    line: usize,
) -> Result<PendingOperand, AsmError> {
    let toks: Vec<&str> = rest
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    let bad = |detail: &str| AsmError::BadOperands {
        line,
        mnemonic: mnemonic.to_string(),
        detail: detail.to_string(),
    };
    match opcode {
        Opcode::Ret | Opcode::Halt => {
            if !toks.is_empty() {
                return Err(bad("takes no operands"));
            }
            Ok(PendingOperand::Resolved(Operands::None))
        }
        Opcode::In | Opcode::Out | Opcode::Blx | Opcode::Bx => {
            if toks.len() != 1 {
                return Err(bad("expected one register operand"));
            }
            let r = parse_reg(toks[0], line, mnemonic)?;
            Ok(PendingOperand::Resolved(Operands::R(r)))
        }
        Opcode::B | Opcode::Beq | Opcode::Bne | Opcode::Blt | Opcode::Bge | Opcode::Bl => {
            if toks.len() != 1 {
                return Err(bad("expected one target operand"));
            }
            let tok = toks[0];
            if let Ok(addr) = tok.parse::<Addr>() {
                Ok(PendingOperand::Resolved(Operands::A(addr)))
            } else if is_identifier(tok) {
                Ok(PendingOperand::Label(tok.to_string()))
            } else {
                Err(bad(&format!("bad branch target `{tok}`")))
            }
        }
        Opcode::Mov | Opcode::Add | Opcode::Sub | Opcode::Cmp | Opcode::Ldr | Opcode::Str => {
            if toks.len() != 2 {
                return Err(bad("expected two operands"));
            }
            let rd = parse_reg(toks[0], line, mnemonic)?;
            let second = toks[1];
            if second.starts_with('r') || second.starts_with('R') {
                let rs = parse_reg(second, line, mnemonic)?;
                Ok(PendingOperand::Resolved(Operands::Rr(rd, rs)))
            } else {
                let imm = parse_imm(second, line)?;
                Ok(PendingOperand::Resolved(Operands::Ri(rd, imm)))
            }
        }
    }
}

/// Render a program back to assembly text. Branch targets become `L<addr>`
/// labels so the output reparses to an identical program.
pub fn serialize_asm(p: &Program) -> String {
    let mut targets: Vec<Addr> = p.instructions.iter().filter_map(|i| i.target()).collect();
    targets.sort_unstable();
    targets.dedup();

    let mut out = String::new();
    if p.data_size > 0 {
        out.push_str(&format!(".data {}\n", p.data_size));
    }
    for (addr, ins) in p.instructions.iter().enumerate() {
        if targets.binary_search(&(addr as Addr)).is_ok() {
            out.push_str(&format!("L{addr}:\n"));
        }
        out.push_str("    ");
        out.push_str(ins.opcode.mnemonic());
        match ins.operands {
            Operands::None => {}
            Operands::R(r) => out.push_str(&format!(" r{r}")),
            Operands::A(a) => out.push_str(&format!(" L{a}")),
            Operands::Rr(rd, rs) => out.push_str(&format!(" r{rd}, r{rs}")),
            Operands::Ri(rd, imm) => out.push_str(&format!(" r{rd}, {imm}")),
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_program() {
        let p = parse_asm("HALT", "t").unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.data_size, 0);
        assert_eq!(p.instructions[0].opcode, Opcode::Halt);
    }

    #[test]
    fn label_resolution() {
        let p = parse_asm("loop: SUB r0, 1\nBNE loop\nHALT", "t").unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.instructions[1].target(), Some(0));
    }

    #[test]
    fn forward_label_and_comment() {
        let p = parse_asm("B done ; skip\nMOV r0, 1\ndone: HALT", "t").unwrap();
        assert_eq!(p.instructions[0].target(), Some(2));
    }

    #[test]
    fn unknown_mnemonic_reports_line() {
        let err = parse_asm("MOV r0, 1\nFOO r1", "t").unwrap_err();
        assert_eq!(
            err,
            AsmError::UnknownMnemonic {
                line: 2,
                mnemonic: "FOO".into()
            }
        );
    }

    #[test]
    fn undefined_label_reports_line() {
        let err = parse_asm("B nowhere", "t").unwrap_err();
        assert!(matches!(err, AsmError::UndefinedLabel { line: 1, .. }));
    }

    #[test]
    fn register_out_of_range() {
        let err = parse_asm("MOV r9, 1", "t").unwrap_err();
        assert!(matches!(err, AsmError::OutOfRange { line: 1, .. }));
    }

    #[test]
    fn target_out_of_bounds() {
        let err = parse_asm("B 7\nHALT", "t").unwrap_err();
        assert!(matches!(
            err,
            AsmError::TargetOutOfBounds {
                target: 7,
                len: 2,
                ..
            }
        ));
    }

    #[test]
    fn data_directive() {
        let p = parse_asm(".data 16\nHALT", "t").unwrap();
        assert_eq!(p.data_size, 16);
    }

    #[test]
    fn round_trip() {
        let src = ".data 4\nstart: IN r0\nCMP r0, 0\nBEQ end\nBL start\nend: HALT";
        let p = parse_asm(src, "t").unwrap();
        let q = parse_asm(&serialize_asm(&p), "t").unwrap();
        assert_eq!(p.instructions, q.instructions);
        assert_eq!(p.data_size, q.data_size);
    }
}
