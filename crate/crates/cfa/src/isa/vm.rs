//! Deterministic interpreter with a branch-event sink and declarative fault
//! injection.
//!
//! The event sink stands in for the branch interception a binary-rewriting
//! tracer would perform: every executed control-flow instruction reports its
//! source and destination, and not-taken conditionals are reported directly
//! rather than inferred.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Addr, BranchEvent, BranchKind, Opcode, Operands, Program, DEFAULT_STEP_BUDGET};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VmError {
    #[error("step budget of {0} exhausted")]
    StepBudgetExhausted(u64),
    #[error("invalid memory access at data word {addr} (data_size {size}) at pc {pc}")]
    InvalidMemoryAccess { addr: i64, size: u32, pc: Addr },
    #[error("IN with empty input queue at pc {pc}")]
    InputExhausted { pc: Addr },
    #[error("pc {pc} outside program of {len} instructions")]
    PcOutOfBounds { pc: Addr, len: usize },
    #[error("indirect branch through r{reg} to invalid address {target} at pc {pc}")]
    BadIndirectTarget { reg: u8, target: i64, pc: Addr },
    #[error("RET with empty call stack at pc {pc}")]
    CallStackUnderflow { pc: Addr },
}

/// Declarative corruption of VM state, standing in for memory-error exploits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fault {
    /// Overwrite data word `addr` with `value` the first time execution
    /// reaches `pc` (applied before that instruction runs).
    WriteData { pc: Addr, addr: u32, value: i32 },
    /// Override the value popped by the `occurrence`-th (0-based) execution
    /// of the RET instruction at `ret_pc`, redirecting the return to `target`.
    HijackReturn {
        ret_pc: Addr,
        occurrence: u32,
        target: Addr,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultInjection {
    pub faults: Vec<Fault>,
}

impl FaultInjection {
    pub fn none() -> Self {
        FaultInjection::default()
    }

    pub fn single(fault: Fault) -> Self {
        FaultInjection {
            faults: vec![fault],
        }
    }
}

#[derive(Clone, Debug)]
pub struct MachineState {
    pub pc: Addr,
    pub regs: [i32; super::NUM_REGS],
    pub lr: Addr,
    pub flag_eq: bool,
    pub flag_lt: bool,
    pub data: Vec<i32>,
    pub call_stack: Vec<Addr>,
    pub input: std::collections::VecDeque<i32>,
    pub output: Vec<i32>,
    pub halted: bool,
}

/// How a run ended.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RunOutcome {
    Halted,
    Faulted(VmError),
}

impl RunOutcome {
    pub fn is_halted(&self) -> bool {
        matches!(self, RunOutcome::Halted)
    }
}

pub struct Vm<'p> {
    program: &'p Program,
    pub state: MachineState,
    faults: FaultInjection,
    /// Per-fault bookkeeping: WriteData fired? / HijackReturn occurrences seen.
    fault_progress: Vec<u32>,
    pub steps: u64,
    step_budget: u64,
}

impl<'p> Vm<'p> {
    pub fn new(program: &'p Program, input: Vec<i32>, faults: FaultInjection) -> Self {
        let fault_progress = vec![0; faults.faults.len()];
        Vm {
            program,
            state: MachineState {
                pc: 0,
                regs: [0; super::NUM_REGS],
                lr: 0,
                flag_eq: false,
                flag_lt: false,
                data: vec![0; program.data_size as usize],
                call_stack: Vec::new(),
                input: input.into(),
                output: Vec::new(),
                halted: false,
            },
            faults,
            fault_progress,
            steps: 0,
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }

    pub fn with_step_budget(mut self, budget: u64) -> Self {
        self.step_budget = budget;
        self
    }

    fn read_value(&self, ops: Operands, pc: Addr) -> Result<(u8, i32), VmError> {
        match ops {
            Operands::Rr(rd, rs) => Ok((rd, self.state.regs[rs as usize])),
            Operands::Ri(rd, imm) => Ok((rd, imm)),
            _ => Err(VmError::PcOutOfBounds {
                pc,
                len: self.program.len(),
            }),
        }
    }

    fn data_index(&self, value: i64, pc: Addr) -> Result<usize, VmError> {
        if value < 0 || value >= self.state.data.len() as i64 {
            return Err(VmError::InvalidMemoryAccess {
                addr: value,
                size: self.program.data_size,
                pc,
            });
        }
        Ok(value as usize)
    }

    fn check_target(&self, target: i64, reg: u8, pc: Addr) -> Result<Addr, VmError> {
        if target < 0 || target >= self.program.len() as i64 {
            return Err(VmError::BadIndirectTarget { reg, target, pc });
        }
        Ok(target as Addr)
    }

    fn apply_pc_faults(&mut self) {
        let pc = self.state.pc;
        for (i, fault) in self.faults.faults.iter().enumerate() {
            if let Fault::WriteData {
                pc: fpc,
                addr,
                value,
            } = fault
            {
                if *fpc == pc && self.fault_progress[i] == 0 {
                    self.fault_progress[i] = 1;
                    if (*addr as usize) < self.state.data.len() {
                        self.state.data[*addr as usize] = *value;
                    }
                }
            }
        }
    }

    fn ret_override(&mut self, pc: Addr) -> Option<Addr> {
        let mut hit = None;
        for (i, fault) in self.faults.faults.iter().enumerate() {
            if let Fault::HijackReturn {
                ret_pc,
                occurrence,
                target,
            } = fault
            {
                if *ret_pc == pc {
                    let seen = self.fault_progress[i];
                    self.fault_progress[i] = seen + 1;
                    if seen == *occurrence {
                        hit = Some(*target);
                    }
                }
            }
        }
        hit
    }

    /// Execute one instruction. Returns the branch event it produced, if the
    /// instruction was a control-flow instruction.
    pub fn step(&mut self) -> Result<Option<BranchEvent>, VmError> {
        if self.state.halted {
            return Ok(None);
        }
        if self.steps >= self.step_budget {
            return Err(VmError::StepBudgetExhausted(self.step_budget));
        }
        self.steps += 1;
        self.apply_pc_faults();

        let pc = self.state.pc;
        let ins = *self
            .program
            .instruction(pc)
            .ok_or(VmError::PcOutOfBounds {
                pc,
                len: self.program.len(),
            })?;
        let mut event = None;
        let mut next = pc + 1;

        match ins.opcode {
            Opcode::Mov => {
                let (rd, v) = self.read_value(ins.operands, pc)?;
                self.state.regs[rd as usize] = v;
            }
            Opcode::Add => {
                let (rd, v) = self.read_value(ins.operands, pc)?;
                let r = &mut self.state.regs[rd as usize];
                *r = r.wrapping_add(v);
                let r = *r;
                self.state.flag_eq = r == 0;
                self.state.flag_lt = r < 0;
            }
            Opcode::Sub => {
                // ADD/SUB set the flags from the result, like ARM ADDS/SUBS,
                // so counted loops need no separate CMP.
                let (rd, v) = self.read_value(ins.operands, pc)?;
                let r = &mut self.state.regs[rd as usize];
                *r = r.wrapping_sub(v);
                let r = *r;
                self.state.flag_eq = r == 0;
                self.state.flag_lt = r < 0;
            }
            Opcode::Cmp => {
                let (rd, v) = self.read_value(ins.operands, pc)?;
                let a = self.state.regs[rd as usize];
                self.state.flag_eq = a == v;
                self.state.flag_lt = a < v;
            }
            Opcode::Ldr => {
                let (rd, v) = self.read_value(ins.operands, pc)?;
                let idx = self.data_index(v as i64, pc)?;
                self.state.regs[rd as usize] = self.state.data[idx];
            }
            Opcode::Str => {
                // STR rs, rd/imm: store regs[rs] at data[second operand value].
                let (rs, v) = self.read_value(ins.operands, pc)?;
                let idx = self.data_index(v as i64, pc)?;
                self.state.data[idx] = self.state.regs[rs as usize];
            }
            Opcode::In => match ins.operands {
                Operands::R(rd) => {
                    let v = self
                        .state
                        .input
                        .pop_front()
                        .ok_or(VmError::InputExhausted { pc })?;
                    self.state.regs[rd as usize] = v;
                }
                _ => return Err(VmError::PcOutOfBounds { pc, len: 0 }),
            },
            Opcode::Out => match ins.operands {
                Operands::R(rs) => self.state.output.push(self.state.regs[rs as usize]),
                _ => return Err(VmError::PcOutOfBounds { pc, len: 0 }),
            },
            Opcode::B => {
                let target = ins.target().expect("validated at parse");
                event = Some(BranchEvent {
                    kind: BranchKind::DirectJump,
                    src: pc,
                    dst: target,
                });
                next = target;
            }
            Opcode::Beq | Opcode::Bne | Opcode::Blt | Opcode::Bge => {
                let target = ins.target().expect("validated at parse");
                let taken = match ins.opcode {
                    Opcode::Beq => self.state.flag_eq,
                    Opcode::Bne => !self.state.flag_eq,
                    Opcode::Blt => self.state.flag_lt,
                    Opcode::Bge => !self.state.flag_lt,
                    _ => unreachable!(),
                };
                if taken {
                    event = Some(BranchEvent {
                        kind: BranchKind::CondTaken,
                        src: pc,
                        dst: target,
                    });
                    next = target;
                } else {
                    event = Some(BranchEvent {
                        kind: BranchKind::CondNotTaken,
                        src: pc,
                        dst: pc + 1,
                    });
                }
            }
            Opcode::Bl => {
                let target = ins.target().expect("validated at parse");
                self.state.call_stack.push(pc + 1);
                self.state.lr = pc + 1;
                event = Some(BranchEvent {
                    kind: BranchKind::Call,
                    src: pc,
                    dst: target,
                });
                next = target;
            }
            Opcode::Blx => match ins.operands {
                Operands::R(rs) => {
                    let target =
                        self.check_target(self.state.regs[rs as usize] as i64, rs, pc)?;
                    self.state.call_stack.push(pc + 1);
                    self.state.lr = pc + 1;
                    event = Some(BranchEvent {
                        kind: BranchKind::IndirectCall,
                        src: pc,
                        dst: target,
                    });
                    next = target;
                }
                _ => return Err(VmError::PcOutOfBounds { pc, len: 0 }),
            },
            Opcode::Bx => match ins.operands {
                Operands::R(rs) => {
                    let target =
                        self.check_target(self.state.regs[rs as usize] as i64, rs, pc)?;
                    event = Some(BranchEvent {
                        kind: BranchKind::IndirectJump,
                        src: pc,
                        dst: target,
                    });
                    next = target;
                }
                _ => return Err(VmError::PcOutOfBounds { pc, len: 0 }),
            },
            Opcode::Ret => {
                let popped = self
                    .state
                    .call_stack
                    .pop()
                    .ok_or(VmError::CallStackUnderflow { pc })?;
                // An attack hook may override the popped value.
                let target = self.ret_override(pc).unwrap_or(popped);
                if target as usize >= self.program.len() {
                    return Err(VmError::PcOutOfBounds {
                        pc: target,
                        len: self.program.len(),
                    });
                }
                event = Some(BranchEvent {
                    kind: BranchKind::Return,
                    src: pc,
                    dst: target,
                });
                next = target;
            }
            Opcode::Halt => {
                self.state.halted = true;
                next = pc;
            }
        }

        self.state.pc = next;
        Ok(event)
    }

    /// Run until HALT or fault, forwarding branch events to `sink`.
    pub fn run(&mut self, mut sink: impl FnMut(BranchEvent)) -> RunOutcome {
        loop {
            match self.step() {
                Ok(Some(ev)) => sink(ev),
                Ok(None) => {
                    if self.state.halted {
                        return RunOutcome::Halted;
                    }
                }
                Err(e) => return RunOutcome::Faulted(e),
            }
        }
    }
}

/// Convenience wrapper: run `p` on `input`, forwarding branch events.
/// Returns the output words and the executed step count alongside the outcome.
pub fn vm_run(
    p: &Program,
    input: Vec<i32>,
    mut event_sink: impl FnMut(BranchEvent),
    fault: Option<FaultInjection>,
) -> (Vec<i32>, u64, RunOutcome) {
    let mut vm = Vm::new(p, input, fault.unwrap_or_default());
    let outcome = vm.run(&mut event_sink);
    (vm.state.output.clone(), vm.steps, outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_asm;

    fn run_collect(src: &str, input: Vec<i32>) -> (Vec<i32>, Vec<BranchEvent>, RunOutcome) {
        let p = parse_asm(src, "t").unwrap();
        let mut events = Vec::new();
        let (out, _, outcome) = vm_run(&p, input, |e| events.push(e), None);
        (out, events, outcome)
    }

    #[test]
    fn straight_line_no_events() {
        let (out, events, outcome) = run_collect("MOV r0, 5\nOUT r0\nHALT", vec![]);
        assert_eq!(out, vec![5]);
        assert!(events.is_empty());
        assert!(outcome.is_halted());
    }

    #[test]
    fn countdown_loop_event_trace() {
        // Hand-stepped: r0=3. Iterations at pc0..1: SUB makes r0=2 (ne, taken),
        // r0=1 (ne, taken), r0=0 (eq, not taken), then HALT.
        let src = "loop: SUB r0, 1\nBNE loop\nHALT";
        let p = parse_asm(src, "t").unwrap();
        let mut vm = Vm::new(&p, vec![], FaultInjection::none());
        vm.state.regs[0] = 3;
        let mut events = Vec::new();
        let outcome = vm.run(|e| events.push(e));
        assert!(outcome.is_halted());
        let kinds: Vec<BranchKind> = events.iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            vec![
                BranchKind::CondTaken,
                BranchKind::CondTaken,
                BranchKind::CondNotTaken
            ]
        );
        assert_eq!(events[2].dst, events[2].src + 1);
    }

    #[test]
    fn call_and_return() {
        let src = "BL sub\nOUT r0\nHALT\nsub: MOV r0, 7\nRET";
        let (out, events, outcome) = run_collect(src, vec![]);
        assert!(outcome.is_halted());
        assert_eq!(out, vec![7]);
        assert_eq!(events[0].kind, BranchKind::Call);
        assert_eq!(events[1], BranchEvent { kind: BranchKind::Return, src: 4, dst: 1 });
    }

    #[test]
    fn input_exhaustion_faults() {
        let (_, _, outcome) = run_collect("IN r0\nHALT", vec![]);
        assert_eq!(outcome, RunOutcome::Faulted(VmError::InputExhausted { pc: 0 }));
    }

    #[test]
    fn memory_access_out_of_bounds() {
        let (_, _, outcome) = run_collect(".data 2\nMOV r0, 9\nLDR r1, r0\nHALT", vec![]);
        assert!(matches!(
            outcome,
            RunOutcome::Faulted(VmError::InvalidMemoryAccess { addr: 9, .. })
        ));
    }

    #[test]
    fn step_budget_exhaustion() {
        let p = parse_asm("loop: B loop\nHALT", "t").unwrap();
        let mut vm = Vm::new(&p, vec![], FaultInjection::none()).with_step_budget(100);
        let outcome = vm.run(|_| {});
        assert_eq!(outcome, RunOutcome::Faulted(VmError::StepBudgetExhausted(100)));
    }

    #[test]
    fn write_data_fault_applies_once() {
        let src = ".data 1\nMOV r0, 5\nSTR r0, 0\nLDR r1, 0\nOUT r1\nHALT";
        let p = parse_asm(src, "t").unwrap();
        let fault = FaultInjection::single(Fault::WriteData {
            pc: 2,
            addr: 0,
            value: 42,
        });
        let (out, _, outcome) = vm_run(&p, vec![], |_| {}, Some(fault));
        assert!(outcome.is_halted());
        // Fault fires before pc 2 (LDR), after the STR wrote 5.
        assert_eq!(out, vec![42]);
    }

    #[test]
    fn hijack_return_redirects() {
        let src = "BL sub\nMOV r0, 1\nHALT\nsub: RET\nMOV r0, 9\nHALT";
        let p = parse_asm(src, "t").unwrap();
        let fault = FaultInjection::single(Fault::HijackReturn {
            ret_pc: 3,
            occurrence: 0,
            target: 4,
        });
        let mut events = Vec::new();
        let mut vm = Vm::new(&p, vec![], fault);
        let outcome = vm.run(|e| events.push(e));
        assert!(outcome.is_halted());
        assert_eq!(vm.state.regs[0], 9);
        assert_eq!(events[1].dst, 4);
    }

    #[test]
    fn determinism_over_repetitions() {
        let src = ".data 1\nIN r0\nSTR r0, 0\nloop: LDR r1, 0\nCMP r1, 0\nBEQ done\nSUB r1, 1\nSTR r1, 0\nOUT r1\nB loop\ndone: HALT";
        let p = parse_asm(src, "t").unwrap();
        let mut reference: Option<(Vec<i32>, Vec<BranchEvent>, u64)> = None;
        for _ in 0..20 {
            let mut events = Vec::new();
            let (out, steps, outcome) = vm_run(&p, vec![4], |e| events.push(e), None);
            assert!(outcome.is_halted());
            match &reference {
                None => reference = Some((out, events, steps)),
                Some((o, e, s)) => {
                    assert_eq!(&out, o);
                    assert_eq!(&events, e);
                    assert_eq!(steps, *s);
                }
            }
        }
    }

    #[test]
    fn event_count_matches_control_flow_executions() {
        // Count executed control-flow instructions with an independent stepper.
        let src = "IN r0\nloop: CMP r0, 0\nBEQ done\nSUB r0, 1\nB loop\ndone: HALT";
        let p = parse_asm(src, "t").unwrap();
        let mut events = 0usize;
        let mut vm = Vm::new(&p, vec![5], FaultInjection::none());
        let mut cf_executed = 0usize;
        loop {
            let pc = vm.state.pc;
            let is_cf = p.instruction(pc).unwrap().opcode.is_control_flow();
            match vm.step() {
                Ok(Some(_)) => {
                    events += 1;
                    assert!(is_cf);
                    cf_executed += 1;
                }
                Ok(None) => {
                    if vm.state.halted {
                        break;
                    }
                }
                Err(e) => panic!("fault: {e}"),
            }
        }
        assert_eq!(events, cf_executed);
        // 5 iterations x (BEQ not taken + B) + final BEQ taken = 11.
        assert_eq!(events, 11);
    }
}
