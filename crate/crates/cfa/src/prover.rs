//! Prover side: runs the program under the VM with the measurement engine
//! attached, handling whole-program and region attestation.

use thiserror::Error;

use crate::cfg::AnalyzedProgram;
use crate::engine::{EngineError, EngineTables, MeasurementEngine, Report};
use crate::isa::{FaultInjection, Vm, VmError};
use crate::verifier::{Challenge, REGION_END_HALT};

#[derive(Debug, Error)]
pub enum ProverError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("vm fault during attested run: {0}")]
    Vm(#[from] VmError),
    #[error("execution halted before reaching region begin {0}")]
    RegionNotReached(u32),
}

/// What the attested run produced besides the report.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub output: Vec<i32>,
    pub steps: u64,
    /// Number of branch events measured; zero means the attested region ran
    /// straight through without control flow.
    pub events: u64,
}

/// Execute `analyzed.program` on `input` and attest the challenge's region.
///
/// Execution before `region_begin` is unmeasured; measurement starts when
/// the program counter first reaches it and stops when the counter reaches
/// `region_end` (a branch event landing exactly on the end address is still
/// measured; falling through onto it is not) or the program halts.
pub fn run_attested(
    analyzed: &AnalyzedProgram,
    input: Vec<i32>,
    challenge: &Challenge,
    key: &[u8; 32],
    fault: Option<FaultInjection>,
) -> Result<(RunResult, Report), ProverError> {
    let tables = EngineTables::from_analysis(analyzed);
    let engine = MeasurementEngine::new(*key);
    let mut vm = Vm::new(&analyzed.program, input, fault.unwrap_or_default());

    let begin = challenge.region_begin;
    let end = challenge.region_end;

    // Run unmeasured up to the region start.
    while vm.state.pc != begin && !vm.state.halted {
        vm.step()?;
    }
    if vm.state.halted && begin != 0 {
        return Err(ProverError::RegionNotReached(begin));
    }

    let mut state = engine.cfa_init(challenge, &tables, begin)?;
    loop {
        if vm.state.halted {
            break;
        }
        if let Some(ev) = vm.step()? {
            state.record_event(ev);
        }
        if end != REGION_END_HALT && vm.state.pc == end {
            break;
        }
    }

    let result = RunResult {
        output: vm.state.output.clone(),
        steps: vm.steps,
        events: state.events_seen(),
    };
    let report = engine.cfa_quote(state, challenge);
    Ok((result, report))
}
