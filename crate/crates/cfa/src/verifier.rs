//! Verifier-side machinery: challenge issuance, the measurement database,
//! and report validation with loop-counter policy checks.

use std::collections::{HashSet, VecDeque};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::cfg::{enumerate_measurements, AnalyzedProgram, EnumBounds, MeasurementDb};
use crate::engine::{Report, ZERO_HASH};
use crate::isa::Addr;
use crate::prover::run_attested;

/// Region sentinel: attest until the program halts.
pub const REGION_END_HALT: Addr = u32::MAX;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Challenge {
    #[serde(with = "crate::hex32")]
    pub program_digest: [u8; 32],
    pub region_begin: Addr,
    pub region_end: Addr,
    pub nonce: [u8; 16],
    pub iv: Option<[u8; 32]>,
}

impl Challenge {
    /// Fresh whole-program challenge with a random nonce and no IV.
    pub fn fresh(program_digest: [u8; 32]) -> Self {
        let mut nonce = [0u8; 16];
        rand::thread_rng().fill_bytes(&mut nonce);
        Challenge {
            program_digest,
            region_begin: 0,
            region_end: REGION_END_HALT,
            nonce,
            iv: None,
        }
    }

    pub fn with_iv(mut self, iv: [u8; 32]) -> Self {
        self.iv = Some(iv);
        self
    }

    pub fn with_region(mut self, begin: Addr, end: Addr) -> Self {
        self.region_begin = begin;
        self.region_end = end;
        self
    }

    pub fn iv_or_zero(&self) -> [u8; 32] {
        self.iv.unwrap_or(ZERO_HASH)
    }
}

/// Per-loop allowed iteration counts, keyed by loop header entry address.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Policy {
    pub loops: std::collections::BTreeMap<Addr, CountPredicate>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountPredicate {
    Exact(u32),
    Range { min: u32, max: u32 },
    Any,
}

impl CountPredicate {
    pub fn allows(&self, observed: u32) -> bool {
        match *self {
            CountPredicate::Exact(n) => observed == n,
            CountPredicate::Range { min, max } => (min..=max).contains(&observed),
            CountPredicate::Any => true,
        }
    }
}

impl Policy {
    pub fn expect_exact(mut self, header: Addr, count: u32) -> Self {
        self.loops.insert(header, CountPredicate::Exact(count));
        self
    }
}

/// Outcome of report validation; the first failing check determines the
/// verdict, in the fixed order tag, nonce, static digest, path, loops,
/// policy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Valid {
        path: String,
        loop_counts: Vec<(Addr, u32)>,
    },
    UnknownPath {
        unmatched: String,
    },
    PolicyViolation {
        loop_header: Addr,
        observed: u32,
        allowed: String,
    },
    BadTag,
    ReplayedNonce,
    StaticMismatch,
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid { .. })
    }
}

/// Sliding window of recently accepted nonces, guarding against replay.
#[derive(Debug, Default)]
pub struct ReplayWindow {
    seen: HashSet<[u8; 16]>,
    order: VecDeque<[u8; 16]>,
}

pub const REPLAY_WINDOW: usize = 1024;

impl ReplayWindow {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record the nonce; returns false if it was already seen.
    pub fn admit(&mut self, nonce: [u8; 16]) -> bool {
        if !self.seen.insert(nonce) {
            return false;
        }
        self.order.push_back(nonce);
        if self.order.len() > REPLAY_WINDOW {
            if let Some(old) = self.order.pop_front() {
                self.seen.remove(&old);
            }
        }
        true
    }
}

/// Build a measurement database by running the program over a set of inputs
/// and recording the observed measurements, merged with exhaustive
/// enumeration when that completed within bounds.
pub fn profile_db(
    analyzed: &AnalyzedProgram,
    inputs: &[Vec<i32>],
    key: &[u8; 32],
) -> MeasurementDb {
    let mut db = enumerate_measurements(analyzed, &EnumBounds::default());
    for input in inputs {
        let challenge = Challenge::fresh(analyzed.cfg.program_digest);
        if let Ok((_, report)) = run_attested(analyzed, input.clone(), &challenge, key, None) {
            db.absorb_profiled(&report.auth, input);
        }
    }
    db
}

/// Validate a report against the database and policy. Checks run in a fixed
/// order so failure attribution is stable: MAC tag, nonce freshness, static
/// program digest, final hash, loop context and path hashes, loop-count
/// policy.
pub fn verify_report(
    report: &Report,
    challenge: &Challenge,
    db: &MeasurementDb,
    policy: &Policy,
    key: &[u8; 32],
    replay: &mut ReplayWindow,
) -> Verdict {
    if !report.verify_tag(key, &challenge.nonce) {
        return Verdict::BadTag;
    }
    if !replay.admit(challenge.nonce) {
        return Verdict::ReplayedNonce;
    }
    if report.auth.program_digest != challenge.program_digest
        || db.program_digest != challenge.program_digest
    {
        return Verdict::StaticMismatch;
    }

    let iv = challenge.iv_or_zero();
    let view = db.view(iv, challenge.region_begin, challenge.region_end);

    let path = match view.final_hashes.get(&report.auth.final_hash) {
        Some(desc) => desc.clone(),
        None => {
            return Verdict::UnknownPath {
                unmatched: format!("final hash {}", hex::encode(report.auth.final_hash)),
            }
        }
    };

    for rec in &report.auth.records {
        if rec.is_anomaly() {
            return Verdict::UnknownPath {
                unmatched: format!("anomaly record at {}", rec.header_entry),
            };
        }
        let legal_contexts = view.contexts.get(&rec.header_entry);
        if !legal_contexts.is_some_and(|s| s.contains(&rec.context_hash)) {
            return Verdict::UnknownPath {
                unmatched: format!(
                    "loop {} context hash {}",
                    rec.header_entry,
                    hex::encode(rec.context_hash)
                ),
            };
        }
        let legal_paths = db.loop_paths.get(&rec.header_entry);
        for (path_hash, _) in &rec.paths {
            if !legal_paths.is_some_and(|s| s.paths.contains_key(&hex::encode(path_hash))) {
                return Verdict::UnknownPath {
                    unmatched: format!(
                        "loop {} path hash {}",
                        rec.header_entry,
                        hex::encode(path_hash)
                    ),
                };
            }
        }
    }

    let mut loop_counts = Vec::new();
    for rec in &report.auth.records {
        let total: u32 = rec.paths.iter().map(|(_, c)| *c).sum();
        loop_counts.push((rec.header_entry, total));
        if let Some(pred) = policy.loops.get(&rec.header_entry) {
            if !pred.allows(total) {
                return Verdict::PolicyViolation {
                    loop_header: rec.header_entry,
                    observed: total,
                    allowed: format!("{pred:?}"),
                };
            }
        }
    }

    Verdict::Valid { path, loop_counts }
}
