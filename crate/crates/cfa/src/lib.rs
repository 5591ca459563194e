//! Control-flow attestation at desk scale: a toy-ISA prover whose execution
//! path is measured as a cumulative BLAKE2 hash chain and remotely verified
//! through a nonce-based challenge-response protocol.
//!
//! The crate is organized along the attestation pipeline:
//!
//! - [`isa`]: the instruction set, assembler, and deterministic VM emitting
//!   one branch event per executed control-flow instruction.
//! - [`cfg`]: static analysis — basic-block CFG, natural loops, call/return
//!   indexing, and enumeration of the legal measurement database.
//! - [`engine`]: the trusted measurement engine maintaining the hash chain,
//!   loop sub-chains, and the shadow stack; holds the attestation key.
//! - [`prover`]: binds VM and engine into attested runs.
//! - [`verifier`]: challenge issuance, measurement database, report checks.
//! - [`wire`]: byte-exact challenge/report framing and the TCP service.
//! - [`attacklab`]: the demo corpus and fault-injection attack scenarios.
//!
//! See the `examples/` directory for runnable walkthroughs of each part.

pub mod attacklab;
pub mod cfg;
pub mod engine;
pub mod isa;
pub mod prover;
pub mod verifier;
pub mod wire;

/// Serde adapter: 32-byte hashes as lowercase hex strings in JSON.
pub(crate) mod hex32 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("expected 32 bytes of hex"))
    }
}
