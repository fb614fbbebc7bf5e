//! Named random substreams derived from one master seed.
//!
//! Each stream gets its own ChaCha8 key, computed as a SHA-256 digest of the
//! master seed and a label path. Streams never overlap, so adding a sensor or
//! a month leaves every other stream untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// One component of a substream label.
#[derive(Debug, Clone, Copy)]
pub enum Label<'a> {
    Str(&'a str),
    Int(i64),
}

impl<'a> From<&'a str> for Label<'a> {
    fn from(s: &'a str) -> Self {
        Label::Str(s)
    }
}

impl From<i64> for Label<'_> {
    fn from(v: i64) -> Self {
        Label::Int(v)
    }
}

fn digest(master: u64, labels: &[Label<'_>]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"driftlab/v1");
    h.update(master.to_le_bytes());
    for label in labels {
        match label {
            Label::Str(s) => {
                h.update([0u8]);
                h.update((s.len() as u64).to_le_bytes());
                h.update(s.as_bytes());
            }
            Label::Int(v) => {
                h.update([1u8]);
                h.update(v.to_le_bytes());
            }
        }
    }
    h.finalize().into()
}

/// 64-bit seed for the substream `labels` under `master`.
pub fn derive_seed(master: u64, labels: &[Label<'_>]) -> u64 {
    let d = digest(master, labels);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Counter-based generator keyed by the substream digest.
pub fn substream(master: u64, labels: &[Label<'_>]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(digest(master, labels))
}
