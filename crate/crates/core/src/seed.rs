//! Per-task seed derivation.

use sha2::{Digest, Sha256};

/// Seed for one task, a hash of the global seed and the task's identity.
/// Independent of scheduling, so worker count never changes results.
pub fn task_seed(global: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(first)
}
