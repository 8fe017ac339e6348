//! Stable content identifiers and seed derivation.
//!
//! Identifiers are the first 8 bytes of a SHA-256 over length-prefixed
//! parts, rendered as 16 lowercase hex digits. Seeds for a replicate depend
//! only on the base seed, the stream identifier and the replicate index, so
//! adding streams never perturbs existing ones.

use alloc::string::String;
use core::fmt::Write;

use sha2::{Digest, Sha256};

fn digest64(parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let out = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&out[..8]);
    u64::from_be_bytes(bytes)
}

/// Hex content id over the given string parts.
pub fn content_id(parts: &[&str]) -> String {
    let raw: alloc::vec::Vec<&[u8]> = parts.iter().map(|p| p.as_bytes()).collect();
    let mut s = String::with_capacity(16);
    write!(s, "{:016x}", digest64(&raw)).expect("writing to a String cannot fail");
    s
}

/// Per-stream key from which replicate seeds are derived.
pub fn stream_key(base_seed: u64, variant_id: &str) -> u64 {
    digest64(&[b"stream", &base_seed.to_le_bytes(), variant_id.as_bytes()])
}

/// Seed of replicate `replicate_index` (1-based) of a stream.
pub fn replicate_seed(stream_key: u64, replicate_index: u32) -> u64 {
    splitmix64(stream_key.wrapping_add(u64::from(replicate_index).wrapping_mul(GOLDEN_GAMMA)))
}

/// Independent child seed for a sub-step of one replicate.
pub fn child_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag.wrapping_add(GOLDEN_GAMMA)))
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
