//! Small shared helpers.

/// FNV-1a 64-bit hash (offset 0xcbf29ce484222325, prime 0x100000001b3);
/// used for content digests in manifests, not for security.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}
