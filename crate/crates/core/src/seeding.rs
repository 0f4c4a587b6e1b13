//! Stable seed derivation. The standard library hasher is allowed to change
//! between releases, so reproducibility across toolchains needs a fixed
//! algorithm; FNV-1a is small and good enough for spreading seeds.

/// FNV-1a over the concatenated byte strings.
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // separator byte so ("ab","c") and ("a","bc") differ
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Mixes a base seed with string tags into a new seed.
pub fn derive_seed(base: u64, tags: &[&str]) -> u64 {
    let base_bytes = base.to_le_bytes();
    let mut parts: Vec<&[u8]> = vec![&base_bytes];
    parts.extend(tags.iter().map(|t| t.as_bytes()));
    stable_hash(&parts)
}
