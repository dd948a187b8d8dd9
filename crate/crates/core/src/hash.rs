//! Fixed 64-bit mixing hash.
//!
//! Fingerprint identifiers and derived RNG seeds go through this hash so
//! results are bit-reproducible across machines and runs. It is the
//! SplitMix64 finalizer applied fold-wise over the input words; seedless by
//! construction.

/// SplitMix64 finalizer; bijective on `u64`.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Fold one more word into a running state. Order-sensitive.
#[inline]
pub fn fold(state: u64, word: u64) -> u64 {
    mix64(state.rotate_left(7) ^ word)
}

/// Hash a word sequence; the length is folded in so prefixes do not collide.
pub fn hash_words(words: &[u64]) -> u64 {
    let mut state = 0x243f_6a88_85a3_08d3; // digits of pi
    for &w in words {
        state = fold(state, w);
    }
    mix64(state ^ words.len() as u64)
}

/// Derive a child seed from a master seed and a textual scope such as
/// `"cell/10/endpoint/3"`. Independent scopes give independent streams.
pub fn derive_seed(master: u64, scope: &str) -> u64 {
    let mut state = mix64(master);
    for &b in scope.as_bytes() {
        state = fold(state, u64::from(b));
    }
    mix64(state ^ scope.len() as u64)
}
