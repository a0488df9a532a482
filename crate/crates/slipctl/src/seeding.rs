//! Deterministic seed derivation for trials and sweep cells.
//!
//! Every cell seed is a pure function of the master seed and the cell
//! coordinates, so any single cell can be re-run in isolation and
//! reproduce its results byte for byte.

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a master seed with a tag and a list of integer coordinates.
pub fn derive_seed(master: u64, tag: &str, coords: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ 0x5357_4545_5021_3137);
    for b in tag.bytes() {
        h = splitmix64(h ^ b as u64);
    }
    for &c in coords {
        h = splitmix64(h ^ c);
    }
    h
}
