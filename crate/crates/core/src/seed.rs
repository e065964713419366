//! Labeled sub-seed derivation.
//!
//! Every random stream in a run is derived from one master seed plus a stage
//! label and an index, so results do not depend on scheduling order.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed for `(label, index)` under `master`.
pub fn sub_seed(master: u64, label: &str, index: u64) -> u64 {
    let h = fnv1a64(label.as_bytes());
    splitmix64(splitmix64(master ^ h).wrapping_add(index))
}
