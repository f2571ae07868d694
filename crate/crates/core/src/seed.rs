//! Derived seeds, so parallel work can draw reproducible randomness without
//! sharing a generator.

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6c70_6361_6400_0000, |acc, &p| splitmix(acc ^ splitmix(p)))
}
