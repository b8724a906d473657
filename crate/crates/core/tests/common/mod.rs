//! Test-side oracles shared by the integration tests. Nothing here calls into
//! the engines; values are recomputed from first principles.
#![allow(dead_code)]

pub mod benchmarks;
pub mod footprint;
pub mod programs;
pub mod reference;
pub mod stepper;

/// Sequential splitmix64: the n-th output of a generator seeded with `seed`.
pub fn splitmix64_nth(seed: u64, n: u64) -> u64 {
    let mut state = seed;
    let mut out = 0;
    for _ in 0..=n {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        out = z ^ (z >> 31);
    }
    out
}

/// `len` consecutive uniform doubles in [0, 1) from `seed`.
pub fn uniform_doubles(seed: u64, len: usize) -> Vec<f64> {
    let mut state = seed;
    (0..len)
        .map(|_| {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            ((z ^ (z >> 31)) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
        })
        .collect()
}
