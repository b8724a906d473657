//! Counter-based splitmix64 stream.
//!
//! Element `i` of a RANDOM instruction with seed `s` is the `i`-th output of a
//! splitmix64 generator whose state starts at `s`. Values depend only on the seed
//! and the row-major output position, never on blocking or thread count.

use crate::model::{Buffer, Constant, DType};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Raw 64 bits for position `index` of the stream seeded with `seed`.
pub fn random_bits(seed: u64, index: u64) -> u64 {
    mix(seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Uniform in [0, 1) with 53 random bits.
pub fn bits_to_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn bits_to_f32(bits: u64) -> f32 {
    (bits >> 40) as f32 * (1.0 / (1u64 << 24) as f32)
}

/// Non-negative integer from the top 63 bits.
pub fn bits_to_i64(bits: u64) -> i64 {
    (bits >> 1) as i64
}

pub fn bits_to_bool(bits: u64) -> bool {
    bits >> 63 == 1
}

pub fn random_value(dtype: DType, seed: u64, index: u64) -> Constant {
    let bits = random_bits(seed, index);
    match dtype {
        DType::Float64 => Constant::Float64(bits_to_f64(bits)),
        DType::Float32 => Constant::Float32(bits_to_f32(bits)),
        DType::Int64 => Constant::Int64(bits_to_i64(bits)),
        DType::Bool => Constant::Bool(bits_to_bool(bits)),
    }
}

/// `len` consecutive values starting at position 0.
pub fn random_buffer(dtype: DType, seed: u64, len: usize) -> Buffer {
    let bits = (0..len as u64).map(|i| random_bits(seed, i));
    match dtype {
        DType::Float64 => Buffer::Float64(bits.map(bits_to_f64).collect()),
        DType::Float32 => Buffer::Float32(bits.map(bits_to_f32).collect()),
        DType::Int64 => Buffer::Int64(bits.map(bits_to_i64).collect()),
        DType::Bool => Buffer::Bool(bits.map(bits_to_bool).collect()),
    }
}
