//! Derivation of per-cell seeds from the master seed.
//!
//! A sub-seed is a SplitMix64 chain over the master seed, an FNV-1a hash of a
//! purpose tag and a list of indices. The degradation seed depends only on
//! `(image, realization)`, so every α and solver sees the same observation.

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3))
}

pub fn sub_seed(master: u64, tag: &str, indices: &[u64]) -> u64 {
    let mut h = splitmix(master ^ fnv1a(tag));
    for &i in indices {
        h = splitmix(h ^ i);
    }
    h
}

pub fn degradation_seed(master: u64, image: usize, realization: usize) -> u64 {
    sub_seed(master, "degrade", &[image as u64, realization as u64])
}

pub fn init_seed(master: u64, image: usize, realization: usize) -> u64 {
    sub_seed(master, "init", &[image as u64, realization as u64])
}

pub fn solver_seed(master: u64, image: usize, realization: usize, alpha: usize, solver: usize) -> u64 {
    sub_seed(master, "solver", &[image as u64, realization as u64, alpha as u64, solver as u64])
}
