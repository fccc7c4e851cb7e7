//! Seed derivation and random streams.
//!
//! Every random quantity in a trial is drawn from its own ChaCha8 stream whose
//! seed is a pure function of `(master seed, point key, trial, purpose)`.
//! Adding sweep points or trials never shifts the streams of existing ones, and
//! the worker that happens to run a trial has no influence on what it draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::C64;

pub type Stream = ChaCha8Rng;

/// What a stream is used for; mixed into the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Pilots = 1,
    Distances = 2,
    Activities = 3,
    Channels = 4,
    Noise = 5,
    StateEvolution = 6,
    Oracle = 7,
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Chains `mix64` over the inputs: `h = mix64(h ^ x)` for each word.
pub fn derive_seed(master: u64, point_key: u64, trial: u64, purpose: Purpose) -> u64 {
    [point_key, trial, purpose as u64]
        .iter()
        .fold(mix64(master), |h, &w| mix64(h ^ w))
}

/// 64-bit FNV-1a, used to key sweep points by their parameter values.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One draw from CN(0, variance): independent real and imaginary parts with
/// variance `variance / 2` each.
pub fn complex_normal<R: rand::Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}
