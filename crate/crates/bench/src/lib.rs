//! Shared inputs for the benchmarks.

use gsr_core::distributions::{fill_standard_normal, stream_rng};

/// Row-major `len × d` standard Gaussian draws.
pub fn gaussian_rows(d: usize, len: usize, seed: u64) -> Vec<f64> {
    let mut buf = vec![0.0; d * len];
    fill_standard_normal(&mut stream_rng(seed, d as u64), &mut buf);
    buf
}
