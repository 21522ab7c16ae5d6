//! Scrambled quasi-random point sets.
//!
//! Candidate generation and restart designs draw on a Sobol sequence built
//! from the Joe–Kuo direction numbers (via the `sobol` crate), scrambled by
//! a seeded digital shift: every dimension gets one random 32-bit mask that
//! is XORed into the raw sequence values. The shift randomizes the point set
//! while preserving its dyadic stratification, and is reproducible per seed.

use ndarray::Array2;
use rand::Rng;
use sobol::params::JoeKuoD6;
use sobol::Sobol;
use std::sync::OnceLock;

/// Direction numbers for up to 1000 dimensions; parsed once, reused.
fn standard_params() -> &'static JoeKuoD6 {
    static PARAMS: OnceLock<JoeKuoD6> = OnceLock::new();
    PARAMS.get_or_init(JoeKuoD6::standard)
}

/// The full Joe–Kuo table, only decompressed if very high dimensions are hit.
fn extended_params() -> &'static JoeKuoD6 {
    static PARAMS: OnceLock<JoeKuoD6> = OnceLock::new();
    PARAMS.get_or_init(JoeKuoD6::extended)
}

const MAX_DIM: usize = 1024;

/// `n` points of a digitally-shifted Sobol sequence in `[0,1)^d`.
pub fn scrambled_sobol(n: usize, d: usize, rng: &mut impl Rng) -> Array2<f64> {
    assert!(d >= 1 && d <= MAX_DIM, "sobol dimension {d} outside 1..={MAX_DIM}");
    let shift: Vec<u32> = (0..d).map(|_| rng.random()).collect();
    let params = if d < 1000 { standard_params() } else { extended_params() };
    let seq = Sobol::<u32>::new(d, params);
    let mut out = Array2::zeros((n, d));
    for (i, point) in seq.take(n).enumerate() {
        for (j, v) in point.into_iter().enumerate() {
            out[[i, j]] = (v ^ shift[j]) as f64 / (u32::MAX as f64 + 1.0);
        }
    }
    out
}
