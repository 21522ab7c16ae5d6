//! Dense linear-algebra helpers shared by the GP code.
//!
//! Everything funnels through LAPACK via `ndarray-linalg`. BLAS is pinned to
//! a single thread: run-level parallelism lives at the replication layer, and
//! a fixed thread count keeps factorizations bit-reproducible.

use ndarray::{Array1, Array2};
use ndarray_linalg::layout::AllocatedArray;
use ndarray_linalg::{
    CholeskyInplace, Diag, Lapack, SolveTriangularInplace, SolveTriangularInto, UPLO,
};
use std::sync::Once;
use thiserror::Error;

extern "C" {
    fn openblas_set_num_threads(n: i32);
}

static PIN_BLAS: Once = Once::new();

/// Force OpenBLAS onto one thread. Called before any factorization; a no-op
/// after the first call.
pub fn pin_blas_single_thread() {
    PIN_BLAS.call_once(|| unsafe {
        openblas_set_num_threads(1);
    });
}

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite even with jitter {max_jitter:e} on the diagonal")]
    NotPositiveDefinite { max_jitter: f64 },
    #[error("LAPACK failure: {0}")]
    Backend(#[from] ndarray_linalg::error::LinalgError),
}

/// Diagonal-jitter escalation schedule: `start`, then ×10 per retry up to
/// `cap` inclusive. A first attempt is always made with no jitter at all.
#[derive(Debug, Clone, Copy)]
pub struct JitterLadder {
    pub start: f64,
    pub cap: f64,
}

impl Default for JitterLadder {
    fn default() -> Self {
        JitterLadder { start: 1e-8, cap: 1e-4 }
    }
}

impl JitterLadder {
    fn rungs(&self) -> impl Iterator<Item = f64> + '_ {
        let steps = (self.cap / self.start).log10().round().max(0.0) as usize;
        std::iter::once(0.0).chain((0..=steps).map(|k| self.start * 10f64.powi(k as i32)))
    }
}

/// Lower Cholesky factor plus the jitter that made the factorization succeed.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    pub lower: Array2<f64>,
    pub jitter: f64,
}

/// Factor a symmetric matrix, escalating diagonal jitter on failure.
pub fn cholesky_with_jitter(
    a: &Array2<f64>,
    ladder: JitterLadder,
) -> Result<CholeskyFactor, LinalgError> {
    pin_blas_single_thread();
    for jitter in ladder.rungs() {
        let mut m = a.clone();
        if jitter > 0.0 {
            for i in 0..m.nrows() {
                m[[i, i]] += jitter;
            }
        }
        if m.cholesky_inplace(UPLO::Lower).is_ok() {
            zero_upper(&mut m);
            return Ok(CholeskyFactor { lower: m, jitter });
        }
    }
    Err(LinalgError::NotPositiveDefinite { max_jitter: ladder.cap })
}

/// Single-precision variant used by the candidate-set sampling fast path;
/// consumes its input to avoid a second r×r buffer.
pub fn cholesky_with_jitter_f32(
    mut a: Array2<f32>,
    ladder: JitterLadder,
) -> Result<Array2<f32>, LinalgError> {
    pin_blas_single_thread();
    let mut applied = 0.0f64;
    for jitter in ladder.rungs() {
        let add = (jitter - applied) as f32;
        if add > 0.0 {
            for i in 0..a.nrows() {
                a[[i, i]] += add;
            }
            applied = jitter;
        }
        let mut m = a.clone();
        if m.cholesky_inplace(UPLO::Lower).is_ok() {
            return Ok(m);
        }
    }
    Err(LinalgError::NotPositiveDefinite { max_jitter: ladder.cap })
}

/// Solve L x = b for lower-triangular L.
pub fn solve_lower(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    l.solve_triangular_into(UPLO::Lower, Diag::NonUnit, b.clone())
        .expect("triangular solve")
}

/// Solve Lᵀ x = b.
pub fn solve_lower_transpose(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    l.t()
        .to_owned()
        .solve_triangular_into(UPLO::Upper, Diag::NonUnit, b.clone())
        .expect("triangular solve")
}

/// Solve L X = B columnwise for a matrix right-hand side.
pub fn solve_lower_matrix(l: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut x = b.clone();
    l.solve_triangular_inplace(UPLO::Lower, Diag::NonUnit, &mut x)
        .expect("triangular solve");
    x
}

fn zero_upper(m: &mut Array2<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            m[[i, j]] = 0.0;
        }
    }
}

/// log|A| from its lower Cholesky factor.
pub fn log_det_from_cholesky(l: &Array2<f64>) -> f64 {
    2.0 * l.diag().iter().map(|d| d.ln()).sum::<f64>()
}

/// Full symmetric inverse A⁻¹ from a lower Cholesky factor (LAPACK potri).
pub fn spd_inverse_from_factor(factor: &CholeskyFactor) -> Array2<f64> {
    let mut a = factor.lower.clone();
    let layout = a.layout().expect("contiguous square matrix");
    f64::inv_cholesky(layout, UPLO::Lower, a.as_slice_memory_order_mut().unwrap())
        .expect("potri on a valid factor");
    // potri writes one triangle; the factor's zeroed side tells us which.
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if a[[i, j]] == 0.0 {
                a[[i, j]] = a[[j, i]];
            } else {
                a[[j, i]] = a[[i, j]];
            }
        }
    }
    a
}
