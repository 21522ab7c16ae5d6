//! Matérn-5/2 covariance with automatic relevance determination.
//!
//! k(x, z) = σ² (1 + √5 r + 5r²/3) exp(−√5 r),  r² = Σₖ (xₖ−zₖ)²/ℓₖ².

use ndarray::{Array1, Array2, ArrayView2};

pub(crate) const SQRT5: f64 = 2.23606797749978969640917366873;

/// Kernel evaluation state: per-dimension lengthscales plus signal variance.
#[derive(Debug, Clone)]
pub struct Matern52Ard {
    pub lengthscales: Array1<f64>,
    pub signal_variance: f64,
}

impl Matern52Ard {
    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Covariance between two points.
    pub fn value(&self, x: &[f64], z: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(z.len(), self.dim());
        let mut r2 = 0.0;
        for k in 0..x.len() {
            let d = (x[k] - z[k]) / self.lengthscales[k];
            r2 += d * d;
        }
        self.from_r(r2.sqrt())
    }

    #[inline]
    fn from_r(&self, r: f64) -> f64 {
        self.signal_variance * (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * (-SQRT5 * r).exp()
    }

    /// Pairwise scaled squared distances via the inner-product expansion,
    /// clamped at zero against cancellation.
    fn scaled_sq_dists(&self, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
        let inv_ls = self.lengthscales.mapv(|l| 1.0 / l);
        let ua = &a * &inv_ls;
        let ub = &b * &inv_ls;
        let na: Array1<f64> = ua.rows().into_iter().map(|r| r.dot(&r)).collect();
        let nb: Array1<f64> = ub.rows().into_iter().map(|r| r.dot(&r)).collect();
        let mut d2 = ua.dot(&ub.t());
        for i in 0..d2.nrows() {
            for j in 0..d2.ncols() {
                d2[[i, j]] = (na[i] + nb[j] - 2.0 * d2[[i, j]]).max(0.0);
            }
        }
        d2
    }

    /// Symmetric kernel matrix over one point set.
    pub fn matrix(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let n = x.nrows();
        let d2 = self.scaled_sq_dists(x, x);
        let mut k = Array2::zeros((n, n));
        for i in 0..n {
            k[[i, i]] = self.signal_variance;
            for j in 0..i {
                let v = self.from_r(d2[[i, j]].sqrt());
                k[[i, j]] = v;
                k[[j, i]] = v;
            }
        }
        k
    }

    /// Kernel matrix plus the shared lengthscale-gradient factor
    /// G = σ² (5/3)(1 + √5 r) exp(−√5 r), so that
    /// ∂k/∂ln ℓₖ = G · (xₖ−zₖ)²/ℓₖ².
    pub fn matrix_with_grad_factor(&self, x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let n = x.nrows();
        let d2 = self.scaled_sq_dists(x, x);
        let mut k = Array2::zeros((n, n));
        let mut g = Array2::zeros((n, n));
        for i in 0..n {
            k[[i, i]] = self.signal_variance;
            g[[i, i]] = self.signal_variance * 5.0 / 3.0;
            for j in 0..i {
                let r = d2[[i, j]].sqrt();
                let e = (-SQRT5 * r).exp();
                let kv = self.signal_variance * (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * e;
                let gv = self.signal_variance * 5.0 / 3.0 * (1.0 + SQRT5 * r) * e;
                k[[i, j]] = kv;
                k[[j, i]] = kv;
                g[[i, j]] = gv;
                g[[j, i]] = gv;
            }
        }
        (k, g)
    }

    /// Cross-covariance matrix between two point sets (rows of `a` × rows of `b`).
    pub fn cross(&self, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
        let mut k = self.scaled_sq_dists(a, b);
        k.mapv_inplace(|d2| self.from_r(d2.sqrt()));
        k
    }
}
