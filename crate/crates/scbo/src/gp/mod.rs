//! Gaussian process regression for one scalar output.
//!
//! A Matérn-5/2 ARD kernel with a constant mean; hyperparameters are fitted
//! by maximizing the log-marginal likelihood plus a horseshoe-style log-prior
//! on the noise variance, with a multi-start projected L-BFGS in log space.
//! Targets are standardized to zero mean and unit variance before fitting,
//! and every factorization runs through a diagonal-jitter ladder.
//!
//! All solves are exact and dense: a Cholesky of the n×n kernel-plus-noise
//! matrix is cached on the trained model, and joint posterior sampling at a
//! candidate set factors the full posterior covariance. The sampler has an
//! opt-in single-precision mode for large candidate sets, where the extra
//! jitter it needs is far below the scale that could sway a Thompson draw.

pub mod kernel;
#[cfg(test)]
mod tests;

use crate::linalg::{
    cholesky_with_jitter, cholesky_with_jitter_f32, log_det_from_cholesky, solve_lower,
    solve_lower_matrix, solve_lower_transpose, spd_inverse_from_factor, CholeskyFactor,
    JitterLadder, LinalgError,
};
use crate::opt::{minimize_box, BoxBounds, LbfgsConfig};
use crate::transforms::standardize;
use kernel::Matern52Ard;
use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

const LN_2PI: f64 = 1.83787706640934548356065947281;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] LinalgError),
}

/// Kernel, noise, and mean parameters, all in standardized-target units.
#[derive(Debug, Clone, PartialEq)]
pub struct GpHyperparameters {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
    pub constant_mean: f64,
}

impl GpHyperparameters {
    pub(crate) fn kernel(&self) -> Matern52Ard {
        Matern52Ard {
            lengthscales: Array1::from(self.lengthscales.clone()),
            signal_variance: self.signal_variance,
        }
    }
}

/// Covariance between two points under the given hyperparameters.
pub fn kernel_matern52_ard(
    x: &[f64],
    z: &[f64],
    hyper: &GpHyperparameters,
) -> Result<f64, GpError> {
    let d = hyper.lengthscales.len();
    if x.len() != d || z.len() != d {
        return Err(GpError::InvalidArgument(format!(
            "dimension mismatch: {} lengthscales, points of length {} and {}",
            d,
            x.len(),
            z.len()
        )));
    }
    Ok(hyper.kernel().value(x, z))
}

/// Fit configuration: hyperparameter bounds, the MAP prior, the optimizer
/// schedule, and the factorization jitter ladder.
#[derive(Debug, Clone)]
pub struct GpFitConfig {
    pub lengthscale_bounds: (f64, f64),
    pub signal_variance_bounds: (f64, f64),
    pub noise_variance_bounds: (f64, f64),
    pub constant_mean_bounds: (f64, f64),
    /// Number of optimizer starts from perturbed defaults, beyond the
    /// unperturbed default start (and a warm start when given).
    pub restarts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Scale s of the horseshoe-style noise prior ln ln(1 + (s/σₙ)²).
    pub horseshoe_scale: f64,
    pub jitter: JitterLadder,
    /// Previous hyperparameters to seed one extra start from.
    pub warm_start: Option<GpHyperparameters>,
}

impl Default for GpFitConfig {
    fn default() -> Self {
        GpFitConfig {
            lengthscale_bounds: (0.005, 2.0),
            signal_variance_bounds: (0.05, 20.0),
            noise_variance_bounds: (5e-4, 0.2),
            constant_mean_bounds: (-2.0, 2.0),
            restarts: 3,
            max_iters: 60,
            grad_tol: 1e-5,
            horseshoe_scale: 0.1,
            jitter: JitterLadder::default(),
            warm_start: None,
        }
    }
}

/// A fitted GP: hyperparameters plus the cached factorization of the
/// kernel-plus-noise matrix over the (standardized) training data.
/// Immutable once built; safe to query from multiple threads.
#[derive(Debug, Clone)]
pub struct TrainedGp {
    hyper: GpHyperparameters,
    train_inputs: Array2<f64>,
    train_targets: Array1<f64>,
    target_shift: f64,
    target_scale: f64,
    factor: CholeskyFactor,
    alpha: Array1<f64>,
}

/// Posterior mean and variance at a set of queries, in standardized units.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub mean: Array1<f64>,
    pub variance: Array1<f64>,
}

/// Precision of the joint-sampling covariance factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplePrecision {
    F64,
    F32,
}

impl TrainedGp {
    /// Fit hyperparameters by penalized maximum likelihood.
    pub fn fit(
        inputs: &Array2<f64>,
        targets: &[f64],
        config: &GpFitConfig,
        rng: &mut impl Rng,
    ) -> Result<Self, GpError> {
        let n = inputs.nrows();
        let d = inputs.ncols();
        if n == 0 {
            return Err(GpError::InvalidArgument("need at least one observation".into()));
        }
        if targets.len() != n {
            return Err(GpError::InvalidArgument(format!(
                "{} targets for {} inputs",
                targets.len(),
                n
            )));
        }
        if !targets.iter().all(|t| t.is_finite()) {
            return Err(GpError::InvalidArgument("non-finite targets".into()));
        }

        let (y_std, shift, scale) = standardize(targets);
        let y = Array1::from(y_std);

        let space = ParamSpace::new(d, config);
        let mut starts: Vec<Vec<f64>> = Vec::new();
        if let Some(warm) = &config.warm_start {
            if warm.lengthscales.len() == d {
                starts.push(space.encode(warm));
            }
        }
        let default_u = space.encode(&space.default_hyper(d));
        starts.push(default_u.clone());
        for _ in 0..config.restarts {
            starts.push(space.perturb(&default_u, rng));
        }

        let lbfgs = LbfgsConfig {
            max_iters: config.max_iters,
            grad_tol: config.grad_tol,
            ..Default::default()
        };

        let mut best: Option<(f64, Vec<f64>)> = None;
        for u0 in &starts {
            let mut cache = EvalCache::default();
            let res = minimize_box(
                |u, need_grad| nll_eval(inputs, &y, &space, u, config, need_grad, &mut cache),
                u0,
                &space.bounds,
                lbfgs,
            );
            if res.value.is_finite() && best.as_ref().map_or(true, |(v, _)| res.value < *v) {
                best = Some((res.value, res.x));
            }
        }
        let (_, u_best) =
            best.ok_or_else(|| GpError::InvalidArgument("all optimizer starts failed".into()))?;
        let hyper = space.decode(&u_best);

        let (factor, alpha) = gram_state(inputs, &y, &hyper, config.jitter)?;
        Ok(TrainedGp {
            hyper,
            train_inputs: inputs.clone(),
            train_targets: y,
            target_shift: shift,
            target_scale: scale,
            factor,
            alpha,
        })
    }

    /// Build a model with fixed hyperparameters (no optimization). The
    /// targets are still standardized internally.
    pub fn from_hyperparameters(
        inputs: &Array2<f64>,
        targets: &[f64],
        hyper: GpHyperparameters,
        jitter: JitterLadder,
    ) -> Result<Self, GpError> {
        let (y_std, shift, scale) = standardize(targets);
        let y = Array1::from(y_std);
        let (factor, alpha) = gram_state(inputs, &y, &hyper, jitter)?;
        Ok(TrainedGp {
            hyper,
            train_inputs: inputs.clone(),
            train_targets: y,
            target_shift: shift,
            target_scale: scale,
            factor,
            alpha,
        })
    }

    pub fn hyperparameters(&self) -> &GpHyperparameters {
        &self.hyper
    }

    pub fn num_train(&self) -> usize {
        self.train_inputs.nrows()
    }

    pub fn train_inputs(&self) -> &Array2<f64> {
        &self.train_inputs
    }

    /// Standardized training targets (mean 0, sample variance 1 for n ≥ 2).
    pub fn train_targets(&self) -> &Array1<f64> {
        &self.train_targets
    }

    pub fn target_shift(&self) -> f64 {
        self.target_shift
    }

    pub fn target_scale(&self) -> f64 {
        self.target_scale
    }

    /// Jitter that the training factorization needed (usually zero).
    pub fn jitter(&self) -> f64 {
        self.factor.jitter
    }

    /// Latent posterior (no observation noise), standardized units.
    pub fn posterior(&self, queries: ArrayView2<f64>) -> Posterior {
        let kern = self.hyper.kernel();
        let kq = kern.cross(self.train_inputs.view(), queries);
        let mean = kq.t().dot(&self.alpha) + self.hyper.constant_mean;
        let v = solve_lower_matrix(&self.factor.lower, &kq);
        let variance = Array1::from_iter((0..queries.nrows()).map(|j| {
            let explained: f64 = v.column(j).iter().map(|x| x * x).sum();
            (self.hyper.signal_variance - explained).max(0.0)
        }));
        Posterior { mean, variance }
    }

    /// Predictive posterior for a noisy observation: latent variance plus
    /// the noise variance.
    pub fn posterior_predictive(&self, queries: ArrayView2<f64>) -> Posterior {
        let mut p = self.posterior(queries);
        p.variance += self.hyper.noise_variance;
        p
    }

    /// Map a standardized value back to the (transformed) target scale.
    pub fn destandardize_mean(&self, value: f64) -> f64 {
        self.target_shift + self.target_scale * value
    }

    /// Map a standardized variance back to the (transformed) target scale.
    pub fn destandardize_variance(&self, variance: f64) -> f64 {
        self.target_scale * self.target_scale * variance
    }

    /// The standardized image of zero on the target scale — the feasibility
    /// threshold for constraint models.
    pub fn standardized_zero(&self) -> f64 {
        -self.target_shift / self.target_scale
    }

    /// Factor the joint latent posterior over `queries` for repeated draws.
    pub fn joint_sampler(
        &self,
        queries: ArrayView2<f64>,
        precision: SamplePrecision,
    ) -> Result<JointSampler, GpError> {
        let kern = self.hyper.kernel();
        let kq = kern.cross(self.train_inputs.view(), queries);
        let mean = kq.t().dot(&self.alpha) + self.hyper.constant_mean;
        match precision {
            SamplePrecision::F64 => {
                let v = solve_lower_matrix(&self.factor.lower, &kq);
                let mut cov = kern.matrix(queries);
                cov -= &v.t().dot(&v);
                let factor = cholesky_with_jitter(&cov, JitterLadder::default())?;
                Ok(JointSampler { mean, factor: SamplerFactor::F64(factor.lower) })
            }
            SamplePrecision::F32 => {
                let l32 = self.factor.lower.mapv(|x| x as f32);
                let kq32 = kq.mapv(|x| x as f32);
                let v32 = {
                    use ndarray_linalg::{Diag, SolveTriangularInplace, UPLO};
                    let mut b = kq32;
                    l32.solve_triangular_inplace(UPLO::Lower, Diag::NonUnit, &mut b)
                        .map_err(LinalgError::Backend)?;
                    b
                };
                let mut cov = kern.matrix(queries).mapv(|x| x as f32);
                cov -= &v32.t().dot(&v32);
                // Single precision needs a coarser ladder; the added noise is
                // O(1e-2) standard deviations at worst, well under the
                // posterior scales that drive candidate ranking.
                let factor =
                    cholesky_with_jitter_f32(cov, JitterLadder { start: 1e-4, cap: 1e-1 })?;
                Ok(JointSampler { mean, factor: SamplerFactor::F32(factor) })
            }
        }
    }

    /// `count` i.i.d. joint draws of the latent function at `queries`
    /// (standardized units), one draw per row. Deterministic per seed.
    pub fn sample_joint(
        &self,
        queries: ArrayView2<f64>,
        count: usize,
        rng: &mut impl Rng,
    ) -> Result<Array2<f64>, GpError> {
        let sampler = self.joint_sampler(queries, SamplePrecision::F64)?;
        let r = queries.nrows();
        let mut out = Array2::zeros((count, r));
        for mut row in out.rows_mut() {
            row.assign(&sampler.draw(rng));
        }
        Ok(out)
    }
}

/// A factored joint posterior over a fixed query set; each `draw` consumes
/// exactly `len()` standard normals from the generator.
pub struct JointSampler {
    mean: Array1<f64>,
    factor: SamplerFactor,
}

enum SamplerFactor {
    F64(Array2<f64>),
    F32(Array2<f32>),
}

impl JointSampler {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn draw(&self, rng: &mut impl Rng) -> Array1<f64> {
        let r = self.len();
        let z: Vec<f64> = (0..r).map(|_| rng.sample(StandardNormal)).collect();
        match &self.factor {
            SamplerFactor::F64(l) => {
                let fluct = l.dot(&Array1::from(z));
                &self.mean + &fluct
            }
            SamplerFactor::F32(l) => {
                let z32 = Array1::from_iter(z.iter().map(|&v| v as f32));
                let fluct = l.dot(&z32);
                Array1::from_iter(
                    self.mean.iter().zip(fluct.iter()).map(|(m, f)| m + *f as f64),
                )
            }
        }
    }
}

/// Penalized log-marginal likelihood (the MAP fitting objective) for
/// standardized targets under the given hyperparameters.
pub fn penalized_log_marginal(
    inputs: &Array2<f64>,
    targets_std: &Array1<f64>,
    hyper: &GpHyperparameters,
    config: &GpFitConfig,
) -> Result<f64, GpError> {
    let state = LikelihoodState::compute(inputs, targets_std, hyper, config.jitter)?;
    Ok(state.lml + horseshoe_log_prior(hyper.noise_variance, config.horseshoe_scale))
}

/// Value and gradient of the penalized log-marginal likelihood. Gradient
/// order is `[∂/∂ln ℓ₁ … ∂/∂ln ℓ_d, ∂/∂ln σ_f², ∂/∂ln σ_n², ∂/∂μ]`.
pub fn penalized_log_marginal_with_grad(
    inputs: &Array2<f64>,
    targets_std: &Array1<f64>,
    hyper: &GpHyperparameters,
    config: &GpFitConfig,
) -> Result<(f64, Vec<f64>), GpError> {
    let state = LikelihoodState::compute(inputs, targets_std, hyper, config.jitter)?;
    let value = state.lml + horseshoe_log_prior(hyper.noise_variance, config.horseshoe_scale);
    let mut grad = state.lml_gradient(inputs, hyper);
    let d = hyper.lengthscales.len();
    grad[d + 1] += horseshoe_log_prior_grad_ln(hyper.noise_variance, config.horseshoe_scale);
    Ok((value, grad))
}

// ln ln(1 + s²/v) where v is the noise variance.
fn horseshoe_log_prior(noise_variance: f64, scale: f64) -> f64 {
    (1.0 + scale * scale / noise_variance).ln().ln()
}

// d/d(ln v) of the prior above.
fn horseshoe_log_prior_grad_ln(noise_variance: f64, scale: f64) -> f64 {
    let t = scale * scale / noise_variance;
    -t / ((1.0 + t) * (1.0 + t).ln())
}

struct LikelihoodState {
    factor: CholeskyFactor,
    alpha: Array1<f64>,
    kmat: Array2<f64>,
    lml: f64,
}

impl LikelihoodState {
    fn compute(
        inputs: &Array2<f64>,
        y: &Array1<f64>,
        hyper: &GpHyperparameters,
        ladder: JitterLadder,
    ) -> Result<Self, GpError> {
        let n = inputs.nrows();
        let kmat = hyper.kernel().matrix(inputs.view());
        let mut a = kmat.clone();
        for i in 0..n {
            a[[i, i]] += hyper.noise_variance;
        }
        let factor = cholesky_with_jitter(&a, ladder)?;
        let e = y - hyper.constant_mean;
        let w = solve_lower(&factor.lower, &e);
        let alpha = solve_lower_transpose(&factor.lower, &w);
        let datafit = w.dot(&w);
        let logdet = log_det_from_cholesky(&factor.lower);
        let lml = -0.5 * (datafit + logdet + n as f64 * LN_2PI);
        Ok(LikelihoodState { factor, alpha, kmat, lml })
    }

    // Gradient of the (unpenalized) log-marginal likelihood; same coordinate
    // order as `penalized_log_marginal_with_grad`.
    fn lml_gradient(&self, inputs: &Array2<f64>, hyper: &GpHyperparameters) -> Vec<f64> {
        let n = inputs.nrows();
        let d = hyper.lengthscales.len();
        let a_inv = spd_inverse_from_factor(&self.factor);
        let alpha = &self.alpha;

        // ∂/∂ln σ_f²: 0.5 Σ_ij W_ij K_ij with W = ααᵀ − A⁻¹.
        let k_alpha = self.kmat.dot(alpha);
        let quad_k = alpha.dot(&k_alpha);
        let trace_k: f64 = self.kmat.iter().zip(a_inv.iter()).map(|(k, ai)| k * ai).sum();
        let g_sv = 0.5 * (quad_k - trace_k);

        // ∂/∂ln σ_n²: 0.5 σ_n² (αᵀα − tr A⁻¹).
        let tr_ainv: f64 = a_inv.diag().sum();
        let g_nv = 0.5 * hyper.noise_variance * (alpha.dot(alpha) - tr_ainv);

        // ∂/∂μ: Σ α.
        let g_mu = alpha.sum();

        // Lengthscales: Σ_{i<j} W_ij G_ij (x_ik − x_jk)²/ℓ_k².
        let (_, gfac) = hyper.kernel().matrix_with_grad_factor(inputs.view());
        let inv_ls2: Vec<f64> = hyper.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        let mut g_ls = vec![0.0; d];
        for i in 0..n {
            let xi = inputs.row(i);
            for j in 0..i {
                let w = alpha[i] * alpha[j] - a_inv[[i, j]];
                let wg = w * gfac[[i, j]];
                let xj = inputs.row(j);
                for k in 0..d {
                    let delta = xi[k] - xj[k];
                    g_ls[k] += wg * delta * delta * inv_ls2[k];
                }
            }
        }

        let mut grad = g_ls;
        grad.push(g_sv);
        grad.push(g_nv);
        grad.push(g_mu);
        grad
    }
}

fn gram_state(
    inputs: &Array2<f64>,
    y: &Array1<f64>,
    hyper: &GpHyperparameters,
    ladder: JitterLadder,
) -> Result<(CholeskyFactor, Array1<f64>), GpError> {
    let state = LikelihoodState::compute(inputs, y, hyper, ladder)?;
    Ok((state.factor, state.alpha))
}

// Log-space parameterization: u = [ln ℓ…, ln σ_f², ln σ_n², μ].
struct ParamSpace {
    dim: usize,
    bounds: BoxBounds,
    ls_default: f64,
    sv_default: f64,
    nv_default: f64,
}

impl ParamSpace {
    fn new(dim: usize, config: &GpFitConfig) -> Self {
        let mut lo = vec![config.lengthscale_bounds.0.ln(); dim];
        let mut hi = vec![config.lengthscale_bounds.1.ln(); dim];
        lo.push(config.signal_variance_bounds.0.ln());
        hi.push(config.signal_variance_bounds.1.ln());
        lo.push(config.noise_variance_bounds.0.ln());
        hi.push(config.noise_variance_bounds.1.ln());
        lo.push(config.constant_mean_bounds.0);
        hi.push(config.constant_mean_bounds.1);
        let clamp = |v: f64, b: (f64, f64)| v.clamp(b.0, b.1);
        ParamSpace {
            dim,
            bounds: BoxBounds::new(lo, hi),
            ls_default: clamp(0.25 * (dim as f64).sqrt(), config.lengthscale_bounds),
            sv_default: clamp(1.0, config.signal_variance_bounds),
            nv_default: clamp(0.005, config.noise_variance_bounds),
        }
    }

    fn default_hyper(&self, dim: usize) -> GpHyperparameters {
        GpHyperparameters {
            lengthscales: vec![self.ls_default; dim],
            signal_variance: self.sv_default,
            noise_variance: self.nv_default,
            constant_mean: 0.0,
        }
    }

    fn encode(&self, h: &GpHyperparameters) -> Vec<f64> {
        let mut u: Vec<f64> = h.lengthscales.iter().map(|l| l.ln()).collect();
        u.push(h.signal_variance.ln());
        u.push(h.noise_variance.ln());
        u.push(h.constant_mean);
        let mut u = u;
        self.bounds.clamp(&mut u);
        u
    }

    fn decode(&self, u: &[f64]) -> GpHyperparameters {
        GpHyperparameters {
            lengthscales: u[..self.dim].iter().map(|v| v.exp()).collect(),
            signal_variance: u[self.dim].exp(),
            noise_variance: u[self.dim + 1].exp(),
            constant_mean: u[self.dim + 2],
        }
    }

    fn perturb(&self, u: &[f64], rng: &mut impl Rng) -> Vec<f64> {
        let mut out = u.to_vec();
        let last = out.len() - 1;
        for (i, v) in out.iter_mut().enumerate() {
            let sigma = if i == last { 0.25 } else { 0.5 };
            *v += sigma * rng.sample::<f64, _>(StandardNormal);
        }
        self.bounds.clamp(&mut out);
        out
    }
}

// Reuse the factorization between a value-only evaluation and a gradient
// request at the same point (the accepted line-search trial).
#[derive(Default)]
struct EvalCache {
    u: Vec<f64>,
    state: Option<LikelihoodState>,
}

#[allow(clippy::too_many_arguments)]
fn nll_eval(
    inputs: &Array2<f64>,
    y: &Array1<f64>,
    space: &ParamSpace,
    u: &[f64],
    config: &GpFitConfig,
    need_grad: bool,
    cache: &mut EvalCache,
) -> (f64, Option<Vec<f64>>) {
    let hyper = space.decode(u);
    let cached = cache.state.is_some() && cache.u == u;
    let state = if cached {
        cache.state.take().unwrap()
    } else {
        match LikelihoodState::compute(inputs, y, &hyper, config.jitter) {
            Ok(s) => s,
            Err(_) => return (f64::INFINITY, need_grad.then(|| vec![0.0; u.len()])),
        }
    };
    let value = -(state.lml + horseshoe_log_prior(hyper.noise_variance, config.horseshoe_scale));
    let grad = need_grad.then(|| {
        let d = hyper.lengthscales.len();
        let mut g = state.lml_gradient(inputs, &hyper);
        g[d + 1] += horseshoe_log_prior_grad_ln(hyper.noise_variance, config.horseshoe_scale);
        g.iter_mut().for_each(|v| *v = -*v);
        g
    });
    cache.u = u.to_vec();
    cache.state = Some(state);
    (value, grad)
}
