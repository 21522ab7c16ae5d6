use super::*;
use crate::special::norm_cdf;
use approx::{assert_abs_diff_eq, assert_relative_eq};
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn hyper(ls: Vec<f64>, sv: f64, nv: f64, mu: f64) -> GpHyperparameters {
    GpHyperparameters {
        lengthscales: ls,
        signal_variance: sv,
        noise_variance: nv,
        constant_mean: mu,
    }
}

fn smooth_1d(n: usize) -> (Array2<f64>, Vec<f64>) {
    let inputs = Array2::from_shape_fn((n, 1), |(i, _)| i as f64 / (n - 1) as f64);
    let targets = (0..n)
        .map(|i| {
            let x = inputs[[i, 0]];
            (2.5 * x).sin() + 0.3 * x
        })
        .collect();
    (inputs, targets)
}

// Independent check of the predictive equations: plain Gaussian elimination,
// no Cholesky, built from scratch on the public kernel.
mod dense_oracle {
    use super::*;

    fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in (col + 1)..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let mut s = b[row];
            for k in (row + 1)..n {
                s -= a[row][k] * x[k];
            }
            x[row] = s / a[row][row];
        }
        x
    }

    /// μ(q) = m + k_qᵀ A⁻¹ (y − m),  σ²(q) = k(q,q) − k_qᵀ A⁻¹ k_q,
    /// with A = K + (σ_n² + jitter) I, evaluated entrywise.
    pub fn posterior(gp: &TrainedGp, queries: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
        let h = gp.hyperparameters();
        let x = gp.train_inputs();
        let y = gp.train_targets();
        let n = x.nrows();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] =
                    kernel_matern52_ard(x.row(i).as_slice().unwrap(), x.row(j).as_slice().unwrap(), h)
                        .unwrap();
            }
            a[i][i] += h.noise_variance + gp.jitter();
        }
        let e: Vec<f64> = y.iter().map(|v| v - h.constant_mean).collect();
        let alpha = gauss_solve(a.clone(), e);
        let mut means = Vec::new();
        let mut vars = Vec::new();
        for q in queries.rows() {
            let kq: Vec<f64> = (0..n)
                .map(|i| {
                    kernel_matern52_ard(x.row(i).as_slice().unwrap(), q.as_slice().unwrap(), h)
                        .unwrap()
                })
                .collect();
            let mean =
                h.constant_mean + kq.iter().zip(&alpha).map(|(k, a)| k * a).sum::<f64>();
            let w = gauss_solve(a.clone(), kq.clone());
            let var = h.signal_variance - kq.iter().zip(&w).map(|(k, wi)| k * wi).sum::<f64>();
            means.push(mean);
            vars.push(var);
        }
        (means, vars)
    }
}

#[test]
fn kernel_op_rejects_dimension_mismatch() {
    let h = hyper(vec![0.5, 0.5], 1.0, 0.01, 0.0);
    assert!(matches!(
        kernel_matern52_ard(&[0.1], &[0.2, 0.3], &h),
        Err(GpError::InvalidArgument(_))
    ));
    assert_eq!(kernel_matern52_ard(&[0.1, 0.2], &[0.1, 0.2], &h).unwrap(), 1.0);
}

#[test]
fn fit_rejects_non_finite_targets() {
    let inputs = array![[0.1], [0.9]];
    let mut rng = ChaCha12Rng::seed_from_u64(0);
    assert!(matches!(
        TrainedGp::fit(&inputs, &[1.0, f64::NAN], &GpFitConfig::default(), &mut rng),
        Err(GpError::InvalidArgument(_))
    ));
}

#[test]
fn single_point_fit_interpolates_with_noise_at_floor() {
    let inputs = array![[0.4, 0.6]];
    let config = GpFitConfig::default();
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let gp = TrainedGp::fit(&inputs, &[7.25], &config, &mut rng).unwrap();
    let p = gp.posterior(inputs.view());
    assert_abs_diff_eq!(gp.destandardize_mean(p.mean[0]), 7.25, epsilon = 1e-6);
    assert!(gp.hyperparameters().noise_variance <= 2.0 * config.noise_variance_bounds.0);
}

#[test]
fn constant_targets_revert_to_constant_everywhere() {
    let inputs = array![[0.1], [0.35], [0.6], [0.85]];
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let gp = TrainedGp::fit(&inputs, &[3.5; 4], &GpFitConfig::default(), &mut rng).unwrap();
    let queries = array![[0.0], [0.22], [0.5], [0.97]];
    let p = gp.posterior(queries.view());
    for m in p.mean.iter() {
        assert_abs_diff_eq!(gp.destandardize_mean(*m), 3.5, epsilon = 1e-6);
    }
}

#[test]
fn penalized_likelihood_gradient_matches_finite_differences() {
    let (inputs, targets) = smooth_1d(20);
    let (y_std, _, _) = standardize(&targets);
    let y = Array1::from(y_std);
    let config = GpFitConfig::default();
    let mut rng = ChaCha12Rng::seed_from_u64(3);

    for case in 0..5 {
        let h = hyper(
            vec![(rng.random::<f64>() * (1.5f64 / 0.1).ln() + 0.1f64.ln()).exp()],
            (rng.random::<f64>() * (5.0f64 / 0.2).ln() + 0.2f64.ln()).exp(),
            (rng.random::<f64>() * (0.1f64 / 1e-3).ln() + 1e-3f64.ln()).exp(),
            rng.random::<f64>() - 0.5,
        );
        let (_, grad) = penalized_log_marginal_with_grad(&inputs, &y, &h, &config).unwrap();

        // Central differences in the same log-space coordinates.
        let step = 1e-5f64;
        let eval = |h: &GpHyperparameters| penalized_log_marginal(&inputs, &y, h, &config).unwrap();
        let mut fd = Vec::new();
        for i in 0..grad.len() {
            let mut up = h.clone();
            let mut dn = h.clone();
            match i {
                0 => {
                    up.lengthscales[0] *= step.exp();
                    dn.lengthscales[0] *= (-step).exp();
                }
                1 => {
                    up.signal_variance *= step.exp();
                    dn.signal_variance *= (-step).exp();
                }
                2 => {
                    up.noise_variance *= step.exp();
                    dn.noise_variance *= (-step).exp();
                }
                _ => {
                    up.constant_mean += step;
                    dn.constant_mean -= step;
                }
            }
            fd.push((eval(&up) - eval(&dn)) / (2.0 * step));
        }
        for (i, (a, f)) in grad.iter().zip(&fd).enumerate() {
            let denom = a.abs().max(f.abs()).max(1e-3);
            assert!(
                (a - f).abs() / denom < 1e-4,
                "case {case} component {i}: analytic {a} vs fd {f}"
            );
        }
    }
}

#[test]
fn posterior_matches_dense_oracle() {
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    let inputs = Array2::from_shape_fn((3, 2), |_| rng.random::<f64>());
    let targets: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
    let gp = TrainedGp::from_hyperparameters(
        &inputs,
        &targets,
        hyper(vec![0.4, 0.8], 1.5, 0.01, 0.1),
        JitterLadder::default(),
    )
    .unwrap();
    let queries = Array2::from_shape_fn((2, 2), |_| rng.random::<f64>());
    let p = gp.posterior(queries.view());
    let (om, ov) = dense_oracle::posterior(&gp, &queries);
    for i in 0..2 {
        assert_abs_diff_eq!(p.mean[i], om[i], epsilon = 1e-10);
        assert_abs_diff_eq!(p.variance[i], ov[i], epsilon = 1e-10);
    }
}

#[test]
fn far_query_reverts_to_prior() {
    let inputs = array![[0.2], [0.25], [0.3], [0.4]];
    let h = hyper(vec![0.05], 1.7, 0.05, 0.3);
    let gp = TrainedGp::from_hyperparameters(
        &inputs,
        &[0.6, -0.3, 0.2, -0.5],
        h.clone(),
        JitterLadder::default(),
    )
    .unwrap();
    let p = gp.posterior_predictive(array![[0.99]].view());
    assert_abs_diff_eq!(p.mean[0], h.constant_mean, epsilon = 1e-3);
    let want = h.signal_variance + h.noise_variance;
    assert!((p.variance[0] - want).abs() / want < 0.01);
}

#[test]
fn sampling_matches_posterior_moments() {
    let (inputs, targets) = smooth_1d(8);
    let gp = TrainedGp::from_hyperparameters(
        &inputs,
        &targets,
        hyper(vec![0.3], 1.0, 0.01, 0.0),
        JitterLadder::default(),
    )
    .unwrap();
    let queries = array![[0.05], [0.33], [0.52], [0.77], [0.95]];
    let p = gp.posterior(queries.view());
    let count = 10_000;
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let draws = gp.sample_joint(queries.view(), count, &mut rng).unwrap();
    for j in 0..5 {
        let col = draws.column(j);
        let emp_mean = col.sum() / count as f64;
        let emp_var =
            col.iter().map(|v| (v - emp_mean).powi(2)).sum::<f64>() / (count as f64 - 1.0);
        let se = (p.variance[j] / count as f64).sqrt();
        assert!(
            (emp_mean - p.mean[j]).abs() <= 3.0 * se,
            "query {j}: empirical mean {emp_mean} vs posterior {} (se {se})",
            p.mean[j]
        );
        assert!(
            (emp_var - p.variance[j]).abs() / p.variance[j] < 0.05,
            "query {j}: empirical var {emp_var} vs posterior {}",
            p.variance[j]
        );
    }
}

#[test]
fn single_query_draws_pass_kolmogorov_smirnov() {
    let (inputs, targets) = smooth_1d(8);
    let gp = TrainedGp::from_hyperparameters(
        &inputs,
        &targets,
        hyper(vec![0.3], 1.0, 0.02, 0.0),
        JitterLadder::default(),
    )
    .unwrap();
    let query = array![[0.42]];
    let p = gp.posterior(query.view());
    let count = 10_000;
    let mut rng = ChaCha12Rng::seed_from_u64(6);
    let draws = gp.sample_joint(query.view(), count, &mut rng).unwrap();
    let mut z: Vec<f64> =
        draws.column(0).iter().map(|v| (v - p.mean[0]) / p.variance[0].sqrt()).collect();
    z.sort_by(|a, b| a.total_cmp(b));
    let n = count as f64;
    let mut d = 0.0f64;
    for (i, zi) in z.iter().enumerate() {
        let cdf = norm_cdf(*zi);
        d = d.max(((i + 1) as f64 / n - cdf).abs()).max((cdf - i as f64 / n).abs());
    }
    // Asymptotic critical value at α = 0.01: 1.6276 / √n.
    assert!(d < 1.6276 / n.sqrt(), "KS statistic {d}");
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let (inputs, targets) = smooth_1d(6);
    let gp = TrainedGp::from_hyperparameters(
        &inputs,
        &targets,
        hyper(vec![0.25], 1.0, 0.01, 0.0),
        JitterLadder::default(),
    )
    .unwrap();
    let queries = array![[0.1], [0.6], [0.9]];
    let a = gp
        .sample_joint(queries.view(), 4, &mut ChaCha12Rng::seed_from_u64(9))
        .unwrap();
    let b = gp
        .sample_joint(queries.view(), 4, &mut ChaCha12Rng::seed_from_u64(9))
        .unwrap();
    assert_eq!(a, b);
}

#[test]
fn f32_sampler_tracks_f64_moments() {
    let (inputs, targets) = smooth_1d(10);
    let gp = TrainedGp::from_hyperparameters(
        &inputs,
        &targets,
        hyper(vec![0.3], 1.0, 0.01, 0.0),
        JitterLadder::default(),
    )
    .unwrap();
    let queries = Array2::from_shape_fn((50, 1), |(i, _)| i as f64 / 49.0);
    let p = gp.posterior(queries.view());
    let sampler = gp.joint_sampler(queries.view(), SamplePrecision::F32).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(10);
    let count = 4000;
    let mut sums = vec![0.0; 50];
    let mut sq = vec![0.0; 50];
    for _ in 0..count {
        let d = sampler.draw(&mut rng);
        for j in 0..50 {
            sums[j] += d[j];
            sq[j] += d[j] * d[j];
        }
    }
    for j in 0..50 {
        let mean = sums[j] / count as f64;
        let var = sq[j] / count as f64 - mean * mean;
        assert!((mean - p.mean[j]).abs() < 4.0 * (p.variance[j] / count as f64).sqrt() + 1e-3);
        assert!((var - p.variance[j]).abs() < 0.15 * p.variance[j] + 2e-3);
    }
}

#[test]
fn destandardized_means_shift_with_targets() {
    let (inputs, targets) = smooth_1d(12);
    let shifted: Vec<f64> = targets.iter().map(|t| t + 100.0).collect();
    let config = GpFitConfig::default();
    let gp_a =
        TrainedGp::fit(&inputs, &targets, &config, &mut ChaCha12Rng::seed_from_u64(11)).unwrap();
    let gp_b =
        TrainedGp::fit(&inputs, &shifted, &config, &mut ChaCha12Rng::seed_from_u64(11)).unwrap();
    let queries = array![[0.17], [0.44], [0.83]];
    let pa = gp_a.posterior(queries.view());
    let pb = gp_b.posterior(queries.view());
    for i in 0..3 {
        let a = gp_a.destandardize_mean(pa.mean[i]);
        let b = gp_b.destandardize_mean(pb.mean[i]);
        assert_abs_diff_eq!(b - a, 100.0, epsilon = 1e-8);
    }
}

#[test]
fn kernel_matrix_stays_factorizable_at_scale() {
    let mut rng = ChaCha12Rng::seed_from_u64(12);
    let n = 500;
    let inputs = Array2::from_shape_fn((n, 5), |_| rng.random::<f64>());
    let h = hyper(vec![0.5; 5], 1.0, 5e-4, 0.0);
    let mut a = h.kernel().matrix(inputs.view());
    for i in 0..n {
        a[[i, i]] += h.noise_variance;
    }
    assert!(cholesky_with_jitter(&a, JitterLadder::default()).is_ok());
}

#[test]
fn standardized_targets_have_unit_sample_variance() {
    let (inputs, targets) = smooth_1d(15);
    let gp = TrainedGp::from_hyperparameters(
        &inputs,
        &targets,
        hyper(vec![0.3], 1.0, 0.01, 0.0),
        JitterLadder::default(),
    )
    .unwrap();
    let y = gp.train_targets();
    let n = y.len() as f64;
    let mean = y.sum() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-12);
    assert_relative_eq!(var, 1.0, max_relative = 1e-12);
}
