//! Observation transformations applied before GP fitting.
//!
//! The objective goes through a Gaussian copula — empirical quantiles mapped
//! through Φ⁻¹ — which stretches the extremes of the observed range, exactly
//! where minima live. Constraints go through `bilog`, which stretches the
//! region around zero where the sign change decides feasibility and dampens
//! huge magnitudes. Both maps are strictly increasing, so they move values,
//! never locations: the argmin and the feasible set are preserved.

use crate::observations::ObservationSet;
use crate::special::inv_norm_cdf;

/// Sign-preserving log compression: `sgn(y) · ln(1 + |y|)`.
pub fn bilog(y: f64) -> f64 {
    assert!(y.is_finite(), "bilog requires finite input, got {y}");
    y.signum() * y.abs().ln_1p()
}

/// Total constraint violation on the bilog scale: Σ max(bilog(cᵢ), 0).
pub fn bilog_violation(constraints: &[f64]) -> f64 {
    constraints.iter().map(|&c| bilog(c).max(0.0)).sum()
}

/// Plotting-position convention for the empirical CDF.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantileRule {
    /// qᵢ = rankᵢ / (n+1) with average ranks for ties (Weibull positions);
    /// keeps every quantile strictly inside (0, 1).
    Weibull,
}

/// Fitted copula: the sorted raw objective values it was built from.
#[derive(Debug, Clone)]
pub struct CopulaState {
    sorted_raw_values: Vec<f64>,
    quantile_rule: QuantileRule,
}

impl CopulaState {
    pub fn sorted_raw_values(&self) -> &[f64] {
        &self.sorted_raw_values
    }

    pub fn quantile_rule(&self) -> QuantileRule {
        self.quantile_rule
    }
}

/// Map raw values to Gaussian-copula scores Φ⁻¹(qᵢ).
///
/// Tied values share the average of their ranks and therefore the same
/// score. Output order matches input order.
pub fn copula_fit_transform(raw: &[f64]) -> (CopulaState, Vec<f64>) {
    assert!(!raw.is_empty(), "copula needs at least one observation");
    assert!(raw.iter().all(|v| v.is_finite()), "copula requires finite values");
    let n = raw.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]));

    // Average 1-based ranks over runs of ties.
    let mut quantile = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && raw[order[end]] == raw[order[start]] {
            end += 1;
        }
        let avg_rank = (start + 1 + end) as f64 / 2.0; // mean of 1-based ranks start+1..=end
        for &idx in &order[start..end] {
            quantile[idx] = avg_rank / (n as f64 + 1.0);
        }
        start = end;
    }

    let transformed = quantile.iter().map(|&q| inv_norm_cdf(q)).collect();
    let sorted_raw_values = order.iter().map(|&i| raw[i]).collect();
    (CopulaState { sorted_raw_values, quantile_rule: QuantileRule::Weibull }, transformed)
}

/// Whether the copula/bilog maps are applied before fitting (the §4.7-style
/// transform ablation switch).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum TransformToggle {
    On,
    Off,
}

impl TransformToggle {
    pub fn is_on(self) -> bool {
        matches!(self, TransformToggle::On)
    }
}

/// Transformed (not yet standardized) output columns for one dataset.
pub struct TransformedColumns {
    pub objective: Vec<f64>,
    pub constraints: Vec<Vec<f64>>,
    /// Present when the objective went through the copula.
    pub copula: Option<CopulaState>,
}

/// Apply the per-output transformations without standardizing. GP fitting
/// standardizes internally, so this is what the optimizer feeds the models.
pub fn transform_columns(obs: &ObservationSet, toggle: TransformToggle) -> TransformedColumns {
    assert!(!obs.is_empty(), "cannot transform an empty dataset");
    let (copula, objective) = if toggle.is_on() {
        let (state, vals) = copula_fit_transform(obs.objectives());
        (Some(state), vals)
    } else {
        (None, obs.objectives().to_vec())
    };
    let constraints = (0..obs.num_constraints())
        .map(|j| {
            obs.constraints()
                .column(j)
                .iter()
                .map(|&c| if toggle.is_on() { bilog(c) } else { c })
                .collect()
        })
        .collect();
    TransformedColumns { objective, constraints, copula }
}

/// Transform and standardize every output column, as fed to the GPs:
/// column 0 is the objective, columns 1..=m the constraints.
pub fn transform_dataset(obs: &ObservationSet, toggle: TransformToggle) -> Vec<Vec<f64>> {
    let cols = transform_columns(obs, toggle);
    let mut out = Vec::with_capacity(1 + cols.constraints.len());
    out.push(standardize(&cols.objective).0);
    for c in &cols.constraints {
        out.push(standardize(c).0);
    }
    out
}

/// Shift to zero mean and scale to unit sample variance (n−1 denominator).
/// Degenerate columns (n = 1 or zero spread) keep scale 1.
pub fn standardize(values: &[f64]) -> (Vec<f64>, f64, f64) {
    let n = values.len();
    assert!(n >= 1);
    let shift = values.iter().sum::<f64>() / n as f64;
    let scale = if n >= 2 {
        let var = values.iter().map(|v| (v - shift).powi(2)).sum::<f64>() / (n - 1) as f64;
        if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 }
    } else {
        1.0
    };
    (values.iter().map(|v| (v - shift) / scale).collect(), shift, scale)
}
