//! Distribution functions and evaluation metrics.

mod fdist;
mod metrics;
mod special;

pub use fdist::{f_cdf, f_sf};
pub use metrics::{f1_from_counts, macro_f1, ordinal_auc, roc_auc, MetricName, MetricValue};
pub use special::{beta_reg, ln_beta, ln_gamma};

/// Population (divide-by-N) mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
