//! Representation analyses over pooled encoder activations: band-power
//! reconstruction, kernel/feature correlations, and cross-model RSA.

mod activations;
mod correlation;
mod report;
mod ridge;
mod rsa;
pub mod svg;

pub use activations::{load_activations, save_activations, ActivationSet};
pub use correlation::{kernel_feature_correlations, pearson, CorrelationSummary, KernelCorrelations};
pub use report::{
    analyze_activations, emit_reports, r2_csv, rdm_csv, read_r2_csv, read_rdm_csv, render_reports, AnalysisOptions,
    AnalysisResults, ModelAnalysis,
};
pub use ridge::{cross_validated_r2, reconstruct_band_power, RidgeOptions, MIN_SAMPLES};
pub use rsa::{
    compute_rdm, contrast_permutation_test, rdm_contrast, type_of, Contrast, Distance, PermutationTest, Rdm,
};

#[cfg(test)]
mod tests;
