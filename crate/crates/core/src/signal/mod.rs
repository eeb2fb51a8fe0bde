//! Trial storage, preprocessing, spectral features, synthetic data, and
//! cross-validation splits.

mod filter;
mod scaler;
mod spectral;
mod split;
mod synthetic;
mod trialset;

pub use filter::{bandpass, butter_bandpass, filtfilt, Sos, BUTTER_ORDER};
pub use scaler::{standard_scale, Scaler};
pub use spectral::{band_label, band_powers, band_powers_from_psd, welch_psd, Welch, BANDS, WELCH_SEGMENT};
pub use split::{holdout_split, stratified_kfold, Fold};
pub use synthetic::{channel_names, class_channels, generate_synthetic, pink_noise, SyntheticConfig, BURST_BAND};
pub use trialset::{
    import_csv, load_trialset, save_trialset, TrialSet, TrialSetManifest, TRIALSET_DATA, TRIALSET_FORMAT,
    TRIALSET_MANIFEST, TRIALSET_VERSION,
};

/// Default passband in Hz.
pub const PASSBAND: (f64, f64) = (8.0, 32.0);

#[cfg(test)]
mod tests;
