//! Fréchet distance between Gaussian fits of feature distributions, with a
//! pluggable feature extractor.

mod extractor;
mod features;
mod stats;

pub use extractor::{
    train_classifier_extractor, ClassifierConfig, FeatureExtractor, FidReference, NetworkFeatures, PixelFeatures,
};
pub(crate) use features::ByteCursor;
pub use features::{extract_features, FeatureMatrix};
pub use stats::{fid_between, frechet_distance, gaussian_stats, sqrtm_psd, GaussianStats};
