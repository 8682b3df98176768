//! Comparison methods: RUV purification, plain k-means and confound-label
//! propagation for partially labeled data.

mod kmeans;
mod propagate;
mod ruv;

pub use kmeans::{kmeans, KMeansFit, KMeansOptions};
pub use propagate::{propagate_confound_labels, Propagation, PropagationOptions};
pub use ruv::{estimate_confound_effect, ruv_purify, ConfoundEffect};
