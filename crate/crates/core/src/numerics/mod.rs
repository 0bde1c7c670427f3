//! Small numeric kernel: dense nets, k-means and scalar statistics.

pub mod kmeans;
pub mod net;
pub mod stats;

pub use kmeans::{elbow_select_k, kmeans_fit, KMeansModel, Metric};
pub use net::{Activation, Adam, DenseNet, Layer, NetGrad};
pub use stats::{regression_slope, shannon_entropy, softmax, wasserstein_1d};
