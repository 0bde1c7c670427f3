//! The equivalence relation over designs: embeddings, relation variants,
//! class occupancies and coarse-grained entropy.

pub mod embed;
pub mod partition;

pub use embed::{EmbeddingProvider, EmbeddingSpec};
pub use partition::{coarse_entropy, fit_partition, occupancies, AssignContext, Partition, PartitionSpec};
