pub mod cfbase;
pub mod config;
pub mod curate;
pub mod embed;
pub mod error;
pub mod evalkit;
pub mod ids;
pub mod scalar;
pub mod seeds;
pub mod seqmodel;
pub mod synthcat;

pub use config::ExperimentConfig;
pub use error::{Error, Result, Stage};
pub use evalkit::{run_experiment, EvalReport};
pub use ids::{EntityId, NodeId, RelationId, ShowId, TopicId, UserId};
pub use scalar::Scalar;

pub type EmbeddingTableF32 = embed::EmbeddingTable<f32>;
pub type EmbeddingTableF64 = embed::EmbeddingTable<f64>;
pub type NetworkF32 = seqmodel::Network<f32>;
pub type NetworkF64 = seqmodel::Network<f64>;
pub type FactorizationF32 = cfbase::Factorization<f32>;
pub type FactorizationF64 = cfbase::Factorization<f64>;
