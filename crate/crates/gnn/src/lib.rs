//! Relational graph encoders over batches of observation graphs: R-GCN,
//! GAT and R-GAT layers, and a max-pool readout to a fixed-size vector.

mod batch;
mod encoder;
mod error;
pub mod layers;

pub use batch::{EdgeIndex, GraphBatch, GraphBatchBuilder};
pub use encoder::{
    encode_batch, encode_observation, max_pool, observation_graph, Encoder, EncoderConfig, EntitySource,
};
pub use error::{GnnError, Result};
pub use layers::{Activation, GatLayer, GraphLayer, LayerRegistry, LayerSpec, RgatLayer, RgcnLayer};
