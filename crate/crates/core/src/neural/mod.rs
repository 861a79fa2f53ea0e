//! Gradient-trained forecasters: feed-forward and KAN networks, recurrent
//! and convolutional models, and attention-based encoders.

mod layers;
mod network;
mod spec;
mod train;

pub use layers::{
    kan_edge_eval, max_pool2, patch_count, scaled_dot_attention, sinusoidal_positions, stack_steps, AttentionMode,
    CellKind, CellState, Conv1d, DecoderLayer, Dense, EncoderLayer, FeedForward, KanEdge, KanGrid, KanLayer,
    LayerNorm, MultiHeadAttention, Pass, PatchEmbed, RecurrentCell, KAN_INTERVALS,
};
pub use network::{build_model, InputShape, Network};
pub use spec::{Architecture, AttentionConfig, ModelSpec, RecurrentLayout};
pub use train::{horizon_columns, train_arrays, train_model, EpochRecord, TrainConfig, TrainingReport};
