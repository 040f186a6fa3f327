//! Attentional recurrent encoder-decoder: parameters, training, beam search,
//! checkpoint averaging and ensembles.

mod archive;
mod config;
mod decode;
mod linalg;
mod model;
mod params;
mod train;
mod vocab;

pub use archive::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{DecodeConfig, ModelConfig, TrainConfig};
pub use decode::{beam_decode, greedy_decode, translate, translate_all, Hypothesis};
pub use model::{forward_loss, forward_trace, Batch, LossOutput, Trace};
pub use params::{init_model, Layout, ModelParams, TensorSpec};
pub use train::{average_checkpoints, continue_training, corpus_perplexity, train, Checkpoint, TrainOutcome};
pub use vocab::{Vocab, BOS, EOS, PAD, SPECIALS};
