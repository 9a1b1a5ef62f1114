//! Differentiable building blocks with hand-written backward passes, the
//! Adam optimizer, a finite-difference gradient checker and the early
//! stopping training loop.

mod gradcheck;
mod layers;
mod lstm;
mod module;
mod optim;
mod tensor;
mod train;
mod transformer;

pub use gradcheck::{grad_check, GradCheckReport, TensorSet, RELATIVE_FLOOR};
pub use layers::{
    dropout, gelu, gelu_grad, match_combine, match_combine_backward, softmax, softmax_ce, AttnCache, AttnPool,
    Embedding, LayerNorm, LayerNormCache, Linear, LAYER_NORM_EPS,
};
pub use lstm::{BiLstm, BiLstmCache, BiLstmLayer, Lstm, LstmCache};
pub use module::{accumulate, zeros_like, Module};
pub(crate) use module::{prefixed, prefixed_mut};
pub use optim::Adam;
pub use tensor::Tensor;
pub use train::{predict_all, train, ContextualGrid, EpochRecord, RecurrentGrid, TrainConfig, TrainHistory, Trainable};
pub use transformer::{
    AttentionCache, EncoderCache, EncoderLayer, EncoderLayerCache, MultiHeadAttention, TokenSequence,
    TransformerEncoder,
};
