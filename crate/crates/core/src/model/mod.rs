//! The credibility network: biLSTM article encoder, claim-specific
//! attention, fused dense layers with source embeddings, and the
//! per-claim aggregation of article scores.

mod forward;
pub mod init;
mod params;

pub use forward::{
    aggregate, aggregate_vectors, article_graph, article_vector, article_vector_graph, attend,
    attention_graph, bilstm_encode, bilstm_graph, class_distribution, forward_article,
    score_article, score_graph, ArticleGraph, ArticleInput, Attention, Dropout, ForwardTrace,
    ModelTape, ParamVars, Verdict, CREDIBLE_THRESHOLD,
};
pub use params::{
    Direction, Gate, Head, Hyperparams, LstmParams, ModelParams, ParamKey, FORGET_BIAS,
};
