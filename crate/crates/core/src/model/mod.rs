//! Transformer encoder-decoder models for sentiment transfer, their training
//! loops, and the checkpoint format.

mod blocks;
mod checkpoint;
mod config;
mod seq2seq;
mod train;
mod transfer;

pub use checkpoint::{
    load_checkpoint, load_seq2seq, save_checkpoint, save_seq2seq, FORMAT_VERSION, MAGIC,
};
pub use config::{ModelConfig, Variant};
pub use seq2seq::Seq2Seq;
pub use train::{
    finetune, pretrain, split_corpus, transfer_corpus, translate_corpus, FinetuneReport,
    PretrainReport, TrainParams,
};
pub use transfer::{DecoderId, InferenceNoise, LatentRepresentation, TransferModel};
