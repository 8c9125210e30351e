//! Runs a freshly initialized tiny encoder over two windows and compares
//! the pooled representations each strategy produces.

use candle_core::{DType, Device};
use erc_context::corpus::{Dialogue, Split, Utterance};
use erc_context::encoder::{
    encode_batch, pool, EncoderConfig, ParamStore, PoolingStrategy, TokenizerContract, TransformerEncoder, WordTokenizer,
};
use erc_context::windowing::{assemble, build_window, AssembleOptions};

fn main() -> erc_context::Result<()> {
    let texts = ["i passed my exam", "congratulations that is great", "thanks i am relieved"];
    let dialogue = Dialogue {
        dialogue_id: "pool".into(),
        split: Split::Test,
        turns: texts.iter().map(|t| Utterance::new("A", t, Some(0))).collect(),
    };
    let tok = WordTokenizer::fit(texts);
    let config = EncoderConfig::tiny(tok.vocab_size());
    let mut store = ParamStore::new(Device::Cpu, DType::F32);
    let encoder = TransformerEncoder::init(config, &mut store, 42)?;

    let inputs = [0, 2]
        .iter()
        .map(|&c| assemble(&build_window(&dialogue, 2, c)?, &tok, AssembleOptions::with_max_len(64)))
        .collect::<erc_context::Result<Vec<_>>>()?;
    let outputs = encode_batch(&inputs, &encoder, tok.pad_token_id())?;

    let strategies = [
        PoolingStrategy::ClsLast,
        PoolingStrategy::Mean,
        PoolingStrategy::Max,
        PoolingStrategy::ConcatClsLastK(2),
        PoolingStrategy::ClsPlusMean,
    ];
    for s in strategies {
        let a = pool(&outputs[0], &outputs[0].mask, s)?;
        let b = pool(&outputs[1], &outputs[1].mask, s)?;
        let dot: f64 = a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).sum();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cos = dot / (norm(&a.vector) * norm(&b.vector));
        println!(
            "{:<20} dim {:>3}  1 - cos(c=0, c=2) {:.2e}  first {:+.4?}",
            s.to_string(),
            a.len(),
            1.0 - cos,
            &a.vector[..3]
        );
    }
    Ok(())
}
