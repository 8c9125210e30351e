use std::cell::Cell;

use candle_core::DType;
use erc_context::corpus::Split;
use erc_context::encoder::{BackendSpec, PoolingStrategy};
use erc_context::evaluation::macro_f1;
use erc_context::heads::HeadKind;
use erc_context::synthetic::{keyword_context_corpus, separable_corpus};
use erc_context::trainer::{train, CheckpointBundle, ErcModel, LrDecay, TrainConfig, Trainer};

fn fast(c: usize) -> TrainConfig {
    TrainConfig {
        context_turns: c,
        encoder_lr: 1e-3,
        head_lr: 5e-3,
        ..TrainConfig::default()
    }
}

#[test]
fn patience_stops_on_flat_validation() {
    let corpus = separable_corpus(20, 1).unwrap();
    let calls = Cell::new(0);
    let cfg = TrainConfig {
        patience: 3,
        ..fast(0)
    };
    let (bundle, history) = Trainer::new(cfg, BackendSpec::tiny())
        .with_validator(Box::new(|_, _| {
            calls.set(calls.get() + 1);
            Ok(0.5)
        }))
        .run(&corpus)
        .unwrap();
    assert_eq!(history.epochs.len(), 4);
    assert_eq!(calls.get(), 4);
    assert!(history.stopped_early);
    assert_eq!(history.best_epoch, 1);
    assert_eq!(bundle.metrics.epochs_run, 4);
}

#[test]
fn best_epoch_is_restored() {
    let corpus = separable_corpus(20, 1).unwrap();
    let scores = [0.2, 0.9, 0.4, 0.3];
    let mut snapshot = None;
    let (bundle, history) = Trainer::new(
        TrainConfig {
            patience: 2,
            ..fast(0)
        },
        BackendSpec::tiny(),
    )
    .with_validator(Box::new(|m: &ErcModel, epoch| {
        if epoch == 2 {
            snapshot = Some(m.weights()?);
        }
        Ok(scores[epoch - 1])
    }))
    .run(&corpus)
    .unwrap();
    assert_eq!(history.best_epoch, 2);
    assert_eq!(history.epochs.len(), 4);
    let snapshot = snapshot.unwrap();
    for (name, t) in &bundle.weights {
        let diff = (t - &snapshot[name]).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f32>().unwrap();
        assert_eq!(diff, 0.0, "{name}");
    }
}

#[test]
fn separable_corpus_is_learned_without_context() {
    let corpus = separable_corpus(120, 5).unwrap();
    let (bundle, history) = train(&corpus, &fast(0), &BackendSpec::tiny()).unwrap();
    assert!(history.best_val_macro_f1 >= 0.95, "{:?}", history.epochs);
    assert!(history.epochs.len() <= 10);
    // the restored bundle scores exactly what was recorded
    let p = bundle.model().unwrap().evaluate(&corpus, Split::Validation, 0).unwrap();
    let f1 = macro_f1(&p.gold, &p.pred, 4).unwrap();
    assert!((f1 - history.best_val_macro_f1).abs() <= 1e-6);
}

#[test]
fn first_epoch_loss_is_sane() {
    let corpus = keyword_context_corpus(40, 2).unwrap();
    let (_, history) = train(
        &corpus,
        &TrainConfig {
            max_epochs: 1,
            ..TrainConfig::default()
        },
        &BackendSpec::tiny(),
    )
    .unwrap();
    let bound = (4f64).ln() + 1.0;
    assert!(history.epochs[0].train_loss <= bound, "{}", history.epochs[0].train_loss);
}

#[test]
fn saved_bundle_predicts_identically() {
    let corpus = keyword_context_corpus(40, 4).unwrap();
    let cfg = TrainConfig {
        max_epochs: 2,
        ..fast(1)
    };
    let (bundle, _) = train(&corpus, &cfg, &BackendSpec::tiny()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    bundle.save(dir.path()).unwrap();
    let loaded = CheckpointBundle::load(dir.path()).unwrap();
    assert_eq!(loaded.config, cfg);
    let a = bundle.model().unwrap().evaluate(&corpus, Split::Test, 1).unwrap();
    let b = loaded.model().unwrap().evaluate(&corpus, Split::Test, 1).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sequence_heads_train() {
    let corpus = keyword_context_corpus(30, 6).unwrap();
    for kind in [HeadKind::Rnn, HeadKind::Lstm, HeadKind::BiLstm, HeadKind::Crf] {
        let cfg = TrainConfig {
            head: kind,
            max_epochs: 2,
            ..fast(1)
        };
        let (bundle, history) = train(&corpus, &cfg, &BackendSpec::tiny()).unwrap();
        assert!(history.losses().iter().all(|l| l.is_finite()), "{kind}");
        assert!(bundle.weights.keys().any(|k| k.starts_with("head.")), "{kind}");
        let p = bundle.model().unwrap().evaluate(&corpus, Split::Test, 1).unwrap();
        assert_eq!(p.gold.len(), p.pred.len());
    }
}

#[test]
fn pooling_depthwise_and_precision_variants_train() {
    let corpus = keyword_context_corpus(20, 8).unwrap();
    let variants = [
        TrainConfig {
            pooling: PoolingStrategy::Mean,
            ..fast(1)
        },
        TrainConfig {
            pooling: PoolingStrategy::ConcatClsLastK(2),
            lr_decay: LrDecay::DepthWise,
            ..fast(1)
        },
        TrainConfig {
            precision: erc_context::trainer::Precision::F64,
            ..fast(1)
        },
    ];
    for cfg in variants {
        let cfg = TrainConfig { max_epochs: 1, ..cfg };
        let (bundle, _) = train(&corpus, &cfg, &BackendSpec::tiny()).unwrap();
        let dtype = bundle.weights.values().next().unwrap().dtype();
        assert_eq!(dtype == DType::F64, cfg.precision == erc_context::trainer::Precision::F64);
    }
}

#[test]
fn missing_validation_split_is_an_error() {
    let corpus = separable_corpus(20, 1).unwrap().filtered(|d| d.split != Split::Validation);
    assert!(train(&corpus, &fast(0), &BackendSpec::tiny()).is_err());
}
