use std::sync::Arc;

use dcf_core::balance::smote_balance;
use dcf_core::cascade::{
    encode_model, final_decision, load_model, save_model, train_cascade, CascadeModel, StopReason, LEVEL_PROBS,
};
use dcf_core::config::CascadeConfig;
use dcf_core::convnet::extract_features_pooled;
use dcf_core::corpus::{split_dataset, tokenize, DatasetSplit, RawMessage, SplitRatios, TokenizedMessage};
use dcf_core::embedding::{build_word_matrix, EmbeddingTable};
use dcf_core::forest::{cross_fit_proba, ForestParams};
use dcf_core::metrics::EvalReport;
use dcf_core::synthetic::{self, SyntheticSpec};
use dcf_core::{seed, Label};

fn small_config() -> CascadeConfig {
    CascadeConfig {
        filters: 12,
        kernel: 2,
        n_trees: 15,
        max_levels: 3,
        ..CascadeConfig::default()
    }
}

fn data(spec: &SyntheticSpec, config: &CascadeConfig) -> (DatasetSplit<TokenizedMessage>, EmbeddingTable<f64>) {
    let raw = synthetic::messages(spec);
    let split = split_dataset(&raw, &SplitRatios::default(), config.seed).unwrap();
    let split = split.map(|m| tokenize(m, &config.preprocess));
    (split, synthetic::table(spec))
}

fn test_report(model: &CascadeModel<f64>, split: &DatasetSplit<TokenizedMessage>, table: &EmbeddingTable<f64>) -> EvalReport<f64> {
    let preds = model.predict_batch(&split.test, table).unwrap();
    let truth: Vec<Label> = split.test.iter().map(|m| m.label).collect();
    let labels: Vec<Label> = preds.iter().map(|p| p.0).collect();
    let scores: Vec<f64> = preds.iter().map(|p| p.1).collect();
    EvalReport::from_predictions(&truth, &labels, &scores).unwrap()
}

#[test]
fn trains_and_classifies_synthetic_corpus() {
    let config = small_config();
    let (split, table) = data(&SyntheticSpec::default(), &config);
    let (model, report) = train_cascade(&split, &table, &config).unwrap();

    assert!(report.level_count() >= 1 && report.level_count() <= config.max_levels);
    assert_eq!(model.level_count(), report.level_count());
    for w in report.levels.windows(2) {
        assert!(w[1].accuracy - w[0].accuracy > config.epsilon);
    }
    for l in &report.levels {
        assert!((0.0..=1.0).contains(&l.accuracy));
        assert!(l.log_loss >= 0.0);
    }

    for level in &model.levels {
        let width = if level.index == 1 { config.filters } else { config.filters + LEVEL_PROBS };
        assert!(level.forests.iter().all(|f| f.feature_count() == width));
    }

    let eval = test_report(&model, &split, &table);
    assert!(eval.accuracy >= 0.85, "test accuracy {}", eval.accuracy);
    assert!(eval.auc >= 0.85, "auc {}", eval.auc);
}

#[test]
fn impossible_gain_keeps_one_level() {
    let config = CascadeConfig {
        epsilon: 1.0,
        ..small_config()
    };
    let (split, table) = data(&SyntheticSpec::default(), &config);
    let (model, report) = train_cascade(&split, &table, &config).unwrap();
    assert_eq!(model.level_count(), 1);
    assert_eq!(model.stop_reason, StopReason::NoImprovement);
    assert!(report.rejected.is_some());
}

#[test]
fn level_cap_is_respected() {
    let config = CascadeConfig {
        max_levels: 1,
        ..small_config()
    };
    let (split, table) = data(&SyntheticSpec::default(), &config);
    let (model, report) = train_cascade(&split, &table, &config).unwrap();
    assert_eq!(model.level_count(), 1);
    assert_eq!(report.stop_reason, StopReason::MaxLevels);
    assert!(report.rejected.is_none());
}

#[test]
fn single_level_is_the_four_forest_average() {
    let config = CascadeConfig {
        max_levels: 1,
        ..small_config()
    };
    let (split, table) = data(&SyntheticSpec::default(), &config);
    let (model, _) = train_cascade(&split, &table, &config).unwrap();
    let level = &model.levels[0];

    // Rebuild the level from its recorded seeds.
    let features: Vec<Vec<f64>> = split
        .train
        .iter()
        .map(|m| {
            let wm = build_word_matrix(&m.tokens, &table, config.kernel);
            extract_features_pooled(&wm, &level.bank, config.pooling).unwrap().0
        })
        .collect();
    let y: Vec<Label> = split.train.iter().map(|m| m.label).collect();
    let balanced = smote_balance(&features, &y, config.smote_k, seed::derive(config.seed, seed::STREAM_SMOTE)).unwrap();
    let params = ForestParams {
        n_trees: config.n_trees,
        extra_rule: config.extra_rule,
    };
    let forests: Vec<_> = level
        .forests
        .iter()
        .zip(config.forests)
        .map(|(f, kind)| cross_fit_proba(&balanced.x, &balanced.y, kind, &params, config.folds, f.seed()).unwrap().forest)
        .collect();
    assert_eq!(&forests, &level.forests);

    for m in split.test.iter().take(40) {
        let wm = build_word_matrix(&m.tokens, &table, config.kernel);
        let x = extract_features_pooled(&wm, &level.bank, config.pooling).unwrap().0;
        let probs: Vec<_> = forests.iter().map(|f| f.predict_proba(&x).unwrap()).collect();
        let h: f64 = probs.iter().map(|p| p.p_ham).sum::<f64>() / 4.0;
        let s: f64 = probs.iter().map(|p| p.p_spam).sum::<f64>() / 4.0;
        let want = (if h > s { Label::Ham } else { Label::Spam }, s);
        assert_eq!(model.predict_tokens(&m.tokens, &table).unwrap(), want);
    }
}

#[test]
fn same_seed_same_bytes_and_round_trip() {
    let config = small_config();
    let (split, table) = data(&SyntheticSpec::default(), &config);
    let (a, _) = train_cascade(&split, &table, &config).unwrap();
    let (b, _) = train_cascade(&split, &table, &config).unwrap();
    assert_eq!(encode_model(&a).unwrap(), encode_model(&b).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.dcf");
    save_model(&a, &path).unwrap();
    let loaded: CascadeModel<f64> = load_model(&path).unwrap();
    let probes = synthetic::messages(&SyntheticSpec {
        messages: 100,
        seed: 1234,
        ..SyntheticSpec::default()
    });
    for p in &probes {
        assert_eq!(
            a.predict_text(&p.text, &table).unwrap(),
            loaded.predict_text(&p.text, &table).unwrap()
        );
    }
}

#[test]
fn different_seeds_give_different_models() {
    let config = small_config();
    let (split, table) = data(&SyntheticSpec::default(), &config);
    let (a, _) = train_cascade(&split, &table, &config).unwrap();
    let other = CascadeConfig { seed: 43, ..config };
    let (b, _) = train_cascade(&split, &table, &other).unwrap();
    assert_ne!(encode_model(&a).unwrap(), encode_model(&b).unwrap());
}

#[test]
fn single_precision_pipeline_works() {
    let spec = SyntheticSpec::default();
    let config = small_config();
    let raw = synthetic::messages(&spec);
    let split = split_dataset(&raw, &SplitRatios::default(), config.seed)
        .unwrap()
        .map(|m| tokenize(m, &config.preprocess));
    let mut table = EmbeddingTable::<f32>::new(spec.dim).unwrap();
    for (w, v) in synthetic::embeddings(&spec) {
        table.insert(w, v.into_iter().map(|x| x as f32).collect()).unwrap();
    }
    let (model, _) = train_cascade(&split, &table, &config).unwrap();
    let correct = split
        .test
        .iter()
        .filter(|m| model.predict_tokens(&m.tokens, &table).unwrap().0 == m.label)
        .count();
    assert!(correct as f64 / split.test.len() as f64 >= 0.85);
}

#[test]
fn concurrent_prediction_matches_sequential() {
    let config = CascadeConfig {
        max_levels: 2,
        ..small_config()
    };
    let (split, table) = data(&SyntheticSpec::default(), &config);
    let (model, _) = train_cascade(&split, &table, &config).unwrap();
    let model = Arc::new(model);
    let sequential: Vec<_> = split
        .test
        .iter()
        .map(|m| model.predict_tokens(&m.tokens, &table).unwrap())
        .collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let model = Arc::clone(&model);
                let (split, table) = (&split, &table);
                s.spawn(move || {
                    split
                        .test
                        .iter()
                        .map(|m| model.predict_tokens(&m.tokens, table).unwrap())
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            assert_eq!(h.join().unwrap(), sequential);
        }
    });
}

#[test]
fn degenerate_messages_still_predict() {
    let config = CascadeConfig {
        max_levels: 1,
        ..small_config()
    };
    let (split, table) = data(&SyntheticSpec::default(), &config);
    let (model, _) = train_cascade(&split, &table, &config).unwrap();
    for text in ["", "the and of", "zzzz qqqq", "12345"] {
        let (_, p) = model.predict_text(text, &table).unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
}

#[test]
fn rejects_unusable_training_data() {
    let config = small_config();
    let table = synthetic::table(&SyntheticSpec::default());
    let ham: Vec<TokenizedMessage> = (0..20)
        .map(|i| {
            tokenize(
                &RawMessage {
                    label: Label::Ham,
                    text: synthetic::ham_word(i),
                },
                &config.preprocess,
            )
        })
        .collect();
    let split = DatasetSplit {
        train: ham.clone(),
        validation: ham.clone(),
        test: ham.clone(),
        seed: 0,
    };
    assert!(train_cascade(&split, &table, &config).is_err());
    let split = DatasetSplit {
        train: ham.clone(),
        validation: Vec::new(),
        test: ham,
        seed: 0,
    };
    assert!(train_cascade(&split, &table, &config).is_err());
}

#[test]
fn final_rule_tie_goes_to_spam() {
    assert_eq!(final_decision(&[0.5_f64; 8]).0, Label::Spam);
}
