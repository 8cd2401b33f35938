use std::collections::{BTreeSet, HashSet};

use dialeval::adem::{
    embed_examples, fit_pca_on, predict, project_examples, train_adem, AdemExample, AdemModel,
    PcaProjection, TrainConfig,
};
use dialeval::analytics::{
    context_subset, data_efficiency_sweep, leave_one_out_eval, loo_training_sets, sweep_csv,
};
use dialeval::corpus::{
    build_vocab, learn_bpe, split_by_context, Normalizer, SourceModel, Tokenizer,
};
use dialeval::encoder::{EncoderConfig, HierEncoder, TensorFile};
use dialeval::metrics::score_overlap;
use dialeval::synth::{
    synth_embeddings, synth_text_dataset, EmbeddingSynthConfig, EmbeddingSplits, TextSynthConfig,
};
use dialeval::vhred::{pretrain_vhred, Dialogue, PretrainConfig, VhredConfig};
use dialeval::Execution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_embeddings(seed: u64) -> EmbeddingSplits {
    synth_embeddings(&EmbeddingSynthConfig {
        dim: 8,
        train_examples: 240,
        validation_examples: 80,
        test_examples: 80,
        seed,
        ..EmbeddingSynthConfig::default()
    })
    .unwrap()
}

fn quick() -> TrainConfig {
    TrainConfig {
        max_epochs: 4,
        pca_dim: 8,
        ..TrainConfig::default()
    }
}

#[test]
fn text_pipeline_runs_end_to_end_and_ignores_scheduling() {
    let ds = synth_text_dataset(&TextSynthConfig {
        contexts: 60,
        ..TextSynthConfig::default()
    })
    .unwrap();
    let splits = split_by_context(&ds, [0.6, 0.2, 0.2], 1).unwrap();
    let norm = Normalizer::default();
    let texts: Vec<String> = splits
        .train
        .iter()
        .flat_map(|e| {
            e.context
                .utterances
                .iter()
                .map(|u| u.text.clone())
                .chain([e.model_response.text.clone(), e.reference_response.text.clone()])
        })
        .collect();
    let merges = learn_bpe(&texts, 60).unwrap();
    let vocab = build_vocab(&texts, &merges, 120, norm).unwrap();
    let tok = Tokenizer::new(merges, vocab, norm);
    let annotate = |mut v: Vec<_>| {
        v.iter_mut().for_each(|e| tok.annotate(e));
        v
    };
    let (train, val, test) = (
        annotate(splits.train.clone()),
        annotate(splits.validation.clone()),
        annotate(splits.test.clone()),
    );

    let mut seen = HashSet::new();
    let corpus: Vec<Dialogue> = train
        .iter()
        .filter(|e| seen.insert(e.context.context_id.clone()))
        .map(|e| {
            let mut u: Vec<Vec<u32>> =
                e.context.utterances.iter().map(|u| u.tokens.clone().unwrap()).collect();
            u.push(e.reference_response.tokens.clone().unwrap());
            Dialogue::new(u)
        })
        .collect();
    let mut pcfg = PretrainConfig::desk(tok.vocab.len());
    pcfg.model = VhredConfig {
        encoder: EncoderConfig {
            vocab_size: tok.vocab.len(),
            embed_dim: 6,
            utterance_hidden: 8,
            context_hidden: 8,
            layer_norm: true,
        },
        latent_dim: 3,
        mlp_hidden: 8,
        decoder_hidden: 8,
        word_dropout: 0.25,
    };
    pcfg.batches = 12;
    pcfg.batch_size = 4;
    let (model, log) = pretrain_vhred(&corpus, &pcfg, Execution::Parallel).unwrap();
    let (model_seq, log_seq) = pretrain_vhred(&corpus, &pcfg, Execution::Sequential).unwrap();
    assert_eq!(log, log_seq);
    assert_eq!(encoder_bytes(&model.encoder), encoder_bytes(&model_seq.encoder));

    let enc = &model.encoder;
    let embed = |d: &[_], exec| embed_examples(enc, d, exec).unwrap();
    let raw_train = embed(&train, Execution::Parallel);
    assert_eq!(raw_train, embed(&train, Execution::Sequential));
    let (raw_val, raw_test) = (embed(&val, Execution::Parallel), embed(&test, Execution::Parallel));
    let pca = fit_pca_on(&raw_train, 8).unwrap();
    let proj = |d: &[AdemExample]| project_examples(&pca, d, Execution::Parallel).unwrap();
    let cfg = quick();
    let trained = train_adem(&proj(&raw_train), &proj(&raw_val), &cfg, Execution::Parallel).unwrap();
    let trained_seq =
        train_adem(&proj(&raw_train), &proj(&raw_val), &cfg, Execution::Sequential).unwrap();
    assert_eq!(trained.params, trained_seq.params);
    assert_eq!(trained.log, trained_seq.log);

    let adem = AdemModel {
        pca,
        params: trained.params,
        config: cfg,
    };
    let raw: Vec<_> = raw_test.iter().map(|e| e.triple.clone()).collect();
    let scores = adem.score_triples(&raw, Execution::Parallel).unwrap();
    assert_eq!(scores.len(), test.len());
    assert!(scores.iter().all(|s| s.is_finite()));

    let overlap = score_overlap(&test, norm, Execution::Parallel).unwrap();
    assert_eq!(overlap, score_overlap(&test, norm, Execution::Sequential).unwrap());
}

fn encoder_bytes(e: &HierEncoder) -> Vec<u8> {
    let mut f = TensorFile::default();
    e.to_tensor_file("encoder", &mut f);
    f.to_bytes()
}

#[test]
fn checkpoints_round_trip_through_files() {
    let s = small_embeddings(2);
    let pca = fit_pca_on(&s.train, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("pca.ckpt");
    pca.save(&p).unwrap();
    let back = PcaProjection::load(&p).unwrap();
    assert_eq!(back, pca);

    let cfg = TrainConfig {
        pca_dim: 5,
        ..quick()
    };
    let proj = |d: &[AdemExample]| project_examples(&pca, d, Execution::Sequential).unwrap();
    let trained = train_adem(&proj(&s.train), &proj(&s.validation), &cfg, Execution::Sequential).unwrap();
    let model = AdemModel {
        pca: pca.clone(),
        params: trained.params.clone(),
        config: cfg,
    };
    let m = dir.path().join("adem.ckpt");
    model.save(&m).unwrap();
    let loaded = AdemModel::load(&m).unwrap();
    assert_eq!(loaded, model);
    let raw: Vec<_> = s.test.iter().map(|e| e.triple.clone()).collect();
    let projected: Vec<_> = proj(&s.test).into_iter().map(|e| e.triple).collect();
    assert_eq!(
        loaded.score_triples(&raw, Execution::Sequential).unwrap(),
        predict(&trained.params, &projected, Execution::Sequential).unwrap()
    );

    // a truncated file is rejected, not misread
    let bytes = std::fs::read(&m).unwrap();
    std::fs::write(&m, &bytes[..bytes.len() / 2]).unwrap();
    assert!(AdemModel::load(&m).is_err());
}

#[test]
fn context_subsets_are_nested_and_whole() {
    let s = small_embeddings(3);
    let ids = |d: &[AdemExample]| -> BTreeSet<String> { d.iter().map(|e| e.context_id.clone()).collect() };
    let full = ids(&s.train);
    let mut prev: Option<BTreeSet<String>> = None;
    for f in [1.0, 0.75, 0.5, 0.25, 0.1] {
        let sub = context_subset(&s.train, f, 7).unwrap();
        let c = ids(&sub);
        assert_eq!(c.len(), (f * full.len() as f64).round() as usize);
        // every example of a chosen context comes along
        let per_ctx = s.train.iter().filter(|e| c.contains(&e.context_id)).count();
        assert_eq!(sub.len(), per_ctx);
        if let Some(p) = &prev {
            assert!(c.is_subset(p));
        }
        prev = Some(c);
    }
    assert!(context_subset(&s.train, 0.0, 7).is_err());
    assert!(context_subset(&s.train, 1.5, 7).is_err());
}

#[test]
fn sweep_reports_one_row_per_fraction() {
    let s = small_embeddings(4);
    let fractions = [1.0, 0.5, 0.25];
    let rows =
        data_efficiency_sweep(&s.train, &s.validation, &s.test, &fractions, &quick(), 2, Execution::default())
            .unwrap();
    assert_eq!(rows.len(), 3);
    let contexts = s.train.len() / 4;
    for (row, f) in rows.iter().zip(fractions) {
        assert_eq!(row.fraction, f);
        assert_eq!(row.n_contexts, (f * contexts as f64).round() as usize);
        assert_eq!(row.n_train, row.n_contexts * 4);
        assert!(row.test.pearson.coefficient.is_finite());
    }
    assert_eq!(rows[0].n_train, s.train.len());
    let again = data_efficiency_sweep(
        &s.train,
        &s.validation,
        &s.test,
        &fractions,
        &quick(),
        2,
        Execution::Sequential,
    )
    .unwrap();
    assert_eq!(sweep_csv(&rows).unwrap(), sweep_csv(&again).unwrap());
}

#[test]
fn leave_one_out_skips_sources_without_training_data() {
    let s = small_embeddings(5);
    // HRED appears in validation and test only
    let train: Vec<AdemExample> =
        s.train.iter().filter(|e| e.source_model != SourceModel::Hred).cloned().collect();
    let (sets, warnings) = loo_training_sets(&train, &s.validation, &s.test, 1).unwrap();
    assert_eq!(warnings.len(), 1);
    assert!(warnings[0].contains("hred") || warnings[0].contains("HRED"), "{warnings:?}");
    let held: Vec<_> = sets.iter().map(|j| j.held_out).collect();
    assert!(!held.contains(&Some(SourceModel::Hred)));
    assert_eq!(held.len(), 4);
    assert_eq!(held.last(), Some(&None));
    let largest = sets.iter().filter(|j| j.held_out.is_some()).map(|j| j.train.len()).max();
    assert_eq!(Some(sets.last().unwrap().train.len()), largest);

    let report = leave_one_out_eval(&train, &s.validation, &s.test, &quick(), Execution::default()).unwrap();
    assert_eq!(report.warnings, warnings);
    assert_eq!(report.rows.len(), 4);
    for (row, set) in report.rows.iter().zip(&sets) {
        assert_eq!(row.n_train, set.train.len());
        assert!(row.full_test.pearson.coefficient.is_finite());
        assert_eq!(row.held_out_test.is_some(), row.held_out.is_some());
    }
}

#[test]
fn leave_one_out_needs_two_sources() {
    let s = small_embeddings(6);
    let only = |d: &[AdemExample]| -> Vec<AdemExample> {
        d.iter().filter(|e| e.source_model == SourceModel::De).cloned().collect()
    };
    assert!(loo_training_sets(&only(&s.train), &only(&s.validation), &only(&s.test), 0).is_err());
}

#[test]
fn random_encoder_embeds_every_example() {
    let ds = synth_text_dataset(&TextSynthConfig {
        contexts: 5,
        ..TextSynthConfig::default()
    })
    .unwrap();
    let texts: Vec<&str> = ds.iter().map(|e| e.model_response.text.as_str()).collect();
    let merges = learn_bpe(&texts, 10).unwrap();
    let vocab = build_vocab(&texts, &merges, 60, Normalizer::default()).unwrap();
    let tok = Tokenizer::new(merges, vocab, Normalizer::default());
    let mut ds = ds;
    ds.iter_mut().for_each(|e| tok.annotate(e));
    let enc = HierEncoder::new(
        EncoderConfig {
            vocab_size: tok.vocab.len(),
            embed_dim: 4,
            utterance_hidden: 5,
            context_hidden: 6,
            layer_norm: true,
        },
        &mut ChaCha8Rng::seed_from_u64(0),
    );
    let out = embed_examples(&enc, &ds, Execution::default()).unwrap();
    assert_eq!(out.len(), ds.len());
    for (e, src) in out.iter().zip(&ds) {
        assert_eq!(e.triple.dim(), 6);
        assert_eq!(e.context_id, src.context.context_id);
        assert_eq!(e.response_len, src.model_response.word_count());
    }
}
