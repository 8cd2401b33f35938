use std::collections::HashSet;
use std::path::Path;
use std::time::Instant;

use dialeval::adem::{
    embed_examples, fit_pca_on, project_examples, train_adem, AdemExample, AdemModel,
    PcaProjection,
};
use dialeval::analytics::{
    data_efficiency_sweep, evaluate, leave_one_out_eval, loo_csv, meta_from_csv, meta_to_csv,
    sweep_csv, ExampleMeta, ScoreTable, LOO_TABLE, SWEEP_TABLE,
};
use dialeval::adem::EpochLog;
use dialeval::corpus::{
    build_vocab, format_dataset, learn_bpe, parse_dataset, split_by_context, BpeMerges,
    EvalExample, Normalizer, Tokenizer, Vocabulary,
};
use dialeval::encoder::{HierEncoder, TensorFile};
use dialeval::metrics::{score_overlap, OVERLAP_METRICS};
use dialeval::synth::{synth_embeddings, synth_text_dataset};
use dialeval::vhred::{pretrain_vhred, Dialogue, PretrainLogRow};
use dialeval::Execution;

use crate::config::{RunConfig, SynthKind};
use crate::output::{Inputs, RunDir};
use crate::{CliError, DataArgs, Split};

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const BPE_FILE: &str = "bpe.txt";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const ENCODER_FILE: &str = "encoder.ckpt";
pub const PRETRAIN_LOG: &str = "pretrain_log.csv";
pub const PCA_FILE: &str = "pca.ckpt";
pub const ADEM_FILE: &str = "adem.ckpt";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const META_FILE: &str = "meta.csv";
pub const TIMING_FILE: &str = "timing.json";

const SPLITS: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

fn text_split_file(s: Split) -> String {
    format!("{}.jsonl", s.name())
}

fn embedded_split_file(s: Split) -> String {
    format!("{}.emb.jsonl", s.name())
}

fn exec(cfg: &RunConfig) -> Execution {
    if cfg.run.parallel {
        Execution::default()
    } else {
        Execution::Sequential
    }
}

fn normalizer(cfg: &RunConfig) -> Normalizer {
    Normalizer {
        keep_speaker_tokens: cfg.prepare.keep_speaker_tokens,
    }
}

fn embedded_jsonl(data: &[AdemExample]) -> String {
    let mut s = String::new();
    for e in data {
        s.push_str(&serde_json::to_string(e).expect("examples serialize"));
        s.push('\n');
    }
    s
}

fn parse_embedded(text: &str, path: &Path) -> Result<Vec<AdemExample>, CliError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                CliError::Data(format!("{} line {}: {e}", path.display(), i + 1))
            })
        })
        .collect()
}

pub fn synth(cfg: &RunConfig, toml: &str, out: &Path) -> Result<(), CliError> {
    let mut dir = RunDir::create(out)?;
    let seed = cfg.run.seed;
    match cfg.synth.kind {
        SynthKind::Text => {
            let ds = synth_text_dataset(&cfg.synth.text(seed))?;
            dir.write(DATASET_FILE, format_dataset(&ds).as_bytes())?;
            eprintln!("wrote {} examples", ds.len());
        }
        SynthKind::Realizable | SynthKind::Independent => {
            let s = synth_embeddings(&cfg.synth.embeddings(seed))?;
            for (split, data) in SPLITS.iter().zip([&s.train, &s.validation, &s.test]) {
                dir.write(&embedded_split_file(*split), embedded_jsonl(data).as_bytes())?;
            }
            eprintln!(
                "wrote {}/{}/{} embedded examples",
                s.train.len(),
                s.validation.len(),
                s.test.len()
            );
        }
    }
    dir.finish("synth", seed, toml, &Inputs::default())
}

pub fn prepare(cfg: &RunConfig, toml: &str, dataset: &Path, out: &Path) -> Result<(), CliError> {
    let mut inputs = Inputs::default();
    let text = inputs.read_text(dataset)?;
    let ds = parse_dataset(&text).map_err(|e| {
        CliError::Data(format!("{}: {e}", dataset.display()))
    })?;
    let splits = split_by_context(&ds, cfg.prepare.split, cfg.run.seed)?;
    let norm = normalizer(cfg);
    let mut texts: Vec<String> = Vec::new();
    for ex in &splits.train {
        for u in &ex.context.utterances {
            texts.push(norm.words(&u.text).join(" "));
        }
        texts.push(norm.words(&ex.model_response.text).join(" "));
        texts.push(norm.words(&ex.reference_response.text).join(" "));
    }
    let merges = learn_bpe(&texts, cfg.prepare.bpe_merges)?;
    let vocab = build_vocab(&texts, &merges, cfg.prepare.vocab_size, norm)?;

    let mut dir = RunDir::create(out)?;
    for (split, data) in SPLITS
        .iter()
        .zip([&splits.train, &splits.validation, &splits.test])
    {
        dir.write(&text_split_file(*split), format_dataset(data).as_bytes())?;
    }
    dir.write(BPE_FILE, merges.to_text().as_bytes())?;
    dir.write(VOCAB_FILE, vocab.to_text().as_bytes())?;
    eprintln!(
        "split {} examples into {}/{}/{}; {} merges, {} symbols",
        ds.len(),
        splits.train.len(),
        splits.validation.len(),
        splits.test.len(),
        merges.len(),
        vocab.len()
    );
    dir.finish("prepare", cfg.run.seed, toml, &inputs)
}

struct Prepared {
    tokenizer: Tokenizer,
}

impl Prepared {
    fn load(cfg: &RunConfig, dir: &Path, inputs: &mut Inputs) -> Result<Self, CliError> {
        let merges = BpeMerges::from_text(&inputs.read_text(&dir.join(BPE_FILE))?)?;
        let vocab = Vocabulary::from_text(&inputs.read_text(&dir.join(VOCAB_FILE))?)?;
        Ok(Prepared {
            tokenizer: Tokenizer::new(merges, vocab, normalizer(cfg)),
        })
    }

    fn split(&self, dir: &Path, s: Split, inputs: &mut Inputs) -> Result<Vec<EvalExample>, CliError> {
        let path = dir.join(text_split_file(s));
        let mut ds = parse_dataset(&inputs.read_text(&path)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        for ex in ds.iter_mut() {
            self.tokenizer.annotate(ex);
        }
        Ok(ds)
    }
}

/// One dialogue per distinct training context: its utterances followed by
/// the reference response.
fn dialogues(train: &[EvalExample]) -> Vec<Dialogue> {
    let mut seen = HashSet::new();
    train
        .iter()
        .filter(|ex| seen.insert(ex.context.context_id.clone()))
        .map(|ex| {
            let mut utts: Vec<Vec<u32>> = ex
                .context
                .utterances
                .iter()
                .map(|u| u.tokens.clone().expect("annotated"))
                .collect();
            utts.push(ex.reference_response.tokens.clone().expect("annotated"));
            Dialogue::new(utts)
        })
        .collect()
}

pub fn pretrain(cfg: &RunConfig, toml: &str, prepared: &Path, out: &Path) -> Result<(), CliError> {
    let mut inputs = Inputs::default();
    let prep = Prepared::load(cfg, prepared, &mut inputs)?;
    let train = prep.split(prepared, Split::Train, &mut inputs)?;
    let corpus = dialogues(&train);
    let pcfg = cfg
        .pretrain
        .to_config(prep.tokenizer.vocab.len(), cfg.run.seed);
    let (model, log) = pretrain_vhred(&corpus, &pcfg, exec(cfg))?;
    if let Some(last) = log.last() {
        eprintln!(
            "pre-trained on {} dialogues; final batch recon {:.4} kl {:.4}",
            corpus.len(),
            last.recon,
            last.kl
        );
    }
    let mut dir = RunDir::create(out)?;
    let mut f = TensorFile::default();
    model.encoder.to_tensor_file("encoder", &mut f);
    dir.write(ENCODER_FILE, &f.to_bytes())?;
    dir.write(PRETRAIN_LOG, PretrainLogRow::to_csv(&log).as_bytes())?;
    dir.finish("pretrain", cfg.run.seed, toml, &inputs)
}

/// Raw (unprojected) embedded examples for the requested splits.
fn load_embedded(
    cfg: &RunConfig,
    data: &DataArgs,
    splits: &[Split],
    inputs: &mut Inputs,
) -> Result<Vec<Vec<AdemExample>>, CliError> {
    if let Some(dir) = &data.embeddings {
        return splits
            .iter()
            .map(|s| {
                let p = dir.join(embedded_split_file(*s));
                let text = inputs.read_text(&p)?;
                parse_embedded(&text, &p)
            })
            .collect();
    }
    let (Some(prepared), Some(encoder)) = (&data.prepared, &data.encoder) else {
        return Err(CliError::Usage(
            "pass --embeddings DIR, or both --prepared DIR and --encoder CKPT".into(),
        ));
    };
    let prep = Prepared::load(cfg, prepared, inputs)?;
    let enc = load_encoder(encoder, inputs)?;
    splits
        .iter()
        .map(|s| {
            let ds = prep.split(prepared, *s, inputs)?;
            Ok(embed_examples(&enc, &ds, exec(cfg))?)
        })
        .collect()
}

fn load_encoder(path: &Path, inputs: &mut Inputs) -> Result<HierEncoder, CliError> {
    let f = TensorFile::from_bytes(&inputs.read(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(HierEncoder::from_tensor_file("encoder", &f)?)
}

fn load_pca(path: &Path, inputs: &mut Inputs) -> Result<PcaProjection, CliError> {
    let f = TensorFile::from_bytes(&inputs.read(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(PcaProjection::from_tensor_file("pca", &f)?)
}

pub fn fit_pca(cfg: &RunConfig, toml: &str, data: &DataArgs, out: &Path) -> Result<(), CliError> {
    let mut inputs = Inputs::default();
    let train = load_embedded(cfg, data, &[Split::Train], &mut inputs)?.remove(0);
    let pca = fit_pca_on(&train, cfg.adem.pca_dim)?;
    let kept: f64 = pca.explained_variance.iter().sum();
    eprintln!(
        "projected {} dimensions to {}; retained variance {kept:.6}",
        pca.input_dim(),
        pca.output_dim()
    );
    let mut dir = RunDir::create(out)?;
    let mut f = TensorFile::default();
    pca.to_tensor_file("pca", &mut f);
    dir.write(PCA_FILE, &f.to_bytes())?;
    dir.finish("fit-pca", cfg.run.seed, toml, &inputs)
}

pub fn train(
    cfg: &RunConfig,
    toml: &str,
    data: &DataArgs,
    pca_path: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let mut inputs = Inputs::default();
    let mut sets = load_embedded(cfg, data, &[Split::Train, Split::Validation], &mut inputs)?;
    let validation = sets.pop().expect("two splits");
    let train = sets.pop().expect("two splits");
    let pca = match pca_path {
        Some(p) => load_pca(p, &mut inputs)?,
        None => fit_pca_on(&train, cfg.adem.pca_dim)?,
    };
    let e = exec(cfg);
    let tcfg = cfg.adem.to_config(cfg.run.seed);
    let result = train_adem(
        &project_examples(&pca, &train, e)?,
        &project_examples(&pca, &validation, e)?,
        &tcfg,
        e,
    )?;
    let best = &result.log[result.best_epoch];
    eprintln!(
        "trained on {} examples; best epoch {} with validation pearson {:.4}",
        result.train_size, result.best_epoch, best.val_pearson
    );
    let model = AdemModel {
        pca,
        params: result.params,
        config: tcfg,
    };
    let mut dir = RunDir::create(out)?;
    dir.write(ADEM_FILE, &model.to_tensor_file().to_bytes())?;
    dir.write(TRAIN_LOG, EpochLog::to_csv(&result.log).as_bytes())?;
    dir.finish("train", cfg.run.seed, toml, &inputs)
}

fn load_adem(path: &Path, inputs: &mut Inputs) -> Result<AdemModel, CliError> {
    let f = TensorFile::from_bytes(&inputs.read(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(AdemModel::from_tensor_file(&f)?)
}

pub fn score(
    cfg: &RunConfig,
    toml: &str,
    data: &DataArgs,
    adem: Option<&Path>,
    split: Split,
    out: &Path,
    timing: bool,
) -> Result<(), CliError> {
    let mut inputs = Inputs::default();
    let e = exec(cfg);
    let mut overlap_secs = None;
    let mut adem_secs = None;
    let (meta, table) = if let Some(dir) = &data.embeddings {
        let p = dir.join(embedded_split_file(split));
        let ex = parse_embedded(&inputs.read_text(&p)?, &p)?;
        let meta: Vec<ExampleMeta> = ex.iter().map(adem_meta).collect();
        let mut table = empty_table(&meta);
        let Some(adem) = adem else {
            return Err(CliError::Usage(
                "embedded data has no text to score; pass --adem CKPT".into(),
            ));
        };
        let model = load_adem(adem, &mut inputs)?;
        let triples: Vec<_> = ex.iter().map(|x| x.triple.clone()).collect();
        let t = Instant::now();
        let s = model.score_triples(&triples, e)?;
        adem_secs = Some(t.elapsed().as_secs_f64());
        table.push("adem", s)?;
        (meta, table)
    } else {
        let Some(prepared) = &data.prepared else {
            return Err(CliError::Usage(
                "pass --prepared DIR (with --encoder and --adem for ADEM scores) or --embeddings DIR"
                    .into(),
            ));
        };
        let prep = Prepared::load(cfg, prepared, &mut inputs)?;
        let ds = prep.split(prepared, split, &mut inputs)?;
        let meta: Vec<ExampleMeta> = ds.iter().map(ExampleMeta::from_example).collect();
        let mut table = empty_table(&meta);
        let t = Instant::now();
        let overlap = score_overlap(&ds, normalizer(cfg), e)?;
        overlap_secs = Some(t.elapsed().as_secs_f64());
        for (k, name) in OVERLAP_METRICS.iter().enumerate() {
            table.push(*name, overlap.iter().map(|o| o.values()[k]).collect())?;
        }
        match (adem, &data.encoder) {
            (Some(adem), Some(encoder)) => {
                let enc = load_encoder(encoder, &mut inputs)?;
                let model = load_adem(adem, &mut inputs)?;
                let t = Instant::now();
                let triples = enc.encode_triples(&ds, e)?;
                let s = model.score_triples(&triples, e)?;
                adem_secs = Some(t.elapsed().as_secs_f64());
                table.push("adem", s)?;
            }
            (Some(_), None) => {
                return Err(CliError::Usage(
                    "ADEM scoring of text needs the encoder: pass --encoder CKPT".into(),
                ))
            }
            _ => {}
        }
        (meta, table)
    };
    let mut dir = RunDir::create(out)?;
    dir.write(SCORES_FILE, table.to_csv()?.as_bytes())?;
    dir.write(META_FILE, meta_to_csv(&meta)?.as_bytes())?;
    if timing {
        let j = serde_json::json!({
            "split": split.name(),
            "examples": meta.len(),
            "overlap_seconds": overlap_secs,
            "adem_seconds": adem_secs,
        });
        let mut text = serde_json::to_string_pretty(&j).expect("json");
        text.push('\n');
        dir.write(TIMING_FILE, text.as_bytes())?;
    }
    eprintln!("scored {} {} examples", meta.len(), split.name());
    dir.finish("score", cfg.run.seed, toml, &inputs)
}

fn adem_meta(e: &AdemExample) -> ExampleMeta {
    ExampleMeta {
        context_id: e.context_id.clone(),
        source_model: e.source_model,
        human_score: e.human_score,
        response_len: e.response_len,
        reference_len: e.reference_len,
    }
}

fn empty_table(meta: &[ExampleMeta]) -> ScoreTable {
    ScoreTable {
        context_ids: meta.iter().map(|m| m.context_id.clone()).collect(),
        columns: Vec::new(),
    }
}

pub fn eval(cfg: &RunConfig, toml: &str, scores: &Path, out: &Path) -> Result<(), CliError> {
    let mut inputs = Inputs::default();
    let table = ScoreTable::from_csv(&inputs.read_text(&scores.join(SCORES_FILE))?)?;
    let meta = meta_from_csv(&inputs.read_text(&scores.join(META_FILE))?)?;
    let tables = evaluate(&meta, &table, &cfg.eval.to_config(cfg.run.seed))?;
    let mut dir = RunDir::create(out)?;
    for (name, content) in &tables.files {
        dir.write(name, content.as_bytes())?;
    }
    eprintln!("wrote {} tables", tables.files.len());
    dir.finish("eval", cfg.run.seed, toml, &inputs)
}

pub fn sweep(cfg: &RunConfig, toml: &str, data: &DataArgs, out: &Path) -> Result<(), CliError> {
    let mut inputs = Inputs::default();
    let mut sets = load_embedded(cfg, data, &SPLITS, &mut inputs)?;
    let test = sets.pop().expect("three splits");
    let validation = sets.pop().expect("three splits");
    let train = sets.pop().expect("three splits");
    let e = exec(cfg);
    let pca = fit_pca_on(&train, cfg.adem.pca_dim)?;
    let (train, validation, test) = (
        project_examples(&pca, &train, e)?,
        project_examples(&pca, &validation, e)?,
        project_examples(&pca, &test, e)?,
    );
    let tcfg = cfg.adem.to_config(cfg.run.seed);
    let rows = data_efficiency_sweep(
        &train,
        &validation,
        &test,
        &cfg.sweep.fractions,
        &tcfg,
        cfg.sweep.seeds,
        e,
    )?;
    let mut dir = RunDir::create(out)?;
    dir.write(SWEEP_TABLE, sweep_csv(&rows)?.as_bytes())?;
    if cfg.sweep.leave_one_out {
        let report = leave_one_out_eval(&train, &validation, &test, &tcfg, e)?;
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
        dir.write(LOO_TABLE, loo_csv(&report)?.as_bytes())?;
    }
    dir.finish("sweep", cfg.run.seed, toml, &inputs)
}
