use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{EvaluateSettings, PreprocessSettings, TrainSettings, TranslateSettings};
use crate::amr::{read_amr_file, write_amr_file, AmrGraph};
use crate::data::{
    encode_examples, encode_source, graph_tokens, join_subwords, learn_bpe, load_parallel,
    read_tokenized, word_count, write_tokenized, Bpe, EncodeOptions, EncodedExample, GraphView,
    ParallelExample, Vocabs, Vocabulary,
};
use crate::decoder::BeamOptions;
use crate::error::{Error, Result};
use crate::metrics::{bleu, bucketed_bleu, Buckets};
use crate::model::{Mode, Model, ModelConfig};
use crate::training::{Checkpoint, CheckpointVocabs, TrainConfig, Trainer};

pub const SRC_VOCAB: &str = "src.vocab";
pub const TGT_VOCAB: &str = "tgt.vocab";

/// Graph-side vocabulary file for a view.
pub fn graph_vocab_file(view: GraphView) -> Option<&'static str> {
    match view {
        GraphView::None => None,
        GraphView::Amr => Some("amr.vocab"),
        GraphView::Linearized => Some("lin.vocab"),
        GraphView::SourceChain => Some("chain.vocab"),
    }
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("--{flag} is required")))
}

fn exists(p: &Path, flag: &str) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("--{flag}: no such file {}", p.display())))
    }
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

struct Split {
    name: &'static str,
    src: PathBuf,
    tgt: PathBuf,
    amr: Option<PathBuf>,
}

pub fn preprocess(s: &PreprocessSettings) -> Result<()> {
    let out = required(&s.out, "out")?;
    let mut splits = vec![Split {
        name: "train",
        src: required(&s.train_src, "train-src")?.to_path_buf(),
        tgt: required(&s.train_tgt, "train-tgt")?.to_path_buf(),
        amr: s.train_amr.clone(),
    }];
    for (name, src, tgt, amr) in [
        ("dev", &s.dev_src, &s.dev_tgt, &s.dev_amr),
        ("test", &s.test_src, &s.test_tgt, &s.test_amr),
    ] {
        match (src, tgt) {
            (Some(a), Some(b)) => splits.push(Split {
                name,
                src: a.clone(),
                tgt: b.clone(),
                amr: amr.clone(),
            }),
            (None, None) => {}
            _ => return Err(Error::Config(format!("--{name}-src and --{name}-tgt go together"))),
        }
    }
    let with_amr = s.train_amr.is_some();
    for sp in &splits {
        exists(&sp.src, &format!("{}-src", sp.name))?;
        exists(&sp.tgt, &format!("{}-tgt", sp.name))?;
        if let Some(a) = &sp.amr {
            exists(a, &format!("{}-amr", sp.name))?;
        }
        if with_amr != sp.amr.is_some() {
            return Err(Error::Config(format!(
                "--train-amr and --{}-amr must be given together",
                sp.name
            )));
        }
    }
    mkdir(out)?;

    let train_src = read_tokenized(&splits[0].src)?;
    let train_tgt = read_tokenized(&splits[0].tgt)?;
    let src_bpe = Bpe::new(learn_bpe(train_src.iter().flatten().map(String::as_str), s.src_merges));
    let tgt_bpe = Bpe::new(learn_bpe(train_tgt.iter().flatten().map(String::as_str), s.tgt_merges));
    src_bpe.save(&out.join("src.bpe"))?;
    tgt_bpe.save(&out.join("tgt.bpe"))?;

    let mut summary = serde_json::Map::new();
    let mut train_pairs: Vec<ParallelExample> = Vec::new();
    for sp in &splits {
        let raw = load_parallel(&sp.src, &sp.tgt, sp.amr.as_deref())?;
        let test = sp.name == "test";
        let mut kept: Vec<ParallelExample> = Vec::new();
        let mut refs = Vec::new();
        for ex in raw {
            if !test && s.max_len > 0 && (word_count(&ex.src) > s.max_len || word_count(&ex.tgt) > s.max_len) {
                continue;
            }
            refs.push(ex.tgt.clone());
            kept.push(ParallelExample {
                src: src_bpe.apply_line(&ex.src.join(" ")),
                tgt: tgt_bpe.apply_line(&ex.tgt.join(" ")),
                amr: ex.amr,
            });
        }
        log::info!("{}: kept {} pairs", sp.name, kept.len());
        summary.insert(format!("{}-pairs", sp.name), kept.len().into());
        let base = out.join(sp.name);
        let src_lines: Vec<Vec<String>> = kept.iter().map(|e| e.src.clone()).collect();
        let tgt_lines: Vec<Vec<String>> = kept.iter().map(|e| e.tgt.clone()).collect();
        write_tokenized(&base.with_extension("src"), &src_lines)?;
        write_tokenized(&base.with_extension("tgt"), &tgt_lines)?;
        if with_amr {
            let graphs: Vec<AmrGraph> = kept.iter().filter_map(|e| e.amr.clone()).collect();
            write_amr_file(&base.with_extension("amr"), &graphs)?;
        }
        if test {
            write_tokenized(&base.with_extension("ref"), &refs)?;
        }
        if sp.name == "train" {
            train_pairs = kept;
        }
    }
    if train_pairs.is_empty() {
        return Err(Error::Empty("training corpus after length filtering"));
    }

    let mut save_vocab = |file: &str, tokens: Vec<String>, cap: usize| -> Result<()> {
        let built = Vocabulary::build(tokens.iter().map(String::as_str), cap)?;
        built.vocab.save(&out.join(file))?;
        summary.insert(format!("{file}-size"), built.vocab.len().into());
        summary.insert(format!("{file}-coverage"), built.coverage.into());
        Ok(())
    };
    let side = |f: fn(&ParallelExample) -> &Vec<String>| -> Vec<String> {
        train_pairs.iter().flat_map(|e| f(e).iter().cloned()).collect()
    };
    save_vocab(SRC_VOCAB, side(|e| &e.src), s.src_vocab_size)?;
    save_vocab(TGT_VOCAB, side(|e| &e.tgt), s.tgt_vocab_size)?;
    let mut views = vec![GraphView::SourceChain];
    if with_amr {
        views.extend([GraphView::Amr, GraphView::Linearized]);
    }
    for view in views {
        let file = graph_vocab_file(view).expect("graph view");
        save_vocab(file, graph_tokens(&train_pairs, view)?, s.graph_vocab_size)?;
    }
    let text = serde_json::to_string_pretty(&summary)?;
    println!("{text}");
    std::fs::write(out.join("preprocess.json"), text + "\n").map_err(|e| Error::io(out, e))
}

/// Checks the mode against the AMR flags: an AMR file is needed exactly
/// for dual2seq and dual2seq-linamr.
fn check_amr(mode: Mode, amr: &Option<PathBuf>, flag: &str) -> Result<()> {
    match (mode.needs_amr(), amr) {
        (true, None) => Err(Error::Config(format!("mode {mode} requires --{flag}"))),
        (false, Some(_)) => Err(Error::Config(format!("mode {mode} does not read --{flag}"))),
        _ => Ok(()),
    }
}

fn load_vocabs(dir: &Path, view: GraphView) -> Result<CheckpointVocabs> {
    Ok(CheckpointVocabs {
        src: Vocabulary::load(&dir.join(SRC_VOCAB))?,
        tgt: Vocabulary::load(&dir.join(TGT_VOCAB))?,
        graph: graph_vocab_file(view)
            .map(|f| Vocabulary::load(&dir.join(f)))
            .transpose()?,
    })
}

fn encode_split(
    src: &Path,
    tgt: &Path,
    amr: Option<&Path>,
    vocabs: &CheckpointVocabs,
    opts: &EncodeOptions,
) -> Result<Vec<EncodedExample>> {
    let pairs = load_parallel(src, tgt, amr)?;
    let v = Vocabs {
        src: &vocabs.src,
        tgt: &vocabs.tgt,
        graph: vocabs.graph.as_ref(),
    };
    Ok(encode_examples(&pairs, &v, opts)?.0)
}

pub fn train(s: &TrainSettings) -> Result<()> {
    let mode = s.mode;
    let train_src = required(&s.train_src, "train-src")?;
    let train_tgt = required(&s.train_tgt, "train-tgt")?;
    let vocab_dir = required(&s.vocab_dir, "vocab-dir")?;
    let out = required(&s.out, "out")?;
    check_amr(mode, &s.train_amr, "train-amr")?;
    let dev = match (&s.dev_src, &s.dev_tgt) {
        (Some(a), Some(b)) => {
            check_amr(mode, &s.dev_amr, "dev-amr")?;
            Some((a.as_path(), b.as_path()))
        }
        (None, None) => None,
        _ => return Err(Error::Config("--dev-src and --dev-tgt go together".into())),
    };
    exists(train_src, "train-src")?;
    exists(train_tgt, "train-tgt")?;
    let seed = s.seed.unwrap_or(super::DEFAULT_SEED);
    let train_config = TrainConfig {
        lr: s.lr,
        batch_size: s.batch_size,
        epochs: s.epochs,
        seed,
        clip: (s.clip > 0.0).then_some(s.clip),
        bucketing: !s.no_bucketing,
        max_len: s.max_len,
        max_neighbors: s.max_neighbors,
    };
    if s.batch_size == 0 || s.lr <= 0.0 {
        return Err(Error::Config("batch size and learning rate must be positive".into()));
    }

    let vocabs = load_vocabs(vocab_dir, mode.view())?;
    let model_config = ModelConfig {
        mode,
        embed: s.embed,
        hidden: s.hidden,
        graph_hidden: s.graph_hidden,
        steps: s.steps,
        dropout: s.dropout,
        grn_candidate: s.grn_candidate,
        feed_graph_context: !s.no_feed_graph_context,
        src_vocab: vocabs.src.len(),
        tgt_vocab: vocabs.tgt.len(),
        graph_vocab: vocabs.graph.as_ref().map_or(0, Vocabulary::len),
    };
    model_config.validate()?;

    let opts = EncodeOptions {
        max_len: s.max_len,
        max_neighbors: s.max_neighbors,
        view: mode.view(),
    };
    let train = encode_split(train_src, train_tgt, s.train_amr.as_deref(), &vocabs, &opts)?;
    if train.is_empty() {
        return Err(Error::Empty("training corpus after length filtering"));
    }
    let dev = match dev {
        Some((a, b)) => encode_split(a, b, s.dev_amr.as_deref(), &vocabs, &opts)?,
        None => Vec::new(),
    };

    let mut trainer = match &s.resume {
        Some(path) => {
            let ck = Checkpoint::load_for(path, mode)?;
            if ck.vocab_hashes != vocabs.hashes() {
                return Err(Error::Config(format!(
                    "{} was trained with different vocabularies",
                    path.display()
                )));
            }
            let mut t = Trainer::new(ck.model()?, train_config.clone());
            t.optimizer = ck.optimizer;
            t.optimizer.lr = s.lr;
            t.epoch = ck.epoch;
            t.best_dev_loss = ck.best_dev_loss;
            t
        }
        None => Trainer::new(Model::new(model_config, seed)?, train_config.clone()),
    };
    log::info!(
        "mode {mode}: {} parameters, {} training pairs, {} dev pairs",
        trainer.model.params.count(),
        train.len(),
        dev.len()
    );

    mkdir(out)?;
    let log_path = out.join("train.log");
    let mut log_file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let last = out.join("last.ckpt.json");
    let best = out.join("best.ckpt.json");
    while trainer.epoch < s.epochs {
        let before = trainer.best_dev_loss;
        let stats = trainer.run_epoch(&train, &dev)?;
        let line = stats.tsv();
        println!("{line}");
        writeln!(log_file, "{line}").map_err(|e| Error::io(&log_path, e))?;
        let checkpoint = |model: &Model| {
            Checkpoint::new(
                model,
                train_config.clone(),
                vocabs.clone(),
                trainer.optimizer.clone(),
                trainer.best_dev_loss,
                trainer.epoch,
            )
        };
        checkpoint(&trainer.model).save(&last)?;
        if dev.is_empty() || trainer.best_dev_loss != before {
            checkpoint(&trainer.model).save(&best)?;
        }
    }
    Ok(())
}

pub fn translate(s: &TranslateSettings) -> Result<()> {
    let path = required(&s.checkpoint, "checkpoint")?;
    let input = required(&s.input, "input")?;
    exists(path, "checkpoint")?;
    exists(input, "input")?;
    let ck = match s.mode {
        Some(m) => Checkpoint::load_for(path, m)?,
        None => Checkpoint::load(path)?,
    };
    check_amr(ck.mode, &s.amr, "amr")?;
    let model = ck.model()?;
    let lines = read_tokenized(input)?;
    let graphs = match &s.amr {
        Some(p) => {
            let g = read_amr_file(p)?;
            if g.len() != lines.len() {
                return Err(Error::Invalid(format!(
                    "{} has {} graphs for {} input lines",
                    p.display(),
                    g.len(),
                    lines.len()
                )));
            }
            Some(g)
        }
        None => None,
    };
    let vocabs = Vocabs {
        src: &ck.vocabs.src,
        tgt: &ck.vocabs.tgt,
        graph: ck.vocabs.graph.as_ref(),
    };
    let opts = EncodeOptions {
        max_len: 0,
        max_neighbors: ck.training.max_neighbors,
        view: ck.mode.view(),
    };
    let beam = BeamOptions {
        beam_size: s.beam_size,
        max_len: s.max_len,
        normalize: !s.no_length_norm,
    };
    let mut text = String::new();
    for (i, line) in lines.iter().enumerate() {
        if !line.is_empty() {
            let amr = graphs.as_ref().map(|g| &g[i]);
            let ex = encode_source(line, amr, &vocabs, &opts)?;
            let hyp = model.translate(std::slice::from_ref(&ex), beam)?.remove(0);
            text.push_str(&join_subwords(&ck.vocabs.tgt.decode(hyp.output())));
        }
        text.push('\n');
    }
    match &s.output {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn evaluate(s: &EvaluateSettings) -> Result<()> {
    let hyp_path = required(&s.hyp, "hyp")?;
    let ref_path = required(&s.reference, "ref")?;
    exists(hyp_path, "hyp")?;
    exists(ref_path, "ref")?;
    let hyp = read_tokenized(hyp_path)?;
    let reference = read_tokenized(ref_path)?;
    println!("{}", bleu(&hyp, &reference, 4)?);
    if let Some(spec) = &s.length_buckets {
        let buckets: Buckets = spec.parse()?;
        let src_path = required(&s.src, "src")?;
        exists(src_path, "src")?;
        let lengths: Vec<usize> = read_tokenized(src_path)?.iter().map(|l| word_count(l)).collect();
        for b in bucketed_bleu(&hyp, &reference, &lengths, &buckets, 4)? {
            match b.report {
                Some(r) => println!("{}\t{}\t{}", b.bucket, b.sentences, r),
                None => println!("{}\t0\t-", b.bucket),
            }
        }
    }
    Ok(())
}
