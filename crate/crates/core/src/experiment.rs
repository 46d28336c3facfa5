//! End-to-end experiment pipeline: synthesize, split, train, decode.
//!
//! A run is fully determined by its [`ExperimentConfig`]: the dataset is
//! seeded, the split is positional, batches cycle in a fixed order, and
//! evaluation decodes with exact Viterbi. Metrics land in a
//! `step,split,loss,cer` CSV; the κ sweep in a `loss_kind,kappa,cer` CSV.

use std::fmt::Write as _;

use crate::alphabet::{
    build_bichar_alphabet, build_ci_alphabet, build_trichar_alphabet, parse_allowed_triples,
    CdAlphabet,
};
use crate::config::{ExperimentConfig, Topology};
use crate::decoder::{
    best_kappa, corpus_cer, sweep, train_char_lm, viterbi, DecodeConfig, NGramLM, SweepRow,
};
use crate::error::{Error, Result};
use crate::graph::{decode_graph, Fst};
use crate::model::{
    batch_gradients, train_step, Adam, AdamConfig, EncoderConfig, Model, ScorerKind, Utterance,
};
use crate::scalar::Scalar;
use crate::synth::{default_templates, synth, SynthSpec};

/// Builds the scoring alphabet a config asks for, reading the allowed-set
/// file for tri-char topologies.
pub fn build_alphabet(config: &ExperimentConfig) -> Result<CdAlphabet> {
    let base = build_ci_alphabet(&config.alphabet)?;
    match config.topology {
        Topology::Ci => Ok(base),
        Topology::Bichar => build_bichar_alphabet(&base, config.blank_mode()),
        Topology::Trichar => {
            let path = config
                .triples_file
                .as_ref()
                .expect("validated: trichar has a triples file");
            let text = std::fs::read_to_string(path)?;
            let allowed = parse_allowed_triples(&text, &base)?;
            build_trichar_alphabet(&base, &allowed)
        }
    }
}

/// Seeded synthetic dataset for a config's task settings.
pub fn make_dataset<F: Scalar>(config: &ExperimentConfig) -> Result<Vec<Utterance<F>>> {
    let base = build_ci_alphabet(&config.alphabet)?;
    let spec = SynthSpec {
        samples: config.samples,
        len_range: config.len_range,
        dur_range: config.dur_range,
        alpha: config.alpha,
        sigma: config.sigma,
        no_repeat: config.no_repeat,
        bias: config.bias,
        templates: default_templates(base.base_size() - 1, config.d_feat),
        seed: config.seed,
    };
    synth(&base, &spec)
}

/// Deterministic 80/10/10 by utterance index: positions 8 and 9 of every
/// block of ten go to dev and test.
pub fn split_dataset<F>(data: Vec<Utterance<F>>) -> (Vec<Utterance<F>>, Vec<Utterance<F>>, Vec<Utterance<F>>) {
    let mut train = Vec::new();
    let mut dev = Vec::new();
    let mut test = Vec::new();
    for (i, u) in data.into_iter().enumerate() {
        match i % 10 {
            8 => dev.push(u),
            9 => test.push(u),
            _ => train.push(u),
        }
    }
    (train, dev, test)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub split: String,
    pub loss: f64,
    pub cer: f64,
}

/// `step,split,loss,cer` CSV.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("step,split,loss,cer\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:.6},{:.6}", r.step, r.split, r.loss, r.cer);
    }
    out
}

pub struct ExperimentOutcome<F> {
    pub model: Model<F>,
    pub lm: NGramLM<F>,
    pub metrics: Vec<MetricsRow>,
    pub sweep_plain: Vec<SweepRow>,
    pub sweep_lm: Vec<SweepRow>,
    /// (κ, dev CER) minimizers.
    pub best_plain: (f64, f64),
    pub best_lm: (f64, f64),
    /// Test CER at the dev-optimal κ.
    pub test_cer_plain: f64,
    pub test_cer_lm: f64,
}

impl<F: Scalar> ExperimentOutcome<F> {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "best_kappa_plain = {}", self.best_plain.0);
        let _ = writeln!(s, "dev_cer_plain = {:.6}", self.best_plain.1);
        let _ = writeln!(s, "best_kappa_lm = {}", self.best_lm.0);
        let _ = writeln!(s, "dev_cer_lm = {:.6}", self.best_lm.1);
        let _ = writeln!(s, "test_cer_plain = {:.6}", self.test_cer_plain);
        let _ = writeln!(s, "test_cer_lm = {:.6}", self.test_cer_lm);
        s
    }
}

fn mean_loss<F: Scalar>(model: &Model<F>, split: &[Utterance<F>], config: &ExperimentConfig) -> Result<f64> {
    let (loss, _) = batch_gradients(model, split, config.loss.kind())?;
    Ok(loss.as_f64())
}

fn split_cer<F: Scalar>(
    model: &Model<F>,
    graph: &Fst,
    split: &[Utterance<F>],
    kappa: f64,
    lm: Option<&NGramLM<F>>,
) -> Result<f64> {
    let mut pairs = Vec::with_capacity(split.len());
    for u in split {
        let scores = model.scores(&u.features)?;
        let (hyp, _) = viterbi(&scores, graph, &DecodeConfig { kappa, beam: None, lm })?;
        pairs.push((hyp, u.transcript.clone()));
    }
    Ok(corpus_cer(&pairs))
}

/// Trains per the config and evaluates on the held-out splits, with and
/// without the character LM.
pub fn run_experiment<F: Scalar>(
    config: &ExperimentConfig,
    data: Vec<Utterance<F>>,
) -> Result<ExperimentOutcome<F>> {
    config.validate()?;
    if data.len() < 10 {
        return Err(Error::Config(format!(
            "need at least 10 utterances for the 80/10/10 split, got {}",
            data.len()
        )));
    }
    for u in &data {
        if u.features.cols() != config.d_feat {
            return Err(Error::Config(format!(
                "{}: features have {} dims, config says d_feat = {}",
                u.name,
                u.features.cols(),
                config.d_feat
            )));
        }
    }
    let alphabet = build_alphabet(config)?;
    let (train, dev, test) = split_dataset(data);
    let enc_config = EncoderConfig {
        k: config.enc_k,
        d_feat: config.d_feat,
        d_hidden: config.enc_hidden,
        d_proto: config.d_proto,
    };
    let scorer_kind = ScorerKind::parse(&config.scoring)?;
    let mut model: Model<F> = Model::new(
        alphabet,
        enc_config,
        scorer_kind,
        config.d_emb,
        config.cde_hidden,
        config.seed,
    );
    let graph = decode_graph(&model.alphabet)?;
    let adam_config = AdamConfig {
        lr: config.lr,
        halve_every: (config.halve_every > 0).then_some(config.halve_every),
        ..AdamConfig::default()
    };
    let block_sizes: Vec<usize> = model.blocks().iter().map(|(_, _, d)| d.len()).collect();
    let mut adam: Adam<F> = Adam::new(adam_config, &block_sizes);

    let kind = config.loss.kind();
    let batch = config.batch.min(train.len());
    let mut metrics = Vec::new();
    let record = |model: &Model<F>, step: u64, metrics: &mut Vec<MetricsRow>| -> Result<()> {
        for (name, split) in [("train", &train), ("dev", &dev)] {
            metrics.push(MetricsRow {
                step,
                split: name.to_string(),
                loss: mean_loss(model, split, config)?,
                cer: split_cer(model, &graph, split, 1.0, None)?,
            });
        }
        Ok(())
    };
    record(&model, 0, &mut metrics)?;
    for step in 1..=config.steps {
        let start = ((step - 1) as usize * batch) % train.len();
        let mut chunk: Vec<Utterance<F>> = Vec::with_capacity(batch);
        for i in 0..batch {
            chunk.push(train[(start + i) % train.len()].clone());
        }
        train_step(&mut model, &mut adam, &chunk, kind)?;
        if step == config.steps || (config.eval_every > 0 && step % config.eval_every == 0) {
            record(&model, step, &mut metrics)?;
        }
    }

    let lm: NGramLM<F> = train_char_lm(
        &build_ci_alphabet(&config.alphabet)?,
        &train.iter().map(|u| u.transcript.clone()).collect::<Vec<_>>(),
        config.lm_order,
    )?;
    let label = config.loss.name();
    let sweep_plain = sweep(&model, &dev, None, &config.kappas, None, label)?;
    let sweep_lm = sweep(&model, &dev, Some(&lm), &config.kappas, None, label)?;
    let best_plain = best_kappa(&sweep_plain, label).expect("non-empty sweep");
    let best_lm = best_kappa(&sweep_lm, label).expect("non-empty sweep");
    let test_cer_plain = split_cer(&model, &graph, &test, best_plain.0, None)?;
    let test_cer_lm = split_cer(&model, &graph, &test, best_lm.0, Some(&lm))?;
    Ok(ExperimentOutcome {
        model,
        lm,
        metrics,
        sweep_plain,
        sweep_lm,
        best_plain,
        best_lm,
        test_cer_plain,
        test_cer_lm,
    })
}
