//! Command line front end: synthesize data, build graphs, train, decode,
//! sweep the acoustic weight, and run the self-check oracles.
//!
//! Exit codes: 0 success, 1 failed check or runtime error, 2 usage error.
//! Every artifact is written as deterministic text so identical config and
//! seed give byte-identical outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use cdctc::alphabet::{
    build_bichar_alphabet, build_trichar_alphabet, load_ci_alphabet_file, parse_allowed_triples,
    BlankMode, CdAlphabet,
};
use cdctc::checkpoint::Checkpoint;
use cdctc::config::{ExperimentConfig, LossName};
use cdctc::decoder::{
    best_kappa, corpus_cer, sweep, sweep_csv, viterbi, DecodeConfig, NGramLM,
};
use cdctc::error::Error;
use cdctc::experiment::{build_alphabet, make_dataset, metrics_csv, run_experiment};
use cdctc::forward_backward::ScoreMatrix;
use cdctc::graph::{decode_graph, free_numerator_graph, numerator_graph};
use cdctc::loss::ctc_loss;
use cdctc::model::{EncoderConfig, Model, ScorerKind, Utterance};
use cdctc::oracle::{
    brute_loss, enumerate, graph_language, natural_validity, pattern_language, EnumerationSpec,
};
use cdctc::synth::{read_dataset, write_dataset};

#[derive(Parser)]
#[command(name = "cdctc", version, about = "Context-dependent CTC training and decoding")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the seeded synthetic dataset a config describes.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit a decoding or numerator graph in text form.
    BuildGraph {
        /// ci, bichar, or trichar.
        #[arg(long)]
        topology: String,
        /// Base alphabet file, one symbol per line.
        #[arg(long)]
        alphabet: PathBuf,
        /// single or cd.
        #[arg(long, default_value = "single")]
        blank: String,
        /// Allowed tri-char set, tab separated; required for trichar.
        #[arg(long)]
        triples: Option<PathBuf>,
        /// Build the numerator graph of this transcript instead of the
        /// decoding graph.
        #[arg(long)]
        transcript: Option<String>,
        /// With --transcript: drop the validity constraints, as the local
        /// loss numerator does.
        #[arg(long)]
        free: bool,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train per config, then evaluate with and without the character LM.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset file from `synth`; synthesized from the config when
        /// omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a dataset with a trained checkpoint.
    Decode {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        /// ARPA-style LM file; decoding is LM-free when omitted.
        #[arg(long)]
        lm: Option<PathBuf>,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// CER over the config's κ grid for one trained checkpoint.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        lm: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic loss gradients against central finite differences.
    GradCheck {
        /// ctc, ctc-g, or ctc-gb.
        #[arg(long)]
        loss: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        trials: usize,
    },
    /// Check trellis languages and losses against brute-force enumeration.
    OracleCheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Random score matrices per topology.
        #[arg(long, default_value_t = 25)]
        cases: usize,
        /// Largest utterance length for language checks.
        #[arg(long, default_value_t = 5)]
        frames: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Bad user input exits 2; runtime and check failures exit 1.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(
            Error::Config(_)
            | Error::Parse(_)
            | Error::BadSymbolName(_)
            | Error::UnknownSymbol(_)
            | Error::DuplicateSymbol(_)
            | Error::EmptyAlphabet
            | Error::WrongOrder { .. }
            | Error::WrongBlankMode(_),
        ) => 2,
        _ => 1,
    }
}

fn run(cmd: Cmd) -> anyhow::Result<u8> {
    match cmd {
        Cmd::Synth { config, seed, out } => cmd_synth(&config, seed, &out),
        Cmd::BuildGraph {
            topology,
            alphabet,
            blank,
            triples,
            transcript,
            free,
            out,
        } => cmd_build_graph(&topology, &alphabet, &blank, triples, transcript, free, out),
        Cmd::Train {
            config,
            seed,
            data,
            out,
        } => cmd_train(&config, seed, data, &out),
        Cmd::Decode {
            config,
            ckpt,
            data,
            kappa,
            lm,
            beam,
            out,
        } => cmd_decode(&config, &ckpt, &data, kappa, lm, beam, &out),
        Cmd::Sweep {
            config,
            ckpt,
            data,
            lm,
            out,
        } => cmd_sweep(&config, &ckpt, &data, lm, &out),
        Cmd::GradCheck { loss, seed, trials } => cmd_grad_check(&loss, seed, trials),
        Cmd::OracleCheck {
            seed,
            cases,
            frames,
        } => cmd_oracle_check(seed, cases, frames),
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> anyhow::Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut config = ExperimentConfig::parse(&text)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn write_artifact(dir: &Path, name: &str, text: &str) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn base_alphabet(config: &ExperimentConfig) -> anyhow::Result<CdAlphabet> {
    Ok(cdctc::alphabet::build_ci_alphabet(&config.alphabet)?)
}

fn cmd_synth(config: &Path, seed: Option<u64>, out: &Path) -> anyhow::Result<u8> {
    let config = load_config(config, seed)?;
    let base = base_alphabet(&config)?;
    let data = make_dataset::<f64>(&config)?;
    write_artifact(out, "dataset.txt", &write_dataset(&base, &data))?;
    write_artifact(out, "config.txt", &config.to_text())?;
    println!("wrote {} utterances to {}", data.len(), out.join("dataset.txt").display());
    Ok(0)
}

fn cmd_build_graph(
    topology: &str,
    alphabet: &Path,
    blank: &str,
    triples: Option<PathBuf>,
    transcript: Option<String>,
    free: bool,
    out: Option<PathBuf>,
) -> anyhow::Result<u8> {
    let base = load_ci_alphabet_file(alphabet)?;
    let blank_mode = match blank {
        "single" => BlankMode::Single,
        "cd" => BlankMode::ContextDependent,
        _ => anyhow::bail!(Error::Config(format!(
            "unknown blank mode {blank:?}; expected single or cd"
        ))),
    };
    let a = match topology {
        "ci" => base,
        "bichar" => build_bichar_alphabet(&base, blank_mode)?,
        "trichar" => {
            let path = triples.ok_or_else(|| {
                Error::Config("topology trichar requires --triples <allowed-set>".into())
            })?;
            let text = fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            build_trichar_alphabet(&base, &parse_allowed_triples(&text, &base)?)?
        }
        _ => anyhow::bail!(Error::Config(format!(
            "unknown topology {topology:?}; expected ci, bichar, or trichar"
        ))),
    };
    let g = match &transcript {
        None => decode_graph(&a)?,
        Some(t) => {
            let y = a.parse_transcript(t)?;
            if free {
                free_numerator_graph(&a, &y)?
            } else {
                numerator_graph(&a, &y)?
            }
        }
    };
    let text = g.to_text();
    match out {
        Some(path) => {
            fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
            println!("states {} arcs {} -> {}", g.num_states(), g.num_arcs(), path.display());
        }
        None => print!("{text}"),
    }
    Ok(0)
}

fn load_data(config: &ExperimentConfig, path: &Path) -> anyhow::Result<Vec<Utterance<f64>>> {
    let base = base_alphabet(config)?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(read_dataset(&base, &text)?)
}

fn cmd_train(
    config_path: &Path,
    seed: Option<u64>,
    data: Option<PathBuf>,
    out: &Path,
) -> anyhow::Result<u8> {
    let config = load_config(config_path, seed)?;
    let data = match &data {
        Some(p) => load_data(&config, p)?,
        None => make_dataset(&config)?,
    };
    let outcome = run_experiment(&config, data)?;
    write_artifact(out, "config.txt", &config.to_text())?;
    write_artifact(out, "metrics.csv", &metrics_csv(&outcome.metrics))?;
    write_artifact(out, "sweep.csv", &sweep_csv(&outcome.sweep_lm))?;
    write_artifact(out, "sweep_nolm.csv", &sweep_csv(&outcome.sweep_plain))?;
    write_artifact(out, "lm.arpa", &outcome.lm.to_arpa())?;
    let summary = format!("params = {}\n{}", outcome.model.num_params(), outcome.summary());
    write_artifact(out, "summary.txt", &summary)?;
    outcome.model.write_checkpoint().save(&out.join("model.ckpt"))?;
    print!("{summary}");
    Ok(0)
}

/// Rebuilds the model a config describes and loads trained weights.
fn load_model(config: &ExperimentConfig, ckpt: &Path) -> anyhow::Result<Model<f64>> {
    let alphabet = build_alphabet(config)?;
    let enc_config = EncoderConfig {
        k: config.enc_k,
        d_feat: config.d_feat,
        d_hidden: config.enc_hidden,
        d_proto: config.d_proto,
    };
    let mut model: Model<f64> = Model::new(
        alphabet,
        enc_config,
        ScorerKind::parse(&config.scoring)?,
        config.d_emb,
        config.cde_hidden,
        config.seed,
    );
    model.read_checkpoint(&Checkpoint::load(ckpt)?)?;
    Ok(model)
}

fn load_lm(config: &ExperimentConfig, path: &Path) -> anyhow::Result<NGramLM<f64>> {
    let base = base_alphabet(config)?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(NGramLM::from_arpa(&text, &base)?)
}

fn cmd_decode(
    config: &Path,
    ckpt: &Path,
    data: &Path,
    kappa: f64,
    lm: Option<PathBuf>,
    beam: Option<usize>,
    out: &Path,
) -> anyhow::Result<u8> {
    let config = load_config(config, None)?;
    let model = load_model(&config, ckpt)?;
    let dataset = load_data(&config, data)?;
    let lm = match &lm {
        Some(p) => Some(load_lm(&config, p)?),
        None => None,
    };
    let graph = decode_graph(&model.alphabet)?;
    let decode_config = DecodeConfig {
        kappa,
        beam,
        lm: lm.as_ref(),
    };
    let mut hyps = String::new();
    let mut pairs = Vec::with_capacity(dataset.len());
    for u in &dataset {
        let scores = model.scores(&u.features)?;
        let (hyp, _) = viterbi(&scores, &graph, &decode_config)?;
        hyps.push_str(&format!(
            "{}\t{}\n",
            u.name,
            model.alphabet.transcript_string(&hyp)
        ));
        pairs.push((hyp, u.transcript.clone()));
    }
    let cer = corpus_cer(&pairs);
    write_artifact(out, "hyps.txt", &hyps)?;
    write_artifact(out, "cer.txt", &format!("cer = {cer:.6}\n"))?;
    println!("cer = {cer:.6}");
    Ok(0)
}

fn cmd_sweep(
    config: &Path,
    ckpt: &Path,
    data: &Path,
    lm: Option<PathBuf>,
    out: &Path,
) -> anyhow::Result<u8> {
    let config = load_config(config, None)?;
    let model = load_model(&config, ckpt)?;
    let dataset = load_data(&config, data)?;
    let lm = match &lm {
        Some(p) => Some(load_lm(&config, p)?),
        None => None,
    };
    let rows = sweep(
        &model,
        &dataset,
        lm.as_ref(),
        &config.kappas,
        None,
        config.loss.name(),
    )?;
    write_artifact(out, "sweep.csv", &sweep_csv(&rows))?;
    let (kappa, cer) = best_kappa(&rows, config.loss.name()).expect("non-empty grid");
    println!("best kappa = {kappa}, cer = {cer:.6}");
    Ok(0)
}

/// Deterministic score filler shared by the check commands.
fn filled_scores(frames: usize, width: usize, salt: f64) -> ScoreMatrix<f64> {
    let mut s = ScoreMatrix::new(frames, width);
    let mut v = salt;
    for t in 0..frames {
        for l in 0..width as u32 {
            v = (v * 1.618 + 0.71).sin() * 2.0;
            s.set(t, l, v);
        }
    }
    s
}

fn cmd_grad_check(loss: &str, seed: u64, trials: usize) -> anyhow::Result<u8> {
    let loss = LossName::parse(loss)?;
    let base = cdctc::alphabet::build_ci_alphabet(&["a", "b"])?;
    let blank_mode = if loss == LossName::CtcGb {
        BlankMode::ContextDependent
    } else {
        BlankMode::Single
    };
    let a = build_bichar_alphabet(&base, blank_mode)?;
    let kind = loss.kind();
    let eps = 1e-5;
    let mut max_rel = 0.0f64;
    for trial in 0..trials {
        for y in [vec![1u32, 2], vec![1, 1]] {
            let frames = 4;
            let scores = filled_scores(frames, a.size(), seed as f64 + trial as f64 * 0.37);
            let r = ctc_loss(kind, &scores, &y, &a)?;
            for t in 0..frames {
                for l in a.usable_ids() {
                    let probe = |d: f64| -> anyhow::Result<f64> {
                        let mut s = scores.clone();
                        s.set(t, l, s.get(t, l) + d);
                        Ok(ctc_loss(kind, &s, &y, &a)?.loss)
                    };
                    let fd = (probe(eps)? - probe(-eps)?) / (2.0 * eps);
                    let an = r.grad.get(t, l as usize);
                    let rel = (fd - an).abs() / (fd.abs() + an.abs()).max(1e-8);
                    max_rel = max_rel.max(rel);
                }
            }
        }
    }
    println!("loss {} max relative error {max_rel:.3e}", loss.name());
    if max_rel > 1e-4 {
        println!("FAIL (tolerance 1e-4)");
        Ok(1)
    } else {
        println!("PASS (tolerance 1e-4)");
        Ok(0)
    }
}

fn language_triple_agrees(
    a: &CdAlphabet,
    y: &[u32],
    frames: usize,
) -> anyhow::Result<bool> {
    let pattern = pattern_language(a, y, frames)?;
    let graph = match numerator_graph(a, y) {
        Ok(g) => graph_language(&g, frames)?,
        Err(Error::NoAcceptingPath { .. }) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let spec = EnumerationSpec {
        alphabet: a,
        frames,
        validity: natural_validity(a),
        target: Some(y.to_vec()),
    };
    let brute = enumerate(&spec)?;
    Ok(pattern == graph && graph == brute)
}

fn cmd_oracle_check(seed: u64, cases: usize, frames: usize) -> anyhow::Result<u8> {
    let base = cdctc::alphabet::build_ci_alphabet(&["a", "b"])?;
    let topologies = [
        ("ci", base.clone()),
        ("bichar", build_bichar_alphabet(&base, BlankMode::Single)?),
        ("bichar-cd", build_bichar_alphabet(&base, BlankMode::ContextDependent)?),
    ];
    let transcripts: [&[u32]; 5] = [&[1], &[1, 2], &[2, 2], &[1, 2, 1], &[1, 2, 2, 1]];
    let mut failures = 0usize;
    for (name, a) in &topologies {
        let mut language_checks = 0usize;
        for y in transcripts {
            for t in 1..=frames {
                if !language_triple_agrees(a, y, t)? {
                    println!("{name}: language mismatch for {y:?} at {t} frames");
                    failures += 1;
                }
                language_checks += 1;
            }
        }
        let mut loss_checks = 0usize;
        for case in 0..cases {
            let y = transcripts[case % transcripts.len()];
            let t = y.len() + 1 + case % 2;
            let scores = filled_scores(t, a.size(), seed as f64 + case as f64 * 0.61);
            let (brute_local, brute_global) = brute_loss(&scores, a, y)?;
            let local = cdctc::loss::ctc_local(&scores, y, a)?.loss;
            let global = match a.blank_mode() {
                BlankMode::Single => cdctc::loss::ctc_global(&scores, y, a)?.loss,
                BlankMode::ContextDependent => {
                    cdctc::loss::ctc_global_blank(&scores, y, a)?.loss
                }
            };
            if (brute_local - local).abs() > 1e-9 || (brute_global - global).abs() > 1e-9 {
                println!("{name}: loss mismatch on case {case}");
                failures += 1;
            }
            loss_checks += 2;
        }
        println!("{name}: {language_checks} language checks, {loss_checks} loss checks");
    }
    if failures > 0 {
        println!("FAIL: {failures} disagreements");
        Ok(1)
    } else {
        println!("PASS: all agreements hold");
        Ok(0)
    }
}
