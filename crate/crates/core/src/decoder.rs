//! Viterbi decoding with an external character n-gram language model.
//!
//! A hypothesis is the best accepting path of exactly T arcs through a
//! decoding graph, scored as
//!
//! ```text
//! κ · Σ_t acoustic(t, ilabel_t)  +  Σ LM log-prob of each emitted symbol
//! ```
//!
//! so the language model sees one term per collapsed output symbol, applied
//! on the emitting arcs. Decoding runs over product states (graph state,
//! LM history). Ties resolve to the lowest graph state id, then the lowest
//! arc id, then the lexicographically smallest history.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::alphabet::{BaseId, CdAlphabet};
use crate::error::{Error, Result};
use crate::forward_backward::ScoreMatrix;
use crate::graph::{decode_graph, Fst};
use crate::model::{Model, Utterance};
use crate::scalar::Scalar;

/// Sentence-boundary token id inside LM histories. Base id 0 is the blank,
/// which never occurs in a transcript, so the slot is free.
pub const BOUNDARY: BaseId = 0;
pub const BOUNDARY_NAME: &str = "<s>";

/// Add-one smoothed character n-gram model with simple backoff: a history
/// seen in training predicts from its own add-one counts; an unseen
/// history defers to its shortened suffix. The predicted vocabulary is the
/// base alphabet; the boundary token appears only inside histories.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramLM<F> {
    order: usize,
    /// Printable name per history token id: blank slot holds the boundary.
    names: Vec<String>,
    /// tables[k]: histories of length k to full log conditional rows,
    /// indexed by predicted id - 1.
    tables: Vec<BTreeMap<Vec<BaseId>, Vec<F>>>,
}

impl<F: Scalar> NGramLM<F> {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of predictable symbols.
    pub fn vocab_size(&self) -> usize {
        self.names.len() - 1
    }

    /// log P(y | history). `history` holds the most recent symbols, oldest
    /// first; only the last `order - 1` matter.
    pub fn logp(&self, y: BaseId, history: &[BaseId]) -> F {
        assert!(y != BOUNDARY && (y as usize) < self.names.len(), "id {y} out of vocabulary");
        let keep = history.len().min(self.order - 1);
        let mut h = &history[history.len() - keep..];
        loop {
            if let Some(row) = self.tables[h.len()].get(h) {
                return row[y as usize - 1];
            }
            h = &h[1..];
        }
    }

    /// ARPA-style text: a counts header, then per level one line per
    /// n-gram holding the natural-log probability, the symbols, and a
    /// trailing 0 backoff weight on non-final levels.
    pub fn to_arpa(&self) -> String {
        let mut out = String::from("\\data\\\n");
        for k in 0..self.order {
            let count: usize = self.tables[k].len() * self.vocab_size();
            let _ = writeln!(out, "ngram {}={}", k + 1, count);
        }
        out.push('\n');
        for k in 0..self.order {
            let _ = writeln!(out, "\\{}-grams:", k + 1);
            for (hist, row) in &self.tables[k] {
                for (i, lp) in row.iter().enumerate() {
                    let _ = write!(out, "{:.16e}", lp.as_f64());
                    for &h in hist {
                        let _ = write!(out, "\t{}", self.names[h as usize]);
                    }
                    let _ = write!(out, "\t{}", self.names[i + 1]);
                    if k + 1 < self.order {
                        let _ = write!(out, "\t{:.16e}", 0.0);
                    }
                    out.push('\n');
                }
            }
        }
        out.push_str("\\end\\\n");
        out
    }

    pub fn from_arpa(text: &str, a: &CdAlphabet) -> Result<NGramLM<F>> {
        let mut names: Vec<String> = a.base_names().to_vec();
        names[BOUNDARY as usize] = BOUNDARY_NAME.to_string();
        let id_of = |name: &str| -> Result<BaseId> {
            names
                .iter()
                .position(|n| n == name)
                .map(|i| i as BaseId)
                .ok_or_else(|| Error::Parse(format!("unknown LM symbol {name:?}")))
        };
        let mut order = 0usize;
        let mut tables: Vec<BTreeMap<Vec<BaseId>, Vec<F>>> = Vec::new();
        let vocab = names.len() - 1;
        let mut level = 0usize;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line == "\\data\\" || line == "\\end\\" {
                continue;
            }
            if let Some(rest) = line.strip_prefix("ngram ") {
                let k: usize = rest
                    .split('=')
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Parse(format!("bad count line {line:?}")))?;
                order = order.max(k);
                tables.resize_with(order, BTreeMap::new);
                continue;
            }
            if line.starts_with('\\') && line.ends_with("-grams:") {
                level = line[1..line.len() - "-grams:".len()]
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad section {line:?}")))?
                    - 1;
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            // logp, `level` history names, predicted name, optional backoff.
            if fields.len() < level + 2 {
                return Err(Error::Parse(format!("short n-gram line {line:?}")));
            }
            let lp: f64 = fields[0]
                .parse()
                .map_err(|_| Error::Parse(format!("bad logprob in {line:?}")))?;
            let hist: Vec<BaseId> = fields[1..1 + level]
                .iter()
                .map(|n| id_of(n))
                .collect::<Result<_>>()?;
            let y = id_of(fields[1 + level])?;
            if y == BOUNDARY {
                return Err(Error::Parse("boundary cannot be predicted".into()));
            }
            let row = tables[level]
                .entry(hist)
                .or_insert_with(|| vec![F::neg_infinity(); vocab]);
            row[y as usize - 1] = F::from_f64(lp);
        }
        if order == 0 || tables[0].is_empty() {
            return Err(Error::Parse("LM text has no n-grams".into()));
        }
        Ok(NGramLM {
            order,
            names,
            tables,
        })
    }
}

/// Trains an add-one smoothed LM of the given order (2 or 3) on a
/// transcript corpus over `a`'s base alphabet.
pub fn train_char_lm<F: Scalar>(
    a: &CdAlphabet,
    corpus: &[Vec<BaseId>],
    order: usize,
) -> Result<NGramLM<F>> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if !(2..=3).contains(&order) {
        return Err(Error::Config(format!("LM order {order} not in 2..=3")));
    }
    let vocab = a.base_size() - 1;
    // counts[k][hist][y - 1], histories drawn from the padded transcripts.
    let mut counts: Vec<BTreeMap<Vec<BaseId>, Vec<u64>>> = vec![BTreeMap::new(); order];
    for y in corpus {
        for &c in y {
            assert!(c != BOUNDARY && (c as usize) < a.base_size(), "bad transcript id {c}");
        }
        let mut padded = vec![BOUNDARY; order - 1];
        padded.extend_from_slice(y);
        for i in 0..y.len() {
            let next = y[i] as usize - 1;
            for k in 0..order {
                let hist = padded[order - 1 + i - k..order - 1 + i].to_vec();
                let row = counts[k].entry(hist).or_insert_with(|| vec![0; vocab]);
                row[next] += 1;
            }
        }
    }
    let mut names: Vec<String> = a.base_names().to_vec();
    names[BOUNDARY as usize] = BOUNDARY_NAME.to_string();
    let tables = counts
        .into_iter()
        .map(|level| {
            level
                .into_iter()
                .map(|(hist, row)| {
                    let total: u64 = row.iter().sum();
                    let denom = (total + vocab as u64) as f64;
                    let probs = row
                        .iter()
                        .map(|&c| F::from_f64(((c + 1) as f64 / denom).ln()))
                        .collect();
                    (hist, probs)
                })
                .collect()
        })
        .collect();
    Ok(NGramLM {
        order,
        names,
        tables,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct DecodeConfig<'a, F> {
    /// Acoustic weight κ > 0.
    pub kappa: f64,
    /// Exact search when None.
    pub beam: Option<usize>,
    pub lm: Option<&'a NGramLM<F>>,
}

impl<'a, F> DecodeConfig<'a, F> {
    pub fn new(kappa: f64) -> Self {
        DecodeConfig {
            kappa,
            beam: None,
            lm: None,
        }
    }

    pub fn with_lm(mut self, lm: &'a NGramLM<F>) -> Self {
        self.lm = Some(lm);
        self
    }
}

struct Hyp<F> {
    score: F,
    /// Index into the previous layer, with the emitted symbol if any.
    back: Option<(usize, Option<BaseId>)>,
}

type ProductKey = (u32, Vec<BaseId>);

/// Best accepting path of exactly `scores.frames()` arcs; returns the
/// emitted transcript and the path score.
pub fn viterbi<F: Scalar>(
    scores: &ScoreMatrix<F>,
    graph: &Fst,
    config: &DecodeConfig<'_, F>,
) -> Result<(Vec<BaseId>, F)> {
    if !(config.kappa > 0.0 && config.kappa.is_finite()) {
        return Err(Error::Config(format!(
            "acoustic weight must be positive and finite, got {}",
            config.kappa
        )));
    }
    let kappa = F::from_f64(config.kappa);
    let frames = scores.frames();
    let hist_len = config.lm.map_or(0, |lm| lm.order() - 1);
    let start: ProductKey = (0, vec![BOUNDARY; hist_len]);
    // Sorted product states per layer; BTreeMap order plus first-writer-
    // wins on equal scores implements the documented tie-breaking.
    let mut layers: Vec<Vec<(ProductKey, Hyp<F>)>> = Vec::with_capacity(frames + 1);
    layers.push(vec![(
        start,
        Hyp {
            score: F::zero(),
            back: None,
        },
    )]);
    for t in 0..frames {
        let mut next: BTreeMap<ProductKey, Hyp<F>> = BTreeMap::new();
        for (idx, ((state, hist), hyp)) in layers[t].iter().enumerate() {
            for arc in graph.arcs_from(*state) {
                let acoustic = scores.get(t, arc.ilabel);
                if acoustic.is_nan() {
                    return Err(Error::NonFiniteScore {
                        t,
                        label: arc.ilabel as usize,
                    });
                }
                let mut score = hyp.score + kappa * acoustic + F::from_f64(arc.weight);
                let mut new_hist = hist.clone();
                let emit = (arc.olabel != 0).then_some(arc.olabel);
                if let (Some(lm), Some(y)) = (config.lm, emit) {
                    score = score + lm.logp(y, hist);
                    new_hist.rotate_left(1);
                    new_hist[hist_len - 1] = y;
                }
                if score == F::neg_infinity() {
                    continue;
                }
                let key = (arc.dst, new_hist);
                let entry = next.entry(key).or_insert(Hyp {
                    score: F::neg_infinity(),
                    back: None,
                });
                if score > entry.score {
                    entry.score = score;
                    entry.back = Some((idx, emit));
                }
            }
        }
        let mut layer: Vec<(ProductKey, Hyp<F>)> = next.into_iter().collect();
        if let Some(beam) = config.beam {
            if layer.len() > beam {
                // Keep the top `beam` scores; ties keep the smaller key.
                let mut order: Vec<usize> = (0..layer.len()).collect();
                order.sort_by(|&i, &j| {
                    layer[j]
                        .1
                        .score
                        .partial_cmp(&layer[i].1.score)
                        .unwrap()
                        .then(layer[i].0.cmp(&layer[j].0))
                });
                let mut keep = vec![false; layer.len()];
                for &i in order.iter().take(beam) {
                    keep[i] = true;
                }
                let mut flags = keep.into_iter();
                layer.retain(|_| flags.next().unwrap());
            }
        }
        if layer.is_empty() {
            return Err(Error::NoAcceptingPath { frames });
        }
        layers.push(layer);
    }
    let mut best: Option<(usize, F)> = None;
    for (idx, ((state, _), hyp)) in layers[frames].iter().enumerate() {
        let fw = graph.final_weight(*state);
        if !fw.is_finite() {
            continue;
        }
        let s = hyp.score + F::from_f64(fw);
        if best.map_or(true, |(_, b)| s > b) {
            best = Some((idx, s));
        }
    }
    let (mut idx, score) = best.ok_or(Error::NoAcceptingPath { frames })?;
    let mut emitted = Vec::new();
    for t in (1..=frames).rev() {
        let (prev, emit) = layers[t][idx].1.back.expect("non-start layers have backpointers");
        if let Some(y) = emit {
            emitted.push(y);
        }
        idx = prev;
    }
    emitted.reverse();
    Ok((emitted, score))
}

/// Levenshtein distance between two symbol sequences.
pub fn levenshtein(a: &[BaseId], b: &[BaseId]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Character error rate of one hypothesis against its reference.
pub fn error_rate(hyp: &[BaseId], reference: &[BaseId]) -> f64 {
    let d = levenshtein(hyp, reference);
    if reference.is_empty() {
        return if d == 0 { 0.0 } else { f64::INFINITY };
    }
    d as f64 / reference.len() as f64
}

/// Corpus-level CER: total edit distance over total reference length.
pub fn corpus_cer(pairs: &[(Vec<BaseId>, Vec<BaseId>)]) -> f64 {
    let dist: usize = pairs.iter().map(|(h, r)| levenshtein(h, r)).sum();
    let len: usize = pairs.iter().map(|(_, r)| r.len()).sum();
    if len == 0 {
        return if dist == 0 { 0.0 } else { f64::INFINITY };
    }
    dist as f64 / len as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub loss_kind: String,
    pub kappa: f64,
    pub cer: f64,
}

/// Decodes the dev set once per κ and reports corpus CER rows.
pub fn sweep<F: Scalar>(
    model: &Model<F>,
    dev: &[Utterance<F>],
    lm: Option<&NGramLM<F>>,
    kappas: &[f64],
    beam: Option<usize>,
    loss_kind: &str,
) -> Result<Vec<SweepRow>> {
    if kappas.is_empty() {
        return Err(Error::Config("empty acoustic weight grid".into()));
    }
    let graph = decode_graph(&model.alphabet)?;
    let scored: Vec<(ScoreMatrix<F>, &[BaseId])> = dev
        .iter()
        .map(|u| Ok((model.scores(&u.features)?, u.transcript.as_slice())))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(kappas.len());
    for &kappa in kappas {
        let mut pairs = Vec::with_capacity(dev.len());
        for (scores, reference) in &scored {
            let config = DecodeConfig {
                kappa,
                beam,
                lm,
            };
            let (hyp, _) = viterbi(scores, &graph, &config)?;
            pairs.push((hyp, reference.to_vec()));
        }
        rows.push(SweepRow {
            loss_kind: loss_kind.to_string(),
            kappa,
            cer: corpus_cer(&pairs),
        });
    }
    Ok(rows)
}

/// `loss_kind,kappa,cer` CSV.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("loss_kind,kappa,cer\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:.6}", r.loss_kind, r.kappa, r.cer);
    }
    out
}

/// Lowest-CER κ for one loss kind; ties go to the smaller κ.
pub fn best_kappa(rows: &[SweepRow], loss_kind: &str) -> Option<(f64, f64)> {
    rows.iter()
        .filter(|r| r.loss_kind == loss_kind)
        .fold(None, |best, r| match best {
            Some((_, cer)) if cer <= r.cer => best,
            _ => Some((r.kappa, r.cer)),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::{build_bichar_alphabet, build_ci_alphabet, BlankMode};
    use crate::graph::numerator_graph;

    fn ab() -> CdAlphabet {
        build_ci_alphabet(&["a", "b"]).unwrap()
    }

    #[test]
    fn add_one_formula_on_tiny_corpus() {
        let a = ab();
        let lm: NGramLM<f64> = train_char_lm(&a, &[vec![1, 2]], 2).unwrap();
        // P(b|a) = (1+1)/(1+2).
        assert!((lm.logp(2, &[1]) - (2f64 / 3.0).ln()).abs() < 1e-12);
        // P(a|a) = (0+1)/(1+2).
        assert!((lm.logp(1, &[1]) - (1f64 / 3.0).ln()).abs() < 1e-12);
        // Unseen history b backs off to the unigram: P(a) = (1+1)/(2+2).
        assert!((lm.logp(1, &[2]) - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_symbol_vocab_is_certain() {
        let a = build_ci_alphabet(&["a"]).unwrap();
        let lm: NGramLM<f64> = train_char_lm(&a, &[vec![1, 1, 1]], 2).unwrap();
        assert_eq!(lm.logp(1, &[1]), 0.0);
        assert_eq!(lm.logp(1, &[BOUNDARY]), 0.0);
    }

    #[test]
    fn conditionals_sum_to_one_for_every_history() {
        let a = ab();
        let corpus = vec![vec![1, 2, 2, 1], vec![2, 1], vec![1, 1, 2]];
        for order in [2, 3] {
            let lm: NGramLM<f64> = train_char_lm(&a, &corpus, order).unwrap();
            let tokens = [BOUNDARY, 1, 2];
            let mut histories: Vec<Vec<u32>> = tokens.iter().map(|&t| vec![t]).collect();
            if order == 3 {
                for &x in &tokens {
                    for &y in &tokens {
                        histories.push(vec![x, y]);
                    }
                }
            }
            for h in histories {
                let sum: f64 = (1..=2).map(|y| lm.logp(y, &h).exp()).sum();
                assert!((sum - 1.0).abs() < 1e-6, "order {order} history {h:?}: {sum}");
            }
        }
    }

    #[test]
    fn arpa_round_trip() {
        let a = ab();
        let lm: NGramLM<f64> = train_char_lm(&a, &[vec![1, 2, 1], vec![2, 2]], 3).unwrap();
        let text = lm.to_arpa();
        assert!(text.starts_with("\\data\\\n"));
        assert!(text.contains("\\3-grams:"));
        let back = NGramLM::<f64>::from_arpa(&text, &a).unwrap();
        assert_eq!(lm, back);
        assert_eq!(back.to_arpa(), text);
    }

    fn one_hot(frames: usize, width: usize, path: &[u32], hot: f64) -> ScoreMatrix<f64> {
        assert_eq!(path.len(), frames);
        let mut s = ScoreMatrix::new(frames, width);
        for (t, &l) in path.iter().enumerate() {
            s.set(t, l, hot);
        }
        s
    }

    #[test]
    fn one_hot_path_is_recovered_for_any_kappa() {
        let a = ab();
        let g = decode_graph(&a).unwrap();
        // a ∅ b b → "ab"
        let s = one_hot(4, 3, &[1, 0, 2, 2], 8.0);
        for kappa in [0.05, 1.0, 1e6] {
            let (hyp, _) = viterbi(&s, &g, &DecodeConfig::new(kappa)).unwrap();
            assert_eq!(hyp, vec![1, 2], "kappa {kappa}");
        }
    }

    #[test]
    fn huge_kappa_matches_lm_free_decoding() {
        let a = ab();
        let g = decode_graph(&a).unwrap();
        let lm: NGramLM<f64> = train_char_lm(&a, &[vec![1, 2], vec![2, 1, 1]], 2).unwrap();
        let mut s = ScoreMatrix::new(5, 3);
        let mut v: f64 = 0.23;
        for t in 0..5 {
            for l in 0..3u32 {
                v = (v * 1.7 + 0.9).sin();
                s.set(t, l, v);
            }
        }
        let (plain, _) = viterbi(&s, &g, &DecodeConfig::new(1.0)).unwrap();
        let config = DecodeConfig::new(1e6).with_lm(&lm);
        let (huge, _) = viterbi(&s, &g, &config).unwrap();
        assert_eq!(plain, huge);
    }

    #[test]
    fn ties_prefer_the_lowest_state() {
        let a = ab();
        let g = decode_graph(&a).unwrap();
        // Blank penalized; a and b tie exactly. State 1 (a) wins over 2.
        let mut s = ScoreMatrix::new(1, 3);
        s.set(0, 0, -1.0);
        let (hyp, _) = viterbi(&s, &g, &DecodeConfig::new(1.0)).unwrap();
        assert_eq!(hyp, vec![1]);
        // All-equal scores: the blank path through state 0 wins.
        let s = ScoreMatrix::<f64>::new(2, 3);
        let (hyp, _) = viterbi(&s, &g, &DecodeConfig::new(1.0)).unwrap();
        assert_eq!(hyp, Vec::<u32>::new());
    }

    #[test]
    fn numerator_graph_decodes_its_own_transcript() {
        let ci = ab();
        let bi = build_bichar_alphabet(&ci, BlankMode::Single).unwrap();
        let y = vec![1, 2, 2, 1];
        let g = numerator_graph(&bi, &y).unwrap();
        // Valid alignment: ∅a ab ∅ bb ba.
        let s = one_hot(5, bi.size(), &[1, 5, 0, 8, 7], 4.0);
        let (hyp, _) = viterbi(&s, &g, &DecodeConfig::new(0.7)).unwrap();
        assert_eq!(error_rate(&hyp, &y), 0.0);
    }

    #[test]
    fn path_score_is_convex_in_kappa() {
        let a = ab();
        let g = decode_graph(&a).unwrap();
        // Non-negative scores make the best path score monotone in κ.
        let mut s = ScoreMatrix::new(4, 3);
        let mut v: f64 = 0.4;
        for t in 0..4 {
            for l in 0..3u32 {
                v = (v * 1.3 + 0.7).sin().abs();
                s.set(t, l, v);
            }
        }
        let (_, lo) = viterbi(&s, &g, &DecodeConfig::new(0.5)).unwrap();
        let (_, hi) = viterbi(&s, &g, &DecodeConfig::new(2.0)).unwrap();
        assert!(hi >= lo);
    }

    #[test]
    fn beam_one_is_greedy_but_still_accepting() {
        let a = ab();
        let g = decode_graph(&a).unwrap();
        let s = one_hot(3, 3, &[1, 1, 2], 3.0);
        let mut config = DecodeConfig::new(1.0);
        config.beam = Some(1);
        let (hyp, _) = viterbi(&s, &g, &config).unwrap();
        assert_eq!(hyp, vec![1, 2]);
    }

    #[test]
    fn kappa_must_be_positive() {
        let a = ab();
        let g = decode_graph(&a).unwrap();
        let s = ScoreMatrix::<f64>::new(1, 3);
        assert!(viterbi(&s, &g, &DecodeConfig::new(0.0)).is_err());
        assert!(viterbi(&s, &g, &DecodeConfig::new(-1.0)).is_err());
    }

    #[test]
    fn error_rate_examples() {
        assert_eq!(error_rate(&[1, 2], &[1, 2]), 0.0);
        assert_eq!(error_rate(&[2], &[1, 2]), 0.5);
        assert_eq!(error_rate(&[], &[1, 2]), 1.0);
        assert_eq!(corpus_cer(&[(vec![1], vec![1]), (vec![], vec![2, 2])]), 2.0 / 3.0);
    }

    #[test]
    fn sweep_csv_golden() {
        let rows = vec![
            SweepRow {
                loss_kind: "local".into(),
                kappa: 0.5,
                cer: 0.25,
            },
            SweepRow {
                loss_kind: "local".into(),
                kappa: 1.0,
                cer: 0.125,
            },
        ];
        assert_eq!(
            sweep_csv(&rows),
            "loss_kind,kappa,cer\nlocal,0.5,0.250000\nlocal,1,0.125000\n"
        );
        assert_eq!(best_kappa(&rows, "local"), Some((1.0, 0.125)));
        assert_eq!(best_kappa(&rows, "global"), None);
    }
}
