//! Synthetic utterances with controllable left-context coarticulation.
//!
//! Each base symbol owns a feature template. A symbol instance occupies a
//! sampled number of frames, every frame being
//!
//! ```text
//! template[c] + α · template[left neighbor] + N(0, σ²)
//! ```
//!
//! with no shift on the first symbol. At α = 0 symbols are context-free
//! and a context-independent model suffices; raising α makes the frames of
//! a symbol depend on what preceded it.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::alphabet::{BaseId, CdAlphabet};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::model::Utterance;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub samples: usize,
    /// Transcript length bounds, inclusive.
    pub len_range: (usize, usize),
    /// Frames per symbol instance, inclusive.
    pub dur_range: (usize, usize),
    /// Left-neighbor coarticulation strength.
    pub alpha: f64,
    /// Frame noise scale.
    pub sigma: f64,
    /// Forbid immediately repeated symbols in sampled transcripts.
    pub no_repeat: bool,
    /// Probability mass steered to the cyclic successor of the previous
    /// symbol; 0 samples transitions uniformly.
    pub bias: f64,
    /// One row per base symbol, indexed by id - 1.
    pub templates: Mat<f64>,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self, a: &CdAlphabet) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.to_string()))
            }
        };
        check(self.samples > 0, "samples must be positive")?;
        check(
            self.len_range.0 >= 1 && self.len_range.0 <= self.len_range.1,
            "transcript length range must satisfy 1 <= lo <= hi",
        )?;
        check(
            self.dur_range.0 >= 1 && self.dur_range.0 <= self.dur_range.1,
            "duration range must satisfy 1 <= lo <= hi",
        )?;
        check(self.alpha >= 0.0, "coarticulation strength must be >= 0")?;
        check(self.sigma >= 0.0, "noise scale must be >= 0")?;
        check(
            !(self.no_repeat && a.base_size() < 3),
            "no_repeat needs at least two base symbols",
        )?;
        check(
            (0.0..1.0).contains(&self.bias),
            "bias must lie in [0, 1)",
        )?;
        check(
            self.templates.rows() == a.base_size() - 1,
            "one template row per non-blank base symbol required",
        )
    }
}

/// Well-separated deterministic templates: a one-hot direction per symbol
/// (cycling when d_feat < n) plus a small symbol-specific ripple.
pub fn default_templates(n_symbols: usize, d_feat: usize) -> Mat<f64> {
    assert!(n_symbols > 0 && d_feat > 0);
    let mut t = Mat::zeros(n_symbols, d_feat);
    for s in 0..n_symbols {
        let row = t.row_mut(s);
        row[s % d_feat] += 2.0;
        for (j, v) in row.iter_mut().enumerate() {
            *v += 0.3 * ((s + 1) as f64 * (j + 1) as f64).sin();
        }
    }
    t
}

/// Noise-free rendering of one transcript: per-symbol durations, template
/// plus α-scaled left-neighbor template.
pub fn render(
    templates: &Mat<f64>,
    transcript: &[BaseId],
    durations: &[usize],
    alpha: f64,
) -> Mat<f64> {
    assert_eq!(transcript.len(), durations.len());
    let frames: usize = durations.iter().sum();
    let d = templates.cols();
    let mut out = Mat::zeros(frames, d);
    let mut t = 0;
    for (i, (&c, &dur)) in transcript.iter().zip(durations).enumerate() {
        let center = templates.row(c as usize - 1);
        let left = (i > 0).then(|| templates.row(transcript[i - 1] as usize - 1));
        for _ in 0..dur {
            let row = out.row_mut(t);
            for j in 0..d {
                row[j] = center[j] + alpha * left.map_or(0.0, |l| l[j]);
            }
            t += 1;
        }
    }
    out
}

/// Draws `spec.samples` utterances over `a`'s base alphabet. Per
/// utterance, in order: length, symbols, durations, then frame noise, all
/// from one seeded stream.
pub fn synth<F: Scalar>(a: &CdAlphabet, spec: &SynthSpec) -> Result<Vec<Utterance<F>>> {
    spec.validate(a)?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let n = a.base_size() as u32 - 1;
    let mut out = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let len = rng.gen_range(spec.len_range.0..=spec.len_range.1);
        let mut transcript: Vec<BaseId> = Vec::with_capacity(len);
        for _ in 0..len {
            let c = match transcript.last() {
                Some(&prev) if spec.bias > 0.0 && rng.gen_bool(spec.bias) => {
                    prev % n + 1
                }
                // Draw from the other n - 1 symbols by shifting past prev.
                Some(&prev) if spec.no_repeat => {
                    let r = rng.gen_range(1..n);
                    if r >= prev {
                        r + 1
                    } else {
                        r
                    }
                }
                _ => rng.gen_range(1..=n),
            };
            transcript.push(c);
        }
        let durations: Vec<usize> = (0..len)
            .map(|_| rng.gen_range(spec.dur_range.0..=spec.dur_range.1))
            .collect();
        let clean = render(&spec.templates, &transcript, &durations, spec.alpha);
        let mut features = Mat::zeros(clean.rows(), clean.cols());
        for t in 0..clean.rows() {
            for j in 0..clean.cols() {
                let noise: f64 = rng.sample(StandardNormal);
                features.set(t, j, F::from_f64(clean.get(t, j) + spec.sigma * noise));
            }
        }
        out.push(Utterance {
            name: format!("synth-{i:04}"),
            features,
            transcript,
        });
    }
    Ok(out)
}

/// Text dataset format: one `utt <name> <transcript>` line, then one line
/// of tab-separated features per frame, then a blank line.
pub fn write_dataset<F: Scalar>(a: &CdAlphabet, data: &[Utterance<F>]) -> String {
    let mut out = String::new();
    for u in data {
        let _ = writeln!(out, "utt {} {}", u.name, a.transcript_string(&u.transcript));
        for t in 0..u.features.rows() {
            let row = u.features.row(t);
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push('\t');
                }
                let _ = write!(out, "{:.16e}", v.as_f64());
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

pub fn read_dataset<F: Scalar>(a: &CdAlphabet, text: &str) -> Result<Vec<Utterance<F>>> {
    let mut out = Vec::new();
    let mut header: Option<(String, Vec<BaseId>)> = None;
    let mut rows: Vec<Vec<F>> = Vec::new();
    let mut flush = |header: &mut Option<(String, Vec<BaseId>)>,
                     rows: &mut Vec<Vec<F>>|
     -> Result<()> {
        if let Some((name, transcript)) = header.take() {
            let d = rows.first().map_or(0, Vec::len);
            if rows.is_empty() || rows.iter().any(|r| r.len() != d) {
                return Err(Error::Parse(format!("utterance {name}: ragged feature rows")));
            }
            let mut features = Mat::zeros(rows.len(), d);
            for (t, r) in rows.iter().enumerate() {
                features.row_mut(t).copy_from_slice(r);
            }
            rows.clear();
            out.push(Utterance {
                name,
                features,
                transcript,
            });
        }
        Ok(())
    };
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("utt ") {
            flush(&mut header, &mut rows)?;
            let (name, transcript) = rest
                .split_once(' ')
                .ok_or_else(|| Error::Parse(format!("bad utterance header {line:?}")))?;
            header = Some((name.to_string(), a.parse_transcript(transcript)?));
        } else if line.is_empty() {
            flush(&mut header, &mut rows)?;
        } else {
            if header.is_none() {
                return Err(Error::Parse(format!("feature row before any header: {line:?}")));
            }
            let row = line
                .split('\t')
                .map(|v| {
                    v.parse::<f64>()
                        .map(F::from_f64)
                        .map_err(|_| Error::Parse(format!("bad feature value {v:?}")))
                })
                .collect::<Result<Vec<F>>>()?;
            rows.push(row);
        }
    }
    flush(&mut header, &mut rows)?;
    if out.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(out)
}
