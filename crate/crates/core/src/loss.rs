//! Training losses over extended-string topologies.
//!
//! All three losses share the same skeleton: a numerator summing the
//! extended strings that collapse to the transcript, against a normalizer.
//! They differ in where the normalizer comes from and whether context
//! consistency is enforced:
//!
//! * [`ctc_local`] normalizes per frame with a softmax over usable symbols
//!   and sums the whole collapse preimage, contextually broken strings
//!   included.
//! * [`ctc_global`] normalizes once per utterance by the sum over all
//!   consistent extended strings, and restricts the numerator to the
//!   consistent preimage.
//! * [`ctc_global_blank`] is the global loss over an alphabet whose blanks
//!   carry their left context.
//!
//! Gradients are with respect to the raw log-domain scores.

use crate::alphabet::{BaseId, BlankMode, CdAlphabet};
use crate::error::{Error, Result};
use crate::forward_backward::{forward_backward, ScoreMatrix};
use crate::graph::{decode_graph, free_numerator_graph, numerator_graph, Fst};
use crate::mat::Mat;
use crate::scalar::{log_sum_exp, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Local,
    Global,
    GlobalBlank,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Local => "local",
            LossKind::Global => "global",
            LossKind::GlobalBlank => "global-blank",
        }
    }

    pub fn parse(s: &str) -> Result<LossKind> {
        match s {
            "local" => Ok(LossKind::Local),
            "global" => Ok(LossKind::Global),
            "global-blank" => Ok(LossKind::GlobalBlank),
            other => Err(Error::Config(format!(
                "unknown loss {other:?}, expected local, global or global-blank"
            ))),
        }
    }
}

/// Loss value and its gradient with respect to every score entry.
#[derive(Debug, Clone)]
pub struct LossResult<F> {
    pub loss: F,
    /// frames × width; rows of unusable columns stay zero.
    pub grad: Mat<F>,
}

fn check_width<F: Scalar>(scores: &ScoreMatrix<F>, a: &CdAlphabet) -> Result<()> {
    if scores.width() != a.size() {
        return Err(Error::DimMismatch(format!(
            "score width {} does not match alphabet size {}",
            scores.width(),
            a.size()
        )));
    }
    Ok(())
}

/// Locally normalized CTC. Per frame, scores become log-probabilities via
/// a softmax over the usable symbols; the loss is the negative log of the
/// summed probability of every extended string collapsing to `transcript`.
pub fn ctc_local<F: Scalar>(
    scores: &ScoreMatrix<F>,
    transcript: &[BaseId],
    a: &CdAlphabet,
) -> Result<LossResult<F>> {
    check_width(scores, a)?;
    let usable: Vec<u32> = a.usable_ids().collect();
    let frames = scores.frames();
    // Per-frame softmax over usable columns, everything else silenced.
    let mut probs = Mat::<F>::zeros(frames, a.size());
    let mut normalized = ScoreMatrix::new(frames, a.size());
    for t in 0..frames {
        for l in 0..a.size() as u32 {
            normalized.set(t, l, F::neg_infinity());
        }
        let vals: Vec<F> = usable.iter().map(|&l| scores.get(t, l)).collect();
        for (&l, &v) in usable.iter().zip(&vals) {
            if v.is_nan() || (v.is_infinite() && v > F::zero()) {
                return Err(Error::NonFiniteScore {
                    t,
                    label: l as usize,
                });
            }
        }
        let z = log_sum_exp(&vals);
        for &l in &usable {
            let lp = scores.get(t, l) - z;
            normalized.set(t, l, lp);
            probs.set(t, l as usize, lp.exp());
        }
    }
    let num = free_numerator_graph(a, transcript)?;
    let post = forward_backward(&num, &normalized)?;
    let mut grad = probs;
    for t in 0..frames {
        for &l in &usable {
            let g = grad.get(t, l as usize) - post.occupancy.get(t, l as usize);
            grad.set(t, l as usize, g);
        }
    }
    Ok(LossResult {
        loss: -post.log_total,
        grad,
    })
}

fn global_over<F: Scalar>(
    scores: &ScoreMatrix<F>,
    num: &Fst,
    den: &Fst,
) -> Result<LossResult<F>> {
    let num_post = forward_backward(num, scores)?;
    let den_post = forward_backward(den, scores)?;
    let mut grad = den_post.occupancy;
    grad.sub_assign(&num_post.occupancy);
    Ok(LossResult {
        loss: den_post.log_total - num_post.log_total,
        grad,
    })
}

/// Globally normalized CTC: the probability of the transcript is the path
/// sum of its consistent preimage over the path sum of every consistent
/// extended string of the same length.
pub fn ctc_global<F: Scalar>(
    scores: &ScoreMatrix<F>,
    transcript: &[BaseId],
    a: &CdAlphabet,
) -> Result<LossResult<F>> {
    check_width(scores, a)?;
    if a.blank_mode() != BlankMode::Single {
        return Err(Error::WrongBlankMode("single"));
    }
    let num = numerator_graph(a, transcript)?;
    let den = decode_graph(a)?;
    global_over(scores, &num, &den)
}

/// Globally normalized CTC with context-dependent blanks. Identical to
/// [`ctc_global`] except every blank region must use the blank variant of
/// its left context, on both sides of the ratio.
pub fn ctc_global_blank<F: Scalar>(
    scores: &ScoreMatrix<F>,
    transcript: &[BaseId],
    a: &CdAlphabet,
) -> Result<LossResult<F>> {
    check_width(scores, a)?;
    if a.blank_mode() != BlankMode::ContextDependent {
        return Err(Error::WrongBlankMode("context-dependent"));
    }
    let num = numerator_graph(a, transcript)?;
    let den = decode_graph(a)?;
    global_over(scores, &num, &den)
}

/// Dispatch by kind.
pub fn ctc_loss<F: Scalar>(
    kind: LossKind,
    scores: &ScoreMatrix<F>,
    transcript: &[BaseId],
    a: &CdAlphabet,
) -> Result<LossResult<F>> {
    match kind {
        LossKind::Local => ctc_local(scores, transcript, a),
        LossKind::Global => ctc_global(scores, transcript, a),
        LossKind::GlobalBlank => ctc_global_blank(scores, transcript, a),
    }
}

/// Mean loss over a batch, with per-utterance gradients scaled by 1/N.
pub fn batch_loss<F: Scalar>(
    kind: LossKind,
    items: &[(&ScoreMatrix<F>, &[BaseId])],
    a: &CdAlphabet,
) -> Result<(F, Vec<Mat<F>>)> {
    if items.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let scale = F::from_f64(1.0 / items.len() as f64);
    let mut total = F::zero();
    let mut grads = Vec::with_capacity(items.len());
    for (scores, transcript) in items {
        let mut r = ctc_loss(kind, scores, transcript, a)?;
        total = total + r.loss * scale;
        r.grad.scale(scale);
        grads.push(r.grad);
    }
    Ok((total, grads))
}
