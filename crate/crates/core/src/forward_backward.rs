//! Log-domain forward-backward over an unrolled automaton.
//!
//! Scores enter as a frames × width matrix of log-domain acoustic scores,
//! one column per symbol id. Arcs consume one frame each, so the score of
//! a path is the sum of arc weights plus the score of each arc's input
//! label at its frame. `log_total` sums all accepting paths;
//! `forward_backward` additionally returns the per-frame symbol occupancy,
//! which is the derivative of the path sum with respect to each score
//! entry.

use crate::error::{Error, Result};
use crate::graph::{unroll, Fst};
use crate::mat::Mat;
use crate::scalar::{log_add, Scalar};

/// Frames × width score matrix in log domain, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix<F> {
    frames: usize,
    width: usize,
    data: Vec<F>,
}

impl<F: Scalar> ScoreMatrix<F> {
    pub fn new(frames: usize, width: usize) -> Self {
        ScoreMatrix {
            frames,
            width,
            data: vec![F::zero(); frames * width],
        }
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let frames = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(frames * width);
        for r in rows {
            if r.len() != width {
                return Err(Error::DimMismatch(format!(
                    "score row has {} entries, expected {width}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(ScoreMatrix {
            frames,
            width,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, t: usize, label: u32) -> F {
        self.data[t * self.width + label as usize]
    }

    pub fn set(&mut self, t: usize, label: u32, value: F) {
        self.data[t * self.width + label as usize] = value;
    }

    pub fn row(&self, t: usize) -> &[F] {
        &self.data[t * self.width..(t + 1) * self.width]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [F] {
        &mut self.data[t * self.width..(t + 1) * self.width]
    }
}

/// Output of [`forward_backward`].
#[derive(Debug, Clone)]
pub struct Posterior<F> {
    /// Log-sum over all accepting paths.
    pub log_total: F,
    /// frames × width matrix of occupancy probabilities; row t sums to 1
    /// and entry (t, l) is d log_total / d score(t, l).
    pub occupancy: Mat<F>,
}

/// Validates that every score the trellis can touch is not NaN or +inf.
/// -inf is allowed and simply removes the paths through that entry.
fn check_score<F: Scalar>(v: F, t: usize, label: u32) -> Result<F> {
    if v.is_nan() || (v.is_infinite() && v > F::zero()) {
        Err(Error::NonFiniteScore {
            t,
            label: label as usize,
        })
    } else {
        Ok(v)
    }
}

fn layer_mask(layer: &[u32], n: usize, mask: &mut Vec<bool>) {
    mask.clear();
    mask.resize(n, false);
    for &s in layer {
        mask[s as usize] = true;
    }
}

/// Log-sum of all paths of exactly `scores.frames()` arcs from the start
/// state to a final state.
pub fn log_total<F: Scalar>(fst: &Fst, scores: &ScoreMatrix<F>) -> Result<F> {
    let alpha = forward_pass(fst, scores)?;
    Ok(alpha.total)
}

struct ForwardResult<F> {
    /// alpha[t][state], -inf for dead entries. Layer count frames + 1.
    layers: Vec<Vec<F>>,
    active: Vec<Vec<u32>>,
    total: F,
}

fn forward_pass<F: Scalar>(fst: &Fst, scores: &ScoreMatrix<F>) -> Result<ForwardResult<F>> {
    let trellis = unroll(fst, scores.frames())?;
    let n = fst.num_states() as usize;
    let neg_inf = F::neg_infinity();
    let mut layers = vec![vec![neg_inf; n]; scores.frames() + 1];
    layers[0][0] = F::zero();
    let mut mask = Vec::new();
    for t in 0..scores.frames() {
        layer_mask(&trellis.active[t + 1], n, &mut mask);
        let (cur, rest) = layers.split_at_mut(t + 1);
        let cur = &cur[t];
        let next = &mut rest[0];
        for &s in &trellis.active[t] {
            let a = cur[s as usize];
            if a == neg_inf {
                continue;
            }
            for arc in fst.arcs_from(s) {
                if !mask[arc.dst as usize] {
                    continue;
                }
                let sc = check_score(scores.get(t, arc.ilabel), t, arc.ilabel)?;
                let v = a + F::from_f64(arc.weight) + sc;
                let slot = &mut next[arc.dst as usize];
                *slot = log_add(*slot, v);
            }
        }
    }
    let mut total = neg_inf;
    for &s in &trellis.active[scores.frames()] {
        let fw = fst.final_weight(s);
        if fw.is_finite() {
            total = log_add(total, layers[scores.frames()][s as usize] + F::from_f64(fw));
        }
    }
    Ok(ForwardResult {
        layers,
        active: trellis.active,
        total,
    })
}

/// Full forward-backward: path sum plus occupancy. Requires the path sum
/// to be finite, since occupancy conditions on it.
pub fn forward_backward<F: Scalar>(fst: &Fst, scores: &ScoreMatrix<F>) -> Result<Posterior<F>> {
    let fwd = forward_pass(fst, scores)?;
    let frames = scores.frames();
    if !fwd.total.is_finite() {
        return Err(Error::NoAcceptingPath { frames });
    }
    let n = fst.num_states() as usize;
    let neg_inf = F::neg_infinity();
    let mut occupancy = Mat::zeros(frames, scores.width());

    let mut beta = vec![neg_inf; n];
    for &s in &fwd.active[frames] {
        let fw = fst.final_weight(s);
        if fw.is_finite() {
            beta[s as usize] = F::from_f64(fw);
        }
    }
    let mut mask = Vec::new();
    for t in (0..frames).rev() {
        layer_mask(&fwd.active[t + 1], n, &mut mask);
        let mut prev = vec![neg_inf; n];
        for &s in &fwd.active[t] {
            let a = fwd.layers[t][s as usize];
            let mut acc = neg_inf;
            for arc in fst.arcs_from(s) {
                if !mask[arc.dst as usize] {
                    continue;
                }
                let b = beta[arc.dst as usize];
                if b == neg_inf {
                    continue;
                }
                let sc = scores.get(t, arc.ilabel);
                let step = F::from_f64(arc.weight) + sc + b;
                acc = log_add(acc, step);
                if a != neg_inf {
                    let p = (a + step - fwd.total).exp();
                    occupancy.add_at(t, arc.ilabel as usize, p);
                }
            }
            prev[s as usize] = acc;
        }
        beta = prev;
    }
    Ok(Posterior {
        log_total: fwd.total,
        occupancy,
    })
}
