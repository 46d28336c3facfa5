//! Toy acoustic model and optimizer.
//!
//! The encoder maps each frame's zero-padded feature window of width
//! `(2k+1)·d_feat` through two affine+ReLU layers into `d_proto`
//! dimensions. A frame's score for symbol l is the dot product of its
//! encoding with the symbol's prototype, so the unnormalized score
//! `O(t,l) = exp(hidden_t · proto_l)` is positive by construction and the
//! score matrix we hand the losses holds its logarithm. Prototypes come
//! either from a free look-up table or from the embedding network, which
//! is trained jointly with the encoder.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::alphabet::{BaseId, BlankMode, CdAlphabet, CdSymbol};
use crate::cde::{cde_backward, cde_forward, lookup_table, CdeConfig, CdeParams, PrototypeTable};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::forward_backward::ScoreMatrix;
use crate::loss::{ctc_loss, LossKind};
use crate::mat::{dot, Mat};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    /// Window radius: frame t sees frames t-k..=t+k.
    pub k: usize,
    pub d_feat: usize,
    pub d_hidden: usize,
    pub d_proto: usize,
}

impl EncoderConfig {
    pub fn window(&self) -> usize {
        (2 * self.k + 1) * self.d_feat
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<F> {
    pub config: EncoderConfig,
    pub w1: Mat<F>,
    pub b1: Vec<F>,
    pub w2: Mat<F>,
    pub b2: Vec<F>,
}

fn uniform_block<F: Scalar>(rng: &mut ChaCha20Rng, len: usize, fan_in: usize) -> Vec<F> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..len)
        .map(|_| F::from_f64(rng.gen_range(-bound..bound)))
        .collect()
}

impl<F: Scalar> Encoder<F> {
    pub fn init(config: EncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let win = config.window();
        Encoder {
            config,
            w1: Mat::from_vec(
                config.d_hidden,
                win,
                uniform_block(&mut rng, config.d_hidden * win, win),
            ),
            b1: uniform_block(&mut rng, config.d_hidden, win),
            w2: Mat::from_vec(
                config.d_proto,
                config.d_hidden,
                uniform_block(&mut rng, config.d_proto * config.d_hidden, config.d_hidden),
            ),
            b2: uniform_block(&mut rng, config.d_proto, config.d_hidden),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Encoder {
            config: self.config,
            w1: Mat::zeros(self.w1.rows(), self.w1.cols()),
            b1: vec![F::zero(); self.b1.len()],
            w2: Mat::zeros(self.w2.rows(), self.w2.cols()),
            b2: vec![F::zero(); self.b2.len()],
        }
    }

    fn window_at(&self, features: &Mat<F>, t: usize) -> Vec<F> {
        let c = self.config;
        let mut x = vec![F::zero(); c.window()];
        for (wi, ti) in (t as isize - c.k as isize..=t as isize + c.k as isize).enumerate() {
            if ti >= 0 && (ti as usize) < features.rows() {
                x[wi * c.d_feat..(wi + 1) * c.d_feat].copy_from_slice(features.row(ti as usize));
            }
        }
        x
    }

    fn forward_frame(&self, x: &[F]) -> (Vec<F>, Vec<F>) {
        let mut h1 = vec![F::zero(); self.config.d_hidden];
        self.w1.mat_vec(x, &mut h1);
        for (h, b) in h1.iter_mut().zip(&self.b1) {
            *h = (*h + *b).max(F::zero());
        }
        let mut h2 = vec![F::zero(); self.config.d_proto];
        self.w2.mat_vec(&h1, &mut h2);
        for (h, b) in h2.iter_mut().zip(&self.b2) {
            *h = (*h + *b).max(F::zero());
        }
        (h1, h2)
    }

    /// T × d_feat features to T × d_proto encodings.
    pub fn encode(&self, features: &Mat<F>) -> Result<Mat<F>> {
        if features.cols() != self.config.d_feat {
            return Err(Error::DimMismatch(format!(
                "features have width {}, encoder expects {}",
                features.cols(),
                self.config.d_feat
            )));
        }
        let mut out = Mat::zeros(features.rows(), self.config.d_proto);
        for t in 0..features.rows() {
            let x = self.window_at(features, t);
            let (_, h2) = self.forward_frame(&x);
            out.row_mut(t).copy_from_slice(&h2);
        }
        Ok(out)
    }

    /// Accumulates parameter gradients for d loss / d encoding into `grad`.
    fn backward(&self, features: &Mat<F>, ghidden: &Mat<F>, grad: &mut Encoder<F>) {
        for t in 0..features.rows() {
            let x = self.window_at(features, t);
            let (h1, h2) = self.forward_frame(&x);
            let mut g2: Vec<F> = ghidden.row(t).to_vec();
            for (g, h) in g2.iter_mut().zip(&h2) {
                if *h <= F::zero() {
                    *g = F::zero();
                }
            }
            for (a, b) in grad.b2.iter_mut().zip(&g2) {
                *a = *a + *b;
            }
            grad.w2.add_outer(&g2, &h1, F::one());
            let mut g1 = vec![F::zero(); self.config.d_hidden];
            self.w2.mat_vec_t(&g2, &mut g1);
            for (g, h) in g1.iter_mut().zip(&h1) {
                if *h <= F::zero() {
                    *g = F::zero();
                }
            }
            for (a, b) in grad.b1.iter_mut().zip(&g1) {
                *a = *a + *b;
            }
            grad.w1.add_outer(&g1, &x, F::one());
        }
    }
}

/// Log-score matrix: entry (t, l) = hidden_t · proto_l for every id in the
/// table; columns without a prototype stay zero and must not be read.
pub fn score<F: Scalar>(
    hidden: &Mat<F>,
    protos: &PrototypeTable<F>,
    width: usize,
) -> Result<ScoreMatrix<F>> {
    if hidden.cols() != protos.d_proto() {
        return Err(Error::DimMismatch(format!(
            "hidden width {} does not match prototype width {}",
            hidden.cols(),
            protos.d_proto()
        )));
    }
    let mut out = ScoreMatrix::new(hidden.rows(), width);
    for t in 0..hidden.rows() {
        let h = hidden.row(t);
        for (idx, &id) in protos.ids().iter().enumerate() {
            out.set(t, id, dot(h, protos.rows().row(idx)));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub enum Scorer<F> {
    Cde(CdeParams<F>),
    Lookup(PrototypeTable<F>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorerKind {
    Cde,
    Lookup,
}

impl ScorerKind {
    pub fn parse(s: &str) -> Result<ScorerKind> {
        match s {
            "cde" => Ok(ScorerKind::Cde),
            "lookup" => Ok(ScorerKind::Lookup),
            other => Err(Error::Config(format!(
                "unknown scorer {other:?}, expected cde or lookup"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Utterance<F> {
    pub name: String,
    /// T × d_feat.
    pub features: Mat<F>,
    pub transcript: Vec<BaseId>,
}

#[derive(Debug, Clone)]
pub struct Model<F> {
    pub alphabet: CdAlphabet,
    pub encoder: Encoder<F>,
    pub scorer: Scorer<F>,
    /// Usable symbols in id order; the scoring set.
    symbols: Vec<CdSymbol>,
}

impl<F: Scalar> Model<F> {
    pub fn new(
        alphabet: CdAlphabet,
        enc_config: EncoderConfig,
        scorer_kind: ScorerKind,
        d_emb: usize,
        cde_hidden: usize,
        seed: u64,
    ) -> Model<F> {
        let symbols: Vec<CdSymbol> = alphabet.usable_ids().map(|id| *alphabet.symbol(id)).collect();
        let encoder = Encoder::init(enc_config, seed);
        let scorer = match scorer_kind {
            ScorerKind::Cde => Scorer::Cde(CdeParams::init(
                CdeConfig {
                    order: alphabet.order() as usize,
                    base_size: alphabet.base_size(),
                    d_emb,
                    hidden: cde_hidden,
                    d_proto: enc_config.d_proto,
                    free_blank: alphabet.blank_mode() == BlankMode::Single,
                },
                seed.wrapping_add(1),
            )),
            ScorerKind::Lookup => Scorer::Lookup(lookup_table(
                &symbols,
                enc_config.d_proto,
                seed.wrapping_add(1),
            )),
        };
        Model {
            alphabet,
            encoder,
            scorer,
            symbols,
        }
    }

    pub fn symbols(&self) -> &[CdSymbol] {
        &self.symbols
    }

    /// Materializes the prototype rows for the scoring set.
    pub fn prototypes(&self) -> Result<PrototypeTable<F>> {
        match &self.scorer {
            Scorer::Cde(p) => cde_forward(p, &self.symbols),
            Scorer::Lookup(t) => Ok(t.clone()),
        }
    }

    /// Encode + score in one call.
    pub fn scores(&self, features: &Mat<F>) -> Result<ScoreMatrix<F>> {
        let hidden = self.encoder.encode(features)?;
        score(&hidden, &self.prototypes()?, self.alphabet.size())
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|(_, _, d)| d.len()).sum()
    }

    pub fn blocks(&self) -> Vec<(String, Vec<usize>, &[F])> {
        let mut out: Vec<(String, Vec<usize>, &[F])> = vec![
            (
                "enc/w1".into(),
                vec![self.encoder.w1.rows(), self.encoder.w1.cols()],
                self.encoder.w1.data(),
            ),
            ("enc/b1".into(), vec![self.encoder.b1.len()], &self.encoder.b1),
            (
                "enc/w2".into(),
                vec![self.encoder.w2.rows(), self.encoder.w2.cols()],
                self.encoder.w2.data(),
            ),
            ("enc/b2".into(), vec![self.encoder.b2.len()], &self.encoder.b2),
        ];
        match &self.scorer {
            Scorer::Cde(p) => {
                for (name, shape, data) in p.blocks() {
                    out.push((name.to_string(), shape, data));
                }
            }
            Scorer::Lookup(t) => {
                out.push((
                    "lookup/table".into(),
                    vec![t.len(), t.d_proto()],
                    t.rows().data(),
                ));
            }
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = vec![
            self.encoder.w1.data_mut(),
            &mut self.encoder.b1,
            self.encoder.w2.data_mut(),
            &mut self.encoder.b2,
        ];
        match &mut self.scorer {
            Scorer::Cde(p) => out.extend(p.blocks_mut()),
            Scorer::Lookup(t) => out.push(t.rows_mut().data_mut()),
        }
        out
    }

    pub fn write_checkpoint(&self) -> Checkpoint {
        let mut cp = Checkpoint::new();
        for (name, shape, data) in self.blocks() {
            cp.push(&name, &shape, data);
        }
        cp
    }

    /// Replaces every block with the checkpoint's values. Shapes must
    /// match the model as constructed.
    pub fn read_checkpoint(&mut self, cp: &Checkpoint) -> Result<()> {
        let plan: Vec<(String, Vec<usize>)> = self
            .blocks()
            .iter()
            .map(|(n, s, _)| (n.clone(), s.clone()))
            .collect();
        for ((name, shape), dst) in plan.iter().zip(self.blocks_mut()) {
            let vals: Vec<F> = cp.take(name, shape)?;
            dst.copy_from_slice(&vals);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Halve the learning rate every this many steps, if set.
    pub halve_every: Option<u64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            halve_every: None,
        }
    }
}

/// Adam over a fixed list of parameter blocks.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub config: AdamConfig,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    step: u64,
}

impl<F: Scalar> Adam<F> {
    pub fn new(config: AdamConfig, block_sizes: &[usize]) -> Self {
        Adam {
            config,
            m: block_sizes.iter().map(|&n| vec![F::zero(); n]).collect(),
            v: block_sizes.iter().map(|&n| vec![F::zero(); n]).collect(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn effective_lr(&self) -> f64 {
        match self.config.halve_every {
            Some(h) if h > 0 => self.config.lr * 0.5f64.powi((self.step / h) as i32),
            _ => self.config.lr,
        }
    }

    pub fn step(&mut self, mut params: Vec<&mut [F]>, grads: &[Vec<F>]) {
        assert_eq!(params.len(), self.m.len(), "block count");
        assert_eq!(grads.len(), self.m.len(), "gradient block count");
        let lr = self.effective_lr();
        self.step += 1;
        let b1 = F::from_f64(self.config.beta1);
        let b2 = F::from_f64(self.config.beta2);
        let one = F::one();
        let bc1 = F::from_f64(1.0 - self.config.beta1.powi(self.step as i32));
        let bc2 = F::from_f64(1.0 - self.config.beta2.powi(self.step as i32));
        let eps = F::from_f64(self.config.eps);
        let lr = F::from_f64(lr);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(p.len(), g.len(), "block length");
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] = p[i] - lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepMetrics<F> {
    pub loss: F,
    pub grad_norm: f64,
}

/// Gradients of the mean batch loss with respect to every model block, in
/// [`Model::blocks`] order.
pub fn batch_gradients<F: Scalar>(
    model: &Model<F>,
    batch: &[Utterance<F>],
    kind: LossKind,
) -> Result<(F, Vec<Vec<F>>)> {
    if batch.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let protos = model.prototypes()?;
    let scale = F::from_f64(1.0 / batch.len() as f64);
    let mut total = F::zero();
    let mut enc_grad = model.encoder.zeros_like();
    let mut gproto = Mat::zeros(protos.len(), protos.d_proto());
    for utt in batch {
        let hidden = model.encoder.encode(&utt.features)?;
        let scores = score(&hidden, &protos, model.alphabet.size())?;
        let r = ctc_loss(kind, &scores, &utt.transcript, &model.alphabet).map_err(|e| match e {
            Error::NoAcceptingPath { frames } => Error::Unrealizable(format!(
                "{}: no accepting path of length {frames}",
                utt.name
            )),
            other => other,
        })?;
        total = total + r.loss * scale;
        // d loss / d hidden_t = Σ_l grad(t,l) · proto_l, and each prototype
        // row accumulates Σ_t grad(t,l) · hidden_t.
        let mut ghidden = Mat::zeros(hidden.rows(), hidden.cols());
        for t in 0..hidden.rows() {
            for (idx, &id) in protos.ids().iter().enumerate() {
                let g = r.grad.get(t, id as usize) * scale;
                if g != F::zero() {
                    let prow = protos.rows().row(idx);
                    let hrow = hidden.row(t);
                    {
                        let grow = ghidden.row_mut(t);
                        for (a, b) in grow.iter_mut().zip(prow) {
                            *a = *a + g * *b;
                        }
                    }
                    let grow = gproto.row_mut(idx);
                    for (a, b) in grow.iter_mut().zip(hrow) {
                        *a = *a + g * *b;
                    }
                }
            }
        }
        model.encoder.backward(&utt.features, &ghidden, &mut enc_grad);
    }
    let mut grads: Vec<Vec<F>> = vec![
        enc_grad.w1.data().to_vec(),
        enc_grad.b1.clone(),
        enc_grad.w2.data().to_vec(),
        enc_grad.b2.clone(),
    ];
    match &model.scorer {
        Scorer::Cde(p) => {
            let g = cde_backward(p, &model.symbols, &gproto)?;
            for (_, _, data) in g.blocks() {
                grads.push(data.to_vec());
            }
        }
        Scorer::Lookup(_) => grads.push(gproto.data().to_vec()),
    }
    Ok((total, grads))
}

/// One optimizer step on the mean batch loss.
pub fn train_step<F: Scalar>(
    model: &mut Model<F>,
    adam: &mut Adam<F>,
    batch: &[Utterance<F>],
    kind: LossKind,
) -> Result<StepMetrics<F>> {
    let (loss, grads) = batch_gradients(model, batch, kind)?;
    let grad_norm = grads
        .iter()
        .flat_map(|b| b.iter())
        .map(|&g| {
            let g = g.as_f64();
            g * g
        })
        .sum::<f64>()
        .sqrt();
    adam.step(model.blocks_mut(), &grads);
    Ok(StepMetrics { loss, grad_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::{build_bichar_alphabet, build_ci_alphabet};

    fn tiny_encoder() -> EncoderConfig {
        EncoderConfig {
            k: 1,
            d_feat: 2,
            d_hidden: 3,
            d_proto: 4,
        }
    }

    fn random_features(rows: usize, cols: usize, seed: f64) -> Mat<f64> {
        let mut m = Mat::zeros(rows, cols);
        let mut v = seed;
        for r in 0..rows {
            for c in 0..cols {
                v = (v * 1.3 + 0.71).sin() * 1.5;
                m.set(r, c, v);
            }
        }
        m
    }

    #[test]
    fn encode_shapes_and_zero_weights() {
        let enc = Encoder::<f64>::init(tiny_encoder(), 4).zeros_like();
        let feats = random_features(5, 2, 0.2);
        let h = enc.encode(&feats).unwrap();
        assert_eq!((h.rows(), h.cols()), (5, 4));
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn score_matches_direct_matrix_multiply() {
        let mut hidden = Mat::zeros(3, 2);
        let mut rows = Mat::zeros(4, 2);
        let mut v: f64 = 0.9;
        for t in 0..3 {
            for c in 0..2 {
                v = (v * 1.7 + 0.3).sin();
                hidden.set(t, c, v);
            }
        }
        for r in 0..4 {
            for c in 0..2 {
                v = (v * 1.7 + 0.3).sin();
                rows.set(r, c, v);
            }
        }
        let t = PrototypeTable::new(vec![0, 1, 2, 3], rows.clone(), crate::cde::Provenance::Lookup);
        let s = score(&hidden, &t, 4).unwrap();
        for ti in 0..3 {
            for l in 0..4u32 {
                let want = dot(hidden.row(ti), rows.row(l as usize));
                assert!((s.get(ti, l) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn score_orthonormal_prototypes_and_bilinearity() {
        let mut rows = Mat::zeros(2, 2);
        rows.set(0, 0, 1.0);
        rows.set(1, 1, 1.0);
        let t = PrototypeTable::new(vec![0, 1], rows, crate::cde::Provenance::Lookup);
        let mut hidden = Mat::zeros(1, 2);
        hidden.set(0, 1, 1.0);
        let s = score(&hidden, &t, 2).unwrap();
        assert_eq!(s.get(0, 0), 0.0);
        assert_eq!(s.get(0, 1), 1.0);
        hidden.scale(3.0);
        let s = score(&hidden, &t, 2).unwrap();
        assert_eq!(s.get(0, 1), 3.0);
    }

    fn tiny_model(kind: ScorerKind, seed: u64) -> Model<f64> {
        let ci = build_ci_alphabet(&["a", "b"]).unwrap();
        let bi = build_bichar_alphabet(&ci, BlankMode::Single).unwrap();
        Model::new(bi, tiny_encoder(), kind, 3, 5, seed)
    }

    fn tiny_batch() -> Vec<Utterance<f64>> {
        vec![
            Utterance {
                name: "u0".into(),
                features: random_features(6, 2, 0.4),
                transcript: vec![1, 2],
            },
            Utterance {
                name: "u1".into(),
                features: random_features(5, 2, -1.1),
                transcript: vec![2],
            },
        ]
    }

    #[test]
    fn full_pipeline_gradients_match_finite_differences() {
        for scorer in [ScorerKind::Cde, ScorerKind::Lookup] {
            for kind in [LossKind::Local, LossKind::Global] {
                let mut model = tiny_model(scorer, 11);
                let batch = tiny_batch();
                let (_, grads) = batch_gradients(&model, &batch, kind).unwrap();
                let eps = 1e-5;
                for bi in 0..grads.len() {
                    for i in (0..grads[bi].len()).step_by(3) {
                        let orig = model.blocks_mut()[bi][i];
                        model.blocks_mut()[bi][i] = orig + eps;
                        let hi = batch_gradients(&model, &batch, kind).unwrap().0;
                        model.blocks_mut()[bi][i] = orig - eps;
                        let lo = batch_gradients(&model, &batch, kind).unwrap().0;
                        model.blocks_mut()[bi][i] = orig;
                        let fd = (hi - lo) / (2.0 * eps);
                        let an = grads[bi][i];
                        let denom = fd.abs().max(an.abs()).max(1.0);
                        assert!(
                            ((fd - an) / denom).abs() < 1e-4,
                            "{scorer:?}/{kind:?} block {bi} entry {i}: fd {fd} vs {an}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn global_blank_pipeline_gradient() {
        let ci = build_ci_alphabet(&["a", "b"]).unwrap();
        let cd = build_bichar_alphabet(&ci, BlankMode::ContextDependent).unwrap();
        let mut model: Model<f64> = Model::new(cd, tiny_encoder(), ScorerKind::Cde, 3, 5, 7);
        let batch = tiny_batch();
        let (_, grads) = batch_gradients(&model, &batch, LossKind::GlobalBlank).unwrap();
        let eps = 1e-5;
        for bi in 0..grads.len() {
            for i in (0..grads[bi].len()).step_by(7) {
                let orig = model.blocks_mut()[bi][i];
                model.blocks_mut()[bi][i] = orig + eps;
                let hi = batch_gradients(&model, &batch, LossKind::GlobalBlank).unwrap().0;
                model.blocks_mut()[bi][i] = orig - eps;
                let lo = batch_gradients(&model, &batch, LossKind::GlobalBlank).unwrap().0;
                model.blocks_mut()[bi][i] = orig;
                let fd = (hi - lo) / (2.0 * eps);
                let an = grads[bi][i];
                let denom: f64 = fd.abs().max(an.abs()).max(1.0);
                assert!(((fd - an) / denom).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut model = tiny_model(ScorerKind::Cde, 3);
        let before: Vec<Vec<f64>> = model
            .blocks()
            .iter()
            .map(|(_, _, d)| d.to_vec())
            .collect();
        let sizes: Vec<usize> = model.blocks().iter().map(|(_, _, d)| d.len()).collect();
        let mut adam = Adam::new(
            AdamConfig {
                lr: 0.0,
                ..AdamConfig::default()
            },
            &sizes,
        );
        train_step(&mut model, &mut adam, &tiny_batch(), LossKind::Global).unwrap();
        let after: Vec<Vec<f64>> = model
            .blocks()
            .iter()
            .map(|(_, _, d)| d.to_vec())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn training_reduces_loss_and_is_reproducible() {
        let run = || {
            let mut model = tiny_model(ScorerKind::Cde, 5);
            let sizes: Vec<usize> = model.blocks().iter().map(|(_, _, d)| d.len()).collect();
            let mut adam = Adam::new(
                AdamConfig {
                    lr: 0.01,
                    ..AdamConfig::default()
                },
                &sizes,
            );
            let batch = tiny_batch();
            let first = train_step(&mut model, &mut adam, &batch, LossKind::Global)
                .unwrap()
                .loss;
            let mut last = first;
            for _ in 0..40 {
                last = train_step(&mut model, &mut adam, &batch, LossKind::Global)
                    .unwrap()
                    .loss;
            }
            let params: Vec<Vec<f64>> = model
                .blocks()
                .iter()
                .map(|(_, _, d)| d.to_vec())
                .collect();
            (first, last, params)
        };
        let (first, last, params) = run();
        assert!(last < first, "loss {first} did not decrease ({last})");
        let (_, _, params2) = run();
        assert_eq!(params, params2, "training is not bit-reproducible");
    }

    #[test]
    fn unrealizable_utterance_is_identified() {
        let model = tiny_model(ScorerKind::Lookup, 2);
        let batch = vec![Utterance {
            name: "bad-utt".into(),
            features: random_features(1, 2, 0.5),
            transcript: vec![1, 2, 1],
        }];
        match batch_gradients(&model, &batch, LossKind::Global) {
            Err(Error::Unrealizable(msg)) => assert!(msg.contains("bad-utt")),
            other => panic!("expected unrealizable error, got {other:?}"),
        }
    }

    #[test]
    fn lr_halving_schedule() {
        let mut adam = Adam::<f64>::new(
            AdamConfig {
                lr: 0.8,
                halve_every: Some(2),
                ..AdamConfig::default()
            },
            &[1],
        );
        let mut p = vec![0.0f64];
        let lrs: Vec<f64> = (0..5)
            .map(|_| {
                let lr = adam.effective_lr();
                adam.step(vec![&mut p], &[vec![1.0]]);
                lr
            })
            .collect();
        assert_eq!(lrs, vec![0.8, 0.8, 0.4, 0.4, 0.2]);
    }

    #[test]
    fn checkpoint_round_trip_for_both_scorers() {
        for kind in [ScorerKind::Cde, ScorerKind::Lookup] {
            let model = tiny_model(kind, 21);
            let cp = model.write_checkpoint();
            let mut fresh = tiny_model(kind, 22);
            fresh.read_checkpoint(&cp).unwrap();
            let a: Vec<Vec<f64>> = model.blocks().iter().map(|(_, _, d)| d.to_vec()).collect();
            let b: Vec<Vec<f64>> = fresh.blocks().iter().map(|(_, _, d)| d.to_vec()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn cde_and_frozen_table_scores_are_identical() {
        let model = tiny_model(ScorerKind::Cde, 31);
        let feats = random_features(5, 2, 0.3);
        let via_cde = model.scores(&feats).unwrap();
        // Freeze the generated prototypes into a plain table and rescore.
        let frozen = model.prototypes().unwrap();
        let hidden = model.encoder.encode(&feats).unwrap();
        let via_table = score(&hidden, &frozen, model.alphabet.size()).unwrap();
        assert_eq!(via_cde, via_table);
    }
}
