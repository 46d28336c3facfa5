//! Flat `key = value` experiment configs.
//!
//! One line per setting, `#` comments, unknown keys rejected. The parsed
//! config is re-serializable in canonical key order so a run can echo the
//! exact settings it used.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Ci,
    Bichar,
    Trichar,
}

impl Topology {
    pub fn name(self) -> &'static str {
        match self {
            Topology::Ci => "ci",
            Topology::Bichar => "bichar",
            Topology::Trichar => "trichar",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ci" => Ok(Topology::Ci),
            "bichar" => Ok(Topology::Bichar),
            "trichar" => Ok(Topology::Trichar),
            _ => Err(Error::Config(format!(
                "unknown topology {s:?}; expected ci, bichar, or trichar"
            ))),
        }
    }
}

/// Loss names as they appear in configs and result CSVs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossName {
    Ctc,
    CtcG,
    CtcGb,
}

impl LossName {
    pub fn name(self) -> &'static str {
        match self {
            LossName::Ctc => "ctc",
            LossName::CtcG => "ctc-g",
            LossName::CtcGb => "ctc-gb",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ctc" => Ok(LossName::Ctc),
            "ctc-g" => Ok(LossName::CtcG),
            "ctc-gb" => Ok(LossName::CtcGb),
            _ => Err(Error::Config(format!(
                "unknown loss {s:?}; expected ctc, ctc-g, or ctc-gb"
            ))),
        }
    }

    pub fn kind(self) -> crate::loss::LossKind {
        match self {
            LossName::Ctc => crate::loss::LossKind::Local,
            LossName::CtcG => crate::loss::LossKind::Global,
            LossName::CtcGb => crate::loss::LossKind::GlobalBlank,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub topology: Topology,
    pub loss: LossName,
    /// "lookup" or "cde".
    pub scoring: String,
    /// Base symbols, comma separated.
    pub alphabet: Vec<String>,
    /// Tri-char allowed-set file; required for trichar.
    pub triples_file: Option<String>,

    pub d_feat: usize,
    pub enc_k: usize,
    pub enc_hidden: usize,
    pub d_proto: usize,
    pub d_emb: usize,
    pub cde_hidden: usize,

    pub lr: f64,
    pub halve_every: u64,
    pub steps: u64,
    pub batch: usize,
    pub seed: u64,

    pub samples: usize,
    pub len_range: (usize, usize),
    pub dur_range: (usize, usize),
    pub alpha: f64,
    pub sigma: f64,
    pub no_repeat: bool,
    pub bias: f64,

    pub lm_order: usize,
    pub kappas: Vec<f64>,
    pub eval_every: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            topology: Topology::Ci,
            loss: LossName::Ctc,
            scoring: "lookup".into(),
            alphabet: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            triples_file: None,
            d_feat: 8,
            enc_k: 1,
            enc_hidden: 24,
            d_proto: 12,
            d_emb: 8,
            cde_hidden: 24,
            lr: 2e-3,
            halve_every: 0,
            steps: 2000,
            batch: 8,
            seed: 17,
            samples: 120,
            len_range: (2, 5),
            dur_range: (2, 4),
            alpha: 0.0,
            sigma: 0.1,
            no_repeat: true,
            bias: 0.0,
            lm_order: 2,
            kappas: (1..=10).map(|i| i as f64 / 5.0).collect(),
            eval_every: 500,
        }
    }
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: expected an unsigned integer, got {v:?}")))
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: expected an unsigned integer, got {v:?}")))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: expected a number, got {v:?}")))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {raw:?}", lineno + 1))
            })?;
            let (key, v) = (key.trim(), value.trim());
            match key {
                "topology" => c.topology = Topology::parse(v)?,
                "loss" => c.loss = LossName::parse(v)?,
                "scoring" => match v {
                    "lookup" | "cde" => c.scoring = v.to_string(),
                    _ => {
                        return Err(Error::Config(format!(
                            "scoring: expected lookup or cde, got {v:?}"
                        )))
                    }
                },
                "alphabet" => {
                    c.alphabet = v.split(',').map(|s| s.trim().to_string()).collect();
                }
                "triples_file" => c.triples_file = Some(v.to_string()),
                "d_feat" => c.d_feat = parse_usize(key, v)?,
                "enc_k" => c.enc_k = parse_usize(key, v)?,
                "enc_hidden" => c.enc_hidden = parse_usize(key, v)?,
                "d_proto" => c.d_proto = parse_usize(key, v)?,
                "d_emb" => c.d_emb = parse_usize(key, v)?,
                "cde_hidden" => c.cde_hidden = parse_usize(key, v)?,
                "lr" => c.lr = parse_f64(key, v)?,
                "halve_every" => c.halve_every = parse_u64(key, v)?,
                "steps" => c.steps = parse_u64(key, v)?,
                "batch" => c.batch = parse_usize(key, v)?,
                "seed" => c.seed = parse_u64(key, v)?,
                "samples" => c.samples = parse_usize(key, v)?,
                "len_min" => c.len_range.0 = parse_usize(key, v)?,
                "len_max" => c.len_range.1 = parse_usize(key, v)?,
                "dur_min" => c.dur_range.0 = parse_usize(key, v)?,
                "dur_max" => c.dur_range.1 = parse_usize(key, v)?,
                "alpha" => c.alpha = parse_f64(key, v)?,
                "sigma" => c.sigma = parse_f64(key, v)?,
                "no_repeat" => {
                    c.no_repeat = match v {
                        "true" => true,
                        "false" => false,
                        _ => {
                            return Err(Error::Config(format!(
                                "no_repeat: expected true or false, got {v:?}"
                            )))
                        }
                    }
                }
                "bias" => c.bias = parse_f64(key, v)?,
                "lm_order" => c.lm_order = parse_usize(key, v)?,
                "kappas" => {
                    c.kappas = v
                        .split(',')
                        .map(|s| parse_f64("kappas", s.trim()))
                        .collect::<Result<_>>()?;
                }
                "eval_every" => c.eval_every = parse_u64(key, v)?,
                _ => {
                    return Err(Error::Config(format!("unknown config key {key:?}")));
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Topology, loss, and scoring must be a workable combination; the
    /// checks run before any training starts.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.alphabet.is_empty() {
            return fail("alphabet must list at least one symbol".into());
        }
        match (self.topology, self.loss) {
            (Topology::Ci, LossName::CtcGb) | (Topology::Trichar, LossName::CtcGb) => {
                return fail(format!(
                    "loss ctc-gb needs context-dependent blanks; use topology = bichar, not {}",
                    self.topology.name()
                ));
            }
            _ => {}
        }
        if self.topology == Topology::Trichar && self.triples_file.is_none() {
            return fail("topology trichar requires triples_file = <allowed-set path>".into());
        }
        if self.topology != Topology::Trichar && self.triples_file.is_some() {
            return fail(format!(
                "triples_file only applies to topology trichar, not {}",
                self.topology.name()
            ));
        }
        if !(self.scoring == "lookup" || self.scoring == "cde") {
            return fail(format!("scoring: expected lookup or cde, got {:?}", self.scoring));
        }
        for (key, v) in [
            ("d_feat", self.d_feat),
            ("enc_hidden", self.enc_hidden),
            ("d_proto", self.d_proto),
            ("d_emb", self.d_emb),
            ("cde_hidden", self.cde_hidden),
            ("batch", self.batch),
            ("samples", self.samples),
        ] {
            if v == 0 {
                return fail(format!("{key} must be positive"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive and finite, got {}", self.lr));
        }
        if self.len_range.0 < 1 || self.len_range.0 > self.len_range.1 {
            return fail(format!(
                "transcript length range {:?} must satisfy 1 <= lo <= hi",
                self.len_range
            ));
        }
        if self.dur_range.0 < 1 || self.dur_range.0 > self.dur_range.1 {
            return fail(format!(
                "duration range {:?} must satisfy 1 <= lo <= hi",
                self.dur_range
            ));
        }
        if self.alpha < 0.0 {
            return fail(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if self.sigma < 0.0 {
            return fail(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if !(2..=3).contains(&self.lm_order) {
            return fail(format!("lm_order must be 2 or 3, got {}", self.lm_order));
        }
        if self.kappas.is_empty() || self.kappas.iter().any(|&k| !(k > 0.0 && k.is_finite())) {
            return fail("kappas must be a non-empty list of positive numbers".into());
        }
        Ok(())
    }

    /// Canonical text form; `parse(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "topology = {}", self.topology.name());
        let _ = writeln!(s, "loss = {}", self.loss.name());
        let _ = writeln!(s, "scoring = {}", self.scoring);
        let _ = writeln!(s, "alphabet = {}", self.alphabet.join(","));
        if let Some(f) = &self.triples_file {
            let _ = writeln!(s, "triples_file = {f}");
        }
        let _ = writeln!(s, "d_feat = {}", self.d_feat);
        let _ = writeln!(s, "enc_k = {}", self.enc_k);
        let _ = writeln!(s, "enc_hidden = {}", self.enc_hidden);
        let _ = writeln!(s, "d_proto = {}", self.d_proto);
        let _ = writeln!(s, "d_emb = {}", self.d_emb);
        let _ = writeln!(s, "cde_hidden = {}", self.cde_hidden);
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "halve_every = {}", self.halve_every);
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "batch = {}", self.batch);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "len_min = {}", self.len_range.0);
        let _ = writeln!(s, "len_max = {}", self.len_range.1);
        let _ = writeln!(s, "dur_min = {}", self.dur_range.0);
        let _ = writeln!(s, "dur_max = {}", self.dur_range.1);
        let _ = writeln!(s, "alpha = {}", self.alpha);
        let _ = writeln!(s, "sigma = {}", self.sigma);
        let _ = writeln!(s, "no_repeat = {}", self.no_repeat);
        let _ = writeln!(s, "bias = {}", self.bias);
        let _ = writeln!(s, "lm_order = {}", self.lm_order);
        let kappas: Vec<String> = self.kappas.iter().map(f64::to_string).collect();
        let _ = writeln!(s, "kappas = {}", kappas.join(","));
        let _ = writeln!(s, "eval_every = {}", self.eval_every);
        s
    }

    /// CD-blank variants exist exactly for ctc-gb runs.
    pub fn blank_mode(&self) -> crate::alphabet::BlankMode {
        if self.loss == LossName::CtcGb {
            crate::alphabet::BlankMode::ContextDependent
        } else {
            crate::alphabet::BlankMode::Single
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        let text = c.to_text();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), c);
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let c = ExperimentConfig::parse(
            "# experiment\n\ntopology = bichar  # cd symbols\nloss = ctc-g\nalpha = 0.8\n",
        )
        .unwrap();
        assert_eq!(c.topology, Topology::Bichar);
        assert_eq!(c.loss, LossName::CtcG);
        assert_eq!(c.alpha, 0.8);
        assert_eq!(c.batch, ExperimentConfig::default().batch);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::parse("topolgy = ci\n").unwrap_err();
        assert!(err.to_string().contains("topolgy"));
    }

    #[test]
    fn invalid_combinations_have_actionable_messages() {
        let cases = [
            ("topology = ci\nloss = ctc-gb\n", "bichar"),
            ("topology = trichar\nloss = ctc-gb\n", "bichar"),
            ("topology = trichar\n", "triples_file"),
            ("topology = ci\ntriples_file = x.tsv\n", "trichar"),
            ("loss = mmmi\n", "expected ctc"),
            ("scoring = table\n", "lookup"),
            ("kappas = 0.5,-1\n", "positive"),
            ("lm_order = 4\n", "2 or 3"),
            ("len_min = 3\nlen_max = 2\n", "lo <= hi"),
        ];
        for (text, needle) in cases {
            let err = ExperimentConfig::parse(text).unwrap_err().to_string();
            assert!(err.contains(needle), "{text:?} gave {err:?}");
        }
    }

    #[test]
    fn blank_mode_follows_loss() {
        let mut c = ExperimentConfig::default();
        assert_eq!(c.blank_mode(), crate::alphabet::BlankMode::Single);
        c.topology = Topology::Bichar;
        c.loss = LossName::CtcGb;
        c.validate().unwrap();
        assert_eq!(c.blank_mode(), crate::alphabet::BlankMode::ContextDependent);
    }
}
