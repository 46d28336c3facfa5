//! Brute-force reference implementations.
//!
//! Everything here trades efficiency for obviousness: enumerate every
//! candidate string, filter, sum. The fast paths (graphs, forward-backward,
//! losses) are tested against these oracles on small instances. A guard of
//! 10^7 candidate strings keeps runaway enumerations out.
//!
//! The local-loss oracle sums the collapse preimage with no validity
//! filter on purpose: per-frame normalization implicitly spends mass on
//! contextually broken strings, and that asymmetry against the global loss
//! is the behavior under study, not a bug to fix.

use crate::alphabet::{BaseId, BlankMode, CdAlphabet, CdId, BLANK};
use crate::error::{Error, Result};
use crate::forward_backward::ScoreMatrix;
use crate::graph::Fst;
use crate::scalar::{log_sum_exp, Scalar};

pub const ENUMERATION_GUARD: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validity {
    /// Every string passes.
    None,
    /// Context overlap with a transparent single blank.
    Overlap,
    /// Context overlap with blanks carrying their left context.
    CdBlank,
}

#[derive(Debug, Clone)]
pub struct EnumerationSpec<'a> {
    pub alphabet: &'a CdAlphabet,
    pub frames: usize,
    pub validity: Validity,
    /// Keep only strings collapsing to this transcript.
    pub target: Option<Vec<BaseId>>,
}

/// The validity mode matching an alphabet's blank handling.
pub fn natural_validity(a: &CdAlphabet) -> Validity {
    match a.blank_mode() {
        BlankMode::Single => Validity::Overlap,
        BlankMode::ContextDependent => Validity::CdBlank,
    }
}

/// Checks one extended string by scanning its symbol runs and tracking the
/// exposed context (plus the promised next center for tri-characters).
pub fn is_valid_string(a: &CdAlphabet, validity: Validity, s: &[CdId]) -> bool {
    if validity == Validity::None || a.order() == 1 {
        return true;
    }
    let mut exposed = BLANK;
    let mut promised: Option<BaseId> = None;
    let mut prev: Option<CdId> = None;
    for &id in s {
        if prev == Some(id) {
            continue;
        }
        prev = Some(id);
        let sym = a.symbol(id);
        if sym.is_blank() {
            match validity {
                Validity::CdBlank => {
                    if sym.left != exposed {
                        return false;
                    }
                }
                // A single blank neither checks nor changes the context.
                _ => {}
            }
            continue;
        }
        if sym.left != exposed {
            return false;
        }
        if a.order() == 3 {
            if let Some(r) = promised {
                if sym.center != r {
                    return false;
                }
            }
            promised = Some(sym.right);
        }
        exposed = sym.center;
    }
    // A tri-character promising a non-boundary right context cannot end
    // the utterance.
    !matches!(promised, Some(r) if r != BLANK)
}

fn check_guard(count: u128) -> Result<()> {
    if count > ENUMERATION_GUARD as u128 {
        Err(Error::EnumerationGuard {
            strings: count.min(u64::MAX as u128) as u64,
            guard: ENUMERATION_GUARD,
        })
    } else {
        Ok(())
    }
}

/// All length-T strings over the usable symbols passing the spec's filter,
/// in lexicographic id order.
pub fn enumerate(spec: &EnumerationSpec) -> Result<Vec<Vec<CdId>>> {
    let usable: Vec<CdId> = spec.alphabet.usable_ids().collect();
    check_guard((usable.len() as u128).pow(spec.frames as u32))?;
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(spec.frames);
    fn rec(
        usable: &[CdId],
        spec: &EnumerationSpec,
        cur: &mut Vec<CdId>,
        out: &mut Vec<Vec<CdId>>,
    ) {
        if cur.len() == spec.frames {
            if !is_valid_string(spec.alphabet, spec.validity, cur) {
                return;
            }
            if let Some(t) = &spec.target {
                if &spec.alphabet.collapse(cur) != t {
                    return;
                }
            }
            out.push(cur.clone());
            return;
        }
        for &id in usable {
            cur.push(id);
            rec(usable, spec, cur, out);
            cur.pop();
        }
    }
    rec(&usable, spec, &mut cur, &mut out);
    Ok(out)
}

/// Reference losses by direct summation: locally normalized negative log
/// likelihood (per-frame softmax, preimage unfiltered) and globally
/// normalized negative log likelihood (both sides validity-filtered).
/// An unrealizable target comes back as +inf.
pub fn brute_loss<F: Scalar>(
    scores: &ScoreMatrix<F>,
    a: &CdAlphabet,
    target: &[BaseId],
) -> Result<(F, F)> {
    if scores.width() != a.size() {
        return Err(Error::DimMismatch(format!(
            "score width {} does not match alphabet size {}",
            scores.width(),
            a.size()
        )));
    }
    let usable: Vec<CdId> = a.usable_ids().collect();
    let frames = scores.frames();
    check_guard((usable.len() as u128).pow(frames as u32))?;
    let validity = natural_validity(a);
    // Per-frame log softmax over the usable ids.
    let mut logp = ScoreMatrix::<F>::new(frames, a.size());
    for t in 0..frames {
        let vals: Vec<F> = usable.iter().map(|&l| scores.get(t, l)).collect();
        let z = log_sum_exp(&vals);
        for &l in &usable {
            logp.set(t, l, scores.get(t, l) - z);
        }
    }
    let mut local_terms = Vec::new();
    let mut num_terms = Vec::new();
    let mut den_terms = Vec::new();
    let mut cur = vec![0u32; frames];
    let n_usable = usable.len() as u64;
    let total = n_usable.pow(frames as u32);
    for mut ix in 0..total {
        for slot in cur.iter_mut().rev() {
            *slot = usable[(ix % n_usable) as usize];
            ix /= n_usable;
        }
        let collapses = a.collapse(&cur) == target;
        if collapses {
            let lp: F = (0..frames).map(|t| logp.get(t, cur[t])).sum();
            local_terms.push(lp);
        }
        if is_valid_string(a, validity, &cur) {
            let raw: F = (0..frames).map(|t| scores.get(t, cur[t])).sum();
            den_terms.push(raw);
            if collapses {
                num_terms.push(raw);
            }
        }
    }
    let local = -log_sum_exp(&local_terms);
    let global = log_sum_exp(&den_terms) - log_sum_exp(&num_terms);
    Ok((local, global))
}

/// Input-label sequences of every accepting path of exactly `frames` arcs,
/// in lexicographic order. The graphs are input-deterministic, so this is
/// the graph's length-T language without duplicates.
pub fn graph_language(fst: &Fst, frames: usize) -> Result<Vec<Vec<CdId>>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(frames);
    fn rec(
        fst: &Fst,
        state: u32,
        frames: usize,
        cur: &mut Vec<CdId>,
        out: &mut Vec<Vec<CdId>>,
    ) -> Result<()> {
        if cur.len() == frames {
            if fst.is_final(state) {
                if out.len() as u64 >= ENUMERATION_GUARD {
                    return Err(Error::EnumerationGuard {
                        strings: out.len() as u64 + 1,
                        guard: ENUMERATION_GUARD,
                    });
                }
                out.push(cur.clone());
            }
            return Ok(());
        }
        for arc in fst.arcs_from(state) {
            cur.push(arc.ilabel);
            rec(fst, arc.dst, frames, cur, out)?;
            cur.pop();
        }
        Ok(())
    }
    rec(fst, 0, frames, &mut cur, &mut out)?;
    Ok(out)
}

/// Expands the displayed pattern for a transcript to exactly `frames`
/// symbols: alternating blank runs and symbol runs, where a blank run is
/// mandatory only between identical adjacent expanded symbols, and blank
/// runs use the variant matching their left context when blanks are
/// context-dependent.
pub fn pattern_language(
    a: &CdAlphabet,
    transcript: &[BaseId],
    frames: usize,
) -> Result<Vec<Vec<CdId>>> {
    if a.order() == 3 {
        return Err(Error::Config(
            "pattern expansion covers the order-1 and order-2 topologies".into(),
        ));
    }
    let e = a.cd_expand(transcript)?;
    let n = e.len();
    // Runs in order: gap 0, symbol 1, gap 1, …, symbol n, gap n.
    let mut runs: Vec<(CdId, usize)> = Vec::with_capacity(2 * n + 1);
    let gap_blank = |i: usize| {
        if i == 0 {
            a.blank()
        } else {
            a.blank_for_context(transcript[i - 1])
        }
    };
    runs.push((gap_blank(0), 0));
    for i in 0..n {
        if i > 0 {
            let mandatory = e[i] == e[i - 1];
            runs.push((gap_blank(i), usize::from(mandatory)));
        }
        runs.push((e[i], 1));
    }
    if n > 0 {
        runs.push((gap_blank(n), 0));
    }
    let min_total: usize = runs.iter().map(|r| r.1).sum();
    if frames < min_total {
        return Ok(Vec::new());
    }
    let extra = frames - min_total;
    // Count of strings: distribute `extra` over the runs.
    let mut count: u128 = 1;
    for i in 1..runs.len() as u128 {
        count = count * (extra as u128 + i) / i;
    }
    check_guard(count)?;

    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(frames);
    fn rec(
        runs: &[(CdId, usize)],
        extra: usize,
        cur: &mut Vec<CdId>,
        out: &mut Vec<Vec<CdId>>,
    ) {
        if runs.is_empty() {
            if extra == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let (sym, min) = runs[0];
        let budget = if runs.len() == 1 { extra..=extra } else { 0..=extra };
        for give in budget {
            for _ in 0..min + give {
                cur.push(sym);
            }
            rec(&runs[1..], extra - give, cur, out);
            cur.truncate(cur.len() - (min + give));
        }
    }
    rec(&runs, extra, &mut cur, &mut out);
    out.sort_unstable();
    Ok(out)
}
