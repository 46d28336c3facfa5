//! Finite-state topologies over extended symbol sequences.
//!
//! Every graph here is input-deterministic and free of input epsilons, so
//! each accepted extended string corresponds to exactly one accepting path
//! and path sums never double count. Input labels are [`CdId`]s consuming
//! one frame each; output label 0 is epsilon, any other output is the base
//! id the arc emits into the collapsed transcript. State 0 is always the
//! start state.
//!
//! Decode graphs accept every contextually consistent extended string.
//! Numerator graphs accept the subset that collapses to one transcript,
//! either enforcing context consistency (the global losses) or ignoring it
//! (the local loss, which sums the whole collapse preimage).

use std::fmt::Write as _;

use crate::alphabet::{BaseId, CdAlphabet, CdId, BLANK};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub src: u32,
    pub dst: u32,
    pub ilabel: CdId,
    /// 0 = epsilon, otherwise the emitted base id.
    pub olabel: BaseId,
    /// Log-domain arc weight. Topology arcs are unweighted (0.0).
    pub weight: f64,
}

/// Immutable arc-list automaton. Arcs are sorted by `(src, ilabel)` once at
/// construction, so arc indices double as deterministic tie-break keys.
#[derive(Debug, Clone, PartialEq)]
pub struct Fst {
    num_states: u32,
    arcs: Vec<Arc>,
    /// Index range into `arcs` per state.
    ranges: Vec<(u32, u32)>,
    /// Log-domain final weight per state; -inf marks a non-final state.
    finals: Vec<f64>,
}

/// Mutable accumulator for building an [`Fst`].
#[derive(Debug, Default)]
pub struct FstBuilder {
    num_states: u32,
    arcs: Vec<Arc>,
    finals: Vec<(u32, f64)>,
}

impl FstBuilder {
    pub fn new(num_states: u32) -> Self {
        FstBuilder {
            num_states,
            arcs: Vec::new(),
            finals: Vec::new(),
        }
    }

    pub fn add_state(&mut self) -> u32 {
        self.num_states += 1;
        self.num_states - 1
    }

    pub fn arc(&mut self, src: u32, dst: u32, ilabel: CdId, olabel: BaseId) {
        self.arcs.push(Arc {
            src,
            dst,
            ilabel,
            olabel,
            weight: 0.0,
        });
    }

    pub fn weighted_arc(&mut self, src: u32, dst: u32, ilabel: CdId, olabel: BaseId, weight: f64) {
        self.arcs.push(Arc {
            src,
            dst,
            ilabel,
            olabel,
            weight,
        });
    }

    pub fn set_final(&mut self, state: u32, weight: f64) {
        self.finals.push((state, weight));
    }

    pub fn finish(self) -> Result<Fst> {
        let n = self.num_states;
        if n == 0 {
            return Err(Error::Parse("automaton has no states".into()));
        }
        let mut arcs = self.arcs;
        for a in &arcs {
            if a.src >= n || a.dst >= n {
                return Err(Error::Parse(format!(
                    "arc {} -> {} references a state outside 0..{}",
                    a.src, a.dst, n
                )));
            }
        }
        arcs.sort_by_key(|a| (a.src, a.ilabel, a.dst));
        for w in arcs.windows(2) {
            if w[0].src == w[1].src && w[0].ilabel == w[1].ilabel {
                return Err(Error::Parse(format!(
                    "state {} has two arcs with input label {}",
                    w[0].src, w[0].ilabel
                )));
            }
        }
        let mut ranges = vec![(0u32, 0u32); n as usize];
        let mut i = 0usize;
        while i < arcs.len() {
            let s = arcs[i].src;
            let begin = i;
            while i < arcs.len() && arcs[i].src == s {
                i += 1;
            }
            ranges[s as usize] = (begin as u32, i as u32);
        }
        let mut finals = vec![f64::NEG_INFINITY; n as usize];
        for (s, w) in self.finals {
            if s >= n {
                return Err(Error::Parse(format!(
                    "final state {s} outside 0..{n}"
                )));
            }
            finals[s as usize] = w;
        }
        Ok(Fst {
            num_states: n,
            arcs,
            ranges,
            finals,
        })
    }
}

impl Fst {
    pub fn num_states(&self) -> u32 {
        self.num_states
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn arcs_from(&self, state: u32) -> &[Arc] {
        let (b, e) = self.ranges[state as usize];
        &self.arcs[b as usize..e as usize]
    }

    /// Index of a state's arc slice within [`Fst::arcs`].
    pub fn arc_offset(&self, state: u32) -> usize {
        self.ranges[state as usize].0 as usize
    }

    pub fn final_weight(&self, state: u32) -> f64 {
        self.finals[state as usize]
    }

    pub fn is_final(&self, state: u32) -> bool {
        self.finals[state as usize].is_finite()
    }

    pub fn final_states(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.finals
            .iter()
            .enumerate()
            .filter(|(_, w)| w.is_finite())
            .map(|(s, &w)| (s as u32, w))
    }

    /// Fewest frames any accepting path consumes, if one exists.
    pub fn shortest_accepting_length(&self) -> Option<usize> {
        let n = self.num_states as usize;
        let mut dist = vec![usize::MAX; n];
        dist[0] = 0;
        let mut frontier = vec![0u32];
        let mut next = Vec::new();
        let mut d = 0usize;
        while !frontier.is_empty() {
            for &s in &frontier {
                for a in self.arcs_from(s) {
                    if dist[a.dst as usize] == usize::MAX {
                        dist[a.dst as usize] = d + 1;
                        next.push(a.dst);
                    }
                }
            }
            d += 1;
            frontier.clear();
            std::mem::swap(&mut frontier, &mut next);
        }
        self.final_states()
            .map(|(s, _)| dist[s as usize])
            .filter(|&d| d != usize::MAX)
            .min()
    }

    /// Serializes to the text format: arc lines
    /// `src TAB dst TAB ilabel TAB olabel TAB weight`, then one
    /// `state TAB weight` line per final state, weights with 17 significant
    /// digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for a in &self.arcs {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.16e}",
                a.src, a.dst, a.ilabel, a.olabel, a.weight
            );
        }
        for (s, w) in self.final_states() {
            let _ = writeln!(out, "{}\t{:.16e}", s, w);
        }
        out
    }

    /// Parses the text format produced by [`Fst::to_text`]. The state count
    /// is the highest state id mentioned plus one.
    pub fn from_text(text: &str) -> Result<Fst> {
        let mut builder = FstBuilder::new(0);
        let mut max_state = 0u32;
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = |what: &str| {
                Error::Parse(format!("line {}: {}", ln + 1, what))
            };
            match fields.len() {
                5 => {
                    let src: u32 = fields[0].parse().map_err(|_| bad("bad src"))?;
                    let dst: u32 = fields[1].parse().map_err(|_| bad("bad dst"))?;
                    let ilabel: u32 = fields[2].parse().map_err(|_| bad("bad ilabel"))?;
                    let olabel: u32 = fields[3].parse().map_err(|_| bad("bad olabel"))?;
                    let weight: f64 = fields[4].parse().map_err(|_| bad("bad weight"))?;
                    max_state = max_state.max(src).max(dst);
                    builder.weighted_arc(src, dst, ilabel, olabel, weight);
                }
                2 => {
                    let state: u32 = fields[0].parse().map_err(|_| bad("bad state"))?;
                    let weight: f64 = fields[1].parse().map_err(|_| bad("bad weight"))?;
                    max_state = max_state.max(state);
                    builder.set_final(state, weight);
                }
                n => return Err(bad(&format!("expected 2 or 5 fields, got {n}"))),
            }
        }
        builder.num_states = max_state + 1;
        builder.finish()
    }
}

/// Decode graph for the alphabet's order: accepts every contextually
/// consistent extended string and outputs its collapse.
pub fn decode_graph(a: &CdAlphabet) -> Result<Fst> {
    match a.order() {
        1 => ci_decode_graph(a),
        2 => bichar_decode_graph(a),
        _ => trichar_decode_graph(a),
    }
}

/// Order-1 graph: state 0 tracks "after blank or start", state c tracks
/// "inside character c". `1 + |L|` states.
fn ci_decode_graph(a: &CdAlphabet) -> Result<Fst> {
    let b = a.base_size() as u32;
    let mut g = FstBuilder::new(b);
    for s in 0..b {
        g.arc(s, 0, BLANK, 0);
        g.set_final(s, 0.0);
        for c in 1..b {
            if c != s {
                g.arc(s, c, c, c);
            } else {
                g.arc(s, c, c, 0);
            }
        }
    }
    g.finish()
}

/// Order-2 graph over the exposed-context grid. State `x·(1+|L|) + 0` is
/// the blank state with exposed context x; state `x·(1+|L|) + c` means the
/// last symbol was the bi-character xc. Covers both blank modes: a single
/// blank is context-transparent, context-dependent blanks carry their
/// context as the input label.
fn bichar_decode_graph(a: &CdAlphabet) -> Result<Fst> {
    if a.order() != 2 {
        return Err(Error::WrongOrder {
            expected: 2,
            got: a.order(),
        });
    }
    let b = a.base_size() as u32;
    let state = |x: u32, o: u32| x * b + o;
    let mut g = FstBuilder::new(b * b);
    for x in 0..b {
        let bx = state(x, 0);
        g.set_final(bx, 0.0);
        g.arc(bx, bx, a.blank_for_context(x), 0);
        for c in 1..b {
            g.arc(bx, state(x, c), a.lookup(x, c, BLANK).unwrap(), c);
        }
        for c in 1..b {
            let sxc = state(x, c);
            let sym = a.lookup(x, c, BLANK).unwrap();
            g.set_final(sxc, 0.0);
            g.arc(sxc, sxc, sym, 0);
            g.arc(sxc, state(c, 0), a.blank_for_context(c), 0);
            for n in 1..b {
                if !(x == c && n == c) {
                    g.arc(sxc, state(c, n), a.lookup(c, n, BLANK).unwrap(), n);
                }
            }
        }
    }
    g.finish()
}

/// Order-3 graph. A tri-character announces both its exposed center and the
/// center it promises next, so states are "inside symbol s" plus one
/// exposure state per distinct `(center, right)` pair reached after a
/// blank. A symbol whose right context is the boundary promises the end of
/// the utterance: only blanks may follow and the state is accepting.
fn trichar_decode_graph(a: &CdAlphabet) -> Result<Fst> {
    if a.order() != 3 {
        return Err(Error::WrongOrder {
            expected: 3,
            got: a.order(),
        });
    }
    let syms: Vec<CdId> = a.usable_ids().filter(|&s| !a.is_blank(s)).collect();
    // Exposure states keyed by (center, right), in sorted order.
    let mut exposures: Vec<(BaseId, BaseId)> = syms
        .iter()
        .map(|&s| {
            let sym = a.symbol(s);
            (sym.center, sym.right)
        })
        .collect();
    exposures.sort_unstable();
    exposures.dedup();
    let exposure_state = |c: BaseId, r: BaseId| -> u32 {
        let i = exposures.binary_search(&(c, r)).unwrap();
        1 + syms.len() as u32 + i as u32
    };
    let in_state = |idx: usize| 1 + idx as u32;

    let mut g = FstBuilder::new(1 + syms.len() as u32 + exposures.len() as u32);
    g.set_final(0, 0.0);
    g.arc(0, 0, BLANK, 0);
    for (i, &s) in syms.iter().enumerate() {
        if a.symbol(s).left == BLANK {
            g.arc(0, in_state(i), s, a.symbol(s).center);
        }
    }
    for (i, &s) in syms.iter().enumerate() {
        let sym = *a.symbol(s);
        let st = in_state(i);
        g.arc(st, st, s, 0);
        g.arc(st, exposure_state(sym.center, sym.right), BLANK, 0);
        if sym.right == BLANK {
            g.set_final(st, 0.0);
        }
        for (j, &nxt) in syms.iter().enumerate() {
            let n = a.symbol(nxt);
            if nxt != s && n.left == sym.center && n.center == sym.right {
                g.arc(st, in_state(j), nxt, n.center);
            }
        }
    }
    for (i, &(c, r)) in exposures.iter().enumerate() {
        let st = 1 + syms.len() as u32 + i as u32;
        g.arc(st, st, BLANK, 0);
        if r == BLANK {
            g.set_final(st, 0.0);
        }
        for (j, &nxt) in syms.iter().enumerate() {
            let n = a.symbol(nxt);
            if n.left == c && n.center == r {
                g.arc(st, in_state(j), nxt, n.center);
            }
        }
    }
    g.finish()
}

/// Numerator graph for the global losses: accepts exactly the contextually
/// consistent extended strings that collapse to `transcript`. Those strings
/// use the context-dependent expansion of the transcript, so the graph is
/// the usual chain `b_0 q_1 b_1 … q_n b_n` with a skip arc wherever
/// adjacent expanded symbols differ.
pub fn numerator_graph(a: &CdAlphabet, transcript: &[BaseId]) -> Result<Fst> {
    let e = a.cd_expand(transcript)?;
    let n = e.len();
    let mut g = FstBuilder::new(2 * n as u32 + 1);
    let bstate = |i: usize| 2 * i as u32;
    let qstate = |i: usize| 2 * i as u32 - 1;
    // Blank after position i: the boundary blank at the start, then the
    // blank exposed by each transcript symbol.
    let blank_at = |i: usize| {
        if i == 0 {
            a.blank()
        } else {
            a.blank_for_context(transcript[i - 1])
        }
    };
    g.arc(bstate(0), bstate(0), blank_at(0), 0);
    for i in 1..=n {
        let q = qstate(i);
        g.arc(bstate(i - 1), q, e[i - 1], transcript[i - 1]);
        g.arc(q, q, e[i - 1], 0);
        g.arc(q, bstate(i), blank_at(i), 0);
        g.arc(bstate(i), bstate(i), blank_at(i), 0);
        if i < n && e[i] != e[i - 1] {
            g.arc(q, qstate(i + 1), e[i], transcript[i]);
        }
    }
    if n > 0 {
        g.set_final(qstate(n), 0.0);
    }
    g.set_final(bstate(n), 0.0);
    g.finish()
}

/// Numerator graph for the local loss: accepts every extended string that
/// collapses to `transcript`, with no context consistency requirement.
/// Position i fans out over every usable symbol whose center is `y_i`, and
/// blank regions admit every usable blank variant.
pub fn free_numerator_graph(a: &CdAlphabet, transcript: &[BaseId]) -> Result<Fst> {
    let blanks: Vec<CdId> = a.usable_ids().filter(|&s| a.is_blank(s)).collect();
    let variants: Vec<Vec<CdId>> = transcript
        .iter()
        .map(|&y| {
            let c: Vec<CdId> = a
                .usable_ids()
                .filter(|&s| !a.is_blank(s) && a.symbol(s).center == y)
                .collect();
            if c.is_empty() {
                Err(Error::Unrealizable(format!(
                    "no usable symbol has center {}",
                    a.base_name(y)
                )))
            } else {
                Ok(c)
            }
        })
        .collect::<Result<_>>()?;

    let n = transcript.len();
    // States: blank state per gap, then one state per (position, variant).
    let mut q_base = vec![0u32; n];
    let mut next = n as u32 + 1;
    for i in 0..n {
        q_base[i] = next;
        next += variants[i].len() as u32;
    }
    let bstate = |i: usize| i as u32;

    let mut g = FstBuilder::new(next);
    for i in 0..=n {
        for &bl in &blanks {
            g.arc(bstate(i), bstate(i), bl, 0);
        }
    }
    for i in 0..n {
        for (vi, &u) in variants[i].iter().enumerate() {
            let q = q_base[i] + vi as u32;
            g.arc(bstate(i), q, u, transcript[i]);
            g.arc(q, q, u, 0);
            for &bl in &blanks {
                g.arc(q, bstate(i + 1), bl, 0);
            }
            if i + 1 < n {
                for (vj, &v) in variants[i + 1].iter().enumerate() {
                    if v != u {
                        g.arc(q, q_base[i + 1] + vj as u32, v, transcript[i + 1]);
                    }
                }
            }
            if i + 1 == n {
                g.set_final(q, 0.0);
            }
        }
    }
    g.set_final(bstate(n), 0.0);
    g.finish()
}

/// Frame-indexed view of an automaton: the states alive at each layer of
/// the `frames + 1` layer trellis, keeping only states on some accepting
/// path of exactly `frames` arcs.
#[derive(Debug, Clone)]
pub struct Trellis {
    pub frames: usize,
    /// `active[t]` lists the live states at layer t, ascending.
    pub active: Vec<Vec<u32>>,
}

/// Intersects forward reachability from the start state with backward
/// reachability from the final states, layer by layer.
pub fn unroll(fst: &Fst, frames: usize) -> Result<Trellis> {
    let n = fst.num_states() as usize;
    let mut fwd = vec![vec![false; n]; frames + 1];
    fwd[0][0] = true;
    for t in 0..frames {
        for s in 0..n {
            if fwd[t][s] {
                for a in fst.arcs_from(s as u32) {
                    fwd[t + 1][a.dst as usize] = true;
                }
            }
        }
    }
    // Reverse adjacency once; the backward sweep walks arcs by destination.
    let mut preds: Vec<Vec<u32>> = vec![Vec::new(); n];
    for a in fst.arcs() {
        preds[a.dst as usize].push(a.src);
    }
    let mut bwd = vec![false; n];
    for (s, _) in fst.final_states() {
        bwd[s as usize] = true;
    }
    let mut active = vec![Vec::new(); frames + 1];
    for t in (0..=frames).rev() {
        let layer: Vec<u32> = (0..n as u32)
            .filter(|&s| fwd[t][s as usize] && bwd[s as usize])
            .collect();
        if layer.is_empty() {
            return Err(Error::NoAcceptingPath { frames });
        }
        active[t] = layer;
        if t > 0 {
            let mut prev = vec![false; n];
            for s in 0..n {
                if bwd[s] {
                    for &p in &preds[s] {
                        prev[p as usize] = true;
                    }
                }
            }
            bwd = prev;
        }
    }
    Ok(Trellis { frames, active })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::{
        all_triples, build_bichar_alphabet, build_ci_alphabet, build_trichar_alphabet, BlankMode,
    };

    fn ab() -> CdAlphabet {
        build_ci_alphabet(&["a", "b"]).unwrap()
    }

    #[test]
    fn ci_graph_shape() {
        let g = decode_graph(&ab()).unwrap();
        assert_eq!(g.num_states(), 3);
        assert_eq!(g.num_arcs(), 9);
        for s in 0..3 {
            assert!(g.is_final(s));
        }
    }

    #[test]
    fn bichar_graph_matches_nine_state_figure() {
        let a = build_bichar_alphabet(&ab(), BlankMode::Single).unwrap();
        let g = decode_graph(&a).unwrap();
        assert_eq!(g.num_states(), 9);
        assert_eq!(g.num_arcs(), 31);
        // Figure layout: states x·3+o with o=0 the blank state for exposed
        // context x. Ids: ∅a=1 ∅b=2 aa=4 ab=5 ba=7 bb=8.
        let has = |src: u32, dst: u32, ilabel: u32| {
            g.arcs_from(src)
                .iter()
                .any(|a| a.dst == dst && a.ilabel == ilabel)
        };
        assert!(has(0, 0, 0), "blank self loop at start");
        assert!(has(0, 1, 1), "∅a entry");
        assert!(has(1, 1, 1), "∅a repeat");
        assert!(has(1, 3, 0), "blank after ∅a keeps context a");
        assert!(has(1, 4, 4), "∅a then aa");
        assert!(has(1, 5, 5), "∅a then ab");
        assert!(has(3, 4, 4), "blank state a enters aa");
        assert!(has(4, 5, 5), "aa then ab");
        assert!(!has(4, 4, 4) || g.arcs_from(4).iter().any(|x| x.dst == 4 && x.olabel == 0));
        assert!(has(8, 7, 7), "bb then ba");
        assert!(!has(3, 7, 7), "ba needs exposed context b, not a");
        // Emitting arcs out of S_aa exclude a second aa emission.
        assert_eq!(
            g.arcs_from(4)
                .iter()
                .filter(|a| a.olabel != 0)
                .count(),
            1
        );
    }

    #[test]
    fn cd_blank_graph_uses_contextual_blanks() {
        let a = build_bichar_alphabet(&ab(), BlankMode::ContextDependent).unwrap();
        let g = decode_graph(&a).unwrap();
        assert_eq!(g.num_states(), 9);
        assert_eq!(g.num_arcs(), 31);
        // ids: ∅∅=0 a∅=3 b∅=6.
        let self_loop = |s: u32| {
            g.arcs_from(s)
                .iter()
                .find(|a| a.dst == s && a.olabel == 0)
                .map(|a| a.ilabel)
        };
        assert_eq!(self_loop(0), Some(0));
        assert_eq!(self_loop(3), Some(3));
        assert_eq!(self_loop(6), Some(6));
        // Blank after ab carries context b.
        assert!(g.arcs_from(5).iter().any(|a| a.dst == 6 && a.ilabel == 6));
    }

    #[test]
    fn all_graphs_are_input_deterministic() {
        let ci = ab();
        let graphs = vec![
            decode_graph(&ci).unwrap(),
            decode_graph(&build_bichar_alphabet(&ci, BlankMode::Single).unwrap()).unwrap(),
            decode_graph(&build_bichar_alphabet(&ci, BlankMode::ContextDependent).unwrap())
                .unwrap(),
            decode_graph(&build_trichar_alphabet(&ci, &all_triples(&ci)).unwrap()).unwrap(),
            numerator_graph(&ci, &[1, 2, 2, 1]).unwrap(),
            free_numerator_graph(
                &build_bichar_alphabet(&ci, BlankMode::Single).unwrap(),
                &[1, 2, 2, 1],
            )
            .unwrap(),
        ];
        for g in graphs {
            for s in 0..g.num_states() {
                let mut labels: Vec<u32> = g.arcs_from(s).iter().map(|a| a.ilabel).collect();
                let before = labels.len();
                labels.dedup();
                assert_eq!(labels.len(), before, "state {s} repeats an input label");
            }
        }
    }

    #[test]
    fn trichar_graph_requires_boundary_right_context_to_accept() {
        let ci = ab();
        let tri = build_trichar_alphabet(&ci, &all_triples(&ci)).unwrap();
        let g = decode_graph(&tri).unwrap();
        // in-states: final iff the symbol's right context is the boundary.
        let syms: Vec<u32> = tri.usable_ids().filter(|&s| !tri.is_blank(s)).collect();
        for (i, &s) in syms.iter().enumerate() {
            let st = 1 + i as u32;
            assert_eq!(g.is_final(st), tri.symbol(s).right == BLANK);
        }
    }

    #[test]
    fn numerator_chain_shape_and_skips() {
        let ci = ab();
        // CI "abba": the repeated b's force one blank, so 5 arcs minimum.
        let g = numerator_graph(&ci, &[1, 2, 2, 1]).unwrap();
        assert_eq!(g.num_states(), 9);
        assert_eq!(g.shortest_accepting_length(), Some(5));
        // Bi-char "abba" expands to ∅a ab bb ba, all distinct: no blank.
        let bi = build_bichar_alphabet(&ci, BlankMode::Single).unwrap();
        let g = numerator_graph(&bi, &[1, 2, 2, 1]).unwrap();
        assert_eq!(g.shortest_accepting_length(), Some(4));
        // "aa" forces a blank between the two copies.
        let g = numerator_graph(&ci, &[1, 1]).unwrap();
        assert_eq!(g.shortest_accepting_length(), Some(3));
        // bi-char "aa" expands to ∅a aa, which differ, so no blank needed.
        let bi = build_bichar_alphabet(&ci, BlankMode::Single).unwrap();
        let g = numerator_graph(&bi, &[1, 1]).unwrap();
        assert_eq!(g.shortest_accepting_length(), Some(2));
        // Empty transcript: a single blank-looping state.
        let g = numerator_graph(&ci, &[]).unwrap();
        assert_eq!(g.num_states(), 1);
        assert_eq!(g.shortest_accepting_length(), Some(0));
    }

    #[test]
    fn cd_blank_numerator_pins_blank_variants() {
        let a = build_bichar_alphabet(&ab(), BlankMode::ContextDependent).unwrap();
        let g = numerator_graph(&a, &[1, 2]).unwrap();
        // Blank regions: ∅∅ before a, a∅ between, b∅ after. ids 0, 3, 6.
        let loops: Vec<u32> = (0..g.num_states())
            .flat_map(|s| g.arcs_from(s).iter().filter(move |x| x.dst == s).map(|x| x.ilabel))
            .collect();
        assert!(loops.contains(&0));
        assert!(loops.contains(&3));
        assert!(loops.contains(&6));
    }

    #[test]
    fn free_numerator_fans_out_over_centers() {
        let bi = build_bichar_alphabet(&ab(), BlankMode::Single).unwrap();
        // For "ab": position 1 admits ∅a, aa, ba; position 2 admits ∅b, ab, bb.
        let g = free_numerator_graph(&bi, &[1, 2]).unwrap();
        assert_eq!(g.num_states(), 3 + 6);
        // Every entry arc from the start blank state emits a.
        let entries: Vec<u32> = g
            .arcs_from(0)
            .iter()
            .filter(|a| a.olabel != 0)
            .map(|a| a.ilabel)
            .collect();
        assert_eq!(entries.len(), 3);
        for id in entries {
            assert_eq!(bi.symbol(id).center, 1);
        }
        // The free graph admits contextually broken strings the strict
        // numerator rejects: ∅b at position 2 after aa.
        let aa = bi.lookup(1, 1, 0).unwrap();
        let nb = bi.lookup(0, 2, 0).unwrap();
        assert!(accepts(&g, &[aa, nb]));
        let strict = numerator_graph(&bi, &[1, 2]).unwrap();
        assert!(!accepts(&strict, &[aa, nb]));
        assert!(accepts(&strict, &[bi.lookup(0, 1, 0).unwrap(), bi.lookup(1, 2, 0).unwrap()]));
    }

    /// Runs the deterministic automaton on one extended string.
    fn accepts(g: &Fst, input: &[u32]) -> bool {
        let mut state = 0u32;
        for &sym in input {
            match g.arcs_from(state).iter().find(|a| a.ilabel == sym) {
                Some(a) => state = a.dst,
                None => return false,
            }
        }
        g.is_final(state)
    }

    #[test]
    fn decode_graphs_accept_exactly_the_expansions() {
        let ci = ab();
        for alphabet in [
            build_bichar_alphabet(&ci, BlankMode::Single).unwrap(),
            build_bichar_alphabet(&ci, BlankMode::ContextDependent).unwrap(),
            build_trichar_alphabet(&ci, &all_triples(&ci)).unwrap(),
        ] {
            let g = decode_graph(&alphabet).unwrap();
            for y in [vec![1], vec![1, 2], vec![1, 2, 2, 1], vec![2, 2]] {
                let e = alphabet.cd_expand(&y).unwrap();
                // Interleave blanks as the topology requires and check
                // acceptance of the plain expansion too.
                let mut state = 0u32;
                let mut ok = true;
                for (i, &sym) in e.iter().enumerate() {
                    // Insert a mandatory blank when the expansion repeats.
                    if i > 0 && e[i - 1] == sym {
                        let bl = alphabet.blank_for_context(y[i - 1]);
                        match g.arcs_from(state).iter().find(|a| a.ilabel == bl) {
                            Some(a) => state = a.dst,
                            None => {
                                ok = false;
                                break;
                            }
                        }
                    }
                    match g.arcs_from(state).iter().find(|a| a.ilabel == sym) {
                        Some(a) => state = a.dst,
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                assert!(ok && g.is_final(state), "expansion of {y:?} rejected");
            }
            // A contextually broken string is rejected: ∅a then bb.
            if alphabet.order() == 2 {
                let bad = [alphabet.lookup(0, 1, 0).unwrap(), alphabet.lookup(2, 2, 0).unwrap()];
                assert!(!accepts(&g, &bad));
            }
        }
    }

    #[test]
    fn single_blank_is_transparent_across_blanks() {
        // ∅a ∅ ba is invalid: the blank keeps exposing context a.
        let bi = build_bichar_alphabet(&ab(), BlankMode::Single).unwrap();
        let g = decode_graph(&bi).unwrap();
        let s = |l: u32, c: u32| bi.lookup(l, c, 0).unwrap();
        assert!(!accepts(&g, &[s(0, 1), 0, s(2, 1)]));
        assert!(accepts(&g, &[s(0, 1), 0, s(1, 2)]));
    }

    #[test]
    fn unroll_prunes_and_errors() {
        let ci = ab();
        let g = numerator_graph(&ci, &[1, 1]).unwrap();
        assert!(matches!(
            unroll(&g, 2),
            Err(Error::NoAcceptingPath { frames: 2 })
        ));
        let tr = unroll(&g, 3).unwrap();
        // Exactly one path of length 3: a ∅ a, so one state per layer.
        for layer in &tr.active {
            assert_eq!(layer.len(), 1);
        }
        let tr = unroll(&g, 5).unwrap();
        assert_eq!(tr.active.len(), 6);
        assert_eq!(tr.active[0], vec![0]);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let bi = build_bichar_alphabet(&ab(), BlankMode::Single).unwrap();
        let g = decode_graph(&bi).unwrap();
        let text = g.to_text();
        let parsed = Fst::from_text(&text).unwrap();
        assert_eq!(g, parsed);
        assert_eq!(text, parsed.to_text());
        // 17 significant digits, tab separated.
        let first = text.lines().next().unwrap();
        assert!(first.ends_with("0.0000000000000000e0"));
        assert_eq!(first.split('\t').count(), 5);
    }

    #[test]
    fn builder_rejects_duplicate_input_labels() {
        let mut g = FstBuilder::new(1);
        g.arc(0, 0, 1, 0);
        g.arc(0, 0, 1, 1);
        g.set_final(0, 0.0);
        assert!(g.finish().is_err());
    }
}
