//! Symbol inventories: context-independent characters, context-dependent
//! bi-/tri-characters, blank variants, and the collapse function `B`.
//!
//! A base (order-1) alphabet holds the blank at id 0 plus one id per
//! character. Context-dependent alphabets are built on top of it:
//!
//! * order 2 enumerates the full `base × base` id grid so that
//!   `id = left · |base| + center`. With a single blank, only the `(∅,∅)`
//!   entry acts as blank and the remaining blank-centered entries are
//!   marked unusable; with context-dependent blanks every `(x,∅)` entry is
//!   a live blank variant.
//! * order 3 keeps a restricted inventory: the blank at id 0 plus the
//!   allowed `(left, center, right)` triples in lexicographic id order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Base symbol id. Id 0 is always the blank (doubling as the boundary
/// context ∅).
pub type BaseId = u32;

/// Dense id within a [`CdAlphabet`].
pub type CdId = u32;

pub const BLANK: BaseId = 0;
pub const BLANK_NAME: &str = "∅";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlankMode {
    /// One context-free blank shared by every context.
    Single,
    /// One blank per left context (order-2 alphabets only).
    ContextDependent,
}

/// One entry of a context-dependent inventory.
///
/// `left`/`right` hold base ids, with the blank id 0 doubling as the
/// utterance boundary; they are only meaningful for the orders that use
/// them. A blank entry is one whose center is the base blank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CdSymbol {
    pub id: CdId,
    pub left: BaseId,
    pub center: BaseId,
    pub right: BaseId,
    /// Whether this id can appear in an extended transcript under the
    /// alphabet's blank mode.
    pub usable: bool,
}

impl CdSymbol {
    pub fn is_blank(&self) -> bool {
        self.center == BLANK
    }
}

/// An indexed inventory of symbols for one context order. Immutable after
/// construction, so it can be shared freely across threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CdAlphabet {
    order: u8,
    blank_mode: BlankMode,
    base_names: Vec<String>,
    symbols: Vec<CdSymbol>,
    /// (left, center, right) → id for order-3 inventories.
    triples: BTreeMap<(BaseId, BaseId, BaseId), CdId>,
}

/// Builds the order-1 alphabet `{∅} ∪ chars` with the blank at id 0.
pub fn build_ci_alphabet<S: AsRef<str>>(chars: &[S]) -> Result<CdAlphabet> {
    if chars.is_empty() {
        return Err(Error::EmptyAlphabet);
    }
    let mut base_names = vec![BLANK_NAME.to_string()];
    for c in chars {
        let name = c.as_ref();
        if name.chars().count() != 1 || name == BLANK_NAME || name.chars().any(|c| c.is_whitespace())
        {
            return Err(Error::BadSymbolName(name.to_string()));
        }
        if base_names.iter().any(|n| n == name) {
            return Err(Error::DuplicateSymbol(name.to_string()));
        }
        base_names.push(name.to_string());
    }
    let symbols = (0..base_names.len() as CdId)
        .map(|id| CdSymbol {
            id,
            left: BLANK,
            center: id,
            right: BLANK,
            usable: true,
        })
        .collect();
    Ok(CdAlphabet {
        order: 1,
        blank_mode: BlankMode::Single,
        base_names,
        symbols,
        triples: BTreeMap::new(),
    })
}

/// Enumerates the full bi-character grid over `base`, `id = left · |base| + center`.
pub fn build_bichar_alphabet(base: &CdAlphabet, blank_mode: BlankMode) -> Result<CdAlphabet> {
    if base.order != 1 {
        return Err(Error::WrongOrder {
            expected: 1,
            got: base.order,
        });
    }
    let b = base.size() as CdId;
    let mut symbols = Vec::with_capacity((b * b) as usize);
    for left in 0..b {
        for center in 0..b {
            let usable = match blank_mode {
                BlankMode::Single => center != BLANK || left == BLANK,
                BlankMode::ContextDependent => true,
            };
            symbols.push(CdSymbol {
                id: left * b + center,
                left,
                center,
                right: BLANK,
                usable,
            });
        }
    }
    Ok(CdAlphabet {
        order: 2,
        blank_mode,
        base_names: base.base_names.clone(),
        symbols,
        triples: BTreeMap::new(),
    })
}

/// Builds a restricted tri-character inventory: blank at id 0, then the
/// allowed `(left, center, right)` triples in lexicographic order.
pub fn build_trichar_alphabet(
    base: &CdAlphabet,
    allowed: &[(BaseId, BaseId, BaseId)],
) -> Result<CdAlphabet> {
    if base.order != 1 {
        return Err(Error::WrongOrder {
            expected: 1,
            got: base.order,
        });
    }
    if allowed.is_empty() {
        return Err(Error::EmptyAlphabet);
    }
    let b = base.size() as BaseId;
    let mut sorted: Vec<(BaseId, BaseId, BaseId)> = Vec::with_capacity(allowed.len());
    for &(l, c, r) in allowed {
        if l >= b || c >= b || r >= b {
            return Err(Error::UnknownSymbol(format!("({l},{c},{r})")));
        }
        if c == BLANK {
            return Err(Error::BadSymbolName(format!(
                "{}{}{}",
                base.base_name(l),
                BLANK_NAME,
                base.base_name(r)
            )));
        }
        sorted.push((l, c, r));
    }
    sorted.sort_unstable();
    sorted.dedup();

    let mut symbols = vec![CdSymbol {
        id: 0,
        left: BLANK,
        center: BLANK,
        right: BLANK,
        usable: true,
    }];
    let mut triples = BTreeMap::new();
    triples.insert((BLANK, BLANK, BLANK), 0);
    for (i, &(l, c, r)) in sorted.iter().enumerate() {
        let id = (i + 1) as CdId;
        symbols.push(CdSymbol {
            id,
            left: l,
            center: c,
            right: r,
            usable: true,
        });
        triples.insert((l, c, r), id);
    }
    Ok(CdAlphabet {
        order: 3,
        blank_mode: BlankMode::Single,
        base_names: base.base_names.clone(),
        symbols,
        triples,
    })
}

impl CdAlphabet {
    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn blank_mode(&self) -> BlankMode {
        self.blank_mode
    }

    /// Size of the id space (full grid for order 2, blank + allowed set for
    /// order 3). Score matrices are this wide.
    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn base_size(&self) -> usize {
        self.base_names.len()
    }

    pub fn base_name(&self, id: BaseId) -> &str {
        &self.base_names[id as usize]
    }

    pub fn base_names(&self) -> &[String] {
        &self.base_names
    }

    pub fn base_id(&self, name: &str) -> Result<BaseId> {
        self.base_names
            .iter()
            .position(|n| n == name)
            .map(|i| i as BaseId)
            .ok_or_else(|| Error::UnknownSymbol(name.to_string()))
    }

    pub fn symbol(&self, id: CdId) -> &CdSymbol {
        &self.symbols[id as usize]
    }

    pub fn symbols(&self) -> &[CdSymbol] {
        &self.symbols
    }

    pub fn is_blank(&self, id: CdId) -> bool {
        self.symbols[id as usize].is_blank()
    }

    pub fn is_usable(&self, id: CdId) -> bool {
        self.symbols[id as usize].usable
    }

    /// Ids that can actually appear in an extended transcript.
    pub fn usable_ids(&self) -> impl Iterator<Item = CdId> + '_ {
        self.symbols.iter().filter(|s| s.usable).map(|s| s.id)
    }

    pub fn usable_count(&self) -> usize {
        self.symbols.iter().filter(|s| s.usable).count()
    }

    /// The context-free blank (single-blank alphabets) or the boundary
    /// blank ∅∅ (context-dependent mode). Always id 0.
    pub fn blank(&self) -> CdId {
        0
    }

    /// The blank variant exposed after a symbol whose center is `context`.
    pub fn blank_for_context(&self, context: BaseId) -> CdId {
        match self.blank_mode {
            BlankMode::Single => 0,
            BlankMode::ContextDependent => context * self.base_size() as CdId + BLANK,
        }
    }

    pub fn lookup(&self, left: BaseId, center: BaseId, right: BaseId) -> Option<CdId> {
        match self.order {
            1 => {
                if (center as usize) < self.base_size() {
                    Some(center)
                } else {
                    None
                }
            }
            2 => {
                let b = self.base_size() as CdId;
                if left < b && center < b {
                    Some(left * b + center)
                } else {
                    None
                }
            }
            _ => self.triples.get(&(left, center, right)).copied(),
        }
    }

    /// Printable name of a symbol id, e.g. `a`, `∅a`, `a∅`, `∅ab`.
    pub fn name(&self, id: CdId) -> String {
        let s = self.symbol(id);
        match self.order {
            1 => self.base_name(s.center).to_string(),
            2 => {
                if s.is_blank() && self.blank_mode == BlankMode::Single {
                    BLANK_NAME.to_string()
                } else {
                    let mut out = String::new();
                    let _ = write!(out, "{}{}", self.base_name(s.left), self.base_name(s.center));
                    out
                }
            }
            _ => {
                if s.is_blank() {
                    BLANK_NAME.to_string()
                } else {
                    format!(
                        "{}{}{}",
                        self.base_name(s.left),
                        self.base_name(s.center),
                        self.base_name(s.right)
                    )
                }
            }
        }
    }

    /// Whether `next` may immediately follow `prev` in some valid extended
    /// transcript. Repeating the identical symbol is always fine; otherwise
    /// the context carried by `next` has to match what `prev` exposes.
    pub fn overlap_ok(&self, prev: CdId, next: CdId) -> bool {
        if prev == next || self.order == 1 {
            return true;
        }
        let p = self.symbol(prev);
        let n = self.symbol(next);
        // Exposed context after `p`: its center, or for blanks the context
        // they carry (none, for the context-free blank).
        let exposed = if p.is_blank() {
            match self.blank_mode {
                // A context-free blank keeps whatever context preceded it,
                // so any follower is possible in some string.
                BlankMode::Single => return true,
                BlankMode::ContextDependent => p.left,
            }
        } else {
            p.center
        };
        if n.is_blank() {
            return match self.blank_mode {
                BlankMode::Single => true,
                BlankMode::ContextDependent => n.left == exposed,
            };
        }
        if n.left != exposed {
            return false;
        }
        if self.order == 3 && !p.is_blank() {
            // The previous symbol also announced the next center.
            return n.center == p.right;
        }
        true
    }

    /// The collapse function B: drop consecutive duplicates, drop blanks,
    /// map what is left to center symbols.
    pub fn collapse(&self, extended: &[CdId]) -> Vec<BaseId> {
        let mut out = Vec::new();
        let mut prev: Option<CdId> = None;
        for &id in extended {
            if prev == Some(id) {
                continue;
            }
            prev = Some(id);
            let s = self.symbol(id);
            if !s.is_blank() {
                out.push(s.center);
            }
        }
        out
    }

    /// Maps a transcript to its context-dependent form using the true
    /// neighbors, with the boundary ∅ at both edges.
    pub fn cd_expand(&self, transcript: &[BaseId]) -> Result<Vec<CdId>> {
        let b = self.base_size() as BaseId;
        for &y in transcript {
            if y >= b || y == BLANK {
                return Err(Error::UnknownSymbol(format!("base id {y}")));
            }
        }
        let n = transcript.len();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let left = if i == 0 { BLANK } else { transcript[i - 1] };
            let right = if i + 1 == n { BLANK } else { transcript[i + 1] };
            let (l, r) = match self.order {
                1 => (BLANK, BLANK),
                2 => (left, BLANK),
                _ => (left, right),
            };
            let id = self.lookup(l, transcript[i], r).ok_or_else(|| {
                Error::MissingCdSymbol(format!(
                    "{}{}{}",
                    self.base_name(l),
                    self.base_name(transcript[i]),
                    self.base_name(r)
                ))
            })?;
            out.push(id);
        }
        Ok(out)
    }

    /// Parses a transcript string, one character per symbol.
    pub fn parse_transcript(&self, text: &str) -> Result<Vec<BaseId>> {
        text.chars()
            .map(|c| self.base_id(&c.to_string()))
            .collect()
    }

    pub fn transcript_string(&self, transcript: &[BaseId]) -> String {
        transcript.iter().map(|&y| self.base_name(y)).collect()
    }
}

/// Reads a base alphabet file: one symbol name per line, blank implicit at
/// id 0 so line k holds the name of id k+1.
pub fn load_ci_alphabet_file(path: &Path) -> Result<CdAlphabet> {
    let text = std::fs::read_to_string(path)?;
    let names: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    build_ci_alphabet(&names)
}

/// Parses an allowed tri-character set: one triple per line, tab-separated
/// names, with "∅" denoting the boundary.
pub fn parse_allowed_triples(
    text: &str,
    base: &CdAlphabet,
) -> Result<Vec<(BaseId, BaseId, BaseId)>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!(
                "line {}: expected 3 tab-separated names, got {}",
                ln + 1,
                parts.len()
            )));
        }
        out.push((
            base.base_id(parts[0])?,
            base.base_id(parts[1])?,
            base.base_id(parts[2])?,
        ));
    }
    if out.is_empty() {
        return Err(Error::EmptyAlphabet);
    }
    Ok(out)
}

/// All triples over the base alphabet with a non-blank center; handy for
/// unrestricted toy inventories.
pub fn all_triples(base: &CdAlphabet) -> Vec<(BaseId, BaseId, BaseId)> {
    let b = base.size() as BaseId;
    let mut out = Vec::new();
    for l in 0..b {
        for c in 1..b {
            for r in 0..b {
                out.push((l, c, r));
            }
        }
    }
    out
}
