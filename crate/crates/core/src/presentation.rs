//! Finitely presented groups: symmetric generating sets, free reduction,
//! word balls and the builtin families used as testbeds.
//!
//! A [`Word`] is stored in written order `s_l ... s_2 s_1`: the symbol that
//! acts first is the *last* element of the list.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One element of the symmetric generating set: a generator or its formal inverse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GeneratorSymbol {
    pub id: u16,
    pub is_inverse: bool,
}

impl GeneratorSymbol {
    pub const fn new(id: u16) -> Self {
        Self { id, is_inverse: false }
    }

    pub const fn inverse_of(id: u16) -> Self {
        Self { id, is_inverse: true }
    }

    #[must_use]
    pub const fn inv(self) -> Self {
        Self { id: self.id, is_inverse: !self.is_inverse }
    }

    /// Dense index into `S`: generator `i` is `2i`, its inverse `2i + 1`.
    pub const fn slot(self) -> usize {
        2 * self.id as usize + self.is_inverse as usize
    }

    pub const fn from_slot(slot: usize) -> Self {
        Self { id: (slot / 2) as u16, is_inverse: slot % 2 == 1 }
    }
}

/// A word over the symmetric alphabet, written left to right as `s_l ... s_1`.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Word(pub Vec<GeneratorSymbol>);

impl Word {
    pub fn identity() -> Self {
        Self(Vec::new())
    }

    pub fn from_symbols(symbols: impl IntoIterator<Item = GeneratorSymbol>) -> Self {
        Self(symbols.into_iter().collect())
    }

    pub fn symbol(s: GeneratorSymbol) -> Self {
        Self(vec![s])
    }

    /// `s^k` for a single symbol, using the inverse for negative `k`.
    pub fn power(s: GeneratorSymbol, k: i64) -> Self {
        let sym = if k < 0 { s.inv() } else { s };
        Self(vec![sym; k.unsigned_abs() as usize])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[GeneratorSymbol] {
        &self.0
    }

    /// Symbols in the order they act (first-applied first).
    pub fn application_order(&self) -> impl Iterator<Item = GeneratorSymbol> + '_ {
        self.0.iter().rev().copied()
    }

    /// Concatenation `self · other`: `other` acts first.
    #[must_use]
    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    #[must_use]
    pub fn inverse(&self) -> Word {
        Word(self.0.iter().rev().map(|s| s.inv()).collect())
    }

    pub fn is_reduced(&self) -> bool {
        self.0.windows(2).all(|p| p[0] != p[1].inv())
    }
}

/// Free reduction. Idempotent, never lengthens the word.
pub fn reduce_word(w: &Word) -> Word {
    let mut out: Vec<GeneratorSymbol> = Vec::with_capacity(w.len());
    for &s in &w.0 {
        if out.last() == Some(&s.inv()) {
            out.pop();
        } else {
            out.push(s);
        }
    }
    Word(out)
}

/// The builtin presentation families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum BuiltinFamily {
    FreeGroup { k: u16 },
    IntegerLattice { d: u16 },
    Cyclic { n: u32 },
    SurfaceGenus { g: u16 },
}

/// `G = <S | R>` with `S` symmetric.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupPresentation {
    names: Vec<String>,
    relations: Vec<Word>,
    family: Option<BuiltinFamily>,
}

impl GroupPresentation {
    /// Generators are named `g0, g1, ...`; the inverse of `gi` prints as `Gi`.
    pub fn new(generator_count: u16, relations: Vec<Word>) -> Result<Self> {
        let names = (0..generator_count).map(|i| format!("g{i}")).collect();
        Self::with_names(names, relations)
    }

    pub fn with_names(names: Vec<String>, relations: Vec<Word>) -> Result<Self> {
        if names.len() > u16::MAX as usize {
            return Err(Error::Parse("too many generators".into()));
        }
        for r in &relations {
            if r.is_empty() || !r.is_reduced() {
                return Err(Error::InvalidRelation(format!("{r:?}")));
            }
            if r.0.iter().any(|s| s.id as usize >= names.len()) {
                return Err(Error::UnknownSymbol(format!("{r:?}")));
            }
        }
        Ok(Self { names, relations, family: None })
    }

    pub fn generator_count(&self) -> usize {
        self.names.len()
    }

    /// `|S|`, counting formal inverses.
    pub fn symbol_count(&self) -> usize {
        2 * self.names.len()
    }

    /// All of `S` in slot order `g0, G0, g1, G1, ...`.
    pub fn symbols(&self) -> impl Iterator<Item = GeneratorSymbol> {
        (0..self.symbol_count()).map(GeneratorSymbol::from_slot)
    }

    pub fn relations(&self) -> &[Word] {
        &self.relations
    }

    pub fn family(&self) -> Option<BuiltinFamily> {
        self.family
    }

    /// The trivial relations `s s⁻¹` for every `s ∈ S`.
    pub fn trivial_relations(&self) -> Vec<Word> {
        self.symbols().map(|s| Word(vec![s, s.inv()])).collect()
    }

    /// Relations followed by all trivial relations.
    pub fn relation_family(&self) -> Vec<Word> {
        let mut f = self.relations.clone();
        f.extend(self.trivial_relations());
        f
    }

    pub fn symbol_name(&self, s: GeneratorSymbol) -> String {
        let base = &self.names[s.id as usize];
        if s.is_inverse {
            invert_name(base)
        } else {
            base.clone()
        }
    }

    /// Space-separated symbol names; the identity prints as `e`.
    pub fn format_word(&self, w: &Word) -> String {
        if w.is_empty() {
            return "e".to_string();
        }
        w.0.iter().map(|&s| self.symbol_name(s)).collect::<Vec<_>>().join(" ")
    }

    /// Compact form without separators, used for CSV headers.
    pub fn compact_word(&self, w: &Word) -> String {
        if w.is_empty() {
            return "e".to_string();
        }
        w.0.iter().map(|&s| self.symbol_name(s)).collect::<String>()
    }

    fn lookup(&self, token: &str) -> Option<GeneratorSymbol> {
        self.symbols().find(|&s| self.symbol_name(s) == token)
    }

    /// Parses space-separated tokens. A token is a symbol name, optionally
    /// followed by `^k` with `k` a (possibly negative) integer. `e` alone is
    /// the identity.
    pub fn parse_word(&self, text: &str) -> Result<Word> {
        let mut out = Vec::new();
        for token in text.split_whitespace() {
            if token == "e" && self.lookup("e").is_none() {
                continue;
            }
            let (name, exp) = match token.split_once('^') {
                Some((n, e)) => {
                    let k: i64 = e.parse().map_err(|_| Error::Parse(format!("bad exponent in `{token}`")))?;
                    (n, k)
                }
                None => (token, 1),
            };
            let s = self.lookup(name).ok_or_else(|| Error::UnknownSymbol(name.to_string()))?;
            out.extend(Word::power(s, exp).0);
        }
        Ok(Word(out))
    }

    /// Reads the presentation text format: `generators k` on the first line,
    /// then one relation per line as space-separated symbols.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Parse("empty presentation".into()))?;
        let k: u16 = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["generators", k] => k.parse().map_err(|_| Error::Parse(format!("bad generator count `{k}`")))?,
            _ => return Err(Error::Parse(format!("expected `generators k`, found `{header}`"))),
        };
        let mut p = Self::new(k, Vec::new())?;
        let mut relations = Vec::new();
        for line in lines {
            let w = p.parse_word(line)?;
            let r = reduce_word(&w);
            if r.is_empty() {
                return Err(Error::InvalidRelation(line.to_string()));
            }
            relations.push(r);
        }
        p.relations = relations;
        Ok(p)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

fn invert_name(name: &str) -> String {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_lowercase() => c.to_uppercase().chain(chars).collect(),
        Some(c) if c.is_uppercase() => c.to_lowercase().chain(chars).collect(),
        _ => format!("{name}^-1"),
    }
}

fn letter_names(k: u16) -> Vec<String> {
    if k <= 26 {
        (0..k).map(|i| ((b'a' + i as u8) as char).to_string()).collect()
    } else {
        (0..k).map(|i| format!("g{i}")).collect()
    }
}

fn commutator(x: GeneratorSymbol, y: GeneratorSymbol) -> Word {
    Word(vec![x, y, x.inv(), y.inv()])
}

/// Builds one of the builtin families.
pub fn builtin_presentation(family: BuiltinFamily) -> Result<GroupPresentation> {
    let mut p = match family {
        BuiltinFamily::FreeGroup { k } => GroupPresentation::with_names(letter_names(k), Vec::new())?,
        BuiltinFamily::IntegerLattice { d } => {
            let mut rels = Vec::new();
            for i in 0..d {
                for j in (i + 1)..d {
                    rels.push(commutator(GeneratorSymbol::new(i), GeneratorSymbol::new(j)));
                }
            }
            GroupPresentation::with_names(letter_names(d), rels)?
        }
        BuiltinFamily::Cyclic { n } => {
            if n == 0 {
                return Err(Error::UnsupportedFamily("cyclic group of order 0".into()));
            }
            GroupPresentation::with_names(letter_names(1), vec![Word::power(GeneratorSymbol::new(0), n as i64)])?
        }
        BuiltinFamily::SurfaceGenus { g } => {
            if g == 0 {
                return Err(Error::UnsupportedFamily("surface group of genus 0".into()));
            }
            // [a1,b1][a2,b2]...[ag,bg]
            let mut rel = Vec::new();
            for i in 0..g {
                rel.extend(commutator(GeneratorSymbol::new(2 * i), GeneratorSymbol::new(2 * i + 1)).0);
            }
            GroupPresentation::with_names(letter_names(2 * g), vec![Word(rel)])?
        }
    };
    p.family = Some(family);
    Ok(p)
}

/// All distinct reduced words of length at most `radius`, identity first,
/// ordered by length and then lexicographically in slot order. No quotienting
/// by the relations is performed.
pub fn word_ball(p: &GroupPresentation, radius: usize) -> Vec<Word> {
    let mut out = vec![Word::identity()];
    let mut frontier = vec![Word::identity()];
    for _ in 0..radius {
        let mut next = Vec::new();
        for w in &frontier {
            for s in p.symbols() {
                if w.0.last() == Some(&s.inv()) {
                    continue;
                }
                let mut v = w.0.clone();
                v.push(s);
                next.push(Word(v));
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

impl fmt::Display for GeneratorSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_inverse {
            write!(f, "G{}", self.id)
        } else {
            write!(f, "g{}", self.id)
        }
    }
}
