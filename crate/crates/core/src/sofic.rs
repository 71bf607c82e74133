//! Finite permutation models `σ: S → Sym(V)`, their quality metrics and
//! Schreier graphs.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::presentation::{reduce_word, BuiltinFamily, GeneratorSymbol, GroupPresentation, Word};

pub type Vertex = u32;

/// One permutation per symbol of `S`, stored by slot; inverse symbols always
/// carry the exact inverse permutation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SoficApproximation {
    vertex_count: usize,
    perms: Vec<Vec<Vertex>>,
}

fn check_bijection(images: &[Vertex], n: usize, line: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &i in images {
        let i = i as usize;
        if i >= n || seen[i] {
            return Err(Error::NotAPermutation { line, size: n });
        }
        seen[i] = true;
    }
    if images.len() != n {
        return Err(Error::NotAPermutation { line, size: n });
    }
    Ok(())
}

fn invert(p: &[Vertex]) -> Vec<Vertex> {
    let mut inv = vec![0; p.len()];
    for (v, &t) in p.iter().enumerate() {
        inv[t as usize] = v as Vertex;
    }
    inv
}

impl SoficApproximation {
    /// Builds σ from the permutations of the non-inverse generators.
    pub fn from_generators(vertex_count: usize, forward: Vec<Vec<Vertex>>) -> Result<Self> {
        if vertex_count == 0 {
            return Err(Error::InvalidConfig("vertex set must be nonempty".into()));
        }
        let mut perms = Vec::with_capacity(2 * forward.len());
        for (i, p) in forward.into_iter().enumerate() {
            check_bijection(&p, vertex_count, i + 2)?;
            let q = invert(&p);
            perms.push(p);
            perms.push(q);
        }
        Ok(Self { vertex_count, perms })
    }

    /// Builds σ from explicit permutations for every slot, checking that each
    /// inverse slot holds the inverse permutation.
    pub fn from_slots(vertex_count: usize, perms: Vec<Vec<Vertex>>) -> Result<Self> {
        if !perms.len().is_multiple_of(2) {
            return Err(Error::Mismatch("slot permutations must come in inverse pairs".into()));
        }
        for (i, p) in perms.iter().enumerate() {
            check_bijection(p, vertex_count, i + 1)?;
        }
        for g in 0..perms.len() / 2 {
            let (f, b) = (&perms[2 * g], &perms[2 * g + 1]);
            if f.iter().enumerate().any(|(v, &t)| b[t as usize] as usize != v) {
                return Err(Error::InverseMismatch(g));
            }
        }
        Ok(Self { vertex_count, perms })
    }

    /// Parses the permutation-representation format: `vertices N`, then one
    /// line of `N` images per generator in presentation order.
    pub fn parse(text: &str, generator_count: usize) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty permutation file".into()))?;
        let n: usize = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["vertices", n] => n.parse().map_err(|_| Error::Parse(format!("bad vertex count `{n}`")))?,
            _ => return Err(Error::Parse(format!("expected `vertices N`, found `{header}`"))),
        };
        let mut forward = Vec::with_capacity(generator_count);
        for (line_no, line) in lines {
            if forward.len() == generator_count {
                return Err(Error::Parse(format!("line {line_no}: more permutation lines than generators")));
            }
            let images = line
                .split_whitespace()
                .map(|t| t.parse::<Vertex>().map_err(|_| Error::Parse(format!("line {line_no}: bad image `{t}`"))))
                .collect::<Result<Vec<_>>>()?;
            check_bijection(&images, n, line_no)?;
            forward.push(images);
        }
        if forward.len() != generator_count {
            return Err(Error::Parse(format!("expected {generator_count} permutation lines, found {}", forward.len())));
        }
        Self::from_generators(n, forward)
    }

    pub fn from_file(path: &Path, generator_count: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, generator_count)
    }

    /// Serializes to the permutation-representation format.
    pub fn to_text(&self) -> String {
        let mut s = format!("vertices {}\n", self.vertex_count);
        for g in 0..self.generator_count() {
            let line: Vec<String> = self.perms[2 * g].iter().map(ToString::to_string).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn generator_count(&self) -> usize {
        self.perms.len() / 2
    }

    pub fn symbol_count(&self) -> usize {
        self.perms.len()
    }

    pub fn perm(&self, s: GeneratorSymbol) -> &[Vertex] {
        &self.perms[s.slot()]
    }

    #[inline]
    pub fn apply(&self, s: GeneratorSymbol, v: Vertex) -> Vertex {
        self.perms[s.slot()][v as usize]
    }

    fn check_word(&self, w: &Word) -> Result<()> {
        match w.0.iter().find(|s| s.slot() >= self.perms.len()) {
            Some(s) => Err(Error::UnknownSymbol(s.to_string())),
            None => Ok(()),
        }
    }

    /// `σ^w(v)`; the last symbol of the written word acts first.
    pub fn evaluate_word(&self, w: &Word, v: Vertex) -> Result<Vertex> {
        self.check_word(w)?;
        if v as usize >= self.vertex_count {
            return Err(Error::VertexOutOfRange { vertex: v as usize, size: self.vertex_count });
        }
        Ok(w.application_order().fold(v, |u, s| self.apply(s, u)))
    }

    /// `σ^w` as an image table over all vertices.
    pub fn word_permutation(&self, w: &Word) -> Result<Vec<Vertex>> {
        self.check_word(w)?;
        let mut img: Vec<Vertex> = (0..self.vertex_count as Vertex).collect();
        for s in w.application_order() {
            let p = &self.perms[s.slot()];
            for u in img.iter_mut() {
                *u = p[*u as usize];
            }
        }
        Ok(img)
    }

    /// Fraction of vertices moved by `σ^w`.
    pub fn relation_defect(&self, w: &Word) -> Result<f64> {
        let img = self.word_permutation(w)?;
        let moved = img.iter().enumerate().filter(|&(v, &t)| v as Vertex != t).count();
        Ok(moved as f64 / self.vertex_count as f64)
    }

    /// Fraction of vertices fixed by `σ^w`.
    pub fn freeness_fraction(&self, w: &Word) -> Result<f64> {
        Ok(1.0 - self.relation_defect(w)?)
    }

    /// True iff `g ↦ σ^g(v)` is injective on `C` and every edge leaving an
    /// interior point of `C` (one whose whole `S`-neighbourhood lies in `C`)
    /// lands where the Cayley graph says it should. Words are identified as
    /// group elements through `oracle`.
    pub fn injectivity_radius_ok_with(&self, c: &[Word], v: Vertex, oracle: &ElementOracle<'_>) -> Result<bool> {
        let mut image_of: HashMap<ElementKey, Vertex> = HashMap::with_capacity(c.len());
        let mut seen_vertices: HashMap<Vertex, ElementKey> = HashMap::with_capacity(c.len());
        for w in c {
            let key = oracle.key(w);
            let img = self.evaluate_word(w, v)?;
            if let Some(&prev) = image_of.get(&key) {
                if prev != img {
                    return Ok(false);
                }
                continue;
            }
            if let Some(k) = seen_vertices.get(&img) {
                if *k != key {
                    return Ok(false);
                }
            }
            image_of.insert(key.clone(), img);
            seen_vertices.insert(img, key);
        }
        let symbols: Vec<GeneratorSymbol> = (0..self.symbol_count()).map(GeneratorSymbol::from_slot).collect();
        for g in c {
            let neighbours: Vec<ElementKey> = symbols.iter().map(|&s| oracle.key(&Word::symbol(s).concat(g))).collect();
            if !neighbours.iter().all(|k| image_of.contains_key(k)) {
                continue;
            }
            let gv = image_of[&oracle.key(g)];
            for (s, k) in symbols.iter().zip(&neighbours) {
                if self.apply(*s, gv) != image_of[k] {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// [`Self::injectivity_radius_ok_with`] treating distinct reduced words as distinct elements.
    pub fn injectivity_radius_ok(&self, c: &[Word], v: Vertex) -> Result<bool> {
        self.injectivity_radius_ok_with(c, v, &ElementOracle::Free)
    }
}

/// Canonical identity of a word as a group element.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ElementKey {
    Word(Word),
    Vector(Vec<i64>),
    Images(Vec<Vertex>),
}

/// Decides equality of words in the group. `Free` compares reduced words,
/// `Abelian` compares exponent vectors (modulus 0 meaning `Z`), and `Action`
/// compares the permutations a word induces on a finite model.
#[derive(Clone, Debug)]
pub enum ElementOracle<'a> {
    Free,
    Abelian { moduli: Vec<u32> },
    Action(&'a SoficApproximation),
}

impl<'a> ElementOracle<'a> {
    /// Normal form for the builtin families with a solvable word problem.
    pub fn for_presentation(p: &GroupPresentation) -> Option<ElementOracle<'static>> {
        match p.family()? {
            BuiltinFamily::FreeGroup { .. } => Some(ElementOracle::Free),
            BuiltinFamily::IntegerLattice { d } => Some(ElementOracle::Abelian { moduli: vec![0; d as usize] }),
            BuiltinFamily::Cyclic { n } => Some(ElementOracle::Abelian { moduli: vec![n] }),
            BuiltinFamily::SurfaceGenus { .. } => None,
        }
    }

    pub fn key(&self, w: &Word) -> ElementKey {
        match self {
            ElementOracle::Free => ElementKey::Word(reduce_word(w)),
            ElementOracle::Abelian { moduli } => {
                let mut v = vec![0i64; moduli.len()];
                for s in &w.0 {
                    v[s.id as usize] += if s.is_inverse { -1 } else { 1 };
                }
                for (x, &m) in v.iter_mut().zip(moduli) {
                    if m > 0 {
                        *x = x.rem_euclid(m as i64);
                    }
                }
                ElementKey::Vector(v)
            }
            ElementOracle::Action(sigma) => {
                ElementKey::Images(sigma.word_permutation(w).expect("oracle word outside the model's alphabet"))
            }
        }
    }
}

/// Builtin finite quotients and the file-backed permutation representation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QuotientSpec {
    /// `a` acts as `v ↦ v + 1 mod n`; a quotient of `Z` and of `Z/n`.
    CyclicShift {
        n: usize,
    },
    /// `a`, `b` act as the coordinate shifts on `(Z/n)²`, vertex `x + n·y`.
    TorusShift {
        n: usize,
    },
    FromFile {
        path: PathBuf,
    },
}

pub fn builtin_quotient(spec: &QuotientSpec, generator_count: usize) -> Result<SoficApproximation> {
    match *spec {
        QuotientSpec::CyclicShift { n } => {
            if generator_count != 1 {
                return Err(Error::Mismatch(format!("cyclic shift needs 1 generator, presentation has {generator_count}")));
            }
            if n == 0 {
                return Err(Error::InvalidConfig("cyclic shift on 0 vertices".into()));
            }
            let a = (0..n).map(|v| ((v + 1) % n) as Vertex).collect();
            SoficApproximation::from_generators(n, vec![a])
        }
        QuotientSpec::TorusShift { n } => {
            if generator_count != 2 {
                return Err(Error::Mismatch(format!("torus shift needs 2 generators, presentation has {generator_count}")));
            }
            if n == 0 {
                return Err(Error::InvalidConfig("torus shift on 0 vertices".into()));
            }
            let idx = |x: usize, y: usize| (x % n + n * (y % n)) as Vertex;
            let mut a = vec![0; n * n];
            let mut b = vec![0; n * n];
            for y in 0..n {
                for x in 0..n {
                    a[idx(x, y) as usize] = idx(x + 1, y);
                    b[idx(x, y) as usize] = idx(x, y + 1);
                }
            }
            SoficApproximation::from_generators(n * n, vec![a, b])
        }
        QuotientSpec::FromFile { ref path } => SoficApproximation::from_file(path, generator_count),
    }
}

/// The directed Schreier graph; edges are indexed by `S × V`, slot-major.
#[derive(Clone, Debug)]
pub struct SchreierGraph {
    approximation: SoficApproximation,
}

impl SchreierGraph {
    pub fn new(approximation: SoficApproximation) -> Self {
        Self { approximation }
    }

    pub fn approximation(&self) -> &SoficApproximation {
        &self.approximation
    }

    pub fn vertex_count(&self) -> usize {
        self.approximation.vertex_count
    }

    pub fn symbol_count(&self) -> usize {
        self.approximation.symbol_count()
    }

    pub fn edge_count(&self) -> usize {
        self.vertex_count() * self.symbol_count()
    }

    #[inline]
    pub fn edge_index(&self, s: GeneratorSymbol, v: Vertex) -> usize {
        s.slot() * self.vertex_count() + v as usize
    }

    #[inline]
    pub fn edge(&self, index: usize) -> (GeneratorSymbol, Vertex) {
        let n = self.vertex_count();
        (GeneratorSymbol::from_slot(index / n), (index % n) as Vertex)
    }

    #[inline]
    pub fn target(&self, s: GeneratorSymbol, v: Vertex) -> Vertex {
        self.approximation.apply(s, v)
    }

    pub fn out_degree(&self, _v: Vertex) -> usize {
        self.symbol_count()
    }

    pub fn in_degree(&self, v: Vertex) -> usize {
        (0..self.symbol_count())
            .map(GeneratorSymbol::from_slot)
            .map(|s| self.approximation.perm(s).iter().filter(|&&t| t == v).count())
            .sum()
    }
}
