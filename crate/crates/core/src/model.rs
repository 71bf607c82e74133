//! Microstates over finite alphabets, empirical distributions of pullback
//! patterns, normalized Hamming metrics, neighbourhoods of good models,
//! local functions and the conditional-expectation operators `E_D`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::presentation::{word_ball, GroupPresentation, Word};
use crate::sofic::{SoficApproximation, Vertex};

pub type Letter = u32;

/// A tuple of letters indexed by the words of a [`Window`].
pub type Pattern = Vec<Letter>;

/// Letters `0..size` with either the discrete metric or the circle norm of `Z/m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Alphabet {
    Finite { size: u32 },
    Cyclic { modulus: u32 },
}

impl Alphabet {
    pub fn size(&self) -> u32 {
        match *self {
            Alphabet::Finite { size } => size,
            Alphabet::Cyclic { modulus } => modulus,
        }
    }

    /// `|k| = min(k, m − k)/m` on `Z/m`.
    pub fn cyclic_norm(k: u32, m: u32) -> f64 {
        let k = k % m;
        k.min(m - k) as f64 / m as f64
    }

    /// Distance as an exact fraction `num / den`.
    pub fn distance_ratio(&self, a: Letter, b: Letter) -> (u64, u64) {
        match *self {
            Alphabet::Finite { .. } => ((a != b) as u64, 1),
            Alphabet::Cyclic { modulus } => {
                let k = (a + modulus - b % modulus) % modulus;
                (k.min(modulus - k) as u64, modulus as u64)
            }
        }
    }

    #[inline]
    pub fn distance(&self, a: Letter, b: Letter) -> f64 {
        match *self {
            Alphabet::Finite { .. } => (a != b) as u8 as f64,
            Alphabet::Cyclic { modulus } => Alphabet::cyclic_norm((a + modulus - b % modulus) % modulus, modulus),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.size() == 0 {
            return Err(Error::InvalidConfig("alphabet must be nonempty".into()));
        }
        Ok(())
    }
}

/// A `V`-indexed assignment of letters.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Microstate {
    alphabet: Alphabet,
    values: Vec<Letter>,
}

impl Microstate {
    pub fn new(alphabet: Alphabet, values: Vec<Letter>) -> Result<Self> {
        alphabet.validate()?;
        if let Some(&bad) = values.iter().find(|&&l| l >= alphabet.size()) {
            return Err(Error::Mismatch(format!("letter {bad} outside alphabet of size {}", alphabet.size())));
        }
        Ok(Self { alphabet, values })
    }

    pub fn constant(alphabet: Alphabet, len: usize, letter: Letter) -> Result<Self> {
        Self::new(alphabet, vec![letter; len])
    }

    pub(crate) fn from_raw(alphabet: Alphabet, values: Vec<Letter>) -> Self {
        debug_assert!(values.iter().all(|&l| l < alphabet.size()));
        Self { alphabet, values }
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn values(&self) -> &[Letter] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<Letter> {
        self.values
    }

    /// `alphabet finite k` or `alphabet cyclic m`, then the letters on one line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty microstate file".into()))?;
        let alphabet = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["alphabet", "finite", k] => {
                Alphabet::Finite { size: k.parse().map_err(|_| Error::Parse(format!("bad alphabet size `{k}`")))? }
            }
            ["alphabet", "cyclic", m] => Alphabet::Cyclic { modulus: m.parse().map_err(|_| Error::Parse(format!("bad modulus `{m}`")))? },
            _ => return Err(Error::Parse(format!("expected `alphabet finite k` or `alphabet cyclic m`, found `{header}`"))),
        };
        let values = lines
            .next()
            .unwrap_or("")
            .split_whitespace()
            .map(|t| t.parse::<Letter>().map_err(|_| Error::Parse(format!("bad letter `{t}`"))))
            .collect::<Result<Vec<_>>>()?;
        if lines.next().is_some() {
            return Err(Error::Parse("trailing lines after microstate values".into()));
        }
        Self::new(alphabet, values)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let header = match self.alphabet {
            Alphabet::Finite { size } => format!("alphabet finite {size}"),
            Alphabet::Cyclic { modulus } => format!("alphabet cyclic {modulus}"),
        };
        let body: Vec<String> = self.values.iter().map(ToString::to_string).collect();
        format!("{header}\n{}\n", body.join(" "))
    }
}

/// A probability vector on the letters of an alphabet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LetterDistribution {
    probs: Vec<f64>,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl LetterDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidConfig("distribution entries must be finite and nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("distribution sums to {total}, not 1")));
        }
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self { probs, cumulative })
    }

    pub fn uniform(size: u32) -> Self {
        Self::new(vec![1.0 / size as f64; size as usize]).expect("uniform distribution is valid")
    }

    pub fn point_mass(size: u32, letter: Letter) -> Self {
        let mut p = vec![0.0; size as usize];
        p[letter as usize] = 1.0;
        Self::new(p).expect("point mass is valid")
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn size(&self) -> u32 {
        self.probs.len() as u32
    }

    /// Inverse-CDF sample from `u ∈ [0, 1)`; never returns a zero-mass letter.
    #[inline]
    pub fn sample(&self, u: f64) -> Letter {
        let mut i = self.cumulative.partition_point(|&c| c <= u);
        if i >= self.probs.len() {
            i = self.probs.len() - 1;
        }
        while self.probs[i] == 0.0 && i > 0 {
            i -= 1;
        }
        i as Letter
    }

    /// Mean distance between a fixed letter and an independent draw.
    pub fn mean_distance_from(&self, alphabet: &Alphabet, a: Letter) -> f64 {
        self.probs.iter().enumerate().map(|(b, p)| p * alphabet.distance(a, b as Letter)).sum()
    }
}

/// An ordered list of distinct words, identity first.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    words: Vec<Word>,
}

impl Window {
    pub fn new(words: Vec<Word>) -> Result<Self> {
        if words.first().is_none_or(|w| !w.is_empty()) {
            return Err(Error::InvalidWindow("window must start with the identity".into()));
        }
        for (i, w) in words.iter().enumerate() {
            if words[..i].contains(w) {
                return Err(Error::InvalidWindow(format!("duplicate word {w:?}")));
            }
        }
        Ok(Self { words })
    }

    pub fn identity() -> Self {
        Self { words: vec![Word::identity()] }
    }

    pub fn ball(p: &GroupPresentation, radius: usize) -> Self {
        Self { words: word_ball(p, radius) }
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn position(&self, w: &Word) -> Option<usize> {
        self.words.iter().position(|u| u == w)
    }

    /// The permutation `σ^w` for every window word.
    pub fn targets(&self, sigma: &SoficApproximation) -> Result<Vec<Vec<Vertex>>> {
        self.words.iter().map(|w| sigma.word_permutation(w)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Weights {
    Counts { counts: BTreeMap<Pattern, u64>, total: u64 },
    Probabilities(BTreeMap<Pattern, f64>),
}

/// A sparse probability table over window patterns.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDistribution {
    window: Window,
    alphabet: Alphabet,
    weights: Weights,
}

impl EmpiricalDistribution {
    /// Empirical law of the given patterns, stored as exact counts.
    pub fn from_patterns<I>(window: Window, alphabet: Alphabet, patterns: I) -> Self
    where
        I: IntoIterator<Item = Pattern>,
    {
        let mut counts = BTreeMap::new();
        let mut total = 0;
        for p in patterns {
            *counts.entry(p).or_insert(0) += 1;
            total += 1;
        }
        Self { window, alphabet, weights: Weights::Counts { counts, total } }
    }

    pub fn from_probabilities(window: Window, alphabet: Alphabet, table: BTreeMap<Pattern, f64>) -> Result<Self> {
        let total: f64 = table.values().sum();
        if table.values().any(|p| *p < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!("pattern probabilities sum to {total}")));
        }
        Ok(Self { window, alphabet, weights: Weights::Probabilities(table) })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn prob(&self, p: &[Letter]) -> f64 {
        match &self.weights {
            Weights::Counts { counts, total } => counts.get(p).map_or(0.0, |&c| c as f64 / *total as f64),
            Weights::Probabilities(t) => t.get(p).copied().unwrap_or(0.0),
        }
    }

    /// Exact `(count, total)` when the table came from counting.
    pub fn count(&self, p: &[Letter]) -> Option<(u64, u64)> {
        match &self.weights {
            Weights::Counts { counts, total } => Some((counts.get(p).copied().unwrap_or(0), *total)),
            Weights::Probabilities(_) => None,
        }
    }

    pub fn support(&self) -> Vec<&Pattern> {
        match &self.weights {
            Weights::Counts { counts, .. } => counts.keys().collect(),
            Weights::Probabilities(t) => t.keys().collect(),
        }
    }

    pub fn iter(&self) -> Box<dyn Iterator<Item = (&Pattern, f64)> + '_> {
        match &self.weights {
            Weights::Counts { counts, total } => {
                let t = *total as f64;
                Box::new(counts.iter().map(move |(p, &c)| (p, c as f64 / t)))
            }
            Weights::Probabilities(t) => Box::new(t.iter().map(|(p, &q)| (p, q))),
        }
    }

    pub fn total_mass(&self) -> f64 {
        match &self.weights {
            Weights::Counts { counts, total } => counts.values().sum::<u64>() as f64 / *total as f64,
            Weights::Probabilities(t) => t.values().sum(),
        }
    }

    /// `∫ f dP` from the table: `Σ_p count_p · f(p) / total` for counted tables.
    pub fn integral(&self, f: impl Fn(&[Letter]) -> f64) -> f64 {
        match &self.weights {
            Weights::Counts { counts, total } => counts.iter().map(|(p, &c)| c as f64 * f(p)).sum::<f64>() / *total as f64,
            Weights::Probabilities(t) => t.iter().map(|(p, &q)| q * f(p)).sum(),
        }
    }

    /// CSV with one column per window word, then `probability`.
    pub fn to_csv(&self, presentation: &GroupPresentation) -> String {
        let mut s = String::new();
        for w in self.window.words() {
            let _ = write!(s, "{},", presentation.compact_word(w));
        }
        s.push_str("probability\n");
        for (p, q) in self.iter() {
            for l in p {
                let _ = write!(s, "{l},");
            }
            let _ = writeln!(s, "{q:.17e}");
        }
        s
    }
}

/// `(x_{σ^w(v)})_{w ∈ D}` in window order.
pub fn pullback_pattern(sigma: &SoficApproximation, x: &Microstate, v: Vertex, window: &Window) -> Result<Pattern> {
    check_length(sigma, x)?;
    window.words().iter().map(|w| sigma.evaluate_word(w, v).map(|u| x.values[u as usize])).collect()
}

fn check_length(sigma: &SoficApproximation, x: &Microstate) -> Result<()> {
    if x.len() != sigma.vertex_count() {
        return Err(Error::Mismatch(format!("microstate has {} entries, |V| = {}", x.len(), sigma.vertex_count())));
    }
    Ok(())
}

pub(crate) fn patterns_with_targets<'a>(targets: &'a [Vec<Vertex>], values: &'a [Letter]) -> impl Iterator<Item = Pattern> + 'a {
    let n = values.len();
    (0..n).map(move |v| targets.iter().map(|t| values[t[v] as usize]).collect())
}

/// `P^σ_x` restricted to the window.
pub fn empirical_distribution(sigma: &SoficApproximation, x: &Microstate, window: &Window) -> Result<EmpiricalDistribution> {
    check_length(sigma, x)?;
    let targets = window.targets(sigma)?;
    Ok(EmpiricalDistribution::from_patterns(window.clone(), x.alphabet, patterns_with_targets(&targets, &x.values)))
}

/// `d^(V)(x, x') = (1/|V|) Σ_v d(x_v, x'_v)`.
pub fn hamming_distance(x: &Microstate, y: &Microstate) -> Result<f64> {
    if x.alphabet != y.alphabet || x.len() != y.len() {
        return Err(Error::Mismatch("hamming distance needs equal alphabets and lengths".into()));
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let a = x.alphabet;
    let sum: f64 = x.values.iter().zip(&y.values).map(|(&p, &q)| a.distance(p, q)).sum();
    Ok(sum / x.len() as f64)
}

/// `½ Σ_p |P(p) − Q(p)|`.
pub fn tv_distance(p: &EmpiricalDistribution, q: &EmpiricalDistribution) -> Result<f64> {
    if p.window != q.window || p.alphabet != q.alphabet {
        return Err(Error::Mismatch("total variation needs matching windows and alphabets".into()));
    }
    let mut sum = 0.0;
    for (pat, a) in p.iter() {
        sum += (a - q.prob(pat)).abs();
    }
    for (pat, b) in q.iter() {
        if p.prob(pat) == 0.0 {
            sum += b;
        }
    }
    Ok(0.5 * sum)
}

/// Window marginal of the Bernoulli measure `ν^{×G}`.
pub fn product_marginal(nu: &LetterDistribution, window: &Window, alphabet: Alphabet) -> Result<EmpiricalDistribution> {
    if nu.size() != alphabet.size() {
        return Err(Error::Mismatch("distribution and alphabet sizes differ".into()));
    }
    let support: Vec<(Letter, f64)> = nu.probs().iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(l, &p)| (l as Letter, p)).collect();
    let mut table: BTreeMap<Pattern, f64> = BTreeMap::new();
    table.insert(Vec::new(), 1.0);
    for _ in 0..window.len() {
        let mut next = BTreeMap::new();
        for (pat, q) in &table {
            for &(l, p) in &support {
                let mut np = pat.clone();
                np.push(l);
                next.insert(np, q * p);
            }
        }
        table = next;
    }
    let total: f64 = table.values().sum();
    for v in table.values_mut() {
        *v /= total;
    }
    EmpiricalDistribution::from_probabilities(window.clone(), alphabet, table)
}

/// Dense mixed-radix index of a pattern; coordinate 0 is most significant.
fn pattern_index(p: &[Letter], k: u32) -> usize {
    p.iter().fold(0usize, |acc, &l| acc * k as usize + l as usize)
}

fn pattern_at(mut idx: usize, len: usize, k: u32) -> Pattern {
    let mut p = vec![0; len];
    for slot in p.iter_mut().rev() {
        *slot = (idx % k as usize) as Letter;
        idx /= k as usize;
    }
    p
}

fn window_distance(a: &Alphabet, p: &[Letter], q: &[Letter]) -> f64 {
    p.iter().zip(q).map(|(&x, &y)| a.distance(x, y)).sum::<f64>() / p.len() as f64
}

const MAX_TABLE: usize = 1 << 24;

/// A real function of window patterns, stored as a dense table.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalFunction {
    window: Window,
    alphabet: Alphabet,
    table: Vec<f64>,
    lipschitz_bound: f64,
}

impl LocalFunction {
    pub fn from_fn(window: Window, alphabet: Alphabet, lipschitz_bound: f64, f: impl Fn(&[Letter]) -> f64) -> Result<Self> {
        let len = window.len();
        let size = (alphabet.size() as usize)
            .checked_pow(len as u32)
            .filter(|&s| s <= MAX_TABLE)
            .ok_or_else(|| Error::SizeLimit(format!("{}^{len} patterns", alphabet.size())))?;
        let table = (0..size).map(|i| f(&pattern_at(i, len, alphabet.size()))).collect();
        Ok(Self { window, alphabet, table, lipschitz_bound })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    #[inline]
    pub fn eval(&self, p: &[Letter]) -> f64 {
        self.table[pattern_index(p, self.alphabet.size())]
    }

    /// Exhaustive check of `|f(p) − f(q)| ≤ L · d^(D)(p, q)` over all pairs.
    pub fn check_lipschitz(&self) -> bool {
        let (len, k) = (self.window.len(), self.alphabet.size());
        let pats: Vec<Pattern> = (0..self.table.len()).map(|i| pattern_at(i, len, k)).collect();
        for i in 0..pats.len() {
            for j in (i + 1)..pats.len() {
                let d = window_distance(&self.alphabet, &pats[i], &pats[j]);
                if (self.table[i] - self.table[j]).abs() > self.lipschitz_bound * d + 1e-12 {
                    return false;
                }
            }
        }
        true
    }

    /// `∫ f dν^{×D}`.
    pub fn product_integral(&self, nu: &LetterDistribution) -> f64 {
        let (len, k) = (self.window.len(), self.alphabet.size());
        self.table
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let w: f64 = pattern_at(i, len, k).iter().map(|&l| nu.probs()[l as usize]).product();
                w * v
            })
            .sum()
    }

    /// `(1/|V|) Σ_v f(Π^σ_v(x))`.
    pub fn empirical_integral(&self, sigma: &SoficApproximation, x: &Microstate) -> Result<f64> {
        check_length(sigma, x)?;
        let targets = self.window.targets(sigma)?;
        Ok(self.integral_with_targets(&targets, x.values()))
    }

    pub(crate) fn integral_with_targets(&self, targets: &[Vec<Vertex>], values: &[Letter]) -> f64 {
        let k = self.alphabet.size() as usize;
        let n = values.len();
        let mut sum = 0.0;
        for v in 0..n {
            let idx = targets.iter().fold(0usize, |acc, t| acc * k + values[t[v] as usize] as usize);
            sum += self.table[idx];
        }
        sum / n as f64
    }

    /// Integrates out one coordinate against `ν`.
    fn integrate_coordinate(&self, pos: usize, nu: &LetterDistribution) -> Vec<f64> {
        let k = self.alphabet.size() as usize;
        let stride = k.pow((self.window.len() - 1 - pos) as u32);
        let mut out = vec![0.0; self.table.len()];
        for (i, slot) in out.iter_mut().enumerate() {
            let digit = (i / stride) % k;
            let base = i - digit * stride;
            *slot = (0..k).map(|y| nu.probs()[y] * self.table[base + y * stride]).sum();
        }
        out
    }
}

fn check_nu(f: &LocalFunction, nu: &LetterDistribution) -> Result<()> {
    if nu.size() != f.alphabet.size() {
        return Err(Error::Mismatch("distribution and alphabet sizes differ".into()));
    }
    Ok(())
}

/// `E_D f`: integrates out every window coordinate outside `D` against `ν`.
/// The result lives on the same window and is constant in the removed
/// coordinates.
pub fn conditional_expectation(f: &LocalFunction, keep: &[Word], nu: &LetterDistribution) -> Result<LocalFunction> {
    check_nu(f, nu)?;
    let mut mask = vec![false; f.window.len()];
    for w in keep {
        let pos = f.window.position(w).ok_or_else(|| Error::InvalidWindow(format!("{w:?} is not in the window")))?;
        mask[pos] = true;
    }
    Ok(expectation_by_mask(f, &mask, nu))
}

pub(crate) fn expectation_by_mask(f: &LocalFunction, keep: &[bool], nu: &LetterDistribution) -> LocalFunction {
    let mut g = f.clone();
    for (pos, &kept) in keep.iter().enumerate() {
        if !kept {
            g.table = g.integrate_coordinate(pos, nu);
        }
    }
    g
}

/// Closes a family of functions on one window under every `E_D`,
/// dropping tables that agree within `1e-12`.
pub fn hereditary_closure(family: &[LocalFunction], nu: &LetterDistribution) -> Result<Vec<LocalFunction>> {
    let Some(first) = family.first() else {
        return Ok(Vec::new());
    };
    if family.iter().any(|f| f.window != first.window || f.alphabet != first.alphabet) {
        return Err(Error::Mismatch("hereditary family must share one window and alphabet".into()));
    }
    check_nu(first, nu)?;
    let len = first.window.len();
    let mut out: Vec<LocalFunction> = Vec::new();
    for f in family {
        for bits in (0..(1usize << len)).rev() {
            let keep: Vec<bool> = (0..len).map(|i| bits >> (len - 1 - i) & 1 == 1).collect();
            let g = expectation_by_mask(f, &keep, nu);
            let dup = out.iter().any(|h| h.table.iter().zip(&g.table).all(|(a, b)| (a - b).abs() <= 1e-12));
            if !dup {
                out.push(g);
            }
        }
    }
    Ok(out)
}

/// A letter-valued table on `A^D`, applied at every vertex as `ψ^σ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalMap {
    window: Window,
    input: Alphabet,
    output: Alphabet,
    table: Vec<Letter>,
}

impl LocalMap {
    pub fn from_fn(window: Window, input: Alphabet, output: Alphabet, f: impl Fn(&[Letter]) -> Letter) -> Result<Self> {
        let len = window.len();
        let size = (input.size() as usize)
            .checked_pow(len as u32)
            .filter(|&s| s <= MAX_TABLE)
            .ok_or_else(|| Error::SizeLimit(format!("{}^{len} patterns", input.size())))?;
        let table: Vec<Letter> = (0..size).map(|i| f(&pattern_at(i, len, input.size()))).collect();
        if let Some(bad) = table.iter().find(|&&l| l >= output.size()) {
            return Err(Error::Mismatch(format!("local map value {bad} outside output alphabet")));
        }
        Ok(Self { window, input, output, table })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }
}

/// `ψ^σ(x) = (ψ(Π^σ_v(x)))_v`.
pub fn apply_local_map(sigma: &SoficApproximation, x: &Microstate, psi: &LocalMap) -> Result<Microstate> {
    check_length(sigma, x)?;
    if x.alphabet != psi.input {
        return Err(Error::Mismatch("microstate alphabet differs from the map's input alphabet".into()));
    }
    let targets = psi.window.targets(sigma)?;
    let k = psi.input.size() as usize;
    let values = (0..x.len())
        .map(|v| {
            let idx = targets.iter().fold(0usize, |acc, t| acc * k + x.values[t[v] as usize] as usize);
            psi.table[idx]
        })
        .collect();
    Ok(Microstate::from_raw(psi.output, values))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairIdentity {
    pub lhs: f64,
    pub rhs: f64,
    pub equal: bool,
}

/// Compares `∫ F dP^σ_{(x,z)}` for `F(x, x') = d(x_e, x'_e)` against
/// `d^(V)(x, z)`. The joint law is the empirical distribution of the paired
/// microstate over the product alphabet, on the window `{e}`.
pub fn pair_distance_identity_check(sigma: &SoficApproximation, x: &Microstate, z: &Microstate) -> Result<PairIdentity> {
    let rhs = hamming_distance(x, z)?;
    let k = x.alphabet.size();
    let paired_alphabet = Alphabet::Finite { size: k.checked_mul(k).ok_or_else(|| Error::SizeLimit("product alphabet".into()))? };
    let paired: Vec<Letter> = x.values.iter().zip(&z.values).map(|(&a, &b)| a * k + b).collect();
    let joint = empirical_distribution(sigma, &Microstate::from_raw(paired_alphabet, paired), &Window::identity())?;
    let base = x.alphabet;
    let lhs = joint.integral(|p| base.distance(p[0] / k, p[0] % k));
    Ok(PairIdentity { lhs, rhs, equal: (lhs - rhs).abs() <= 1e-12 })
}

/// A weak*-neighbourhood of a target measure, realized on window marginals.
#[derive(Clone, Debug)]
pub enum NeighbourhoodSpec {
    /// TV ball of radius `epsilon` around the reference window marginal.
    MarginalTv { window: Window, epsilon: f64, reference: EmpiricalDistribution },
    /// `|∫ f dP^σ_x − reference_f| < epsilon` for every `f`.
    FunctionFamily { functions: Vec<LocalFunction>, epsilon: f64, reference: Vec<f64> },
}

impl NeighbourhoodSpec {
    pub fn marginal_tv(reference: EmpiricalDistribution, epsilon: f64) -> Result<Self> {
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        Ok(Self::MarginalTv { window: reference.window().clone(), epsilon, reference })
    }

    /// The hereditary neighbourhood of `ν^{×G}` generated by `family`.
    pub fn hereditary(family: &[LocalFunction], nu: &LetterDistribution, epsilon: f64) -> Result<Self> {
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        let functions = hereditary_closure(family, nu)?;
        let reference = functions.iter().map(|f| f.product_integral(nu)).collect();
        Ok(Self::FunctionFamily { functions, epsilon, reference })
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            NeighbourhoodSpec::MarginalTv { epsilon, .. } | NeighbourhoodSpec::FunctionFamily { epsilon, .. } => *epsilon,
        }
    }

    /// TV to the reference, or the largest integral deviation.
    pub fn score(&self, sigma: &SoficApproximation, x: &Microstate) -> Result<f64> {
        match self {
            NeighbourhoodSpec::MarginalTv { window, reference, .. } => tv_distance(&empirical_distribution(sigma, x, window)?, reference),
            NeighbourhoodSpec::FunctionFamily { functions, reference, .. } => {
                let mut worst: f64 = 0.0;
                for (f, r) in functions.iter().zip(reference) {
                    worst = worst.max((f.empirical_integral(sigma, x)? - r).abs());
                }
                Ok(worst)
            }
        }
    }

    /// Like [`Self::score`] with the window targets precomputed per function.
    pub(crate) fn score_with(&self, cache: &TargetCache, x: &Microstate) -> Result<f64> {
        match self {
            NeighbourhoodSpec::MarginalTv { window, reference, .. } => {
                let p =
                    EmpiricalDistribution::from_patterns(window.clone(), x.alphabet, patterns_with_targets(&cache.targets[0], x.values()));
                tv_distance(&p, reference)
            }
            NeighbourhoodSpec::FunctionFamily { functions, reference, .. } => {
                let mut worst: f64 = 0.0;
                for ((f, r), t) in functions.iter().zip(reference).zip(&cache.targets) {
                    worst = worst.max((f.integral_with_targets(t, x.values()) - r).abs());
                }
                Ok(worst)
            }
        }
    }
}

/// Window permutations for every window a neighbourhood reads.
pub(crate) struct TargetCache {
    targets: Vec<Vec<Vec<Vertex>>>,
}

impl TargetCache {
    pub(crate) fn new(sigma: &SoficApproximation, spec: &NeighbourhoodSpec) -> Result<Self> {
        let targets = match spec {
            NeighbourhoodSpec::MarginalTv { window, .. } => vec![window.targets(sigma)?],
            NeighbourhoodSpec::FunctionFamily { functions, .. } => {
                functions.iter().map(|f| f.window.targets(sigma)).collect::<Result<_>>()?
            }
        };
        Ok(Self { targets })
    }
}

/// Membership in `Ω(O, σ)`.
pub fn is_good_model(sigma: &SoficApproximation, x: &Microstate, spec: &NeighbourhoodSpec) -> Result<bool> {
    Ok(spec.score(sigma, x)? < spec.epsilon())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presentation::{builtin_presentation, BuiltinFamily};
    use crate::rng::{unit, Stream};
    use crate::sofic::{builtin_quotient, QuotientSpec};
    use proptest::prelude::*;

    fn c4() -> (GroupPresentation, SoficApproximation) {
        let p = builtin_presentation(BuiltinFamily::Cyclic { n: 4 }).unwrap();
        (p, builtin_quotient(&QuotientSpec::CyclicShift { n: 4 }, 1).unwrap())
    }

    const BIN: Alphabet = Alphabet::Finite { size: 2 };

    fn win(p: &GroupPresentation, words: &[&str]) -> Window {
        Window::new(words.iter().map(|w| p.parse_word(w).unwrap()).collect()).unwrap()
    }

    #[test]
    fn pullback_examples() {
        let (p, s) = c4();
        let x = Microstate::new(BIN, vec![0, 1, 0, 1]).unwrap();
        assert_eq!(pullback_pattern(&s, &x, 0, &win(&p, &["e", "a"])).unwrap(), vec![0, 1]);
        assert_eq!(pullback_pattern(&s, &x, 3, &Window::identity()).unwrap(), vec![1]);
        let zero = Microstate::constant(BIN, 4, 0).unwrap();
        assert_eq!(pullback_pattern(&s, &zero, 2, &win(&p, &["e", "a", "A"])).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn empirical_examples() {
        let (p, s) = c4();
        let x = Microstate::new(BIN, vec![0, 1, 0, 1]).unwrap();
        let d = empirical_distribution(&s, &x, &win(&p, &["e", "a"])).unwrap();
        assert_eq!(d.prob(&[0, 1]), 0.5);
        assert_eq!(d.prob(&[1, 0]), 0.5);
        assert_eq!(d.support().len(), 2);
        let d1 = empirical_distribution(&s, &x, &Window::identity()).unwrap();
        assert_eq!(d1.count(&[0]), Some((2, 4)));
        let c = Microstate::constant(BIN, 4, 1).unwrap();
        let dc = empirical_distribution(&s, &c, &win(&p, &["e", "a", "A"])).unwrap();
        assert_eq!(dc.prob(&[1, 1, 1]), 1.0);
    }

    #[test]
    fn hamming_examples() {
        let x = Microstate::new(BIN, vec![0, 0, 0, 0]).unwrap();
        let y = Microstate::new(BIN, vec![0, 1, 0, 1]).unwrap();
        assert_eq!(hamming_distance(&x, &x).unwrap(), 0.0);
        assert_eq!(hamming_distance(&x, &y).unwrap(), 0.5);
        let z4 = Alphabet::Cyclic { modulus: 4 };
        let a = Microstate::new(z4, vec![0, 0]).unwrap();
        let b = Microstate::new(z4, vec![2, 1]).unwrap();
        assert_eq!(hamming_distance(&a, &b).unwrap(), 0.375);
        assert!(hamming_distance(&a, &x).is_err());
    }

    #[test]
    fn tv_examples() {
        let w = Window::identity();
        let t = |v: &[(Letter, f64)]| {
            EmpiricalDistribution::from_probabilities(w.clone(), BIN, v.iter().map(|&(l, p)| (vec![l], p)).collect()).unwrap()
        };
        let p = t(&[(0, 0.5), (1, 0.5)]);
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        assert_eq!(tv_distance(&t(&[(0, 1.0)]), &t(&[(1, 1.0)])).unwrap(), 1.0);
        assert!((tv_distance(&p, &t(&[(0, 0.75), (1, 0.25)])).unwrap() - 0.25).abs() < 1e-15);
        let (pr, _) = c4();
        let other = EmpiricalDistribution::from_patterns(win(&pr, &["e", "a"]), BIN, vec![vec![0, 0]]);
        assert!(tv_distance(&p, &other).is_err());
    }

    #[test]
    fn product_marginal_examples() {
        let (p, _) = c4();
        let w2 = win(&p, &["e", "a"]);
        let u = product_marginal(&LetterDistribution::uniform(2), &w2, BIN).unwrap();
        assert!(u.iter().all(|(_, q)| q == 0.25));
        assert_eq!(u.support().len(), 4);
        let pm = product_marginal(&LetterDistribution::point_mass(2, 0), &w2, BIN).unwrap();
        assert_eq!(pm.prob(&[0, 0]), 1.0);
        let nu = LetterDistribution::new(vec![0.3, 0.7]).unwrap();
        let q = product_marginal(&nu, &w2, BIN).unwrap();
        for (pat, want) in [([0, 0], 0.09), ([0, 1], 0.21), ([1, 0], 0.21), ([1, 1], 0.49)] {
            assert!((q.prob(&pat) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn good_model_examples() {
        let p = builtin_presentation(BuiltinFamily::Cyclic { n: 4 }).unwrap();
        let s = builtin_quotient(&QuotientSpec::CyclicShift { n: 4 }, 1).unwrap();
        let zero = Microstate::constant(BIN, 4, 0).unwrap();
        let uniform = product_marginal(&LetterDistribution::uniform(2), &Window::identity(), BIN).unwrap();
        let spec = NeighbourhoodSpec::marginal_tv(uniform, 0.1).unwrap();
        assert!(!is_good_model(&s, &zero, &spec).unwrap());
        let x = Microstate::new(BIN, vec![0, 1, 1, 0]).unwrap();
        let own = empirical_distribution(&s, &x, &win(&p, &["e", "a"])).unwrap();
        let spec = NeighbourhoodSpec::marginal_tv(own, 1e-9).unwrap();
        assert!(is_good_model(&s, &x, &spec).unwrap());
        assert!(NeighbourhoodSpec::marginal_tv(product_marginal(&LetterDistribution::uniform(2), &Window::identity(), BIN).unwrap(), 0.0)
            .is_err());
    }

    #[test]
    fn iid_samples_are_good_models() {
        let p = builtin_presentation(BuiltinFamily::IntegerLattice { d: 2 }).unwrap();
        let s = builtin_quotient(&QuotientSpec::TorusShift { n: 100 }, 2).unwrap();
        let w = Window::ball(&p, 1);
        let nu = LetterDistribution::uniform(2);
        let spec = NeighbourhoodSpec::marginal_tv(product_marginal(&nu, &w, BIN).unwrap(), 0.05).unwrap();
        let mut good = 0;
        for trial in 0..100 {
            let mut r = Stream::new(11, "iid", &[trial]).rng();
            let x = Microstate::new(BIN, (0..10_000).map(|_| nu.sample(unit(&mut r))).collect()).unwrap();
            good += is_good_model(&s, &x, &spec).unwrap() as u32;
        }
        assert!(good >= 99, "only {good} of 100 samples were good");
    }

    #[test]
    fn conditional_expectation_examples() {
        let (p, _) = c4();
        let w = win(&p, &["e", "a"]);
        let nu = LetterDistribution::uniform(2);
        let f = LocalFunction::from_fn(w.clone(), BIN, 2.0, |q| (q[0] * q[1]) as f64).unwrap();
        let g = conditional_expectation(&f, &[Word::identity()], &nu).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert_eq!(g.eval(&[a, b]), a as f64 / 2.0);
            }
        }
        let e_empty = conditional_expectation(&f, &[], &nu).unwrap();
        assert!(e_empty.table().iter().all(|&v| v == 0.25));
        let e_full = conditional_expectation(&f, w.words(), &nu).unwrap();
        assert_eq!(e_full, f);
        let outside = p.parse_word("a a").unwrap();
        assert!(matches!(conditional_expectation(&f, &[outside], &nu), Err(Error::InvalidWindow(_))));
    }

    #[test]
    fn closure_examples() {
        let (p, _) = c4();
        let w = win(&p, &["e", "a"]);
        let nu = LetterDistribution::uniform(2);
        let f = LocalFunction::from_fn(w.clone(), BIN, 2.0, |q| (q[0] * q[1]) as f64).unwrap();
        let closed = hereditary_closure(std::slice::from_ref(&f), &nu).unwrap();
        assert_eq!(closed.len(), 4);
        let tables: Vec<Vec<f64>> = closed.iter().map(|g| g.table().to_vec()).collect();
        for want in [vec![0.0, 0.0, 0.0, 1.0], vec![0.0, 0.0, 0.5, 0.5], vec![0.0, 0.5, 0.0, 0.5], vec![0.25; 4]] {
            assert!(tables.contains(&want), "{want:?} missing from {tables:?}");
        }
        assert_eq!(hereditary_closure(&closed, &nu).unwrap().len(), 4);
        let c = LocalFunction::from_fn(w, BIN, 1.0, |_| 0.7).unwrap();
        assert_eq!(hereditary_closure(std::slice::from_ref(&c), &nu).unwrap(), vec![c]);
    }

    #[test]
    fn local_map_examples() {
        let (p, s) = c4();
        let z4 = Alphabet::Cyclic { modulus: 4 };
        let x = Microstate::new(z4, vec![0, 1, 2, 3]).unwrap();
        let w = win(&p, &["e", "a"]);
        let diff = LocalMap::from_fn(w.clone(), z4, z4, |q| (q[1] + 4 - q[0]) % 4).unwrap();
        assert_eq!(apply_local_map(&s, &x, &diff).unwrap().values(), &[1, 1, 1, 1]);
        let proj = LocalMap::from_fn(w.clone(), z4, z4, |q| q[0]).unwrap();
        assert_eq!(apply_local_map(&s, &x, &proj).unwrap(), x);
        let konst = LocalMap::from_fn(w, z4, BIN, |_| 1).unwrap();
        assert_eq!(apply_local_map(&s, &x, &konst).unwrap().values(), &[1, 1, 1, 1]);
    }

    #[test]
    fn pair_identity_examples() {
        let (_, s) = c4();
        let x = Microstate::new(BIN, vec![0, 0, 0, 0]).unwrap();
        let y = Microstate::new(BIN, vec![0, 1, 0, 1]).unwrap();
        assert_eq!(pair_distance_identity_check(&s, &x, &x).unwrap(), PairIdentity { lhs: 0.0, rhs: 0.0, equal: true });
        let r = pair_distance_identity_check(&s, &x, &y).unwrap();
        assert_eq!((r.lhs, r.rhs, r.equal), (0.5, 0.5, true));
    }

    #[test]
    fn microstate_file_format() {
        let z = Microstate::new(Alphabet::Cyclic { modulus: 5 }, vec![4, 0, 3]).unwrap();
        assert_eq!(Microstate::parse(&z.to_text()).unwrap(), z);
        assert!(Microstate::parse("alphabet finite 2\n0 1 2\n").is_err());
        assert!(Microstate::parse("alphabet weird 2\n0\n").is_err());
    }

    #[test]
    fn csv_export_has_word_columns() {
        let (p, s) = c4();
        let x = Microstate::new(BIN, vec![0, 1, 0, 1]).unwrap();
        let d = empirical_distribution(&s, &x, &win(&p, &["e", "a"])).unwrap();
        let csv = d.to_csv(&p);
        assert!(csv.starts_with("e,a,probability\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn integral_from_table_matches_direct_sum() {
        let p = builtin_presentation(BuiltinFamily::IntegerLattice { d: 2 }).unwrap();
        let s = builtin_quotient(&QuotientSpec::TorusShift { n: 7 }, 2).unwrap();
        let w = Window::ball(&p, 1);
        let a = Alphabet::Finite { size: 3 };
        let f = LocalFunction::from_fn(w.clone(), a, 5.0, |q| q.iter().map(|&l| l as f64).sum::<f64>() / 5.0).unwrap();
        let mut r = Stream::new(5, "int", &[]).rng();
        let x = Microstate::new(a, (0..49).map(|_| (unit(&mut r) * 3.0) as Letter).collect()).unwrap();
        let direct = f.empirical_integral(&s, &x).unwrap();
        let via_table = empirical_distribution(&s, &x, &w).unwrap().integral(|q| f.eval(q));
        assert!((direct - via_table).abs() <= 1e-12);
    }

    #[test]
    fn sampling_respects_zero_mass() {
        let nu = LetterDistribution::new(vec![0.5, 0.0, 0.5]).unwrap();
        assert_eq!(nu.sample(0.0), 0);
        assert_eq!(nu.sample(0.5), 2);
        assert_eq!(nu.sample(0.999_999), 2);
        let d = LetterDistribution::point_mass(3, 1);
        assert!((0..10).all(|i| d.sample(i as f64 / 10.0) == 1));
    }

    /// Direct formula `E_D f(p) = Σ_{q agrees with p on D} Π_{i ∉ D} ν(q_i) f(q)`.
    fn brute_expectation(f: &LocalFunction, keep: &[bool], nu: &LetterDistribution) -> Vec<f64> {
        let (len, k) = (f.window().len(), f.alphabet().size());
        let size = f.table().len();
        (0..size)
            .map(|i| {
                let p = pattern_at(i, len, k);
                (0..size)
                    .map(|j| pattern_at(j, len, k))
                    .filter(|q| (0..len).all(|c| !keep[c] || q[c] == p[c]))
                    .map(|q| {
                        let w: f64 = (0..len).filter(|&c| !keep[c]).map(|c| nu.probs()[q[c] as usize]).product();
                        w * f.eval(&q)
                    })
                    .sum()
            })
            .collect()
    }

    proptest! {
        #[test]
        fn expectation_matches_brute_force_and_stays_lipschitz(
            k in 2u32..=3,
            len in 1usize..=3,
            seed in any::<u64>(),
            bits in 0usize..8,
        ) {
            let p = builtin_presentation(BuiltinFamily::FreeGroup { k: 2 }).unwrap();
            let w = Window::new(word_ball(&p, 1).into_iter().take(len).collect()).unwrap();
            let a = Alphabet::Finite { size: k };
            let mut r = Stream::new(seed, "lip", &[]).rng();
            // a 1-Lipschitz function: 1/len-weighted sum of per-coordinate 1-Lipschitz maps
            let coords: Vec<Vec<f64>> = (0..len).map(|_| (0..k).map(|_| unit(&mut r)).collect()).collect();
            let f = LocalFunction::from_fn(w, a, 1.0, |q| {
                q.iter().enumerate().map(|(i, &l)| coords[i][l as usize]).sum::<f64>() / len as f64
            }).unwrap();
            prop_assert!(f.check_lipschitz());
            let raw: Vec<f64> = (0..k).map(|_| unit(&mut r) + 0.05).collect();
            let total: f64 = raw.iter().sum();
            let nu = LetterDistribution::new(raw.iter().map(|x| x / total).collect()).unwrap();
            let keep: Vec<bool> = (0..len).map(|i| bits >> i & 1 == 1).collect();
            let g = expectation_by_mask(&f, &keep, &nu);
            let want = brute_expectation(&f, &keep, &nu);
            for (x, y) in g.table().iter().zip(&want) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
            prop_assert!(g.check_lipschitz());
        }
    }
}
