//! 1-cochains on Schreier graphs with coefficients in `Z/m`: coboundaries,
//! relation loop sums, near-cocycle defects, exact `Z¹`, `B¹` and `H¹`, and
//! distances between cosets of coboundaries.
//!
//! Cochains live on every edge slot `(s, v) ∈ S × V`; antisymmetry is only
//! enforced through the trivial relations `s s⁻¹` in the loop family.
//! Distances and defects are exact fractions with denominator `m·|V|`.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Alphabet, Microstate};
use crate::presentation::{GeneratorSymbol, GroupPresentation, Word};
use crate::rng::Stream;
use crate::snf::{diagonalize_mod, gcd, invariant_factors, Diagonalization, ModMatrix};
use crate::sofic::{SchreierGraph, Vertex};

/// Numerator of the circle norm `min(k, m − k)/m`.
#[inline]
fn norm_num(k: u32, m: u32) -> u64 {
    let k = k % m;
    k.min(m - k) as u64
}

/// An edge labelling `S × V → Z/m`, indexed `slot·|V| + v`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Cochain1 {
    modulus: u32,
    vertex_count: usize,
    values: Vec<u32>,
}

impl Cochain1 {
    pub fn zero(graph: &SchreierGraph, modulus: u32) -> Result<Self> {
        check_modulus(modulus)?;
        Ok(Self { modulus, vertex_count: graph.vertex_count(), values: vec![0; graph.edge_count()] })
    }

    pub fn from_values(graph: &SchreierGraph, modulus: u32, values: Vec<u32>) -> Result<Self> {
        check_modulus(modulus)?;
        if values.len() != graph.edge_count() {
            return Err(Error::Mismatch(format!("cochain has {} values, |S|·|V| = {}", values.len(), graph.edge_count())));
        }
        if let Some(v) = values.iter().find(|&&v| v >= modulus) {
            return Err(Error::Mismatch(format!("cochain value {v} is not reduced mod {modulus}")));
        }
        Ok(Self { modulus, vertex_count: graph.vertex_count(), values })
    }

    pub fn modulus(&self) -> u32 {
        self.modulus
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    #[inline]
    pub fn get(&self, s: GeneratorSymbol, v: Vertex) -> u32 {
        self.values[s.slot() * self.vertex_count + v as usize]
    }

    pub fn set(&mut self, s: GeneratorSymbol, v: Vertex, value: u32) {
        self.values[s.slot() * self.vertex_count + v as usize] = value % self.modulus;
    }

    fn check_same(&self, other: &Cochain1) -> Result<()> {
        if self.modulus != other.modulus || self.values.len() != other.values.len() || self.vertex_count != other.vertex_count {
            return Err(Error::Mismatch("cochains live on different graphs or moduli".into()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Cochain1) -> Result<Cochain1> {
        self.check_same(other)?;
        let m = self.modulus;
        Ok(Self { values: self.values.iter().zip(&other.values).map(|(a, b)| (a + b) % m).collect(), ..self.clone() })
    }

    pub fn sub(&self, other: &Cochain1) -> Result<Cochain1> {
        self.check_same(other)?;
        let m = self.modulus;
        Ok(Self { values: self.values.iter().zip(&other.values).map(|(a, b)| (a + m - b) % m).collect(), ..self.clone() })
    }

    pub fn scale(&self, k: u64) -> Cochain1 {
        let m = self.modulus as u64;
        Self { values: self.values.iter().map(|&a| (a as u64 * (k % m) % m) as u32).collect(), ..self.clone() }
    }

    /// The edge process as a microstate over `Z/m` on `S × V`.
    pub fn to_microstate(&self) -> Microstate {
        Microstate::new(Alphabet::Cyclic { modulus: self.modulus }, self.values.clone()).expect("values are reduced")
    }

    pub fn from_microstate(graph: &SchreierGraph, x: &Microstate) -> Result<Self> {
        match x.alphabet() {
            Alphabet::Cyclic { modulus } => Self::from_values(graph, modulus, x.values().to_vec()),
            Alphabet::Finite { .. } => Err(Error::Mismatch("cochains need a cyclic alphabet".into())),
        }
    }

    fn to_u64(&self) -> Vec<u64> {
        self.values.iter().map(|&v| v as u64).collect()
    }
}

fn check_modulus(m: u32) -> Result<()> {
    if !(2..=1 << 31).contains(&m) {
        return Err(Error::InvalidConfig(format!("modulus {m} must lie in 2..=2^31")));
    }
    Ok(())
}

/// The based loops `(v, w)` for `w` in a relation family.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RelationLoopSet {
    relations: Vec<Word>,
}

impl RelationLoopSet {
    pub fn new(relations: Vec<Word>) -> Result<Self> {
        if relations.is_empty() {
            return Err(Error::InvalidRelation("relation family is empty".into()));
        }
        if let Some(w) = relations.iter().find(|w| w.is_empty()) {
            return Err(Error::InvalidRelation(format!("{w:?}")));
        }
        Ok(Self { relations })
    }

    /// The presentation's relations plus every `s s⁻¹`.
    pub fn for_presentation(p: &GroupPresentation) -> Self {
        Self { relations: p.relation_family() }
    }

    /// Only the trivial relations, for free quotients.
    pub fn trivial(p: &GroupPresentation) -> Self {
        Self { relations: p.trivial_relations() }
    }

    pub fn relations(&self) -> &[Word] {
        &self.relations
    }

    pub fn loop_count(&self, graph: &SchreierGraph) -> usize {
        self.relations.len() * graph.vertex_count()
    }
}

/// `(dβ)(s, v) = β(σ^s v) − β(v)`.
pub fn coboundary_0(graph: &SchreierGraph, beta: &[u32], modulus: u32) -> Result<Cochain1> {
    check_modulus(modulus)?;
    let n = graph.vertex_count();
    if beta.len() != n {
        return Err(Error::Mismatch(format!("vertex function has {} values, |V| = {n}", beta.len())));
    }
    let m = modulus;
    let values = (0..graph.edge_count())
        .map(|e| {
            let (s, v) = graph.edge(e);
            (beta[graph.target(s, v) as usize] % m + m - beta[v as usize] % m) % m
        })
        .collect();
    Ok(Cochain1 { modulus, vertex_count: n, values })
}

/// The sum of `α` along the loop of `w` based at `v`, first-applied symbol first.
pub fn loop_sum(graph: &SchreierGraph, alpha: &Cochain1, w: &Word, v: Vertex) -> u32 {
    let m = alpha.modulus as u64;
    let mut cur = v;
    let mut sum = 0u64;
    for s in w.application_order() {
        sum += alpha.get(s, cur) as u64;
        cur = graph.target(s, cur);
    }
    (sum % m) as u32
}

fn check_cochain(graph: &SchreierGraph, alpha: &Cochain1) -> Result<()> {
    if alpha.len() != graph.edge_count() || alpha.vertex_count != graph.vertex_count() {
        return Err(Error::Mismatch("cochain does not live on this graph".into()));
    }
    Ok(())
}

/// `max_w Σ_v |loop_sum(α, w, v)|` as a numerator over `m·|V|`.
pub fn near_cocycle_defect_num(graph: &SchreierGraph, alpha: &Cochain1, family: &RelationLoopSet) -> Result<u64> {
    check_cochain(graph, alpha)?;
    let n = graph.vertex_count() as Vertex;
    Ok(family
        .relations
        .iter()
        .map(|w| (0..n).map(|v| norm_num(loop_sum(graph, alpha, w, v), alpha.modulus)).sum::<u64>())
        .max()
        .unwrap_or(0))
}

/// `max_{w ∈ F} (1/|V|) Σ_v |dα(v, w)|` with the circle norm.
pub fn near_cocycle_defect(graph: &SchreierGraph, alpha: &Cochain1, family: &RelationLoopSet) -> Result<f64> {
    let num = near_cocycle_defect_num(graph, alpha, family)?;
    Ok(num as f64 / (alpha.modulus as f64 * graph.vertex_count() as f64))
}

/// Σ over edges of the circle-norm numerators of `α − α'`.
fn distance_num(a: &[u32], b: &[u32], m: u32) -> u64 {
    a.iter().zip(b).map(|(&x, &y)| norm_num(x + m - y, m)).sum()
}

/// `(1/|V|) Σ_{s,v} |α(s,v) − α'(s,v)|`.
pub fn cochain_distance(alpha: &Cochain1, other: &Cochain1) -> Result<f64> {
    alpha.check_same(other)?;
    let num = distance_num(&alpha.values, &other.values, alpha.modulus);
    Ok(num as f64 / (alpha.modulus as f64 * alpha.vertex_count as f64))
}

/// Constraint matrix: one row per based loop `(v, w)`, one column per edge
/// slot, entries counting how often the loop crosses the slot.
pub fn constraint_matrix(graph: &SchreierGraph, family: &RelationLoopSet, modulus: u32) -> Result<ModMatrix> {
    let n = graph.vertex_count();
    let mut a = ModMatrix::zeros(family.loop_count(graph), graph.edge_count(), modulus as u64)?;
    for (r, w) in family.relations.iter().enumerate() {
        for v in 0..n as Vertex {
            let row = r * n + v as usize;
            let mut cur = v;
            for s in w.application_order() {
                let e = graph.edge_index(s, cur);
                a.set(row, e, (a.get(row, e) + 1) % modulus as u64);
                cur = graph.target(s, cur);
            }
        }
    }
    Ok(a)
}

/// Matrix of `d`: rows edge slots, columns vertices.
pub fn coboundary_matrix(graph: &SchreierGraph, modulus: u32) -> Result<ModMatrix> {
    let n = graph.vertex_count();
    let m = modulus as u64;
    let mut d = ModMatrix::zeros(graph.edge_count(), n, m)?;
    for e in 0..graph.edge_count() {
        let (s, v) = graph.edge(e);
        let t = graph.target(s, v) as usize;
        d.set(e, t, (d.get(e, t) + 1) % m);
        d.set(e, v as usize, (d.get(e, v as usize) + m - 1) % m);
    }
    Ok(d)
}

/// `Z¹ = ker M` with coordinates: `x ↦ Q⁻¹x`, read off at columns with a
/// nontrivial kernel factor and divided by `m / o_i`.
#[derive(Clone, Debug)]
struct CocycleBasis {
    modulus: u32,
    vertex_count: usize,
    q_inv: ModMatrix,
    /// Columns of `Q` with a nontrivial kernel factor: `(index, order)`.
    coords: Vec<(usize, u64)>,
    generators: Vec<Cochain1>,
}

impl CocycleBasis {
    fn new(constraints: &ModMatrix, modulus: u32, vertex_count: usize) -> Result<Self> {
        let z1 = diagonalize_mod(constraints)?;
        let m = modulus as u64;
        let generators = z1
            .kernel_generators()
            .into_iter()
            .map(|(g, _)| Cochain1 { modulus, vertex_count, values: g.iter().map(|&v| v as u32).collect() })
            .collect();
        let coords = (0..constraints.cols()).map(|i| (i, gcd(z1.diag.get(i).copied().unwrap_or(0), m))).filter(|&(_, o)| o > 1).collect();
        Ok(Self { modulus, vertex_count, q_inv: z1.q_inv, coords, generators })
    }

    fn orders(&self) -> Vec<u64> {
        self.coords.iter().map(|&(_, o)| o).collect()
    }

    fn coordinates(&self, alpha: &Cochain1) -> Option<Vec<u64>> {
        if alpha.len() != self.q_inv.cols() || alpha.modulus != self.modulus {
            return None;
        }
        let m = self.modulus as u64;
        let y = self.q_inv.mul_vec(&alpha.to_u64());
        let mut on = vec![false; y.len()];
        let mut out = Vec::with_capacity(self.coords.len());
        for &(i, o) in &self.coords {
            on[i] = true;
            let step = m / o;
            if !y[i].is_multiple_of(step) {
                return None;
            }
            out.push(y[i] / step);
        }
        if y.iter().zip(&on).any(|(&v, &used)| !used && v != 0) {
            return None;
        }
        Some(out)
    }

    fn cochain(&self, coords: &[u64]) -> Cochain1 {
        let m = self.modulus as u64;
        let mut acc = vec![0u64; self.q_inv.cols()];
        for (g, &c) in self.generators.iter().zip(coords) {
            for (a, &v) in acc.iter_mut().zip(&g.values) {
                *a = (*a + v as u64 * c) % m;
            }
        }
        Cochain1 { modulus: self.modulus, vertex_count: self.vertex_count, values: acc.iter().map(|&v| v as u32).collect() }
    }
}

/// Exact `Z¹`, `B¹ ∩ Z¹` and `H¹ = Z¹/(B¹ ∩ Z¹)` for one graph, family and modulus.
#[derive(Clone, Debug)]
pub struct Cohomology {
    modulus: u32,
    vertex_count: usize,
    edge_count: usize,
    z1: CocycleBasis,
    b1_generators: Vec<Cochain1>,
    b1_orders: Vec<u64>,
    coboundary_solver: Diagonalization,
    /// Diagonalization of the relations of `H¹` in `Z¹` coordinates.
    h1: Option<Diagonalization>,
    h1_orders: Vec<u64>,
    representatives: Vec<Cochain1>,
}

/// JSON summary of a [`Cohomology`].
#[derive(Clone, Debug, Serialize)]
pub struct CohomologySummary {
    pub modulus: u32,
    pub invariant_factors: Vec<u64>,
    /// Orders of the cyclic factors carried by `representatives`, in order.
    pub representative_orders: Vec<u64>,
    pub representatives: Vec<Vec<u32>>,
    pub z1_orders: Vec<u64>,
    pub b1_orders: Vec<u64>,
    pub z1_dim_log_m: f64,
    pub b1_dim_log_m: f64,
}

fn log_m(orders: &[u64], m: u32) -> f64 {
    orders.iter().map(|&o| (o as f64).ln()).sum::<f64>() / (m as f64).ln()
}

/// Solves for `Z¹`, `B¹` and `H¹` by diagonalizing over `Z/m`.
pub fn solve_cocycles(graph: &SchreierGraph, family: &RelationLoopSet, modulus: u32) -> Result<Cohomology> {
    check_modulus(modulus)?;
    let m = modulus as u64;
    let n = graph.vertex_count();
    let constraints = constraint_matrix(graph, family, modulus)?;
    let z1 = CocycleBasis::new(&constraints, modulus, n)?;

    // B¹ ∩ Z¹ = d(ker(M·d)); it is all of B¹ on exact quotients
    let d = coboundary_matrix(graph, modulus)?;
    let md = diagonalize_mod(&constraints.mul(&d)?)?;
    let b1_generators: Vec<Cochain1> = md
        .kernel_generators()
        .into_iter()
        .map(|(k, _)| d.mul_vec(&k))
        .filter(|b| b.iter().any(|&x| x != 0))
        .map(|b| Cochain1 { modulus, vertex_count: n, values: b.iter().map(|&v| v as u32).collect() })
        .collect();
    let b1_orders = span_orders(&b1_generators, graph.edge_count(), m)?;

    // H¹ = (Z/m)^r modulo o_i·e_i and the coordinates of B¹ generators
    let r = z1.coords.len();
    let mut rows: Vec<Vec<i64>> =
        z1.coords.iter().enumerate().map(|(i, &(_, o))| (0..r).map(|j| if i == j { o as i64 } else { 0 }).collect()).collect();
    for b in &b1_generators {
        let c = z1.coordinates(b).ok_or_else(|| Error::Mismatch("coboundary outside Z¹".into()))?;
        rows.push(c.iter().map(|&x| x as i64).collect());
    }
    let mut h1 = None;
    let mut h1_orders = Vec::new();
    let mut representatives = Vec::new();
    if r > 0 {
        let rel = diagonalize_mod(&ModMatrix::from_rows(&rows, r, m)?)?;
        for i in 0..r {
            let o = gcd(rel.diag[i], m);
            if o > 1 {
                h1_orders.push(o);
                representatives.push(z1.cochain(rel.q_inv.row(i)));
            }
        }
        h1 = Some(rel);
    }
    Ok(Cohomology {
        modulus,
        vertex_count: n,
        edge_count: graph.edge_count(),
        z1,
        b1_generators,
        b1_orders,
        coboundary_solver: diagonalize_mod(&d)?,
        h1,
        h1_orders,
        representatives,
    })
}

/// Cyclic orders of the subgroup spanned by `gens`.
fn span_orders(gens: &[Cochain1], len: usize, m: u64) -> Result<Vec<u64>> {
    if gens.is_empty() {
        return Ok(Vec::new());
    }
    let mut a = ModMatrix::zeros(len, gens.len(), m)?;
    for (j, g) in gens.iter().enumerate() {
        for (i, &v) in g.values.iter().enumerate() {
            a.set(i, j, v as u64);
        }
    }
    Ok(diagonalize_mod(&a)?.image_orders())
}

impl Cohomology {
    pub fn modulus(&self) -> u32 {
        self.modulus
    }

    /// Cyclic orders of `H¹`, matching [`Self::representatives`].
    pub fn h1_orders(&self) -> &[u64] {
        &self.h1_orders
    }

    pub fn invariant_factors(&self) -> Vec<u64> {
        invariant_factors(&self.h1_orders)
    }

    pub fn h1_size(&self) -> u64 {
        self.h1_orders.iter().product()
    }

    pub fn representatives(&self) -> &[Cochain1] {
        &self.representatives
    }

    pub fn z1_generators(&self) -> &[Cochain1] {
        &self.z1.generators
    }

    pub fn b1_generators(&self) -> &[Cochain1] {
        &self.b1_generators
    }

    pub fn z1_orders(&self) -> Vec<u64> {
        self.z1.orders()
    }

    pub fn b1_orders(&self) -> &[u64] {
        &self.b1_orders
    }

    pub fn is_cocycle(&self, alpha: &Cochain1) -> bool {
        self.z1.coordinates(alpha).is_some()
    }

    /// The `H¹` class of a cocycle in `⊕ Z/h_i`, or `None` off `Z¹`.
    pub fn class_of(&self, alpha: &Cochain1) -> Option<Vec<u64>> {
        let coords = self.z1.coordinates(alpha)?;
        let Some(h1) = &self.h1 else {
            return Some(Vec::new());
        };
        let m = self.modulus as u64;
        let r = coords.len();
        let mut out = Vec::with_capacity(self.h1_orders.len());
        for i in 0..r {
            let o = gcd(h1.diag[i], m);
            if o > 1 {
                let v: u128 = (0..r).map(|j| coords[j] as u128 * h1.q.get(j, i) as u128).sum();
                out.push((v % m as u128) as u64 % o);
            }
        }
        Some(out)
    }

    /// `Σ c_i · rep_i`.
    pub fn class_cochain(&self, class: &[u64]) -> Result<Cochain1> {
        if class.len() != self.representatives.len() {
            return Err(Error::Mismatch("class vector length".into()));
        }
        let mut acc = Cochain1 { modulus: self.modulus, vertex_count: self.vertex_count, values: vec![0; self.edge_count] };
        for (rep, &c) in self.representatives.iter().zip(class) {
            acc = acc.add(&rep.scale(c))?;
        }
        Ok(acc)
    }

    /// Every class vector of `H¹`, zero first.
    pub fn all_classes(&self) -> Vec<Vec<u64>> {
        let mut out = vec![Vec::new()];
        for &o in &self.h1_orders {
            out = out.into_iter().flat_map(|c| (0..o).map(move |k| [c.clone(), vec![k]].concat())).collect();
        }
        out
    }

    /// A `β` with `dβ = α` when `α ∈ B¹`.
    pub fn coboundary_preimage(&self, alpha: &Cochain1) -> Option<Vec<u32>> {
        if alpha.len() != self.edge_count || alpha.modulus != self.modulus {
            return None;
        }
        self.coboundary_solver.solve(&alpha.to_u64()).map(|b| b.into_iter().map(|v| v as u32).collect())
    }

    pub fn is_coboundary(&self, alpha: &Cochain1) -> bool {
        self.coboundary_preimage(alpha).is_some()
    }

    pub fn summary(&self) -> CohomologySummary {
        let z1_orders = self.z1_orders();
        CohomologySummary {
            modulus: self.modulus,
            invariant_factors: self.invariant_factors(),
            representative_orders: self.h1_orders.clone(),
            representatives: self.representatives.iter().map(|r| r.values.clone()).collect(),
            z1_dim_log_m: log_m(&z1_orders, self.modulus),
            b1_dim_log_m: log_m(&self.b1_orders, self.modulus),
            z1_orders,
            b1_orders: self.b1_orders.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Exact,
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    Exact,
    Heuristic,
}

/// `min_β d(α, dβ)` with its witness.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CosetDistance {
    pub numerator: u64,
    pub denominator: u64,
    pub distance: f64,
    pub witness: Vec<u32>,
    pub bound: Bound,
}

/// Largest vertex-function space searched exhaustively.
pub const EXACT_SEARCH_LIMIT: u64 = 1 << 24;

/// Edge slots whose value depends on `β(u)`, deduplicated.
fn incident_edges(graph: &SchreierGraph) -> Vec<Vec<usize>> {
    let n = graph.vertex_count();
    let mut inc = vec![Vec::new(); n];
    for e in 0..graph.edge_count() {
        let (s, v) = graph.edge(e);
        let t = graph.target(s, v) as usize;
        inc[v as usize].push(e);
        if t != v as usize {
            inc[t].push(e);
        }
    }
    inc
}

struct Residual<'a> {
    graph: &'a SchreierGraph,
    alpha: &'a [u32],
    m: u32,
    heads: Vec<Vertex>,
    tails: Vec<Vertex>,
}

impl<'a> Residual<'a> {
    fn new(graph: &'a SchreierGraph, alpha: &'a Cochain1) -> Self {
        let (tails, heads) = (0..graph.edge_count())
            .map(|e| {
                let (s, v) = graph.edge(e);
                (v, graph.target(s, v))
            })
            .unzip();
        Self { graph, alpha: &alpha.values, m: alpha.modulus, heads, tails }
    }

    /// `|α(e) − dβ(e)|` numerator.
    #[inline]
    fn edge_cost(&self, e: usize, beta: &[u32]) -> u64 {
        let m = self.m;
        let db = (beta[self.heads[e] as usize] + m - beta[self.tails[e] as usize]) % m;
        norm_num(self.alpha[e] + m - db, m)
    }

    fn total(&self, beta: &[u32]) -> u64 {
        (0..self.graph.edge_count()).map(|e| self.edge_cost(e, beta)).sum()
    }
}

/// Distance from `α` to `B¹`, exhaustive (`β(0) = 0`) or by coordinate descent
/// with 32 restarts. Heuristic results are upper bounds.
pub fn coset_distance(graph: &SchreierGraph, alpha: &Cochain1, mode: SearchMode, stream: &Stream) -> Result<CosetDistance> {
    check_cochain(graph, alpha)?;
    let n = graph.vertex_count();
    let m = alpha.modulus;
    let denominator = m as u64 * n as u64;
    let res = Residual::new(graph, alpha);
    let inc = incident_edges(graph);
    let (numerator, witness, bound) = match mode {
        SearchMode::Exact => {
            let space = (m as u64).checked_pow(n as u32).filter(|&s| s <= EXACT_SEARCH_LIMIT);
            if space.is_none() {
                return Err(Error::SizeLimit(format!("{m}^{n} vertex functions exceed the exhaustive limit")));
            }
            let (c, w) = exhaustive_min(&res, &inc, n, m);
            (c, w, Bound::Exact)
        }
        SearchMode::Heuristic => {
            let (c, w) = descent_min(&res, &inc, n, m, stream);
            (c, w, Bound::Upper)
        }
    };
    Ok(CosetDistance { numerator, denominator, distance: numerator as f64 / denominator as f64, witness, bound })
}

fn exhaustive_min(res: &Residual<'_>, inc: &[Vec<usize>], n: usize, m: u32) -> (u64, Vec<u32>) {
    let mut beta = vec![0u32; n];
    let mut cost = res.total(&beta);
    let mut best = (cost, beta.clone());
    if n <= 1 {
        return best;
    }
    // odometer over β(1..n); each digit change touches only its incident edges
    loop {
        let mut j = 1;
        loop {
            let old: u64 = inc[j].iter().map(|&e| res.edge_cost(e, &beta)).sum();
            beta[j] = (beta[j] + 1) % m;
            let new: u64 = inc[j].iter().map(|&e| res.edge_cost(e, &beta)).sum();
            cost = cost + new - old;
            if beta[j] != 0 {
                break;
            }
            j += 1;
            if j == n {
                return best;
            }
        }
        if cost < best.0 {
            best = (cost, beta.clone());
        }
    }
}

pub const RESTARTS: u64 = 32;

fn descent_min(res: &Residual<'_>, inc: &[Vec<usize>], n: usize, m: u32, stream: &Stream) -> (u64, Vec<u32>) {
    let mut best: Option<(u64, Vec<u32>)> = None;
    for restart in 0..RESTARTS {
        let mut beta = vec![0u32; n];
        if restart > 0 {
            let mut rng = stream.derive("restart", &[restart]).rng();
            for b in beta.iter_mut().skip(1) {
                *b = rand::Rng::gen_range(&mut rng, 0..m);
            }
        }
        let mut cost = res.total(&beta);
        loop {
            let mut improved = false;
            for u in 0..n {
                let cur = beta[u];
                let here: u64 = inc[u].iter().map(|&e| res.edge_cost(e, &beta)).sum();
                let mut pick = (here, cur);
                for c in 0..m {
                    if c == cur {
                        continue;
                    }
                    beta[u] = c;
                    let local: u64 = inc[u].iter().map(|&e| res.edge_cost(e, &beta)).sum();
                    if local < pick.0 {
                        pick = (local, c);
                    }
                }
                beta[u] = pick.1;
                if pick.1 != cur {
                    cost = cost - here + pick.0;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, beta));
        }
    }
    best.expect("at least one restart")
}

/// Minimum distance between distinct cosets of `B¹` in `Z¹`: the least
/// coset distance of a nontrivial class. `None` when `H¹` is trivial.
pub fn min_intercoset_distance(graph: &SchreierGraph, h: &Cohomology, mode: SearchMode, stream: &Stream) -> Result<Option<CosetDistance>> {
    let mut best: Option<CosetDistance> = None;
    for (i, class) in h.all_classes().into_iter().enumerate().skip(1) {
        let rep = h.class_cochain(&class)?;
        let d = coset_distance(graph, &rep, mode, &stream.derive("class", &[i as u64]))?;
        if best.as_ref().is_none_or(|b| d.numerator < b.numerator) {
            best = Some(d);
        }
    }
    Ok(best)
}

/// Largest cochain space scanned exhaustively.
pub const SCAN_LIMIT: u64 = 1 << 24;

#[derive(Clone, Debug, Serialize)]
pub struct Component {
    pub size: usize,
    /// Distinct `H¹` classes of the exact cocycles in this component.
    pub classes: Vec<Vec<u64>>,
    pub min_defect: f64,
    pub max_defect: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct HistogramRow {
    /// Defect numerator over `m·|V|`.
    pub defect_num: u64,
    /// Coset distance numerator over `m·|V|`.
    pub distance_num: u64,
    pub bound: Bound,
    pub count: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComponentReport {
    pub modulus: u32,
    pub vertex_count: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub scanned: u64,
    pub admitted: usize,
    pub components: Vec<Component>,
    pub histogram: Vec<HistogramRow>,
    /// How adjacency was computed: "perturbation" or "pairwise".
    pub adjacency: &'static str,
}

impl ComponentReport {
    pub fn denominator(&self) -> u64 {
        self.modulus as u64 * self.vertex_count as u64
    }

    /// Components that contain at least one exact cocycle of each listed class.
    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    /// The least coset distance among exact cocycles off `B¹`, read from the histogram.
    pub fn histogram_min_intercoset(&self) -> Option<u64> {
        self.histogram.iter().filter(|r| r.defect_num == 0 && r.distance_num > 0).map(|r| r.distance_num).min()
    }

    pub fn histogram_csv(&self) -> String {
        let den = self.denominator();
        let mut s = String::from("defect_per_vertex,coset_distance_per_vertex,coset_distance_bound,count\n");
        for r in &self.histogram {
            let b = match r.bound {
                Bound::Exact => "exact",
                Bound::Upper => "upper",
            };
            s.push_str(&format!("{},{},{b},{}\n", r.defect_num as f64 / den as f64, r.distance_num as f64 / den as f64, r.count));
        }
        s
    }
}

fn decode(code: u64, len: usize, m: u32, out: &mut [u32]) {
    let mut c = code;
    for slot in out.iter_mut().take(len) {
        *slot = (c % m as u64) as u32;
        c /= m as u64;
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

/// Sparse perturbations `(edge, shift)` of total norm numerator at most `budget`.
fn perturbations(edges: usize, m: u32, budget: u64, cap: usize) -> Option<Vec<Vec<(usize, u32)>>> {
    fn go(
        start: usize,
        edges: usize,
        m: u32,
        budget: u64,
        cur: &mut Vec<(usize, u32)>,
        out: &mut Vec<Vec<(usize, u32)>>,
        cap: usize,
    ) -> bool {
        for e in start..edges {
            for k in 1..m {
                let c = norm_num(k, m);
                if c > budget {
                    continue;
                }
                cur.push((e, k));
                out.push(cur.clone());
                if out.len() > cap || !go(e + 1, edges, m, budget - c, cur, out, cap) {
                    return false;
                }
                cur.pop();
            }
        }
        true
    }
    let mut out = Vec::new();
    go(0, edges, m, budget, &mut Vec::new(), &mut out, cap).then_some(out)
}

/// Exhaustive scan of all cochains: admits those with defect at most `ε`,
/// joins admitted pairs at distance below `δ`, and tabulates coset distance
/// against defect over the whole cochain space.
pub fn near_cocycle_component_scan(
    graph: &SchreierGraph,
    family: &RelationLoopSet,
    modulus: u32,
    epsilon: f64,
    delta: f64,
    stream: &Stream,
) -> Result<ComponentReport> {
    check_modulus(modulus)?;
    let (n, edges, m) = (graph.vertex_count(), graph.edge_count(), modulus);
    let total = (m as u64)
        .checked_pow(edges as u32)
        .filter(|&t| t <= SCAN_LIMIT)
        .ok_or_else(|| Error::SizeLimit(format!("{m}^{edges} cochains exceed the scan limit")))?;
    let h = solve_cocycles(graph, family, modulus)?;
    let den = m as u64 * n as u64;

    // B¹ elements, for exact distances to the coboundary subgroup
    let beta_space = (m as u64).checked_pow(n.saturating_sub(1) as u32).unwrap_or(u64::MAX);
    let exact_hist = beta_space <= 1 << 16 && total.saturating_mul(beta_space).saturating_mul(edges as u64) <= 1 << 34;
    let b1: Vec<Vec<u32>> = if exact_hist {
        let mut set = std::collections::BTreeSet::new();
        let mut beta = vec![0u32; n];
        for code in 0..beta_space {
            decode(code, n - 1, m, &mut beta[1..]);
            set.insert(coboundary_0(graph, &beta, m)?.values);
        }
        set.into_iter().collect()
    } else {
        Vec::new()
    };

    let rows: Vec<(u64, u64, Bound, bool)> = (0..total)
        .into_par_iter()
        .map(|code| -> Result<(u64, u64, Bound, bool)> {
            let mut vals = vec![0u32; edges];
            decode(code, edges, m, &mut vals);
            let alpha = Cochain1 { modulus: m, vertex_count: n, values: vals };
            let defect = near_cocycle_defect_num(graph, &alpha, family)?;
            let admitted = defect as f64 <= epsilon * den as f64;
            let (dist, bound) = if exact_hist {
                (b1.iter().map(|b| distance_num(&alpha.values, b, m)).min().unwrap_or(0), Bound::Exact)
            } else {
                let d = coset_distance(graph, &alpha, SearchMode::Heuristic, &stream.derive("hist", &[code]))?;
                (d.numerator, d.bound)
            };
            Ok((defect, dist, bound, admitted))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut hist: BTreeMap<(u64, u64, Bound), u64> = BTreeMap::new();
    for &(d, c, b, _) in &rows {
        *hist.entry((d, c, b)).or_insert(0) += 1;
    }
    let admitted: Vec<u64> = (0..total).filter(|&c| rows[c as usize].3).collect();
    let index: HashMap<u64, usize> = admitted.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut uf = UnionFind((0..admitted.len()).collect());

    // adjacency: distance < δ, i.e. numerator < δ·m·|V|
    let limit = delta * den as f64;
    let budget = if limit <= 0.0 { None } else { Some((limit.ceil() as u64).saturating_sub(1)) };
    let pair_cost = (admitted.len() as u64).saturating_mul(admitted.len() as u64) / 2;
    let cap = (pair_cost / admitted.len().max(1) as u64).min(1 << 22) as usize;
    let perturbs = budget.and_then(|b| perturbations(edges, m, b.min(edges as u64 * (m as u64 / 2)), cap));
    let pow: Vec<u64> = (0..edges).map(|e| (m as u64).pow(e as u32)).collect();
    let adjacency;
    match (budget, perturbs) {
        (None, _) => adjacency = "none",
        (Some(_), Some(ps)) => {
            adjacency = "perturbation";
            let neigh: Vec<Vec<usize>> = admitted
                .par_iter()
                .map(|&code| {
                    let mut out = Vec::new();
                    for p in &ps {
                        let mut c = code;
                        for &(e, k) in p {
                            let digit = (c / pow[e]) % m as u64;
                            let nd = (digit + k as u64) % m as u64;
                            c = c - digit * pow[e] + nd * pow[e];
                        }
                        if let Some(&j) = index.get(&c) {
                            out.push(j);
                        }
                    }
                    out
                })
                .collect();
            for (i, ns) in neigh.iter().enumerate() {
                for &j in ns {
                    uf.union(i, j);
                }
            }
        }
        (Some(b), None) => {
            adjacency = "pairwise";
            if pair_cost > 1 << 36 {
                return Err(Error::SizeLimit(format!("{} admitted cochains are too many to compare pairwise", admitted.len())));
            }
            let decoded: Vec<Vec<u32>> = admitted
                .iter()
                .map(|&c| {
                    let mut v = vec![0u32; edges];
                    decode(c, edges, m, &mut v);
                    v
                })
                .collect();
            let pairs: Vec<(usize, usize)> = (0..decoded.len())
                .into_par_iter()
                .flat_map_iter(|i| {
                    let decoded = &decoded;
                    ((i + 1)..decoded.len()).filter(move |&j| distance_num(&decoded[i], &decoded[j], m) <= b).map(move |j| (i, j))
                })
                .collect();
            for (i, j) in pairs {
                uf.union(i, j);
            }
        }
    }

    let mut groups: BTreeMap<usize, Component> = BTreeMap::new();
    for (i, &code) in admitted.iter().enumerate() {
        let root = uf.find(i);
        let (defect, _, _, _) = rows[code as usize];
        let dval = defect as f64 / den as f64;
        let comp = groups.entry(root).or_insert(Component { size: 0, classes: Vec::new(), min_defect: dval, max_defect: dval });
        comp.size += 1;
        comp.min_defect = comp.min_defect.min(dval);
        comp.max_defect = comp.max_defect.max(dval);
        if defect == 0 {
            let mut vals = vec![0u32; edges];
            decode(code, edges, m, &mut vals);
            let alpha = Cochain1 { modulus: m, vertex_count: n, values: vals };
            if let Some(class) = h.class_of(&alpha) {
                if !comp.classes.contains(&class) {
                    comp.classes.push(class);
                }
            }
        }
    }
    let mut components: Vec<Component> = groups.into_values().collect();
    for c in &mut components {
        c.classes.sort();
    }
    Ok(ComponentReport {
        modulus: m,
        vertex_count: n,
        epsilon,
        delta,
        scanned: total,
        admitted: admitted.len(),
        components,
        histogram: hist.into_iter().map(|((d, c, b), count)| HistogramRow { defect_num: d, distance_num: c, bound: b, count }).collect(),
        adjacency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presentation::{builtin_presentation, BuiltinFamily};
    use crate::sofic::{builtin_quotient, QuotientSpec};

    fn cyclic(n: usize, free: bool) -> (GroupPresentation, SchreierGraph) {
        let fam = if free { BuiltinFamily::FreeGroup { k: 1 } } else { BuiltinFamily::Cyclic { n: n as u32 } };
        let p = builtin_presentation(fam).unwrap();
        (p, SchreierGraph::new(builtin_quotient(&QuotientSpec::CyclicShift { n }, 1).unwrap()))
    }

    fn torus(n: usize) -> (GroupPresentation, SchreierGraph) {
        let p = builtin_presentation(BuiltinFamily::IntegerLattice { d: 2 }).unwrap();
        (p, SchreierGraph::new(builtin_quotient(&QuotientSpec::TorusShift { n }, 2).unwrap()))
    }

    const A: GeneratorSymbol = GeneratorSymbol::new(0);
    const AI: GeneratorSymbol = GeneratorSymbol::inverse_of(0);

    #[test]
    fn coboundary_examples() {
        let (_, g) = cyclic(4, false);
        assert!(coboundary_0(&g, &[3, 3, 3, 3], 5).unwrap().is_zero());
        let d = coboundary_0(&g, &[0, 1, 0, 1], 2).unwrap();
        assert!(d.values().iter().all(|&v| v == 1));
        let ind = coboundary_0(&g, &[1, 0, 0, 0], 2).unwrap();
        let touched: Vec<(GeneratorSymbol, Vertex)> = (0..g.edge_count()).filter(|&e| ind.values()[e] != 0).map(|e| g.edge(e)).collect();
        assert_eq!(touched, vec![(A, 0), (A, 3), (AI, 0), (AI, 1)]);
    }

    #[test]
    fn loop_sum_examples() {
        let (p, g) = cyclic(4, false);
        let a4 = p.relations()[0].clone();
        let beta = coboundary_0(&g, &[2, 0, 1, 1], 3).unwrap();
        for v in 0..4 {
            assert_eq!(loop_sum(&g, &beta, &a4, v), 0);
        }
        for m in [2, 3] {
            let mut alpha = Cochain1::zero(&g, m).unwrap();
            for v in 0..4 {
                alpha.set(A, v, 1);
            }
            assert_eq!(loop_sum(&g, &alpha, &a4, 0), 4 % m);
        }
    }

    #[test]
    fn defect_examples() {
        let (p, g) = cyclic(4, false);
        let fam = RelationLoopSet::new(vec![p.relations()[0].clone(), Word(vec![A, AI])]).unwrap();
        let mut alpha = Cochain1::zero(&g, 2).unwrap();
        alpha.set(A, 0, 1);
        alpha.set(AI, 1, 1);
        assert_eq!(near_cocycle_defect(&g, &alpha, &fam).unwrap(), 0.5);
        let exact = coboundary_0(&g, &[1, 0, 1, 1], 2).unwrap();
        assert_eq!(near_cocycle_defect(&g, &exact, &fam).unwrap(), 0.0);
        assert!(RelationLoopSet::new(vec![]).is_err());
    }

    #[test]
    fn distance_examples() {
        let (_, g) = cyclic(4, true);
        let zero = Cochain1::zero(&g, 2).unwrap();
        let ones = Cochain1::from_values(&g, 2, vec![1; 8]).unwrap();
        assert_eq!(cochain_distance(&zero, &zero).unwrap(), 0.0);
        assert_eq!(cochain_distance(&zero, &ones).unwrap(), 1.0);
        let mut pair = zero.clone();
        pair.set(A, 0, 1);
        pair.set(AI, 1, 1);
        assert_eq!(cochain_distance(&zero, &pair).unwrap(), 0.25);
        let other = Cochain1::zero(&g, 3).unwrap();
        assert!(cochain_distance(&zero, &other).is_err());
    }

    #[test]
    fn cohomology_of_cyclic_quotients() {
        for n in 2..=4 {
            let (p, g) = cyclic(n, false);
            let h = solve_cocycles(&g, &RelationLoopSet::for_presentation(&p), 2).unwrap();
            assert!(h.invariant_factors().is_empty(), "n = {n}");
        }
        let (p, g) = cyclic(4, true);
        let h = solve_cocycles(&g, &RelationLoopSet::trivial(&p), 2).unwrap();
        assert_eq!(h.invariant_factors(), vec![2]);
        let rep = &h.representatives()[0];
        let total: u32 = (0..4).map(|v| rep.get(A, v)).sum();
        assert_eq!(total % 2, 1);
        assert!(!h.is_coboundary(rep));
        let (p, g) = torus(2);
        let h = solve_cocycles(&g, &RelationLoopSet::for_presentation(&p), 2).unwrap();
        assert_eq!(h.invariant_factors(), vec![2, 2]);
    }

    #[test]
    fn representatives_are_cocycles_off_b1() {
        for (p, g, m) in [(cyclic(4, true).0, cyclic(4, true).1, 3), (torus(3).0, torus(3).1, 3), (torus(2).0, torus(2).1, 4)] {
            let fam = if p.relations().is_empty() { RelationLoopSet::trivial(&p) } else { RelationLoopSet::for_presentation(&p) };
            let h = solve_cocycles(&g, &fam, m).unwrap();
            assert!(!h.representatives().is_empty());
            for (i, r) in h.representatives().iter().enumerate() {
                assert_eq!(near_cocycle_defect_num(&g, r, &fam).unwrap(), 0);
                assert!(!h.is_coboundary(r));
                let mut unit = vec![0; h.representatives().len()];
                unit[i] = 1;
                assert_eq!(h.class_of(r).unwrap(), unit);
            }
            let beta: Vec<u32> = (0..g.vertex_count() as u32).map(|v| (v * 7 + 1) % m).collect();
            let b = coboundary_0(&g, &beta, m).unwrap();
            assert!(h.class_of(&b).unwrap().iter().all(|&c| c == 0));
            let shifted = h.representatives()[0].add(&b).unwrap();
            assert_eq!(h.class_of(&shifted), h.class_of(&h.representatives()[0]));
        }
    }

    #[test]
    fn non_cocycles_have_no_class() {
        let (p, g) = cyclic(4, false);
        let h = solve_cocycles(&g, &RelationLoopSet::for_presentation(&p), 2).unwrap();
        let mut alpha = Cochain1::zero(&g, 2).unwrap();
        alpha.set(A, 0, 1);
        assert_eq!(h.class_of(&alpha), None);
        assert!(!h.is_coboundary(&alpha));
    }

    #[test]
    fn coset_distance_examples() {
        let (p, g) = cyclic(4, true);
        let h = solve_cocycles(&g, &RelationLoopSet::trivial(&p), 2).unwrap();
        let s = Stream::new(0, "cd", &[]);
        let b = coboundary_0(&g, &[0, 1, 1, 0], 2).unwrap();
        let d = coset_distance(&g, &b, SearchMode::Exact, &s).unwrap();
        assert_eq!(d.numerator, 0);
        assert_eq!(coboundary_0(&g, &d.witness, 2).unwrap(), b);
        let rep = &h.representatives()[0];
        let exact = coset_distance(&g, rep, SearchMode::Exact, &s).unwrap();
        assert_eq!((exact.numerator, exact.denominator), (2, 8));
        let heur = coset_distance(&g, rep, SearchMode::Heuristic, &s).unwrap();
        assert_eq!(heur.numerator, exact.numerator);
        assert_eq!(heur.bound, Bound::Upper);
        let moved = rep.add(&coboundary_0(&g, &[1, 1, 0, 1], 2).unwrap()).unwrap();
        assert_eq!(coset_distance(&g, &moved, SearchMode::Exact, &s).unwrap().numerator, exact.numerator);
        let (_, big) = torus(5);
        let z = Cochain1::zero(&big, 2).unwrap();
        assert!(matches!(coset_distance(&big, &z, SearchMode::Exact, &s), Err(Error::SizeLimit(_))));
    }

    #[test]
    fn min_intercoset_on_cycles_shrinks() {
        let s = Stream::new(0, "ic", &[]);
        let mut last = f64::INFINITY;
        for n in [4, 8, 16] {
            let (p, g) = cyclic(n, true);
            let h = solve_cocycles(&g, &RelationLoopSet::trivial(&p), 2).unwrap();
            let mode = if n <= 16 { SearchMode::Exact } else { SearchMode::Heuristic };
            let d = min_intercoset_distance(&g, &h, mode, &s).unwrap().unwrap();
            assert_eq!(d.numerator * n as u64, d.denominator, "1/n on the {n}-cycle");
            assert!(d.distance <= last);
            last = d.distance;
        }
    }

    #[test]
    fn scan_trivial_regimes() {
        let (p, g) = cyclic(4, true);
        let fam = RelationLoopSet::trivial(&p);
        let s = Stream::new(0, "scan", &[]);
        let tiny = near_cocycle_component_scan(&g, &fam, 2, 0.0, 0.01, &s).unwrap();
        assert_eq!(tiny.admitted, 16);
        assert_eq!(tiny.component_count(), 16);
        let all = near_cocycle_component_scan(&g, &fam, 2, 10.0, 1.0, &s).unwrap();
        assert_eq!(all.admitted, 256);
        assert_eq!(all.component_count(), 1);
        assert_eq!(all.histogram.iter().map(|r| r.count).sum::<u64>(), 256);
        assert_eq!(all.histogram_min_intercoset(), Some(2));
    }

    #[test]
    fn scan_separates_classes_below_min_distance() {
        let (p, g) = cyclic(4, true);
        let fam = RelationLoopSet::trivial(&p);
        let s = Stream::new(0, "scan", &[]);
        for delta in [0.1, 0.25, 0.26, 0.5, 0.51] {
            let r = near_cocycle_component_scan(&g, &fam, 2, 0.0, delta, &s).unwrap();
            for c in &r.components {
                if delta <= 0.25 {
                    assert_eq!(c.classes.len(), 1, "δ = {delta}");
                }
            }
        }
    }
}
