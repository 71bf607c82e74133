//! Good models of the Popa factor on Schreier graphs: Haar samples of a
//! coset `α + B¹`, the exact window law, and disconnection experiments.
//!
//! The circle is replaced by `Z/m` throughout, so the window law is the
//! uniform measure on a finite subgroup of `(Z/m)^{S×E}`.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::cohomology::{
    coboundary_0, cochain_distance, min_intercoset_distance, near_cocycle_component_scan, near_cocycle_defect, near_cocycle_defect_num,
    solve_cocycles, Bound, Cochain1, Cohomology, ComponentReport, RelationLoopSet, SearchMode,
};
use crate::error::{Error, Result};
use crate::model::{LetterDistribution, Microstate, Window};
use crate::presentation::{GeneratorSymbol, GroupPresentation, Word};
use crate::rng::{per_item, Stream};
use crate::snf::{diagonalize_mod, Diagonalization, ModMatrix};
use crate::sofic::{ElementKey, ElementOracle, SchreierGraph, Vertex};
use crate::walk::{connect, Assessment, ConnectReport, ModelSpace, PathFailure, WalkConfig};

/// `φ^σ(θ) = dθ`.
pub fn popa_projection(graph: &SchreierGraph, theta: &Microstate) -> Result<Cochain1> {
    let m = match theta.alphabet() {
        crate::model::Alphabet::Cyclic { modulus } => modulus,
        crate::model::Alphabet::Finite { .. } => {
            return Err(Error::Mismatch("Popa projection needs a cyclic alphabet".into()));
        }
    };
    coboundary_0(graph, theta.values(), m)
}

/// One coset `class_rep + B¹` of exact cocycles.
#[derive(Clone, Debug)]
pub struct PopaModelSpec {
    pub graph: SchreierGraph,
    pub modulus: u32,
    pub class_rep: Cochain1,
    pub family: RelationLoopSet,
}

impl PopaModelSpec {
    pub fn new(graph: SchreierGraph, modulus: u32, class_rep: Cochain1, family: RelationLoopSet) -> Result<Self> {
        if class_rep.modulus() != modulus {
            return Err(Error::Mismatch("class representative has a different modulus".into()));
        }
        if near_cocycle_defect_num(&graph, &class_rep, &family)? != 0 {
            return Err(Error::InvalidConfig("class representative is not an exact cocycle".into()));
        }
        Ok(Self { graph, modulus, class_rep, family })
    }

    pub fn coboundary_coset(graph: SchreierGraph, modulus: u32, family: RelationLoopSet) -> Result<Self> {
        let zero = Cochain1::zero(&graph, modulus)?;
        Self::new(graph, modulus, zero, family)
    }
}

/// `class_rep + dθ` with `θ` uniform on `(Z/m)^V`; one draw per vertex.
pub fn sample_popa_model(spec: &PopaModelSpec, stream: &Stream) -> Result<Cochain1> {
    let m = spec.modulus;
    let mut theta = vec![0u32; spec.graph.vertex_count()];
    per_item(&mut theta, stream, 1, |_, rng, t| *t = rand::Rng::gen_range(rng, 0..m));
    spec.class_rep.add(&coboundary_0(&spec.graph, &theta, m)?)
}

/// `π_E(Z)`: the image of `θ ↦ (θ_{sg} − θ_g)_{s ∈ S, g ∈ E}` on `(Z/m)^C`
/// with `C = E ∪ S·E` deduplicated as group elements.
#[derive(Clone, Debug)]
pub struct WindowSubgroup {
    modulus: u32,
    window: Window,
    symbol_count: usize,
    /// Distinct elements of `C`, as one word each.
    support: Vec<Word>,
    map: ModMatrix,
    solver: Diagonalization,
}

impl WindowSubgroup {
    pub fn modulus(&self) -> u32 {
        self.modulus
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    /// The words of `C = E ∪ S·E`.
    pub fn support(&self) -> &[Word] {
        &self.support
    }

    /// Coordinates `(s, g)` in pattern order: `g` outer, `s` inner.
    pub fn coordinate_count(&self) -> usize {
        self.symbol_count * self.window.len()
    }

    /// Number of elements, or `None` past `u64`.
    pub fn size(&self) -> Option<u64> {
        self.solver.image_orders().iter().try_fold(1u64, |acc, &o| acc.checked_mul(o))
    }

    pub fn generators(&self) -> Vec<Vec<u32>> {
        (0..self.map.cols()).map(|j| self.map.column(j).into_iter().map(|v| v as u32).collect()).collect()
    }

    pub fn contains(&self, pattern: &[u32]) -> bool {
        pattern.len() == self.coordinate_count() && self.solver.solve(&pattern.iter().map(|&v| v as u64).collect::<Vec<_>>()).is_some()
    }

    /// `L(θ)` for `θ` indexed like [`Self::support`].
    pub fn image(&self, theta: &[u32]) -> Vec<u32> {
        self.map.mul_vec(&theta.iter().map(|&v| v as u64).collect::<Vec<_>>()).into_iter().map(|v| v as u32).collect()
    }

    /// `(α(s, σ^g v))_{g ∈ E, s ∈ S}`.
    pub fn pattern_at(&self, graph: &SchreierGraph, alpha: &Cochain1, v: Vertex) -> Result<Vec<u32>> {
        let sigma = graph.approximation();
        let mut out = Vec::with_capacity(self.coordinate_count());
        for g in self.window.words() {
            let gv = sigma.evaluate_word(g, v)?;
            for slot in 0..self.symbol_count {
                out.push(alpha.get(GeneratorSymbol::from_slot(slot), gv));
            }
        }
        Ok(out)
    }
}

/// [`window_subgroup_with`] using the presentation's word problem.
pub fn window_subgroup(p: &GroupPresentation, window: &Window, modulus: u32) -> Result<WindowSubgroup> {
    let oracle = ElementOracle::for_presentation(p)
        .ok_or_else(|| Error::UnsupportedFamily("no word-problem oracle for this presentation".into()))?;
    window_subgroup_with(&oracle, p.symbol_count(), window, modulus)
}

pub fn window_subgroup_with(oracle: &ElementOracle<'_>, symbol_count: usize, window: &Window, modulus: u32) -> Result<WindowSubgroup> {
    let mut support: Vec<Word> = Vec::new();
    let mut index: HashMap<ElementKey, usize> = HashMap::new();
    let mut locate = |w: Word| -> usize {
        let k = oracle.key(&w);
        *index.entry(k).or_insert_with(|| {
            support.push(w);
            support.len() - 1
        })
    };
    let mut cells = Vec::with_capacity(symbol_count * window.len());
    for g in window.words() {
        let gi = locate(g.clone());
        for slot in 0..symbol_count {
            let sg = Word::symbol(GeneratorSymbol::from_slot(slot)).concat(g);
            cells.push((locate(sg), gi));
        }
    }
    let m = modulus as u64;
    let mut map = ModMatrix::zeros(cells.len(), support.len(), m)?;
    for (row, &(sg, g)) in cells.iter().enumerate() {
        map.set(row, sg, (map.get(row, sg) + 1) % m);
        map.set(row, g, (map.get(row, g) + m - 1) % m);
    }
    let solver = diagonalize_mod(&map)?;
    Ok(WindowSubgroup { modulus, window: window.clone(), symbol_count, support, map, solver })
}

/// Vertices at which `C` embeds faithfully.
pub fn valid_vertices(graph: &SchreierGraph, subgroup: &WindowSubgroup, oracle: &ElementOracle<'_>) -> Result<Vec<Vertex>> {
    let sigma = graph.approximation();
    let n = graph.vertex_count() as Vertex;
    let flags =
        (0..n).into_par_iter().map(|v| sigma.injectivity_radius_ok_with(&subgroup.support, v, oracle)).collect::<Result<Vec<bool>>>()?;
    Ok((0..n).filter(|&v| flags[v as usize]).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct MembershipFailure {
    pub sample: usize,
    pub vertex: Vertex,
}

#[derive(Clone, Debug, Serialize)]
pub struct MarginalReport {
    pub vertex_count: usize,
    pub valid_vertices: usize,
    pub samples: usize,
    pub patterns_checked: u64,
    pub membership_failures: Vec<MembershipFailure>,
    pub subgroup_size: Option<u64>,
    pub distinct_patterns: usize,
    /// TV between pooled window patterns and uniform on the subgroup.
    pub tv_to_uniform: f64,
}

impl MarginalReport {
    pub fn all_members(&self) -> bool {
        self.membership_failures.is_empty()
    }
}

/// `½ Σ_p |count_p / total − 1/|H||` over `H`, plus the mass outside `H`.
fn tv_to_uniform(hist: &BTreeMap<Vec<u32>, u64>, total: u64, size: Option<u64>, member: impl Fn(&[u32]) -> bool) -> f64 {
    let Some(h) = size else {
        return 1.0;
    };
    if total == 0 {
        return 1.0;
    }
    let (t, u) = (total as f64, 1.0 / h as f64);
    let mut sum = 0.0;
    let mut seen_in = 0u64;
    for (p, &c) in hist {
        if member(p) {
            seen_in += 1;
            sum += (c as f64 / t - u).abs();
        } else {
            sum += c as f64 / t;
        }
    }
    sum += (h - seen_in) as f64 * u;
    0.5 * sum
}

type PatternCounts = BTreeMap<Vec<u32>, u64>;

/// Checks window-subgroup membership at every valid vertex of every sample,
/// and compares the pooled pattern law with uniform on the subgroup.
pub fn popa_marginal_check(
    graph: &SchreierGraph,
    samples: &[Cochain1],
    subgroup: &WindowSubgroup,
    valid: &[Vertex],
) -> Result<MarginalReport> {
    let per_sample = samples
        .par_iter()
        .enumerate()
        .map(|(i, alpha)| -> Result<(PatternCounts, Vec<MembershipFailure>)> {
            if alpha.modulus() != subgroup.modulus {
                return Err(Error::Mismatch("sample modulus differs from the subgroup's".into()));
            }
            let mut hist = BTreeMap::new();
            let mut fails = Vec::new();
            for &v in valid {
                let p = subgroup.pattern_at(graph, alpha, v)?;
                if !subgroup.contains(&p) {
                    fails.push(MembershipFailure { sample: i, vertex: v });
                }
                *hist.entry(p).or_insert(0u64) += 1;
            }
            Ok((hist, fails))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut hist: BTreeMap<Vec<u32>, u64> = BTreeMap::new();
    let mut membership_failures = Vec::new();
    for (h, f) in per_sample {
        for (p, c) in h {
            *hist.entry(p).or_insert(0) += c;
        }
        membership_failures.extend(f);
    }
    let total = samples.len() as u64 * valid.len() as u64;
    let size = subgroup.size();
    Ok(MarginalReport {
        vertex_count: graph.vertex_count(),
        valid_vertices: valid.len(),
        samples: samples.len(),
        patterns_checked: total,
        membership_failures,
        subgroup_size: size,
        distinct_patterns: hist.len(),
        tv_to_uniform: tv_to_uniform(&hist, total, size, |p| subgroup.contains(p)),
    })
}

/// Edge-process model space: exact-or-near cocycles with defect at most `ε`,
/// with steps measured by the cochain distance.
pub struct EdgeModelSpace<'a> {
    pub graph: &'a SchreierGraph,
    pub family: &'a RelationLoopSet,
    pub epsilon: f64,
}

impl ModelSpace for EdgeModelSpace<'_> {
    fn distance(&self, x: &Microstate, y: &Microstate) -> Result<f64> {
        cochain_distance(&Cochain1::from_microstate(self.graph, x)?, &Cochain1::from_microstate(self.graph, y)?)
    }

    fn assess(&self, x: &Microstate) -> Result<Assessment> {
        let score = near_cocycle_defect(self.graph, &Cochain1::from_microstate(self.graph, x)?, self.family)?;
        Ok(Assessment { good: score <= self.epsilon, score })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DeltaVerdict {
    pub delta: f64,
    pub components: usize,
    /// Components holding exact cocycles of more than one class.
    pub mixed_components: usize,
    /// Whether the zero class and a nontrivial class share a component.
    pub cosets_joined: bool,
    pub adjacency: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct Rational {
    pub numerator: u64,
    pub denominator: u64,
    pub value: f64,
    pub bound: Bound,
}

#[derive(Clone, Debug, Serialize)]
pub struct WalkFailureSummary {
    pub attempts: usize,
    pub success: bool,
    pub first_exit: Option<usize>,
    pub not_good_states: usize,
    pub long_steps: usize,
    pub max_step: f64,
    pub max_defect: f64,
}

impl WalkFailureSummary {
    fn from_report(r: &ConnectReport) -> Self {
        Self {
            attempts: r.attempts,
            success: r.success,
            first_exit: r.first_exit,
            not_good_states: r.failures.iter().filter(|f| matches!(f, PathFailure::NotGood { .. })).count(),
            long_steps: r.failures.iter().filter(|f| matches!(f, PathFailure::StepTooLong { .. })).count(),
            max_step: r.path.max_step(),
            max_defect: r.path.worst_score(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DisconnectionVerdict {
    pub modulus: u32,
    pub epsilon: f64,
    /// Component count at the first grid entry; `None` in sampling mode.
    pub components: Option<usize>,
    pub invariant_factors: Vec<u64>,
    pub classes_realized: Vec<Vec<u64>>,
    pub min_intercoset_distance: Option<Rational>,
    pub delta_grid: Vec<f64>,
    pub per_delta: Vec<DeltaVerdict>,
    pub walk_failure_modes: Vec<WalkFailureSummary>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisconnectionMode {
    Exhaustive,
    Sampling,
}

fn delta_verdict(r: &ComponentReport) -> DeltaVerdict {
    let zero_comp = r.components.iter().position(|c| c.classes.iter().any(|k| k.iter().all(|&x| x == 0)));
    let cosets_joined = zero_comp.is_some_and(|i| r.components[i].classes.len() > 1);
    DeltaVerdict {
        delta: r.delta,
        components: r.component_count(),
        mixed_components: r.components.iter().filter(|c| c.classes.len() > 1).count(),
        cosets_joined,
        adjacency: r.adjacency,
    }
}

/// Compares the coboundary coset with a nontrivial coset. Exhaustive mode
/// scans every cochain for each `δ`; sampling mode draws one model from each
/// coset and runs the Bernoulli walk between them on the edge process.
#[allow(clippy::too_many_arguments)]
pub fn disconnection_experiment(
    graph: &SchreierGraph,
    family: &RelationLoopSet,
    modulus: u32,
    epsilon: f64,
    delta_grid: &[f64],
    mode: DisconnectionMode,
    walk: Option<&WalkConfig>,
    stream: &Stream,
) -> Result<DisconnectionVerdict> {
    let h: Cohomology = solve_cocycles(graph, family, modulus)?;
    let classes = h.all_classes();
    let exact_ok = (modulus as u64).checked_pow(graph.vertex_count() as u32).is_some_and(|s| s <= crate::cohomology::EXACT_SEARCH_LIMIT);
    let search = if exact_ok { SearchMode::Exact } else { SearchMode::Heuristic };
    let min_d = min_intercoset_distance(graph, &h, search, &stream.derive("intercoset", &[]))?.map(|d| Rational {
        numerator: d.numerator,
        denominator: d.denominator,
        value: d.distance,
        bound: d.bound,
    });
    let mut per_delta = Vec::new();
    let mut classes_realized = Vec::new();
    let mut walk_failure_modes = Vec::new();
    match mode {
        DisconnectionMode::Exhaustive => {
            for (i, &delta) in delta_grid.iter().enumerate() {
                let r = near_cocycle_component_scan(graph, family, modulus, epsilon, delta, &stream.derive("scan", &[i as u64]))?;
                if i == 0 {
                    let mut all: Vec<Vec<u64>> = r.components.iter().flat_map(|c| c.classes.clone()).collect();
                    all.sort();
                    all.dedup();
                    classes_realized = all;
                }
                per_delta.push(delta_verdict(&r));
            }
        }
        DisconnectionMode::Sampling => {
            let walk = walk.ok_or_else(|| Error::InvalidConfig("sampling mode needs a walk configuration".into()))?;
            let Some(nontrivial) = classes.get(1) else {
                return Err(Error::InvalidConfig("H¹ is trivial: no second coset to compare".into()));
            };
            let zero = PopaModelSpec::coboundary_coset(graph.clone(), modulus, family.clone())?;
            let other = PopaModelSpec::new(graph.clone(), modulus, h.class_cochain(nontrivial)?, family.clone())?;
            let a = sample_popa_model(&zero, &stream.derive("sample", &[0]))?;
            let b = sample_popa_model(&other, &stream.derive("sample", &[1]))?;
            classes_realized = [h.class_of(&a), h.class_of(&b)].into_iter().flatten().collect();
            let nu = LetterDistribution::uniform(modulus);
            for (i, &delta) in delta_grid.iter().enumerate() {
                let cfg = WalkConfig { delta, ..*walk };
                let space = EdgeModelSpace { graph, family, epsilon };
                let r = connect(&a.to_microstate(), &b.to_microstate(), &cfg, &space, &nu, &stream.derive("walk", &[i as u64]))?;
                walk_failure_modes.push(WalkFailureSummary::from_report(&r));
            }
        }
    }
    Ok(DisconnectionVerdict {
        modulus,
        epsilon,
        components: per_delta.first().map(|d| d.components),
        invariant_factors: h.invariant_factors(),
        classes_realized,
        min_intercoset_distance: min_d,
        delta_grid: delta_grid.to_vec(),
        per_delta,
        walk_failure_modes,
    })
}
