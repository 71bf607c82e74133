//! The κ-lazy resampling walk and the coupled path builder between two good
//! models of a Bernoulli shift.
//!
//! Every random choice for vertex `v` comes from a fixed offset in a
//! counter-based stream, so trajectories do not depend on the worker count.
//! A connecting path is `x = ξ_0, …, ξ_s, ζ_s, …, ζ_0 = y`, where `(ξ_s, ζ_s)`
//! is drawn from the endpoint coupling and the intermediate states are bridge
//! trajectories with the exact law of the walk conditioned on its endpoint.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{hamming_distance, Letter, LetterDistribution, Microstate, NeighbourhoodSpec, TargetCache};
use crate::rng::{per_item as per_vertex, unit, Stream};
use crate::sofic::SoficApproximation;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkConfig {
    pub kappa: f64,
    pub delta: f64,
    pub steps: usize,
    pub seed: u64,
    pub retry_budget: usize,
}

impl WalkConfig {
    pub const DEFAULT_RETRY_BUDGET: usize = 16;

    /// `κ = max(0.95, 1 − δ/2)` and the least `s` with `κ^s < δ/4`.
    pub fn with_defaults(delta: f64, seed: u64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidConfig(format!("delta = {delta} must lie in (0, 1)")));
        }
        let kappa = f64::max(0.95, 1.0 - delta / 2.0);
        Ok(Self { kappa, delta, steps: Self::default_steps(kappa, delta), seed, retry_budget: Self::DEFAULT_RETRY_BUDGET })
    }

    pub fn default_steps(kappa: f64, delta: f64) -> usize {
        let mut s = ((delta / 4.0).ln() / kappa.ln()).ceil().max(0.0) as usize;
        while kappa.powi(s as i32) >= delta / 4.0 {
            s += 1;
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return bad(format!("kappa = {} must lie in (0, 1)", self.kappa));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta = {} must lie in (0, 1)", self.delta));
        }
        if 1.0 - self.kappa >= self.delta {
            return bad(format!("need 1 - kappa < delta, got kappa = {}, delta = {}", self.kappa, self.delta));
        }
        if self.kappa.powi(self.steps as i32) >= self.delta / 4.0 {
            return bad(format!("need kappa^steps < delta/4, got {}^{}", self.kappa, self.steps));
        }
        if self.retry_budget == 0 {
            return bad("retry_budget must be positive".into());
        }
        Ok(())
    }

    /// `κ^s`.
    pub fn keep_probability(&self) -> f64 {
        self.kappa.powi(self.steps as i32)
    }
}

/// A set of admissible states with the metric used for path steps.
pub trait ModelSpace: Sync {
    fn distance(&self, x: &Microstate, y: &Microstate) -> Result<f64> {
        hamming_distance(x, y)
    }

    fn assess(&self, x: &Microstate) -> Result<Assessment>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Assessment {
    pub good: bool,
    pub score: f64,
}

/// `Ω(O, σ)` for a vertex microstate neighbourhood, with Hamming steps.
pub struct VertexModelSpace<'a> {
    spec: &'a NeighbourhoodSpec,
    cache: TargetCache,
}

impl<'a> VertexModelSpace<'a> {
    pub fn new(sigma: &SoficApproximation, spec: &'a NeighbourhoodSpec) -> Result<Self> {
        Ok(Self { spec, cache: TargetCache::new(sigma, spec)? })
    }
}

impl ModelSpace for VertexModelSpace<'_> {
    fn assess(&self, x: &Microstate) -> Result<Assessment> {
        let score = self.spec.score_with(&self.cache, x)?;
        Ok(Assessment { good: score < self.spec.epsilon(), score })
    }
}

fn check_nu(x: &Microstate, nu: &LetterDistribution) -> Result<()> {
    if nu.size() != x.alphabet().size() {
        return Err(Error::Mismatch("distribution and alphabet sizes differ".into()));
    }
    Ok(())
}

/// One lazy step: each vertex keeps its value with probability `κ`,
/// otherwise takes a fresh draw from `ν`. Two draws per vertex.
pub fn walk_step(x: &Microstate, kappa: f64, nu: &LetterDistribution, stream: &Stream) -> Result<Microstate> {
    check_nu(x, nu)?;
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::InvalidConfig(format!("kappa = {kappa} must lie in [0, 1]")));
    }
    let src = x.values();
    let mut values = vec![0 as Letter; src.len()];
    per_vertex(&mut values, stream, 2, |v, rng, slot| {
        let keep = unit(rng) < kappa;
        let fresh = nu.sample(unit(rng));
        *slot = if keep { src[v] } else { fresh };
    });
    Microstate::new(x.alphabet(), values)
}

/// `s + 1` states starting at `x`; step `t` uses the stream derived with index `t`.
/// Only `κ` is checked: a bare trajectory has no horizon requirement.
pub fn iterate_walk(x: &Microstate, config: &WalkConfig, nu: &LetterDistribution, stream: &Stream) -> Result<Vec<Microstate>> {
    let mut states = vec![x.clone()];
    for t in 0..config.steps {
        let next = walk_step(&states[t], config.kappa, nu, &stream.derive("step", &[t as u64]))?;
        states.push(next);
    }
    Ok(states)
}

/// Whether the two sides draw their keep-bits independently or share them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingBits {
    #[default]
    Independent,
    Shared,
}

/// The time-`s` coupling: a shared `α ~ ν^V` and per-side keep-bits, each
/// set with probability `κ^s`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    pub alpha: Vec<Letter>,
    pub keep_x: Vec<bool>,
    pub keep_y: Vec<bool>,
}

impl Coupling {
    pub fn draw(vertex_count: usize, config: &WalkConfig, nu: &LetterDistribution, bits: CouplingBits, stream: &Stream) -> Self {
        let p = config.keep_probability();
        let mut cells = vec![(0 as Letter, false, false); vertex_count];
        per_vertex(&mut cells, stream, 3, |_, rng, cell| {
            let a = nu.sample(unit(rng));
            let ex = unit(rng) < p;
            let ey = unit(rng) < p;
            *cell = (a, ex, if bits == CouplingBits::Shared { ex } else { ey });
        });
        Self {
            alpha: cells.iter().map(|c| c.0).collect(),
            keep_x: cells.iter().map(|c| c.1).collect(),
            keep_y: cells.iter().map(|c| c.2).collect(),
        }
    }

    fn endpoint(&self, start: &[Letter], keep: &[bool]) -> Vec<Letter> {
        start.iter().zip(keep).zip(&self.alpha).map(|((&x, &k), &a)| if k { x } else { a }).collect()
    }
}

fn check_pair(x: &Microstate, y: &Microstate, nu: &LetterDistribution) -> Result<()> {
    if x.alphabet() != y.alphabet() {
        return Err(Error::Mismatch("endpoints have different alphabets".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Mismatch(format!("endpoints have lengths {} and {}", x.len(), y.len())));
    }
    check_nu(x, nu)
}

/// `(ξ_s, ζ_s)`: `ξ_v = x_v` if its keep-bit is set and `α_v` otherwise, and likewise for `ζ`.
pub fn couple_endpoints(
    x: &Microstate,
    y: &Microstate,
    config: &WalkConfig,
    nu: &LetterDistribution,
    bits: CouplingBits,
    stream: &Stream,
) -> Result<(Microstate, Microstate)> {
    config.validate()?;
    check_pair(x, y, nu)?;
    let c = Coupling::draw(x.len(), config, nu, bits, stream);
    Ok((
        Microstate::new(x.alphabet(), c.endpoint(x.values(), &c.keep_x))?,
        Microstate::new(x.alphabet(), c.endpoint(y.values(), &c.keep_y))?,
    ))
}

/// Inverse CDF of the last resample time `λ ∈ 1..=s`, `P(λ) ∝ κ^{s−λ}`.
fn last_resample_time(u: f64, kappa: f64, steps: usize) -> usize {
    let mass = 1.0 - kappa.powi(steps as i32);
    let back = ((1.0 - u * mass).ln() / kappa.ln()).floor();
    let back = if back.is_finite() { (back.max(0.0) as usize).min(steps - 1) } else { steps - 1 };
    steps - back
}

/// States `0..=s` of a walk from `start` conditioned on `keep` and ending at
/// the coupling's endpoint. Draws per vertex: one for `λ`, two per earlier step.
fn bridge(
    start: &Microstate,
    keep: &[bool],
    alpha: &[Letter],
    config: &WalkConfig,
    nu: &LetterDistribution,
    stream: &Stream,
) -> Result<Vec<Microstate>> {
    let (n, s) = (start.len(), config.steps);
    let src = start.values();
    let mut columns = vec![Vec::<Letter>::new(); n];
    per_vertex(&mut columns, stream, 2 * s as u64 + 1, |v, rng, col| {
        col.reserve(s + 1);
        col.push(src[v]);
        // every vertex consumes exactly 2s + 1 draws
        let u = unit(rng);
        let lambda = if keep[v] || s == 0 { s } else { last_resample_time(u, config.kappa, s) };
        let mut cur = src[v];
        for t in 1..=s {
            let stay = unit(rng) < config.kappa;
            let fresh = nu.sample(unit(rng));
            // kept vertices never move; others follow the walk until λ, then hold α
            if !keep[v] {
                if t >= lambda {
                    cur = alpha[v];
                } else if !stay {
                    cur = fresh;
                }
            }
            col.push(cur);
        }
    });
    (0..=s).map(|t| Microstate::new(start.alphabet(), columns.iter().map(|c| c[t]).collect())).collect()
}

/// A finite chain of states with its step distances and goodness flags.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkPath {
    pub states: Vec<Microstate>,
    pub step_distances: Vec<f64>,
    pub membership_flags: Vec<bool>,
    pub scores: Vec<f64>,
}

impl WalkPath {
    pub fn from_states(states: Vec<Microstate>, space: &impl ModelSpace) -> Result<Self> {
        let step_distances = states.windows(2).map(|p| space.distance(&p[0], &p[1])).collect::<Result<Vec<_>>>()?;
        let assessed = states.par_iter().map(|x| space.assess(x)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            states,
            step_distances,
            membership_flags: assessed.iter().map(|a| a.good).collect(),
            scores: assessed.iter().map(|a| a.score).collect(),
        })
    }

    /// Number of steps.
    pub fn length(&self) -> usize {
        self.step_distances.len()
    }

    pub fn max_step(&self) -> f64 {
        self.step_distances.iter().copied().fold(0.0, f64::max)
    }

    pub fn worst_score(&self) -> f64 {
        self.scores.iter().copied().fold(0.0, f64::max)
    }

    pub fn failures(&self, delta: f64) -> Vec<PathFailure> {
        let mut out: Vec<PathFailure> = self
            .membership_flags
            .iter()
            .enumerate()
            .filter(|(_, &g)| !g)
            .map(|(index, _)| PathFailure::NotGood { index, score: self.scores[index] })
            .collect();
        out.extend(
            self.step_distances
                .iter()
                .enumerate()
                .filter(|(_, &d)| d >= delta)
                .map(|(index, &distance)| PathFailure::StepTooLong { index, distance }),
        );
        out
    }

    pub fn is_delta_path(&self, delta: f64) -> bool {
        self.failures(delta).is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathFailure {
    /// State `index` is outside the model space.
    NotGood { index: usize, score: f64 },
    /// The step from state `index` to `index + 1` is at least `δ`.
    StepTooLong { index: usize, distance: f64 },
}

/// Result of [`connect`]: the first valid path, or the attempt with the
/// fewest violations.
#[derive(Clone, Debug)]
pub struct ConnectReport {
    pub success: bool,
    pub attempts: usize,
    pub path: WalkPath,
    pub failures: Vec<PathFailure>,
    /// First state index that is not good, if any.
    pub first_exit: Option<usize>,
    pub endpoints_good: (bool, bool),
}

/// One coupled attempt: forward bridge from `x`, reversed bridge from `y`.
/// The junction states coincide only when the coupling makes them equal.
pub fn coupled_path(
    x: &Microstate,
    y: &Microstate,
    config: &WalkConfig,
    nu: &LetterDistribution,
    bits: CouplingBits,
    stream: &Stream,
) -> Result<Vec<Microstate>> {
    check_pair(x, y, nu)?;
    let c = Coupling::draw(x.len(), config, nu, bits, &stream.derive("couple", &[]));
    let fwd = bridge(x, &c.keep_x, &c.alpha, config, nu, &stream.derive("bridge", &[0]))?;
    let mut back = bridge(y, &c.keep_y, &c.alpha, config, nu, &stream.derive("bridge", &[1]))?;
    if fwd.last() == back.last() {
        back.pop();
    }
    let mut states = fwd;
    states.extend(back.into_iter().rev());
    Ok(states)
}

/// Builds a `δ`-path from `x` to `y` inside the model space, retrying with
/// fresh randomness up to the retry budget.
pub fn connect(
    x: &Microstate,
    y: &Microstate,
    config: &WalkConfig,
    space: &impl ModelSpace,
    nu: &LetterDistribution,
    stream: &Stream,
) -> Result<ConnectReport> {
    config.validate()?;
    check_pair(x, y, nu)?;
    let endpoints_good = (space.assess(x)?.good, space.assess(y)?.good);
    let mut best: Option<(usize, WalkPath)> = None;
    for attempt in 0..config.retry_budget {
        let states = coupled_path(x, y, config, nu, CouplingBits::Independent, &stream.derive("attempt", &[attempt as u64]))?;
        let path = WalkPath::from_states(states, space)?;
        let failures = path.failures(config.delta);
        if failures.is_empty() {
            return Ok(ConnectReport { success: true, attempts: attempt + 1, path, failures, first_exit: None, endpoints_good });
        }
        let better = best.as_ref().is_none_or(|(n, b)| failures.len() < *n || (failures.len() == *n && path.max_step() < b.max_step()));
        if better {
            best = Some((failures.len(), path));
        }
    }
    let (_, path) = best.expect("retry budget is positive");
    let failures = path.failures(config.delta);
    let first_exit = path.membership_flags.iter().position(|g| !g);
    Ok(ConnectReport { success: false, attempts: config.retry_budget, path, failures, first_exit, endpoints_good })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{product_marginal, Alphabet, Window};
    use crate::presentation::{builtin_presentation, BuiltinFamily};
    use crate::sofic::{builtin_quotient, QuotientSpec};

    const BIN: Alphabet = Alphabet::Finite { size: 2 };

    fn random_state(n: usize, seed: u64) -> Microstate {
        let nu = LetterDistribution::uniform(2);
        let s = Stream::new(seed, "state", &[]);
        walk_step(&Microstate::constant(BIN, n, 0).unwrap(), 0.0, &nu, &s).unwrap()
    }

    fn cfg(kappa: f64, steps: usize) -> WalkConfig {
        WalkConfig { kappa, delta: 0.9, steps, seed: 0, retry_budget: 1 }
    }

    #[test]
    fn defaults_satisfy_invariants() {
        let c = WalkConfig::with_defaults(0.1, 1).unwrap();
        assert_eq!((c.kappa, c.steps, c.retry_budget), (0.95, 72, 16));
        assert!((c.keep_probability() - 0.024_89).abs() < 1e-4);
        c.validate().unwrap();
        for d in [0.01, 0.05, 0.3, 0.9] {
            WalkConfig::with_defaults(d, 0).unwrap().validate().unwrap();
        }
        assert!(WalkConfig { steps: 10, ..c }.validate().is_err());
        assert!(WalkConfig { kappa: 0.8, ..c }.validate().is_err());
        assert!(WalkConfig { retry_budget: 0, ..c }.validate().is_err());
    }

    #[test]
    fn degenerate_steps() {
        let x = random_state(50, 1);
        let nu = LetterDistribution::uniform(2);
        let s = Stream::new(2, "w", &[]);
        assert_eq!(walk_step(&x, 1.0, &nu, &s).unwrap(), x);
        let c = walk_step(&x, 0.0, &LetterDistribution::point_mass(2, 1), &s).unwrap();
        assert!(c.values().iter().all(|&l| l == 1));
    }

    #[test]
    fn step_distance_matches_expectation() {
        let nu = LetterDistribution::uniform(2);
        let x = random_state(10_000, 3);
        for trial in 0..100 {
            let y = walk_step(&x, 0.9, &nu, &Stream::new(4, "step", &[trial])).unwrap();
            let d = hamming_distance(&x, &y).unwrap();
            assert!((d - 0.05).abs() <= 0.01, "trial {trial}: {d}");
        }
    }

    #[test]
    fn iterate_examples() {
        let nu = LetterDistribution::uniform(2);
        let x = random_state(10_000, 5);
        let s = Stream::new(6, "it", &[]);
        let states = iterate_walk(&x, &cfg(0.5, 3), &nu, &s).unwrap();
        assert_eq!(states.len(), 4);
        // a vertex is untouched when every keep draw succeeded; re-derive those bits
        let untouched = (0..x.len()).filter(|&v| (0..3).all(|t| unit(&mut s.derive("step", &[t]).at(2 * v as u64)) < 0.5)).count() as f64
            / x.len() as f64;
        assert!((untouched - 0.125).abs() <= 0.02, "{untouched}");
        assert_eq!(iterate_walk(&x, &cfg(0.95, 0), &nu, &s).unwrap(), vec![x.clone()]);
        let frozen = iterate_walk(&x, &cfg(1.0, 5), &nu, &s).unwrap();
        assert!(frozen.len() == 6 && frozen.iter().all(|st| *st == x));
        let ok = cfg(0.95, 40);
        let traj = iterate_walk(&x, &ok, &nu, &s).unwrap();
        assert_eq!(traj.len(), 41);
        assert_eq!(traj[0], x);
    }

    #[test]
    fn coupling_examples() {
        let nu = LetterDistribution::uniform(2);
        let x = random_state(2000, 7);
        let y = random_state(2000, 8);
        let huge = WalkConfig { kappa: 0.95, delta: 0.9, steps: 2000, seed: 0, retry_budget: 1 };
        let (a, b) = couple_endpoints(&x, &y, &huge, &nu, CouplingBits::Independent, &Stream::new(1, "c", &[])).unwrap();
        assert_eq!(a, b);
        let c = WalkConfig { kappa: 0.95, delta: 0.9, steps: 72, seed: 0, retry_budget: 1 };
        let (a, b) = couple_endpoints(&x, &x, &c, &nu, CouplingBits::Shared, &Stream::new(2, "c", &[])).unwrap();
        assert_eq!(a, b);
        let big_x = random_state(10_000, 9);
        let big_y = random_state(10_000, 10);
        let c = WalkConfig { delta: 0.1, ..c };
        let mean = (0..50)
            .map(|t| {
                let (a, b) = couple_endpoints(&big_x, &big_y, &c, &nu, CouplingBits::Independent, &Stream::new(3, "c", &[t])).unwrap();
                hamming_distance(&a, &b).unwrap()
            })
            .sum::<f64>()
            / 50.0;
        assert!((mean - 0.025).abs() <= 0.005, "{mean}");
    }

    #[test]
    fn coupling_keep_frequency_is_binomial() {
        let nu = LetterDistribution::uniform(2);
        let c = WalkConfig { kappa: 0.95, delta: 0.1, steps: 72, seed: 0, retry_budget: 1 };
        let (n, trials) = (1000usize, 500u64);
        let kept: usize = (0..trials)
            .map(|t| {
                Coupling::draw(n, &c, &nu, CouplingBits::Independent, &Stream::new(4, "k", &[t])).keep_x.iter().filter(|&&k| k).count()
            })
            .sum();
        let p = c.keep_probability();
        let total = (n as u64 * trials) as f64;
        let tol = 3.0 * (p * (1.0 - p) / total).sqrt();
        assert!((kept as f64 / total - p).abs() <= tol);
    }

    #[test]
    fn bridge_has_walk_marginals() {
        // per-time keep fractions of the bridge must match the unconditioned walk: κ^t
        let nu = LetterDistribution::point_mass(2, 1);
        let x = Microstate::constant(BIN, 20_000, 0).unwrap();
        let c = WalkConfig { kappa: 0.8, delta: 0.9, steps: 12, seed: 0, retry_budget: 1 };
        let s = Stream::new(5, "b", &[]);
        let coupling = Coupling::draw(x.len(), &c, &nu, CouplingBits::Independent, &s);
        let states = bridge(&x, &coupling.keep_x, &coupling.alpha, &c, &nu, &s.derive("x", &[])).unwrap();
        for (t, st) in states.iter().enumerate() {
            let zeros = st.values().iter().filter(|&&l| l == 0).count() as f64 / x.len() as f64;
            let want = c.kappa.powi(t as i32);
            let tol = 4.0 * (want * (1.0 - want) / x.len() as f64).sqrt() + 1e-12;
            assert!((zeros - want).abs() <= tol, "t = {t}: {zeros} vs {want}");
        }
        assert_eq!(states.last().unwrap().values(), coupling.endpoint(x.values(), &coupling.keep_x).as_slice());
    }

    #[test]
    fn resample_time_is_in_range() {
        for u in [0.0, 1e-9, 0.3, 0.999_999_999] {
            let l = last_resample_time(u, 0.95, 72);
            assert!((1..=72).contains(&l));
        }
        assert_eq!(last_resample_time(0.0, 0.95, 72), 72);
        assert_eq!(last_resample_time(0.5, 0.5, 1), 1);
    }

    fn torus_space(n: usize) -> (SoficApproximation, NeighbourhoodSpec) {
        let p = builtin_presentation(BuiltinFamily::IntegerLattice { d: 2 }).unwrap();
        let sigma = builtin_quotient(&QuotientSpec::TorusShift { n }, 2).unwrap();
        let w = Window::ball(&p, 1);
        let spec = NeighbourhoodSpec::marginal_tv(product_marginal(&LetterDistribution::uniform(2), &w, BIN).unwrap(), 0.05).unwrap();
        (sigma, spec)
    }

    #[test]
    fn coupled_outputs_stay_good() {
        let (sigma, spec) = torus_space(100);
        let space = VertexModelSpace::new(&sigma, &spec).unwrap();
        let nu = LetterDistribution::uniform(2);
        let c = WalkConfig::with_defaults(0.1, 0).unwrap();
        let mut good = 0;
        for t in 0..20 {
            let x = random_state(10_000, 100 + t);
            let y = random_state(10_000, 200 + t);
            let (a, b) = couple_endpoints(&x, &y, &c, &nu, CouplingBits::Independent, &Stream::new(6, "g", &[t])).unwrap();
            good += space.assess(&a).unwrap().good as u32 + space.assess(&b).unwrap().good as u32;
        }
        assert!(good >= 38, "{good} of 40");
    }

    #[test]
    fn connect_trivial_and_forced_failure() {
        let (sigma, spec) = torus_space(10);
        let nu = LetterDistribution::uniform(2);
        let x = random_state(100, 11);
        struct Only(Microstate);
        impl ModelSpace for Only {
            fn assess(&self, x: &Microstate) -> Result<Assessment> {
                let good = *x == self.0;
                Ok(Assessment { good, score: !good as u8 as f64 })
            }
        }
        // s = 0 and x = y gives the one-state path
        let states =
            coupled_path(&x, &x, &WalkConfig { steps: 0, ..cfg(0.95, 0) }, &nu, CouplingBits::Shared, &Stream::new(0, "t", &[])).unwrap();
        assert_eq!(states, vec![x.clone()]);
        let p = WalkPath::from_states(states, &Only(x.clone())).unwrap();
        assert!(p.is_delta_path(0.1) && p.length() == 0);

        let y = random_state(100, 12);
        let c = WalkConfig { kappa: 0.95, delta: 0.1, steps: 72, seed: 0, retry_budget: 2 };
        let r = connect(&x, &y, &c, &Only(x.clone()), &nu, &Stream::new(1, "t", &[])).unwrap();
        assert!(!r.success);
        assert_eq!(r.attempts, 2);
        assert_eq!(r.endpoints_good, (true, false));
        assert_eq!(r.first_exit, Some(1));
        assert!(r.failures.iter().any(|f| matches!(f, PathFailure::NotGood { index: 1, .. })));
        let _ = sigma;
        let _ = spec;
    }

    #[test]
    fn connect_rejects_mismatched_inputs() {
        let (sigma, spec) = torus_space(10);
        let space = VertexModelSpace::new(&sigma, &spec).unwrap();
        let nu = LetterDistribution::uniform(2);
        let c = WalkConfig::with_defaults(0.1, 0).unwrap();
        let x = random_state(100, 1);
        let y = Microstate::constant(Alphabet::Finite { size: 3 }, 100, 0).unwrap();
        assert!(matches!(connect(&x, &y, &c, &space, &nu, &Stream::new(0, "m", &[])), Err(Error::Mismatch(_))));
        let bad = WalkConfig { kappa: 1.5, ..c };
        assert!(matches!(connect(&x, &x, &bad, &space, &nu, &Stream::new(0, "m", &[])), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn connect_builds_delta_paths_on_the_torus() {
        let (sigma, spec) = torus_space(100);
        let space = VertexModelSpace::new(&sigma, &spec).unwrap();
        let nu = LetterDistribution::uniform(2);
        let c = WalkConfig::with_defaults(0.1, 0).unwrap();
        let x = random_state(10_000, 21);
        let y = random_state(10_000, 22);
        let r = connect(&x, &y, &c, &space, &nu, &Stream::new(9, "conn", &[])).unwrap();
        assert!(r.success, "{:?}", r.failures);
        assert!(r.path.max_step() < 0.1);
        assert_eq!(r.path.states.first(), Some(&x));
        assert_eq!(r.path.states.last(), Some(&y));
        assert_eq!(r.path.states.len(), 2 * c.steps + 2);
        for (i, d) in r.path.step_distances.iter().enumerate() {
            assert_eq!(*d, hamming_distance(&r.path.states[i], &r.path.states[i + 1]).unwrap());
        }
    }

    #[test]
    fn walk_is_independent_of_worker_count() {
        let nu = LetterDistribution::uniform(2);
        let x = random_state(10_000, 31);
        let y = random_state(10_000, 32);
        let c = WalkConfig::with_defaults(0.1, 0).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| coupled_path(&x, &y, &c, &nu, CouplingBits::Independent, &Stream::new(3, "det", &[])).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
