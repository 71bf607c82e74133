//! Subcommand bodies. Each one writes its result files into the output
//! directory and returns whether every asserted identity held.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::*;
use super::svg::Plot;
use crate::cohomology::{coboundary_0, near_cocycle_component_scan, near_cocycle_defect_num, solve_cocycles, RelationLoopSet};
use crate::error::{Error, Result};
use crate::model::{
    conditional_expectation, empirical_distribution, pair_distance_identity_check, product_marginal, tv_distance, Alphabet,
    LetterDistribution, LocalFunction, Microstate, NeighbourhoodSpec, Window,
};
use crate::popa::{disconnection_experiment, popa_marginal_check, sample_popa_model, valid_vertices, window_subgroup_with, PopaModelSpec};
use crate::presentation::{builtin_presentation, BuiltinFamily, GroupPresentation, Word};
use crate::rng::{per_item, unit, Stream};
use crate::sofic::{builtin_quotient, ElementOracle, QuotientSpec, SchreierGraph};
use crate::walk::{connect, VertexModelSpace};

pub fn write_file(out: &Path, name: &str, contents: &str) -> Result<()> {
    let path = out.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

pub fn write_json(out: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    write_file(out, name, &text)
}

/// `ν^{×V}`, one draw per vertex.
pub fn sample_microstate(alphabet: Alphabet, len: usize, nu: &LetterDistribution, stream: &Stream) -> Result<Microstate> {
    let mut v = vec![0; len];
    per_item(&mut v, stream, 1, |_, rng, x| *x = nu.sample(unit(rng)));
    Microstate::new(alphabet, v)
}

fn oracle_for<'a>(p: &GroupPresentation, g: &'a SchreierGraph) -> ElementOracle<'a> {
    ElementOracle::for_presentation(p).unwrap_or(ElementOracle::Action(g.approximation()))
}

pub fn check_sofic(cfg: &CheckSoficConfig, out: &Path) -> Result<bool> {
    #[derive(Serialize)]
    struct Summary {
        vertex_count: usize,
        generator_count: usize,
        radius: usize,
        max_relation_defect: f64,
        min_nontrivial_moved: Option<f64>,
        injectivity_valid_fraction: Option<f64>,
    }
    let (p, g) = cfg.graph.build()?;
    let sigma = g.approximation();
    let mut csv = String::from("word,kind,fraction_of_vertices_moved\n");
    let mut max_relation_defect = 0.0f64;
    for w in p.relations() {
        let d = sigma.relation_defect(w)?;
        max_relation_defect = max_relation_defect.max(d);
        let _ = writeln!(csv, "{},relation,{d}", p.compact_word(w));
    }
    let oracle = ElementOracle::for_presentation(&p);
    let ball = crate::presentation::word_ball(&p, cfg.radius);
    let mut min_moved: Option<f64> = None;
    for w in &ball {
        let kind = match &oracle {
            Some(o) if o.key(w) == o.key(&Word::identity()) => "identity",
            Some(_) => "nontrivial",
            None => "unclassified",
        };
        let d = sigma.relation_defect(w)?;
        if kind == "nontrivial" {
            min_moved = Some(min_moved.map_or(d, |m: f64| m.min(d)));
        }
        let _ = writeln!(csv, "{},{kind},{d}", p.compact_word(w));
    }
    let injectivity_valid_fraction = match &oracle {
        Some(o) => {
            let n = g.vertex_count() as u32;
            let ok = (0..n).into_par_iter().map(|v| sigma.injectivity_radius_ok_with(&ball, v, o)).collect::<Result<Vec<bool>>>()?;
            Some(ok.iter().filter(|&&b| b).count() as f64 / n as f64)
        }
        None => None,
    };
    write_file(out, "defects.csv", &csv)?;
    write_json(
        out,
        "summary.json",
        &Summary {
            vertex_count: g.vertex_count(),
            generator_count: p.generator_count(),
            radius: cfg.radius,
            max_relation_defect,
            min_nontrivial_moved: min_moved,
            injectivity_valid_fraction,
        },
    )?;
    Ok(true)
}

pub fn empirical(cfg: &EmpiricalConfig, seed: u64, out: &Path) -> Result<bool> {
    #[derive(Serialize)]
    struct Summary {
        vertex_count: usize,
        window_size: usize,
        support_size: usize,
        tv_to_product_marginal: f64,
    }
    let (p, g) = cfg.graph.build()?;
    let nu = letter_distribution(&cfg.nu, cfg.alphabet)?;
    let x = match &cfg.microstate {
        Some(path) => Microstate::from_file(path)?,
        None => sample_microstate(cfg.alphabet, g.vertex_count(), &nu, &Stream::new(seed, "empirical", &[0]))?,
    };
    if x.alphabet() != cfg.alphabet {
        return Err(Error::Mismatch("microstate alphabet differs from the configured one".into()));
    }
    let window = Window::ball(&p, cfg.window_radius);
    let emp = empirical_distribution(g.approximation(), &x, &window)?;
    let tv = tv_distance(&emp, &product_marginal(&nu, &window, cfg.alphabet)?)?;
    write_file(out, "distribution.csv", &emp.to_csv(&p))?;
    write_json(
        out,
        "summary.json",
        &Summary { vertex_count: x.len(), window_size: window.len(), support_size: emp.support().len(), tv_to_product_marginal: tv },
    )?;
    Ok(true)
}

pub fn connect_cmd(cfg: &ConnectConfig, seed: u64, out: &Path, svg: bool) -> Result<bool> {
    #[derive(Serialize)]
    struct Summary {
        vertex_count: usize,
        trials: usize,
        successes: usize,
        kappa: f64,
        steps: usize,
        keep_probability: f64,
        delta: f64,
        epsilon: f64,
        endpoints_not_good: usize,
    }
    let (p, g) = cfg.graph.build()?;
    let sigma = g.approximation();
    let nu = letter_distribution(&cfg.nu, cfg.alphabet)?;
    let walk = cfg.walk(seed)?;
    let window = Window::ball(&p, cfg.window_radius);
    let spec = NeighbourhoodSpec::marginal_tv(product_marginal(&nu, &window, cfg.alphabet)?, cfg.epsilon)?;
    let space = VertexModelSpace::new(sigma, &spec)?;
    let mut csv = String::from("trial,success,max_step_distance_per_vertex,worst_tv,attempts\n");
    let (mut successes, mut bad_endpoints) = (0, 0);
    let mut first_path = None;
    for t in 0..cfg.trials {
        let s = Stream::new(seed, "connect", &[t as u64]);
        let x = sample_microstate(cfg.alphabet, g.vertex_count(), &nu, &s.derive("endpoint", &[0]))?;
        let y = sample_microstate(cfg.alphabet, g.vertex_count(), &nu, &s.derive("endpoint", &[1]))?;
        let r = connect(&x, &y, &walk, &space, &nu, &s.derive("walk", &[]))?;
        successes += r.success as usize;
        bad_endpoints += !(r.endpoints_good.0 && r.endpoints_good.1) as usize;
        let _ = writeln!(csv, "{t},{},{},{},{}", r.success, r.path.max_step(), r.path.worst_score(), r.attempts);
        if t == 0 {
            first_path = Some(r.path);
        }
    }
    write_file(out, "trials.csv", &csv)?;
    write_json(
        out,
        "summary.json",
        &Summary {
            vertex_count: g.vertex_count(),
            trials: cfg.trials,
            successes,
            kappa: walk.kappa,
            steps: walk.steps,
            keep_probability: walk.keep_probability(),
            delta: walk.delta,
            epsilon: cfg.epsilon,
            endpoints_not_good: bad_endpoints,
        },
    )?;
    if let (true, Some(path)) = (svg, first_path) {
        let pts: Vec<(f64, f64)> = path.step_distances.iter().enumerate().map(|(i, &d)| (i as f64, d)).collect();
        let plot = Plot {
            title: "trial 0: step distance along the path",
            x_label: "step",
            y_label: "normalized Hamming distance",
            points: &pts,
            threshold: Some(walk.delta),
        };
        write_file(out, "distance_vs_step.svg", &plot.line())?;
    }
    Ok(true)
}

pub fn cohomology(cfg: &CohomologyConfig, out: &Path) -> Result<bool> {
    let (p, g) = cfg.graph.build()?;
    let h = solve_cocycles(&g, &cfg.relations.build(&p)?, cfg.modulus)?;
    write_json(out, "summary.json", &h.summary())?;
    Ok(true)
}

pub fn coset_scan(cfg: &CosetScanConfig, seed: u64, out: &Path, svg: bool) -> Result<bool> {
    let (p, g) = cfg.graph.build()?;
    let fam = cfg.relations.build(&p)?;
    let r = near_cocycle_component_scan(&g, &fam, cfg.modulus, cfg.epsilon, cfg.delta, &Stream::new(seed, "coset-scan", &[0]))?;
    write_json(out, "components.json", &r)?;
    write_file(out, "histogram.csv", &r.histogram_csv())?;
    if svg {
        let den = r.denominator() as f64;
        let pts: Vec<(f64, f64)> = r.histogram.iter().map(|h| (h.defect_num as f64 / den, h.distance_num as f64 / den)).collect();
        let plot = Plot {
            title: "coset distance against loop defect",
            x_label: "defect per vertex",
            y_label: "coset distance per vertex",
            points: &pts,
            threshold: Some(cfg.delta),
        };
        write_file(out, "defect_vs_distance.svg", &plot.scatter())?;
    }
    Ok(true)
}

pub fn popa(cfg: &PopaConfig, seed: u64, out: &Path) -> Result<bool> {
    #[derive(Serialize)]
    struct Marginal<'a> {
        window: &'a [String],
        class: Vec<u64>,
        support_size: usize,
        #[serde(flatten)]
        report: crate::popa::MarginalReport,
    }
    let (p, g) = cfg.graph.build()?;
    let fam = cfg.relations.build(&p)?;
    let h = solve_cocycles(&g, &fam, cfg.modulus)?;
    let classes = h.all_classes();
    let class = classes
        .get(cfg.class)
        .ok_or_else(|| Error::InvalidConfig(format!("class {} out of range: H¹ has {} classes", cfg.class, classes.len())))?
        .clone();
    let spec = PopaModelSpec::new(g.clone(), cfg.modulus, h.class_cochain(&class)?, fam.clone())?;
    let samples = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|t| sample_popa_model(&spec, &Stream::new(seed, "popa", &[t])))
        .collect::<Result<Vec<_>>>()?;
    let oracle = oracle_for(&p, &g);
    let window = parse_window(&p, &cfg.window)?;
    let sub = window_subgroup_with(&oracle, p.symbol_count(), &window, cfg.modulus)?;
    let valid = valid_vertices(&g, &sub, &oracle)?;
    let report = popa_marginal_check(&g, &samples, &sub, &valid)?;
    let ok = report.all_members();
    write_json(out, "marginal.json", &Marginal { window: &cfg.window, class, support_size: sub.support().len(), report })?;
    let walk = cfg.walk_config(seed)?;
    let verdict = disconnection_experiment(
        &g,
        &fam,
        cfg.modulus,
        cfg.epsilon,
        &cfg.delta_grid,
        cfg.mode,
        walk.as_ref(),
        &Stream::new(seed, "popa", &[u64::MAX]),
    )?;
    write_json(out, "verdict.json", &verdict)?;
    Ok(ok)
}

struct Assertions {
    csv: String,
    failed: usize,
}

impl Assertions {
    fn new() -> Self {
        Self { csv: String::from("check,case,passed,lhs,rhs\n"), failed: 0 }
    }

    fn record(&mut self, check: &str, case: &str, passed: bool, lhs: f64, rhs: f64) {
        self.failed += !passed as usize;
        let _ = writeln!(self.csv, "{check},{case},{passed},{lhs},{rhs}");
    }
}

fn random_table(window: &Window, alphabet: Alphabet, stream: &Stream) -> Result<LocalFunction> {
    let k = alphabet.size() as usize;
    let size = k.pow(window.len() as u32);
    let mut rng = stream.rng();
    let table: Vec<f64> = (0..size).map(|_| rng.gen::<f64>()).collect();
    LocalFunction::from_fn(window.clone(), alphabet, 1.0, |p| table[p.iter().fold(0, |a, &l| a * k + l as usize)])
}

fn max_gap(a: &LocalFunction, b: &LocalFunction) -> f64 {
    a.table().iter().zip(b.table()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Exact identities that must hold on every input: the pair-distance
/// identity, `d∘d = 0`, and the conditional-expectation algebra.
pub fn identity_checks(cfg: &IdentityChecksConfig, seed: u64, out: &Path) -> Result<bool> {
    let mut a = Assertions::new();
    let z = builtin_presentation(BuiltinFamily::FreeGroup { k: 1 })?;
    for &n in &cfg.sizes {
        let sigma = builtin_quotient(&QuotientSpec::CyclicShift { n }, 1)?;
        for i in 0..cfg.pairs {
            let alphabet = if i % 2 == 0 { Alphabet::Finite { size: 3 } } else { Alphabet::Cyclic { modulus: 5 } };
            let nu = LetterDistribution::uniform(alphabet.size());
            let s = Stream::new(seed, "identity-checks", &[0, n as u64, i as u64]);
            let x = sample_microstate(alphabet, n, &nu, &s.derive("x", &[]))?;
            let y = sample_microstate(alphabet, n, &nu, &s.derive("y", &[]))?;
            let r = pair_distance_identity_check(&sigma, &x, &y)?;
            a.record("pair_distance", &format!("n={n};pair={i}"), r.equal, r.lhs, r.rhs);
        }
    }
    let lattice = builtin_presentation(BuiltinFamily::IntegerLattice { d: 2 })?;
    let c8 = builtin_presentation(BuiltinFamily::Cyclic { n: 8 })?;
    let quotients: [(&str, &GroupPresentation, QuotientSpec, RelationLoopSet); 3] = [
        ("cycle8_free", &z, QuotientSpec::CyclicShift { n: 8 }, RelationLoopSet::trivial(&z)),
        ("cycle8_cyclic", &c8, QuotientSpec::CyclicShift { n: 8 }, RelationLoopSet::for_presentation(&c8)),
        ("torus4_lattice", &lattice, QuotientSpec::TorusShift { n: 4 }, RelationLoopSet::for_presentation(&lattice)),
    ];
    for (qi, (name, p, q, fam)) in quotients.iter().enumerate() {
        let g = SchreierGraph::new(builtin_quotient(q, p.generator_count())?);
        for t in 0..cfg.pairs {
            let mut rng = Stream::new(seed, "identity-checks", &[1, qi as u64, t as u64]).rng();
            let beta: Vec<u32> = (0..g.vertex_count()).map(|_| rng.gen_range(0..3)).collect();
            let defect = near_cocycle_defect_num(&g, &coboundary_0(&g, &beta, 3)?, fam)?;
            a.record("coboundary_exact", &format!("{name};beta={t}"), defect == 0, defect as f64, 0.0);
        }
        let constant = coboundary_0(&g, &vec![2; g.vertex_count()], 3)?;
        a.record("constant_coboundary_zero", name, constant.is_zero(), 0.0, 0.0);
    }
    let words: Vec<Word> = ["e", "a", "A"].iter().map(|w| z.parse_word(w)).collect::<Result<_>>()?;
    let window = Window::new(words.clone())?;
    for (ai, alphabet) in [Alphabet::Finite { size: 2 }, Alphabet::Finite { size: 3 }].into_iter().enumerate() {
        let probs: Vec<f64> = (1..=alphabet.size()).map(f64::from).collect();
        let total: f64 = probs.iter().sum();
        let nu = LetterDistribution::new(probs.iter().map(|p| p / total).collect())?;
        let subsets: Vec<Vec<Word>> =
            (0..8u32).map(|mask| words.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, w)| w.clone()).collect()).collect();
        for t in 0..cfg.tables {
            let f = random_table(&window, alphabet, &Stream::new(seed, "identity-checks", &[2, ai as u64, t as u64]))?;
            let whole = f.product_integral(&nu);
            for (i, d) in subsets.iter().enumerate() {
                let ed = conditional_expectation(&f, d, &nu)?;
                let gap = (ed.product_integral(&nu) - whole).abs();
                a.record(
                    "measure_preserving",
                    &format!("k={};table={t};D={i}", alphabet.size()),
                    gap <= 1e-12,
                    ed.product_integral(&nu),
                    whole,
                );
                for (j, d2) in subsets.iter().enumerate() {
                    let both: Vec<Word> = d.iter().filter(|w| d2.contains(w)).cloned().collect();
                    let lhs = conditional_expectation(&ed, d2, &nu)?;
                    let rhs = conditional_expectation(&f, &both, &nu)?;
                    let gap = max_gap(&lhs, &rhs);
                    a.record("expectation_composition", &format!("k={};table={t};D={i};D2={j}", alphabet.size()), gap <= 1e-12, gap, 0.0);
                }
            }
        }
    }
    write_file(out, "assertions.csv", &a.csv)?;
    Ok(a.failed == 0)
}
