//! Library results against brute-force enumeration on random small graphs.

mod common;

use common::Oracle;
use microstates::cohomology::{coset_distance, near_cocycle_component_scan, solve_cocycles, Cochain1, RelationLoopSet, SearchMode};
use microstates::popa::{sample_popa_model, PopaModelSpec};
use microstates::presentation::{builtin_presentation, BuiltinFamily, GroupPresentation};
use microstates::rng::Stream;
use microstates::sofic::{SchreierGraph, SoficApproximation};
use proptest::prelude::*;

/// Random permutations for `k` generators on `n` vertices.
fn graph_strategy(k: usize, max_n: usize) -> impl Strategy<Value = SchreierGraph> {
    (1..=max_n).prop_flat_map(move |n| {
        let perm = Just((0..n as u32).collect::<Vec<_>>()).prop_shuffle();
        proptest::collection::vec(perm, k)
            .prop_map(move |forward| SchreierGraph::new(SoficApproximation::from_generators(n, forward).unwrap()))
    })
}

fn free(k: u16) -> GroupPresentation {
    builtin_presentation(BuiltinFamily::FreeGroup { k }).unwrap()
}

fn cochain(g: &SchreierGraph, m: u32, seed: u64) -> Cochain1 {
    use rand::Rng;
    let mut rng = Stream::new(seed, "oracle-cochain", &[]).rng();
    Cochain1::from_values(g, m, (0..g.edge_count()).map(|_| rng.gen_range(0..m)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn h1_matches_enumeration_one_generator(g in graph_strategy(1, 6), m in 2u32..=3) {
        prop_assume!((m as u64).pow(g.edge_count() as u32) <= 1 << 13);
        let fam = RelationLoopSet::trivial(&free(1));
        let o = Oracle::new(&g, m);
        let expected = o.h1_invariant_factors(&o.z1(fam.relations()), &o.b1());
        prop_assert_eq!(solve_cocycles(&g, &fam, m).unwrap().invariant_factors(), expected);
    }

    #[test]
    fn h1_matches_enumeration_with_relations(g in graph_strategy(2, 3), m in prop_oneof![Just(2u32), Just(4)]) {
        prop_assume!((m as u64).pow(g.edge_count() as u32) <= 1 << 16);
        let lattice = builtin_presentation(BuiltinFamily::IntegerLattice { d: 2 }).unwrap();
        // the commutator need not hold on a random model; the constraint set is still well defined
        let fam = RelationLoopSet::for_presentation(&lattice);
        let o = Oracle::new(&g, m);
        let z1 = o.z1(fam.relations());
        let b1 = o.b1();
        let h = solve_cocycles(&g, &fam, m).unwrap();
        let b1_in_z1: std::collections::HashSet<Vec<u32>> = b1.into_iter().filter(|b| z1.contains(b)).collect();
        prop_assert_eq!(h.invariant_factors(), o.h1_invariant_factors(&z1, &b1_in_z1));
        for z in &z1 {
            prop_assert!(h.is_cocycle(&Cochain1::from_values(&g, m, z.clone()).unwrap()));
        }
    }

    #[test]
    fn exact_coset_distance_matches_enumeration(g in graph_strategy(2, 4), m in 2u32..=3, seed in any::<u64>()) {
        let o = Oracle::new(&g, m);
        let alpha = cochain(&g, m, seed);
        let brute = o.coset_distance_num(alpha.values());
        let s = Stream::new(seed, "oracle-distance", &[]);
        let exact = coset_distance(&g, &alpha, SearchMode::Exact, &s).unwrap();
        prop_assert_eq!(exact.numerator, brute);
        prop_assert_eq!(exact.denominator, m as u64 * g.vertex_count() as u64);
        let heur = coset_distance(&g, &alpha, SearchMode::Heuristic, &s).unwrap();
        prop_assert!(heur.numerator >= brute);
    }

    #[test]
    fn scan_components_match_pairwise_bfs(g in graph_strategy(1, 4), eps_num in 0u64..4, delta in 0.05f64..1.0) {
        let m = 2;
        prop_assume!(g.edge_count() <= 8);
        let fam = RelationLoopSet::trivial(&free(1));
        let eps = eps_num as f64 / (m as f64 * g.vertex_count() as f64);
        let r = near_cocycle_component_scan(&g, &fam, m, eps, delta, &Stream::new(0, "oracle-scan", &[])).unwrap();
        let o = Oracle::new(&g, m);
        prop_assert_eq!(r.component_count(), o.component_count(fam.relations(), eps_num, delta));
    }

    #[test]
    fn samples_share_the_class_of_their_representative(g in graph_strategy(2, 4), m in 2u32..=3, seed in any::<u64>()) {
        let fam = RelationLoopSet::trivial(&free(2));
        let h = solve_cocycles(&g, &fam, m).unwrap();
        let classes = h.all_classes();
        let pick = classes[(seed % classes.len() as u64) as usize].clone();
        let rep = h.class_cochain(&pick).unwrap();
        let spec = PopaModelSpec::new(g.clone(), m, rep, fam.clone()).unwrap();
        let a = sample_popa_model(&spec, &Stream::new(seed, "oracle-popa", &[0])).unwrap();
        let b = sample_popa_model(&spec, &Stream::new(seed, "oracle-popa", &[1])).unwrap();
        prop_assert_eq!(h.class_of(&a), Some(pick));
        prop_assert!(h.is_coboundary(&a.sub(&b).unwrap()));
    }
}

#[test]
fn intercoset_distance_shrinks_along_cycles() {
    let z = free(1);
    let fam = RelationLoopSet::trivial(&z);
    let mut last = f64::INFINITY;
    for n in [4, 8, 16] {
        let g =
            SchreierGraph::new(SoficApproximation::from_generators(n, vec![(0..n as u32).map(|v| (v + 1) % n as u32).collect()]).unwrap());
        let h = solve_cocycles(&g, &fam, 2).unwrap();
        let d = microstates::cohomology::min_intercoset_distance(&g, &h, SearchMode::Heuristic, &Stream::new(0, "shrink", &[]))
            .unwrap()
            .unwrap();
        assert!((d.distance - 1.0 / n as f64).abs() < 1e-12, "n = {n}: {}", d.distance);
        assert!(d.distance <= last);
        last = d.distance;
    }
}
