//! Brute-force oracles over explicit permutations. Nothing here calls the
//! library's linear algebra or search code; only the edge indexing of a
//! [`SchreierGraph`] is shared so that cochains can be compared.

#![allow(dead_code)]

use std::collections::{HashSet, VecDeque};

use microstates::presentation::{GeneratorSymbol, Word};
use microstates::sofic::SchreierGraph;

pub struct Oracle {
    pub n: usize,
    pub slots: usize,
    pub m: u32,
    /// `targets[slot][v]`.
    targets: Vec<Vec<usize>>,
    /// `edge[slot][v]` is the library's edge index.
    edge: Vec<Vec<usize>>,
}

fn circle(k: u32, m: u32) -> u64 {
    let k = k % m;
    k.min(m - k) as u64
}

impl Oracle {
    pub fn new(g: &SchreierGraph, m: u32) -> Self {
        let sigma = g.approximation();
        let slots = g.symbol_count();
        let n = g.vertex_count();
        let targets = (0..slots).map(|s| sigma.perm(GeneratorSymbol::from_slot(s)).iter().map(|&t| t as usize).collect()).collect();
        let edge = (0..slots).map(|s| (0..n).map(|v| g.edge_index(GeneratorSymbol::from_slot(s), v as u32)).collect()).collect();
        Self { n, slots, m, targets, edge }
    }

    pub fn edge_count(&self) -> usize {
        self.n * self.slots
    }

    pub fn all_cochains(&self) -> impl Iterator<Item = Vec<u32>> + '_ {
        let e = self.edge_count();
        let total = (self.m as u64).pow(e as u32);
        (0..total).map(move |mut code| {
            (0..e)
                .map(|_| {
                    let d = (code % self.m as u64) as u32;
                    code /= self.m as u64;
                    d
                })
                .collect()
        })
    }

    pub fn coboundary(&self, beta: &[u32]) -> Vec<u32> {
        let m = self.m;
        let mut out = vec![0; self.edge_count()];
        for s in 0..self.slots {
            for v in 0..self.n {
                out[self.edge[s][v]] = (beta[self.targets[s][v]] + m - beta[v]) % m;
            }
        }
        out
    }

    /// Loop sum following `w` from `v`, the rightmost symbol first.
    fn loop_sum(&self, alpha: &[u32], w: &Word, v: usize) -> u32 {
        let mut cur = v;
        let mut sum = 0u64;
        for s in w.symbols().iter().rev() {
            sum += alpha[self.edge[s.slot()][cur]] as u64;
            cur = self.targets[s.slot()][cur];
        }
        (sum % self.m as u64) as u32
    }

    /// `max_w Σ_v |loop sum|` numerator over `m·|V|`.
    pub fn defect_num(&self, alpha: &[u32], relations: &[Word]) -> u64 {
        relations.iter().map(|w| (0..self.n).map(|v| circle(self.loop_sum(alpha, w, v), self.m)).sum()).max().unwrap_or(0)
    }

    pub fn distance_num(&self, a: &[u32], b: &[u32]) -> u64 {
        a.iter().zip(b).map(|(&x, &y)| circle(x + self.m - y, self.m)).sum()
    }

    pub fn vertex_functions(&self) -> impl Iterator<Item = Vec<u32>> + '_ {
        let total = (self.m as u64).pow(self.n as u32);
        (0..total).map(move |mut code| {
            (0..self.n)
                .map(|_| {
                    let d = (code % self.m as u64) as u32;
                    code /= self.m as u64;
                    d
                })
                .collect()
        })
    }

    pub fn z1(&self, relations: &[Word]) -> Vec<Vec<u32>> {
        self.all_cochains().filter(|a| self.defect_num(a, relations) == 0).collect()
    }

    pub fn b1(&self) -> HashSet<Vec<u32>> {
        self.vertex_functions().map(|b| self.coboundary(&b)).collect()
    }

    /// Invariant factors of `Z¹/B¹` from the torsion counts
    /// `|{z : p^j z ∈ B¹}| / |B¹|`, ascending.
    pub fn h1_invariant_factors(&self, z1: &[Vec<u32>], b1: &HashSet<Vec<u32>>) -> Vec<u64> {
        let m = self.m;
        let scale = |z: &[u32], k: u64| -> Vec<u32> { z.iter().map(|&x| ((x as u64 * k) % m as u64) as u32).collect() };
        let torsion = |k: u64| -> u64 { z1.iter().filter(|z| b1.contains(&scale(z, k))).count() as u64 / b1.len() as u64 };
        let mut parts: Vec<Vec<u64>> = Vec::new();
        let mut rest = m as u64;
        let mut p = 2;
        while rest > 1 {
            if rest.is_multiple_of(p) {
                let mut e = 0;
                while rest.is_multiple_of(p) {
                    rest /= p;
                    e += 1;
                }
                // r_j = number of cyclic factors of order ≥ p^j
                let logs: Vec<u32> = (0..=e).map(|j| torsion(p.pow(j)).ilog(p)).collect();
                let ge: Vec<u32> = (1..=e as usize).map(|j| logs[j] - logs[j - 1]).collect();
                let mut orders = Vec::new();
                for j in 1..=e as usize {
                    let exact = ge[j - 1] - ge.get(j).copied().unwrap_or(0);
                    orders.extend(std::iter::repeat_n(p.pow(j as u32), exact as usize));
                }
                parts.push(orders);
            }
            p += 1;
        }
        let len = parts.iter().map(Vec::len).max().unwrap_or(0);
        let mut factors = vec![1u64; len];
        for mut orders in parts {
            orders.sort_unstable();
            for (f, o) in factors.iter_mut().rev().zip(orders.iter().rev()) {
                *f *= o;
            }
        }
        factors.sort_unstable();
        factors
    }

    /// `min_β Σ_e |α(e) − dβ(e)|`.
    pub fn coset_distance_num(&self, alpha: &[u32]) -> u64 {
        self.vertex_functions().map(|b| self.distance_num(alpha, &self.coboundary(&b))).min().unwrap()
    }

    /// `min_{z ∈ Z¹ \ B¹} Σ_e |z(e)|`.
    pub fn min_intercoset_num(&self, z1: &[Vec<u32>], b1: &HashSet<Vec<u32>>) -> Option<u64> {
        z1.iter().filter(|z| !b1.contains(*z)).map(|z| self.distance_num(z, &vec![0; z.len()])).min()
    }

    /// Components of `{α : defect ≤ ε_num}` under `distance_num < δ·m·|V|`,
    /// by BFS over all pairs.
    pub fn component_count(&self, relations: &[Word], eps_num: u64, delta: f64) -> usize {
        let admitted: Vec<Vec<u32>> = self.all_cochains().filter(|a| self.defect_num(a, relations) <= eps_num).collect();
        let limit = delta * (self.m as f64) * (self.n as f64);
        let mut seen = vec![false; admitted.len()];
        let mut count = 0;
        for start in 0..admitted.len() {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(i) = queue.pop_front() {
                for j in 0..admitted.len() {
                    if !seen[j] && (self.distance_num(&admitted[i], &admitted[j]) as f64) < limit {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        count
    }
}
