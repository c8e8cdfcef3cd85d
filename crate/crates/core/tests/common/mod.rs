//! Shared brute-force oracles for the integration tests. These stay
//! independent of the solver paths they check: vertices are enumerated from
//! spanning trees, objectives are evaluated directly.

#![allow(dead_code)]

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use transplan::table::Table;
use transplan::transport::{
    product_metric, Coupling, CovariateScaling, DiscreteMarginal, GroundMetric, SupportPoint,
    TransportProblem,
};

/// All vertices (basic feasible solutions) of the transportation polytope
/// with row masses `a` and column masses `b`: one candidate per spanning
/// tree of the complete bipartite graph, kept when its implied flows are
/// nonnegative.
pub fn enumerate_vertices(a: &[f64], b: &[f64]) -> Vec<Table> {
    let (m, n) = (a.len(), b.len());
    let edges = m * n;
    assert!(edges <= 20, "vertex enumeration is for small instances");
    let need = m + n - 1;
    let mut out = Vec::new();
    for mask in 0u32..(1 << edges) {
        if mask.count_ones() as usize != need {
            continue;
        }
        // Union-find spanning check.
        let mut parent: Vec<usize> = (0..m + n).collect();
        fn find(parent: &mut Vec<usize>, x: usize) -> usize {
            let mut r = x;
            while parent[r] != r {
                r = parent[r];
            }
            let mut c = x;
            while parent[c] != r {
                let next = parent[c];
                parent[c] = r;
                c = next;
            }
            r
        }
        let mut acyclic = true;
        for e in 0..edges {
            if mask & (1 << e) != 0 {
                let (i, j) = (e / n, m + e % n);
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri == rj {
                    acyclic = false;
                    break;
                }
                parent[ri] = rj;
            }
        }
        if !acyclic {
            continue;
        }

        // Solve the tree flows by peeling leaves.
        let mut rem: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); m + n];
        for e in 0..edges {
            if mask & (1 << e) != 0 {
                incident[e / n].push(e);
                incident[m + e % n].push(e);
            }
        }
        let mut degree: Vec<usize> = incident.iter().map(Vec::len).collect();
        let mut removed = vec![false; edges];
        let mut flow = vec![0.0f64; edges];
        let mut stack: Vec<usize> = (0..m + n).filter(|&v| degree[v] == 1).collect();
        let mut feasible = true;
        while let Some(v) = stack.pop() {
            if degree[v] != 1 {
                continue;
            }
            let &e = incident[v]
                .iter()
                .find(|&&e| !removed[e])
                .expect("leaf has one live edge");
            let other = if v < m { m + e % n } else { e / n };
            flow[e] = rem[v];
            if flow[e] < -1e-12 {
                feasible = false;
                break;
            }
            rem[v] = 0.0;
            rem[other] -= flow[e];
            removed[e] = true;
            degree[v] -= 1;
            degree[other] -= 1;
            if degree[other] == 1 {
                stack.push(other);
            }
        }
        if !feasible {
            continue;
        }
        let mut plan = Table::zeros(m, n);
        for e in 0..edges {
            if mask & (1 << e) != 0 {
                plan.set(e / n, e % n, flow[e].max(0.0));
            }
        }
        out.push(plan);
    }
    out
}

fn inner(a: &Table, b: &Table) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// LP maximum over the polytope by exhaustive vertex enumeration.
pub fn brute_force_max(objective: &Table, a: &[f64], b: &[f64]) -> f64 {
    enumerate_vertices(a, b)
        .iter()
        .map(|v| inner(objective, v))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// LP minimum over the polytope by exhaustive vertex enumeration.
pub fn brute_force_min(objective: &Table, a: &[f64], b: &[f64]) -> f64 {
    enumerate_vertices(a, b)
        .iter()
        .map(|v| inner(objective, v))
        .fold(f64::INFINITY, f64::min)
}

/// Random positive masses summing to one.
pub fn random_masses(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    for x in &mut v {
        *x /= s;
    }
    // Exact renormalization of the last mass.
    let head: f64 = v[..len - 1].iter().sum();
    v[len - 1] = 1.0 - head;
    v
}

/// A tie-degenerate three-bin instance: bin 0 carries a strictly higher
/// contrast, bins 1 and 2 are exactly tied, and the capacity forces a
/// nontrivial split of the residual between them. Coordinates keep all
/// cross-bin routes cheaper than a treatment flip with asymmetric
/// distances, so the penalty H is strictly V-shaped along the tied face and
/// its minimizer is unique and interior.
pub fn tied_instance(rng: &mut ChaCha8Rng) -> (TransportProblem, GroundMetric, Coupling) {
    loop {
        let masses = random_masses(rng, 3);
        if masses.iter().any(|&m| m < 0.15) {
            continue;
        }
        let c1 = rng.random_range(0.6..0.9);
        let c2 = rng.random_range(0.15..0.35);
        let coords = [0.0, c1, c2];
        let source = DiscreteMarginal::new(
            (0..3)
                .map(|i| SupportPoint::new(format!("b{i}"), vec![coords[i]]))
                .collect(),
            masses.clone(),
        )
        .unwrap();
        let frac = rng.random_range(0.35..0.65);
        let p = masses[0] + frac * (masses[1] + masses[2]);
        let target = DiscreteMarginal::bernoulli(p).unwrap();
        let tied = rng.random_range(0.5..2.0);
        let gap = rng.random_range(0.05..0.2);
        let welfare =
            Table::from_rows(&[vec![0.0, tied + gap], vec![0.0, tied], vec![0.0, tied]]).unwrap();
        // The interior kink q* = m1·p must sit strictly inside the face
        // segment for the instance to have a unique interior minimizer.
        let residual = p - masses[0];
        let q_lo = (residual - masses[2]).max(0.0);
        let q_hi = residual.min(masses[1]);
        let q_star = masses[1] * p;
        if q_star < q_lo + 0.02 || q_star > q_hi - 0.02 {
            continue;
        }
        let problem = TransportProblem::new(welfare, source.clone(), target.clone()).unwrap();
        let metric = product_metric(&source, &target, CovariateScaling::Raw).unwrap();
        let reference = Coupling::independent(&source, &target);
        return (problem, metric, reference);
    }
}

/// Random transport problem with labeled supports carrying coordinates.
pub fn random_problem(rng: &mut ChaCha8Rng, bins: usize, levels: usize) -> TransportProblem {
    let source = DiscreteMarginal::new(
        (0..bins)
            .map(|i| SupportPoint::new(format!("b{i}"), vec![rng.random_range(-2.0..2.0), (i % 2) as f64]))
            .collect(),
        random_masses(rng, bins),
    )
    .unwrap();
    let target = DiscreteMarginal::new(
        (0..levels)
            .map(|j| SupportPoint::new(format!("t{j}"), vec![j as f64]))
            .collect(),
        random_masses(rng, levels),
    )
    .unwrap();
    let welfare = Table::from_flat(
        bins,
        levels,
        (0..bins * levels).map(|_| rng.random_range(-5.0..5.0)).collect(),
    )
    .unwrap();
    TransportProblem::new(welfare, source, target).unwrap()
}
