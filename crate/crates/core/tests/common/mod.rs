//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use ndarray::Array2;

/// Linkage criteria understood by [`naive_partitions`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleLinkage {
    Single,
    Ward,
}

pub type Partition = BTreeSet<Vec<usize>>;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn centroid(points: &[Vec<f64>], members: &[usize]) -> Vec<f64> {
    let dim = points[0].len();
    let mut c = vec![0.0; dim];
    for &m in members {
        for (cj, pj) in c.iter_mut().zip(&points[m]) {
            *cj += pj;
        }
    }
    c.iter_mut().for_each(|v| *v /= members.len() as f64);
    c
}

/// Linkage distance computed from cluster contents alone: the minimum
/// pairwise distance for single linkage, the merge cost
/// `2|A||B|/(|A|+|B|) · ‖c_A − c_B‖²` for Ward.
fn linkage_distance(points: &[Vec<f64>], a: &[usize], b: &[usize], linkage: OracleLinkage) -> f64 {
    match linkage {
        OracleLinkage::Single => a
            .iter()
            .flat_map(|&i| b.iter().map(move |&j| (i, j)))
            .map(|(i, j)| sq_dist(&points[i], &points[j]).sqrt())
            .fold(f64::INFINITY, f64::min),
        OracleLinkage::Ward => {
            let (na, nb) = (a.len() as f64, b.len() as f64);
            2.0 * na * nb / (na + nb) * sq_dist(&centroid(points, a), &centroid(points, b))
        }
    }
}

/// The partition after every merge of a from-scratch greedy agglomeration.
/// Clusters carry ids `0..n` for leaves and `n + step` for merges; equal
/// distances go to the smallest `(min id, max id)` pair.
pub fn naive_partitions(points: &[Vec<f64>], linkage: OracleLinkage) -> Vec<Partition> {
    let n = points.len();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut out = Vec::new();
    for step in 0..n - 1 {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for p in 0..clusters.len() {
            for q in p + 1..clusters.len() {
                let dist = linkage_distance(points, &clusters[p].1, &clusters[q].1, linkage);
                let (ia, ib) = (clusters[p].0, clusters[q].0);
                let key = (ia.min(ib), ia.max(ib));
                let better = match best {
                    None => true,
                    Some((bd, bk, _, _)) => dist < bd || (dist == bd && key < bk),
                };
                if better {
                    best = Some((dist, key, p, q));
                }
            }
        }
        let (_, _, p, q) = best.expect("at least two clusters");
        let mut merged = clusters[p].1.clone();
        merged.extend(&clusters[q].1);
        merged.sort_unstable();
        clusters.remove(q);
        clusters.remove(p);
        clusters.push((n + step, merged));
        out.push(clusters.iter().map(|(_, m)| m.clone()).collect());
    }
    out
}

/// Partition sequence encoded by a merge list over `n` leaves.
pub fn partitions_from_merges(n: usize, merges: &[(usize, usize)]) -> Vec<Partition> {
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut alive: BTreeSet<usize> = (0..n).collect();
    let mut out = Vec::new();
    for &(a, b) in merges {
        let mut m = members[a].clone();
        m.extend(&members[b]);
        m.sort_unstable();
        alive.remove(&a);
        alive.remove(&b);
        alive.insert(members.len());
        members.push(m);
        out.push(alive.iter().map(|&i| members[i].clone()).collect());
    }
    out
}

pub fn to_array(points: &[Vec<f64>]) -> Array2<f64> {
    let dim = points[0].len();
    Array2::from_shape_fn((points.len(), dim), |(i, j)| points[i][j])
}

/// `max_v |#{a ≤ v}/n1 − #{b ≤ v}/n2|` over every observed value, with the
/// maximum taken over exact fractions and rounded once.
pub fn brute_force_ks(a: &[f64], b: &[f64]) -> f64 {
    let (n1, n2) = (a.len() as u128, b.len() as u128);
    let widest = a
        .iter()
        .chain(b)
        .map(|&v| {
            let i = a.iter().filter(|&&x| x <= v).count() as u128;
            let j = b.iter().filter(|&&x| x <= v).count() as u128;
            (i * n2).abs_diff(j * n1)
        })
        .max()
        .unwrap_or(0);
    widest as f64 / (n1 * n2) as f64
}

/// One-sided signed-rank p-value by enumerating all sign patterns of the
/// non-zero differences. Ranks of tied magnitudes are averaged.
pub fn enumerated_wilcoxon(x: &[f64], y: &[f64], greater: bool) -> f64 {
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|v| *v != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return 1.0;
    }
    let rank = |i: usize| {
        let below = d.iter().filter(|v| v.abs() < d[i].abs()).count();
        let ties = d.iter().filter(|v| v.abs() == d[i].abs()).count();
        below as f64 + (ties as f64 + 1.0) / 2.0
    };
    let ranks: Vec<f64> = (0..n).map(rank).collect();
    let observed: f64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| ranks[i]).sum();
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if (greater && w >= observed) || (!greater && w <= observed) {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}

/// Central finite-difference gradient of `f` at `p`.
pub fn finite_difference(f: impl Fn(&[f64]) -> f64, p: &[f64], h: f64) -> Vec<f64> {
    let mut q = p.to_vec();
    (0..p.len())
        .map(|i| {
            q[i] = p[i] + h;
            let up = f(&q);
            q[i] = p[i] - h;
            let down = f(&q);
            q[i] = p[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a − n| / max(|a|, |n|, floor)` over all entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Loop limits a serialised trace is checked against.
#[derive(Clone, Copy, Debug)]
pub struct TraceLimits {
    pub n_classes: usize,
    pub t: f64,
    pub s: usize,
    pub m: usize,
    pub patience: usize,
    pub class_aware: bool,
    /// Thresholds are `max(t, 1.2 / C)` rather than a per-iteration percentile.
    pub fixed_threshold: bool,
}

/// Problems found by reading a JSONL trace field by field: record count,
/// conservation of `|L| + |U|`, additions per iteration, the confidence floor,
/// the best-record flag and the patience stop.
pub fn jsonl_trace_problems(text: &str, lim: TraceLimits) -> Vec<String> {
    let recs: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let mut out = Vec::new();
    if recs.is_empty() || recs.len() > lim.m + 1 {
        out.push(format!("{} records for m = {}", recs.len(), lim.m));
        return out;
    }
    let size = |r: &serde_json::Value, key: &str| r[key].as_u64().unwrap() as usize;
    let total = size(&recs[0], "labeled_size") + size(&recs[0], "unlabeled_size");
    let floor = if lim.fixed_threshold { lim.t.max(1.2 / lim.n_classes as f64) } else { 1.2 / lim.n_classes as f64 };
    let accs: Vec<f64> = recs.iter().map(|r| r["validation_accuracy"].as_f64().unwrap()).collect();
    for (i, r) in recs.iter().enumerate() {
        let labels = r["pseudo_labels"].as_array().unwrap();
        if size(r, "labeled_size") + size(r, "unlabeled_size") != total {
            out.push(format!("iteration {i}: |L| + |U| changed"));
        }
        if labels.len() > lim.s {
            out.push(format!("iteration {i}: {} additions", labels.len()));
        }
        if let Some(next) = recs.get(i + 1) {
            if size(next, "labeled_size") != size(r, "labeled_size") + labels.len() {
                out.push(format!("iteration {i}: |L| did not grow by the additions"));
            }
        }
        if lim.class_aware {
            let thresholds: Vec<f64> = r["thresholds"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
            if thresholds.len() != lim.n_classes || thresholds.iter().any(|&th| th < floor) {
                out.push(format!("iteration {i}: thresholds {thresholds:?} below floor {floor}"));
            }
            for pl in labels {
                let th = thresholds[pl["class"].as_u64().unwrap() as usize];
                if pl["confidence"].as_f64().unwrap() <= th {
                    out.push(format!("iteration {i}: pseudo-label not above threshold {th}"));
                }
            }
        }
    }
    // Best = first iteration reaching the maximum validation accuracy.
    let max = accs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best = accs.iter().position(|&a| a == max).unwrap();
    for (i, r) in recs.iter().enumerate() {
        if r["best"].as_bool().unwrap() != (i == best) {
            out.push(format!("iteration {i}: wrong best flag"));
        }
    }
    let last = recs.len() - 1;
    let reason = recs[last]["stop_reason"].as_str().unwrap();
    let pool_empty = size(&recs[last], "unlabeled_size") == recs[last]["pseudo_labels"].as_array().unwrap().len();
    let expected_patience_stop = last == best + lim.patience;
    match reason {
        "max_iterations" if last != lim.m => out.push("max_iterations stop before m".into()),
        "patience" if !expected_patience_stop => out.push("patience stop at the wrong iteration".into()),
        "unlabeled_exhausted" if !pool_empty => out.push("exhausted stop with a non-empty pool".into()),
        "no_selection" if !recs[last]["pseudo_labels"].as_array().unwrap().is_empty() => {
            out.push("no_selection stop after a selection".into())
        }
        _ => {}
    }
    if last > best + lim.patience {
        out.push(format!("{} iterations past the best", last - best));
    }
    out
}
