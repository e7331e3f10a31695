//! Selection-bias induction.
//!
//! Every technique returns a [`Selection`] of row indices into the labeled
//! dataset it was given, and is a pure function of `(dataset, spec, seed)`.
//! Features are expected to be standardised beforehand so that distances are
//! comparable across columns.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::cluster::{self, Linkage};
use crate::data::{column_mean, round_half_up, Dataset};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasKind {
    Hierarchy,
    Random,
    Joint,
    Dirichlet,
}

impl std::fmt::Display for BiasKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BiasKind::Hierarchy => "hierarchy",
            BiasKind::Random => "random",
            BiasKind::Joint => "joint",
            BiasKind::Dirichlet => "dirichlet",
        })
    }
}

impl std::str::FromStr for BiasKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hierarchy" => Ok(BiasKind::Hierarchy),
            "random" => Ok(BiasKind::Random),
            "joint" => Ok(BiasKind::Joint),
            "dirichlet" => Ok(BiasKind::Dirichlet),
            other => Err(Error::InvalidParameter(format!("unknown bias kind `{other}`"))),
        }
    }
}

/// Parameters of one bias induction. Fields a technique does not use are
/// ignored by it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasSpec {
    pub kind: BiasKind,
    /// Samples per class (hierarchy, random).
    pub k: usize,
    /// Fraction of each class drawn from the identified cluster (hierarchy).
    pub b: f64,
    /// Total samples drawn (dirichlet).
    pub n_total: usize,
    pub seed: u64,
}

impl BiasSpec {
    pub fn hierarchy(k: usize, b: f64, seed: u64) -> Self {
        Self {
            kind: BiasKind::Hierarchy,
            k,
            b,
            n_total: 0,
            seed,
        }
    }

    pub fn random(k: usize, seed: u64) -> Self {
        Self {
            kind: BiasKind::Random,
            k,
            b: 0.0,
            n_total: 0,
            seed,
        }
    }

    pub fn joint(seed: u64) -> Self {
        Self {
            kind: BiasKind::Joint,
            k: 0,
            b: 0.0,
            n_total: 0,
            seed,
        }
    }

    pub fn dirichlet(n_total: usize, seed: u64) -> Self {
        Self {
            kind: BiasKind::Dirichlet,
            k: 0,
            b: 0.0,
            n_total,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidParameter(format!("bias ratio b must lie in [0, 1], got {}", self.b)));
        }
        match self.kind {
            BiasKind::Hierarchy if self.k < 2 => Err(Error::InvalidParameter(format!(
                "hierarchy bias needs k >= 2, got {}",
                self.k
            ))),
            BiasKind::Random if self.k < 1 => {
                Err(Error::InvalidParameter("random subsampling needs k >= 1".into()))
            }
            BiasKind::Dirichlet if self.n_total < 1 => {
                Err(Error::InvalidParameter("dirichlet bias needs n_total >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Same spec with its seed replaced.
    pub fn reseeded(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    /// Selected rows, ascending.
    pub indices: Vec<usize>,
    pub per_class_counts: Vec<usize>,
    /// Rows drawn from the identified cluster, per class (hierarchy only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub from_cluster_counts: Option<Vec<usize>>,
}

impl Selection {
    fn from_indices(d: &Dataset, mut indices: Vec<usize>, from_cluster: Option<Vec<usize>>) -> Self {
        indices.sort_unstable();
        let mut per_class_counts = vec![0; d.n_classes()];
        for &i in &indices {
            per_class_counts[d.labels()[i]] += 1;
        }
        Self {
            indices,
            per_class_counts,
            from_cluster_counts: from_cluster,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Dispatches on `spec.kind`.
pub fn induce(d: &Dataset, spec: &BiasSpec) -> Result<Selection> {
    spec.validate()?;
    match spec.kind {
        BiasKind::Hierarchy => hierarchy_bias(d, spec.k, spec.b, spec.seed),
        BiasKind::Random => random_subsample(d, spec.k, spec.seed),
        BiasKind::Joint => joint_bias(d, spec.seed),
        BiasKind::Dirichlet => dirichlet_bias(d, spec.n_total, spec.seed),
    }
}

fn require_class_sizes(d: &Dataset, k: usize) -> Result<()> {
    for (c, &n_c) in d.class_counts().iter().enumerate() {
        if n_c < k {
            return Err(Error::InsufficientClass {
                class: d.class_names()[c].clone(),
                available: n_c,
                required: k,
            });
        }
    }
    Ok(())
}

/// Class-aware multivariate bias.
///
/// Per class, the class's samples are clustered with Ward linkage and the
/// first cluster reaching `k` members is taken as the over-represented group:
/// `round(k * b)` samples are drawn uniformly from it and the remaining
/// `k - round(k * b)` uniformly from the rest of the class.
pub fn hierarchy_bias(d: &Dataset, k: usize, b: f64, seed: u64) -> Result<Selection> {
    BiasSpec::hierarchy(k, b, seed).validate()?;
    require_class_sizes(d, k)?;
    let k_cluster = round_half_up(k as f64 * b).min(k);
    let k_rest = k - k_cluster;

    let mut chosen = Vec::with_capacity(k * d.n_classes());
    for c in 0..d.n_classes() {
        let rows = d.rows_of_class(c);
        let x = d.features().select(ndarray::Axis(0), &rows);
        let dend = cluster::agglomerate(&cluster::pairwise_euclidean(&x)?, Linkage::Ward)?;
        let members = dend.first_cluster_of_size(k)?;
        assert!(members.len() >= k_cluster, "first cluster smaller than k");

        let mut in_cluster = vec![false; rows.len()];
        members.iter().for_each(|&m| in_cluster[m] = true);
        let rest: Vec<usize> = (0..rows.len()).filter(|&p| !in_cluster[p]).collect();
        if rest.len() < k_rest {
            return Err(Error::InsufficientClass {
                class: format!("{} (outside the identified cluster)", d.class_names()[c]),
                available: rest.len(),
                required: k_rest,
            });
        }

        let mut rng = rng::stream(seed, &[tag::BIAS, c as u64]);
        for p in index::sample(&mut rng, members.len(), k_cluster) {
            chosen.push(rows[members[p]]);
        }
        for p in index::sample(&mut rng, rest.len(), k_rest) {
            chosen.push(rows[rest[p]]);
        }
    }
    Ok(Selection::from_indices(d, chosen, Some(vec![k_cluster; d.n_classes()])))
}

/// `k` samples per class, uniformly without replacement.
pub fn random_subsample(d: &Dataset, k: usize, seed: u64) -> Result<Selection> {
    require_class_sizes(d, k)?;
    let mut chosen = Vec::with_capacity(k * d.n_classes());
    for c in 0..d.n_classes() {
        let rows = d.rows_of_class(c);
        let mut rng = rng::stream(seed, &[tag::BIAS, c as u64]);
        chosen.extend(index::sample(&mut rng, rows.len(), k).iter().map(|p| rows[p]));
    }
    Ok(Selection::from_indices(d, chosen, None))
}

/// Inclusion probability of every row under joint bias:
/// `exp(-(d_i - d_min) / mean(d))`, with `d_i` the distance to the feature mean.
pub fn joint_probabilities(d: &Dataset) -> Vec<f64> {
    let x = d.features();
    let mu = column_mean(x);
    let dist: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| r.iter().zip(mu.iter()).map(|(a, m)| (a - m) * (a - m)).sum::<f64>().sqrt())
        .collect();
    let d_min = dist.iter().copied().fold(f64::INFINITY, f64::min);
    let d_mean = dist.iter().sum::<f64>() / dist.len() as f64;
    if d_mean <= 0.0 {
        return vec![1.0; dist.len()];
    }
    dist.iter().map(|&di| (-(di - d_min) / d_mean).exp()).collect()
}

/// Class-agnostic bias favouring samples near the feature mean; each sample
/// is included independently with its [`joint_probabilities`] value.
pub fn joint_bias(d: &Dataset, seed: u64) -> Result<Selection> {
    if d.n_samples() < 2 {
        return Err(Error::InvalidParameter("joint bias needs at least 2 samples".into()));
    }
    let p = joint_probabilities(d);
    let mut rng = rng::stream(seed, &[tag::BIAS]);
    let chosen = p
        .iter()
        .enumerate()
        .filter_map(|(i, &pi)| (rng.random::<f64>() < pi).then_some(i))
        .collect();
    Ok(Selection::from_indices(d, chosen, None))
}

/// Class-agnostic bias: weights drawn from a flat Dirichlet, then `n_total`
/// sequential weighted draws without replacement.
pub fn dirichlet_bias(d: &Dataset, n_total: usize, seed: u64) -> Result<Selection> {
    let n = d.n_samples();
    if n_total > n {
        return Err(Error::InvalidParameter(format!(
            "dirichlet bias cannot draw {n_total} of {n} samples"
        )));
    }
    let mut rng = rng::stream(seed, &[tag::BIAS]);
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();

    let mut chosen = Vec::with_capacity(n_total);
    for _ in 0..n_total {
        let remaining: f64 = weights.iter().sum();
        let mut target = rng.random::<f64>() * remaining;
        let mut pick = None;
        for (i, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            pick = Some(i);
            if target < w {
                break;
            }
            target -= w;
        }
        // Rounding can run past the end; the last live row absorbs it.
        let i = match pick {
            Some(i) => i,
            // All remaining weights underflowed to zero: take the first unused row.
            None => (0..n).find(|i| !chosen.contains(i)).expect("n_total <= n"),
        };
        weights[i] = 0.0;
        chosen.push(i);
    }
    Ok(Selection::from_indices(d, chosen, None))
}

/// Per-class average-distance samples for a selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassShift {
    pub class: usize,
    /// Average distance of each selected sample of the class.
    pub selected: Vec<f64>,
    /// Average distance of every sample of the class.
    pub all: Vec<f64>,
}

/// For every class represented in `sel`, each sample's mean Euclidean distance
/// to all other same-class samples of `d`, for the selected rows and for all
/// rows. Classes without selected samples are omitted.
pub fn selection_shift(d: &Dataset, sel: &Selection) -> Vec<ClassShift> {
    let x = d.features();
    let mut out = Vec::new();
    for c in 0..d.n_classes() {
        if sel.per_class_counts.get(c).copied().unwrap_or(0) == 0 {
            continue;
        }
        let rows = d.rows_of_class(c);
        let m = rows.len();
        let mut sums = vec![0.0; m];
        for a in 0..m {
            for b in a + 1..m {
                let dist = x
                    .row(rows[a])
                    .iter()
                    .zip(x.row(rows[b]))
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum::<f64>()
                    .sqrt();
                sums[a] += dist;
                sums[b] += dist;
            }
        }
        let all: Vec<f64> = if m > 1 {
            sums.iter().map(|s| s / (m - 1) as f64).collect()
        } else {
            vec![0.0]
        };
        let selected = sel
            .indices
            .iter()
            .filter(|&&i| d.labels()[i] == c)
            .map(|i| all[rows.binary_search(i).expect("row of class c")])
            .collect();
        out.push(ClassShift { class: c, selected, all });
    }
    out
}
