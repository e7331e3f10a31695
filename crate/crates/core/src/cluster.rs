//! Exact agglomerative hierarchical clustering.
//!
//! The merge loop keeps, for every active cluster, its current nearest
//! neighbour under the linkage distance. Each step merges the globally closest
//! pair and refreshes only the cache entries the merge invalidated, so the
//! output is identical to a naive rescan while usually running in O(n²).
//!
//! Ties between equal linkage distances are broken by the smallest
//! `(min cluster id, max cluster id)` pair. Leaves carry ids `0..n`, merge `i`
//! creates cluster `n + i`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Ward,
    Single,
}

/// Where the entries of a [`DistanceMatrix`] came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    Precomputed,
}

/// Dense symmetric matrix of non-negative distances with a zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
    metric: Metric,
}

impl DistanceMatrix {
    /// Builds a matrix from a function evaluated once per unordered pair.
    pub(crate) fn from_pair_fn(n: usize, metric: Metric, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = f(i, j);
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Self { n, data, metric }
    }

    /// Validates a caller-supplied matrix.
    pub fn precomputed(m: &Array2<f64>) -> Result<Self> {
        let (n, cols) = m.dim();
        if n != cols {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: cols,
            });
        }
        for i in 0..n {
            if m[[i, i]] != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "distance diagonal must be zero (row {i})"
                )));
            }
            for j in 0..n {
                let d = m[[i, j]];
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "distance ({i}, {j}) = {d} is not a finite non-negative number"
                    )));
                }
                if d != m[[j, i]] {
                    return Err(Error::InvalidParameter(format!(
                        "distance matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            n,
            data: m.iter().copied().collect(),
            metric: Metric::Precomputed,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.n, self.n), self.data.clone()).expect("square")
    }
}

/// Euclidean distances between the rows of `x`.
pub fn pairwise_euclidean(x: &Array2<f64>) -> Result<DistanceMatrix> {
    if x.nrows() == 0 {
        return Err(Error::InvalidParameter("no rows to compare".into()));
    }
    if let Some(((row, col), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { row, col });
    }
    Ok(DistanceMatrix::from_pair_fn(x.nrows(), Metric::Euclidean, |i, j| {
        x.row(i)
            .iter()
            .zip(x.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

/// Ordered merge history of an agglomerative clustering.
///
/// Serialises as the bare list of merges; the leaf count is `merges + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Merge>", try_from = "Vec<Merge>")]
pub struct Dendrogram {
    n_leaves: usize,
    merges: Vec<Merge>,
}

impl From<Dendrogram> for Vec<Merge> {
    fn from(d: Dendrogram) -> Self {
        d.merges
    }
}

impl TryFrom<Vec<Merge>> for Dendrogram {
    type Error = Error;

    fn try_from(merges: Vec<Merge>) -> Result<Self> {
        let n = merges.len() + 1;
        let mut sizes = vec![1usize; n];
        sizes.reserve(merges.len());
        for (i, m) in merges.iter().enumerate() {
            let limit = n + i;
            if m.left >= limit || m.right >= limit || m.left == m.right {
                return Err(Error::InvalidParameter(format!("merge {i} references unknown clusters")));
            }
            if sizes[m.left] + sizes[m.right] != m.size {
                return Err(Error::InvalidParameter(format!("merge {i} has inconsistent size")));
            }
            sizes.push(m.size);
        }
        if sizes.last() != Some(&n) {
            return Err(Error::InvalidParameter("final merge does not cover every leaf".into()));
        }
        Ok(Self {
            n_leaves: n,
            merges,
        })
    }
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Sorted leaf indices under cluster `id`.
    pub fn leaves_of(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(c) = stack.pop() {
            if c < self.n_leaves {
                out.push(c);
            } else {
                let m = &self.merges[c - self.n_leaves];
                stack.push(m.left);
                stack.push(m.right);
            }
        }
        out.sort_unstable();
        out
    }

    /// Leaves of the earliest merge whose cluster holds at least `k` samples.
    pub fn first_cluster_of_size(&self, k: usize) -> Result<Vec<usize>> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!(
                "cluster size threshold must be at least 2, got {k}"
            )));
        }
        if k > self.n_leaves {
            return Err(Error::InvalidParameter(format!(
                "cluster size threshold {k} exceeds {} leaves",
                self.n_leaves
            )));
        }
        let step = self
            .merges
            .iter()
            .position(|m| m.size >= k)
            .expect("root merge covers all leaves");
        Ok(self.leaves_of(self.n_leaves + step))
    }

    /// Flat assignment into exactly `k` clusters, obtained by undoing the last
    /// `k - 1` merges. Cluster labels are numbered by their smallest leaf.
    pub fn cut_to_k(&self, k: usize) -> Result<Vec<usize>> {
        let n = self.n_leaves;
        if k == 0 || k > n {
            return Err(Error::InvalidParameter(format!(
                "cannot cut {n} leaves into {k} clusters"
            )));
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        // Representative leaf of every cluster id created so far.
        let mut repr: Vec<usize> = (0..n).collect();
        for m in &self.merges[..n - k] {
            let a = find(&mut parent, repr[m.left]);
            let b = find(&mut parent, repr[m.right]);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            parent[hi] = lo;
            repr.push(lo);
        }
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        let mut out = vec![0; n];
        for leaf in 0..n {
            let root = find(&mut parent, leaf);
            if label[root] == usize::MAX {
                label[root] = next;
                next += 1;
            }
            out[leaf] = label[root];
        }
        debug_assert_eq!(next, k);
        Ok(out)
    }
}

#[inline]
fn ward_update(d_xa: f64, d_xb: f64, d_ab: f64, n_a: f64, n_b: f64, n_x: f64) -> f64 {
    ((n_x + n_a) * d_xa + (n_x + n_b) * d_xb - n_x * d_ab) / (n_a + n_b + n_x)
}

/// Greedy agglomeration under `linkage`.
///
/// Ward operates on squared Euclidean distances, so reported Ward heights are
/// on the squared scale. Ward on a precomputed matrix is rejected.
pub fn agglomerate(dist: &DistanceMatrix, linkage: Linkage) -> Result<Dendrogram> {
    let n = dist.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "agglomeration needs at least 2 points, got {n}"
        )));
    }
    if linkage == Linkage::Ward && dist.metric() != Metric::Euclidean {
        return Err(Error::WardOnPrecomputed);
    }

    let mut d = dist.data.clone();
    if linkage == Linkage::Ward {
        d.iter_mut().for_each(|v| *v *= *v);
    }
    let mut id: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];

    let key = |id: &[usize], i: usize, j: usize| {
        let (a, b) = (id[i], id[j]);
        if a < b {
            (a, b)
        } else {
            (b, a)
        }
    };

    let nearest = |d: &[f64], id: &[usize], active: &[bool], i: usize| -> (usize, f64) {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for j in 0..n {
            if j == i || !active[j] {
                continue;
            }
            let dj = d[i * n + j];
            if best == usize::MAX || dj < best_d || (dj == best_d && key(id, i, j) < key(id, i, best)) {
                best = j;
                best_d = dj;
            }
        }
        (best, best_d)
    };

    let mut nn = vec![0usize; n];
    let mut nn_d = vec![0.0f64; n];
    for i in 0..n {
        let (j, dj) = nearest(&d, &id, &active, i);
        nn[i] = j;
        nn_d[i] = dj;
    }

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let mut a = usize::MAX;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            if a == usize::MAX
                || nn_d[i] < nn_d[a]
                || (nn_d[i] == nn_d[a] && key(&id, i, nn[i]) < key(&id, a, nn[a]))
            {
                a = i;
            }
        }
        let b = nn[a];
        let height = nn_d[a];
        let (left, right) = key(&id, a, b);
        let merged_size = size[a] + size[b];
        merges.push(Merge {
            left,
            right,
            height,
            size: merged_size,
        });

        // The merged cluster lives in the lower slot.
        let (keep, drop) = if a < b { (a, b) } else { (b, a) };
        let d_ab = d[keep * n + drop];
        for x in 0..n {
            if !active[x] || x == keep || x == drop {
                continue;
            }
            let d_xk = d[x * n + keep];
            let d_xd = d[x * n + drop];
            let new = match linkage {
                Linkage::Single => d_xk.min(d_xd),
                Linkage::Ward => ward_update(
                    d_xk,
                    d_xd,
                    d_ab,
                    size[keep] as f64,
                    size[drop] as f64,
                    size[x] as f64,
                ),
            };
            d[x * n + keep] = new;
            d[keep * n + x] = new;
        }
        active[drop] = false;
        size[keep] = merged_size;
        id[keep] = n + step;

        if step + 2 == n {
            break;
        }
        let (j, dj) = nearest(&d, &id, &active, keep);
        nn[keep] = j;
        nn_d[keep] = dj;
        for x in 0..n {
            if !active[x] || x == keep {
                continue;
            }
            if nn[x] == keep || nn[x] == drop {
                let (j, dj) = nearest(&d, &id, &active, x);
                nn[x] = j;
                nn_d[x] = dj;
            } else {
                let dk = d[x * n + keep];
                if dk < nn_d[x] || (dk == nn_d[x] && key(&id, x, keep) < key(&id, x, nn[x])) {
                    nn[x] = keep;
                    nn_d[x] = dk;
                }
            }
        }
    }

    Ok(Dendrogram {
        n_leaves: n,
        merges,
    })
}
