//! Self-training engines: conventional self-training and (D)CAST.
//!
//! Both engines share one loop. Each iteration fits a model on the current
//! labeled set, scores it on a held-out validation slice of the original
//! labeled data, predicts the unlabeled pool and moves a batch of
//! pseudo-labeled samples from the pool into the labeled set. The model with
//! the best validation accuracy (earliest on ties) is returned.
//!
//! (D)CAST selects per class: class `c` may contribute `s_c` samples whose
//! predicted class is `c` with probability above `max(t, 1.2 / C)`. With
//! diversity `d > 1` the `s_c · d` most confident candidates are clustered
//! (single linkage) into `s_c` groups and the most confident member of each
//! group is kept.
//!
//! Per-iteration cost is one fit, one prediction over the pool, and at most
//! `(s · d)²` distance evaluations plus clustering for the diversity step, so
//! a run is bounded by `O(m · (T(l+u) + P(u) + (s·d·v)²))` for embedding
//! width `v`.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::cluster::{self, DistanceMatrix, Linkage, Metric};
use crate::data::{round_half_up, Dataset};
use crate::error::{Error, Result};
use crate::learners::{self, argmax, ModelKind, ModelSpec, TrainedModel};
use crate::rng::{self, tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassRatioMode {
    /// `s_c` proportional to the class ratios of the original labeled set.
    PreserveLabeledRatios,
    /// `s_c = s / C`.
    EqualPerClass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelfTrainConfig {
    pub max_iterations: usize,
    /// Pseudo-labels added per iteration; `None` means `3 · C`.
    pub samples_per_iteration: Option<usize>,
    pub confidence_threshold: f64,
    pub diversity: usize,
    pub class_ratio_mode: ClassRatioMode,
    /// Forest threshold percentile; `None` means 93 for two classes, else 85.
    pub rf_threshold_percentile: Option<f64>,
    pub patience: usize,
    pub validation_fraction: f64,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            samples_per_iteration: None,
            confidence_threshold: 0.9,
            diversity: 1,
            class_ratio_mode: ClassRatioMode::PreserveLabeledRatios,
            rf_threshold_percentile: None,
            patience: 5,
            validation_fraction: 0.2,
        }
    }
}

impl SelfTrainConfig {
    pub fn samples_per_iteration(&self, n_classes: usize) -> usize {
        self.samples_per_iteration.unwrap_or(3 * n_classes)
    }

    pub fn rf_percentile(&self, n_classes: usize) -> f64 {
        self.rf_threshold_percentile
            .unwrap_or(if n_classes == 2 { 93.0 } else { 85.0 })
    }

    /// Copy with every defaulted field made explicit.
    pub fn resolved(&self, n_classes: usize) -> Self {
        Self {
            samples_per_iteration: Some(self.samples_per_iteration(n_classes)),
            rf_threshold_percentile: Some(self.rf_percentile(n_classes)),
            ..self.clone()
        }
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.diversity < 1 {
            return bad("diversity d must be at least 1".into());
        }
        if self.max_iterations < 1 {
            return bad("max_iterations m must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return bad(format!("confidence threshold t must lie in [0, 1], got {}", self.confidence_threshold));
        }
        let s = self.samples_per_iteration(n_classes);
        if s < 1 {
            return bad("samples per iteration s must be positive".into());
        }
        if self.class_ratio_mode == ClassRatioMode::EqualPerClass && s < n_classes {
            return bad(format!("equal-per-class mode needs s >= C ({s} < {n_classes})"));
        }
        let pct = self.rf_percentile(n_classes);
        if !(0.0..=100.0).contains(&pct) {
            return bad(format!("forest threshold percentile must lie in [0, 100], got {pct}"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!("validation fraction must lie in [0, 1), got {}", self.validation_fraction));
        }
        Ok(())
    }
}

/// Class-wise confidence floor `max(t, 1.2 / C)`.
pub fn class_threshold(t: f64, n_classes: usize) -> f64 {
    t.max(1.2 / n_classes as f64)
}

/// Unlabeled rows predicted as class `c` with probability above `threshold`,
/// most confident first (ties by lower row), truncated to `s_c · d`.
pub fn select_candidates(probs: &Array2<f64>, c: usize, s_c: usize, d: usize, threshold: f64) -> Vec<usize> {
    let mut hits: Vec<(usize, f64)> = probs
        .rows()
        .into_iter()
        .enumerate()
        .filter_map(|(i, row)| {
            let row = row.as_slice().expect("contiguous");
            (argmax(row) == c && row[c] > threshold).then_some((i, row[c]))
        })
        .collect();
    hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    hits.truncate(s_c * d);
    hits.into_iter().map(|(i, _)| i).collect()
}

/// Normalised Gram distance `1 - E·Eᵀ / max(E·Eᵀ)` with a zero diagonal.
///
/// Returns `true` alongside the matrix when the Gram matrix has no positive
/// entry; all off-diagonal distances are then 1.
pub fn embedding_distance(e: &Array2<f64>) -> (DistanceMatrix, bool) {
    let n = e.nrows();
    let rows: Vec<Vec<f64>> = e.rows().into_iter().map(|r| r.to_vec()).collect();
    let dot = |i: usize, j: usize| rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum::<f64>();
    let mut gram = vec![0.0; n * n];
    let mut max = f64::NEG_INFINITY;
    for i in 0..n {
        for j in i..n {
            let g = dot(i, j);
            gram[i * n + j] = g;
            gram[j * n + i] = g;
            max = max.max(g);
        }
    }
    if !(max > 0.0) {
        return (DistanceMatrix::from_pair_fn(n, Metric::Precomputed, |_, _| 1.0), true);
    }
    let dist = DistanceMatrix::from_pair_fn(n, Metric::Precomputed, |i, j| (1.0 - gram[i * n + j] / max).max(0.0));
    (dist, false)
}

/// Keeps one candidate per single-linkage cluster: the most confident one
/// (ties by lower index). Returns all candidates if there are at most `s_c`.
/// The result is ordered by confidence, highest first.
pub fn diversify(candidates: &[usize], dist: &DistanceMatrix, confidences: &[f64], s_c: usize) -> Result<Vec<usize>> {
    if candidates.len() != dist.len() || candidates.len() != confidences.len() {
        return Err(Error::DimensionMismatch {
            expected: candidates.len(),
            found: dist.len().min(confidences.len()),
        });
    }
    let ranked = |mut picks: Vec<(usize, f64)>| {
        picks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        picks.into_iter().map(|(i, _)| i).collect::<Vec<_>>()
    };
    if candidates.len() <= s_c {
        return Ok(ranked(candidates.iter().copied().zip(confidences.iter().copied()).collect()));
    }
    if s_c == 0 {
        return Ok(Vec::new());
    }
    let dend = cluster::agglomerate(dist, Linkage::Single)?;
    let labels = dend.cut_to_k(s_c)?;
    let mut best: Vec<Option<(usize, f64)>> = vec![None; s_c];
    for (p, &cl) in labels.iter().enumerate() {
        let cand = (candidates[p], confidences[p]);
        let replace = match best[cl] {
            None => true,
            Some((idx, conf)) => cand.1 > conf || (cand.1 == conf && cand.0 < idx),
        };
        if replace {
            best[cl] = Some(cand);
        }
    }
    Ok(ranked(best.into_iter().flatten().collect()))
}

/// Splits `s` across classes: floor of `s · ratio`, remainder to the largest
/// fractional parts (lower class on ties). A class with a positive ratio and
/// at least one candidate but a zero share takes one slot from the class with
/// the largest share, so the total stays `s`.
pub fn allocate_per_class(s: usize, ratios: &[f64], has_candidates: &[bool]) -> Vec<usize> {
    let exact: Vec<f64> = ratios.iter().map(|r| s as f64 * r).collect();
    let mut out: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let remainder = s.saturating_sub(out.iter().sum());
    let mut order: Vec<usize> = (0..ratios.len()).filter(|&c| ratios[c] > 0.0).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &c in order.iter().cycle().take(if order.is_empty() { 0 } else { remainder }) {
        out[c] += 1;
    }
    for c in 0..ratios.len() {
        if out[c] == 0 && ratios[c] > 0.0 && has_candidates[c] {
            let donor = (0..ratios.len()).max_by(|&a, &b| out[a].cmp(&out[b]).then(b.cmp(&a))).expect("classes");
            if out[donor] > 1 {
                out[donor] -= 1;
                out[c] = 1;
            }
        }
    }
    out
}

/// Linear-interpolation percentile of `values` (`pct` in [0, 100]).
pub fn percentile(values: &[f64], pct: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = pct / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    UnlabeledExhausted,
    NoSelection,
    Patience,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    /// Row of the original unlabeled matrix.
    pub unlabeled_index: usize,
    pub class: usize,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Training rows the iteration's model was fit on.
    pub labeled_size: usize,
    /// Pool size before this iteration's pseudo-labeling.
    pub unlabeled_size: usize,
    pub validation_accuracy: f64,
    /// Confidence floor per class; absent for class-agnostic selection.
    pub thresholds: Option<Vec<f64>>,
    pub selected_counts: Vec<usize>,
    pub pseudo_labels: Vec<PseudoLabel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfTrainTrace {
    pub records: Vec<IterationRecord>,
    pub best_iteration: usize,
    pub stop_reason: StopReason,
}

impl SelfTrainTrace {
    /// One JSON object per iteration. The record of the returned model
    /// carries `"best": true`; the final record carries the stop reason.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let last = self.records.len().saturating_sub(1);
        for (i, r) in self.records.iter().enumerate() {
            let mut v = serde_json::to_value(r).expect("serialisable record");
            v["best"] = serde_json::Value::Bool(r.iteration == self.best_iteration);
            if i == last {
                v["stop_reason"] = serde_json::to_value(self.stop_reason).expect("serialisable");
            }
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SelfTrainOutcome {
    pub model: TrainedModel,
    pub trace: SelfTrainTrace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Selector {
    ClassAware,
    Conventional,
}

/// Stratified validation slice of `labeled`. Classes with a single sample
/// stay entirely in the training part.
pub fn validation_split(labeled: &Dataset, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for c in 0..labeled.n_classes() {
        let rows = labeled.rows_of_class(c);
        let n_c = rows.len();
        if n_c == 0 {
            continue;
        }
        let take = round_half_up(fraction * n_c as f64).min(n_c - 1);
        let mut rng = rng::stream(seed, &[c as u64]);
        let mut in_val = vec![false; n_c];
        for p in rand::seq::index::sample(&mut rng, n_c, take) {
            in_val[p] = true;
        }
        for (p, &r) in rows.iter().enumerate() {
            if in_val[p] {
                val.push(r);
            } else {
                train.push(r);
            }
        }
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Diverse class-aware self-training. `cfg.diversity == 1` is plain CAST.
pub fn dcast(
    spec: &ModelSpec,
    cfg: &SelfTrainConfig,
    labeled: &Dataset,
    unlabeled: &Array2<f64>,
    seed: u64,
) -> Result<SelfTrainOutcome> {
    run(spec, cfg, labeled, unlabeled, seed, Selector::ClassAware)
}

/// Self-training that pseudo-labels the `s` most confident pool samples per
/// iteration regardless of class.
pub fn conventional_st(
    spec: &ModelSpec,
    cfg: &SelfTrainConfig,
    labeled: &Dataset,
    unlabeled: &Array2<f64>,
    seed: u64,
) -> Result<SelfTrainOutcome> {
    run(spec, cfg, labeled, unlabeled, seed, Selector::Conventional)
}

/// Model-training seed shared by every iteration of one run.
pub fn model_seed(seed: u64) -> u64 {
    rng::derive(seed, &[tag::MODEL])
}

/// Seed of the validation split of one run.
pub fn validation_seed(seed: u64) -> u64 {
    rng::derive(seed, &[tag::VALIDATION])
}

fn run(
    spec: &ModelSpec,
    cfg: &SelfTrainConfig,
    labeled: &Dataset,
    unlabeled: &Array2<f64>,
    seed: u64,
    selector: Selector,
) -> Result<SelfTrainOutcome> {
    let n_classes = labeled.n_classes();
    cfg.validate(n_classes)?;
    if unlabeled.nrows() > 0 && unlabeled.ncols() != labeled.n_features() {
        return Err(Error::DimensionMismatch {
            expected: labeled.n_features(),
            found: unlabeled.ncols(),
        });
    }
    let s = cfg.samples_per_iteration(n_classes);
    let floor = class_threshold(cfg.confidence_threshold, n_classes);
    let fit_seed = model_seed(seed);

    let counts = labeled.class_counts();
    let ratios: Vec<f64> = match cfg.class_ratio_mode {
        ClassRatioMode::PreserveLabeledRatios => {
            let total = labeled.n_samples() as f64;
            counts.iter().map(|&c| c as f64 / total).collect()
        }
        ClassRatioMode::EqualPerClass => vec![1.0 / n_classes as f64; n_classes],
    };

    let (train_rows, val_rows) = validation_split(labeled, cfg.validation_fraction, validation_seed(seed));
    let x_val = labeled.features().select(Axis(0), &val_rows);
    let y_val: Vec<usize> = val_rows.iter().map(|&r| labeled.labels()[r]).collect();

    let mut x_l: Vec<f64> = Vec::with_capacity((train_rows.len() + unlabeled.nrows()) * labeled.n_features());
    for &r in &train_rows {
        x_l.extend(labeled.features().row(r).iter());
    }
    let mut y_l: Vec<usize> = train_rows.iter().map(|&r| labeled.labels()[r]).collect();
    let mut pool: Vec<usize> = (0..unlabeled.nrows()).collect();

    let mut records = Vec::new();
    let mut best: Option<(f64, usize, TrainedModel)> = None;
    let mut iteration = 0;
    let stop_reason = loop {
        let x_train = Array2::from_shape_vec((y_l.len(), labeled.n_features()), x_l.clone()).expect("shape");
        let model = learners::fit(spec, &x_train, &y_l, n_classes, fit_seed)?;
        let acc = if val_rows.is_empty() {
            model.accuracy(&x_train, &y_l)?
        } else {
            model.accuracy(&x_val, &y_val)?
        };
        if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
            best = Some((acc, iteration, model.clone()));
        }
        let mut record = IterationRecord {
            iteration,
            labeled_size: y_l.len(),
            unlabeled_size: pool.len(),
            validation_accuracy: acc,
            thresholds: None,
            selected_counts: vec![0; n_classes],
            pseudo_labels: Vec::new(),
        };
        if pool.is_empty() {
            records.push(record);
            break StopReason::UnlabeledExhausted;
        }

        let x_pool = unlabeled.select(Axis(0), &pool);
        let probs = model.predict_proba(&x_pool)?;
        // Positions into `pool`, with their pseudo-label and confidence.
        let mut picks: Vec<(usize, usize, f64)> = Vec::new();
        match selector {
            Selector::Conventional => {
                let mut ranked: Vec<(usize, usize, f64)> = probs
                    .rows()
                    .into_iter()
                    .enumerate()
                    .map(|(p, row)| {
                        let row = row.as_slice().expect("contiguous");
                        let c = argmax(row);
                        (p, c, row[c])
                    })
                    .collect();
                ranked.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
                ranked.truncate(s);
                picks = ranked;
            }
            Selector::ClassAware => {
                let threshold = if spec.kind() == ModelKind::Forest {
                    let maxes: Vec<f64> = probs
                        .rows()
                        .into_iter()
                        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                        .collect();
                    percentile(&maxes, cfg.rf_percentile(n_classes)).max(1.2 / n_classes as f64)
                } else {
                    floor
                };
                record.thresholds = Some(vec![threshold; n_classes]);
                let has_candidates: Vec<bool> = (0..n_classes)
                    .map(|c| !select_candidates(&probs, c, 1, 1, threshold).is_empty())
                    .collect();
                let shares = allocate_per_class(s, &ratios, &has_candidates);
                for c in 0..n_classes {
                    if shares[c] == 0 || !has_candidates[c] {
                        continue;
                    }
                    let cands = select_candidates(&probs, c, shares[c], cfg.diversity, threshold);
                    let chosen = if cfg.diversity > 1 && cands.len() > shares[c] {
                        let conf: Vec<f64> = cands.iter().map(|&p| probs[[p, c]]).collect();
                        let x_c = x_pool.select(Axis(0), &cands);
                        let dist = if model.has_discriminative_embedding() {
                            embedding_distance(&model.embed(&x_c)?).0
                        } else {
                            cluster::pairwise_euclidean(&x_c)?
                        };
                        diversify(&cands, &dist, &conf, shares[c])?
                    } else {
                        cands
                    };
                    picks.extend(chosen.into_iter().map(|p| (p, c, probs[[p, c]])));
                }
            }
        }

        let mut taken = vec![false; pool.len()];
        for &(p, c, conf) in &picks {
            taken[p] = true;
            x_l.extend(x_pool.row(p).iter());
            y_l.push(c);
            record.selected_counts[c] += 1;
            record.pseudo_labels.push(PseudoLabel {
                unlabeled_index: pool[p],
                class: c,
                confidence: conf,
            });
        }
        pool = pool
            .iter()
            .zip(&taken)
            .filter_map(|(&u, &t)| (!t).then_some(u))
            .collect();
        records.push(record);

        let best_iteration = best.as_ref().expect("at least one model").1;
        if iteration == cfg.max_iterations {
            break StopReason::MaxIterations;
        }
        if pool.is_empty() {
            break StopReason::UnlabeledExhausted;
        }
        if picks.is_empty() {
            break StopReason::NoSelection;
        }
        if iteration - best_iteration >= cfg.patience {
            break StopReason::Patience;
        }
        iteration += 1;
    };

    let (_, best_iteration, model) = best.expect("at least one model");
    Ok(SelfTrainOutcome {
        model,
        trace: SelfTrainTrace {
            records,
            best_iteration,
            stop_reason,
        },
    })
}

/// Violations of the loop's structural invariants, replayed from a trace.
///
/// `class_aware` enables the per-class threshold-floor check, which does not
/// apply to conventional self-training.
pub fn check_trace(
    trace: &SelfTrainTrace,
    cfg: &SelfTrainConfig,
    n_classes: usize,
    class_aware: bool,
) -> Vec<String> {
    let mut problems = Vec::new();
    let s = cfg.samples_per_iteration(n_classes);
    let r = 1.2 / n_classes as f64;
    if trace.records.len() > cfg.max_iterations + 1 {
        problems.push(format!("trace has {} records, limit {}", trace.records.len(), cfg.max_iterations + 1));
    }
    let Some(first) = trace.records.first() else {
        problems.push("empty trace".into());
        return problems;
    };
    let total = first.labeled_size + first.unlabeled_size;
    let mut seen = std::collections::HashSet::new();
    for (i, rec) in trace.records.iter().enumerate() {
        if rec.iteration != i {
            problems.push(format!("record {i} has iteration {}", rec.iteration));
        }
        if rec.labeled_size + rec.unlabeled_size != total {
            problems.push(format!("iteration {i}: labeled + unlabeled = {} != {total}", rec.labeled_size + rec.unlabeled_size));
        }
        if rec.pseudo_labels.len() > s {
            problems.push(format!("iteration {i}: {} additions exceed s = {s}", rec.pseudo_labels.len()));
        }
        if let Some(next) = trace.records.get(i + 1) {
            if next.labeled_size != rec.labeled_size + rec.pseudo_labels.len() {
                problems.push(format!("iteration {i}: labeled set did not grow by the selection"));
            }
        }
        for pl in &rec.pseudo_labels {
            if !seen.insert(pl.unlabeled_index) {
                problems.push(format!("unlabeled row {} pseudo-labeled twice", pl.unlabeled_index));
            }
            if class_aware {
                match &rec.thresholds {
                    Some(t) if pl.confidence > t[pl.class] && t[pl.class] >= r => {}
                    Some(t) if t[pl.class] < r => {
                        problems.push(format!("iteration {i}: threshold {} below floor {r}", t[pl.class]))
                    }
                    Some(t) => problems.push(format!(
                        "iteration {i}: pseudo-label with confidence {} not above {}",
                        pl.confidence, t[pl.class]
                    )),
                    None => problems.push(format!("iteration {i}: class-aware record without thresholds")),
                }
            }
        }
    }
    let best = trace.best_iteration;
    match trace.records.get(best) {
        None => problems.push(format!("best iteration {best} outside trace")),
        Some(b) => {
            for rec in &trace.records {
                let better = rec.validation_accuracy > b.validation_accuracy;
                let earlier_tie = rec.validation_accuracy == b.validation_accuracy && rec.iteration < best;
                if better || earlier_tie {
                    problems.push(format!("iteration {} beats reported best {best}", rec.iteration));
                }
            }
            let last = trace.records.len() - 1;
            if last > best + cfg.patience {
                problems.push(format!("ran {} iterations past the best, patience {}", last - best, cfg.patience));
            }
            if trace.stop_reason == StopReason::Patience && last - best != cfg.patience {
                problems.push("patience stop fired at the wrong iteration".into());
            }
        }
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn thresholds() {
        assert_eq!(class_threshold(0.9, 2), 0.9);
        assert_abs_diff_eq!(class_threshold(0.0, 10), 0.12, epsilon = 1e-15);
        assert_abs_diff_eq!(class_threshold(0.5, 2), 0.6, epsilon = 1e-15);
    }

    #[test]
    fn candidate_ranking() {
        let probs = array![[0.95, 0.05], [0.92, 0.08], [0.85, 0.15], [0.60, 0.40]];
        assert_eq!(select_candidates(&probs, 0, 1, 2, 0.9), vec![0, 1]);
        assert_eq!(select_candidates(&probs, 0, 1, 1, 0.9), vec![0]);
        assert!(select_candidates(&probs, 0, 1, 2, 0.96).is_empty());
        assert!(select_candidates(&probs, 1, 3, 3, 0.0).is_empty());
        let tied = array![[0.9, 0.1], [0.95, 0.05], [0.9, 0.1]];
        assert_eq!(select_candidates(&tied, 0, 3, 1, 0.5), vec![1, 0, 2]);
    }

    #[test]
    fn gram_distance_cases() {
        let (d, degenerate) = embedding_distance(&array![[1.0, 0.0], [0.0, 1.0]]);
        assert!(!degenerate);
        assert_eq!(d.to_array(), array![[0.0, 1.0], [1.0, 0.0]]);
        let (d, _) = embedding_distance(&array![[2.0, 1.0], [2.0, 1.0], [2.0, 1.0]]);
        assert!(d.to_array().iter().all(|&v| v == 0.0));
        let (d, degenerate) = embedding_distance(&array![[0.0, 0.0], [0.0, 0.0]]);
        assert!(degenerate);
        assert_eq!(d.get(0, 1), 1.0);
    }

    #[test]
    fn forest_leaf_overlap_distance() {
        // Two 100-tree leaf encodings sharing 60 leaves.
        let mut e = Array2::zeros((2, 140));
        for t in 0..100 {
            e[[0, t]] = 1.0;
        }
        for t in 0..60 {
            e[[1, t]] = 1.0;
        }
        for t in 100..140 {
            e[[1, t]] = 1.0;
        }
        let (d, _) = embedding_distance(&e);
        assert_abs_diff_eq!(d.get(0, 1), 0.4, epsilon = 1e-15);
    }

    #[test]
    fn diversify_one_per_group() {
        // Candidates 10 and 11 are close, 12 is far away.
        let dist = DistanceMatrix::precomputed(&array![[0.0, 0.1, 5.0], [0.1, 0.0, 5.0], [5.0, 5.0, 0.0]]).unwrap();
        let picked = diversify(&[10, 11, 12], &dist, &[0.91, 0.97, 0.93], 2).unwrap();
        assert_eq!(picked, vec![11, 12]);
        let all = diversify(&[10, 11, 12], &dist, &[0.91, 0.97, 0.93], 3).unwrap();
        assert_eq!(all, vec![11, 12, 10]);
        let one = diversify(&[10, 11, 12], &dist, &[0.91, 0.97, 0.93], 1).unwrap();
        assert_eq!(one, vec![11]);
    }

    #[test]
    fn allocation_rules() {
        assert_eq!(allocate_per_class(6, &[0.5, 0.5], &[true, true]), vec![3, 3]);
        assert_eq!(allocate_per_class(6, &[0.7, 0.3], &[true, true]), vec![4, 2]);
        // 6 * 0.05 = 0.3 floors to zero; the small class borrows a slot.
        assert_eq!(allocate_per_class(6, &[0.95, 0.05], &[true, true]), vec![5, 1]);
        assert_eq!(allocate_per_class(6, &[0.95, 0.05], &[true, false]), vec![6, 0]);
        assert_eq!(allocate_per_class(6, &[1.0, 0.0], &[true, true]), vec![6, 0]);
        assert_eq!(allocate_per_class(7, &[1.0 / 3.0; 3], &[true; 3]), vec![3, 2, 2]);
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0, 5.0], 50.0), 3.0);
        assert_abs_diff_eq!(percentile(&[1.0, 2.0], 93.0), 1.93, epsilon = 1e-12);
        assert_eq!(percentile(&[4.0, 1.0], 100.0), 4.0);
    }

    #[test]
    fn config_validation() {
        assert!(SelfTrainConfig::default().validate(2).is_ok());
        let bad = SelfTrainConfig {
            diversity: 0,
            ..SelfTrainConfig::default()
        };
        assert!(bad.validate(2).is_err());
        let bad = SelfTrainConfig {
            class_ratio_mode: ClassRatioMode::EqualPerClass,
            samples_per_iteration: Some(2),
            ..SelfTrainConfig::default()
        };
        assert!(bad.validate(3).is_err());
        assert_eq!(SelfTrainConfig::default().rf_percentile(2), 93.0);
        assert_eq!(SelfTrainConfig::default().rf_percentile(10), 85.0);
        assert_eq!(SelfTrainConfig::default().samples_per_iteration(10), 30);
    }

    #[test]
    fn validation_split_keeps_singletons_in_training() {
        let d = Dataset::new(
            Array2::from_shape_fn((11, 1), |(i, _)| i as f64),
            vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1],
            vec!["x".into()],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let (train, val) = validation_split(&d, 0.2, 0);
        assert_eq!(val.len(), 2);
        assert!(train.contains(&10));
        assert_eq!(train.len() + val.len(), 11);
    }
}
