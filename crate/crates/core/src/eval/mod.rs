//! Evaluation: AUROC / average-precision metrics, tie-aware rank tables, and
//! a reproducible benchmark harness that compares every detector in a pool —
//! plus an average-of-all baseline and the automatic selector — on labeled
//! datasets under a fixed stratified split.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, LabeledDataset};
use crate::detector::{DetectorId, FittedDetector, Hyperparams};
use crate::error::{OdError, Result};
use crate::io::{censor_labels, fnv1a64};
use crate::llm::LlmClient;
use crate::registry::Registry;
use crate::selector::{select, SelectionResult, SelectorConfig, SelectorMode};

/// Comparison-row name for the arithmetic mean over the pool.
pub const ROW_AVERAGE: &str = "average_of_all";
/// Comparison-row name for the offline (symbolic) selector.
pub const ROW_SELECTOR_OFFLINE: &str = "selector_offline";
/// Comparison-row name for the selector run with free-text notes against a
/// replay transcript.
pub const ROW_SELECTOR_NOTES: &str = "selector_notes";

fn validate_binary(labels: &[u8]) -> Result<(usize, usize)> {
    let mut pos = 0usize;
    let mut neg = 0usize;
    for &l in labels {
        match l {
            0 => neg += 1,
            1 => pos += 1,
            other => {
                return Err(OdError::InvalidData(format!(
                    "labels must be 0 or 1, found {other}"
                )))
            }
        }
    }
    Ok((pos, neg))
}

fn validate_scores(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(OdError::InvalidData(format!(
            "score count {} does not match label count {}",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(OdError::InvalidData("metrics need at least one sample".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(OdError::InvalidData("scores must be finite".into()));
    }
    Ok(())
}

/// 1-based midranks of `values` in ascending order: ties share the average of
/// the positions they span.
fn midranks_ascending(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mid = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// Area under the ROC curve in the rank (Mann–Whitney) form with midranks on
/// ties. Requires both classes to be present.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    validate_scores(scores, labels)?;
    let (pos, neg) = validate_binary(labels)?;
    if pos == 0 || neg == 0 {
        return Err(OdError::InvalidData(
            "AUROC needs both classes present in the labels".into(),
        ));
    }
    let ranks = midranks_ascending(scores);
    let rank_sum_pos: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(r, _)| *r)
        .sum();
    let u = rank_sum_pos - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Average precision: precision accumulated at each positive's rank when
/// ordering by descending score, ties broken by ascending index.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    validate_scores(scores, labels)?;
    let (pos, _) = validate_binary(labels)?;
    if pos == 0 {
        return Err(OdError::InvalidData(
            "average precision needs at least one positive label".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("finite values")
            .then(a.cmp(&b))
    });
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (position, &idx) in order.iter().enumerate() {
        if labels[idx] == 1 {
            hits += 1;
            sum += hits as f64 / (position + 1) as f64;
        }
    }
    Ok(sum / pos as f64)
}

/// Tie-aware rank table over a complete dataset × method AUROC matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    /// Sorted method (row) names.
    pub methods: Vec<String>,
    /// Sorted dataset names.
    pub datasets: Vec<String>,
    /// `ranks[dataset][method]`: 1 = best AUROC on that dataset, ties share
    /// the average of the spanned positions.
    pub ranks: Vec<Vec<f64>>,
    /// Mean rank per method over all datasets, aligned with `methods`.
    pub mean_ranks: Vec<f64>,
}

impl RankTable {
    /// Mean rank for one method by name.
    pub fn mean_rank(&self, method: &str) -> Option<f64> {
        let idx = self.methods.iter().position(|m| m == method)?;
        Some(self.mean_ranks[idx])
    }
}

/// Build the rank table: per dataset, methods are ranked by descending AUROC
/// (rank 1 = best) with midranks on ties; mean ranks aggregate over datasets.
/// The matrix must be complete: every dataset must score every method.
pub fn rank_table(auroc_matrix: &BTreeMap<String, BTreeMap<String, f64>>) -> Result<RankTable> {
    let mut datasets_iter = auroc_matrix.iter();
    let (_, first_row) = datasets_iter
        .next()
        .ok_or_else(|| OdError::InvalidData("rank table needs at least one dataset".into()))?;
    let methods: Vec<String> = first_row.keys().cloned().collect();
    for (name, row) in auroc_matrix {
        let row_methods: Vec<&String> = row.keys().collect();
        if row_methods.len() != methods.len()
            || row_methods.iter().zip(&methods).any(|(a, b)| *a != b)
        {
            return Err(OdError::InvalidData(format!(
                "dataset '{name}' does not cover the same methods as the rest of the matrix"
            )));
        }
    }
    let datasets: Vec<String> = auroc_matrix.keys().cloned().collect();
    let mut ranks = Vec::with_capacity(datasets.len());
    let mut totals = vec![0.0; methods.len()];
    for name in &datasets {
        let row = &auroc_matrix[name];
        // Rank 1 = best: midranks of the negated AUROCs in ascending order.
        let negated: Vec<f64> = methods.iter().map(|m| -row[m]).collect();
        if negated.iter().any(|v| !v.is_finite()) {
            return Err(OdError::InvalidData(format!(
                "dataset '{name}' has a non-finite AUROC cell"
            )));
        }
        let row_ranks = midranks_ascending(&negated);
        for (total, r) in totals.iter_mut().zip(&row_ranks) {
            *total += r;
        }
        ranks.push(row_ranks);
    }
    let mean_ranks = totals
        .into_iter()
        .map(|t| t / datasets.len() as f64)
        .collect();
    Ok(RankTable {
        methods,
        datasets,
        ranks,
        mean_ranks,
    })
}

/// One labeled benchmark dataset.
#[derive(Clone, Debug)]
pub struct BenchDataset {
    pub name: String,
    pub dataset: LabeledDataset,
    /// When true the selector is shown the censored training labels,
    /// modelling a semi-supervised setting. Detector fits are unaffected.
    pub semi_supervised: bool,
}

/// Benchmark knobs. Every random choice derives from `global_seed`, the
/// dataset name, and the method name, so reruns are bit-reproducible.
#[derive(Clone, Debug)]
pub struct BenchConfig {
    /// Contamination passed to every fit.
    pub contamination: f64,
    /// Root seed for splits and fits.
    pub global_seed: u64,
    /// How many positives (lowest index first) stay visible when labels are
    /// censored for label-aware consumers (`devnet`, semi-supervised
    /// selection).
    pub labeled_budget: usize,
    /// Selector settings; the mode is overridden per comparison row.
    pub selector: SelectorConfig,
}

impl Default for BenchConfig {
    fn default() -> BenchConfig {
        BenchConfig {
            contamination: 0.05,
            global_seed: 0,
            labeled_budget: 10,
            selector: SelectorConfig::default(),
        }
    }
}

/// Full benchmark output: metric matrices, the rank table, and per-dataset
/// selection audits. Wall-clock time is measured but excluded from
/// serialization so reruns with identical seeds serialize identically.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchmarkReport {
    /// dataset → row (detector or comparison row) → AUROC.
    pub auroc: BTreeMap<String, BTreeMap<String, f64>>,
    /// dataset → row → average precision.
    pub average_precision: BTreeMap<String, BTreeMap<String, f64>>,
    pub ranks: RankTable,
    /// Offline-selector audit per dataset.
    pub selections: BTreeMap<String, SelectionResult>,
    /// Notes-mode selector audit per dataset; empty unless a transcript
    /// client was supplied.
    pub notes_selections: BTreeMap<String, SelectionResult>,
    #[serde(skip)]
    pub wall_seconds: f64,
}

fn dataset_context(name: &str, err: OdError) -> OdError {
    OdError::InvalidData(format!("dataset '{name}': {err}"))
}

/// Stratified 70/30 split: within each class, indices are shuffled by a seed
/// derived from (global seed, dataset name) and the first ⌊0.7·class size⌋
/// go to training. Returned index lists are sorted ascending.
fn stratified_split(labels: &[u8], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [0u8, 1u8] {
        let mut idx: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        idx.shuffle(&mut rng);
        // ⌊0.7·n⌋ in integer arithmetic: 0.7 has no exact binary form, so
        // (n as f64 * 0.7).floor() would undercount (e.g. 90 → 62).
        let cut = idx.len() * 7 / 10;
        train.extend_from_slice(&idx[..cut]);
        test.extend_from_slice(&idx[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Run the benchmark: for every dataset, fit every pool member on the fixed
/// stratified 70/30 training split and score the held-out 30%, then add the
/// comparison rows — the average of all pool members, the offline selector,
/// and (when `client` is provided) the selector with notes over a replay
/// transcript. Selector rows reuse the standalone fits of the chosen model.
pub fn benchmark(
    datasets: &[BenchDataset],
    pool: &[DetectorId],
    registry: &Registry,
    config: &BenchConfig,
    mut client: Option<&mut LlmClient>,
) -> Result<BenchmarkReport> {
    if datasets.is_empty() {
        return Err(OdError::InvalidParam("benchmark needs at least one dataset".into()));
    }
    if pool.is_empty() {
        return Err(OdError::InvalidParam("benchmark pool is empty".into()));
    }
    let started = Instant::now();
    let defaults = Hyperparams::new();
    let mut auroc_matrix: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let mut ap_matrix: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let mut selections = BTreeMap::new();
    let mut notes_selections = BTreeMap::new();

    for entry in datasets {
        let name = entry.name.as_str();
        let labels = entry.dataset.labels.as_ref().ok_or_else(|| {
            OdError::InvalidData(format!("dataset '{name}' must be labeled for benchmarking"))
        })?;
        let split_seed = fnv1a64(&format!("{}|{}|split", config.global_seed, name));
        let (train_idx, test_idx) = stratified_split(labels, split_seed);
        let train = DataMatrix::new(entry.dataset.data.select_rows(&train_idx))
            .map_err(|e| dataset_context(name, e))?;
        let test = DataMatrix::new(entry.dataset.data.select_rows(&test_idx))
            .map_err(|e| dataset_context(name, e))?;
        let train_labels: Vec<u8> = train_idx.iter().map(|&i| labels[i]).collect();
        let test_labels: Vec<u8> = test_idx.iter().map(|&i| labels[i]).collect();
        let censored = censor_labels(&train_labels, config.labeled_budget);

        let mut auroc_row: BTreeMap<String, f64> = BTreeMap::new();
        let mut ap_row: BTreeMap<String, f64> = BTreeMap::new();
        for &method in pool {
            let fit_seed =
                fnv1a64(&format!("{}|{}|{}", config.global_seed, name, method.as_str()));
            // Supervision is only consumed by devnet; it sees the same
            // censored label budget on every dataset.
            let fit_labels = match method {
                DetectorId::Devnet => Some(censored.as_slice()),
                _ => None,
            };
            let fitted = FittedDetector::fit_labeled(
                method,
                &train,
                fit_labels,
                config.contamination,
                &defaults,
                fit_seed,
            )
            .map_err(|e| dataset_context(name, e))?;
            let scores = fitted
                .decision_function(&test)
                .map_err(|e| dataset_context(name, e))?;
            let roc =
                auroc(scores.values(), &test_labels).map_err(|e| dataset_context(name, e))?;
            let ap = average_precision(scores.values(), &test_labels)
                .map_err(|e| dataset_context(name, e))?;
            auroc_row.insert(method.as_str().to_string(), roc);
            ap_row.insert(method.as_str().to_string(), ap);
        }
        let k = pool.len() as f64;
        auroc_row.insert(
            ROW_AVERAGE.to_string(),
            pool.iter()
                .map(|id| auroc_row[id.as_str()])
                .sum::<f64>()
                / k,
        );
        ap_row.insert(
            ROW_AVERAGE.to_string(),
            pool.iter().map(|id| ap_row[id.as_str()]).sum::<f64>() / k,
        );

        let selector_labels: Option<&[u8]> = entry
            .semi_supervised
            .then_some(censored.as_slice());
        let offline_cfg = SelectorConfig {
            mode: SelectorMode::Offline,
            notes: None,
            ..config.selector.clone()
        };
        let offline = select(&train, selector_labels, pool, registry, &offline_cfg, None)
            .map_err(|e| dataset_context(name, e))?;
        auroc_row.insert(
            ROW_SELECTOR_OFFLINE.to_string(),
            auroc_row[offline.chosen.as_str()],
        );
        ap_row.insert(
            ROW_SELECTOR_OFFLINE.to_string(),
            ap_row[offline.chosen.as_str()],
        );
        selections.insert(name.to_string(), offline);

        if let Some(llm) = client.as_deref_mut() {
            let notes_cfg = SelectorConfig {
                mode: SelectorMode::Llm,
                ..config.selector.clone()
            };
            let with_notes = select(
                &train,
                selector_labels,
                pool,
                registry,
                &notes_cfg,
                Some(llm),
            )
            .map_err(|e| dataset_context(name, e))?;
            auroc_row.insert(
                ROW_SELECTOR_NOTES.to_string(),
                auroc_row[with_notes.chosen.as_str()],
            );
            ap_row.insert(
                ROW_SELECTOR_NOTES.to_string(),
                ap_row[with_notes.chosen.as_str()],
            );
            notes_selections.insert(name.to_string(), with_notes);
        }

        auroc_matrix.insert(name.to_string(), auroc_row);
        ap_matrix.insert(name.to_string(), ap_row);
    }

    let ranks = rank_table(&auroc_matrix)?;
    Ok(BenchmarkReport {
        auroc: auroc_matrix,
        average_precision: ap_matrix,
        ranks,
        selections,
        notes_selections,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Render the report as an aligned plain-text table: one row per method,
/// one AUROC column per dataset, a trailing mean-rank column, then the
/// selector audit lines.
pub fn render_text(report: &BenchmarkReport) -> String {
    let methods = &report.ranks.methods;
    let datasets = &report.ranks.datasets;
    let name_width = methods
        .iter()
        .map(|m| m.len())
        .chain(["method".len()])
        .max()
        .unwrap_or(6);
    let col_width = datasets
        .iter()
        .map(|d| d.len().max(6))
        .collect::<Vec<_>>();
    let mut out = String::new();
    out.push_str(&format!("{:<name_width$}", "method"));
    for (d, w) in datasets.iter().zip(&col_width) {
        out.push_str(&format!("  {d:>w$}"));
    }
    out.push_str("  mean_rank\n");
    for (mi, method) in methods.iter().enumerate() {
        out.push_str(&format!("{method:<name_width$}"));
        for (d, w) in datasets.iter().zip(&col_width) {
            out.push_str(&format!("  {:>w$.4}", report.auroc[d][method]));
        }
        out.push_str(&format!("  {:>9.3}\n", report.ranks.mean_ranks[mi]));
    }
    if !report.selections.is_empty() {
        out.push_str("\noffline selections:\n");
        for (dataset, sel) in &report.selections {
            out.push_str(&format!(
                "  {dataset}: {} — {}\n",
                sel.chosen.as_str(),
                sel.reason
            ));
        }
    }
    if !report.notes_selections.is_empty() {
        out.push_str("\nnotes selections:\n");
        for (dataset, sel) in &report.notes_selections {
            out.push_str(&format!(
                "  {dataset}: {} — {}\n",
                sel.chosen.as_str(),
                sel.reason
            ));
        }
    }
    out
}
