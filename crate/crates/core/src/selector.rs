//! Three-step model selection: map the dataset profile to symbolic tags,
//! score every pool member against its registry metadata, then refine among
//! the top candidates — deterministically offline, or with LLM assistance.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::detector::DetectorId;
use crate::error::{OdError, Result};
use crate::llm::{
    parse_refine_reply, parse_tags_reply, render_refine_prompt, render_tag_prompt, ChatMessage,
    LlmClient,
};
use crate::profiler::{profile, profile_summary_text, DatasetProfile};
use crate::registry::{ModelMetadata, Registry, Tag};

/// Dataset tag set (subset of the closed vocabulary).
pub type TagSet = BTreeSet<Tag>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectorMode {
    Offline,
    Llm,
}

/// Tuning knobs for selection.
#[derive(Clone, Debug)]
pub struct SelectorConfig {
    /// Candidate threshold δ: models with S ≥ δ survive to refinement.
    pub delta: f64,
    /// Per-tag weights; missing tags weigh 1.0. All weights must be positive.
    pub tag_weights: BTreeMap<Tag, f64>,
    pub mode: SelectorMode,
    /// Free-text context forwarded to LLM prompts only; never affects
    /// symbolic scores.
    pub notes: Option<String>,
}

impl Default for SelectorConfig {
    fn default() -> SelectorConfig {
        SelectorConfig {
            delta: 0.0,
            tag_weights: BTreeMap::new(),
            mode: SelectorMode::Offline,
            notes: None,
        }
    }
}

/// Full audit record of one selection run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub chosen: DetectorId,
    pub reason: String,
    pub scores: BTreeMap<DetectorId, f64>,
    pub candidates: BTreeSet<DetectorId>,
    pub tags: TagSet,
    pub mode: SelectorMode,
}

/// Deterministic tag mapping from the fixed threshold table. The anomaly-kind
/// tags (local/global) are never emitted here: thresholds cannot see them.
pub fn map_tags_rules(p: &DatasetProfile) -> TagSet {
    let mut tags = TagSet::new();
    if p.d >= 50 {
        tags.insert(Tag::HighDimensional);
    }
    if p.d <= 10 {
        tags.insert(Tag::LowDimensional);
    }
    if p.n < 1000 {
        tags.insert(Tag::SmallSample);
    }
    if p.n >= 50000 {
        tags.insert(Tag::LargeSample);
    }
    if p.skew_mean.abs() > 1.0 {
        tags.insert(Tag::Skewed);
    }
    if p.kurt_mean > 3.0 {
        tags.insert(Tag::HeavyTailed);
    }
    if p.noise_level > 0.3 {
        tags.insert(Tag::NoisyFeatures);
    }
    if p.sparsity > 0.5 {
        tags.insert(Tag::Sparse);
    }
    if p.corr_mean > 0.5 {
        tags.insert(Tag::CorrelatedFeatures);
    }
    if p.scale_spread > 2.0 {
        tags.insert(Tag::MixedScale);
    }
    if let Some(ratio) = p.anomaly_ratio {
        if ratio < 0.05 {
            tags.insert(Tag::Imbalanced);
        }
        if ratio > 0.0 {
            tags.insert(Tag::LabeledAnomaliesAvailable);
        }
    }
    if p.skew_mean.abs() < 0.3 && p.kurt_mean.abs() < 0.5 {
        tags.insert(Tag::NearGaussian);
    }
    if p.bimodality >= 0.5 {
        tags.insert(Tag::Multimodal);
    }
    tags
}

/// LLM tag mapping with a hard fallback: any transport trouble, unparseable
/// reply, or empty tag list degrades to the rules table. Out-of-vocabulary
/// tags are dropped, never fatal.
pub fn map_tags_llm(
    p: &DatasetProfile,
    notes: Option<&str>,
    client: &mut LlmClient,
) -> TagSet {
    let prompt = render_tag_prompt(&profile_summary_text(p), notes, &Tag::ALL);
    let reply = match client.chat(&prompt) {
        Ok(r) => r,
        Err(_) => return map_tags_rules(p),
    };
    let names = match parse_tags_reply(&reply) {
        Ok(n) => n,
        Err(_) => return map_tags_rules(p),
    };
    let tags: TagSet = names.iter().filter_map(|n| n.parse::<Tag>().ok()).collect();
    if tags.is_empty() {
        return map_tags_rules(p);
    }
    tags
}

fn weight(weights: &BTreeMap<Tag, f64>, tag: Tag) -> f64 {
    weights.get(&tag).copied().unwrap_or(1.0)
}

/// Alignment score S = sim − penalty, each side normalized by the model's own
/// tag mass, so S ∈ [−1, 1] regardless of metadata size.
pub fn score_model(meta: &ModelMetadata, tags: &TagSet, weights: &BTreeMap<Tag, f64>) -> f64 {
    let side = |list: &[Tag]| -> f64 {
        let total: f64 = list.iter().map(|&t| weight(weights, t)).sum();
        if total <= 0.0 {
            return 0.0;
        }
        let hit: f64 = list
            .iter()
            .filter(|t| tags.contains(t))
            .map(|&t| weight(weights, t))
            .sum();
        hit / total
    };
    side(&meta.strengths) - side(&meta.weaknesses)
}

/// Candidate set {m : S(m) ≥ δ}; when empty, falls back to the singleton
/// argmax-S with lexicographic tie-break.
pub fn candidate_set(scores: &BTreeMap<DetectorId, f64>, delta: f64) -> BTreeSet<DetectorId> {
    let survivors = delta_survivors(scores, delta);
    if !survivors.is_empty() {
        return survivors;
    }
    argmax_score(scores).into_iter().collect()
}

/// The follow-up sent when a refinement reply is malformed or names a model
/// outside the candidate set.
pub fn corrective_refine_message(candidates: &BTreeSet<DetectorId>) -> ChatMessage {
    let allowed = candidates
        .iter()
        .map(|id| id.as_str())
        .collect::<Vec<_>>()
        .join(", ");
    ChatMessage::user(format!(
        "That is not one of the candidates. Reply with exactly one JSON \
         object {{\"model\": \"<one of: {allowed}>\", \"reason\": \"...\"}}."
    ))
}

/// The raw threshold filter {id : S(id) ≥ δ} with no fallback: may be empty.
/// Nested by construction — raising δ can only shrink it.
pub fn delta_survivors(scores: &BTreeMap<DetectorId, f64>, delta: f64) -> BTreeSet<DetectorId> {
    scores
        .iter()
        .filter(|(_, &s)| s >= delta)
        .map(|(&id, _)| id)
        .collect()
}

/// Highest-S id; ties resolve to the lexicographically smallest (BTreeMap
/// iterates ids in order, and only a strictly larger score displaces).
fn argmax_score(scores: &BTreeMap<DetectorId, f64>) -> Option<DetectorId> {
    let mut best: Option<(DetectorId, f64)> = None;
    for (&id, &s) in scores {
        match best {
            Some((_, bs)) if s <= bs => {}
            _ => best = Some((id, s)),
        }
    }
    best.map(|(id, _)| id)
}

/// LLM refinement among candidates. A singleton set short-circuits without
/// any call. A reply naming a non-candidate gets one corrective retry; a
/// second failure (or transport trouble) falls back to the symbolic argmax
/// with reason "symbolic fallback".
pub fn refine_llm(
    candidates: &BTreeSet<DetectorId>,
    registry: &Registry,
    scores: &BTreeMap<DetectorId, f64>,
    tags: &TagSet,
    notes: Option<&str>,
    client: &mut LlmClient,
) -> (DetectorId, String) {
    debug_assert!(!candidates.is_empty());
    if candidates.len() == 1 {
        let only = *candidates.iter().next().expect("non-empty");
        return (only, "sole candidate".to_string());
    }
    let metas: Vec<(&ModelMetadata, f64)> = candidates
        .iter()
        .filter_map(|&id| registry.get(id).map(|m| (m, scores[&id])))
        .collect();
    let tag_list: Vec<Tag> = tags.iter().copied().collect();
    let mut messages = render_refine_prompt(&metas, &tag_list, notes);

    for attempt in 0..2 {
        let reply = match client.chat(&messages) {
            Ok(r) => r,
            Err(_) => break,
        };
        if let Ok((name, reason)) = parse_refine_reply(&reply) {
            if let Ok(id) = name.parse::<DetectorId>() {
                if candidates.contains(&id) {
                    return (id, reason);
                }
            }
        }
        if attempt == 0 {
            // one corrective round-trip: restate the allowed set
            messages.push(corrective_refine_message(candidates));
        }
    }
    let candidate_scores: BTreeMap<DetectorId, f64> = candidates
        .iter()
        .map(|&id| (id, scores[&id]))
        .collect();
    let fallback = argmax_score(&candidate_scores).expect("non-empty candidates");
    (fallback, "symbolic fallback".to_string())
}

/// Runs the full pipeline: profile → tags → scores → candidates → choice.
/// Offline mode is a pure function of its inputs; LLM trouble never aborts a
/// selection, it degrades to the symbolic path.
pub fn select(
    data: &DataMatrix,
    labels: Option<&[u8]>,
    pool: &[DetectorId],
    registry: &Registry,
    config: &SelectorConfig,
    mut client: Option<&mut LlmClient>,
) -> Result<SelectionResult> {
    if pool.is_empty() {
        return Err(OdError::InvalidParam("selection pool is empty".into()));
    }
    for (i, id) in pool.iter().enumerate() {
        if pool[..i].contains(id) {
            return Err(OdError::InvalidParam(format!("pool repeats detector {id}")));
        }
        if registry.get(*id).is_none() {
            return Err(OdError::Registry(format!(
                "registry has no metadata for pool member {id}"
            )));
        }
    }
    for (tag, &w) in &config.tag_weights {
        if !(w > 0.0) || !w.is_finite() {
            return Err(OdError::InvalidParam(format!(
                "tag weight for {tag} must be positive and finite, got {w}"
            )));
        }
    }

    let prof = profile(data, labels);
    let notes = config.notes.as_deref();
    let tags = match (config.mode, client.as_deref_mut()) {
        (SelectorMode::Llm, Some(c)) => map_tags_llm(&prof, notes, c),
        _ => map_tags_rules(&prof),
    };

    let scores: BTreeMap<DetectorId, f64> = pool
        .iter()
        .map(|&id| {
            let meta = registry.get(id).expect("checked above");
            (id, score_model(meta, &tags, &config.tag_weights))
        })
        .collect();
    let candidates = candidate_set(&scores, config.delta);

    let (chosen, reason) = match (config.mode, client) {
        (SelectorMode::Llm, Some(c)) => {
            refine_llm(&candidates, registry, &scores, &tags, notes, c)
        }
        _ => {
            let candidate_scores: BTreeMap<DetectorId, f64> = candidates
                .iter()
                .map(|&id| (id, scores[&id]))
                .collect();
            let chosen = argmax_score(&candidate_scores).expect("non-empty candidates");
            (
                chosen,
                format!(
                    "offline argmax: S({chosen}) = {:.4} over {} candidate(s)",
                    scores[&chosen],
                    candidates.len()
                ),
            )
        }
    };

    Ok(SelectionResult {
        chosen,
        reason,
        scores,
        candidates,
        tags,
        mode: config.mode,
    })
}
