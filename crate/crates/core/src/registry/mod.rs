//! Model catalog: symbolic strengths/weaknesses per detector under a closed
//! tag vocabulary. Ships as an editable data file; user files may override or
//! extend the builtin metadata.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detector::DetectorId;
use crate::error::{OdError, Result};

/// Closed vocabulary of dataset/model condition tags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    HighDimensional,
    LowDimensional,
    SmallSample,
    LargeSample,
    Imbalanced,
    NoisyFeatures,
    HeavyTailed,
    Skewed,
    Multimodal,
    Sparse,
    CorrelatedFeatures,
    MixedScale,
    NearGaussian,
    LabeledAnomaliesAvailable,
    LocalAnomalies,
    GlobalAnomalies,
}

impl Tag {
    pub const ALL: [Tag; 16] = [
        Tag::HighDimensional,
        Tag::LowDimensional,
        Tag::SmallSample,
        Tag::LargeSample,
        Tag::Imbalanced,
        Tag::NoisyFeatures,
        Tag::HeavyTailed,
        Tag::Skewed,
        Tag::Multimodal,
        Tag::Sparse,
        Tag::CorrelatedFeatures,
        Tag::MixedScale,
        Tag::NearGaussian,
        Tag::LabeledAnomaliesAvailable,
        Tag::LocalAnomalies,
        Tag::GlobalAnomalies,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Tag::HighDimensional => "high_dimensional",
            Tag::LowDimensional => "low_dimensional",
            Tag::SmallSample => "small_sample",
            Tag::LargeSample => "large_sample",
            Tag::Imbalanced => "imbalanced",
            Tag::NoisyFeatures => "noisy_features",
            Tag::HeavyTailed => "heavy_tailed",
            Tag::Skewed => "skewed",
            Tag::Multimodal => "multimodal",
            Tag::Sparse => "sparse",
            Tag::CorrelatedFeatures => "correlated_features",
            Tag::MixedScale => "mixed_scale",
            Tag::NearGaussian => "near_gaussian",
            Tag::LabeledAnomaliesAvailable => "labeled_anomalies_available",
            Tag::LocalAnomalies => "local_anomalies",
            Tag::GlobalAnomalies => "global_anomalies",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = OdError;

    fn from_str(s: &str) -> Result<Tag> {
        Tag::ALL
            .iter()
            .find(|t| t.as_str() == s)
            .copied()
            .ok_or_else(|| {
                OdError::Registry(format!(
                    "unknown tag \"{s}\"; the vocabulary is: {}",
                    Tag::ALL.map(|t| t.as_str()).join(", ")
                ))
            })
    }
}

/// Symbolic description of one detector: where it helps and where it hurts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub id: DetectorId,
    pub strengths: Vec<Tag>,
    pub weaknesses: Vec<Tag>,
    #[serde(default)]
    pub notes: String,
}

impl ModelMetadata {
    fn validate(&self) -> Result<()> {
        for s in &self.strengths {
            if self.weaknesses.contains(s) {
                return Err(OdError::Registry(format!(
                    "model \"{}\" lists tag \"{s}\" as both strength and weakness",
                    self.id
                )));
            }
        }
        for list in [&self.strengths, &self.weaknesses] {
            for (i, t) in list.iter().enumerate() {
                if list[..i].contains(t) {
                    return Err(OdError::Registry(format!(
                        "model \"{}\" repeats tag \"{t}\"",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The catalog: metadata for every detector, keyed by id (stable order).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Registry {
    models: BTreeMap<DetectorId, ModelMetadata>,
}

/// On-disk schema: `{"version": 1, "models": [...]}`.
#[derive(Serialize, Deserialize)]
struct RegistryFile {
    version: u32,
    models: Vec<ModelMetadata>,
}

const BUILTIN_JSON: &str = include_str!("builtin.json");

/// The shipped default metadata, parsed from an embedded data file.
pub fn builtin_registry() -> Registry {
    parse_registry(BUILTIN_JSON).expect("embedded registry data is valid")
}

/// Parses registry JSON. A file covering only some detectors is accepted as a
/// partial overlay; use [`Registry::merge_over_builtin`] to complete it.
pub fn parse_registry(json: &str) -> Result<Registry> {
    let file: RegistryFile = serde_json::from_str(json).map_err(|e| {
        OdError::Registry(format!("registry JSON does not match the schema: {e}"))
    })?;
    if file.version != 1 {
        return Err(OdError::Registry(format!(
            "unsupported registry version {}, expected 1",
            file.version
        )));
    }
    let mut models = BTreeMap::new();
    for meta in file.models {
        meta.validate()?;
        if models.insert(meta.id, meta.clone()).is_some() {
            return Err(OdError::Registry(format!(
                "duplicate model id \"{}\"",
                meta.id
            )));
        }
    }
    Ok(Registry { models })
}

/// Loads a registry file and merges it over the builtin defaults, so partial
/// files only override the models they mention.
pub fn load_registry(path: &Path) -> Result<Registry> {
    let text = std::fs::read_to_string(path)?;
    let overlay = parse_registry(&text)?;
    Ok(overlay.merge_over_builtin())
}

/// Saves with stable key order so files diff cleanly.
pub fn save_registry(registry: &Registry, path: &Path) -> Result<()> {
    let file = RegistryFile {
        version: 1,
        models: registry.models.values().cloned().collect(),
    };
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

impl Registry {
    /// Metadata for one detector, if present.
    pub fn get(&self, id: DetectorId) -> Option<&ModelMetadata> {
        self.models.get(&id)
    }

    /// All metadata in stable id order.
    pub fn iter(&self) -> impl Iterator<Item = &ModelMetadata> {
        self.models.values()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Completes a partial registry with builtin entries for any detector it
    /// does not mention. The result is total over all detectors.
    pub fn merge_over_builtin(self) -> Registry {
        let mut merged = builtin_registry().models;
        for (id, meta) in self.models {
            merged.insert(id, meta);
        }
        Registry { models: merged }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_covers_all_nine_detectors() {
        let reg = builtin_registry();
        assert_eq!(reg.len(), DetectorId::ALL.len());
        for id in DetectorId::ALL {
            assert!(reg.get(id).is_some(), "missing metadata for {id}");
        }
    }

    #[test]
    fn builtin_sample_entries_match_shipped_data() {
        let reg = builtin_registry();
        let ae = reg.get(DetectorId::Ae).unwrap();
        assert!(ae.strengths.contains(&Tag::HighDimensional));
        assert!(ae.strengths.contains(&Tag::CorrelatedFeatures));
        assert!(ae.weaknesses.contains(&Tag::SmallSample));
        let devnet = reg.get(DetectorId::Devnet).unwrap();
        assert!(devnet.strengths.contains(&Tag::LabeledAnomaliesAvailable));
        let iforest = reg.get(DetectorId::Iforest).unwrap();
        assert_eq!(iforest.strengths.len(), 3);
    }

    #[test]
    fn no_tag_in_both_sets() {
        for meta in builtin_registry().iter() {
            for s in &meta.strengths {
                assert!(
                    !meta.weaknesses.contains(s),
                    "{}: {s} in both sets",
                    meta.id
                );
            }
        }
    }

    #[test]
    fn tag_round_trip_and_vocabulary_close() {
        for t in Tag::ALL {
            assert_eq!(t.as_str().parse::<Tag>().unwrap(), t);
        }
        let err = "huge_data".parse::<Tag>().unwrap_err();
        assert!(err.to_string().contains("huge_data"), "{err}");
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("registry.json");
        let reg = builtin_registry();
        save_registry(&reg, &path).unwrap();
        let back = load_registry(&path).unwrap();
        assert_eq!(reg, back);
    }

    #[test]
    fn unknown_tag_is_rejected_with_its_name() {
        let json = r#"{"version":1,"models":[
            {"id":"knn","strengths":["huge_data"],"weaknesses":[],"notes":""}
        ]}"#;
        let err = parse_registry(json).unwrap_err();
        assert!(err.to_string().contains("huge_data"), "{err}");
    }

    #[test]
    fn unknown_id_is_rejected() {
        let json = r#"{"version":1,"models":[
            {"id":"svm","strengths":[],"weaknesses":[],"notes":""}
        ]}"#;
        assert!(parse_registry(json).is_err());
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let json = r#"{"version":1,"models":[
            {"id":"knn","strengths":[],"weaknesses":[],"notes":""},
            {"id":"knn","strengths":[],"weaknesses":[],"notes":""}
        ]}"#;
        let err = parse_registry(json).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn tag_in_both_sets_is_rejected() {
        let json = r#"{"version":1,"models":[
            {"id":"knn","strengths":["skewed"],"weaknesses":["skewed"],"notes":""}
        ]}"#;
        let err = parse_registry(json).unwrap_err();
        assert!(err.to_string().contains("both"), "{err}");
    }

    #[test]
    fn partial_file_merges_over_builtin() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("partial.json");
        std::fs::write(
            &path,
            r#"{"version":1,"models":[
                {"id":"knn","strengths":["sparse"],"weaknesses":[],"notes":"override"}
            ]}"#,
        )
        .unwrap();
        let reg = load_registry(&path).unwrap();
        assert_eq!(reg.len(), DetectorId::ALL.len(), "merge must stay total");
        let knn = reg.get(DetectorId::Knn).unwrap();
        assert_eq!(knn.strengths, vec![Tag::Sparse]);
        assert_eq!(knn.notes, "override");
        // untouched models keep builtin metadata
        let lof = reg.get(DetectorId::Lof).unwrap();
        assert!(lof.strengths.contains(&Tag::LocalAnomalies));
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let json = r#"{"version":2,"models":[]}"#;
        let err = parse_registry(json).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn serialization_is_stable_under_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.json");
        let p2 = dir.path().join("b.json");
        let reg = builtin_registry();
        save_registry(&reg, &p1).unwrap();
        save_registry(&load_registry(&p1).unwrap(), &p2).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p1).unwrap(),
            std::fs::read_to_string(&p2).unwrap()
        );
    }
}
