//! Trace manifests: the catalog of all residual units of one model run on
//! one dataset, split by split, with lazily loadable tensors.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{read_tensor, UnitTensor};
use crate::unit::{UnitId, UnitKind};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnitEntry {
    pub unit: UnitId,
    pub path: String,
    pub n_samples: usize,
}

/// Manifest JSON, paths relative to the manifest file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceManifest {
    pub model_name: String,
    pub n_layers: usize,
    pub heads_per_layer: usize,
    pub d_model: usize,
    pub d_head: usize,
    pub d_out: usize,
    pub splits: BTreeMap<String, Vec<UnitEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<BTreeMap<String, Vec<usize>>>,
}

impl TraceManifest {
    /// Number of units each split must list: one per head, one per MLP
    /// layer, the embedding, and the assembled output.
    pub fn units_per_split(&self) -> usize {
        self.n_layers * self.heads_per_layer + self.n_layers + 2
    }

    /// The full unit id set every split must carry.
    pub fn expected_units(&self) -> Vec<UnitId> {
        let mut ids = Vec::with_capacity(self.units_per_split());
        ids.push(UnitId::embed());
        for l in 0..self.n_layers as u32 {
            for h in 0..self.heads_per_layer as u32 {
                ids.push(UnitId::head(l, h));
            }
            ids.push(UnitId::mlp(l));
        }
        ids.push(UnitId::output());
        ids
    }

    pub fn head_units(&self) -> Vec<UnitId> {
        let mut ids = Vec::with_capacity(self.n_layers * self.heads_per_layer);
        for l in 0..self.n_layers as u32 {
            for h in 0..self.heads_per_layer as u32 {
                ids.push(UnitId::head(l, h));
            }
        }
        ids
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.heads_per_layer == 0 || self.d_out == 0 {
            return Err(Error::InvalidManifest(
                "n_layers, heads_per_layer and d_out must be positive".into(),
            ));
        }
        if self.d_head * self.heads_per_layer != self.d_model {
            return Err(Error::InvalidManifest(format!(
                "d_head * heads_per_layer = {} does not equal d_model = {}",
                self.d_head * self.heads_per_layer,
                self.d_model
            )));
        }
        if self.splits.is_empty() {
            return Err(Error::InvalidManifest("no splits".into()));
        }
        for (split, entries) in &self.splits {
            let mut seen: BTreeMap<UnitId, usize> = BTreeMap::new();
            for e in entries {
                e.unit.validate()?;
                if e.unit.is_head() && e.unit.index >= self.heads_per_layer as u32 {
                    return Err(Error::InvalidUnitId(format!(
                        "{} exceeds heads_per_layer {}",
                        e.unit, self.heads_per_layer
                    )));
                }
                if seen.insert(e.unit, e.n_samples).is_some() {
                    return Err(Error::UnexpectedUnit {
                        split: split.clone(),
                        unit: e.unit,
                    });
                }
            }
            for want in self.expected_units() {
                if !seen.contains_key(&want) {
                    return Err(Error::MissingUnit {
                        split: split.clone(),
                        unit: want,
                    });
                }
            }
            if entries.len() != self.units_per_split() {
                let extra = entries
                    .iter()
                    .find(|e| !self.expected_units().contains(&e.unit))
                    .map(|e| e.unit)
                    .unwrap_or_else(UnitId::output);
                return Err(Error::UnexpectedUnit {
                    split: split.clone(),
                    unit: extra,
                });
            }
            let n0 = entries[0].n_samples;
            if n0 == 0 {
                return Err(Error::InconsistentSampleCount {
                    split: split.clone(),
                    details: "n_samples must be >= 1".into(),
                });
            }
            if let Some(bad) = entries.iter().find(|e| e.n_samples != n0) {
                return Err(Error::InconsistentSampleCount {
                    split: split.clone(),
                    details: format!("{} has {} samples, expected {}", bad.unit, bad.n_samples, n0),
                });
            }
            if let Some(labels) = &self.labels {
                if let Some(l) = labels.get(split) {
                    if l.len() != n0 {
                        return Err(Error::InconsistentSampleCount {
                            split: split.clone(),
                            details: format!("{} labels for {} samples", l.len(), n0),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_samples(&self, split: &str) -> Result<usize> {
        self.splits
            .get(split)
            .map(|e| e[0].n_samples)
            .ok_or_else(|| Error::NoSuchSplit(split.to_string()))
    }
}

/// A validated manifest anchored at its directory, able to load tensors.
#[derive(Debug, Clone)]
pub struct Trace {
    pub manifest: TraceManifest,
    root: PathBuf,
}

/// All tensors of one split held in memory, plus its labels if present.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub units: BTreeMap<UnitId, UnitTensor>,
    pub labels: Option<Vec<usize>>,
    pub n_samples: usize,
    pub d_out: usize,
}

impl SplitData {
    pub fn unit(&self, id: UnitId) -> Result<&UnitTensor> {
        self.units.get(&id).ok_or(Error::MissingUnit {
            split: String::new(),
            unit: id,
        })
    }

    pub fn output(&self) -> Result<&UnitTensor> {
        self.unit(UnitId::output())
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("split has no labels".into()))
    }

    /// Every unit except the stored output, i.e. the actual contributors.
    pub fn contributors(&self) -> impl Iterator<Item = (&UnitId, &UnitTensor)> {
        self.units.iter().filter(|(id, _)| id.kind != UnitKind::Output)
    }

    pub fn heads(&self) -> impl Iterator<Item = (&UnitId, &UnitTensor)> {
        self.units.iter().filter(|(id, _)| id.is_head())
    }
}

impl Trace {
    /// Parses and validates a manifest; tensors are loaded on demand.
    pub fn load(manifest_path: &Path) -> Result<Trace> {
        let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let manifest: TraceManifest = serde_json::from_str(&text)?;
        manifest.validate()?;
        let root = manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .to_path_buf();
        Ok(Trace { manifest, root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn split_names(&self) -> impl Iterator<Item = &String> {
        self.manifest.splits.keys()
    }

    fn entry(&self, split: &str, unit: UnitId) -> Result<&UnitEntry> {
        let entries = self
            .manifest
            .splits
            .get(split)
            .ok_or_else(|| Error::NoSuchSplit(split.to_string()))?;
        entries
            .iter()
            .find(|e| e.unit == unit)
            .ok_or(Error::MissingUnit {
                split: split.to_string(),
                unit,
            })
    }

    /// Loads one unit tensor, checking its shape against the manifest.
    pub fn load_unit(&self, split: &str, unit: UnitId) -> Result<UnitTensor> {
        let entry = self.entry(split, unit)?;
        let t = read_tensor(&self.root.join(&entry.path), unit)?;
        if t.n_samples() != entry.n_samples {
            return Err(Error::InconsistentSampleCount {
                split: split.to_string(),
                details: format!(
                    "{}: file has {} samples, manifest says {}",
                    unit,
                    t.n_samples(),
                    entry.n_samples
                ),
            });
        }
        if t.dim() != self.manifest.d_out {
            return Err(Error::DimensionMismatch(format!(
                "{}: file has d={}, manifest d_out={}",
                unit,
                t.dim(),
                self.manifest.d_out
            )));
        }
        Ok(t)
    }

    pub fn load_split(&self, split: &str) -> Result<SplitData> {
        let entries = self
            .manifest
            .splits
            .get(split)
            .ok_or_else(|| Error::NoSuchSplit(split.to_string()))?;
        let mut units = BTreeMap::new();
        for e in entries {
            units.insert(e.unit, self.load_unit(split, e.unit)?);
        }
        let labels = self
            .manifest
            .labels
            .as_ref()
            .and_then(|m| m.get(split))
            .cloned();
        Ok(SplitData {
            n_samples: entries[0].n_samples,
            d_out: self.manifest.d_out,
            units,
            labels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::write_matrix;
    use crate::Mat64;
    use tempfile::tempdir;

    fn tiny_manifest(n_layers: usize, heads: usize) -> TraceManifest {
        let mut m = TraceManifest {
            model_name: "toy".into(),
            n_layers,
            heads_per_layer: heads,
            d_model: 4 * heads,
            d_head: 4,
            d_out: 8,
            splits: BTreeMap::new(),
            labels: None,
        };
        let entries: Vec<UnitEntry> = m
            .expected_units()
            .iter()
            .map(|&unit| UnitEntry {
                unit,
                path: format!("tensors/train/{}.rdt", unit.file_stem()),
                n_samples: 3,
            })
            .collect();
        m.splits.insert("train".into(), entries);
        m
    }

    #[test]
    fn unit_count_formula() {
        let m = tiny_manifest(2, 2);
        assert_eq!(m.units_per_split(), 2 * 2 + 2 + 2);
        assert!(m.validate().is_ok());
    }

    #[test]
    fn missing_mlp_is_rejected() {
        let mut m = tiny_manifest(2, 2);
        let entries = m.splits.get_mut("train").unwrap();
        entries.retain(|e| e.unit != UnitId::mlp(1));
        match m.validate() {
            Err(Error::MissingUnit { unit, .. }) => assert_eq!(unit, UnitId::mlp(1)),
            other => panic!("expected MissingUnit, got {other:?}"),
        }
    }

    #[test]
    fn mixed_sample_counts_rejected() {
        let mut m = tiny_manifest(1, 2);
        m.splits.get_mut("train").unwrap()[0].n_samples = 5;
        assert!(matches!(
            m.validate(),
            Err(Error::InconsistentSampleCount { .. })
        ));
    }

    #[test]
    fn duplicate_unit_rejected() {
        let mut m = tiny_manifest(1, 2);
        let dup = m.splits["train"][0].clone();
        m.splits.get_mut("train").unwrap().push(dup);
        assert!(matches!(m.validate(), Err(Error::UnexpectedUnit { .. })));
    }

    #[test]
    fn head_index_bounded_by_manifest() {
        let mut m = tiny_manifest(1, 2);
        // Swap a legal head for an out-of-range one.
        let entries = m.splits.get_mut("train").unwrap();
        let pos = entries
            .iter()
            .position(|e| e.unit == UnitId::head(0, 1))
            .unwrap();
        entries[pos].unit = UnitId::head(0, 9);
        assert!(m.validate().is_err());
    }

    #[test]
    fn load_split_roundtrip() {
        let dir = tempdir().unwrap();
        let m = tiny_manifest(1, 1);
        std::fs::create_dir_all(dir.path().join("tensors/train")).unwrap();
        for e in &m.splits["train"] {
            let mat = Mat64::from_fn(3, 8, |r, c| (r * 8 + c) as f64 * 0.5);
            write_matrix(&dir.path().join(&e.path), &mat).unwrap();
        }
        let mp = dir.path().join("manifest.json");
        std::fs::write(&mp, serde_json::to_string_pretty(&m).unwrap()).unwrap();
        let trace = Trace::load(&mp).unwrap();
        let split = trace.load_split("train").unwrap();
        assert_eq!(split.units.len(), 5);
        assert_eq!(split.n_samples, 3);
        assert_eq!(split.output().unwrap().dim(), 8);
    }

    #[test]
    fn wrong_dimension_on_disk_rejected() {
        let dir = tempdir().unwrap();
        let m = tiny_manifest(1, 1);
        std::fs::create_dir_all(dir.path().join("tensors/train")).unwrap();
        for e in &m.splits["train"] {
            write_matrix(&dir.path().join(&e.path), &Mat64::zeros(3, 7)).unwrap();
        }
        let mp = dir.path().join("manifest.json");
        std::fs::write(&mp, serde_json::to_string(&m).unwrap()).unwrap();
        let trace = Trace::load(&mp).unwrap();
        assert!(matches!(
            trace.load_unit("train", UnitId::embed()),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
