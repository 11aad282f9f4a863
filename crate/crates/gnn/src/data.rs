//! Labeled instances loaded from a dataset directory.

use std::path::{Path, PathBuf};

use maxsat_core::exact::{check_witness, label_path, read_labels, solve_branch_bound, LabelRecord, SolveError};
use maxsat_core::generator::{DatasetManifest, GenError, Split};
use maxsat_core::{Assignment, CnfFormula};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Dataset(#[from] GenError),
    #[error(transparent)]
    Labels(#[from] SolveError),
    #[error("{path}: instance `{instance}` has no label (run `label` first)")]
    Unlabeled { path: PathBuf, instance: String },
    #[error("{path}: label for `{instance}` does not fit the instance")]
    LabelShape { path: PathBuf, instance: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledInstance {
    /// Position in the dataset; also keys the per-instance evaluation seed.
    pub index: usize,
    pub split: Split,
    pub name: String,
    pub formula: CnfFormula,
    pub optimum: usize,
    pub witness: Assignment,
}

impl LabeledInstance {
    /// Label an in-memory formula with the exact solver.
    pub fn solve(index: usize, split: Split, name: impl Into<String>, formula: CnfFormula) -> Self {
        let opt = solve_branch_bound(&formula);
        LabeledInstance {
            index,
            split,
            name: name.into(),
            formula,
            optimum: opt.optimum,
            witness: opt.witness,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    /// Short description such as `R2(20,120)`.
    pub name: String,
    pub instances: Vec<LabeledInstance>,
}

impl LabeledDataset {
    /// Read a manifest (file or directory) together with its `labels.txt`.
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let manifest = DatasetManifest::load(path)?;
        let labels_file = label_path(&manifest);
        if !labels_file.exists() {
            return Err(DataError::Unlabeled {
                path: labels_file,
                instance: manifest.entries.first().map(|e| e.path.clone()).unwrap_or_default(),
            });
        }
        let labels = read_labels(&labels_file)?;
        let by_path: std::collections::HashMap<&str, &LabelRecord> =
            labels.iter().map(|r| (r.path.as_str(), r)).collect();
        let instances = manifest
            .entries
            .par_iter()
            .map(|entry| {
                let record = by_path.get(entry.path.as_str()).ok_or_else(|| DataError::Unlabeled {
                    path: labels_file.clone(),
                    instance: entry.path.clone(),
                })?;
                let formula = manifest.read_instance(entry)?;
                if record.witness.len() != formula.num_vars() {
                    return Err(DataError::LabelShape {
                        path: labels_file.clone(),
                        instance: entry.path.clone(),
                    });
                }
                check_witness(&formula, record)?;
                Ok(LabeledInstance {
                    index: entry.index,
                    split: entry.split,
                    name: entry.path.clone(),
                    formula,
                    optimum: record.optimum,
                    witness: record.witness.clone(),
                })
            })
            .collect::<Result<Vec<_>, DataError>>()?;
        Ok(LabeledDataset {
            name: manifest.spec.label(),
            instances,
        })
    }

    pub fn split(&self, split: Split) -> Vec<LabeledInstance> {
        self.instances.iter().filter(|i| i.split == split).cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use maxsat_core::exact::label_dataset;
    use maxsat_core::generator::{generate_dataset, GenSpec};

    #[test]
    fn load_requires_labels() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GenSpec::new(2, 6, 12, 3).unwrap();
        let manifest = generate_dataset(&spec, 10, dir.path()).unwrap();
        assert!(matches!(
            LabeledDataset::load(dir.path()),
            Err(DataError::Unlabeled { .. })
        ));
        label_dataset(&manifest).unwrap();
        let ds = LabeledDataset::load(dir.path()).unwrap();
        assert_eq!(ds.len(), 10);
        assert_eq!(ds.name, "R2(6,12)");
        assert_eq!(ds.split(Split::Train).len(), 8);
        for inst in &ds.instances {
            assert_eq!(inst.formula.eval(&inst.witness).unwrap().satisfied, inst.optimum);
        }
    }

    #[test]
    fn tampered_label_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_dataset(&GenSpec::new(3, 5, 30, 8).unwrap(), 4, dir.path()).unwrap();
        let records = label_dataset(&manifest).unwrap();
        let mut text = String::new();
        for (i, r) in records.iter().enumerate() {
            let optimum = if i == 2 { r.optimum + 1 } else { r.optimum };
            text.push_str(&format!("{} {} {}\n", r.path, optimum, r.witness.to_bits()));
        }
        std::fs::write(label_path(&manifest), text).unwrap();
        assert!(matches!(LabeledDataset::load(dir.path()), Err(DataError::Labels(_))));
    }
}
