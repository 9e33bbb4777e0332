use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::format::{read_embeddings, write_embeddings, EmbeddingMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Validation(format!(
                "split must be `train` or `test`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestSource {
    pub name: String,
    pub path: PathBuf,
    pub depths: usize,
    pub dim: usize,
}

/// JSON index tying per-backbone embedding files, labels and class names
/// together. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub sources: Vec<ManifestSource>,
    pub labels_path: PathBuf,
    pub class_names: Vec<String>,
    pub split: Split,
    /// Scale every depth vector to unit L2 norm before fusion.
    #[serde(default)]
    pub l2_normalize: bool,
}

/// Row-aligned embeddings from several backbones plus integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    sources: Vec<EmbeddingMatrix>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    split: Split,
    l2_normalize: bool,
}

impl DatasetBundle {
    pub fn new(
        sources: Vec<EmbeddingMatrix>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        split: Split,
    ) -> Result<Self> {
        let bundle = DatasetBundle {
            sources,
            labels,
            class_names,
            split,
            l2_normalize: false,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn with_l2_normalize(mut self, on: bool) -> Self {
        self.l2_normalize = on;
        self
    }

    pub fn sources(&self) -> &[EmbeddingMatrix] {
        &self.sources
    }

    pub fn source(&self, name: &str) -> Option<&EmbeddingMatrix> {
        self.sources.iter().find(|s| s.source_name() == name)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn l2_normalize(&self) -> bool {
        self.l2_normalize
    }

    fn validate(&self) -> Result<()> {
        let first = self
            .sources
            .first()
            .ok_or_else(|| Error::Validation("bundle has no sources".into()))?;
        for s in &self.sources[1..] {
            if s.n_rows() != first.n_rows() {
                return Err(Error::Alignment {
                    first: first.source_name().to_owned(),
                    first_rows: first.n_rows(),
                    other: s.source_name().to_owned(),
                    other_rows: s.n_rows(),
                });
            }
        }
        for (i, s) in self.sources.iter().enumerate() {
            if self.sources[..i]
                .iter()
                .any(|o| o.source_name() == s.source_name())
            {
                return Err(Error::Validation(format!(
                    "source `{}` listed twice",
                    s.source_name()
                )));
            }
        }
        if self.labels.len() != first.n_rows() {
            return Err(Error::Alignment {
                first: first.source_name().to_owned(),
                first_rows: first.n_rows(),
                other: "labels".into(),
                other_rows: self.labels.len(),
            });
        }
        let n_classes = self.class_names.len();
        if n_classes < 2 {
            return Err(Error::Validation(format!(
                "at least 2 classes are required, got {n_classes}"
            )));
        }
        for (row, &label) in self.labels.iter().enumerate() {
            if label >= n_classes {
                return Err(Error::LabelRange {
                    row,
                    label,
                    n_classes,
                });
            }
        }
        if self.split == Split::Train {
            let mut seen = vec![false; n_classes];
            for &l in &self.labels {
                seen[l] = true;
            }
            if let Some(c) = seen.iter().position(|s| !s) {
                return Err(Error::Validation(format!(
                    "class {c} (`{}`) never appears in the train split",
                    self.class_names[c]
                )));
            }
        }
        Ok(())
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads and cross-checks every file referenced by a manifest.
pub fn load_bundle(manifest_path: &Path) -> Result<DatasetBundle> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new(""));
    let mut sources = Vec::with_capacity(manifest.sources.len());
    for entry in &manifest.sources {
        let path = base.join(&entry.path);
        let m = read_embeddings(&path)?;
        if m.source_name() != entry.name {
            return Err(Error::Validation(format!(
                "{} holds source `{}` but the manifest names it `{}`",
                path.display(),
                m.source_name(),
                entry.name
            )));
        }
        if m.n_depths() != entry.depths || m.dim() != entry.dim {
            return Err(Error::Validation(format!(
                "source `{}` declared as {}x{} but file holds {}x{}",
                entry.name,
                entry.depths,
                entry.dim,
                m.n_depths(),
                m.dim()
            )));
        }
        sources.push(m);
    }
    let labels_path = base.join(&manifest.labels_path);
    let labels = read_labels(&labels_path)?;
    Ok(DatasetBundle::new(sources, labels, manifest.class_names, manifest.split)?
        .with_l2_normalize(manifest.l2_normalize))
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<usize>().map_err(|_| {
                Error::Validation(format!(
                    "{}:{}: `{}` is not a non-negative integer label",
                    path.display(),
                    i + 1,
                    l.trim()
                ))
            })
        })
        .collect()
}

pub fn write_labels(labels: &[usize], path: &Path) -> Result<()> {
    let mut text = String::with_capacity(labels.len() * 3);
    for l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `<prefix>_<source>.llme`, `<prefix>_labels.txt` and
/// `<prefix>.manifest.json` into `dir`, returning the manifest path.
pub fn write_bundle(bundle: &DatasetBundle, dir: &Path, prefix: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut sources = Vec::new();
    for s in bundle.sources() {
        let file = PathBuf::from(format!("{prefix}_{}.llme", s.source_name()));
        write_embeddings(s, &dir.join(&file))?;
        sources.push(ManifestSource {
            name: s.source_name().to_owned(),
            path: file,
            depths: s.n_depths(),
            dim: s.dim(),
        });
    }
    let labels_path = PathBuf::from(format!("{prefix}_labels.txt"));
    write_labels(bundle.labels(), &dir.join(&labels_path))?;
    let manifest = Manifest {
        sources,
        labels_path,
        class_names: bundle.class_names().to_vec(),
        split: bundle.split(),
        l2_normalize: bundle.l2_normalize(),
    };
    let path = dir.join(format!("{prefix}.manifest.json"));
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(name: &str, rows: usize) -> EmbeddingMatrix {
        EmbeddingMatrix::new(name, rows, 1, 2, vec![1.0; rows * 2]).unwrap()
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn row_mismatch_names_both_counts() {
        let err = DatasetBundle::new(
            vec![matrix("llama2", 100), matrix("bert", 99)],
            vec![0; 100],
            names(2),
            Split::Test,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert_eq!(err.code(), "alignment");
        assert!(msg.contains("100") && msg.contains("99"), "{msg}");
    }

    #[test]
    fn label_equal_to_class_count_is_out_of_range() {
        let err = DatasetBundle::new(
            vec![matrix("llama2", 3)],
            vec![0, 1, 2],
            names(2),
            Split::Test,
        )
        .unwrap_err();
        assert!(matches!(err, Error::LabelRange { label: 2, n_classes: 2, .. }));
    }

    #[test]
    fn train_split_needs_every_class() {
        let err = DatasetBundle::new(
            vec![matrix("llama2", 3)],
            vec![0, 0, 2],
            names(3),
            Split::Train,
        )
        .unwrap_err();
        assert_eq!(err.code(), "validation");
        // the same labels are fine for a test split
        DatasetBundle::new(vec![matrix("llama2", 3)], vec![0, 0, 2], names(3), Split::Test)
            .unwrap();
    }

    #[test]
    fn manifest_round_trip_keeps_source_order() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = DatasetBundle::new(
            vec![matrix("roberta", 4), matrix("llama2", 4), matrix("bert", 4)],
            vec![0, 1, 1, 0],
            names(2),
            Split::Train,
        )
        .unwrap();
        let path = write_bundle(&bundle, dir.path(), "train").unwrap();
        let loaded = load_bundle(&path).unwrap();
        let order: Vec<_> = loaded.sources().iter().map(|s| s.source_name()).collect();
        assert_eq!(order, ["roberta", "llama2", "bert"]);
        assert_eq!(loaded, bundle);
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let bundle =
            DatasetBundle::new(vec![matrix("bert", 2)], vec![0, 1], names(2), Split::Train)
                .unwrap();
        let path = write_bundle(&bundle, dir.path(), "x").unwrap();
        fs::remove_file(dir.path().join("x_bert.llme")).unwrap();
        assert_eq!(load_bundle(&path).unwrap_err().code(), "io");
    }

    #[test]
    fn declared_dims_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        let bundle =
            DatasetBundle::new(vec![matrix("bert", 2)], vec![0, 1], names(2), Split::Train)
                .unwrap();
        let path = write_bundle(&bundle, dir.path(), "x").unwrap();
        let mut manifest = read_manifest(&path).unwrap();
        manifest.sources[0].dim = 3;
        fs::write(&path, serde_json::to_string(&manifest).unwrap()).unwrap();
        assert_eq!(load_bundle(&path).unwrap_err().code(), "validation");
    }
}
