//! Dataset manifests: a CSV file with the columns `class,visual,thermal,split`.
//!
//! Relative image paths are resolved against the manifest's directory. The
//! split column holds `train`, `test`, or is left empty for samples that have
//! not been assigned yet (as produced by [`build_manifest`]).

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Unassigned,
}

impl Split {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            "" => Some(Split::Unassigned),
            _ => None,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Unassigned => "",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Unassigned => "unassigned",
            s => s.as_str(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// 1-based index into [`DatasetManifest::classes`].
    pub label: usize,
    pub visual: PathBuf,
    pub thermal: PathBuf,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub classes: Vec<String>,
    pub samples: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    class: String,
    visual: String,
    thermal: String,
    #[serde(default)]
    split: String,
}

impl DatasetManifest {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn with_split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    /// Parses a manifest without checking that it is runnable. Class labels
    /// follow the order in which class names first appear.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base, path)
    }

    fn parse(text: &str, base: &Path, origin: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let parse_err = |line: u64, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: line as usize,
            message,
        };
        let headers = reader
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .clone();
        for col in ["class", "visual", "thermal"] {
            if !headers.iter().any(|h| h == col) {
                return Err(parse_err(1, format!("missing column `{col}`")));
            }
        }

        let mut manifest = DatasetManifest {
            classes: Vec::new(),
            samples: Vec::new(),
        };
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                parse_err(line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let row: Row = record
                .deserialize(Some(&headers))
                .map_err(|e| parse_err(line, e.to_string()))?;
            if row.class.is_empty() {
                return Err(parse_err(line, "empty class name".into()));
            }
            let split = Split::parse(&row.split).ok_or_else(|| {
                parse_err(line, format!("split must be train, test or empty, got {:?}", row.split))
            })?;
            let label = match manifest.classes.iter().position(|c| *c == row.class) {
                Some(i) => i + 1,
                None => {
                    manifest.classes.push(row.class);
                    manifest.classes.len()
                }
            };
            manifest.samples.push(ManifestEntry {
                label,
                visual: base.join(row.visual),
                thermal: base.join(row.thermal),
                split,
            });
        }
        Ok(manifest)
    }

    /// Every problem found, in file order: missing or repeated image paths,
    /// and (when `runnable`) classes without train or test samples or with
    /// unassigned ones.
    pub fn problems(&self, runnable: bool) -> Vec<String> {
        let mut problems = Vec::new();
        if self.samples.is_empty() {
            problems.push("manifest lists no samples".to_string());
        }
        let mut seen = HashSet::new();
        for (i, s) in self.samples.iter().enumerate() {
            for (kind, p) in [("visual", &s.visual), ("thermal", &s.thermal)] {
                if !seen.insert(p.clone()) {
                    problems.push(format!("sample {}: {kind} path {} is repeated", i + 1, p.display()));
                }
                if !p.is_file() {
                    problems.push(format!("sample {}: {kind} image {} not found", i + 1, p.display()));
                }
            }
        }
        if runnable {
            for (c, name) in self.classes.iter().enumerate() {
                let count = |split| {
                    self.samples
                        .iter()
                        .filter(|s| s.label == c + 1 && s.split == split)
                        .count()
                };
                for split in [Split::Train, Split::Test] {
                    if count(split) == 0 {
                        problems.push(format!("class {name:?} has no {split} samples"));
                    }
                }
                if count(Split::Unassigned) > 0 {
                    problems.push(format!("class {name:?} has samples without a split"));
                }
            }
        }
        problems
    }

    /// Writes the manifest, storing paths relative to the target directory
    /// where possible.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        let rel = |p: &Path| {
            p.strip_prefix(base)
                .unwrap_or(p)
                .to_string_lossy()
                .into_owned()
        };
        let mut writer = csv::Writer::from_writer(Vec::new());
        for s in &self.samples {
            writer
                .serialize(Row {
                    class: self.classes[s.label - 1].clone(),
                    visual: rel(&s.visual),
                    thermal: rel(&s.thermal),
                    split: s.split.as_str().to_string(),
                })
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

/// Reads a manifest and checks that it describes a runnable experiment.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let manifest = DatasetManifest::read(path)?;
    let problems = manifest.problems(true);
    if problems.is_empty() {
        Ok(manifest)
    } else {
        Err(Error::Validation(problems))
    }
}

/// Builds an unsplit manifest from a directory with one subfolder per class,
/// each holding `visual/` and `thermal/` folders whose files pair up by name.
/// Classes and files are taken in sorted order.
pub fn build_manifest(root: impl AsRef<Path>) -> Result<DatasetManifest> {
    let root = root.as_ref();
    let mut manifest = DatasetManifest {
        classes: Vec::new(),
        samples: Vec::new(),
    };
    let mut problems = Vec::new();
    for class_dir in sorted_entries(root, true)? {
        let name = class_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let visual = list_files(&class_dir.join("visual"))?;
        let thermal = list_files(&class_dir.join("thermal"))?;
        let thermal_names: HashSet<_> = thermal.iter().map(|p| p.file_name()).collect();
        let visual_names: HashSet<_> = visual.iter().map(|p| p.file_name()).collect();
        for p in visual.iter().filter(|p| !thermal_names.contains(&p.file_name())) {
            problems.push(format!("{}: no thermal counterpart", p.display()));
        }
        for p in thermal.iter().filter(|p| !visual_names.contains(&p.file_name())) {
            problems.push(format!("{}: no visual counterpart", p.display()));
        }
        let pairs: Vec<_> = visual
            .iter()
            .filter(|p| thermal_names.contains(&p.file_name()))
            .collect();
        if pairs.is_empty() {
            continue;
        }
        manifest.classes.push(name);
        let label = manifest.classes.len();
        for v in pairs {
            let file = v.file_name().unwrap_or_default();
            manifest.samples.push(ManifestEntry {
                label,
                visual: v.clone(),
                thermal: class_dir.join("thermal").join(file),
                split: Split::Unassigned,
            });
        }
    }
    if manifest.classes.is_empty() {
        problems.push(format!("{}: no class folder with paired images", root.display()));
    }
    if problems.is_empty() {
        Ok(manifest)
    } else {
        Err(Error::Validation(problems))
    }
}

fn sorted_entries(dir: &Path, dirs: bool) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() == dirs {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.is_dir() {
        sorted_entries(dir, false)
    } else {
        Ok(Vec::new())
    }
}

/// Tags `per_class_train` samples of every class as training data and the
/// rest as test data, after a seeded shuffle within each class.
pub fn split(manifest: &DatasetManifest, per_class_train: usize, seed: u64) -> Result<DatasetManifest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = manifest.clone();
    let mut problems = Vec::new();
    if per_class_train == 0 {
        problems.push("per_class_train must be at least 1".to_string());
    }
    for (c, name) in manifest.classes.iter().enumerate() {
        let mut idx: Vec<usize> = (0..manifest.samples.len())
            .filter(|&i| manifest.samples[i].label == c + 1)
            .collect();
        if idx.len() <= per_class_train {
            problems.push(format!(
                "class {name:?} has {} samples, needs more than {per_class_train}",
                idx.len()
            ));
            continue;
        }
        idx.shuffle(&mut rng);
        for (rank, &i) in idx.iter().enumerate() {
            out.samples[i].split = if rank < per_class_train {
                Split::Train
            } else {
                Split::Test
            };
        }
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(Error::Validation(problems))
    }
}
