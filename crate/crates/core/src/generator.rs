//! Uniform random Max-kSAT instances and on-disk datasets.
//!
//! Each clause draws `k` distinct variables uniformly from `1..=n` (redrawing
//! on repeats, in draw order) and gives each an independent fair-coin
//! polarity. Instance `i` of a dataset with seed `s` uses the stream
//! seeded by [`derive_seed`]`(s, i)`.
//!
//! # Manifest format
//!
//! `manifest.txt` is line-delimited text. Header lines start with `#`:
//!
//! ```text
//! # maxsat-manifest 1
//! # spec k=2 n=20 m=120 seed=7
//! # count 10
//! # prng xoshiro256** seed-mix splitmix64
//! ```
//!
//! followed by one record per instance, fields separated by a single space:
//! `index seed path split`, where `seed` is the derived per-instance seed
//! in decimal, `path` is relative to the manifest's directory and `split`
//! is one of `train`, `val`, `test`.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::cnf::{parse_dimacs, write_dimacs, Clause, CnfFormula, Literal, ParseError};
use crate::rng::{derive_seed, Rng, PRNG_NAME, SEED_MIX_NAME};

pub const MANIFEST_FILE: &str = "manifest.txt";
const MANIFEST_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("manifest {path}, line {line}: {reason}")]
    Manifest { path: PathBuf, line: usize, reason: String },
    #[error("instance {path}: {source}")]
    Instance {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> GenError + '_ {
    move |source| GenError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenSpec {
    pub k: usize,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
}

impl GenSpec {
    pub fn new(k: usize, n: usize, m: usize, seed: u64) -> Result<Self, GenError> {
        let spec = GenSpec { k, n, m, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.k == 0 {
            return Err(GenError::InvalidSpec("k must be at least 1".into()));
        }
        if self.k > self.n {
            return Err(GenError::InvalidSpec(format!("k={} exceeds n={}", self.k, self.n)));
        }
        if self.m == 0 {
            return Err(GenError::InvalidSpec("m must be at least 1".into()));
        }
        if self.n > i32::MAX as usize {
            return Err(GenError::InvalidSpec("n too large".into()));
        }
        Ok(())
    }

    /// Short dataset label in the `R<k>(<n>,<m>)` style.
    pub fn label(&self) -> String {
        format!("R{}({},{})", self.k, self.n, self.m)
    }
}

/// Draw one uniform random k-CNF formula from `spec`.
pub fn generate_instance(spec: &GenSpec) -> Result<CnfFormula, GenError> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    Ok(sample_formula(spec.k, spec.n, spec.m, &mut rng))
}

fn sample_formula(k: usize, n: usize, m: usize, rng: &mut Rng) -> CnfFormula {
    let mut clauses = Vec::with_capacity(m);
    let mut vars: Vec<u32> = Vec::with_capacity(k);
    for _ in 0..m {
        vars.clear();
        while vars.len() < k {
            let v = rng.below(n as u64) as u32 + 1;
            if !vars.contains(&v) {
                vars.push(v);
            }
        }
        let literals = vars
            .iter()
            .map(|&v| Literal::new(v, rng.coin()).expect("var >= 1"))
            .collect();
        clauses.push(Clause::new(literals).expect("distinct variables"));
    }
    CnfFormula::new(n, clauses).expect("variables within range")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// Train/val/test sizes at 8:1:1; remainders go to test.
pub fn split_sizes(count: usize) -> (usize, usize, usize) {
    let train = count * 8 / 10;
    let val = count / 10;
    (train, val, count - train - val)
}

fn split_of(index: usize, count: usize) -> Split {
    let (train, val, _) = split_sizes(count);
    if index < train {
        Split::Train
    } else if index < train + val {
        Split::Val
    } else {
        Split::Test
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub index: usize,
    pub seed: u64,
    pub path: String,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub spec: GenSpec,
    pub entries: Vec<ManifestEntry>,
    /// Directory holding the manifest; entry paths are relative to it.
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn count(&self) -> usize {
        self.entries.len()
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn instance_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn split_counts(&self) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for e in &self.entries {
            match e.split {
                Split::Train => counts.0 += 1,
                Split::Val => counts.1 += 1,
                Split::Test => counts.2 += 1,
            }
        }
        counts
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# maxsat-manifest {MANIFEST_VERSION}\n"));
        out.push_str(&format!(
            "# spec k={} n={} m={} seed={}\n",
            self.spec.k, self.spec.n, self.spec.m, self.spec.seed
        ));
        out.push_str(&format!("# count {}\n", self.entries.len()));
        out.push_str(&format!("# prng {PRNG_NAME} seed-mix {SEED_MIX_NAME}\n"));
        for e in &self.entries {
            out.push_str(&format!("{} {} {} {}\n", e.index, e.seed, e.path, e.split));
        }
        out
    }

    /// Read `manifest.txt` from a file path or a dataset directory.
    pub fn load(path: &Path) -> Result<Self, GenError> {
        let file = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let text = fs::read_to_string(&file).map_err(io_err(&file))?;
        let root = file
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Self::parse(&text, &file, root)
    }

    fn parse(text: &str, file: &Path, root: PathBuf) -> Result<Self, GenError> {
        let bad = |line: usize, reason: String| GenError::Manifest {
            path: file.to_path_buf(),
            line,
            reason,
        };
        let mut version_seen = false;
        let mut spec: Option<GenSpec> = None;
        let mut declared_count: Option<usize> = None;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if let Some(header) = line.strip_prefix("# ") {
                let mut parts = header.split_whitespace();
                match parts.next() {
                    Some("maxsat-manifest") => {
                        let v = parts.next().unwrap_or("");
                        if v != MANIFEST_VERSION {
                            return Err(bad(line_no, format!("unsupported version `{v}`")));
                        }
                        version_seen = true;
                    }
                    Some("spec") => {
                        let mut k = None;
                        let mut n = None;
                        let mut m = None;
                        let mut seed = None;
                        for kv in parts {
                            let (key, value) = kv
                                .split_once('=')
                                .ok_or_else(|| bad(line_no, format!("bad field `{kv}`")))?;
                            match key {
                                "k" => k = value.parse().ok(),
                                "n" => n = value.parse().ok(),
                                "m" => m = value.parse().ok(),
                                "seed" => seed = value.parse().ok(),
                                _ => return Err(bad(line_no, format!("unknown key `{key}`"))),
                            }
                        }
                        match (k, n, m, seed) {
                            (Some(k), Some(n), Some(m), Some(seed)) => spec = Some(GenSpec { k, n, m, seed }),
                            _ => return Err(bad(line_no, "incomplete spec line".into())),
                        }
                    }
                    Some("count") => {
                        declared_count = parts.next().and_then(|c| c.parse().ok());
                        if declared_count.is_none() {
                            return Err(bad(line_no, "bad count".into()));
                        }
                    }
                    _ => {}
                }
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(' ').collect();
            if fields.len() != 4 {
                return Err(bad(line_no, "expected `index seed path split`".into()));
            }
            let index = fields[0].parse().map_err(|_| bad(line_no, "bad index".into()))?;
            let seed = fields[1].parse().map_err(|_| bad(line_no, "bad seed".into()))?;
            let split = fields[3].parse().map_err(|e: String| bad(line_no, e))?;
            entries.push(ManifestEntry {
                index,
                seed,
                path: fields[2].to_string(),
                split,
            });
        }
        if !version_seen {
            return Err(bad(1, "missing `# maxsat-manifest` header".into()));
        }
        let spec = spec.ok_or_else(|| bad(1, "missing `# spec` header".into()))?;
        if let Some(count) = declared_count {
            if count != entries.len() {
                return Err(bad(0, format!("count {count} but {} entries", entries.len())));
            }
        }
        let mut paths: Vec<&str> = entries.iter().map(|e| e.path.as_str()).collect();
        paths.sort_unstable();
        if paths.windows(2).any(|w| w[0] == w[1]) {
            return Err(bad(0, "duplicate instance path".into()));
        }
        Ok(DatasetManifest { spec, entries, root })
    }

    pub fn read_instance(&self, entry: &ManifestEntry) -> Result<CnfFormula, GenError> {
        let path = self.instance_path(entry);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        parse_dimacs(&text).map_err(|source| GenError::Instance { path, source })
    }
}

pub fn instance_file_name(index: usize) -> String {
    format!("inst_{index:05}.cnf")
}

/// Generate `count` instances into `out_dir` and write the manifest.
pub fn generate_dataset(spec: &GenSpec, count: usize, out_dir: &Path) -> Result<DatasetManifest, GenError> {
    spec.validate()?;
    if count == 0 {
        return Err(GenError::InvalidSpec("count must be at least 1".into()));
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let entries: Vec<ManifestEntry> = (0..count)
        .map(|index| ManifestEntry {
            index,
            seed: derive_seed(spec.seed, index as u64),
            path: instance_file_name(index),
            split: split_of(index, count),
        })
        .collect();
    entries.par_iter().try_for_each(|entry| {
        let instance_spec = GenSpec {
            seed: entry.seed,
            ..*spec
        };
        let formula = generate_instance(&instance_spec)?;
        let path = out_dir.join(&entry.path);
        fs::write(&path, write_dimacs(&formula)).map_err(io_err(&path))
    })?;
    let manifest = DatasetManifest {
        spec: *spec,
        entries,
        root: out_dir.to_path_buf(),
    };
    let path = manifest.manifest_path();
    fs::write(&path, manifest.render()).map_err(io_err(&path))?;
    Ok(manifest)
}
