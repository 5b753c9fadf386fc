//! Train/test partitions: seeded two-fold cross validation or an explicit
//! split file.
//!
//! Split files hold one `name,fold` pair per line. `fold` is an integer
//! (images held out by that fold's model) or `train` / `test`.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Assignment {
    /// Held out by model `k` and evaluated with it; every other model may
    /// train on it.
    Held(usize),
    /// Training-only image (provided splits).
    TrainOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FoldMode {
    TwoFold,
    Provided,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldSplit {
    pub mode: FoldMode,
    pub entries: Vec<(String, Assignment)>,
}

impl FoldSplit {
    pub fn n_models(&self) -> usize {
        self.entries
            .iter()
            .filter_map(|(_, a)| match a {
                Assignment::Held(k) => Some(k + 1),
                Assignment::TrainOnly => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn assignment(&self, name: &str) -> Option<Assignment> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, a)| *a)
    }

    /// Images model `k` may train on.
    pub fn train_set(&self, k: usize) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, a)| *a != Assignment::Held(k))
            .map(|(n, _)| n.as_str())
            .collect()
    }

    /// Images model `k` is evaluated on.
    pub fn test_set(&self, k: usize) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, a)| *a == Assignment::Held(k))
            .map(|(n, _)| n.as_str())
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (name, a) in &self.entries {
            let tag = match (self.mode, a) {
                (_, Assignment::TrainOnly) => "train".to_string(),
                (FoldMode::Provided, Assignment::Held(0)) => "test".to_string(),
                (_, Assignment::Held(k)) => k.to_string(),
            };
            s.push_str(&format!("{name},{tag}\n"));
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            msg: format!("line {line}: {msg}"),
        };
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        let mut named_tags = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, tag) = line
                .split_once(',')
                .ok_or_else(|| perr(idx + 1, format!("expected `name,fold`, got `{line}`")))?;
            let (name, tag) = (name.trim(), tag.trim());
            if idx == 0 && name == "name" && tag == "fold" {
                continue;
            }
            let a = match tag {
                "train" => {
                    named_tags = true;
                    Assignment::TrainOnly
                }
                "test" => {
                    named_tags = true;
                    Assignment::Held(0)
                }
                k => Assignment::Held(
                    k.parse()
                        .map_err(|_| perr(idx + 1, format!("fold `{k}` is not an integer, train or test")))?,
                ),
            };
            if !seen.insert(name.to_string()) {
                return Err(Error::DuplicateName(name.to_string()));
            }
            entries.push((name.to_string(), a));
        }
        Ok(Self {
            mode: if named_tags {
                FoldMode::Provided
            } else {
                FoldMode::TwoFold
            },
            entries,
        })
    }
}

/// Seeded two-fold partition: names are shuffled, the first half becomes
/// fold 0 and the rest fold 1. Output keeps the input name order.
pub fn make_two_fold(names: &[String], seed: u64) -> Result<FoldSplit> {
    if names.len() < 2 {
        return Err(Error::invalid("make_folds", format!("two-fold split needs >= 2 images, got {}", names.len())));
    }
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(Error::DuplicateName(n.clone()));
        }
    }
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let half = names.len().div_ceil(2);
    let mut fold = vec![0; names.len()];
    for &i in &order[half..] {
        fold[i] = 1;
    }
    Ok(FoldSplit {
        mode: FoldMode::TwoFold,
        entries: names
            .iter()
            .zip(fold)
            .map(|(n, k)| (n.clone(), Assignment::Held(k)))
            .collect(),
    })
}
