use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_io::{mix_at_snr, read_wav, resample, MixturePair};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub pairs: Vec<MixturePair>,
    pub split: Split,
}

impl Dataset {
    pub fn new(pairs: Vec<MixturePair>, split: Split) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::NoData("dataset has no pairs".into()));
        }
        Ok(Dataset { pairs, split })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// `.wav` files in `dir`, sorted by name.
pub fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_wav = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if is_wav && path.is_file() {
            files.push(path);
        }
    }
    if files.is_empty() {
        return Err(Error::NoData(format!("no .wav files in {}", dir.display())));
    }
    files.sort();
    Ok(files)
}

/// Shuffles both file lists with `seed`, pairs them up to the shorter
/// length, resamples to `sample_rate` and mixes each pair at `snr_db`.
pub fn build_dataset(
    target_dir: &Path,
    interference_dir: &Path,
    snr_db: f64,
    seed: u64,
    sample_rate: u32,
    split: Split,
) -> Result<Dataset> {
    let mut targets = list_wavs(target_dir)?;
    let mut interferers = list_wavs(interference_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    targets.shuffle(&mut rng);
    interferers.shuffle(&mut rng);
    let pairs = targets
        .iter()
        .zip(&interferers)
        .map(|(t, i)| {
            let t = resample(&read_wav(t)?, sample_rate)?;
            let i = resample(&read_wav(i)?, sample_rate)?;
            mix_at_snr(&t, &i, snr_db)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(pairs, split)
}
