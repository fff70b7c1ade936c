//! Training the PPN and ESN on synthetic crowds, and model checkpoints.

use anyhow::Context;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use zonowalk::data::{make_windows, synth_crowd_with, NamedDataset, WindowConfig};
use zonowalk::nets::train::{train_models, TrainConfig, TrainReport};
use zonowalk::nets::{Esn, Ppn};
use zonowalk::nn::{read_checkpoint, write_checkpoint};

use crate::config::DataConfig;
use crate::trial::Models;

/// One named dataset per synthetic scene, scene `i` seeded with `seed + i`.
pub fn synthetic_datasets(data: &DataConfig, seed: u64) -> Vec<NamedDataset> {
    (0..data.scenes as u64)
        .into_par_iter()
        .map(|i| {
            let records = synth_crowd_with(seed + i, data.agents, data.frames, &data.synth);
            NamedDataset {
                name: format!("synth{i}"),
                samples: make_windows(&records, &WindowConfig::default()),
            }
        })
        .collect()
}

/// Freshly initialised networks, seeded.
pub fn init_models(seed: u64) -> Models {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ppn = Ppn::new(&mut rng);
    let esn = Esn::new(&mut rng);
    Models { ppn, esn }
}

/// Trains on every dataset but `holdout`, evaluating on `holdout`.
pub fn train_on(
    datasets: &[NamedDataset],
    holdout: &str,
    cfg: &TrainConfig,
) -> anyhow::Result<(Models, TrainReport)> {
    let (train, test) = zonowalk::data::leave_one_out_split(datasets, holdout)?;
    log::info!("training on {} samples, {} held out ({holdout})", train.len(), test.len());
    let mut m = init_models(cfg.seed);
    let report = train_models(&mut m.ppn, &mut m.esn, &train, &test, cfg)?;
    Ok((m, report))
}

/// The default recipe: synthetic scenes, last scene held out.
pub fn train_synthetic(data: &DataConfig, cfg: &TrainConfig) -> anyhow::Result<(Models, TrainReport)> {
    anyhow::ensure!(data.scenes >= 2, "need at least two scenes (one is held out)");
    let datasets = synthetic_datasets(data, cfg.seed);
    let holdout = datasets.last().expect("scenes ≥ 2").name.clone();
    train_on(&datasets, &holdout, cfg)
}

impl Models {
    pub fn save(&self, path: impl AsRef<Path>) -> anyhow::Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_checkpoint(BufWriter::new(f), &[self.ppn.stack().to_named(), self.esn.stack().to_named()])?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let named = read_checkpoint(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))?;
        let find = |model: &str| {
            named
                .iter()
                .find(|n| n.model == model)
                .ok_or_else(|| anyhow::anyhow!("{} has no {model} model", path.display()))
        };
        Ok(Self {
            ppn: Ppn::from_named(find(Ppn::MODEL)?)?,
            esn: Esn::from_named(find(Esn::MODEL)?)?,
        })
    }
}

/// Loads `path` if it exists, otherwise trains the synthetic recipe and
/// saves the result there.
pub fn load_or_train(path: impl AsRef<Path>, data: &DataConfig, cfg: &TrainConfig) -> anyhow::Result<Models> {
    let path = path.as_ref();
    if path.exists() {
        return Models::load(path);
    }
    log::info!("{} not found, training the synthetic recipe", path.display());
    let (m, _) = train_synthetic(data, cfg)?;
    m.save(path)?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_roundtrip() {
        let m = init_models(3);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/models.ckpt");
        m.save(&p).unwrap();
        assert_eq!(Models::load(&p).unwrap(), m);
        std::fs::write(&p, "zonowalk-checkpoint 1\n").unwrap();
        assert!(Models::load(&p).is_err());
    }

    #[test]
    fn synthetic_scenes_are_seeded() {
        let data = DataConfig {
            scenes: 2,
            agents: 4,
            frames: 40,
            ..Default::default()
        };
        let a = synthetic_datasets(&data, 1);
        assert_eq!(a.len(), 2);
        assert!(!a[0].samples.is_empty());
        assert_eq!(a, synthetic_datasets(&data, 1));
        assert_ne!(a[0].samples, synthetic_datasets(&data, 2)[0].samples);
    }
}
