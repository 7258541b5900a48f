use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{
    apply_perturbation, derive_seed, GrayImage, PerturbationSpec, PerturbationType, MAX_LEVEL,
};
use crate::error::{Error, Result};
use crate::idx::{IdxImages, IdxLabels, IdxWriter, CLEAN_SENTINEL, FLAG_CLEAN, FLAG_PERTURBED};

/// Originals processed per parallel batch before their outputs are written.
const BATCH: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GenerateMode {
    /// Each original followed by one randomly chosen perturbation of it.
    #[default]
    Paired,
    /// Each original followed by every selected type at every selected level,
    /// type-major.
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetFiles {
    pub images: PathBuf,
    pub labels: PathBuf,
    pub levels: PathBuf,
    pub flags: PathBuf,
}

impl DatasetFiles {
    pub fn in_dir(dir: &Path, split: Split) -> Self {
        let (images, labels, levels, flags) = match split {
            Split::Train => (
                "perturbed-train-images-idx3-ubyte",
                "perturbed-train-labels-idx1-ubyte",
                "perturbation-train-levels-idx0-ubyte",
                "perturbed-train-flags-idx0-ubyte",
            ),
            Split::Test => (
                "t20k-perturbed-images-idx3-ubyte",
                "t20k-perturbed-labels-idx1-ubyte",
                "t20k-perturbation-levels-idx0-ubyte",
                "t20k-perturbed-flags-idx0-ubyte",
            ),
        };
        Self {
            images: dir.join(images),
            labels: dir.join(labels),
            levels: dir.join(levels),
            flags: dir.join(flags),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerateConfig {
    pub mode: GenerateMode,
    pub seed: u64,
    pub types: Vec<PerturbationType>,
    pub levels: Vec<u8>,
    pub split: Split,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            mode: GenerateMode::Paired,
            seed: 0,
            types: PerturbationType::ALL.to_vec(),
            levels: (1..=MAX_LEVEL).collect(),
            split: Split::Train,
        }
    }
}

impl GenerateConfig {
    /// Images written per original.
    pub fn images_per_original(&self) -> usize {
        match self.mode {
            GenerateMode::Paired => 2,
            GenerateMode::Grid => 1 + self.types.len() * self.levels.len(),
        }
    }

    fn check(&self) -> Result<()> {
        if self.types.is_empty() {
            return Err(Error::invalid("types", "no perturbation types selected"));
        }
        if self.levels.is_empty() {
            return Err(Error::invalid("levels", "no levels selected"));
        }
        if let Some(&l) = self.levels.iter().find(|&&l| l == 0 || l > MAX_LEVEL) {
            return Err(Error::InvalidLevel(l));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerateSummary {
    pub files: DatasetFiles,
    pub originals: usize,
    pub images_written: usize,
    pub rows: usize,
    pub cols: usize,
}

struct Output {
    pixels: Vec<u8>,
    label: u8,
    flag: u8,
    sidecar: [u8; 2],
}

fn outputs_for(index: usize, img: &GrayImage, label: u8, cfg: &GenerateConfig) -> Vec<Output> {
    let mut out = Vec::with_capacity(cfg.images_per_original());
    out.push(Output {
        pixels: img.pixels().to_vec(),
        label,
        flag: FLAG_CLEAN,
        sidecar: CLEAN_SENTINEL,
    });
    let mut perturbed = |kind: PerturbationType, level: u8| {
        let spec = PerturbationSpec::new(kind, level).expect("levels checked");
        let seed = derive_seed(cfg.seed, index as u64, kind.code(), level);
        out.push(Output {
            pixels: apply_perturbation(img, spec, seed).into_pixels(),
            label,
            flag: FLAG_PERTURBED,
            sidecar: spec.sidecar_bytes().expect("level >= 1"),
        });
    };
    match cfg.mode {
        GenerateMode::Paired => {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, index as u64, 0xFF, 0xFF));
            let kind = cfg.types[rng.random_range(0..cfg.types.len())];
            let level = cfg.levels[rng.random_range(0..cfg.levels.len())];
            perturbed(kind, level);
        }
        GenerateMode::Grid => {
            for &kind in &cfg.types {
                for &level in &cfg.levels {
                    perturbed(kind, level);
                }
            }
        }
    }
    out
}

/// Writes the perturbed image, digit-label, sidecar and flag files for
/// `images` into `out_dir`. Batches are perturbed in parallel and written in
/// index order, so the output bytes depend only on the inputs and the seed.
pub fn generate_perturbed_dataset(
    images: &IdxImages,
    labels: &IdxLabels,
    cfg: &GenerateConfig,
    out_dir: &Path,
) -> Result<GenerateSummary> {
    cfg.check()?;
    if images.count() != labels.count() {
        return Err(Error::LengthMismatch {
            what: "labels",
            expected: images.count(),
            actual: labels.count(),
        });
    }
    std::fs::create_dir_all(out_dir)?;
    let files = DatasetFiles::in_dir(out_dir, cfg.split);
    let n = images.count();
    let total = n
        .checked_mul(cfg.images_per_original())
        .ok_or_else(|| Error::invalid("images", "output count overflows"))?;
    let (rows, cols) = (images.rows(), images.cols());

    let mut img_w = IdxWriter::images(&files.images, total, rows, cols)?;
    let mut label_w = IdxWriter::labels(&files.labels, total)?;
    let mut side_w = IdxWriter::raw(&files.levels, 2, total)?;
    let mut flag_w = IdxWriter::raw(&files.flags, 1, total)?;

    for start in (0..n).step_by(BATCH) {
        let end = (start + BATCH).min(n);
        let batch: Vec<Vec<Output>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let img = GrayImage::new(rows, cols, images.image(i).to_vec()).expect("idx shape");
                outputs_for(i, &img, labels.labels[i], cfg)
            })
            .collect();
        for o in batch.iter().flatten() {
            img_w.push(&o.pixels)?;
            label_w.push(&[o.label])?;
            side_w.push(&o.sidecar)?;
            flag_w.push(&[o.flag])?;
        }
    }
    img_w.finish()?;
    label_w.finish()?;
    side_w.finish()?;
    flag_w.finish()?;

    Ok(GenerateSummary {
        files,
        originals: n,
        images_written: total,
        rows,
        cols,
    })
}
