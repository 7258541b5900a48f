//! Grayscale image perturbations at ten severity levels, and the generator
//! that writes perturbed IDX datasets.

mod generate;
mod kernels;
mod schedule;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

pub use generate::{
    generate_perturbed_dataset, DatasetFiles, GenerateConfig, GenerateMode, GenerateSummary, Split,
};
pub use schedule::{severity_schedule, SeverityParams};

pub const MAX_LEVEL: u8 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
#[repr(u8)]
pub enum PerturbationType {
    Brightness = 0,
    Contrast = 1,
    DefocusBlur = 2,
    Fog = 3,
    Frost = 4,
    GaussianNoise = 5,
    ImpulseNoise = 6,
    MotionBlur = 7,
    Pixelation = 8,
    ShotNoise = 9,
    Snow = 10,
    ZoomBlur = 11,
}

impl PerturbationType {
    pub const ALL: [PerturbationType; 12] = [
        PerturbationType::Brightness,
        PerturbationType::Contrast,
        PerturbationType::DefocusBlur,
        PerturbationType::Fog,
        PerturbationType::Frost,
        PerturbationType::GaussianNoise,
        PerturbationType::ImpulseNoise,
        PerturbationType::MotionBlur,
        PerturbationType::Pixelation,
        PerturbationType::ShotNoise,
        PerturbationType::Snow,
        PerturbationType::ZoomBlur,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Self::ALL
            .get(usize::from(code))
            .copied()
            .ok_or(Error::InvalidTypeCode(code))
    }

    pub fn name(self) -> &'static str {
        match self {
            PerturbationType::Brightness => "brightness",
            PerturbationType::Contrast => "contrast",
            PerturbationType::DefocusBlur => "defocus-blur",
            PerturbationType::Fog => "fog",
            PerturbationType::Frost => "frost",
            PerturbationType::GaussianNoise => "gaussian-noise",
            PerturbationType::ImpulseNoise => "impulse-noise",
            PerturbationType::MotionBlur => "motion-blur",
            PerturbationType::Pixelation => "pixelation",
            PerturbationType::ShotNoise => "shot-noise",
            PerturbationType::Snow => "snow",
            PerturbationType::ZoomBlur => "zoom-blur",
        }
    }
}

impl fmt::Display for PerturbationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PerturbationType {
    type Err = Error;

    /// Accepts the kebab-case name or the numeric code.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(code) = s.parse::<u8>() {
            return Self::from_code(code);
        }
        let norm = s.to_ascii_lowercase().replace(['_', ' '], "-");
        Self::ALL
            .into_iter()
            .find(|t| t.name() == norm)
            .ok_or_else(|| Error::invalid("type", format!("unknown perturbation type `{s}`")))
    }
}

/// A perturbation type at an intensity level. Levels run 1..=10; level 0 is
/// accepted and means "leave the image unchanged".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationType,
    level: u8,
}

impl PerturbationSpec {
    pub fn new(kind: PerturbationType, level: u8) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::InvalidLevel(level));
        }
        Ok(Self { kind, level })
    }

    pub fn level(&self) -> u8 {
        self.level
    }

    /// Sidecar byte pair: type code and `level - 1`.
    pub fn sidecar_bytes(&self) -> Result<[u8; 2]> {
        if self.level == 0 {
            return Err(Error::InvalidLevel(0));
        }
        Ok([self.kind.code(), self.level - 1])
    }

    pub fn from_sidecar_bytes(bytes: [u8; 2]) -> Result<Self> {
        let kind = PerturbationType::from_code(bytes[0])?;
        if bytes[1] >= MAX_LEVEL {
            return Err(Error::InvalidLevel(bytes[1].saturating_add(1)));
        }
        Self::new(kind, bytes[1] + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    rows: usize,
    cols: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != rows * cols {
            return Err(Error::LengthMismatch {
                what: "pixels",
                expected: rows * cols,
                actual: pixels.len(),
            });
        }
        Ok(Self { rows, cols, pixels })
    }

    pub fn filled(rows: usize, cols: usize, value: u8) -> Self {
        Self {
            rows,
            cols,
            pixels: vec![value; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.pixels[r * self.cols + c]
    }

    /// Mean absolute per-pixel difference.
    pub fn mean_abs_delta(&self, other: &GrayImage) -> f64 {
        assert_eq!(self.pixels.len(), other.pixels.len());
        if self.pixels.is_empty() {
            return 0.0;
        }
        let total: u64 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(&a, &b)| u64::from(a.abs_diff(b)))
            .sum();
        total as f64 / self.pixels.len() as f64
    }
}

/// Mixes a run seed with an image index and spec into a per-image seed.
pub fn derive_seed(seed: u64, index: u64, type_code: u8, level: u8) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let tag = (u64::from(type_code) << 8) | u64::from(level);
    mix(mix(mix(seed) ^ index) ^ tag)
}

/// Applies `spec` to `img`. Stochastic types draw from a ChaCha stream
/// seeded by `seed`, so the result is a pure function of the arguments.
pub fn apply_perturbation(img: &GrayImage, spec: PerturbationSpec, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = severity_schedule(spec.kind, spec.level).expect("level checked on construction");
    kernels::apply(img, &params, &mut rng)
}
