use serde::Serialize;

use super::{PerturbationType, MAX_LEVEL};
use crate::error::{Error, Result};

/// Kernel parameters for one (type, level). Pixel values are in [0, 255].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SeverityParams {
    Identity,
    Brightness {
        delta: f64,
    },
    Contrast {
        factor: f64,
    },
    DefocusBlur {
        radius: f64,
    },
    Fog {
        blend: f64,
    },
    Frost {
        blend: f64,
    },
    GaussianNoise {
        sigma: f64,
    },
    ImpulseNoise {
        fraction: f64,
    },
    MotionBlur {
        length: usize,
    },
    /// Downscale by `(10 + 3L) / 10`, rounding the target side up.
    Pixelation {
        num: usize,
        den: usize,
    },
    ShotNoise {
        photons: f64,
    },
    Snow {
        density: f64,
        streak: usize,
    },
    ZoomBlur {
        zooms: Vec<f64>,
    },
}

impl SeverityParams {
    /// Side length after the pixelation downscale.
    pub fn pixelation_side(&self, side: usize) -> Option<usize> {
        match *self {
            SeverityParams::Pixelation { num, den } => Some((side * den).div_ceil(num).max(1)),
            _ => None,
        }
    }
}

pub fn severity_schedule(kind: PerturbationType, level: u8) -> Result<SeverityParams> {
    if level > MAX_LEVEL {
        return Err(Error::InvalidLevel(level));
    }
    if level == 0 {
        return Ok(SeverityParams::Identity);
    }
    let l = f64::from(level);
    let li = usize::from(level);
    Ok(match kind {
        PerturbationType::Brightness => SeverityParams::Brightness { delta: 25.0 * l },
        PerturbationType::Contrast => SeverityParams::Contrast {
            factor: 1.0 - 0.08 * l,
        },
        PerturbationType::DefocusBlur => SeverityParams::DefocusBlur { radius: 0.5 * l },
        PerturbationType::Fog => SeverityParams::Fog { blend: 0.05 * l },
        PerturbationType::Frost => SeverityParams::Frost { blend: 0.04 * l },
        PerturbationType::GaussianNoise => SeverityParams::GaussianNoise {
            sigma: 0.04 * l * 255.0,
        },
        PerturbationType::ImpulseNoise => SeverityParams::ImpulseNoise { fraction: 0.03 * l },
        PerturbationType::MotionBlur => SeverityParams::MotionBlur { length: 1 + li },
        PerturbationType::Pixelation => SeverityParams::Pixelation {
            num: 10 + 3 * li,
            den: 10,
        },
        PerturbationType::ShotNoise => SeverityParams::ShotNoise {
            photons: (60.0 - 5.5 * l).max(3.0),
        },
        PerturbationType::Snow => SeverityParams::Snow {
            density: 0.004 * l,
            streak: 3,
        },
        PerturbationType::ZoomBlur => SeverityParams::ZoomBlur {
            zooms: (0..=2 * li).map(|i| 1.0 + 0.01 * i as f64).collect(),
        },
    })
}
