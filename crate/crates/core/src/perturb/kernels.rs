use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::schedule::SeverityParams;
use super::GrayImage;

/// Working buffer in floating point; converted back with rounding and clamping.
struct Plane {
    rows: usize,
    cols: usize,
    v: Vec<f64>,
}

impl Plane {
    fn from_image(img: &GrayImage) -> Self {
        Self {
            rows: img.rows(),
            cols: img.cols(),
            v: img.pixels().iter().map(|&p| f64::from(p)).collect(),
        }
    }

    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            v: vec![0.0; rows * cols],
        }
    }

    /// Edge-replicated lookup.
    fn at(&self, r: isize, c: isize) -> f64 {
        let r = r.clamp(0, self.rows as isize - 1) as usize;
        let c = c.clamp(0, self.cols as isize - 1) as usize;
        self.v[r * self.cols + c]
    }

    /// Bilinear sample at fractional coordinates, edge-replicated.
    fn sample(&self, y: f64, x: f64) -> f64 {
        let (y0, x0) = (y.floor(), x.floor());
        let (fy, fx) = (y - y0, x - x0);
        let (r, c) = (y0 as isize, x0 as isize);
        let top = self.at(r, c) * (1.0 - fx) + self.at(r, c + 1) * fx;
        let bottom = self.at(r + 1, c) * (1.0 - fx) + self.at(r + 1, c + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    fn convolve(&self, kernel: &[(isize, isize, f64)]) -> Plane {
        let mut out = Plane::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.v[r * self.cols + c] = kernel
                    .iter()
                    .map(|&(dr, dc, w)| w * self.at(r as isize + dr, c as isize + dc))
                    .sum();
            }
        }
        out
    }

    fn into_image(self) -> GrayImage {
        let pixels = self
            .v
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect();
        GrayImage::new(self.rows, self.cols, pixels).expect("shape preserved")
    }
}

pub(super) fn apply(img: &GrayImage, params: &SeverityParams, rng: &mut ChaCha8Rng) -> GrayImage {
    if img.pixels().is_empty() {
        return img.clone();
    }
    let src = Plane::from_image(img);
    let out = match *params {
        SeverityParams::Identity => return img.clone(),
        SeverityParams::Brightness { delta } => map(src, |v| v + delta),
        SeverityParams::Contrast { factor } => {
            let mean = src.v.iter().sum::<f64>() / src.v.len() as f64;
            map(src, |v| mean + (v - mean) * factor)
        }
        SeverityParams::GaussianNoise { sigma } => {
            let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
            map(src, |v| v + normal.sample(rng))
        }
        SeverityParams::ShotNoise { photons } => map(src, |v| {
            let count = poisson_quantile(v / 255.0 * photons, rng.random::<f64>());
            count as f64 / photons * 255.0
        }),
        SeverityParams::ImpulseNoise { fraction } => map(src, |v| {
            let hit = rng.random::<f64>() < fraction;
            let salt = rng.random::<bool>();
            match (hit, salt) {
                (false, _) => v,
                (true, true) => 255.0,
                (true, false) => 0.0,
            }
        }),
        SeverityParams::DefocusBlur { radius } => src.convolve(&disk_kernel(radius)),
        SeverityParams::MotionBlur { length } => motion_blur(&src, length),
        SeverityParams::ZoomBlur { ref zooms } => zoom_blur(&src, zooms),
        SeverityParams::Fog { blend } => {
            let haze = smooth_noise(src.rows, src.cols, 4, rng);
            blend_with(src, &haze, blend, |h| h * 255.0)
        }
        SeverityParams::Frost { blend } => {
            let field = smooth_noise(src.rows, src.cols, 7, rng);
            blend_with(
                src,
                &field,
                blend,
                |h| if h > 0.55 { 255.0 * h } else { 0.0 },
            )
        }
        SeverityParams::Snow { density, streak } => snow(src, density, streak, rng),
        SeverityParams::Pixelation { .. } => {
            let tr = params.pixelation_side(src.rows).unwrap();
            let tc = params.pixelation_side(src.cols).unwrap();
            pixelate(&src, tr, tc)
        }
    };
    out.into_image()
}

fn map(mut p: Plane, mut f: impl FnMut(f64) -> f64) -> Plane {
    for v in p.v.iter_mut() {
        *v = f(*v);
    }
    p
}

/// Smallest `k` with `P(Poisson(lambda) <= k) >= u`. One uniform per pixel
/// keeps draws at different rates aligned for the same seed.
fn poisson_quantile(lambda: f64, u: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let mut k = 0u64;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    while u > cdf && p > 0.0 {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
    }
    k
}

/// Uniform disk, pixel weights from 8x8 supersampling of each cell.
fn disk_kernel(radius: f64) -> Vec<(isize, isize, f64)> {
    const S: usize = 8;
    let reach = radius.ceil() as isize;
    let r2 = radius * radius;
    let mut taps = Vec::new();
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            let mut hits = 0usize;
            for i in 0..S {
                for j in 0..S {
                    let y = dr as f64 + (i as f64 + 0.5) / S as f64 - 0.5;
                    let x = dc as f64 + (j as f64 + 0.5) / S as f64 - 0.5;
                    if y * y + x * x <= r2 {
                        hits += 1;
                    }
                }
            }
            if hits > 0 {
                taps.push((dr, dc, hits as f64));
            }
        }
    }
    let total: f64 = taps.iter().map(|t| t.2).sum();
    taps.into_iter()
        .map(|(r, c, w)| (r, c, w / total))
        .collect()
}

/// Averages `length` samples spaced one pixel apart along the 45 degree
/// diagonal, centred on the pixel.
fn motion_blur(src: &Plane, length: usize) -> Plane {
    let mut out = Plane::zeros(src.rows, src.cols);
    let step = std::f64::consts::FRAC_1_SQRT_2;
    let mid = (length as f64 - 1.0) / 2.0;
    for r in 0..src.rows {
        for c in 0..src.cols {
            let sum: f64 = (0..length)
                .map(|i| {
                    let t = (i as f64 - mid) * step;
                    src.sample(r as f64 - t, c as f64 + t)
                })
                .sum();
            out.v[r * src.cols + c] = sum / length as f64;
        }
    }
    out
}

fn zoom_blur(src: &Plane, zooms: &[f64]) -> Plane {
    let mut out = Plane::zeros(src.rows, src.cols);
    let cy = (src.rows as f64 - 1.0) / 2.0;
    let cx = (src.cols as f64 - 1.0) / 2.0;
    for r in 0..src.rows {
        for c in 0..src.cols {
            let sum: f64 = zooms
                .iter()
                .map(|z| src.sample(cy + (r as f64 - cy) / z, cx + (c as f64 - cx) / z))
                .sum();
            out.v[r * src.cols + c] = sum / zooms.len() as f64;
        }
    }
    out
}

/// Value noise in [0, 1]: a random lattice with `cells` cells along the
/// longer side, bilinearly upsampled.
fn smooth_noise(rows: usize, cols: usize, cells: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let side = rows.max(cols) as f64;
    let grid_r = ((rows as f64 / side) * cells as f64).ceil() as usize + 1;
    let grid_c = ((cols as f64 / side) * cells as f64).ceil() as usize + 1;
    let lattice = Plane {
        rows: grid_r,
        cols: grid_c,
        v: (0..grid_r * grid_c).map(|_| rng.random::<f64>()).collect(),
    };
    let scale = cells as f64 / side;
    (0..rows * cols)
        .map(|i| lattice.sample((i / cols) as f64 * scale, (i % cols) as f64 * scale))
        .collect()
}

fn blend_with(mut p: Plane, field: &[f64], t: f64, shape: impl Fn(f64) -> f64) -> Plane {
    for (v, &h) in p.v.iter_mut().zip(field) {
        *v = (1.0 - t) * *v + t * shape(h);
    }
    p
}

/// Bright specks, each smeared into a fading diagonal streak.
fn snow(mut p: Plane, density: f64, streak: usize, rng: &mut ChaCha8Rng) -> Plane {
    let (rows, cols) = (p.rows, p.cols);
    let mut layer = vec![0.0f64; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            if rng.random::<f64>() >= density {
                continue;
            }
            for s in 0..streak {
                let (rr, cc) = (r + s, c + s);
                if rr >= rows || cc >= cols {
                    break;
                }
                let v = 255.0 * (1.0 - s as f64 / streak as f64);
                let cell = &mut layer[rr * cols + cc];
                *cell = cell.max(v);
            }
        }
    }
    for (v, s) in p.v.iter_mut().zip(layer) {
        *v = v.max(s);
    }
    p
}

/// Box-average down to `tr x tc`, then nearest-neighbour back up.
fn pixelate(src: &Plane, tr: usize, tc: usize) -> Plane {
    let (rows, cols) = (src.rows, src.cols);
    let mut small = vec![0.0f64; tr * tc];
    for i in 0..tr {
        let (r0, r1) = (i * rows / tr, ((i + 1) * rows / tr).max(i * rows / tr + 1));
        for j in 0..tc {
            let (c0, c1) = (j * cols / tc, ((j + 1) * cols / tc).max(j * cols / tc + 1));
            let mut sum = 0.0;
            for r in r0..r1 {
                for c in c0..c1 {
                    sum += src.v[r * cols + c];
                }
            }
            small[i * tc + j] = sum / ((r1 - r0) * (c1 - c0)) as f64;
        }
    }
    let mut out = Plane::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            out.v[r * cols + c] = small[(r * tr / rows) * tc + c * tc / cols];
        }
    }
    out
}
