//! Conditional datasets: synthetic toys with exact densities, paired image
//! directories, occlusion masks, and jitter/mirror augmentation.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// How conditions are represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    OneHot(usize),
    /// `label_map` conditions are resampled with nearest-neighbour
    /// interpolation during augmentation.
    Image { label_map: bool },
}

/// Aligned `(Y_i, C_i)` pairs stored as two batch tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct CondDataset<S> {
    pub y: Tensor<S>,
    pub c: Tensor<S>,
    pub kind: ConditionKind,
    /// Class index per item, when known.
    pub labels: Option<Vec<usize>>,
    /// Source bit depth of image data (values were mapped from
    /// `[0, 2^bits - 1]` to `[-1, 1]`).
    pub source_bits: Option<u8>,
}

impl<S: Real> CondDataset<S> {
    pub fn new(y: Tensor<S>, c: Tensor<S>, kind: ConditionKind) -> Result<Self> {
        if y.batch() != c.batch() {
            return Err(Error::Shape(format!(
                "{} targets but {} conditions",
                y.batch(),
                c.batch()
            )));
        }
        Ok(CondDataset {
            y,
            c,
            kind,
            labels: None,
            source_bits: None,
        })
    }

    pub fn len(&self) -> usize {
        self.y.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn target_shape(&self) -> &[usize] {
        self.y.sample_shape()
    }

    pub fn condition_shape(&self) -> &[usize] {
        self.c.sample_shape()
    }

    pub fn select(&self, idx: &[usize]) -> (Tensor<S>, Tensor<S>) {
        (self.y.gather(idx), self.c.gather(idx))
    }

    /// Splits off the last `n` items.
    pub fn split_tail(&self, n: usize) -> (Self, Self) {
        let n = n.min(self.len());
        let head: Vec<usize> = (0..self.len() - n).collect();
        let tail: Vec<usize> = (self.len() - n..self.len()).collect();
        let part = |idx: &[usize]| CondDataset {
            y: self.y.gather(idx),
            c: self.c.gather(idx),
            kind: self.kind,
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            source_bits: self.source_bits,
        };
        (part(&head), part(&tail))
    }

    pub fn cast<T: Real>(&self) -> CondDataset<T> {
        CondDataset {
            y: self.y.cast(),
            c: self.c.cast(),
            kind: self.kind,
            labels: self.labels.clone(),
            source_bits: self.source_bits,
        }
    }
}

/// One-hot rows for `labels`.
pub fn one_hot<S: Real>(labels: &[usize], k: usize) -> Tensor<S> {
    let mut t = Tensor::zeros([labels.len(), k]);
    for (i, &l) in labels.iter().enumerate() {
        t.sample_mut(i)[l] = S::one();
    }
    t
}

// ---------------------------------------------------------------------------
// Synthetic toys

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ToyFamily {
    /// Class `k` draws `N(means[k], std² I)`.
    GaussianMixture { means: Vec<Vec<f64>>, std: f64 },
    /// Class `k` draws a point at radius `radius * (k + 1) + std * z` and a
    /// uniform angle, in 2-d.
    Ring { classes: usize, radius: f64, std: f64 },
    /// `size × size` glyph images from fixed 8×8 templates, randomly scaled
    /// and shifted, with optional pixel noise.
    Glyph {
        classes: usize,
        size: usize,
        #[serde(default)]
        max_shift: f64,
        #[serde(default)]
        noise: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySpec {
    pub family: ToyFamily,
    #[serde(default)]
    pub seed: u64,
}

const GLYPHS: [[&str; 8]; 4] = [
    [
        "..####..", ".#....#.", ".#....#.", ".#....#.", ".#....#.", ".#....#.", ".#....#.", "..####..",
    ],
    [
        "...##...", "..###...", "...##...", "...##...", "...##...", "...##...", "...##...", "..####..",
    ],
    [
        ".######.", "......#.", ".....#..", "....#...", "...#....", "...#....", "...#....", "...#....",
    ],
    [
        ".#......", ".#......", ".#......", ".#......", ".#......", ".#......", ".#......", ".######.",
    ],
];

impl ToyFamily {
    pub fn classes(&self) -> usize {
        match self {
            ToyFamily::GaussianMixture { means, .. } => means.len(),
            ToyFamily::Ring { classes, .. } | ToyFamily::Glyph { classes, .. } => *classes,
        }
    }

    pub fn target_shape(&self) -> Vec<usize> {
        match self {
            ToyFamily::GaussianMixture { means, .. } => vec![means.first().map_or(0, Vec::len)],
            ToyFamily::Ring { .. } => vec![2],
            ToyFamily::Glyph { size, .. } => vec![1, *size, *size],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("toy spec: {m}")));
        match self {
            ToyFamily::GaussianMixture { means, std } => {
                if means.is_empty() || means[0].is_empty() {
                    return bad("mixture needs at least one non-empty mean");
                }
                if means.iter().any(|m| m.len() != means[0].len()) {
                    return bad("mixture means differ in dimension");
                }
                if !(*std > 0.0 && std.is_finite()) {
                    return bad("std must be positive");
                }
            }
            ToyFamily::Ring { classes, radius, std } => {
                if *classes == 0 || !(*radius > 0.0) || !(*std > 0.0) {
                    return bad("ring needs classes >= 1, radius > 0, std > 0");
                }
            }
            ToyFamily::Glyph {
                classes,
                size,
                max_shift,
                noise,
            } => {
                if *classes == 0 || *classes > GLYPHS.len() {
                    return bad("glyph classes must be in 1..=4");
                }
                if *size < 8 {
                    return bad("glyph size must be at least 8");
                }
                if !(*max_shift >= 0.0) || !(*noise >= 0.0) {
                    return bad("glyph max_shift and noise must be nonnegative");
                }
            }
        }
        Ok(())
    }

    /// One draw from class `k`.
    pub fn sample_one<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<f64> {
        let mut z = || -> f64 { StandardNormal.sample(rng) };
        match self {
            ToyFamily::GaussianMixture { means, std } => means[k].iter().map(|&m| m + std * z()).collect(),
            ToyFamily::Ring { radius, std, .. } => {
                let r = radius * (k + 1) as f64 + std * z();
                let phi = 2.0 * PI * rng.random::<f64>();
                vec![r * phi.cos(), r * phi.sin()]
            }
            ToyFamily::Glyph {
                size, max_shift, noise, ..
            } => glyph_image(k, *size, *max_shift, *noise, rng),
        }
    }

    /// Exact `log p(y | k)`; `None` for families without a closed form.
    pub fn log_density(&self, k: usize, y: &[f64]) -> Option<f64> {
        match self {
            ToyFamily::GaussianMixture { means, std } => {
                let d = y.len() as f64;
                let sq: f64 = y.iter().zip(&means[k]).map(|(a, b)| (a - b) * (a - b)).sum();
                Some(-0.5 * sq / (std * std) - 0.5 * d * (2.0 * PI * std * std).ln())
            }
            ToyFamily::Ring { radius, std, .. } => {
                let rho = (y[0] * y[0] + y[1] * y[1]).sqrt();
                let r = radius * (k + 1) as f64;
                let norm = |v: f64| (-(v - r) * (v - r) / (2.0 * std * std)).exp() / ((2.0 * PI).sqrt() * std);
                Some(((norm(rho) + norm(-rho)) / (2.0 * PI * rho)).ln())
            }
            ToyFamily::Glyph { .. } => None,
        }
    }
}

fn glyph_image<R: Rng + ?Sized>(k: usize, size: usize, max_shift: f64, noise: f64, rng: &mut R) -> Vec<f64> {
    let scale = 1.0 + 0.2 * (rng.random::<f64>() - 0.5);
    let dx = max_shift * (2.0 * rng.random::<f64>() - 1.0);
    let dy = max_shift * (2.0 * rng.random::<f64>() - 1.0);
    let cell = size as f64 / 8.0;
    let centre = size as f64 / 2.0;
    let mut out = Vec::with_capacity(size * size);
    for r in 0..size {
        for c in 0..size {
            let sy = (r as f64 + 0.5 - centre - dy) / scale + centre;
            let sx = (c as f64 + 0.5 - centre - dx) / scale + centre;
            let (gy, gx) = ((sy / cell).floor(), (sx / cell).floor());
            let ink = (0.0..8.0).contains(&gy)
                && (0.0..8.0).contains(&gx)
                && GLYPHS[k][gy as usize].as_bytes()[gx as usize] == b'#';
            let mut v = if ink { 1.0 } else { -1.0 };
            if noise > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                v = (v + noise * z).clamp(-1.0, 1.0);
            }
            out.push(v);
        }
    }
    out
}

/// Exact class-conditional density of a toy family.
#[derive(Debug, Clone)]
pub struct DensityOracle {
    pub family: ToyFamily,
}

impl DensityOracle {
    pub fn log_density(&self, k: usize, y: &[f64]) -> f64 {
        self.family.log_density(k, y).expect("oracle exists only for closed-form families")
    }

    /// `n` draws with uniformly random classes; returns `(Y, labels)`.
    pub fn sample<S: Real, R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Tensor<S>, Vec<usize>) {
        let k = self.family.classes();
        let mut shape = vec![n];
        shape.extend(self.family.target_shape());
        let mut data = Vec::new();
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let c = rng.random_range(0..k);
            labels.push(c);
            data.extend(self.family.sample_one(c, rng).into_iter().map(S::of));
        }
        (Tensor::from_vec(shape, data).expect("sized by family"), labels)
    }
}

/// `n` i.i.d. pairs with uniform class labels; the oracle is `None` for the
/// glyph family.
pub fn generate_toy<S: Real>(spec: &ToySpec, n: usize) -> Result<(CondDataset<S>, Option<DensityOracle>)> {
    spec.family.validate()?;
    if n == 0 {
        return Err(Error::Config("toy dataset size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let oracle = DensityOracle {
        family: spec.family.clone(),
    };
    let (y, labels) = oracle.sample::<S, _>(n, &mut rng);
    let k = spec.family.classes();
    let c = one_hot(&labels, k);
    let mut ds = CondDataset::new(y, c, ConditionKind::OneHot(k))?;
    ds.labels = Some(labels);
    let has_oracle = !matches!(spec.family, ToyFamily::Glyph { .. });
    Ok((ds, has_oracle.then_some(oracle)))
}

// ---------------------------------------------------------------------------
// Image files

fn normalize(v: u8) -> f64 {
    v as f64 / 127.5 - 1.0
}

/// Inverse of the `[0, 255] -> [-1, 1]` normalization, rounded and clamped.
pub fn denormalize(v: f64) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// Decodes a PNG or binary PGM file into `[channels, height, width]` in
/// `[-1, 1]`; grayscale files give one channel, everything else three.
pub fn load_image<S: Real>(path: &Path) -> Result<Tensor<S>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (c, h, w, raw) = match img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => {
            let g = img.to_luma8();
            (1, g.height() as usize, g.width() as usize, g.into_raw())
        }
        _ => {
            let rgb = img.to_rgb8();
            let (h, w) = (rgb.height() as usize, rgb.width() as usize);
            let raw = rgb.into_raw();
            let mut planar = vec![0u8; raw.len()];
            for p in 0..h * w {
                for ch in 0..3 {
                    planar[ch * h * w + p] = raw[p * 3 + ch];
                }
            }
            (3, h, w, planar)
        }
    };
    Tensor::from_vec([c, h, w], raw.into_iter().map(|v| S::of(normalize(v))).collect())
}

/// Writes a `[channels, height, width]` image in `[-1, 1]`. The format is
/// taken from the extension: `.pgm` (one channel only) or PNG otherwise.
pub fn save_image<S: Real>(path: &Path, img: &Tensor<S>) -> Result<()> {
    let s = img.shape();
    if s.len() != 3 || !(s[0] == 1 || s[0] == 3) {
        return Err(Error::Shape(format!("cannot save image of shape {s:?}")));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    let px: Vec<u8> = img.data().iter().map(|v| denormalize(v.as_f64())).collect();
    let is_pgm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let to_err = |e: image::ImageError| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    if c == 1 {
        let g = GrayImage::from_raw(w as u32, h as u32, px).expect("sized");
        if is_pgm {
            let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
            out.extend_from_slice(g.as_raw());
            std::fs::write(path, out).map_err(|e| Error::io(path, e))
        } else {
            g.save_with_format(path, image::ImageFormat::Png).map_err(to_err)
        }
    } else {
        if is_pgm {
            return Err(Error::Shape("PGM holds one channel only".into()));
        }
        let mut inter = vec![0u8; px.len()];
        for p in 0..h * w {
            for ch in 0..3 {
                inter[p * 3 + ch] = px[ch * h * w + p];
            }
        }
        RgbImage::from_raw(w as u32, h as u32, inter)
            .expect("sized")
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(to_err)
    }
}

/// Reads a manifest of `condition target` relative path pairs and loads the
/// images from `dir_condition` and `dir_target`.
pub fn load_paired_images<S: Real>(
    dir_condition: &Path,
    dir_target: &Path,
    manifest: &Path,
    label_map: bool,
) -> Result<CondDataset<S>> {
    let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let mut ys = Vec::new();
    let mut cs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(Error::Image {
                path: manifest.to_path_buf(),
                message: format!("line {}: expected two paths, found {}", lineno + 1, parts.len()),
            });
        }
        let cp = dir_condition.join(parts[0]);
        let tp = dir_target.join(parts[1]);
        let c: Tensor<S> = load_image(&cp)?;
        let y: Tensor<S> = load_image(&tp)?;
        if c.shape()[1..] != y.shape()[1..] {
            return Err(Error::Image {
                path: tp,
                message: format!(
                    "pair {} ({} / {}): condition is {:?} but target is {:?}",
                    lineno + 1,
                    parts[0],
                    parts[1],
                    c.shape(),
                    y.shape()
                ),
            });
        }
        if let Some(first) = ys.first() {
            let first: &Tensor<S> = first;
            let fc: &Tensor<S> = &cs[0];
            if first.shape() != y.shape() || fc.shape() != c.shape() {
                return Err(Error::Image {
                    path: PathBuf::from(parts[1]),
                    message: format!(
                        "pair {} has shapes {:?}/{:?}, earlier pairs {:?}/{:?}",
                        lineno + 1,
                        c.shape(),
                        y.shape(),
                        fc.shape(),
                        first.shape()
                    ),
                });
            }
        }
        ys.push(y);
        cs.push(c);
    }
    let kind = ConditionKind::Image { label_map };
    let mut ds = if ys.is_empty() {
        CondDataset::new(Tensor::zeros([0]), Tensor::zeros([0]), kind)?
    } else {
        let yr: Vec<&Tensor<S>> = ys.iter().collect();
        let cr: Vec<&Tensor<S>> = cs.iter().collect();
        CondDataset::new(Tensor::stack(&yr)?, Tensor::stack(&cr)?, kind)?
    };
    ds.source_bits = Some(8);
    Ok(ds)
}

// ---------------------------------------------------------------------------
// Occlusion

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskSpec {
    /// Centred square hole of the given side.
    Central { size: usize },
    Rect {
        top: usize,
        left: usize,
        height: usize,
        width: usize,
    },
}

impl MaskSpec {
    fn rect(&self, h: usize, w: usize) -> Result<(usize, usize, usize, usize)> {
        let (top, left, hh, ww) = match *self {
            MaskSpec::Central { size } => {
                if size > h || size > w {
                    return Err(Error::Shape(format!("hole {size} does not fit {h}x{w}")));
                }
                ((h - size) / 2, (w - size) / 2, size, size)
            }
            MaskSpec::Rect {
                top,
                left,
                height,
                width,
            } => (top, left, height, width),
        };
        if top + hh > h || left + ww > w {
            return Err(Error::Shape(format!(
                "mask {self:?} falls outside a {h}x{w} image"
            )));
        }
        Ok((top, left, hh, ww))
    }

    /// Binary mask (1 inside the hole) for one image of shape `[c, h, w]`.
    pub fn mask<S: Real>(&self, shape: &[usize]) -> Result<Tensor<S>> {
        if shape.len() != 3 {
            return Err(Error::Shape(format!("mask needs [c, h, w], got {shape:?}")));
        }
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        let (top, left, hh, ww) = self.rect(h, w)?;
        let mut m = Tensor::zeros([c, h, w]);
        let d = m.data_mut();
        for ch in 0..c {
            for r in top..top + hh {
                for col in left..left + ww {
                    d[(ch * h + r) * w + col] = S::one();
                }
            }
        }
        Ok(m)
    }
}

/// Zeroes the hole of each image in `y` (`[n, c, h, w]`); returns the
/// observed images and the per-image update mask (1 inside the hole).
pub fn occlude<S: Real>(y: &Tensor<S>, spec: &MaskSpec) -> Result<(Tensor<S>, Tensor<S>)> {
    if y.shape().len() != 4 {
        return Err(Error::Shape(format!("occlude needs [n, c, h, w], got {:?}", y.shape())));
    }
    let m1: Tensor<S> = spec.mask(y.sample_shape())?;
    let mut c = y.clone();
    let mut mask = Tensor::zeros(y.shape().to_vec());
    for i in 0..y.batch() {
        for (v, &b) in c.sample_mut(i).iter_mut().zip(m1.data()) {
            if b != S::zero() {
                *v = S::zero();
            }
        }
        mask.sample_mut(i).copy_from_slice(m1.data());
    }
    Ok((c, mask))
}

// ---------------------------------------------------------------------------
// Augmentation

/// Jitter canvas size for an image side: `round(side * 286 / 256)`.
pub fn jitter_size(side: usize) -> usize {
    ((side as f64) * 286.0 / 256.0).round() as usize
}

/// A drawn augmentation: crop offsets into the enlarged canvas and a flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentParams {
    pub top: usize,
    pub left: usize,
    pub mirror: bool,
}

impl AugmentParams {
    pub fn draw<R: Rng + ?Sized>(h: usize, w: usize, rng: &mut R) -> Self {
        let (jh, jw) = (jitter_size(h), jitter_size(w));
        AugmentParams {
            top: rng.random_range(0..=jh - h),
            left: rng.random_range(0..=jw - w),
            mirror: rng.random::<bool>(),
        }
    }
}

fn resize<S: Real>(img: &[S], c: usize, h: usize, w: usize, nh: usize, nw: usize, nearest: bool) -> Vec<S> {
    let mut out = vec![S::zero(); c * nh * nw];
    let src = |dst: usize, n_src: usize, n_dst: usize| -> f64 {
        ((dst as f64 + 0.5) * n_src as f64 / n_dst as f64 - 0.5).clamp(0.0, (n_src - 1) as f64)
    };
    for ch in 0..c {
        let plane = &img[ch * h * w..(ch + 1) * h * w];
        for r in 0..nh {
            let sy = src(r, h, nh);
            for col in 0..nw {
                let sx = src(col, w, nw);
                let v = if nearest {
                    plane[(sy.round() as usize) * w + sx.round() as usize]
                } else {
                    let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
                    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
                    let (fy, fx) = (S::of(sy - y0 as f64), S::of(sx - x0 as f64));
                    let a = plane[y0 * w + x0];
                    let b = plane[y0 * w + x1];
                    let cc = plane[y1 * w + x0];
                    let d = plane[y1 * w + x1];
                    let top = a + fx * (b - a);
                    let bottom = cc + fx * (d - cc);
                    top + fy * (bottom - top)
                };
                out[(ch * nh + r) * nw + col] = v;
            }
        }
    }
    out
}

fn jitter_one<S: Real>(img: &[S], shape: &[usize], p: &AugmentParams, nearest: bool) -> Vec<S> {
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let (jh, jw) = (jitter_size(h), jitter_size(w));
    let big = resize(img, c, h, w, jh, jw, nearest);
    let mut out = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for r in 0..h {
            for col in 0..w {
                let sc = if p.mirror { w - 1 - col } else { col };
                out.push(big[(ch * jh + p.top + r) * jw + p.left + sc]);
            }
        }
    }
    out
}

/// Applies one jitter-and-mirror transform to a target image and its
/// condition image (both `[c, h, w]` with equal `h, w`).
pub fn augment_with<S: Real>(
    y: &Tensor<S>,
    c: &Tensor<S>,
    params: &AugmentParams,
    label_map: bool,
) -> Result<(Tensor<S>, Tensor<S>)> {
    let (ys, cs) = (y.shape(), c.shape());
    if ys.len() != 3 || cs.len() != 3 || ys[1..] != cs[1..] {
        return Err(Error::Shape(format!(
            "augment needs two images of equal size, got {ys:?} and {cs:?}"
        )));
    }
    let (jh, jw) = (jitter_size(ys[1]), jitter_size(ys[2]));
    if params.top > jh - ys[1] || params.left > jw - ys[2] {
        return Err(Error::Shape(format!("crop offset {params:?} out of range")));
    }
    let y2 = jitter_one(y.data(), ys, params, false);
    let c2 = jitter_one(c.data(), cs, params, label_map);
    Ok((Tensor::from_vec(ys.to_vec(), y2)?, Tensor::from_vec(cs.to_vec(), c2)?))
}

/// Draws and applies a random jitter-and-mirror transform.
pub fn augment<S: Real, R: Rng + ?Sized>(
    y: &Tensor<S>,
    c: &Tensor<S>,
    label_map: bool,
    rng: &mut R,
) -> Result<(Tensor<S>, Tensor<S>)> {
    if y.shape().len() != 3 {
        return Err(Error::Shape(format!("augment needs [c, h, w], got {:?}", y.shape())));
    }
    let p = AugmentParams::draw(y.shape()[1], y.shape()[2], rng);
    augment_with(y, c, &p, label_map)
}

/// Augments every pair of a batch `[n, c, h, w]` independently.
pub fn augment_batch<S: Real, R: Rng + ?Sized>(
    y: &Tensor<S>,
    c: &Tensor<S>,
    label_map: bool,
    rng: &mut R,
) -> Result<(Tensor<S>, Tensor<S>)> {
    let mut ys = y.clone();
    let mut cs = c.clone();
    for i in 0..y.batch() {
        let yi = Tensor::from_vec(y.sample_shape().to_vec(), y.sample(i).to_vec())?;
        let ci = Tensor::from_vec(c.sample_shape().to_vec(), c.sample(i).to_vec())?;
        let (a, b) = augment(&yi, &ci, label_map, rng)?;
        ys.sample_mut(i).copy_from_slice(a.data());
        cs.sample_mut(i).copy_from_slice(b.data());
    }
    Ok((ys, cs))
}
