use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// PSNR reported for a zero mean squared error.
pub const PSNR_CAP_DB: f64 = 99.0;

/// `10 log10(peak² / MSE)` over the entries where `region` is nonzero (all
/// entries when `region` is `None`), capped at [`PSNR_CAP_DB`].
pub fn psnr<S: Real>(a: &Tensor<S>, b: &Tensor<S>, peak: f64, region: Option<&Tensor<S>>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("psnr: {:?} vs {:?}", a.shape(), b.shape())));
    }
    if !(peak > 0.0) {
        return Err(Error::Config(format!("psnr peak must be positive, got {peak}")));
    }
    if let Some(r) = region {
        if r.len() != a.len() {
            return Err(Error::Shape(format!("psnr region {:?} vs {:?}", r.shape(), a.shape())));
        }
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for k in 0..a.len() {
        if region.is_some_and(|r| r.data()[k] == S::zero()) {
            continue;
        }
        let d = a.data()[k].as_f64() - b.data()[k].as_f64();
        sum += d * d;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Shape("psnr region is empty".into()));
    }
    let mse = sum / count as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range of the pixel values (2 for `[-1, 1]`, 255 for 8-bit).
    pub data_range: f64,
}

impl SsimParams {
    pub fn for_range(data_range: f64) -> Self {
        SsimParams {
            window: 8,
            k1: 0.01,
            k2: 0.03,
            data_range,
        }
    }
}

/// Mean SSIM over all `window × window` positions (stride 1, uniform
/// weights) and over channels. The last two axes are height and width; any
/// leading axes are treated as channels.
pub fn ssim<S: Real>(a: &Tensor<S>, b: &Tensor<S>, p: &SsimParams) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("ssim: {:?} vs {:?}", a.shape(), b.shape())));
    }
    let s = a.shape();
    if s.len() < 2 {
        return Err(Error::Shape(format!("ssim needs an image, got {s:?}")));
    }
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    let win = p.window;
    if win == 0 || win > h || win > w {
        return Err(Error::Shape(format!("ssim window {win} does not fit {h}x{w}")));
    }
    let planes = a.len() / (h * w);
    let c1 = (p.k1 * p.data_range).powi(2);
    let c2 = (p.k2 * p.data_range).powi(2);
    let nwin = (win * win) as f64;
    let (ad, bd) = (a.to_f64_vec(), b.to_f64_vec());
    let mut total = 0.0;
    let mut count = 0usize;
    for pl in 0..planes {
        let pa = &ad[pl * h * w..(pl + 1) * h * w];
        let pb = &bd[pl * h * w..(pl + 1) * h * w];
        for r in 0..=h - win {
            for c in 0..=w - win {
                let (mut sa, mut sb) = (0.0, 0.0);
                for i in r..r + win {
                    for j in c..c + win {
                        sa += pa[i * w + j];
                        sb += pb[i * w + j];
                    }
                }
                let (ma, mb) = (sa / nwin, sb / nwin);
                let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
                for i in r..r + win {
                    for j in c..c + win {
                        let da = pa[i * w + j] - ma;
                        let db = pb[i * w + j] - mb;
                        vaa += da * da;
                        vbb += db * db;
                        vab += da * db;
                    }
                }
                let (vaa, vbb, vab) = (vaa / nwin, vbb / nwin, vab / nwin);
                let num = (2.0 * (ma * mb) + c1) * (2.0 * vab + c2);
                let den = (ma * ma + mb * mb + c1) * (vaa + vbb + c2);
                total += num / den;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}
