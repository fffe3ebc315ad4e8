use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::sampling::{mirror_index, warp};
use super::ImageBuffer;
use crate::error::{Error, Result};

/// Settings for the crop/flip steps attached to sub-policy styles.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalConfig {
    /// When false, style-implied crop/flip steps are skipped (explicit
    /// `ScaleCropFlip` transforms still run).
    pub enabled: bool,
    /// Mirror padding before the CIFAR-style random crop.
    pub pad: usize,
    /// Output size of crops; `None` keeps the input size.
    pub crop_size: Option<(usize, usize)>,
    /// Crop side range of `ScaleCropFlip`, as a fraction of the shorter side.
    pub scale_range: (f64, f64),
    /// Crop side of the fixed multi-crop presets, as a fraction of each side.
    pub multicrop_fraction: f64,
}

impl Default for PositionalConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            pad: 4,
            crop_size: None,
            scale_range: (0.7, 1.0),
            multicrop_fraction: 0.875,
        }
    }
}

impl PositionalConfig {
    fn target(&self, img: &ImageBuffer) -> Result<(usize, usize)> {
        let target = self.crop_size.unwrap_or((img.height(), img.width()));
        if target.0 == 0 || target.1 == 0 {
            return Err(Error::Config(format!("crop size {target:?} must be positive")));
        }
        Ok(target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CropAnchor {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
    Center,
}

impl CropAnchor {
    pub const FIVE: [CropAnchor; 5] = [
        Self::TopLeft,
        Self::TopRight,
        Self::BottomLeft,
        Self::BottomRight,
        Self::Center,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::TopLeft => "tl",
            Self::TopRight => "tr",
            Self::BottomLeft => "bl",
            Self::BottomRight => "br",
            Self::Center => "center",
        }
    }
}

impl fmt::Display for CropAnchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CropAnchor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::FIVE
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown crop anchor `{s}`")))
    }
}

fn resize_region(
    img: &ImageBuffer,
    oy: usize,
    ox: usize,
    ch: usize,
    cw: usize,
    target: (usize, usize),
    flip: bool,
) -> ImageBuffer {
    let (th, tw) = target;
    let sy = ch as f64 / th as f64;
    let sx = cw as f64 / tw as f64;
    warp(img, th, tw, |y, x| {
        let x = if flip { (tw - 1) as f64 - x } else { x };
        (oy as f64 + (y + 0.5) * sy - 0.5, ox as f64 + (x + 0.5) * sx - 0.5)
    })
}

/// Mirror-pad by `pad`, crop the target size at a uniform offset, flip with
/// probability 1/2.
pub(crate) fn pad_crop_flip<R: Rng + ?Sized>(
    img: &ImageBuffer,
    cfg: &PositionalConfig,
    rng: &mut R,
) -> Result<ImageBuffer> {
    let (h, w, _) = img.dims();
    let (th, tw) = cfg.target(img)?;
    let (ph, pw) = (h + 2 * cfg.pad, w + 2 * cfg.pad);
    if th > ph || tw > pw {
        return Err(Error::Config(format!(
            "crop {th}x{tw} does not fit a {h}x{w} image padded by {}",
            cfg.pad
        )));
    }
    let oy = rng.random_range(0..=ph - th) as i64 - cfg.pad as i64;
    let ox = rng.random_range(0..=pw - tw) as i64 - cfg.pad as i64;
    let flip = rng.random_bool(0.5);
    Ok(ImageBuffer::from_fn(th, tw, img.channels(), |y, x, c| {
        let x = if flip { tw - 1 - x } else { x };
        img.get(mirror_index(y as i64 + oy, h), mirror_index(x as i64 + ox, w), c)
    }))
}

/// Random square crop of side `U[lo, hi] * min(h, w)`, resized to the target
/// size, flipped with probability 1/2.
pub(crate) fn scale_crop_flip<R: Rng + ?Sized>(
    img: &ImageBuffer,
    cfg: &PositionalConfig,
    rng: &mut R,
) -> Result<ImageBuffer> {
    let (lo, hi) = cfg.scale_range;
    if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
        return Err(Error::Config(format!(
            "scale range ({lo}, {hi}) must satisfy 0 < lo <= hi <= 1"
        )));
    }
    let target = cfg.target(img)?;
    let (h, w, _) = img.dims();
    let short = h.min(w);
    let scale = if lo == hi { lo } else { rng.random_range(lo..=hi) };
    let side = ((scale * short as f64).round() as usize).clamp(1, short);
    let oy = rng.random_range(0..=h - side);
    let ox = rng.random_range(0..=w - side);
    let flip = rng.random_bool(0.5);
    Ok(resize_region(img, oy, ox, side, side, target, flip))
}

/// Deterministic corner or centre crop, resized to the target size.
pub(crate) fn fixed_crop(
    img: &ImageBuffer,
    anchor: CropAnchor,
    flip: bool,
    cfg: &PositionalConfig,
) -> Result<ImageBuffer> {
    let f = cfg.multicrop_fraction;
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::Config(format!("multi-crop fraction {f} must lie in (0, 1]")));
    }
    let target = cfg.target(img)?;
    let (h, w, _) = img.dims();
    let ch = ((f * h as f64).round() as usize).clamp(1, h);
    let cw = ((f * w as f64).round() as usize).clamp(1, w);
    let (oy, ox) = match anchor {
        CropAnchor::TopLeft => (0, 0),
        CropAnchor::TopRight => (0, w - cw),
        CropAnchor::BottomLeft => (h - ch, 0),
        CropAnchor::BottomRight => (h - ch, w - cw),
        CropAnchor::Center => ((h - ch) / 2, (w - cw) / 2),
    };
    Ok(resize_region(img, oy, ox, ch, cw, target, flip))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn img() -> ImageBuffer {
        ImageBuffer::from_fn(8, 8, 3, |y, x, c| (y * 30 + x * 3 + c) as u8)
    }

    #[test]
    fn full_scale_crop_without_flip_is_identity_or_mirror() {
        let im = img();
        let cfg = PositionalConfig {
            scale_range: (1.0, 1.0),
            ..Default::default()
        };
        for seed in 0..8 {
            let out = scale_crop_flip(&im, &cfg, &mut stream(seed, &[])).unwrap();
            assert!(out == im || out == im.flip_horizontal());
        }
    }

    #[test]
    fn scale_crop_flip_output_has_target_size() {
        let cfg = PositionalConfig {
            crop_size: Some((5, 6)),
            ..Default::default()
        };
        let out = scale_crop_flip(&img(), &cfg, &mut stream(1, &[])).unwrap();
        assert_eq!(out.dims(), (5, 6, 3));
    }

    #[test]
    fn pad_crop_flip_rows_are_shifted_copies() {
        let im = img();
        let cfg = PositionalConfig::default();
        let out = pad_crop_flip(&im, &cfg, &mut stream(4, &[])).unwrap();
        assert_eq!(out.dims(), im.dims());
        // Every output pixel value exists in the source image.
        for &p in out.data() {
            assert!(im.data().contains(&p));
        }
    }

    #[test]
    fn fixed_crops_differ_by_anchor() {
        // Large enough that the centre offset differs from both corners.
        let im = ImageBuffer::from_fn(16, 16, 3, |y, x, c| (y * 15 + x * 2 + c) as u8);
        let cfg = PositionalConfig::default();
        let crops: Vec<_> = CropAnchor::FIVE
            .iter()
            .map(|&a| fixed_crop(&im, a, false, &cfg).unwrap())
            .collect();
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(crops[i], crops[j]);
            }
        }
        let flipped = fixed_crop(&im, CropAnchor::Center, true, &cfg).unwrap();
        assert_eq!(flipped, crops[4].flip_horizontal());
    }

    #[test]
    fn full_fraction_centre_crop_is_identity() {
        let im = img();
        let cfg = PositionalConfig {
            multicrop_fraction: 1.0,
            ..Default::default()
        };
        assert_eq!(fixed_crop(&im, CropAnchor::Center, false, &cfg).unwrap(), im);
    }
}
