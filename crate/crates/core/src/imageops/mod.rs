//! Parametric 8-bit RGB image transforms.
//!
//! Every transform is a pure function of its input image, its
//! [`TransformInstance`] and an explicit random stream. Geometric
//! transforms resample bilinearly and extend the image by mirror
//! reflection, so a constant image stays constant under all of them.

mod color;
mod geometric;
mod io;
mod kinds;
mod positional;
mod sampling;

pub use io::{
    read_image, read_png, read_raw, read_raw_from, write_image, write_png, write_raw, write_raw_to, RAW_MAGIC,
};
pub use kinds::{magnitude_to_param, TransformInstance, TransformKind};
pub use positional::{CropAnchor, PositionalConfig};

use rand::Rng;

use crate::error::{Error, Result};
use crate::policy::{Style, SubPolicy};

/// Row-major interleaved 8-bit image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::ShapeMismatch(format!(
                "image dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{height}x{width}x{channels} image needs {expected} bytes, got {}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: &[u8]) -> Result<Self> {
        if value.len() != channels {
            return Err(Error::ShapeMismatch(format!(
                "fill value has {} channels, image has {channels}",
                value.len()
            )));
        }
        let data = value.iter().copied().cycle().take(height * width * channels).collect();
        Self::new(height, width, channels, data)
    }

    pub fn from_fn(height: usize, width: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub(crate) fn set(&mut self, y: usize, x: usize, c: usize, v: u8) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Apply a per-channel lookup table.
    pub(crate) fn map_lut(&self, luts: &[[u8; 256]]) -> Self {
        let channels = self.channels;
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, &p)| luts[i % channels][p as usize])
            .collect();
        Self { data, ..*self }
    }

    pub(crate) fn map_pixels(&self, f: impl Fn(u8) -> u8) -> Self {
        Self {
            data: self.data.iter().map(|&p| f(p)).collect(),
            ..*self
        }
    }

    /// Horizontal mirror.
    pub fn flip_horizontal(&self) -> Self {
        let w = self.width;
        Self::from_fn(self.height, w, self.channels, |y, x, c| self.get(y, w - 1 - x, c))
    }

    fn with_data(&self, data: Vec<u8>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self { data, ..*self }
    }
}

/// Apply one transform. The input is untouched; randomness (direction signs,
/// enhancement signs, cutout and crop positions) comes from `rng`.
pub fn apply_transform<R: Rng + ?Sized>(
    img: &ImageBuffer,
    t: &TransformInstance,
    positional: &PositionalConfig,
    rng: &mut R,
) -> Result<ImageBuffer> {
    let v = t.param();
    use TransformKind::*;
    let out = match t.kind() {
        Identity => img.clone(),
        ShearX => geometric::shear_x(img, random_sign(rng) * v),
        ShearY => geometric::shear_y(img, random_sign(rng) * v),
        TranslateX => geometric::translate_x(img, random_sign(rng) * v),
        TranslateY => geometric::translate_y(img, random_sign(rng) * v),
        Rotate => geometric::rotate(img, random_sign(rng) * v),
        Cutout => geometric::cutout(img, v, rng),
        Autocontrast => color::autocontrast(img, v),
        Solarize => color::solarize(img, v),
        SolarizeAdd => color::solarize_add(img, v),
        Posterize => color::posterize(img, v),
        Contrast => color::contrast(img, 1.0 + random_sign(rng) * v),
        Brightness => color::brightness(img, 1.0 + random_sign(rng) * v),
        Color => color::color(img, 1.0 + random_sign(rng) * v),
        Sharpness => color::sharpness(img, 1.0 + random_sign(rng) * v),
        Invert => color::invert(img),
        Equalize => color::equalize(img),
        ScaleCropFlip => positional::scale_crop_flip(img, positional, rng)?,
    };
    Ok(out)
}

/// Apply a sub-policy: its transforms in order, with the positional step its
/// style prescribes (trailing pad-crop-flip for CIFAR style, a fixed crop for
/// multi-crop presets). ImageNet style carries its scale-crop-flip as the
/// first listed transform.
pub fn apply_subpolicy<R: Rng + ?Sized>(
    img: &ImageBuffer,
    s: &SubPolicy,
    positional: &PositionalConfig,
    rng: &mut R,
) -> Result<ImageBuffer> {
    let mut out = img.clone();
    for t in s.transforms() {
        out = apply_transform(&out, t, positional, rng)?;
    }
    if positional.enabled {
        match s.style() {
            Style::Cifar => out = positional::pad_crop_flip(&out, positional, rng)?,
            Style::FixedCrop { anchor, flip } => out = positional::fixed_crop(&out, anchor, flip, positional)?,
            Style::ImageNet | Style::Bare => {}
        }
    }
    Ok(out)
}

fn random_sign<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    pub(crate) fn gradient_image(h: usize, w: usize) -> ImageBuffer {
        ImageBuffer::from_fn(h, w, 3, |y, x, c| ((y * 37 + x * 11 + c * 71) % 256) as u8)
    }

    fn inst(kind: TransformKind, m: f64) -> TransformInstance {
        TransformInstance::new(kind, m).unwrap()
    }

    #[test]
    fn buffer_rejects_bad_lengths() {
        assert!(ImageBuffer::new(2, 2, 3, vec![0; 11]).is_err());
        assert!(ImageBuffer::new(0, 2, 3, vec![]).is_err());
        assert!(ImageBuffer::new(2, 2, 3, vec![0; 12]).is_ok());
    }

    #[test]
    fn identity_and_double_invert() {
        let img = gradient_image(9, 7);
        let cfg = PositionalConfig::default();
        let mut rng = stream(1, &[]);
        let id = apply_transform(&img, &inst(TransformKind::Identity, 30.0), &cfg, &mut rng).unwrap();
        assert_eq!(id, img);
        let inv = inst(TransformKind::Invert, 0.0);
        let once = apply_transform(&img, &inv, &cfg, &mut rng).unwrap();
        assert_ne!(once, img);
        let twice = apply_transform(&once, &inv, &cfg, &mut rng).unwrap();
        assert_eq!(twice, img);
    }

    #[test]
    fn input_is_untouched_and_output_deterministic() {
        let img = gradient_image(8, 8);
        let copy = img.clone();
        let cfg = PositionalConfig::default();
        for kind in TransformKind::ALL {
            let t = inst(kind, 30.0);
            let a = apply_transform(&img, &t, &cfg, &mut stream(5, &[kind as u64])).unwrap();
            let b = apply_transform(&img, &t, &cfg, &mut stream(5, &[kind as u64])).unwrap();
            assert_eq!(a, b, "{kind:?}");
            assert_eq!(img, copy);
        }
    }

    #[test]
    fn subpolicy_of_identities_without_positional_step() {
        let img = gradient_image(6, 6);
        let s = SubPolicy::new(0, Style::Cifar, vec![inst(TransformKind::Identity, 0.0); 3]).unwrap();
        let cfg = PositionalConfig {
            enabled: false,
            ..Default::default()
        };
        assert_eq!(apply_subpolicy(&img, &s, &cfg, &mut stream(0, &[])).unwrap(), img);
    }

    #[test]
    fn rotate_then_invert_composes_single_ops() {
        let img = gradient_image(10, 12);
        let cfg = PositionalConfig {
            enabled: false,
            ..Default::default()
        };
        let s = SubPolicy::new(
            0,
            Style::Bare,
            vec![inst(TransformKind::Rotate, 45.0), inst(TransformKind::Invert, 0.0)],
        )
        .unwrap();
        let out = apply_subpolicy(&img, &s, &cfg, &mut stream(3, &[])).unwrap();
        // The rotation sign is the first draw of the same stream.
        let sign = random_sign(&mut stream(3, &[]));
        let expected = color::invert(&geometric::rotate(&img, sign * 60.0));
        assert_eq!(out, expected);
    }

    #[test]
    fn full_cutout_replaces_whole_image() {
        let img = gradient_image(4, 4);
        let cfg = PositionalConfig::default();
        let out = apply_transform(&img, &inst(TransformKind::Cutout, 60.0), &cfg, &mut stream(9, &[])).unwrap();
        let first = [out.get(0, 0, 0), out.get(0, 0, 1), out.get(0, 0, 2)];
        for y in 0..4 {
            for x in 0..4 {
                for (c, &f) in first.iter().enumerate() {
                    assert_eq!(out.get(y, x, c), f);
                }
            }
        }
        // Fill is the rounded per-channel mean of the input.
        for (c, &f) in first.iter().enumerate() {
            let sum: u32 = (0..4)
                .flat_map(|y| (0..4).map(move |x| (y, x)))
                .map(|(y, x)| img.get(y, x, c) as u32)
                .sum();
            assert_eq!(f as u32, (sum + 8) / 16);
        }
    }

    #[test]
    fn cifar_style_keeps_shape() {
        let img = gradient_image(32, 32);
        let s = SubPolicy::new(0, Style::Cifar, vec![inst(TransformKind::Rotate, 20.0)]).unwrap();
        let out = apply_subpolicy(&img, &s, &PositionalConfig::default(), &mut stream(2, &[])).unwrap();
        assert_eq!(out.dims(), img.dims());
    }

    #[test]
    fn oversized_crop_target_is_a_configuration_error() {
        let img = gradient_image(8, 8);
        let s = SubPolicy::new(0, Style::Cifar, vec![inst(TransformKind::Identity, 0.0)]).unwrap();
        let cfg = PositionalConfig {
            crop_size: Some((40, 40)),
            ..Default::default()
        };
        assert!(matches!(
            apply_subpolicy(&img, &s, &cfg, &mut stream(2, &[])),
            Err(Error::Config(_))
        ));
    }
}
