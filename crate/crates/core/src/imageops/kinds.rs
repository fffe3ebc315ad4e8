use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TransformKind {
    Identity,
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
    Rotate,
    Autocontrast,
    Solarize,
    SolarizeAdd,
    Posterize,
    Contrast,
    Brightness,
    Color,
    Sharpness,
    Cutout,
    Invert,
    Equalize,
    ScaleCropFlip,
}

impl TransformKind {
    pub const ALL: [TransformKind; 18] = [
        Self::Identity,
        Self::ShearX,
        Self::ShearY,
        Self::TranslateX,
        Self::TranslateY,
        Self::Rotate,
        Self::Autocontrast,
        Self::Solarize,
        Self::SolarizeAdd,
        Self::Posterize,
        Self::Contrast,
        Self::Brightness,
        Self::Color,
        Self::Sharpness,
        Self::Cutout,
        Self::Invert,
        Self::Equalize,
        Self::ScaleCropFlip,
    ];

    /// Kinds drawn for CIFAR-style sub-policies.
    pub const CIFAR_SET: [TransformKind; 15] = [
        Self::Identity,
        Self::ShearX,
        Self::ShearY,
        Self::TranslateX,
        Self::TranslateY,
        Self::Rotate,
        Self::Autocontrast,
        Self::Solarize,
        Self::SolarizeAdd,
        Self::Posterize,
        Self::Contrast,
        Self::Brightness,
        Self::Color,
        Self::Sharpness,
        Self::Cutout,
    ];

    /// CIFAR set plus `Invert` and `Equalize`.
    pub const IMAGENET_SET: [TransformKind; 17] = [
        Self::Identity,
        Self::ShearX,
        Self::ShearY,
        Self::TranslateX,
        Self::TranslateY,
        Self::Rotate,
        Self::Autocontrast,
        Self::Solarize,
        Self::SolarizeAdd,
        Self::Posterize,
        Self::Contrast,
        Self::Brightness,
        Self::Color,
        Self::Sharpness,
        Self::Cutout,
        Self::Invert,
        Self::Equalize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "Identity",
            Self::ShearX => "ShearX",
            Self::ShearY => "ShearY",
            Self::TranslateX => "TranslateX",
            Self::TranslateY => "TranslateY",
            Self::Rotate => "Rotate",
            Self::Autocontrast => "Autocontrast",
            Self::Solarize => "Solarize",
            Self::SolarizeAdd => "SolarizeAdd",
            Self::Posterize => "Posterize",
            Self::Contrast => "Contrast",
            Self::Brightness => "Brightness",
            Self::Color => "Color",
            Self::Sharpness => "Sharpness",
            Self::Cutout => "Cutout",
            Self::Invert => "Invert",
            Self::Equalize => "Equalize",
            Self::ScaleCropFlip => "ScaleCropFlip",
        }
    }

    /// Spatial transforms, resampled with mirrored background.
    pub fn is_geometric(self) -> bool {
        matches!(
            self,
            Self::ShearX | Self::ShearY | Self::TranslateX | Self::TranslateY | Self::Rotate | Self::Cutout
        )
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidKind(s.to_string()))
    }
}

/// Operation parameter for a frozen magnitude.
///
/// | kind | parameter |
/// |---|---|
/// | ShearX/Y, Cutout | `m / 60` (fraction) |
/// | TranslateX/Y | `0.015 m` (fraction of the side) |
/// | Rotate | `4m / 3` (degrees) |
/// | Autocontrast | `m / 3` (percent cut from each histogram tail) |
/// | Solarize, SolarizeAdd | `256 - 64m / 15` (threshold) |
/// | Posterize | `max(0, 8 - 0.2 m)` (bits kept) |
/// | Contrast, Brightness | `2m / 75` |
/// | Color, Sharpness | `0.03 m` |
/// | Identity, Invert, Equalize, ScaleCropFlip | none, returns 0 |
pub fn magnitude_to_param(kind: TransformKind, m: f64) -> Result<f64> {
    if !(m.is_finite() && m >= 0.0) {
        return Err(Error::InvalidMagnitude(m));
    }
    use TransformKind::*;
    Ok(match kind {
        ShearX | ShearY | Cutout => m / 60.0,
        TranslateX | TranslateY => 0.015 * m,
        Rotate => 4.0 / 3.0 * m,
        Autocontrast => m / 3.0,
        Solarize | SolarizeAdd => 256.0 - 64.0 / 15.0 * m,
        Posterize => (8.0 - 0.2 * m).max(0.0),
        Contrast | Brightness => 2.0 / 75.0 * m,
        Color | Sharpness => 0.03 * m,
        Identity | Invert | Equalize | ScaleCropFlip => 0.0,
    })
}

/// Magnitudes are stored on a 1e-6 grid so that the text form of a policy
/// round-trips exactly.
pub(crate) const MAGNITUDE_QUANTUM: f64 = 1e6;

pub(crate) fn quantize_magnitude(m: f64) -> f64 {
    (m * MAGNITUDE_QUANTUM).round() / MAGNITUDE_QUANTUM
}

/// One transform with its magnitude frozen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformInstance {
    kind: TransformKind,
    magnitude: f64,
    param: f64,
}

impl TransformInstance {
    pub fn new(kind: TransformKind, magnitude: f64) -> Result<Self> {
        magnitude_to_param(kind, magnitude)?;
        let magnitude = quantize_magnitude(magnitude);
        let param = magnitude_to_param(kind, magnitude)?;
        Ok(Self { kind, magnitude, param })
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    pub fn param(&self) -> f64 {
        self.param
    }
}
