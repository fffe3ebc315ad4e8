use std::fmt;
use std::str::FromStr;

use super::{identity_subpolicy, Policy, PoolRecipe, Segment, Style, SubPolicy};
use crate::error::{Error, Result};
use crate::imageops::{CropAnchor, TransformInstance, TransformKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetName {
    CentralCrop,
    CropFlip,
    FiveCrop,
    TenCrop,
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "central-crop" => Ok(Self::CentralCrop),
            "crop-flip" => Ok(Self::CropFlip),
            "5-crop" => Ok(Self::FiveCrop),
            "10-crop" => Ok(Self::TenCrop),
            _ => Err(Error::Config(format!(
                "unknown preset `{s}` (expected central-crop, crop-flip, 5-crop or 10-crop)"
            ))),
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::CentralCrop => "central-crop",
            Self::CropFlip => "crop-flip",
            Self::FiveCrop => "5-crop",
            Self::TenCrop => "10-crop",
        })
    }
}

/// A baseline: either a fixed policy or a recipe whose samples form one.
#[derive(Debug, Clone, PartialEq)]
pub enum Preset {
    Policy(Policy),
    Recipe(PoolRecipe),
}

fn crop_subpolicy(id: usize, anchor: CropAnchor, flip: bool) -> SubPolicy {
    let t = TransformInstance::new(TransformKind::Identity, 0.0).expect("identity");
    SubPolicy::new(id, Style::FixedCrop { anchor, flip }, vec![t]).expect("non-empty")
}

/// Baseline policies. `crop_flip_samples` is the number of random
/// scale-crop-flip sub-policies in the crop-flip recipe.
pub fn preset_policy(name: &str, crop_flip_samples: usize) -> Result<Preset> {
    let preset = match name.parse::<PresetName>()? {
        PresetName::CentralCrop => Preset::Policy(Policy::new(vec![identity_subpolicy(0, Style::Bare)])?),
        PresetName::CropFlip => Preset::Recipe(PoolRecipe::new(
            vec![Segment {
                count: crop_flip_samples,
                n: 0,
                m: 0.0,
            }],
            false,
            Style::ImageNet,
        )?),
        PresetName::FiveCrop => Preset::Policy(Policy::new(
            CropAnchor::FIVE
                .iter()
                .enumerate()
                .map(|(i, &a)| crop_subpolicy(i, a, false))
                .collect(),
        )?),
        PresetName::TenCrop => Preset::Policy(Policy::new(
            [false, true]
                .iter()
                .flat_map(|&flip| CropAnchor::FIVE.iter().map(move |&a| (a, flip)))
                .enumerate()
                .map(|(i, (a, flip))| crop_subpolicy(i, a, flip))
                .collect(),
        )?),
    };
    Ok(preset)
}

/// Crop-flip baseline as a fixed policy of `samples` independent draws:
/// pad-crop-flip for CIFAR style, scale-crop-flip for ImageNet style.
pub fn crop_flip_policy(samples: usize, style: Style) -> Result<Policy> {
    if samples == 0 {
        return Err(Error::Config("crop-flip needs at least one sample".into()));
    }
    let subpolicies = (0..samples)
        .map(|id| match style {
            Style::Cifar => Ok(identity_subpolicy(id, Style::Cifar)),
            Style::ImageNet => SubPolicy::new(
                id,
                Style::ImageNet,
                vec![TransformInstance::new(TransformKind::ScaleCropFlip, 0.0)?],
            ),
            other => Err(Error::Config(format!("crop-flip is not defined for {other} style"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Policy::new(subpolicies)
}
