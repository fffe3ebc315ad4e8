//! Sub-policies, policies, pool recipes and their text form.

mod format;
mod presets;
mod sampling;

pub use format::{parse_policy, serialize_policy, FORMAT_HEADER};
pub use presets::{crop_flip_policy, preset_policy, Preset, PresetName};
pub use sampling::{generate_pool, identity_subpolicy, sample_subpolicy};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::imageops::{CropAnchor, TransformInstance, TransformKind};

/// Where the positional (crop/flip) step of a sub-policy goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Style {
    /// Random pad-crop and horizontal flip after the chain.
    Cifar,
    /// `ScaleCropFlip` as the first listed transform.
    ImageNet,
    /// No positional step.
    Bare,
    /// A deterministic multi-crop view (5-crop / 10-crop presets).
    FixedCrop { anchor: CropAnchor, flip: bool },
}

impl Style {
    /// Kinds a sampled sub-policy of this style may draw.
    pub fn legal_kinds(self) -> &'static [TransformKind] {
        match self {
            Style::Cifar | Style::Bare => &TransformKind::CIFAR_SET,
            Style::ImageNet => &TransformKind::IMAGENET_SET,
            Style::FixedCrop { .. } => &[],
        }
    }
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Style::Cifar => f.write_str("cifar"),
            Style::ImageNet => f.write_str("imagenet"),
            Style::Bare => f.write_str("bare"),
            Style::FixedCrop { anchor, flip } => {
                write!(f, "crop-{anchor}")?;
                if *flip {
                    f.write_str("-flip")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for Style {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cifar" => Ok(Style::Cifar),
            "imagenet" => Ok(Style::ImageNet),
            "bare" => Ok(Style::Bare),
            _ => {
                let rest = s
                    .strip_prefix("crop-")
                    .ok_or_else(|| Error::Config(format!("unknown style `{s}`")))?;
                let (anchor, flip) = match rest.strip_suffix("-flip") {
                    Some(a) => (a, true),
                    None => (rest, false),
                };
                Ok(Style::FixedCrop {
                    anchor: anchor.parse()?,
                    flip,
                })
            }
        }
    }
}

/// An ordered chain of transforms with frozen magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct SubPolicy {
    id: usize,
    style: Style,
    transforms: Vec<TransformInstance>,
}

impl SubPolicy {
    pub fn new(id: usize, style: Style, transforms: Vec<TransformInstance>) -> Result<Self> {
        if transforms.is_empty() {
            return Err(Error::Config(format!("sub-policy {id} has no transforms")));
        }
        if style == Style::ImageNet && transforms[0].kind() != TransformKind::ScaleCropFlip {
            return Err(Error::Config(format!(
                "imagenet-style sub-policy {id} must start with ScaleCropFlip"
            )));
        }
        Ok(Self { id, style, transforms })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn style(&self) -> Style {
        self.style
    }

    pub fn transforms(&self) -> &[TransformInstance] {
        &self.transforms
    }

    /// Number of sampled operations, not counting a leading `ScaleCropFlip`.
    pub fn sampled_len(&self) -> usize {
        match self.style {
            Style::ImageNet => self.transforms.len() - 1,
            _ => self.transforms.len(),
        }
    }

    pub fn with_id(mut self, id: usize) -> Self {
        self.id = id;
        self
    }
}

/// An ordered multiset of sub-policies. Repeats are allowed: greedy search
/// selects with replacement.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    subpolicies: Vec<SubPolicy>,
}

impl Policy {
    pub fn new(subpolicies: Vec<SubPolicy>) -> Result<Self> {
        if subpolicies.is_empty() {
            return Err(Error::Config("a policy needs at least one sub-policy".into()));
        }
        Ok(Self { subpolicies })
    }

    /// Policy made of the pool members at `ids`, in order.
    pub fn from_ids(pool: &[SubPolicy], ids: &[usize]) -> Result<Self> {
        let subpolicies = ids
            .iter()
            .map(|&id| {
                pool.get(id).cloned().ok_or(Error::OutOfRange {
                    index: id,
                    len: pool.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(subpolicies)
    }

    pub fn subpolicies(&self) -> &[SubPolicy] {
        &self.subpolicies
    }

    pub fn into_subpolicies(self) -> Vec<SubPolicy> {
        self.subpolicies
    }

    pub fn len(&self) -> usize {
        self.subpolicies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subpolicies.is_empty()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.subpolicies.iter().map(SubPolicy::id).collect()
    }
}

/// `count` sub-policies of `n` operations with magnitudes drawn from `U[0, m]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub count: usize,
    pub n: usize,
    pub m: f64,
}

/// Prior over sub-policies, as a list of sampling segments.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolRecipe {
    pub segments: Vec<Segment>,
    pub include_identity: bool,
    pub style: Style,
}

impl PoolRecipe {
    pub fn new(segments: Vec<Segment>, include_identity: bool, style: Style) -> Result<Self> {
        for s in &segments {
            if s.count == 0 {
                return Err(Error::Config("segment count must be positive".into()));
            }
            if !(s.m.is_finite() && s.m >= 0.0) {
                return Err(Error::InvalidMagnitude(s.m));
            }
            if s.n == 0 && style != Style::ImageNet {
                return Err(Error::Config(format!("{style}-style segments need N >= 1")));
            }
        }
        Ok(Self {
            segments,
            include_identity,
            style,
        })
    }

    /// 500 x (N=3, M=45), 500 x (N=3, M=20), 100 x (N=3, M=0), plus identity:
    /// 1101 sub-policies.
    pub fn cifar_default() -> Self {
        Self::parse_segments("500:3:45,500:3:20,100:3:0", true, Style::Cifar).expect("valid default")
    }

    /// 300 x (2, 45), 300 x (2, 20), 100 x (3, 10), 100 x (1, 45) and 100
    /// scale-crop-flip-only sub-policies: 900 in total.
    pub fn imagenet_default() -> Self {
        Self::parse_segments("300:2:45,300:2:20,100:3:10,100:1:45,100:0:0", false, Style::ImageNet)
            .expect("valid default")
    }

    /// Parse `count:N:M` segments separated by commas.
    pub fn parse_segments(text: &str, include_identity: bool, style: Style) -> Result<Self> {
        let segments = text
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .enumerate()
            .map(|(i, seg)| {
                let parts: Vec<&str> = seg.split(':').collect();
                if parts.len() != 3 {
                    return Err(Error::parse(
                        1,
                        format!("segment[{i}]"),
                        format!("`{seg}` is not count:N:M"),
                    ));
                }
                let count = parts[0]
                    .parse()
                    .map_err(|_| Error::parse(1, format!("segment[{i}].count"), format!("`{}`", parts[0])))?;
                let n = parts[1]
                    .parse()
                    .map_err(|_| Error::parse(1, format!("segment[{i}].N"), format!("`{}`", parts[1])))?;
                let m: f64 = parts[2]
                    .parse()
                    .map_err(|_| Error::parse(1, format!("segment[{i}].M"), format!("`{}`", parts[2])))?;
                Ok(Segment { count, n, m })
            })
            .collect::<Result<Vec<_>>>()?;
        if segments.is_empty() && !include_identity {
            return Err(Error::Config("recipe produces an empty pool".into()));
        }
        Self::new(segments, include_identity, style)
    }

    pub fn pool_size(&self) -> usize {
        self.segments.iter().map(|s| s.count).sum::<usize>() + usize::from(self.include_identity)
    }
}

impl fmt::Display for PoolRecipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let segs: Vec<String> = self
            .segments
            .iter()
            .map(|s| format!("{}:{}:{}", s.count, s.n, s.m))
            .collect();
        f.write_str(&segs.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_recipe_sizes() {
        assert_eq!(PoolRecipe::cifar_default().pool_size(), 1101);
        assert_eq!(PoolRecipe::imagenet_default().pool_size(), 900);
    }

    #[test]
    fn recipe_syntax_errors() {
        assert!(PoolRecipe::parse_segments("0:3:45", false, Style::Cifar).is_err());
        assert!(PoolRecipe::parse_segments("10:3", false, Style::Cifar).is_err());
        assert!(PoolRecipe::parse_segments("10:x:3", false, Style::Cifar).is_err());
        assert!(PoolRecipe::parse_segments("10:3:-1", false, Style::Cifar).is_err());
        assert!(PoolRecipe::parse_segments("10:0:5", false, Style::Cifar).is_err());
        let r = PoolRecipe::parse_segments("1:1:0", true, Style::Cifar).unwrap();
        assert_eq!(r.pool_size(), 2);
        assert_eq!(r.to_string(), "1:1:0");
    }

    #[test]
    fn style_names_round_trip() {
        let styles = [
            Style::Cifar,
            Style::ImageNet,
            Style::Bare,
            Style::FixedCrop {
                anchor: CropAnchor::BottomRight,
                flip: true,
            },
            Style::FixedCrop {
                anchor: CropAnchor::Center,
                flip: false,
            },
        ];
        for s in styles {
            assert_eq!(s.to_string().parse::<Style>().unwrap(), s);
        }
        assert!("crop-middle".parse::<Style>().is_err());
    }

    #[test]
    fn empty_policy_rejected() {
        assert!(Policy::new(vec![]).is_err());
    }
}
