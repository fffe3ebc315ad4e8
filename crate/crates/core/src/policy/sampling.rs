use rand::Rng;

use super::{PoolRecipe, Style, SubPolicy};
use crate::error::{Error, Result};
use crate::imageops::{TransformInstance, TransformKind};

const QUANTUM: f64 = 1e6;

/// `U[0, m]` on the magnitude grid, never above `m`.
fn draw_magnitude<R: Rng + ?Sized>(m: f64, rng: &mut R) -> f64 {
    if m == 0.0 {
        return 0.0;
    }
    let raw: f64 = rng.random_range(0.0..=m);
    let mut k = (raw * QUANTUM).round();
    while k > 0.0 && k / QUANTUM > m {
        k -= 1.0;
    }
    k / QUANTUM
}

/// Draw `n` kinds uniformly from the style's legal set, each with a frozen
/// magnitude from `U[0, m]`. ImageNet style prepends `ScaleCropFlip`, which is
/// not counted in `n`.
pub fn sample_subpolicy<R: Rng + ?Sized>(n: usize, m: f64, style: Style, id: usize, rng: &mut R) -> Result<SubPolicy> {
    if !(m.is_finite() && m >= 0.0) {
        return Err(Error::InvalidMagnitude(m));
    }
    let kinds = style.legal_kinds();
    if kinds.is_empty() {
        return Err(Error::Config(format!("style {style} has no drawable transform kinds")));
    }
    if n == 0 && style != Style::ImageNet {
        return Err(Error::Config("sub-policy length must be at least 1".into()));
    }
    let mut transforms = Vec::with_capacity(n + 1);
    if style == Style::ImageNet {
        transforms.push(TransformInstance::new(TransformKind::ScaleCropFlip, 0.0)?);
    }
    for _ in 0..n {
        let kind = kinds[rng.random_range(0..kinds.len())];
        let magnitude = draw_magnitude(m, rng);
        transforms.push(TransformInstance::new(kind, magnitude)?);
    }
    SubPolicy::new(id, style, transforms)
}

/// The no-op sub-policy of a recipe. CIFAR style keeps its trailing crop and
/// flip; ImageNet style has no scale-crop-flip, so it degrades to bare.
pub fn identity_subpolicy(id: usize, style: Style) -> SubPolicy {
    let style = match style {
        Style::ImageNet => Style::Bare,
        other => other,
    };
    let t = TransformInstance::new(TransformKind::Identity, 0.0).expect("identity");
    SubPolicy::new(id, style, vec![t]).expect("non-empty")
}

/// Sample every segment in order, then append the identity sub-policy if
/// requested. Ids run `0..B` in generation order.
pub fn generate_pool<R: Rng + ?Sized>(recipe: &PoolRecipe, rng: &mut R) -> Result<Vec<SubPolicy>> {
    let mut pool = Vec::with_capacity(recipe.pool_size());
    for seg in &recipe.segments {
        for _ in 0..seg.count {
            let id = pool.len();
            pool.push(sample_subpolicy(seg.n, seg.m, recipe.style, id, rng)?);
        }
    }
    if recipe.include_identity {
        let id = pool.len();
        pool.push(identity_subpolicy(id, recipe.style));
    }
    Ok(pool)
}
