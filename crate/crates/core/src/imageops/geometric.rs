use rand::Rng;

use super::sampling::{to_u8, warp};
use super::ImageBuffer;

fn centre(img: &ImageBuffer) -> (f64, f64) {
    ((img.height() as f64 - 1.0) / 2.0, (img.width() as f64 - 1.0) / 2.0)
}

/// Horizontal shear by `k` pixels of x per pixel of y, about the centre row.
pub(crate) fn shear_x(img: &ImageBuffer, k: f64) -> ImageBuffer {
    let (cy, _) = centre(img);
    warp(img, img.height(), img.width(), |y, x| (y, x + k * (y - cy)))
}

pub(crate) fn shear_y(img: &ImageBuffer, k: f64) -> ImageBuffer {
    let (_, cx) = centre(img);
    warp(img, img.height(), img.width(), |y, x| (y + k * (x - cx), x))
}

/// Shift right by `fraction` of the width.
pub(crate) fn translate_x(img: &ImageBuffer, fraction: f64) -> ImageBuffer {
    let dx = fraction * img.width() as f64;
    warp(img, img.height(), img.width(), |y, x| (y, x - dx))
}

pub(crate) fn translate_y(img: &ImageBuffer, fraction: f64) -> ImageBuffer {
    let dy = fraction * img.height() as f64;
    warp(img, img.height(), img.width(), |y, x| (y - dy, x))
}

/// Counter-clockwise rotation about the centre, in degrees.
pub(crate) fn rotate(img: &ImageBuffer, degrees: f64) -> ImageBuffer {
    let (cy, cx) = centre(img);
    let (sin, cos) = degrees.to_radians().sin_cos();
    warp(img, img.height(), img.width(), |y, x| {
        let (dy, dx) = (y - cy, x - cx);
        (cy + dx * sin + dy * cos, cx + dx * cos - dy * sin)
    })
}

/// Square hole of side `fraction * min(h, w)`, placed uniformly inside the
/// image and filled with the rounded per-channel image mean.
pub(crate) fn cutout<R: Rng + ?Sized>(img: &ImageBuffer, fraction: f64, rng: &mut R) -> ImageBuffer {
    let (h, w, channels) = img.dims();
    let side = ((fraction * h.min(w) as f64).round() as usize).min(h.min(w));
    if side == 0 {
        return img.clone();
    }
    let y0 = rng.random_range(0..=h - side);
    let x0 = rng.random_range(0..=w - side);
    let n = (h * w) as f64;
    let fill: Vec<u8> = (0..channels)
        .map(|c| {
            let sum: u64 = img.data().iter().skip(c).step_by(channels).map(|&p| p as u64).sum();
            to_u8(sum as f64 / n)
        })
        .collect();
    let mut out = img.clone();
    for y in y0..y0 + side {
        for x in x0..x0 + side {
            for (c, &f) in fill.iter().enumerate() {
                out.set(y, x, c, f);
            }
        }
    }
    out
}
