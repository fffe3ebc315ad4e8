//! Pixel-value transforms. Enhancements follow the blend convention
//! `out = degenerate + factor * (img - degenerate)`, rounded and clamped.

use super::sampling::to_u8;
use super::ImageBuffer;

fn histogram(img: &ImageBuffer, channel: usize) -> [u64; 256] {
    let mut h = [0u64; 256];
    for &p in img.data().iter().skip(channel).step_by(img.channels()) {
        h[p as usize] += 1;
    }
    h
}

const IDENTITY_LUT: [u8; 256] = {
    let mut lut = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        lut[i] = i as u8;
        i += 1;
    }
    lut
};

/// Per-channel histogram stretch after cutting `cutoff` percent of the
/// pixels from each tail.
pub(crate) fn autocontrast(img: &ImageBuffer, cutoff: f64) -> ImageBuffer {
    let luts: Vec<[u8; 256]> = (0..img.channels())
        .map(|c| {
            let mut h = histogram(img, c);
            let n: u64 = h.iter().sum();
            let cut_total = (n as f64 * cutoff / 100.0).floor() as u64;
            let mut cut = cut_total;
            for bin in h.iter_mut() {
                if cut == 0 {
                    break;
                }
                let take = cut.min(*bin);
                *bin -= take;
                cut -= take;
            }
            let mut cut = cut_total;
            for bin in h.iter_mut().rev() {
                if cut == 0 {
                    break;
                }
                let take = cut.min(*bin);
                *bin -= take;
                cut -= take;
            }
            let lo = h.iter().position(|&b| b > 0);
            let hi = h.iter().rposition(|&b| b > 0);
            match (lo, hi) {
                (Some(lo), Some(hi)) if hi > lo => {
                    let scale = 255.0 / (hi - lo) as f64;
                    let offset = -(lo as f64) * scale;
                    let mut lut = [0u8; 256];
                    for (i, l) in lut.iter_mut().enumerate() {
                        *l = (i as f64 * scale + offset).trunc().clamp(0.0, 255.0) as u8;
                    }
                    lut
                }
                _ => IDENTITY_LUT,
            }
        })
        .collect();
    img.map_lut(&luts)
}

/// Invert every pixel at or above `threshold`.
pub(crate) fn solarize(img: &ImageBuffer, threshold: f64) -> ImageBuffer {
    img.map_pixels(|p| if (p as f64) < threshold { p } else { 255 - p })
}

/// Brighten pixels below mid-grey by `256 - threshold`, saturating at 255.
pub(crate) fn solarize_add(img: &ImageBuffer, threshold: f64) -> ImageBuffer {
    let addition = 256.0 - threshold;
    img.map_pixels(|p| if p < 128 { to_u8(p as f64 + addition) } else { p })
}

/// Keep the top `trunc(bits)` bits of every pixel; zero bits maps to 0.
pub(crate) fn posterize(img: &ImageBuffer, bits: f64) -> ImageBuffer {
    let bits = bits.trunc().clamp(0.0, 8.0) as u32;
    let mask = if bits == 0 {
        0u8
    } else {
        !((1u16 << (8 - bits)) - 1) as u8
    };
    img.map_pixels(|p| p & mask)
}

pub(crate) fn invert(img: &ImageBuffer) -> ImageBuffer {
    img.map_pixels(|p| 255 - p)
}

/// Per-channel histogram equalization with the cumulative step rule
/// `lut[i] = (step / 2 + cdf_before(i)) / step`.
pub(crate) fn equalize(img: &ImageBuffer) -> ImageBuffer {
    let luts: Vec<[u8; 256]> = (0..img.channels())
        .map(|c| {
            let h = histogram(img, c);
            let nonzero: Vec<u64> = h.iter().copied().filter(|&b| b > 0).collect();
            if nonzero.len() <= 1 {
                return IDENTITY_LUT;
            }
            let total: u64 = nonzero.iter().sum();
            let step = (total - nonzero[nonzero.len() - 1]) / 255;
            if step == 0 {
                return IDENTITY_LUT;
            }
            let mut lut = [0u8; 256];
            let mut n = step / 2;
            for (i, l) in lut.iter_mut().enumerate() {
                *l = (n / step).min(255) as u8;
                n += h[i];
            }
            lut
        })
        .collect();
    img.map_lut(&luts)
}

/// ITU-R 601-2 luma with fixed-point rounding.
fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((r as u32 * 19595 + g as u32 * 38470 + b as u32 * 7471 + 0x8000) >> 16) as u8
}

fn luma_plane(img: &ImageBuffer) -> Vec<u8> {
    if img.channels() < 3 {
        return img.data().iter().step_by(img.channels()).copied().collect();
    }
    img.data()
        .chunks_exact(img.channels())
        .map(|px| luma(px[0], px[1], px[2]))
        .collect()
}

fn blend(img: &ImageBuffer, degenerate: impl Fn(usize) -> f64, factor: f64) -> ImageBuffer {
    let data = img
        .data()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let d = degenerate(i);
            to_u8(d + factor * (p as f64 - d))
        })
        .collect();
    img.with_data(data)
}

pub(crate) fn brightness(img: &ImageBuffer, factor: f64) -> ImageBuffer {
    blend(img, |_| 0.0, factor)
}

/// Blend against a flat image at the rounded mean luma.
pub(crate) fn contrast(img: &ImageBuffer, factor: f64) -> ImageBuffer {
    let l = luma_plane(img);
    let mean = (l.iter().map(|&v| v as f64).sum::<f64>() / l.len() as f64 + 0.5).floor();
    blend(img, |_| mean, factor)
}

/// Blend against the greyscale version of the image.
pub(crate) fn color(img: &ImageBuffer, factor: f64) -> ImageBuffer {
    let l = luma_plane(img);
    let channels = img.channels();
    blend(img, |i| l[i / channels] as f64, factor)
}

/// Blend against a 3x3 smoothed copy (centre weight 5, neighbours 1, border
/// pixels kept as is).
pub(crate) fn sharpness(img: &ImageBuffer, factor: f64) -> ImageBuffer {
    let (h, w, channels) = img.dims();
    let mut smooth = img.clone();
    if h >= 3 && w >= 3 {
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                for c in 0..channels {
                    let mut acc = 4 * img.get(y, x, c) as u32;
                    for dy in 0..3 {
                        for dx in 0..3 {
                            acc += img.get(y + dy - 1, x + dx - 1, c) as u32;
                        }
                    }
                    smooth.set(y, x, c, to_u8(acc as f64 / 13.0));
                }
            }
        }
    }
    blend(img, |i| smooth.data()[i] as f64, factor)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img() -> ImageBuffer {
        ImageBuffer::from_fn(6, 5, 3, |y, x, c| ((y * 43 + x * 29 + c * 90) % 256) as u8)
    }

    #[test]
    fn threshold_256_solarize_is_identity() {
        let im = img();
        assert_eq!(solarize(&im, 256.0), im);
        assert_eq!(solarize_add(&im, 256.0), im);
    }

    #[test]
    fn solarize_inverts_above_threshold() {
        let im = ImageBuffer::new(1, 3, 1, vec![10, 128, 250]).unwrap();
        assert_eq!(solarize(&im, 128.0).data(), &[10, 127, 5]);
        assert_eq!(solarize_add(&im, 200.0).data(), &[66, 128, 250]);
    }

    #[test]
    fn posterize_bit_counts() {
        let im = ImageBuffer::new(1, 3, 1, vec![255, 130, 7]).unwrap();
        assert_eq!(posterize(&im, 8.0).data(), im.data());
        assert_eq!(posterize(&im, 1.0).data(), &[128, 128, 0]);
        assert_eq!(posterize(&im, 0.0).data(), &[0, 0, 0]);
        assert_eq!(posterize(&im, 7.8).data(), &[254, 130, 6]);
    }

    #[test]
    fn unit_factor_enhancements_are_identity() {
        let im = img();
        assert_eq!(brightness(&im, 1.0), im);
        assert_eq!(contrast(&im, 1.0), im);
        assert_eq!(color(&im, 1.0), im);
        assert_eq!(sharpness(&im, 1.0), im);
    }

    #[test]
    fn zero_factor_enhancements_give_degenerate() {
        let im = img();
        assert!(brightness(&im, 0.0).data().iter().all(|&p| p == 0));
        let c = contrast(&im, 0.0);
        assert!(c.data().iter().all(|&p| p == c.data()[0]));
        let g = color(&im, 0.0);
        for px in g.data().chunks(3) {
            assert!(px[0] == px[1] && px[1] == px[2]);
        }
    }

    #[test]
    fn autocontrast_stretches_to_full_range() {
        let im = ImageBuffer::new(1, 4, 1, vec![10, 20, 30, 61]).unwrap();
        let out = autocontrast(&im, 0.0);
        assert_eq!(out.data(), &[0, 50, 100, 255]);
        let full = ImageBuffer::new(1, 3, 1, vec![0, 77, 255]).unwrap();
        assert_eq!(autocontrast(&full, 0.0), full);
    }

    #[test]
    fn equalize_matches_hand_computation() {
        // Histogram: 0 x2, 100 x1, 200 x1. total=4, last=1, step=(4-1)/255=0 -> identity.
        let im = ImageBuffer::new(1, 4, 1, vec![0, 0, 100, 200]).unwrap();
        assert_eq!(equalize(&im), im);
        // 510 pixels at 0 and 510 at 255: step = (1020-510)/255 = 2, n starts at 1.
        let mut data = vec![0u8; 510];
        data.extend(vec![255u8; 510]);
        let im = ImageBuffer::new(1, 1020, 1, data).unwrap();
        let out = equalize(&im);
        assert_eq!(out.data()[0], 0);
        // lut[255] = (1 + 510) / 2 = 255
        assert_eq!(out.data()[1019], 255);
    }

    #[test]
    fn luma_weights() {
        assert_eq!(luma(255, 255, 255), 255);
        assert_eq!(luma(0, 0, 0), 0);
        assert_eq!(luma(255, 0, 0), 76);
    }
}
