use super::ImageBuffer;

/// Symmetric mirror extension: `... c b a | a b c ... | c b a ...`.
#[inline]
pub(crate) fn mirror_index(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let r = i.rem_euclid(period);
    (if r < n { r } else { period - 1 - r }) as usize
}

pub(crate) fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Bilinear sample at pixel-centre coordinates `(sy, sx)`, writing one value
/// per channel into `out`.
#[inline]
pub(crate) fn bilinear(img: &ImageBuffer, sy: f64, sx: f64, out: &mut [u8]) {
    let y0 = sy.floor();
    let x0 = sx.floor();
    let fy = sy - y0;
    let fx = sx - x0;
    let (h, w) = (img.height(), img.width());
    let ya = mirror_index(y0 as i64, h);
    let yb = mirror_index(y0 as i64 + 1, h);
    let xa = mirror_index(x0 as i64, w);
    let xb = mirror_index(x0 as i64 + 1, w);
    for (c, o) in out.iter_mut().enumerate() {
        let top = (1.0 - fx) * img.get(ya, xa, c) as f64 + fx * img.get(ya, xb, c) as f64;
        let bottom = (1.0 - fx) * img.get(yb, xa, c) as f64 + fx * img.get(yb, xb, c) as f64;
        *o = to_u8((1.0 - fy) * top + fy * bottom);
    }
}

/// Inverse warp: every output pixel `(y, x)` reads the source at `map(y, x)`.
pub(crate) fn warp(img: &ImageBuffer, out_h: usize, out_w: usize, map: impl Fn(f64, f64) -> (f64, f64)) -> ImageBuffer {
    let channels = img.channels();
    let mut data = vec![0u8; out_h * out_w * channels];
    for y in 0..out_h {
        for x in 0..out_w {
            let (sy, sx) = map(y as f64, x as f64);
            let base = (y * out_w + x) * channels;
            bilinear(img, sy, sx, &mut data[base..base + channels]);
        }
    }
    ImageBuffer::new(out_h, out_w, channels, data).expect("warp output shape")
}
