//! Coloured shapes on textured backgrounds: circle, square, triangle.

use rand::Rng;

use crate::imageops::ImageBuffer;
use crate::predcache::LabelVector;
use crate::rng::stream;

pub const SHAPE_CLASSES: [&str; 3] = ["circle", "square", "triangle"];
pub const SHAPE_SIZE: usize = 32;

const SHAPE_STREAM: u64 = 0x5a_0000;

#[derive(Debug, Clone, Copy)]
struct Shape {
    class: usize,
    cy: f64,
    cx: f64,
    radius: f64,
    angle: f64,
}

impl Shape {
    fn contains(&self, y: f64, x: f64) -> bool {
        let (dy, dx) = (y - self.cy, x - self.cx);
        let (s, c) = self.angle.sin_cos();
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        let r = self.radius;
        match self.class {
            0 => u * u + v * v <= r * r,
            1 => u.abs() <= 0.8 * r && v.abs() <= 0.8 * r,
            _ => {
                // Equilateral triangle with circumradius r, apex at -v.
                let h = 0.5 * r;
                v <= h && (3f64.sqrt() * u.abs() - v) <= r
            }
        }
    }
}

/// Image number `index` of the stream `seed`, with its class.
pub fn shape_image(seed: u64, index: usize) -> (ImageBuffer, usize) {
    let mut rng = stream(seed, &[SHAPE_STREAM, index as u64]);
    let class = rng.random_range(0..SHAPE_CLASSES.len());
    let n = SHAPE_SIZE as f64;
    let radius = rng.random_range(7.0..11.0);
    let jitter = 4.0;
    let shape = Shape {
        class,
        cy: n / 2.0 - 0.5 + rng.random_range(-jitter..jitter),
        cx: n / 2.0 - 0.5 + rng.random_range(-jitter..jitter),
        radius,
        angle: rng.random_range(0.0..std::f64::consts::TAU),
    };
    let bg: [f64; 3] = std::array::from_fn(|_| rng.random_range(20.0..110.0));
    let fg: [f64; 3] = std::array::from_fn(|_| rng.random_range(130.0..250.0));
    let freq = rng.random_range(0.2..0.9);
    let theta = rng.random_range(0.0..std::f64::consts::PI);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let amp = rng.random_range(5.0..25.0);
    let noise: Vec<f64> = (0..SHAPE_SIZE * SHAPE_SIZE * 3)
        .map(|_| rng.random_range(-18.0..18.0))
        .collect();
    let img = ImageBuffer::from_fn(SHAPE_SIZE, SHAPE_SIZE, 3, |y, x, c| {
        let (yf, xf) = (y as f64, x as f64);
        let base = if shape.contains(yf, xf) {
            fg[c]
        } else {
            bg[c] + amp * (freq * (xf * theta.cos() + yf * theta.sin()) + phase).sin()
        };
        (base + noise[(y * SHAPE_SIZE + x) * 3 + c]).round().clamp(0.0, 255.0) as u8
    });
    (img, class)
}

/// Images `start..start + count` of the stream `seed`.
pub fn generate_shapes(seed: u64, start: usize, count: usize) -> (Vec<ImageBuffer>, LabelVector) {
    let (images, labels) = (start..start + count).map(|i| shape_image(seed, i)).unzip();
    (images, LabelVector::new(labels))
}
