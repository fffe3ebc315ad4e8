//! Built-in multinomial logistic regression on standardized pixels.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::{Classifier, LabelVector, PredictionMatrix};
use crate::error::{Error, Result};
use crate::imageops::{apply_subpolicy, ImageBuffer, PositionalConfig};
use crate::policy::{identity_subpolicy, Style};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub iterations: usize,
    /// Step size per feature: the update uses `learning_rate / n_features`,
    /// which keeps descent stable for correlated standardized pixels.
    pub learning_rate: f64,
    pub l2: f64,
    /// Extra pad-crop-flip copies of each training image.
    pub augment_copies: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            iterations: 400,
            learning_rate: 3.5,
            l2: 1e-3,
            augment_copies: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyClassifier {
    dims: (usize, usize, usize),
    n_classes: usize,
    mean: Vec<f64>,
    inv_std: Vec<f64>,
    /// Row-major `n_classes x n_features`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

const CHUNK: usize = 64;

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

impl ToyClassifier {
    /// Full-batch gradient descent for a fixed number of iterations.
    ///
    /// Training examples are put in a canonical order (by label, then pixel
    /// bytes) before anything else, so the learned weights do not depend on
    /// the order the caller supplies them in.
    pub fn train(images: &[ImageBuffer], labels: &LabelVector, config: &ToyConfig) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} images, {} labels",
                images.len(),
                labels.len()
            )));
        }
        let first = images
            .first()
            .ok_or_else(|| Error::Degenerate("no training images".into()))?;
        let dims = first.dims();
        if let Some(bad) = images.iter().find(|im| im.dims() != dims) {
            return Err(Error::ShapeMismatch(format!(
                "image {:?} differs from {:?}",
                bad.dims(),
                dims
            )));
        }
        let n_classes = labels.as_slice().iter().max().map_or(0, |m| m + 1);
        let mut present = vec![false; n_classes];
        for &y in labels.as_slice() {
            present[y] = true;
        }
        if present.iter().filter(|&&p| p).count() < 2 {
            return Err(Error::Degenerate(
                "training data must contain at least two classes".into(),
            ));
        }

        let mut order: Vec<usize> = (0..images.len()).collect();
        order.sort_by(|&a, &b| {
            labels
                .get(a)
                .cmp(&labels.get(b))
                .then_with(|| images[a].data().cmp(images[b].data()))
        });

        let positional = PositionalConfig::default();
        let crop = identity_subpolicy(0, Style::Cifar);
        let mut examples: Vec<(Vec<f64>, usize)> = Vec::with_capacity(images.len() * (1 + config.augment_copies));
        for (rank, &i) in order.iter().enumerate() {
            examples.push((raw_features(&images[i]), labels.get(i)));
            for copy in 0..config.augment_copies {
                let mut rng = stream(config.seed, &[0x7a1e, rank as u64, copy as u64]);
                let aug = apply_subpolicy(&images[i], &crop, &positional, &mut rng)?;
                examples.push((raw_features(&aug), labels.get(i)));
            }
        }

        let d = dims.0 * dims.1 * dims.2;
        let n = examples.len() as f64;
        let mut mean = vec![0.0; d];
        for (x, _) in &examples {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for (x, _) in &examples {
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let inv_std: Vec<f64> = var.iter().map(|s| 1.0 / (s / n).sqrt().max(1e-3)).collect();
        for (x, _) in examples.iter_mut() {
            for ((v, m), is) in x.iter_mut().zip(&mean).zip(&inv_std) {
                *v = (*v - m) * is;
            }
        }

        let k = n_classes;
        let mut weights = vec![0.0; k * d];
        let mut bias = vec![0.0; k];
        let step = config.learning_rate / d as f64;
        for _ in 0..config.iterations {
            // Fixed chunking keeps the summation order independent of the
            // number of threads.
            let partials: Vec<(Vec<f64>, Vec<f64>)> = examples
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut gw = vec![0.0; k * d];
                    let mut gb = vec![0.0; k];
                    let mut z = vec![0.0; k];
                    for (x, y) in chunk {
                        for c in 0..k {
                            z[c] = bias[c] + dot(&weights[c * d..(c + 1) * d], x);
                        }
                        softmax_in_place(&mut z);
                        z[*y] -= 1.0;
                        for c in 0..k {
                            gb[c] += z[c];
                            axpy(z[c], x, &mut gw[c * d..(c + 1) * d]);
                        }
                    }
                    (gw, gb)
                })
                .collect();
            let mut gw = vec![0.0; k * d];
            let mut gb = vec![0.0; k];
            for (pw, pb) in partials {
                for (a, b) in gw.iter_mut().zip(pw) {
                    *a += b;
                }
                for (a, b) in gb.iter_mut().zip(pb) {
                    *a += b;
                }
            }
            for (w, g) in weights.iter_mut().zip(&gw) {
                *w -= step * (g / n + config.l2 * *w);
            }
            for (b, g) in bias.iter_mut().zip(&gb) {
                *b -= config.learning_rate * g / n;
            }
        }

        Ok(Self {
            dims,
            n_classes,
            mean,
            inv_std,
            weights,
            bias,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    fn predict_one(&self, img: &ImageBuffer) -> Vec<f64> {
        let d = self.mean.len();
        let x: Vec<f64> = img
            .data()
            .iter()
            .zip(&self.mean)
            .zip(&self.inv_std)
            .map(|((&p, m), is)| (p as f64 / 255.0 - m) * is)
            .collect();
        let mut z: Vec<f64> = (0..self.n_classes)
            .map(|c| self.bias[c] + dot(&self.weights[c * d..(c + 1) * d], &x))
            .collect();
        softmax_in_place(&mut z);
        z
    }

    /// Text form; floats use the shortest representation that parses back
    /// to the same value.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let (h, w, c) = self.dims;
        writeln!(out, "tta-gps-toy v1").unwrap();
        writeln!(out, "dims {h} {w} {c}").unwrap();
        writeln!(out, "classes {}", self.n_classes).unwrap();
        let line = |name: &str, v: &[f64]| {
            let mut s = String::from(name);
            for x in v {
                write!(s, " {x}").unwrap();
            }
            s.push('\n');
            s
        };
        out.push_str(&line("mean", &self.mean));
        out.push_str(&line("inv_std", &self.inv_std));
        out.push_str(&line("bias", &self.bias));
        let d = self.mean.len();
        for c in 0..self.n_classes {
            out.push_str(&line("w", &self.weights[c * d..(c + 1) * d]));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |field: &str| -> Result<(usize, Vec<String>)> {
            let (n, l) = lines
                .next()
                .ok_or_else(|| Error::parse(0, field, "unexpected end of model file"))?;
            let mut parts = l.split_whitespace();
            let head = parts.next().unwrap_or_default();
            if head != field {
                return Err(Error::parse(n, field, format!("expected `{field}`, found `{head}`")));
            }
            Ok((n, parts.map(str::to_string).collect()))
        };
        let (n, v) = next("tta-gps-toy")?;
        if v != ["v1"] {
            return Err(Error::parse(n, "tta-gps-toy", "unsupported model version"));
        }
        fn nums<T: std::str::FromStr>(n: usize, field: &str, v: &[String]) -> Result<Vec<T>> {
            v.iter()
                .map(|s| {
                    s.parse()
                        .map_err(|_| Error::parse(n, field, format!("`{s}` is not a number")))
                })
                .collect()
        }
        let (n, v) = next("dims")?;
        let dv: Vec<usize> = nums(n, "dims", &v)?;
        if dv.len() != 3 {
            return Err(Error::parse(n, "dims", "expected height width channels"));
        }
        let dims = (dv[0], dv[1], dv[2]);
        let d = dims.0 * dims.1 * dims.2;
        let (n, v) = next("classes")?;
        let n_classes: usize = nums::<usize>(n, "classes", &v)?.first().copied().unwrap_or(0);
        let mut vector = |field: &str, len: usize| -> Result<Vec<f64>> {
            let (n, v) = next(field)?;
            let xs: Vec<f64> = nums(n, field, &v)?;
            if xs.len() != len {
                return Err(Error::parse(
                    n,
                    field,
                    format!("expected {len} values, found {}", xs.len()),
                ));
            }
            Ok(xs)
        };
        let mean = vector("mean", d)?;
        let inv_std = vector("inv_std", d)?;
        let bias = vector("bias", n_classes)?;
        let mut weights = Vec::with_capacity(n_classes * d);
        for _ in 0..n_classes {
            weights.extend(vector("w", d)?);
        }
        Ok(Self {
            dims,
            n_classes,
            mean,
            inv_std,
            weights,
            bias,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::from(e).at(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        std::fs::read_to_string(path)
            .map_err(Error::from)
            .and_then(|t| Self::from_text(&t))
            .map_err(|e| e.at(path))
    }
}

impl Classifier for ToyClassifier {
    fn predict_batch(&self, images: &[ImageBuffer]) -> Result<PredictionMatrix<f64>> {
        if let Some(bad) = images.iter().find(|im| im.dims() != self.dims) {
            return Err(Error::adapter(
                None,
                format!("model expects {:?} images, got {:?}", self.dims, bad.dims()),
            ));
        }
        let data: Vec<f64> = images.par_iter().flat_map_iter(|im| self.predict_one(im)).collect();
        Ok(PredictionMatrix::from_flat_unchecked(
            images.len(),
            self.n_classes,
            data,
        ))
    }
}

fn raw_features(img: &ImageBuffer) -> Vec<f64> {
    img.data().iter().map(|&p| p as f64 / 255.0).collect()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
