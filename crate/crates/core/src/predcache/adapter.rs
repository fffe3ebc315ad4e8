use std::path::{Path, PathBuf};

use super::{predict_under_subpolicy, read_cache, PredictionMatrix, SubprocessClassifier, ToyClassifier};
use crate::error::{Error, Result};
use crate::imageops::{ImageBuffer, PositionalConfig};
use crate::policy::SubPolicy;

/// A frozen image classifier: the same images always give the same
/// probabilities.
pub trait Classifier: Send + Sync {
    fn predict_batch(&self, images: &[ImageBuffer]) -> Result<PredictionMatrix<f64>>;
}

impl<C: Classifier + ?Sized> Classifier for Box<C> {
    fn predict_batch(&self, images: &[ImageBuffer]) -> Result<PredictionMatrix<f64>> {
        (**self).predict_batch(images)
    }
}

impl<C: Classifier + ?Sized> Classifier for &C {
    fn predict_batch(&self, images: &[ImageBuffer]) -> Result<PredictionMatrix<f64>> {
        (**self).predict_batch(images)
    }
}

/// Where predictions come from.
pub enum ModelAdapter {
    /// In-process logistic regression.
    Builtin(ToyClassifier),
    /// Matrices computed elsewhere, one cache file per sub-policy id in the
    /// directory.
    MatrixFile(PathBuf),
    /// External model speaking the stdin/stdout protocol.
    Subprocess(SubprocessClassifier),
}

/// File name of the cache entry for sub-policy `id`.
pub fn cache_file_name(id: usize) -> String {
    format!("{id:06}.ttapred")
}

impl ModelAdapter {
    pub fn classifier(&self) -> Option<&dyn Classifier> {
        match self {
            ModelAdapter::Builtin(c) => Some(c),
            ModelAdapter::Subprocess(c) => Some(c),
            ModelAdapter::MatrixFile(_) => None,
        }
    }

    pub fn predict_under_subpolicy(
        &self,
        images: &[ImageBuffer],
        s: &SubPolicy,
        positional: &PositionalConfig,
        seed: u64,
        n_draws: usize,
    ) -> Result<PredictionMatrix<f64>> {
        match self {
            ModelAdapter::MatrixFile(dir) => load_precomputed(dir, s.id(), images.len()),
            ModelAdapter::Builtin(c) => predict_under_subpolicy(c, images, s, positional, seed, n_draws),
            ModelAdapter::Subprocess(c) => predict_under_subpolicy(c, images, s, positional, seed, n_draws),
        }
    }
}

fn load_precomputed(dir: &Path, id: usize, n_objects: usize) -> Result<PredictionMatrix<f64>> {
    let m: PredictionMatrix<f64> =
        read_cache(dir.join(cache_file_name(id))).map_err(|e| Error::adapter(Some(id), format!("matrix file: {e}")))?;
    if m.n_objects() != n_objects {
        return Err(Error::adapter(
            Some(id),
            format!("matrix file has {} rows for {n_objects} images", m.n_objects()),
        ));
    }
    Ok(m)
}
