use super::{average_predictions, Classifier, PredictionMatrix};
use crate::error::{Error, Result};
use crate::imageops::{apply_subpolicy, ImageBuffer, PositionalConfig};
use crate::policy::{Policy, SubPolicy};
use crate::rng::object_stream;

const BATCH: usize = 256;

/// Classify images in fixed-size batches.
pub fn predict_images<C: Classifier + ?Sized>(clf: &C, images: &[ImageBuffer]) -> Result<PredictionMatrix<f64>> {
    let mut data = Vec::new();
    let mut n_classes = None;
    for chunk in images.chunks(BATCH) {
        let m = clf.predict_batch(chunk)?;
        if m.n_objects() != chunk.len() {
            return Err(Error::adapter(
                None,
                format!("{} rows returned for {} images", m.n_objects(), chunk.len()),
            ));
        }
        match n_classes {
            None => n_classes = Some(m.n_classes()),
            Some(k) if k != m.n_classes() => {
                return Err(Error::adapter(
                    None,
                    format!("class count changed from {k} to {}", m.n_classes()),
                ))
            }
            _ => {}
        }
        data.extend_from_slice(m.as_flat());
    }
    let k = n_classes.unwrap_or(1);
    Ok(PredictionMatrix::from_flat_unchecked(images.len(), k, data))
}

/// Augment every image with `s` and classify, averaging over `n_draws`
/// independent applications. Object `i` draws from the stream keyed by
/// `(seed, s.id(), i)`, so results do not depend on scheduling.
pub fn predict_under_subpolicy<C: Classifier + ?Sized>(
    clf: &C,
    images: &[ImageBuffer],
    s: &SubPolicy,
    positional: &PositionalConfig,
    seed: u64,
    n_draws: usize,
) -> Result<PredictionMatrix<f64>> {
    if n_draws == 0 {
        return Err(Error::Config("n_draws must be at least 1".into()));
    }
    let mut streams: Vec<_> = (0..images.len()).map(|i| object_stream(seed, s.id(), i)).collect();
    let mut draws = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let augmented = images
            .iter()
            .zip(streams.iter_mut())
            .map(|(img, rng)| apply_subpolicy(img, s, positional, rng))
            .collect::<Result<Vec<_>>>()?;
        let m = predict_images(clf, &augmented).map_err(|e| match e {
            Error::Adapter { message, .. } => Error::adapter(Some(s.id()), message),
            other => Error::adapter(Some(s.id()), other.to_string()),
        })?;
        draws.push(m);
    }
    if draws.len() == 1 {
        return Ok(draws.pop().unwrap());
    }
    average_predictions(&draws)
}

/// Mean of the predictions of every sub-policy of `policy`, repeats
/// counted. Each distinct id is evaluated once.
pub fn predict_policy<C: Classifier + ?Sized>(
    clf: &C,
    images: &[ImageBuffer],
    policy: &Policy,
    positional: &PositionalConfig,
    seed: u64,
) -> Result<PredictionMatrix<f64>> {
    let mut cache: Vec<(usize, PredictionMatrix<f64>)> = Vec::new();
    let mut mean: Option<PredictionMatrix<f64>> = None;
    for (t, s) in policy.subpolicies().iter().enumerate() {
        let pos = match cache.iter().position(|(id, _)| *id == s.id()) {
            Some(p) => p,
            None => {
                cache.push((s.id(), predict_under_subpolicy(clf, images, s, positional, seed, 1)?));
                cache.len() - 1
            }
        };
        let m = &cache[pos].1;
        mean = Some(match mean {
            None => m.clone(),
            Some(acc) => acc.running_mix(m, t + 1)?,
        });
    }
    Ok(mean.expect("policies are non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageops::{TransformInstance, TransformKind};
    use crate::policy::{crop_flip_policy, identity_subpolicy, Style};

    struct Uniform(usize);

    impl Classifier for Uniform {
        fn predict_batch(&self, images: &[ImageBuffer]) -> Result<PredictionMatrix<f64>> {
            Ok(PredictionMatrix::uniform(images.len(), self.0))
        }
    }

    /// Probability of class 0 grows with mean brightness.
    struct Brightness;

    impl Classifier for Brightness {
        fn predict_batch(&self, images: &[ImageBuffer]) -> Result<PredictionMatrix<f64>> {
            let rows: Vec<Vec<f64>> = images
                .iter()
                .map(|im| {
                    let mean = im.data().iter().map(|&p| p as f64).sum::<f64>() / im.data().len() as f64 / 255.0;
                    let p = 0.05 + 0.9 * mean;
                    vec![p, 1.0 - p]
                })
                .collect();
            PredictionMatrix::from_rows(&rows)
        }
    }

    struct Failing;

    impl Classifier for Failing {
        fn predict_batch(&self, _: &[ImageBuffer]) -> Result<PredictionMatrix<f64>> {
            Err(Error::adapter(None, "boom"))
        }
    }

    fn images() -> Vec<ImageBuffer> {
        (0..5)
            .map(|k| ImageBuffer::from_fn(8, 8, 3, |y, x, c| ((y * 17 + x * 5 + c * 3 + k * 40) % 256) as u8))
            .collect()
    }

    fn rotate_policy() -> SubPolicy {
        SubPolicy::new(
            4,
            Style::Cifar,
            vec![
                TransformInstance::new(TransformKind::Brightness, 40.0).unwrap(),
                TransformInstance::new(TransformKind::Rotate, 30.0).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn identity_without_positional_steps_gives_clean_predictions() {
        let imgs = images();
        let cfg = PositionalConfig {
            enabled: false,
            ..Default::default()
        };
        let s = identity_subpolicy(0, Style::Cifar);
        let clean = predict_images(&Brightness, &imgs).unwrap();
        assert_eq!(
            predict_under_subpolicy(&Brightness, &imgs, &s, &cfg, 3, 1).unwrap(),
            clean
        );
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let imgs = images();
        let cfg = PositionalConfig::default();
        let a = predict_under_subpolicy(&Brightness, &imgs, &rotate_policy(), &cfg, 9, 2).unwrap();
        let b = predict_under_subpolicy(&Brightness, &imgs, &rotate_policy(), &cfg, 9, 2).unwrap();
        assert_eq!(a, b);
        let c = predict_under_subpolicy(&Brightness, &imgs, &rotate_policy(), &cfg, 10, 2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn uniform_adapter_gives_uniform_rows() {
        let m = predict_under_subpolicy(
            &Uniform(4),
            &images(),
            &rotate_policy(),
            &PositionalConfig::default(),
            1,
            3,
        )
        .unwrap();
        assert!(m.as_flat().iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn adapter_errors_name_the_subpolicy() {
        let err = predict_under_subpolicy(
            &Failing,
            &images(),
            &rotate_policy(),
            &PositionalConfig::default(),
            1,
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Adapter { subpolicy: Some(4), .. }), "{err}");
    }

    #[test]
    fn repeated_ids_weight_the_mean() {
        let imgs = (0..4)
            .map(|i| ImageBuffer::from_fn(8, 8, 3, |y, x, c| (i * 40 + y * 9 + x * 5 + c) as u8))
            .collect::<Vec<_>>();
        struct Mean;
        impl Classifier for Mean {
            fn predict_batch(&self, images: &[ImageBuffer]) -> Result<PredictionMatrix<f64>> {
                let rows: Vec<Vec<f64>> = images
                    .iter()
                    .map(|im| {
                        let m = im.data().iter().map(|&v| v as f64).sum::<f64>() / im.data().len() as f64 / 255.0;
                        vec![m, 1.0 - m]
                    })
                    .collect();
                PredictionMatrix::from_rows(&rows)
            }
        }
        let pos = PositionalConfig::default();
        let pool = crop_flip_policy(2, Style::Cifar).unwrap().into_subpolicies();
        let twice = Policy::from_ids(&pool, &[1, 1]).unwrap();
        let once = Policy::from_ids(&pool, &[1]).unwrap();
        assert_eq!(
            predict_policy(&Mean, &imgs, &twice, &pos, 3).unwrap(),
            predict_policy(&Mean, &imgs, &once, &pos, 3).unwrap()
        );
    }
}
