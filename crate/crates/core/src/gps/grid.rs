use crate::calibrate::MetricReport;
use crate::error::{Error, Result};
use crate::imageops::{ImageBuffer, PositionalConfig};
use crate::policy::{generate_pool, PoolRecipe};
use crate::predcache::{average_predictions, predict_under_subpolicy, Classifier, LabelVector};
use crate::rng::stream;

#[derive(Debug, Clone)]
pub struct MagnitudeGridResult {
    pub best: f64,
    /// `(M, metrics of the averaged predictions)` in grid order.
    pub per_magnitude: Vec<(f64, MetricReport<f64>)>,
}

/// Scores each magnitude `M` in `grid` by the calibrated log-likelihood of
/// the averaged predictions of `samples_per_m` sub-policies drawn from
/// `family(M, samples_per_m)`. Ties go to the smaller `M`.
#[allow(clippy::too_many_arguments)]
pub fn grid_search_magnitude<C: Classifier + ?Sized>(
    family: impl Fn(f64, usize) -> Result<PoolRecipe>,
    clf: &C,
    images: &[ImageBuffer],
    y: &LabelVector,
    grid: &[f64],
    samples_per_m: usize,
    positional: &PositionalConfig,
    seed: u64,
) -> Result<MagnitudeGridResult> {
    if grid.is_empty() {
        return Err(Error::Config("empty magnitude grid".into()));
    }
    if samples_per_m == 0 {
        return Err(Error::Config("samples per magnitude must be at least 1".into()));
    }
    let mut per_magnitude = Vec::with_capacity(grid.len());
    for (gi, &m) in grid.iter().enumerate() {
        let recipe = family(m, samples_per_m)?;
        let pool = generate_pool(&recipe, &mut stream(seed, &[0x9d_0000, gi as u64]))?;
        let preds = pool
            .iter()
            .map(|s| predict_under_subpolicy(clf, images, s, positional, seed, 1))
            .collect::<Result<Vec<_>>>()?;
        per_magnitude.push((m, MetricReport::evaluate(&average_predictions(&preds)?, y)?));
    }
    let best = per_magnitude
        .iter()
        .fold(None::<(f64, f64)>, |best, &(m, ref r)| match best {
            Some((bm, bv)) if r.calibrated_ll < bv || (r.calibrated_ll == bv && m >= bm) => best,
            _ => Some((m, r.calibrated_ll)),
        })
        .map(|b| b.0)
        .expect("nonempty grid");
    Ok(MagnitudeGridResult { best, per_magnitude })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{Segment, Style};
    use crate::predcache::PredictionMatrix;

    /// Confident on the pristine image, uniform as soon as any pixel moves.
    struct Fragile {
        reference: Vec<u8>,
    }

    impl Classifier for Fragile {
        fn predict_batch(&self, images: &[ImageBuffer]) -> Result<PredictionMatrix<f64>> {
            let rows: Vec<Vec<f64>> = images
                .iter()
                .map(|img| {
                    if img.data() == self.reference.as_slice() {
                        vec![0.95, 0.05]
                    } else {
                        vec![0.5, 0.5]
                    }
                })
                .collect();
            PredictionMatrix::from_rows(&rows)
        }
    }

    fn family(m: f64, count: usize) -> Result<PoolRecipe> {
        PoolRecipe::new(vec![Segment { count, n: 2, m }], false, Style::Bare)
    }

    fn setup() -> (Fragile, Vec<ImageBuffer>, LabelVector) {
        let img = ImageBuffer::from_fn(8, 8, 3, |y, x, c| match (y, x) {
            (0, 0) => 0,
            (7, 7) => 255,
            _ => (40 + y * 19 + x * 11 + c * 7) as u8,
        });
        (
            Fragile {
                reference: img.data().to_vec(),
            },
            vec![img; 4],
            LabelVector::new(vec![0; 4]),
        )
    }

    #[test]
    fn fragile_model_prefers_zero_magnitude() {
        let (clf, images, y) = setup();
        let pos = PositionalConfig::default();
        let r = grid_search_magnitude(family, &clf, &images, &y, &[0.0, 20.0, 45.0], 3, &pos, 7).unwrap();
        assert_eq!(r.best, 0.0);
        let cll: Vec<f64> = r.per_magnitude.iter().map(|p| p.1.calibrated_ll).collect();
        assert!(cll[0] > cll[1] && cll[0] > cll[2], "{cll:?}");
        let again = grid_search_magnitude(family, &clf, &images, &y, &[0.0, 20.0, 45.0], 3, &pos, 7).unwrap();
        assert_eq!(
            cll,
            again
                .per_magnitude
                .iter()
                .map(|p| p.1.calibrated_ll)
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn single_point_grid() {
        let (clf, images, y) = setup();
        let r = grid_search_magnitude(family, &clf, &images, &y, &[20.0], 1, &PositionalConfig::default(), 0).unwrap();
        assert_eq!(r.best, 20.0);
        assert!(grid_search_magnitude(family, &clf, &images, &y, &[], 1, &PositionalConfig::default(), 0).is_err());
    }
}
