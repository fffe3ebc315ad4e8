//! Desk-scale end-to-end run on a synthetic shapes task: train the built-in
//! classifier, cache a candidate pool on validation data, search a policy,
//! and compare it with the crop-flip and no-augmentation baselines on test
//! data.

mod dataset;
mod shapes;

pub use dataset::{read_images, read_labels, write_images, write_labels};
pub use shapes::{generate_shapes, shape_image, SHAPE_CLASSES, SHAPE_SIZE};

use crate::calibrate::{test_time_cross_validation, MetricReport};
use crate::error::Result;
use crate::gps::{greedy_search, SearchObjective, SearchTrace};
use crate::imageops::{ImageBuffer, PositionalConfig};
use crate::policy::{crop_flip_policy, generate_pool, identity_subpolicy, Policy, PoolRecipe, Style, SubPolicy};
use crate::predcache::{predict_policy, predict_under_subpolicy, Classifier, LabelVector, ToyClassifier, ToyConfig};
use crate::rng::{derive_seed, stream};

const POOL_STREAM: u64 = 0xde_0001;
const VAL_STREAM: u64 = 0xde_0002;
const TEST_STREAM: u64 = 0xde_0003;

#[derive(Debug, Clone)]
pub struct DemoConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub recipe: PoolRecipe,
    pub policy_size: usize,
    pub objective: SearchObjective,
    pub crop_flip_samples: usize,
    pub n_splits: usize,
    pub toy: ToyConfig,
}

impl DemoConfig {
    /// 2000/500/500 images, a 101-candidate CIFAR-style pool, policies of 20.
    pub fn desk(seed: u64) -> Self {
        Self {
            seed,
            n_train: 2000,
            n_val: 500,
            n_test: 500,
            recipe: PoolRecipe::parse_segments("45:3:45,45:3:20,10:3:0", true, Style::Cifar).expect("valid recipe"),
            policy_size: 20,
            objective: SearchObjective::CalibratedLogLikelihood,
            crop_flip_samples: 20,
            n_splits: 5,
            toy: ToyConfig {
                seed,
                ..ToyConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct DemoReport {
    pub policy: Policy,
    pub trace: SearchTrace,
    /// Test metrics (cross-validated temperature) of each method.
    pub gps: MetricReport<f64>,
    pub crop_flip: MetricReport<f64>,
    pub identity: MetricReport<f64>,
}

impl DemoReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, r) in [
            ("gps", &self.gps),
            ("crop-flip", &self.crop_flip),
            ("identity", &self.identity),
        ] {
            out.push_str(&format!(
                "{name:<10} acc {:.4}  ll {:.4}  cll {:.4}  tau {:.3}\n",
                r.accuracy,
                r.log_likelihood,
                r.calibrated_ll,
                r.tau.value()
            ));
        }
        out.push_str(&format!("policy ids {:?}\n", self.policy.ids()));
        out
    }
}

pub fn run_desk_demo(cfg: &DemoConfig) -> Result<DemoReport> {
    let (train, y_train) = generate_shapes(cfg.seed, 0, cfg.n_train);
    let (val, y_val) = generate_shapes(cfg.seed, cfg.n_train, cfg.n_val);
    let (test, y_test) = generate_shapes(cfg.seed, cfg.n_train + cfg.n_val, cfg.n_test);
    let clf = ToyClassifier::train(&train, &y_train, &cfg.toy)?;
    run_with_classifier(cfg, &clf, (&val, &y_val), (&test, &y_test))
}

/// The search and comparison half of the demo, for a given classifier.
pub fn run_with_classifier<C: Classifier + ?Sized>(
    cfg: &DemoConfig,
    clf: &C,
    (val, y_val): (&[ImageBuffer], &LabelVector),
    (test, y_test): (&[ImageBuffer], &LabelVector),
) -> Result<DemoReport> {
    let positional = PositionalConfig::default();
    let pool: Vec<SubPolicy> = generate_pool(&cfg.recipe, &mut stream(cfg.seed, &[POOL_STREAM]))?;
    let val_seed = derive_seed(cfg.seed, &[VAL_STREAM]);
    let test_seed = derive_seed(cfg.seed, &[TEST_STREAM]);

    let candidates = pool
        .iter()
        .map(|s| predict_under_subpolicy(clf, val, s, &positional, val_seed, 1))
        .collect::<Result<Vec<_>>>()?;
    let outcome = greedy_search(&candidates, y_val, cfg.policy_size, cfg.objective)?;
    let policy = Policy::from_ids(&pool, &outcome.ids)?;

    let evaluate = |p: &Policy| -> Result<MetricReport<f64>> {
        let m = predict_policy(clf, test, p, &positional, test_seed)?;
        test_time_cross_validation(&m, y_test, cfg.n_splits, cfg.seed)
    };
    let gps = evaluate(&policy)?;
    let crop_flip = evaluate(&crop_flip_policy(cfg.crop_flip_samples, cfg.recipe.style)?)?;
    let identity = evaluate(&Policy::new(vec![identity_subpolicy(0, Style::Bare)])?)?;
    Ok(DemoReport {
        policy,
        trace: outcome.trace,
        gps,
        crop_flip,
        identity,
    })
}
