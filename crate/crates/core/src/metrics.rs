//! Sample-based distances between posterior approximations.
//!
//! Three metrics, all operating on two row-major samples of equal dimension:
//! squared maximum mean discrepancy with a Gaussian kernel (V-statistic,
//! bandwidth from the median heuristic on the pooled sample), a classifier
//! two-sample test reporting held-out accuracy under 5-fold stratified cross
//! validation, and the squared energy distance (V-statistic). A location and
//! dispersion report complements them with interpretable per-dimension
//! summaries scaled by the prior range.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{train, Activation, LogisticLoss, Mlp, TrainConfig};
use crate::rng::derive_seed;
use crate::sample::{median, quantile, sample_sd, Standardizer};

fn check_pair(context: &'static str, a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<()> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::EmptySample(context));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            context,
            expected: a.ncols(),
            got: b.ncols(),
        });
    }
    Ok(())
}

fn sq_dist(a: &ArrayView1<f64>, b: &ArrayView1<f64>) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// Median of the nonzero pairwise Euclidean distances within `points`.
///
/// Zero distances (duplicate points) are excluded so the bandwidth cannot
/// collapse; errors if every pair coincides.
pub fn median_heuristic(points: &ArrayView2<f64>) -> Result<f64> {
    if points.nrows() < 2 {
        return Err(Error::EmptySample("median_heuristic"));
    }
    let n = points.nrows();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d2 = sq_dist(&points.row(i), &points.row(j));
            if d2 > 0.0 {
                dists.push(d2.sqrt());
            }
        }
    }
    if dists.is_empty() {
        return Err(Error::DegenerateSample {
            context: "median_heuristic",
            detail: "all pairwise distances are zero".into(),
        });
    }
    Ok(median(&dists))
}

/// Squared maximum mean discrepancy, V-statistic, Gaussian kernel
/// `exp(-||a-b||^2 / (2 sigma^2))` with `sigma` from [`median_heuristic`]
/// on the pooled sample.
pub fn mmd2(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<f64> {
    check_pair("mmd2", a, b)?;
    let pooled = stack_rows(a, b);
    let sigma = median_heuristic(&pooled.view())?;
    mmd2_with_bandwidth(a, b, sigma)
}

/// [`mmd2`] with a caller-chosen kernel bandwidth.
pub fn mmd2_with_bandwidth(a: &ArrayView2<f64>, b: &ArrayView2<f64>, sigma: f64) -> Result<f64> {
    check_pair("mmd2", a, b)?;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidConfig(format!("mmd2 bandwidth must be positive, got {sigma}")));
    }
    let gamma = 1.0 / (2.0 * sigma * sigma);
    let kernel_mean = |x: &ArrayView2<f64>, y: &ArrayView2<f64>| -> f64 {
        let mut s = 0.0;
        for xi in x.rows() {
            for yj in y.rows() {
                s += (-gamma * sq_dist(&xi, &yj)).exp();
            }
        }
        s / (x.nrows() * y.nrows()) as f64
    };
    // Identical inputs produce three identical sums, so the result is an
    // exact 0.0; the tiny-negative guard only absorbs rounding on nearly
    // identical samples.
    let v = kernel_mean(a, a) + kernel_mean(b, b) - 2.0 * kernel_mean(a, b);
    Ok(if v < 0.0 && v > -1e-9 { 0.0 } else { v })
}

/// Squared energy distance, V-statistic:
/// `2 E||A-B|| - E||A-A'|| - E||B-B'||`.
pub fn ed2(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<f64> {
    check_pair("ed2", a, b)?;
    let dist_mean = |x: &ArrayView2<f64>, y: &ArrayView2<f64>| -> f64 {
        let mut s = 0.0;
        for xi in x.rows() {
            for yj in y.rows() {
                s += sq_dist(&xi, &yj).sqrt();
            }
        }
        s / (x.nrows() * y.nrows()) as f64
    };
    let v = 2.0 * dist_mean(a, b) - dist_mean(a, a) - dist_mean(b, b);
    Ok(if v < 0.0 && v > -1e-9 { 0.0 } else { v })
}

const C2ST_FOLDS: usize = 5;
const C2ST_BATCH: usize = 200;
const C2ST_MAX_EPOCHS: usize = 200;
const C2ST_PATIENCE: usize = 20;

/// Classifier two-sample test.
///
/// Pools the samples with labels, standardizes per dimension, and runs
/// 5-fold stratified cross validation of an MLP classifier (two ReLU hidden
/// layers of 10 * dim units, logistic loss). Returns held-out accuracy in
/// [0, 1]; 0.5 means the classifier cannot tell the samples apart.
pub fn c2st(a: &ArrayView2<f64>, b: &ArrayView2<f64>, seed: u64) -> Result<f64> {
    check_pair("c2st", a, b)?;
    let d = a.ncols();
    let pooled = stack_rows(a, b);
    let std = Standardizer::fit(&pooled.view())?;
    let pooled = std.transform(&pooled.view())?;
    let labels: Vec<f64> = (0..pooled.nrows())
        .map(|i| if i < a.nrows() { 0.0 } else { 1.0 })
        .collect();

    // Stratified folds: shuffle within each class, then deal round-robin.
    let mut fold_of = vec![0usize; pooled.nrows()];
    let mut rng = crate::rng::rng_from_seed(derive_seed(seed, 0xC257));
    for class_rows in [
        (0..a.nrows()).collect::<Vec<_>>(),
        (a.nrows()..pooled.nrows()).collect::<Vec<_>>(),
    ] {
        let mut rows = class_rows;
        use rand::seq::SliceRandom;
        rows.shuffle(&mut rng);
        for (i, r) in rows.into_iter().enumerate() {
            fold_of[r] = i % C2ST_FOLDS;
        }
    }

    let width = 10 * d;
    let mut correct = 0usize;
    for fold in 0..C2ST_FOLDS {
        let train_rows: Vec<usize> = (0..pooled.nrows()).filter(|r| fold_of[*r] != fold).collect();
        let test_rows: Vec<usize> = (0..pooled.nrows()).filter(|r| fold_of[*r] == fold).collect();
        if train_rows.is_empty() || test_rows.is_empty() {
            return Err(Error::EmptySample("c2st fold"));
        }
        let train_x = crate::nn::gather_rows(&pooled.view(), &train_rows);
        // Labels indexed by position within the fold's training set.
        let train_y: Vec<f64> = train_rows.iter().map(|r| labels[*r]).collect();
        let mut net = Mlp::new(
            &[d, width, width, 1],
            Activation::Relu,
            derive_seed(seed, fold as u64),
        )?;
        let mut loss = LogisticLoss { labels: &train_y };
        let tc = TrainConfig {
            batch_size: C2ST_BATCH,
            max_epochs: C2ST_MAX_EPOCHS,
            patience: C2ST_PATIENCE,
            seed: derive_seed(seed, 100 + fold as u64),
            ..TrainConfig::default()
        };
        train(&mut net, &train_x.view(), &mut loss, &tc)?;
        let test_x = crate::nn::gather_rows(&pooled.view(), &test_rows);
        let out = net.forward_batch(&test_x.view())?;
        for (i, &r) in test_rows.iter().enumerate() {
            let predicted = if out[[i, 0]] > 0.0 { 1.0 } else { 0.0 };
            if predicted == labels[r] {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / pooled.nrows() as f64)
}

/// All three metrics for one candidate/reference pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub mmd2: f64,
    pub c2st: f64,
    pub ed2: f64,
}

pub fn metric_triple(
    candidate: &ArrayView2<f64>,
    reference: &ArrayView2<f64>,
    seed: u64,
) -> Result<MetricTriple> {
    Ok(MetricTriple {
        mmd2: mmd2(candidate, reference)?,
        c2st: c2st(candidate, reference, seed)?,
        ed2: ed2(candidate, reference)?,
    })
}

/// Location and dispersion discrepancies, each averaged over dimensions and
/// scaled by the per-dimension prior range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocDisp {
    /// Mean absolute difference.
    pub m1: f64,
    /// Standard deviation absolute difference.
    pub m2: f64,
    /// Median absolute difference.
    pub m3: f64,
    /// Interquartile range absolute difference.
    pub m4: f64,
}

pub fn loc_disp(
    candidate: &ArrayView2<f64>,
    reference: &ArrayView2<f64>,
    prior_ranges: &ArrayView1<f64>,
) -> Result<LocDisp> {
    check_pair("loc_disp", candidate, reference)?;
    if prior_ranges.len() != candidate.ncols() {
        return Err(Error::DimensionMismatch {
            context: "loc_disp ranges",
            expected: candidate.ncols(),
            got: prior_ranges.len(),
        });
    }
    if prior_ranges.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::InvalidConfig("loc_disp prior ranges must be positive".into()));
    }
    let d = candidate.ncols();
    let mut out = LocDisp {
        m1: 0.0,
        m2: 0.0,
        m3: 0.0,
        m4: 0.0,
    };
    for j in 0..d {
        let ca: Vec<f64> = candidate.column(j).to_vec();
        let re: Vec<f64> = reference.column(j).to_vec();
        let range = prior_ranges[j];
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        out.m1 += (mean(&ca) - mean(&re)).abs() / range;
        out.m2 += (sample_sd(&ca) - sample_sd(&re)).abs() / range;
        out.m3 += (median(&ca) - median(&re)).abs() / range;
        let iqr = |v: &[f64]| quantile(v, 0.75) - quantile(v, 0.25);
        out.m4 += (iqr(&ca) - iqr(&re)).abs() / range;
    }
    let df = d as f64;
    out.m1 /= df;
    out.m2 /= df;
    out.m3 /= df;
    out.m4 /= df;
    Ok(out)
}

fn stack_rows(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows() + b.nrows(), a.ncols()));
    out.slice_mut(ndarray::s![..a.nrows(), ..]).assign(a);
    out.slice_mut(ndarray::s![a.nrows().., ..]).assign(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_sample(n: usize, d: usize, mean: f64, seed: u64) -> Array2<f64> {
        let mut rng = rng_from_seed(seed);
        Array2::from_shape_fn((n, d), |_| {
            let e: f64 = StandardNormal.sample(&mut rng);
            mean + e
        })
    }

    #[test]
    fn median_heuristic_hand_value() {
        // Points 0, 1, 3: distances {1, 3, 2}, median 2.
        let pts = array![[0.0], [1.0], [3.0]];
        assert_eq!(median_heuristic(&pts.view()).unwrap(), 2.0);
    }

    #[test]
    fn median_heuristic_ignores_duplicates() {
        let pts = array![[0.0], [0.0], [1.0]];
        // Nonzero distances {1, 1}: median 1.
        assert_eq!(median_heuristic(&pts.view()).unwrap(), 1.0);
        let all_same = array![[2.0], [2.0]];
        assert!(median_heuristic(&all_same.view()).is_err());
    }

    #[test]
    fn mmd2_two_point_hand_value() {
        // a = {0}, b = {1}: pooled distances {1}, sigma = 1,
        // mmd2 = 2 - 2 exp(-1/2).
        let a = array![[0.0]];
        let b = array![[1.0]];
        let v = mmd2(&a.view(), &b.view()).unwrap();
        assert_abs_diff_eq!(v, 0.7869386805747332, epsilon = 1e-15);
    }

    #[test]
    fn ed2_hand_value() {
        // a = {0, 2}, b = {1}: 2*1 - 1 - 0 = 1.
        let a = array![[0.0], [2.0]];
        let b = array![[1.0]];
        assert_abs_diff_eq!(ed2(&a.view(), &b.view()).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn identical_samples_give_exact_zero() {
        let a = gaussian_sample(64, 3, 0.0, 5);
        assert_eq!(mmd2(&a.view(), &a.view()).unwrap(), 0.0);
        assert_eq!(ed2(&a.view(), &a.view()).unwrap(), 0.0);
    }

    #[test]
    fn metrics_are_symmetric() {
        let a = gaussian_sample(40, 2, 0.0, 1);
        let b = gaussian_sample(50, 2, 0.5, 2);
        assert_abs_diff_eq!(
            mmd2(&a.view(), &b.view()).unwrap(),
            mmd2(&b.view(), &a.view()).unwrap(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            ed2(&a.view(), &b.view()).unwrap(),
            ed2(&b.view(), &a.view()).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn separated_samples_score_higher() {
        let a = gaussian_sample(100, 2, 0.0, 1);
        let near = gaussian_sample(100, 2, 0.2, 2);
        let far = gaussian_sample(100, 2, 3.0, 3);
        assert!(mmd2(&a.view(), &far.view()).unwrap() > mmd2(&a.view(), &near.view()).unwrap());
        assert!(ed2(&a.view(), &far.view()).unwrap() > ed2(&a.view(), &near.view()).unwrap());
    }

    #[test]
    fn c2st_separates_distant_distributions() {
        let a = gaussian_sample(200, 1, 0.0, 1);
        let b = gaussian_sample(200, 1, 3.0, 2);
        let acc = c2st(&a.view(), &b.view(), 7).unwrap();
        assert!(acc > 0.85, "accuracy {acc} too low for well-separated samples");
    }

    #[test]
    fn c2st_near_chance_for_same_distribution() {
        let a = gaussian_sample(300, 1, 0.0, 1);
        let b = gaussian_sample(300, 1, 0.0, 2);
        let acc = c2st(&a.view(), &b.view(), 7).unwrap();
        assert!((0.40..=0.60).contains(&acc), "accuracy {acc} far from chance");
    }

    #[test]
    fn c2st_handles_unequal_sizes() {
        let a = gaussian_sample(150, 2, 0.0, 1);
        let b = gaussian_sample(100, 2, 2.0, 2);
        let acc = c2st(&a.view(), &b.view(), 3).unwrap();
        assert!(acc > 0.7);
    }

    #[test]
    fn loc_disp_zero_for_identical() {
        let a = gaussian_sample(50, 2, 0.0, 9);
        let ranges = array![2.0, 2.0];
        let ld = loc_disp(&a.view(), &a.view(), &ranges.view()).unwrap();
        assert_eq!((ld.m1, ld.m2, ld.m3, ld.m4), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn loc_disp_scales_with_range() {
        let a = array![[0.0], [0.0]];
        let b = array![[1.0], [1.0]];
        let narrow = loc_disp(&a.view(), &b.view(), &array![1.0].view()).unwrap();
        let wide = loc_disp(&a.view(), &b.view(), &array![10.0].view()).unwrap();
        assert_abs_diff_eq!(narrow.m1, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(wide.m1, 0.1, epsilon = 1e-14);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = array![[0.0, 1.0]];
        let b = array![[0.0]];
        assert!(mmd2(&a.view(), &b.view()).is_err());
        assert!(ed2(&a.view(), &b.view()).is_err());
        assert!(c2st(&a.view(), &b.view(), 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn mmd2_and_ed2_nonnegative(
            seed_a in 0u64..1000,
            seed_b in 1000u64..2000,
            n in 2usize..20,
            shift in -2.0f64..2.0,
        ) {
            let a = gaussian_sample(n, 2, 0.0, seed_a);
            let b = gaussian_sample(n + 3, 2, shift, seed_b);
            prop_assert!(mmd2(&a.view(), &b.view()).unwrap() >= 0.0);
            prop_assert!(ed2(&a.view(), &b.view()).unwrap() >= 0.0);
        }
    }
}
