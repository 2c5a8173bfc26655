//! Support points: representative subsampling by energy-distance descent.
//!
//! Given a large sample Y, the goal is n points minimizing the energy
//! distance to Y. The objective is majorized by a quadratic whose minimizer
//! has a closed form, giving a convex-concave style update that never
//! increases the objective. Updates use the current iterate for every point
//! (a Jacobi sweep), so one iteration is embarrassingly parallel and the
//! result is independent of row order.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Distance floor guarding the 1/distance weights when points collide.
const DIST_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SpConfig {
    pub max_iters: usize,
    /// Convergence threshold on the largest coordinate move, relative to the
    /// widest dimension of Y.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SpConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-6,
            seed: 0,
        }
    }
}

fn floored_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        s += d * d;
    }
    s.sqrt().max(DIST_FLOOR)
}

/// The part of the energy distance that depends on the candidate set:
/// `2/(nN) sum_im ||x_i - y_m|| - 1/n^2 sum_ij ||x_i - x_j||`.
///
/// Differs from the full squared energy distance only by the x-independent
/// `-1/N^2 sum ||y - y'||` term, so descent in this objective is descent in
/// energy distance.
pub fn sp_objective(x: &ArrayView2<f64>, y: &ArrayView2<f64>) -> Result<f64> {
    check_inputs(x, y)?;
    let (n, nn) = (x.nrows(), y.nrows());
    let xs = as_rows(x);
    let ys = as_rows(y);
    let cross: f64 = xs
        .par_iter()
        .map(|xi| ys.iter().map(|ym| dist(xi, ym)).sum::<f64>())
        .sum();
    let within: f64 = xs
        .par_iter()
        .map(|xi| xs.iter().map(|xj| dist(xi, xj)).sum::<f64>())
        .sum();
    Ok(2.0 * cross / (n * nn) as f64 - within / (n * n) as f64)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        s += d * d;
    }
    s.sqrt()
}

fn as_rows(m: &ArrayView2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn check_inputs(x: &ArrayView2<f64>, y: &ArrayView2<f64>) -> Result<()> {
    if y.nrows() == 0 {
        return Err(Error::EmptySample("support points: Y"));
    }
    if x.nrows() == 0 {
        return Err(Error::EmptySample("support points: X"));
    }
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch {
            context: "support points dims",
            expected: y.ncols(),
            got: x.ncols(),
        });
    }
    Ok(())
}

/// One majorize-minimize sweep over all candidate points.
pub fn ccp_step(x: &ArrayView2<f64>, y: &ArrayView2<f64>) -> Result<Array2<f64>> {
    check_inputs(x, y)?;
    let n = x.nrows();
    let big_n = y.nrows();
    let d = x.ncols();
    let xs = as_rows(x);
    let ys = as_rows(y);
    let ratio = big_n as f64 / n as f64;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = &xs[i];
            let mut numer = vec![0.0; d];
            let mut denom = 0.0;
            for ym in &ys {
                let w = 1.0 / floored_dist(xi, ym);
                denom += w;
                for (acc, y) in numer.iter_mut().zip(ym.iter()) {
                    *acc += w * y;
                }
            }
            for (j, xj) in xs.iter().enumerate() {
                if j == i {
                    continue;
                }
                let w = ratio / floored_dist(xi, xj);
                for ((acc, a), b) in numer.iter_mut().zip(xi.iter()).zip(xj.iter()) {
                    *acc += w * (a - b);
                }
            }
            numer.iter().map(|v| v / denom).collect()
        })
        .collect();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((n, d), flat).expect("shape preserved"))
}

/// Selects `n` representative points of `y`.
///
/// Initialization is a seeded subsample of Y without replacement; iteration
/// stops when the largest coordinate move falls below `tol` times the widest
/// dimension of Y, or after `max_iters` sweeps. `n >= Y` rows returns Y
/// unchanged.
pub fn support_points(y: &ArrayView2<f64>, n: usize, cfg: &SpConfig) -> Result<Array2<f64>> {
    run(y, n, cfg, false).map(|(x, _)| x)
}

/// Like [`support_points`] but also returns the objective value at the
/// initial configuration and after every sweep.
pub fn support_points_with_trace(
    y: &ArrayView2<f64>,
    n: usize,
    cfg: &SpConfig,
) -> Result<(Array2<f64>, Vec<f64>)> {
    run(y, n, cfg, true)
}

fn run(
    y: &ArrayView2<f64>,
    n: usize,
    cfg: &SpConfig,
    trace: bool,
) -> Result<(Array2<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidConfig("support points: n must be positive".into()));
    }
    if y.nrows() == 0 {
        return Err(Error::EmptySample("support points: Y"));
    }
    if n >= y.nrows() {
        return Ok((y.to_owned(), Vec::new()));
    }

    let mut rng = rng_from_seed(cfg.seed);
    let picks = rand::seq::index::sample(&mut rng, y.nrows(), n);
    let mut x = Array2::zeros((n, y.ncols()));
    for (i, p) in picks.into_iter().enumerate() {
        x.row_mut(i).assign(&y.row(p));
    }
    // Detach the initial points from their source rows: a point sitting
    // exactly on a data point gets a floored-distance weight that pins it
    // there forever. The jitter is small enough not to matter statistically
    // and keeps every distance off the floor, which is also what makes the
    // majorize-minimize descent argument hold.
    let sds = per_dim_sd(y);
    for mut row in x.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v += 1e-3 * sds[j] * rng.random_range(-1.0..1.0);
        }
    }

    let scale = widest_range(y).max(f64::MIN_POSITIVE);
    let threshold = cfg.tol * scale;
    let mut objectives = Vec::new();
    if trace {
        objectives.push(sp_objective(&x.view(), y)?);
    }
    for _ in 0..cfg.max_iters {
        let next = ccp_step(&x.view(), y)?;
        let move_max = next
            .iter()
            .zip(x.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        x = next;
        if trace {
            objectives.push(sp_objective(&x.view(), y)?);
        }
        if move_max <= threshold {
            break;
        }
    }
    Ok((x, objectives))
}

fn per_dim_sd(y: &ArrayView2<f64>) -> Array1<f64> {
    let n = y.nrows() as f64;
    let mut out = Array1::zeros(y.ncols());
    for j in 0..y.ncols() {
        let col = y.column(j);
        let mean = col.sum() / n;
        out[j] = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    }
    out
}

fn widest_range(y: &ArrayView2<f64>) -> f64 {
    let mut widest = 0.0f64;
    for j in 0..y.ncols() {
        let col = y.column(j);
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        widest = widest.max(hi - lo);
    }
    widest
}

/// Seeded subsample of `n` rows without replacement, the baseline that
/// support points are measured against.
pub fn random_subsample(y: &ArrayView2<f64>, n: usize, seed: u64) -> Result<Array2<f64>> {
    if y.nrows() == 0 {
        return Err(Error::EmptySample("random_subsample"));
    }
    if n >= y.nrows() {
        return Ok(y.to_owned());
    }
    let mut rng = rng_from_seed(seed);
    let picks = rand::seq::index::sample(&mut rng, y.nrows(), n);
    let mut x = Array2::zeros((n, y.ncols()));
    for (i, p) in picks.into_iter().enumerate() {
        x.row_mut(i).assign(&y.row(p));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;
    use rand_distr::Distribution;

    #[test]
    fn objective_matches_hand_value() {
        // x = {0, 2}, y = {1}: cross term 2/(2*1)*(1+1) = 2, within term
        // 1/4*(0+2+2+0) = 1.
        let x = array![[0.0], [2.0]];
        let y = array![[1.0]];
        assert_abs_diff_eq!(sp_objective(&x.view(), &y.view()).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn single_point_update_is_weiszfeld() {
        // n = 1 drops the repulsion term, leaving one step of Weiszfeld's
        // algorithm for the geometric median.
        let x = array![[0.0, 0.0]];
        let y = array![[1.0, 0.0], [3.0, 0.0]];
        let next = ccp_step(&x.view(), &y.view()).unwrap();
        // weights 1/1 and 1/3: x' = (1*1 + 1/3*3) / (1 + 1/3) = 1.5.
        assert_abs_diff_eq!(next[[0, 0]], 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(next[[0, 1]], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = rng_from_seed(3);
        let y = Array2::from_shape_fn((300, 2), |_| rng.random_range(-2.0..2.0));
        let cfg = SpConfig {
            max_iters: 40,
            ..SpConfig::default()
        };
        let (_, trace) = support_points_with_trace(&y.view(), 25, &cfg).unwrap();
        assert!(trace.len() >= 2);
        for pair in trace.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-12,
                "objective rose: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn beats_random_subsample_on_gaussian_cloud() {
        let mut rng = rng_from_seed(11);
        let y = Array2::from_shape_fn((400, 2), |_| {
            let v: f64 = rand_distr::StandardNormal.sample(&mut rng);
            v
        });
        let sp = support_points(&y.view(), 30, &SpConfig::default()).unwrap();
        let sp_obj = sp_objective(&sp.view(), &y.view()).unwrap();
        let mut worse = 0;
        for s in 0..10 {
            let sub = random_subsample(&y.view(), 30, 1000 + s).unwrap();
            if sp_obj < sp_objective(&sub.view(), &y.view()).unwrap() {
                worse += 1;
            }
        }
        assert!(worse >= 9, "support points beat only {worse}/10 subsamples");
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let mut rng = rng_from_seed(5);
        let y = Array2::from_shape_fn((120, 3), |_| rng.random_range(0.0..1.0));
        let cfg = SpConfig::default();
        let a = support_points(&y.view(), 15, &cfg).unwrap();
        let b = support_points(&y.view(), 15, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oversized_request_returns_input() {
        let y = array![[1.0], [2.0]];
        let x = support_points(&y.view(), 5, &SpConfig::default()).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn rejects_empty_and_zero() {
        let y = array![[1.0], [2.0]];
        assert!(support_points(&y.view(), 0, &SpConfig::default()).is_err());
        let empty = Array2::<f64>::zeros((0, 1));
        assert!(support_points(&empty.view(), 1, &SpConfig::default()).is_err());
    }

    #[test]
    fn collocated_points_stay_finite() {
        // All of Y at one point: the floor keeps weights finite and the
        // iterate collapses onto the point.
        let y = Array2::from_elem((50, 2), 3.0);
        let x = support_points(&y.view(), 5, &SpConfig::default()).unwrap();
        assert!(x.iter().all(|v| v.is_finite()));
        for v in x.iter() {
            assert_abs_diff_eq!(*v, 3.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn ccp_step_commutes_with_isometries() {
        // The update uses Euclidean norms only, so rotating and shifting
        // both sets transforms the result the same way.
        let mut rng = rng_from_seed(23);
        let x = Array2::from_shape_fn((5, 2), |_| rng.random_range(-2.0..2.0));
        let y = Array2::from_shape_fn((40, 2), |_| rng.random_range(-2.0..2.0));
        let theta: f64 = 0.7;
        let rot = array![[theta.cos(), -theta.sin()], [theta.sin(), theta.cos()]];
        let shift = array![1.5, -0.3];
        let transform = |m: &Array2<f64>| {
            let mut out = m.dot(&rot.t());
            for mut row in out.rows_mut() {
                row += &shift.view();
            }
            out
        };
        let stepped = ccp_step(&x.view(), &y.view()).unwrap();
        let stepped_t = ccp_step(&transform(&x).view(), &transform(&y).view()).unwrap();
        let expected = transform(&stepped);
        for (a, b) in stepped_t.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn objective_is_translation_invariant() {
        let mut rng = rng_from_seed(29);
        let x = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
        let y = Array2::from_shape_fn((20, 3), |_| rng.random_range(-1.0..1.0));
        let base = sp_objective(&x.view(), &y.view()).unwrap();
        let shift = |m: &Array2<f64>| m + 7.25;
        let shifted = sp_objective(&shift(&x).view(), &shift(&y).view()).unwrap();
        assert_abs_diff_eq!(base, shifted, epsilon = 1e-9);
    }

    #[test]
    fn single_point_solves_the_l1_location_problem() {
        // n = 1 minimizes the mean distance to Y; for {1, 2, 3, 10} on the
        // line every minimizer lies between the middle points.
        let y = array![[1.0], [2.0], [3.0], [10.0]];
        let x = support_points(&y.view(), 1, &SpConfig::default()).unwrap();
        assert!(x[[0, 0]] >= 2.0 - 1e-6 && x[[0, 0]] <= 3.0 + 1e-6, "got {}", x[[0, 0]]);
    }

    #[test]
    fn symmetric_stationary_point_does_not_move() {
        // x at the center of a symmetric Y is a fixed point of the update.
        let y = array![[-1.0], [0.0], [1.0]];
        let x = array![[0.0]];
        let stepped = ccp_step(&x.view(), &y.view()).unwrap();
        assert_abs_diff_eq!(stepped[[0, 0]], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn result_stays_near_the_data_hull() {
        let mut rng = rng_from_seed(31);
        let y = Array2::from_shape_fn((300, 2), |_| {
            let v: f64 = rand_distr::StandardNormal.sample(&mut rng);
            v
        });
        let x = support_points(&y.view(), 20, &SpConfig::default()).unwrap();
        let max_y = y.rows().into_iter().map(|r| r.dot(&r).sqrt()).fold(0.0, f64::max);
        let max_x = x.rows().into_iter().map(|r| r.dot(&r).sqrt()).fold(0.0, f64::max);
        assert!(max_x <= 2.0 * max_y, "max |x| {max_x} vs max |y| {max_y}");
    }
}
