//! Shared sample containers and small numeric helpers.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A sample of `n` points in `d` dimensions, one row per point.
pub type SampleMatrix = Array2<f64>;

/// Per-dimension affine map to zero mean and unit standard deviation.
///
/// Standard deviations are floored at 1e-8 so constant dimensions pass
/// through shifted but unscaled instead of dividing by zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub sd: Array1<f64>,
}

impl Standardizer {
    pub const SD_FLOOR: f64 = 1e-8;

    pub fn fit(data: &ArrayView2<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::EmptySample("Standardizer::fit"));
        }
        let n = data.nrows() as f64;
        let mean = data.mean_axis(Axis(0)).expect("nonempty");
        let mut sd = Array1::zeros(data.ncols());
        for j in 0..data.ncols() {
            let col = data.column(j);
            let var = col.iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n;
            sd[j] = var.sqrt().max(Self::SD_FLOOR);
        }
        Ok(Self { mean, sd })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, data: &ArrayView2<f64>) -> Result<Array2<f64>> {
        check_cols("Standardizer::transform", self.dim(), data.ncols())?;
        let mut out = data.to_owned();
        for mut row in out.rows_mut() {
            for j in 0..row.len() {
                row[j] = (row[j] - self.mean[j]) / self.sd[j];
            }
        }
        Ok(out)
    }

    pub fn transform_row(&self, row: &ArrayView1<f64>) -> Result<Array1<f64>> {
        check_cols("Standardizer::transform_row", self.dim(), row.len())?;
        Ok((row - &self.mean) / &self.sd)
    }

    pub fn inverse_row(&self, row: &ArrayView1<f64>) -> Result<Array1<f64>> {
        check_cols("Standardizer::inverse_row", self.dim(), row.len())?;
        Ok(row * &self.sd + &self.mean)
    }

    /// log |det J| of `transform`, i.e. `-sum(log sd)`.
    pub fn log_det_jacobian(&self) -> f64 {
        -self.sd.iter().map(|s| s.ln()).sum::<f64>()
    }
}

pub(crate) fn check_cols(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        });
    }
    Ok(())
}

/// Headerless CSV with 17 significant digits, enough to round-trip f64
/// exactly.
pub fn csv_string(data: &ArrayView2<f64>) -> String {
    let mut out = String::new();
    for row in data.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Writes a sample as headerless CSV; see [`csv_string`].
pub fn write_csv(path: &std::path::Path, data: &ArrayView2<f64>) -> Result<()> {
    std::fs::write(path, csv_string(data))?;
    Ok(())
}

pub fn read_csv(path: &std::path::Path) -> Result<Array2<f64>> {
    parse_csv(&std::fs::read_to_string(path)?)
}

/// Parses headerless numeric CSV. Rows must have equal length.
pub fn parse_csv(text: &str) -> Result<Array2<f64>> {
    let mut values = Vec::new();
    let mut ncols = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidConfig(format!("csv line {}: {e}", i + 1)))
            })
            .collect::<Result<_>>()?;
        match ncols {
            None => ncols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::InvalidConfig(format!(
                    "csv line {}: expected {c} fields, got {}",
                    i + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        values.extend(row);
    }
    let ncols = ncols.ok_or(Error::EmptySample("parse_csv"))?;
    let nrows = values.len() / ncols;
    Array2::from_shape_vec((nrows, ncols), values)
        .map_err(|e| Error::InvalidConfig(format!("csv shape: {e}")))
}

/// Median of a slice. Averages the two central order statistics for even n.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    let n = v.len();
    let (_, mid, _) = v.select_nth_unstable_by(n / 2, |a, b| a.total_cmp(b));
    let hi = *mid;
    if n % 2 == 1 {
        hi
    } else {
        let lo = v[..n / 2]
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

/// Linearly interpolated quantile, `q` in [0, 1].
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&q), "quantile level out of range");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    v[lo] * (1.0 - frac) + v[hi] * frac
}

pub fn mean(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "mean of empty slice");
    values.iter().sum::<f64>() / values.len() as f64
}

/// `take` strictly increasing indices spread evenly over `0..total`.
/// Requires take <= total.
pub fn evenly_spaced(total: usize, take: usize) -> Vec<usize> {
    assert!(take <= total, "cannot take {take} of {total}");
    (0..take).map(|i| i * total / take.max(1)).collect()
}

/// Sample standard deviation (n-1 denominator); 0 for a single value.
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    check_cols("cholesky", n, a.ncols())?;
    let mut l: Array2<f64> = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::DegenerateSample {
                        context: "cholesky",
                        detail: format!("matrix not positive definite at pivot {i}"),
                    });
                }
                l[[i, j]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solves `L w = b` for lower-triangular `L`.
pub fn forward_substitute(l: &ArrayView2<f64>, b: &ArrayView1<f64>) -> Array1<f64> {
    let n = b.len();
    let mut w = Array1::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l[[i, j]] * w[j];
        }
        w[i] = s / l[[i, i]];
    }
    w
}

/// Solves `L^T v = b` for lower-triangular `L`.
pub fn back_substitute_transposed(l: &ArrayView2<f64>, b: &ArrayView1<f64>) -> Array1<f64> {
    let n = b.len();
    let mut v = Array1::zeros(n);
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= l[[j, i]] * v[j];
        }
        v[i] = s / l[[i, i]];
    }
    v
}

/// Inverse of a symmetric positive definite matrix via its Cholesky factor.
pub fn spd_inverse(a: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let l = cholesky(a)?;
    let mut inv = Array2::zeros((n, n));
    for j in 0..n {
        let mut e = Array1::zeros(n);
        e[j] = 1.0;
        let w = forward_substitute(&l.view(), &e.view());
        let col = back_substitute_transposed(&l.view(), &w.view());
        inv.column_mut(j).assign(&col);
    }
    Ok(inv)
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn evenly_spaced_covers_without_repeats() {
        assert_eq!(evenly_spaced(4, 4), vec![0, 1, 2, 3]);
        assert_eq!(evenly_spaced(10, 3), vec![0, 3, 6]);
        assert_eq!(evenly_spaced(5, 0), Vec::<usize>::new());
        let idx = evenly_spaced(80_000, 2_000);
        assert_eq!(idx.len(), 2_000);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert!(*idx.last().unwrap() < 80_000);
    }

    #[test]
    fn standardizer_roundtrip() {
        let data = array![[1.0, 10.0], [2.0, 20.0], [3.0, 60.0]];
        let s = Standardizer::fit(&data.view()).unwrap();
        let z = s.transform(&data.view()).unwrap();
        assert_abs_diff_eq!(z.column(0).mean().unwrap(), 0.0, epsilon = 1e-12);
        for i in 0..3 {
            let back = s.inverse_row(&z.row(i)).unwrap();
            assert_abs_diff_eq!(back[0], data[[i, 0]], epsilon = 1e-12);
            assert_abs_diff_eq!(back[1], data[[i, 1]], epsilon = 1e-12);
        }
    }

    #[test]
    fn standardizer_floors_constant_dimension() {
        let data = array![[5.0], [5.0], [5.0]];
        let s = Standardizer::fit(&data.view()).unwrap();
        assert_eq!(s.sd[0], Standardizer::SD_FLOOR);
        let z = s.transform(&data.view()).unwrap();
        assert_abs_diff_eq!(z[[0, 0]], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let data = array![
            [1.0 / 3.0, -2.5e-17],
            [std::f64::consts::PI, 1e300],
            [-0.0, 7.125]
        ];
        write_csv(&path, &data.view()).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back.shape(), data.shape());
        for (a, b) in back.iter().zip(data.iter()) {
            assert_eq!(a.to_bits(), b.to_bits(), "roundtrip must be bit-exact");
        }
    }

    #[test]
    fn parse_csv_rejects_ragged_rows() {
        assert!(parse_csv("1,2\n3\n").is_err());
    }

    #[test]
    fn median_and_quantile_small_cases() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.25), 1.75);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 1.0), 4.0);
    }

    #[test]
    fn cholesky_reconstructs_matrix() {
        let a = array![[4.0, 2.0, 0.5], [2.0, 5.0, 1.0], [0.5, 1.0, 3.0]];
        let l = cholesky(&a.view()).unwrap();
        let back = l.dot(&l.t());
        for (x, y) in back.iter().zip(a.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky(&a.view()).is_err());
    }

    #[test]
    fn substitution_solves_triangular_systems() {
        let l = array![[2.0, 0.0], [1.0, 3.0]];
        let b = array![4.0, 11.0];
        let w = forward_substitute(&l.view(), &b.view());
        assert_abs_diff_eq!(l.dot(&w)[0], b[0], epsilon = 1e-12);
        assert_abs_diff_eq!(l.dot(&w)[1], b[1], epsilon = 1e-12);
        let v = back_substitute_transposed(&l.view(), &b.view());
        let lt = l.t().to_owned();
        assert_abs_diff_eq!(lt.dot(&v)[0], b[0], epsilon = 1e-12);
        assert_abs_diff_eq!(lt.dot(&v)[1], b[1], epsilon = 1e-12);
    }

    #[test]
    fn spd_inverse_matches_identity() {
        let a = array![[4.0, 1.0], [1.0, 3.0]];
        let inv = spd_inverse(&a.view()).unwrap();
        let prod = a.dot(&inv);
        assert_abs_diff_eq!(prod[[0, 0]], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(prod[[0, 1]], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(prod[[1, 1]], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_abs_diff_eq!(
            log_sum_exp(&[0.0, 0.0]),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(log_sum_exp(&[-1000.0, -1000.0]), -1000.0 + std::f64::consts::LN_2, epsilon = 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    proptest! {
        #[test]
        fn median_is_order_statistic(mut v in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
            let m = median(&v);
            let below = v.iter().filter(|x| **x <= m).count();
            let above = v.iter().filter(|x| **x >= m).count();
            prop_assert!(below >= v.len() / 2);
            prop_assert!(above >= v.len() / 2);
            v.sort_by(|a, b| a.total_cmp(b));
            prop_assert!(m >= v[0] && m <= v[v.len() - 1]);
        }

        #[test]
        fn quantile_iqr_nonnegative(v in proptest::collection::vec(-1e6f64..1e6, 2..40)) {
            let iqr = quantile(&v, 0.75) - quantile(&v, 0.25);
            prop_assert!(iqr >= 0.0);
        }
    }
}
