//! Small statistics and fitting helpers shared by the pipeline.

use thiserror::Error;

use crate::num::{half, Real};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty input")]
    Empty,
    #[error("least-squares system is underdetermined (needs two distinct abscissae)")]
    Underdetermined,
}

/// Median of a slice. Even-length inputs return the mean of the central pair.
pub fn median<R: Real>(values: &[R]) -> Result<R, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut sorted: Vec<R> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN stats input"));
    let n = sorted.len();
    if n % 2 == 1 {
        Ok(sorted[n / 2])
    } else {
        Ok(half(sorted[n / 2 - 1] + sorted[n / 2]))
    }
}

/// Sample standard deviation (n-1 denominator); zero for a single value.
pub fn stddev<R: Real>(values: &[R]) -> Result<R, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = R::of(values.len() as f64);
    if values.len() == 1 {
        return Ok(R::zero());
    }
    let mean = values.iter().copied().sum::<R>() / n;
    let ss = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<R>();
    Ok((ss / (n - R::one())).sqrt())
}

/// Least-squares fit of `y = intercept + slope * x`.
///
/// Returns `(intercept, slope)`. Requires at least two distinct abscissae.
pub fn fit_affine<R: Real>(xs: &[R], ys: &[R]) -> Result<(R, R), StatsError> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(StatsError::Empty);
    }
    let n = R::of(xs.len() as f64);
    let sx = xs.iter().copied().sum::<R>();
    let sy = ys.iter().copied().sum::<R>();
    let sxx = xs.iter().map(|&x| x * x).sum::<R>();
    let sxy = xs.iter().zip(ys).map(|(&x, &y)| x * y).sum::<R>();
    let det = n * sxx - sx * sx;
    let spread = sxx / n - (sx / n) * (sx / n);
    if spread <= R::of(1e-12) * (R::one() + sxx / n) {
        return Err(StatsError::Underdetermined);
    }
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / n;
    Ok((intercept, slope))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_picks_middle() {
        assert_eq!(median(&[12.0, 10.0, 11.0]).unwrap(), 11.0);
    }

    #[test]
    fn median_even_averages_central_pair() {
        assert_eq!(median(&[10.0, 12.0]).unwrap(), 11.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 10.0]).unwrap(), 2.5);
    }

    #[test]
    fn median_empty_errors() {
        assert_eq!(median::<f64>(&[]), Err(StatsError::Empty));
    }

    #[test]
    fn stddev_of_constant_is_zero() {
        assert_eq!(stddev(&[5.0, 5.0, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn stddev_matches_hand_computation() {
        // values 2, 4, 4, 4, 5, 5, 7, 9: mean 5, sum squares 32, n-1 = 7.
        let s = stddev(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn affine_fit_recovers_exact_line() {
        let xs = [0.2, 0.42622950819672134, 1.0];
        let ys: Vec<f64> = xs.iter().map(|x| 45.75 + 86.25 * x).collect();
        let (a, b) = fit_affine(&xs, &ys).unwrap();
        assert!((a - 45.75).abs() < 1e-9);
        assert!((b - 86.25).abs() < 1e-9);
    }

    #[test]
    fn affine_fit_rejects_single_abscissa() {
        assert_eq!(
            fit_affine(&[1.0, 1.0], &[2.0, 3.0]),
            Err(StatsError::Underdetermined)
        );
    }

    #[test]
    fn works_at_f32() {
        let m: f32 = median(&[1.0f32, 3.0, 2.0]).unwrap();
        assert_eq!(m, 2.0f32);
    }
}
