//! Adaptive cutoff on a descending similarity profile.
//!
//! The profile is split at every admissible breakpoint `m`, an affine
//! least-squares line is fitted to each side, and the breakpoint with the
//! smallest length-weighted RMSE is kept.

use super::RetrievalError;

/// Objectives closer than this are treated as tied; the smaller breakpoint wins.
pub const CUTOFF_TIE_TOLERANCE: f64 = 1e-12;

/// RMSE of the least-squares line through `(n, scores[n-1])` for
/// `n = a..=b` (1-based, inclusive).
pub fn segment_fit_rmse(scores: &[f64], a: usize, b: usize) -> Result<f64, RetrievalError> {
    if a == 0 || b <= a || b > scores.len() {
        return Err(RetrievalError::InvalidSegment {
            a,
            b,
            len: scores.len(),
        });
    }
    if b - a == 1 {
        return Ok(0.0);
    }
    let ys = &scores[a - 1..b];
    let len = ys.len() as f64;
    let x_mean = (a + b) as f64 / 2.0;
    let y_mean = ys.iter().sum::<f64>() / len;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (k, y) in ys.iter().enumerate() {
        let dx = (a + k) as f64 - x_mean;
        sxx += dx * dx;
        sxy += dx * (y - y_mean);
    }
    let slope = sxy / sxx;
    let sse: f64 = ys
        .iter()
        .enumerate()
        .map(|(k, y)| {
            let fitted = y_mean + slope * ((a + k) as f64 - x_mean);
            (y - fitted).powi(2)
        })
        .sum();
    Ok((sse / len).sqrt())
}

/// Weighted two-segment objective at breakpoint `m` (left segment `1..=m`).
pub fn cutoff_objective(scores: &[f64], m: usize) -> Result<f64, RetrievalError> {
    let n = scores.len();
    let left = segment_fit_rmse(scores, 1, m)?;
    let right = segment_fit_rmse(scores, m + 1, n)?;
    let n = n as f64;
    Ok(m as f64 / n * left + (n - m as f64) / n * right)
}

/// Breakpoint in `2..=N-2` minimizing [`cutoff_objective`], smallest on ties.
/// Profiles shorter than four scores have no admissible breakpoint.
pub fn adaptive_cutoff(scores: &[f64]) -> Result<usize, RetrievalError> {
    let n = scores.len();
    if n < 4 {
        return Err(RetrievalError::DegenerateProfile(n));
    }
    let objectives: Vec<(usize, f64)> = (2..=n - 2)
        .map(|m| cutoff_objective(scores, m).map(|e| (m, e)))
        .collect::<Result<_, _>>()?;
    let best = objectives
        .iter()
        .map(|(_, e)| *e)
        .fold(f64::INFINITY, f64::min);
    Ok(objectives
        .iter()
        .find(|(_, e)| *e <= best + CUTOFF_TIE_TOLERANCE)
        .map(|(m, _)| *m)
        .expect("non-empty breakpoint range"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_and_two_point_segments_fit_exactly() {
        let s = [0.9, 0.8, 0.7];
        assert!(segment_fit_rmse(&s, 1, 3).unwrap() < 1e-15);
        assert_eq!(segment_fit_rmse(&[0.3, 0.9], 1, 2).unwrap(), 0.0);
    }

    #[test]
    fn tent_rmse_matches_closed_form() {
        // normal equations on (1,0),(2,1),(3,0): slope 0, intercept 1/3,
        // residuals -1/3, 2/3, -1/3, SSE = 2/3, RMSE = sqrt(2/9)
        let r = segment_fit_rmse(&[0.0, 1.0, 0.0], 1, 3).unwrap();
        assert!((r - 0.471_404_520_791_031_7).abs() < 1e-12);
    }

    #[test]
    fn segment_bounds_are_checked() {
        let s = [1.0, 0.5, 0.2];
        assert!(segment_fit_rmse(&s, 2, 2).is_err());
        assert!(segment_fit_rmse(&s, 3, 2).is_err());
        assert!(segment_fit_rmse(&s, 0, 2).is_err());
        assert!(segment_fit_rmse(&s, 2, 4).is_err());
    }

    #[test]
    fn recovers_exact_breakpoint() {
        let scores: Vec<f64> = (1..=12)
            .map(|n| {
                let n = n as f64;
                if n <= 5.0 {
                    1.0 - 0.01 * n
                } else {
                    0.5 - 0.1 * n
                }
            })
            .collect();
        assert_eq!(adaptive_cutoff(&scores).unwrap(), 5);
    }

    #[test]
    fn constant_profile_takes_smallest_breakpoint() {
        assert_eq!(adaptive_cutoff(&[0.42; 10]).unwrap(), 2);
        assert_eq!(adaptive_cutoff(&[0.1; 10]).unwrap(), 2);
    }

    #[test]
    fn short_profiles_are_degenerate() {
        assert_eq!(
            adaptive_cutoff(&[0.9, 0.5, 0.1]),
            Err(RetrievalError::DegenerateProfile(3))
        );
        assert_eq!(adaptive_cutoff(&[0.9, 0.8, 0.2, 0.1]).unwrap(), 2);
    }
}
