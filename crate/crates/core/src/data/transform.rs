use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Direction along which ranks are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RankAxis {
    /// Rank each date's cross-section of assets (the default).
    #[default]
    CrossSection,
    /// Rank each asset's own history.
    TimeSeries,
}

/// Average ranks (1-based) of the present values, scaled to `rank / count - 0.5`.
fn scaled_ranks(values: &[f64]) -> Vec<f64> {
    let mut present: Vec<(usize, f64)> = values
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, v)| !v.is_nan())
        .collect();
    let mut out = vec![f64::NAN; values.len()];
    let n = present.len();
    if n == 0 {
        return out;
    }
    present.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && present[j + 1].1 == present[i].1 {
            j += 1;
        }
        // positions i..=j share the average of ranks i+1..=j+1
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for item in &present[i..=j] {
            out[item.0] = avg / n as f64 - 0.5;
        }
        i = j + 1;
    }
    out
}

/// Cross-sectional rank transform: every present value in a row becomes
/// `rank / present_count - 0.5` with average ranks for ties. Missing cells stay
/// missing.
pub fn rank_transform(x: &DMatrix<f64>) -> DMatrix<f64> {
    rank_transform_along(x, RankAxis::CrossSection)
}

pub fn rank_transform_along(x: &DMatrix<f64>, axis: RankAxis) -> DMatrix<f64> {
    let mut out = x.clone();
    match axis {
        RankAxis::CrossSection => {
            for i in 0..x.nrows() {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                for (j, v) in scaled_ranks(&row).into_iter().enumerate() {
                    out[(i, j)] = v;
                }
            }
        }
        RankAxis::TimeSeries => {
            for j in 0..x.ncols() {
                let col: Vec<f64> = x.column(j).iter().copied().collect();
                for (i, v) in scaled_ranks(&col).into_iter().enumerate() {
                    out[(i, j)] = v;
                }
            }
        }
    }
    out
}

/// Number of observations in the training block when `len` observations are
/// split with the final `ceil(fraction * len)` held out for validation.
pub fn split_point(len: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Split { len, fraction });
    }
    // guard against 0.2 * 240 = 48.000000000000004
    let val = (fraction * len as f64 - 1e-9).ceil().max(0.0) as usize;
    if val == 0 || val >= len {
        return Err(Error::Split { len, fraction });
    }
    Ok(len - val)
}

/// Contiguous (training, validation) index ranges preserving temporal order.
pub fn split_ranges(len: usize, fraction: f64) -> Result<(Range<usize>, Range<usize>)> {
    let cut = split_point(len, fraction)?;
    Ok((0..cut, cut..len))
}

/// Split a window of dates into training and validation blocks.
pub fn split_train_validation<T>(window: &[T], fraction: f64) -> Result<(&[T], &[T])> {
    let cut = split_point(window.len(), fraction)?;
    Ok(window.split_at(cut))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rank_examples() {
        let x = DMatrix::from_row_slice(1, 4, &[10.0, -2.0, 5.0, 7.0]);
        let r = rank_transform(&x);
        assert_eq!(r.row(0).iter().copied().collect::<Vec<_>>(), [0.5, -0.25, 0.0, 0.25]);
        let ties = rank_transform(&DMatrix::from_row_slice(1, 2, &[1.0, 1.0]));
        assert_eq!(ties[(0, 0)], 0.25);
        assert_eq!(ties[(0, 1)], 0.25);
        let single = rank_transform(&DMatrix::from_row_slice(1, 1, &[3.3]));
        assert_eq!(single[(0, 0)], 0.5);
    }

    #[test]
    fn missing_cells_stay_missing() {
        let x = DMatrix::from_row_slice(1, 3, &[1.0, f64::NAN, 2.0]);
        let r = rank_transform(&x);
        assert_eq!(r[(0, 0)], 0.0);
        assert!(r[(0, 1)].is_nan());
        assert_eq!(r[(0, 2)], 0.5);
    }

    #[test]
    fn time_series_axis() {
        let x = DMatrix::from_column_slice(3, 1, &[3.0, 1.0, 2.0]);
        let r = rank_transform_along(&x, RankAxis::TimeSeries);
        for (got, want) in r.column(0).iter().zip([0.5, -1.0 / 6.0, 1.0 / 6.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn split_examples() {
        assert_eq!(split_ranges(240, 0.2).unwrap(), (0..192, 192..240));
        assert_eq!(split_ranges(10, 0.2).unwrap(), (0..8, 8..10));
        assert!(matches!(split_ranges(10, 1.0), Err(Error::Split { .. })));
        assert!(split_ranges(1, 0.2).is_err());
        let dates: Vec<u32> = (0..10).collect();
        let (a, b) = split_train_validation(&dates, 0.2).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
    }

    proptest! {
        #[test]
        fn ranks_bounded_and_monotone_invariant(row in proptest::collection::vec(-100.0f64..100.0, 1..30)) {
            let x = DMatrix::from_row_slice(1, row.len(), &row);
            let r = rank_transform(&x);
            for v in r.iter() {
                prop_assert!(*v > -0.5 && *v <= 0.5);
            }
            // strictly monotone map: x -> exp(x / 50) * 3 + 1
            let y = x.map(|v| (v / 50.0).exp() * 3.0 + 1.0);
            prop_assert_eq!(r, rank_transform(&y));
        }

        #[test]
        fn split_blocks_partition(len in 2usize..500, frac in 0.01f64..0.99) {
            if let Ok((a, b)) = split_ranges(len, frac) {
                prop_assert!(!a.is_empty() && !b.is_empty());
                prop_assert_eq!(a.end, b.start);
                prop_assert_eq!(a.start, 0);
                prop_assert_eq!(b.end, len);
            }
        }
    }
}
