//! Agreement metrics between two DR-provision series and their per-day
//! aggregation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("series need at least two values, got {0}")]
    TooShort(usize),
    #[error("correlation is undefined for a constant series")]
    ConstantSeries,
    #[error("cannot aggregate an empty set of values")]
    Empty,
}

fn check(a: &[f64], b: &[f64]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(MetricError::TooShort(a.len()));
    }
    Ok(())
}

pub fn mae(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    check(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

pub fn mse(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    check(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    check(a, b)?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // relative test: a series of identical values may leave rounding noise
    let scale = |m: f64| 1e-24 * n * (1.0 + m * m);
    if saa <= scale(ma) || sbb <= scale(mb) {
        return Err(MetricError::ConstantSeries);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// MAE, MSE and Pearson of one day. Pearson is `None` when undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayMetrics {
    pub mae: f64,
    pub mse: f64,
    pub pearson: Option<f64>,
}

impl DayMetrics {
    pub fn compare(a: &[f64], b: &[f64]) -> Result<Self, MetricError> {
        let pearson = match pearson(a, b) {
            Ok(p) => Some(p),
            Err(MetricError::ConstantSeries) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            mae: mae(a, b)?,
            mse: mse(a, b)?,
            pearson,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub average: f64,
    pub minimum: f64,
    pub maximum: f64,
    pub median: f64,
}

pub fn aggregate(values: &[f64]) -> Result<Summary, MetricError> {
    if values.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    Ok(Summary {
        average: values.iter().sum::<f64>() / n as f64,
        minimum: sorted[0],
        maximum: sorted[n - 1],
        median,
    })
}

/// Summary of a metric that may be undefined on some days. The average is
/// reported only when every day is defined; the order statistics use the
/// defined days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialSummary {
    pub average: Option<f64>,
    pub minimum: f64,
    pub maximum: f64,
    pub median: f64,
}

pub fn aggregate_partial(values: &[Option<f64>]) -> Result<PartialSummary, MetricError> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    let s = aggregate(&defined)?;
    Ok(PartialSummary {
        average: (defined.len() == values.len()).then_some(s.average),
        minimum: s.minimum,
        maximum: s.maximum,
        median: s.median,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_series() {
        let a = [0.1, 0.4, 0.2, 0.9];
        assert_eq!(mae(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert!((pearson(&a, &a).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn anti_correlated() {
        let (a, b) = ([0.0, 1.0], [1.0, 0.0]);
        assert_eq!(mae(&a, &b).unwrap(), 1.0);
        assert!((pearson(&a, &b).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert_eq!(mae(&[1.0], &[1.0, 2.0]), Err(MetricError::LengthMismatch(1, 2)));
        assert_eq!(mse(&[1.0], &[1.0]), Err(MetricError::TooShort(1)));
        assert_eq!(pearson(&[0.3; 5], &[0.1, 0.2, 0.3, 0.4, 0.5]), Err(MetricError::ConstantSeries));
        assert_eq!(aggregate(&[]), Err(MetricError::Empty));
        let d = DayMetrics::compare(&[0.2; 4], &[0.2; 4]).unwrap();
        assert_eq!(d.pearson, None);
    }

    #[test]
    fn aggregates() {
        let s = aggregate(&[0.3, 0.1, 0.2]).unwrap();
        assert!((s.average - 0.2).abs() < 1e-15);
        assert_eq!((s.minimum, s.maximum, s.median), (0.1, 0.3, 0.2));
        let s = aggregate(&[0.7]).unwrap();
        assert_eq!((s.average, s.minimum, s.maximum, s.median), (0.7, 0.7, 0.7, 0.7));
        assert_eq!(aggregate(&[1.0, 4.0, 2.0, 3.0]).unwrap().median, 2.5);
    }

    #[test]
    fn partial_average_undefined_when_a_day_is() {
        let s = aggregate_partial(&[Some(0.5), None, Some(0.9)]).unwrap();
        assert_eq!(s.average, None);
        assert_eq!(s.median, 0.7);
        let s = aggregate_partial(&[Some(0.5), Some(0.9)]).unwrap();
        assert!((s.average.unwrap() - 0.7).abs() < 1e-15);
    }
}
