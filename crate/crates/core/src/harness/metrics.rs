use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a list of predictions is scored against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Unweighted mean of per-class precision; a never-predicted class scores 0.
    #[default]
    MacroPrecision,
    Accuracy,
}

impl Metric {
    pub fn score(self, predictions: &[usize], truths: &[usize], classes: usize) -> Result<f64> {
        match self {
            Metric::MacroPrecision => macro_precision(predictions, truths, classes),
            Metric::Accuracy => accuracy(predictions, truths),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::MacroPrecision => "macro_precision",
            Metric::Accuracy => "accuracy",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "macro_precision" | "precision" => Ok(Metric::MacroPrecision),
            "accuracy" => Ok(Metric::Accuracy),
            other => Err(Error::InvalidArgument(format!("unknown metric {other:?}"))),
        }
    }
}

fn check_lengths(predictions: &[usize], truths: &[usize]) -> Result<()> {
    if predictions.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            op: "metric",
            left: vec![predictions.len()],
            right: vec![truths.len()],
        });
    }
    if predictions.is_empty() {
        return Err(Error::Empty("metric"));
    }
    Ok(())
}

pub fn macro_precision(predictions: &[usize], truths: &[usize], classes: usize) -> Result<f64> {
    check_lengths(predictions, truths)?;
    if classes == 0 {
        return Err(Error::Empty("macro_precision classes"));
    }
    let mut tp = vec![0usize; classes];
    let mut predicted = vec![0usize; classes];
    for (&p, &t) in predictions.iter().zip(truths) {
        if p >= classes || t >= classes {
            return Err(Error::LabelOutOfRange {
                label: p.max(t),
                classes,
            });
        }
        predicted[p] += 1;
        if p == t {
            tp[p] += 1;
        }
    }
    let total: f64 = tp
        .iter()
        .zip(&predicted)
        .map(|(&hit, &n)| if n == 0 { 0.0 } else { hit as f64 / n as f64 })
        .sum();
    Ok(total / classes as f64)
}

pub fn accuracy(predictions: &[usize], truths: &[usize]) -> Result<f64> {
    check_lengths(predictions, truths)?;
    let hits = predictions
        .iter()
        .zip(truths)
        .filter(|(p, t)| p == t)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(macro_precision(&[0, 1, 2], &[0, 1, 2], 3).unwrap(), 1.0);
        // class 0: 2/4 = 0.5; class 1 never predicted → 0.
        assert_eq!(
            macro_precision(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap(),
            0.25
        );
        assert_eq!(
            macro_precision(&[1, 1, 0, 0], &[0, 0, 1, 1], 2).unwrap(),
            0.0
        );
        assert!(macro_precision(&[0], &[0, 1], 2).is_err());
        assert_eq!(accuracy(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap(), 0.5);
    }

    /// Brute-force oracle: per-class precision by direct counting.
    fn oracle(p: &[usize], t: &[usize], c: usize) -> f64 {
        (0..c)
            .map(|k| {
                let pred: Vec<usize> = (0..p.len()).filter(|&i| p[i] == k).collect();
                if pred.is_empty() {
                    0.0
                } else {
                    pred.iter().filter(|&&i| t[i] == k).count() as f64 / pred.len() as f64
                }
            })
            .sum::<f64>()
            / c as f64
    }

    proptest! {
        #[test]
        fn bounded_oracle_and_permutation_invariant(
            pairs in prop::collection::vec((0usize..4, 0usize..4), 1..40),
            perm in Just([2usize, 0, 3, 1]).prop_shuffle(),
        ) {
            let (p, t): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let m = macro_precision(&p, &t, 4).unwrap();
            prop_assert!((0.0..=1.0).contains(&m));
            prop_assert!((m - oracle(&p, &t, 4)).abs() < 1e-12);
            let pp: Vec<usize> = p.iter().map(|&k| perm[k]).collect();
            let tt: Vec<usize> = t.iter().map(|&k| perm[k]).collect();
            prop_assert!((macro_precision(&pp, &tt, 4).unwrap() - m).abs() < 1e-12);
        }
    }
}
