#![allow(dead_code)]

use nnimpute::{SurveyDataset, Unit};
use proptest::prelude::*;

/// One generated unit: inclusion probability, response flag, outcome, score.
pub type Row = (f64, bool, f64, f64);

/// Samples of 1 to `max` units with at least one respondent.
pub fn rows(max: usize) -> impl Strategy<Value = Vec<Row>> {
    prop::collection::vec((0.02f64..1.0, any::<bool>(), -5.0f64..5.0, -3.0f64..3.0), 1..max).prop_map(|mut v| {
        v[0].1 = true;
        v
    })
}

/// Dataset with the score as the only covariate, plus the scores.
pub fn dataset(rows: &[Row]) -> (SurveyDataset, Vec<f64>) {
    let big_n = rows.iter().map(|r| 1.0 / r.0).sum::<f64>().ceil() as usize + rows.len();
    let units = rows
        .iter()
        .enumerate()
        .map(|(i, &(pi, d, y, m))| {
            if d {
                Unit::respondent(i as u64, vec![m], y, pi)
            } else {
                Unit::nonrespondent(i as u64, vec![m], pi)
            }
        })
        .collect();
    let data = SurveyDataset::new(units, big_n).unwrap();
    let scores = rows.iter().map(|r| r.3).collect();
    (data, scores)
}

/// Fully observed, equal-probability sample.
pub fn complete(ys: &[f64], pi: f64) -> SurveyDataset {
    let units = ys
        .iter()
        .enumerate()
        .map(|(i, &y)| Unit::respondent(i as u64, vec![i as f64], y, pi))
        .collect();
    SurveyDataset::new(units, (ys.len() as f64 / pi).round() as usize).unwrap()
}
