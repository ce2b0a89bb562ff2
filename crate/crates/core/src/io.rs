//! CSV ingestion and the config-driven estimation pipeline.
//!
//! Input files have a header row `unit_id,x1,...,xp,y,delta,pi` and one row
//! per sampled unit. `y` may be empty when `delta` is 0.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{nni_estimate, ParameterSpec};
use crate::matching::{fit_matching_model, matching_discrepancy, nearest_neighbor_match, Basis, Discrepancy};
use crate::sim::scenario::ReplicationKind;
use crate::smoothers::KernelConfig;
use crate::survey::{SurveyDataset, Unit};
use crate::variance::{
    naive_variance, proposed_variance, ReplicationScheme, SchemeKind, VarianceMethod, VarianceReport,
};

fn csv_error(line: u64, message: impl Into<String>) -> Error {
    Error::Csv {
        line,
        message: message.into(),
    }
}

/// Reads a sample from CSV text. `population_size` is the `N` of the survey.
pub fn read_sample_csv(text: &str, population_size: usize) -> Result<SurveyDataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| csv_error(1, e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let k = names.len();
    if k < 5 || names[0] != "unit_id" || names[k - 3..] != ["y", "delta", "pi"] {
        return Err(csv_error(1, "header must be unit_id,x1..xp,y,delta,pi"));
    }
    for (j, name) in names[1..k - 3].iter().enumerate() {
        if *name != format!("x{}", j + 1) {
            return Err(csv_error(1, format!("expected column x{}, found {name:?}", j + 1)));
        }
    }
    let p = k - 4;
    let mut units = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |pos| pos.line());
            csv_error(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |pos| pos.line());
        let num = |j: usize| -> Result<f64> {
            record[j]
                .parse::<f64>()
                .map_err(|_| csv_error(line, format!("column {}: {:?} is not a number", names[j], &record[j])))
        };
        let id: u64 = record[0]
            .parse()
            .map_err(|_| csv_error(line, format!("unit_id {:?} is not a non-negative integer", &record[0])))?;
        let covariates = (1..=p).map(num).collect::<Result<Vec<f64>>>()?;
        let responded = match &record[k - 2] {
            "1" => true,
            "0" => false,
            other => return Err(csv_error(line, format!("delta must be 0 or 1, found {other:?}"))),
        };
        let outcome = match (&record[k - 3], responded) {
            ("", true) => return Err(csv_error(line, "delta = 1 but y is empty")),
            ("", false) | (_, false) => None,
            (_, true) => Some(num(k - 3)?),
        };
        let pi = num(k - 1)?;
        if !(pi > 0.0 && pi <= 1.0) {
            return Err(csv_error(line, format!("pi = {pi} is outside (0, 1]")));
        }
        units.push(Unit {
            id,
            covariates,
            outcome,
            responded,
            inclusion_prob: pi,
        });
    }
    SurveyDataset::new(units, population_size)
}

/// Writes a dataset in the input CSV layout.
pub fn write_sample_csv(data: &SurveyDataset) -> String {
    let mut out = String::from("unit_id");
    for j in 1..=data.dimension() {
        let _ = write!(out, ",x{j}");
    }
    out.push_str(",y,delta,pi\n");
    for u in data.units() {
        let _ = write!(out, "{}", u.id);
        for x in &u.covariates {
            let _ = write!(out, ",{x}");
        }
        let y = match (u.responded, u.outcome) {
            (true, Some(y)) => y.to_string(),
            _ => String::new(),
        };
        let _ = writeln!(out, ",{y},{},{}", u8::from(u.responded), u.inclusion_prob);
    }
    out
}

/// Settings of `estimate`. Targets are written `mean`, `median`,
/// `quantile:<alpha>` or `proportion_below:<c>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub population_size: usize,
    pub targets: Vec<String>,
    pub basis: Basis,
    pub methods: Vec<VarianceMethod>,
    pub replication: ReplicationKind,
    pub bootstrap_replicates: usize,
    pub bandwidth_scale: f64,
    /// Fixed bandwidth; overrides `bandwidth_scale` when set.
    pub bandwidth: Option<f64>,
    pub seed: u64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            population_size: 0,
            targets: vec!["mean".into(), "median".into()],
            basis: Basis::FirstOrder,
            methods: vec![VarianceMethod::Proposed],
            replication: ReplicationKind::Jackknife,
            bootstrap_replicates: 200,
            bandwidth_scale: 1.5,
            bandwidth: None,
            seed: 1,
        }
    }
}

const FIELD_DOCS: &[(&str, &str)] = &[
    ("population_size", "population size N (required)"),
    ("targets", "mean, median, quantile:<alpha> or proportion_below:<c>"),
    ("basis", "first_order, first_order_plus_squares or first_and_second_order"),
    ("methods", "any of proposed, naive"),
    ("replication", "jackknife or bootstrap"),
    ("bootstrap_replicates", "replicates when replication = bootstrap"),
    ("bandwidth_scale", "kernel bandwidth h = scale * n^(-1/5)"),
    ("seed", "seed of the bootstrap draws"),
];

impl EstimateConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.population_size == 0 {
            return Err(Error::Config("population_size is required".into()));
        }
        if cfg.targets.is_empty() {
            return Err(Error::Config("targets must not be empty".into()));
        }
        cfg.specs()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn specs(&self) -> Result<Vec<ParameterSpec>> {
        self.targets.iter().map(|t| parse_target(t)).collect()
    }

    pub fn to_commented_toml(&self) -> String {
        let plain = toml::to_string(self).expect("config serializes");
        let mut out = String::new();
        for line in plain.lines() {
            let key = line.split('=').next().unwrap_or("").trim();
            if let Some((_, doc)) = FIELD_DOCS.iter().find(|(k, _)| *k == key) {
                let _ = writeln!(out, "# {doc}");
            }
            out.push_str(line);
            out.push('\n');
        }
        out.push_str("# fixed kernel bandwidth, overrides bandwidth_scale\n# bandwidth = 0.4\n");
        out
    }
}

pub fn parse_target(text: &str) -> Result<ParameterSpec> {
    let bad = || Error::Config(format!("unknown target {text:?}"));
    let number = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    match text.split_once(':') {
        None if text == "mean" => Ok(ParameterSpec::Mean),
        None if text == "median" => ParameterSpec::quantile(0.5),
        Some(("quantile", a)) => ParameterSpec::quantile(number(a)?),
        Some(("proportion_below", c)) => Ok(ParameterSpec::ProportionBelow { threshold: number(c)? }),
        _ => Err(bad()),
    }
}

/// Result of the estimation pipeline on one file.
#[derive(Debug, Clone)]
pub struct EstimateOutput {
    pub reports: Vec<VarianceReport>,
    pub summary: String,
}

impl EstimateOutput {
    pub fn report_csv(&self) -> String {
        let mut out = String::from(VarianceReport::CSV_HEADER);
        out.push('\n');
        for r in &self.reports {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    /// Writes `report.csv` and `summary.txt`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.csv"), self.report_csv())?;
        fs::write(dir.join("summary.txt"), &self.summary)?;
        Ok(())
    }
}

/// Fits the matching model, imputes, and estimates every configured target
/// with every configured variance method.
pub fn estimate(data: &SurveyDataset, config: &EstimateConfig) -> Result<EstimateOutput> {
    let model = fit_matching_model(data, config.basis)?;
    let scores = model.scores(data)?;
    let assignment = nearest_neighbor_match(data, &scores)?;
    let kind = match config.replication {
        ReplicationKind::Jackknife => SchemeKind::DeleteOneJackknife,
        ReplicationKind::Bootstrap => SchemeKind::Bootstrap {
            replicates: config.bootstrap_replicates,
        },
    };
    let scheme = ReplicationScheme::build(kind, data.design_weights().as_slice(), config.seed)?;
    let kernel = match config.bandwidth {
        Some(h) => KernelConfig::new(h)?,
        None => KernelConfig::rule_of_thumb(data.len(), config.bandwidth_scale)?,
    };

    let mut reports = Vec::new();
    for spec in config.specs()? {
        // The mean-type estimators evaluate both algebraic forms and fail if they disagree.
        nni_estimate(data, &assignment, &spec)?;
        for method in &config.methods {
            reports.push(match method {
                VarianceMethod::Proposed => proposed_variance(data, &assignment, &scores, &spec, &scheme, kernel)?,
                VarianceMethod::Naive => naive_variance(data, config.basis, &spec, &scheme)?,
            });
        }
    }

    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "n = {}, respondents = {}, N = {}, estimated N = {:.3}",
        data.len(),
        data.respondent_count(),
        data.population_size(),
        data.estimated_population_size()
    );
    let _ = writeln!(summary, "matching model ({:?}):", config.basis);
    for (name, c) in config.basis.term_names(data.dimension()).iter().zip(model.coefficients()) {
        let _ = writeln!(summary, "  {name:<12} {c:>14.6}");
    }
    let _ = writeln!(
        summary,
        "mean |m_donor - m_recipient| = {:.6}, most uses of one donor = {}",
        matching_discrepancy(&assignment, Discrepancy::Scalar(&scores)),
        assignment.uses().iter().max().copied().unwrap_or(0)
    );
    let _ = writeln!(summary, "replication: {:?}, L = {}, bandwidth = {:.6}\n", kind, scheme.replicates(), kernel.bandwidth());
    let _ = writeln!(
        summary,
        "{:<24} {:<9} {:>14} {:>14} {:>14} {:>14}",
        "target", "method", "estimate", "std. error", "ci low", "ci high"
    );
    for r in &reports {
        let _ = writeln!(
            summary,
            "{:<24} {:<9} {:>14.6} {:>14.6} {:>14.6} {:>14.6}",
            r.target,
            r.method,
            r.point,
            r.variance.sqrt(),
            r.ci_low,
            r.ci_high
        );
    }
    Ok(EstimateOutput { reports, summary })
}

/// Reads `data_path` and `config_path` and runs [`estimate`].
pub fn estimate_from_csv(data_path: &Path, config_path: &Path) -> Result<EstimateOutput> {
    let config = EstimateConfig::load(config_path)?;
    let data = read_sample_csv(&fs::read_to_string(data_path)?, config.population_size)?;
    estimate(&data, &config)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIVE: &str = "unit_id,x1,y,delta,pi\n1,0,1,1,1\n2,1,2,1,1\n3,0.4,,0,1\n4,2.1,,0,1\n5,3,5,1,1\n";

    #[test]
    fn reads_five_unit_file() {
        let d = read_sample_csv(FIVE, 5).unwrap();
        assert_eq!(d.len(), 5);
        assert_eq!(d.respondent_count(), 3);
        assert_eq!(d.units()[2].outcome, None);
        assert_eq!(read_sample_csv(&write_sample_csv(&d), 5).unwrap().units(), d.units());
    }

    #[test]
    fn line_numbered_errors() {
        let cases = [
            ("unit_id,x1,y,delta,pi\n1,0,,1,0.5\n", 2, "y is empty"),
            ("unit_id,x1,y,delta,pi\n1,0,1,1,0.5\n2,0,1,2,0.5\n", 3, "delta"),
            ("unit_id,x1,y,delta,pi\n1,0,1,1,0.5\n2,abc,1,1,0.5\n", 3, "x1"),
            ("unit_id,x1,y,delta,pi\n1,0,1,1,1.5\n", 2, "pi"),
            ("id,x1,y,delta,pi\n", 1, "header"),
            ("unit_id,x2,y,delta,pi\n", 1, "x1"),
        ];
        for (text, line, needle) in cases {
            match read_sample_csv(text, 10) {
                Err(Error::Csv { line: l, message }) => {
                    assert_eq!(l, line, "{message}");
                    assert!(message.contains(needle), "{message}");
                }
                other => panic!("expected a csv error, got {other:?}"),
            }
        }
    }

    #[test]
    fn targets_parse() {
        assert!(matches!(parse_target("mean"), Ok(ParameterSpec::Mean)));
        assert!(matches!(parse_target("median"), Ok(ParameterSpec::Quantile { alpha }) if alpha == 0.5));
        assert!(matches!(parse_target("quantile:0.9"), Ok(ParameterSpec::Quantile { alpha }) if alpha == 0.9));
        assert!(
            matches!(parse_target("proportion_below:1.5"), Ok(ParameterSpec::ProportionBelow { threshold }) if threshold == 1.5)
        );
        assert!(parse_target("quantile:1.5").is_err());
        assert!(parse_target("variance").is_err());
    }

    #[test]
    fn config_text() {
        assert!(EstimateConfig::from_toml("").is_err());
        let c = EstimateConfig::from_toml("population_size = 5\ntargets = [\"mean\"]").unwrap();
        assert_eq!(c.population_size, 5);
        let d = EstimateConfig {
            population_size: 9,
            ..EstimateConfig::default()
        };
        assert_eq!(EstimateConfig::from_toml(&d.to_commented_toml()).unwrap(), d);
    }

    #[test]
    fn five_unit_pipeline() {
        let d = read_sample_csv(FIVE, 5).unwrap();
        let cfg = EstimateConfig {
            population_size: 5,
            targets: vec!["mean".into()],
            bandwidth: Some(1.0),
            ..EstimateConfig::default()
        };
        let out = estimate(&d, &cfg).unwrap();
        assert!((out.reports[0].point - 2.8).abs() < 1e-12);
        assert!(out.report_csv().starts_with(VarianceReport::CSV_HEADER));
    }
}
