//! Text and CSV renderings of Monte Carlo results, and the replicate log.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::variance::VarianceMethod;

use super::scenario::{MonteCarloReport, ReplicateRecord};

/// One `(target, population)` line of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub target: String,
    pub population: String,
    /// `a` when the matching basis contains the true mean, `i` otherwise.
    pub accuracy: char,
    pub bias_x100: f64,
    pub se_x100: f64,
    pub methods: Vec<MethodCell>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodCell {
    pub method: VarianceMethod,
    pub rb_pct: f64,
    pub cr_pct: f64,
}

pub fn table_rows(report: &MonteCarloReport) -> Vec<TableRow> {
    let accuracy = if report.config.accurate_matching() { 'a' } else { 'i' };
    report
        .metrics
        .iter()
        .map(|m| TableRow {
            target: m.target.symbol().to_string(),
            population: report.config.population.to_string(),
            accuracy,
            bias_x100: 100.0 * m.bias,
            se_x100: 100.0 * m.se,
            methods: m
                .methods
                .iter()
                .map(|mm| MethodCell {
                    method: mm.method,
                    rb_pct: mm.relative_bias_pct,
                    cr_pct: mm.coverage_pct,
                })
                .collect(),
        })
        .collect()
}

fn method_title(m: VarianceMethod) -> &'static str {
    match m {
        VarianceMethod::Proposed => "Prop JK",
        VarianceMethod::Naive => "Naive JK",
    }
}

fn fmt_rb(rb: f64) -> String {
    if rb.is_nan() {
        "n/a".into()
    } else if rb > 1000.0 {
        ">1000".into()
    } else {
        format!("{rb:.1}")
    }
}

fn fmt_num(v: f64, digits: usize) -> String {
    if v.is_nan() {
        "n/a".into()
    } else {
        format!("{v:.digits$}")
    }
}

fn columns(rows: &[TableRow]) -> Vec<VarianceMethod> {
    rows.first().map_or_else(
        || vec![VarianceMethod::Proposed, VarianceMethod::Naive],
        |r| r.methods.iter().map(|c| c.method).collect(),
    )
}

fn cells(rows: &[TableRow]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header: Vec<String> = ["", "", "m(x)", "Bias", "S.E."].iter().map(|s| s.to_string()).collect();
    for m in columns(rows) {
        header.push(format!("{} RB", method_title(m)));
        header.push(format!("{} CR", method_title(m)));
    }
    let body = rows
        .iter()
        .map(|r| {
            let mut line = vec![
                r.target.clone(),
                format!("({})", r.population),
                r.accuracy.to_string(),
                fmt_num(r.bias_x100, 2),
                fmt_num(r.se_x100, 2),
            ];
            for c in &r.methods {
                line.push(fmt_rb(c.rb_pct));
                line.push(fmt_num(c.cr_pct, 1));
            }
            line
        })
        .collect();
    (header, body)
}

/// Aligned text table. Bias and S.E. are scaled by 100; RB and CR are
/// percentages, with RB above 1000 shown as `>1000`.
pub fn emit_table(rows: &[TableRow]) -> String {
    let (header, body) = cells(rows);
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for line in &body {
        for (w, c) in widths.iter_mut().zip(line) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    for line in std::iter::once(&header).chain(&body) {
        let rendered: Vec<String> = line
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i < 3 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(rendered.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// The same table as CSV.
pub fn emit_table_csv(rows: &[TableRow]) -> String {
    let mut header = vec!["target".to_string(), "population".into(), "m".into(), "bias_x100".into(), "se_x100".into()];
    for m in columns(rows) {
        header.push(format!("{m}_rb_pct"));
        header.push(format!("{m}_cr_pct"));
    }
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{},{},{}", r.target, r.population, r.accuracy, r.bias_x100, r.se_x100);
        for c in &r.methods {
            let _ = write!(out, ",{},{}", c.rb_pct, c.cr_pct);
        }
        out.push('\n');
    }
    out
}

/// Per target and method metrics at full precision.
pub fn report_csv(report: &MonteCarloReport) -> String {
    let cfg = &report.config;
    let design = format!("{:?}", cfg.design).to_lowercase();
    let accuracy = if cfg.accurate_matching() { 'a' } else { 'i' };
    let mut out = String::from(
        "target,population,design,m,method,truth,bias,se,mean_variance,rb_pct,cr_pct,reps,used,failures\n",
    );
    for t in &report.metrics {
        for m in &t.methods {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                t.target,
                cfg.population,
                design,
                accuracy,
                m.method,
                t.truth,
                t.bias,
                t.se,
                m.mean_variance,
                m.relative_bias_pct,
                m.coverage_pct,
                report.reps,
                m.used,
                m.failures
            );
        }
    }
    out
}

/// One row per Monte Carlo replicate with every point estimate, variance,
/// interval and coverage indicator. Failed quantities are left empty and the
/// reason goes to the `errors` column.
pub fn replicates_csv(report: &MonteCarloReport) -> Result<String> {
    let cfg = &report.config;
    let mut header = vec!["rep".to_string(), "n".into(), "respondents".into()];
    for t in &cfg.targets {
        header.push(format!("{t}_point"));
        for m in &cfg.methods {
            for suffix in ["var", "lo", "hi", "hit"] {
                header.push(format!("{t}_{m}_{suffix}"));
            }
        }
    }
    header.push("errors".into());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(csv_err)?;
    for r in &report.records {
        w.write_record(replicate_fields(report, r)).map_err(csv_err)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Config(e.to_string()))?)
        .map_err(|e| Error::Config(e.to_string()))
}

fn replicate_fields(report: &MonteCarloReport, r: &ReplicateRecord) -> Vec<String> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut fields = vec![r.rep.to_string(), r.sample_size.to_string(), r.respondents.to_string()];
    let mut errors: Vec<String> = r.error.iter().cloned().collect();
    for (t, tr) in report.config.targets.iter().zip(&r.targets) {
        fields.push(opt(tr.point));
        if let Some(e) = &tr.error {
            errors.push(format!("{t}: {e}"));
        }
        for (m, mr) in report.config.methods.iter().zip(&tr.methods) {
            fields.push(opt(mr.variance));
            fields.push(opt(mr.ci.map(|c| c.0)));
            fields.push(opt(mr.ci.map(|c| c.1)));
            fields.push(mr.covered.map(|h| u8::from(h).to_string()).unwrap_or_default());
            if let (Some(e), None) = (&mr.error, &tr.error) {
                errors.push(format!("{t}/{m}: {e}"));
            }
        }
    }
    fields.push(errors.join("; "));
    fields
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(e.to_string())
}

/// Human-readable summary: scenario, population parameters and the table.
pub fn summary_text(report: &MonteCarloReport) -> String {
    let cfg = &report.config;
    let p = &report.population;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "population {} (N = {}), design {:?}, basis {:?}, {} replicates",
        cfg.population,
        cfg.population_size,
        cfg.design,
        cfg.basis(),
        report.reps
    );
    let _ = writeln!(
        out,
        "mu = {:.6}, c = {:.6}, eta = {:.4}, xi = {:.6}, response rate {:.4}",
        p.mean, p.threshold, p.proportion, p.median, p.response_rate
    );
    let _ = writeln!(
        out,
        "inclusion spread max/min = {:.4}, clipped probabilities = {}",
        p.inclusion_spread, p.clipped
    );
    let failures: usize = report
        .metrics
        .iter()
        .map(|t| t.failures + t.methods.iter().map(|m| m.failures).sum::<usize>())
        .sum();
    let _ = writeln!(out, "failed estimates: {failures}\n");
    out.push_str(&emit_table(&table_rows(report)));
    out
}

/// Writes `report.csv`, `table.txt` and `replicates.csv` into `dir`.
pub fn write_outputs(report: &MonteCarloReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.csv"), report_csv(report))?;
    fs::write(dir.join("table.txt"), summary_text(report))?;
    fs::write(dir.join("replicates.csv"), replicates_csv(report)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p1_row(naive_rb: f64) -> TableRow {
        TableRow {
            target: "mu".into(),
            population: "P1".into(),
            accuracy: 'a',
            bias_x100: 0.0,
            se_x100: 4.87,
            methods: vec![
                MethodCell {
                    method: VarianceMethod::Proposed,
                    rb_pct: 0.1,
                    cr_pct: 94.9,
                },
                MethodCell {
                    method: VarianceMethod::Naive,
                    rb_pct: naive_rb,
                    cr_pct: 100.0,
                },
            ],
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = emit_table(&[]);
        assert_eq!(t.lines().count(), 1);
        assert!(t.contains("Prop JK RB") && t.contains("Naive JK CR"));
        assert_eq!(emit_table_csv(&[]).lines().count(), 1);
    }

    #[test]
    fn single_row_column_order() {
        let t = emit_table(&[p1_row(1234.0)]);
        let data: Vec<&str> = t.lines().nth(1).unwrap().split_whitespace().collect();
        assert_eq!(data, ["mu", "(P1)", "a", "0.00", "4.87", "0.1", "94.9", ">1000", "100.0"]);
    }

    #[test]
    fn rb_threshold() {
        assert_eq!(fmt_rb(1000.0), "1000.0");
        assert_eq!(fmt_rb(1000.01), ">1000");
        assert_eq!(fmt_rb(f64::NAN), "n/a");
        let csv = emit_table_csv(&[p1_row(1234.0)]);
        assert_eq!(csv.lines().nth(1).unwrap(), "mu,P1,a,0,4.87,0.1,94.9,1234,100");
    }
}
