//! Result serialization: JSON per run and long-format CSV for plotting.

use std::io::Write;

use serde::Serialize;

use crate::acceptance::BreakEvenReport;
use crate::money::Cents;
use crate::pipeline::{Policy, PolicyOutcome, RunResult, SurveySizeRow};
use crate::population::IncomeGroup;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LongRow {
    pub scenario: String,
    pub policy: String,
    /// USD
    pub budget: String,
    pub metric: String,
    pub value: String,
}

fn usd(c: Cents) -> String {
    let sign = if c.0 < 0 { "-" } else { "" };
    let a = c.0.unsigned_abs();
    format!("{sign}{}.{:02}", a / 100, a % 100)
}

fn policy_metrics(o: &PolicyOutcome) -> Vec<(String, String)> {
    let mut m = vec![
        (
            "reduction_percent".to_string(),
            o.reduction_percent.to_string(),
        ),
        ("annual_tons".to_string(), o.annual_tons.to_string()),
        ("value_usd".to_string(), usd(o.value)),
        ("spend_usd".to_string(), usd(o.spend)),
        ("adopters".to_string(), o.adopters.to_string()),
        ("incentivized".to_string(), o.incentivized.to_string()),
    ];
    for g in IncomeGroup::ALL {
        m.push((
            format!("spend_{g}_usd"),
            usd(o.per_group_spend.get(&g).copied().unwrap_or_default()),
        ));
    }
    for y in &o.per_year {
        m.push((format!("year_{}_spend_usd", y.year), usd(y.spend)));
        m.push((
            format!("year_{}_reduction_percent", y.year),
            y.reduction_percent.to_string(),
        ));
    }
    m
}

/// One row per (scenario, policy, budget, metric).
pub fn long_rows(results: &[RunResult]) -> Vec<LongRow> {
    let mut rows = Vec::new();
    for r in results {
        for p in Policy::ALL {
            for (metric, value) in policy_metrics(r.policy(p)) {
                rows.push(LongRow {
                    scenario: r.scenario.clone(),
                    policy: p.to_string(),
                    budget: usd(r.budget),
                    metric,
                    value,
                });
            }
        }
        let survey = [
            ("survey_responses", r.survey.responses.to_string()),
            ("survey_acceptances", r.survey.acceptances.to_string()),
            (
                "survey_positive_lcb_cells",
                r.survey.positive_lcb_cells.to_string(),
            ),
            (
                "survey_non_nominal_contexts",
                r.survey.non_nominal_contexts.to_string(),
            ),
        ];
        for (metric, value) in survey {
            rows.push(LongRow {
                scenario: r.scenario.clone(),
                policy: Policy::Bandit.to_string(),
                budget: usd(r.budget),
                metric: metric.to_string(),
                value,
            });
        }
    }
    rows
}

pub fn write_long_csv<W: Write>(results: &[RunResult], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for row in long_rows(results) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized, W: Write>(
    value: &T,
    writer: W,
) -> Result<(), serde_json::Error> {
    serde_json::to_writer_pretty(writer, value)
}

/// Per-household table: id, break-even year (empty when none), then the
/// NetBenefit at each horizon.
pub fn write_break_even_csv<W: Write>(
    report: &BreakEvenReport,
    writer: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["household_id".to_string(), "break_even_year".to_string()];
    header.extend(report.horizons.iter().map(|t| format!("net_benefit_t{t}")));
    w.write_record(&header)?;
    for row in &report.table {
        let mut rec = vec![
            row.household_id.clone(),
            row.break_even_year
                .map(|y| y.to_string())
                .unwrap_or_default(),
        ];
        rec.extend(row.net_benefit.iter().map(|v| format!("{v:.2}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Failing fraction per (discount rate, horizon).
pub fn write_break_even_summary_csv<W: Write>(
    reports: &[(f64, BreakEvenReport)],
    writer: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["discount_rate", "horizon_years", "failing_fraction"])?;
    for (rate, report) in reports {
        for (t, f) in report.horizons.iter().zip(&report.failing_fraction) {
            w.write_record([rate.to_string(), t.to_string(), f.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per survey size.
pub fn write_survey_size_csv<W: Write>(
    rows: &[SurveySizeRow],
    writer: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "survey_size",
        "seeds",
        "budget_usd",
        "mean_bandit_value_usd",
        "mean_bandit_reduction_percent",
        "status_quo_value_usd",
        "optimal_value_usd",
        "mean_observed_cells",
        "mean_positive_lcb_cells",
    ])?;
    for r in rows {
        let k = r.coverage.len() as f64;
        let mean = |f: fn(&crate::pipeline::SurveyDiagnostics) -> usize| {
            r.coverage.iter().map(|c| f(c) as f64).sum::<f64>() / k
        };
        w.write_record([
            r.survey_size.to_string(),
            r.seeds.len().to_string(),
            usd(r.budget),
            format!("{:.2}", r.mean_bandit_value),
            r.mean_reduction_percent.to_string(),
            usd(r.status_quo_value),
            usd(r.optimal_value),
            mean(|c| c.observed_cells).to_string(),
            mean(|c| c.positive_lcb_cells).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Responses per arm and per cell-count bucket, one row per (size, seed).
pub fn write_coverage_csv<W: Write>(rows: &[SurveySizeRow], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    let arms = rows
        .first()
        .and_then(|r| r.coverage.first())
        .map_or(0, |c| c.arm_counts.len());
    let buckets = rows
        .first()
        .and_then(|r| r.coverage.first())
        .map_or(0, |c| c.cell_histogram.len());
    let mut header = vec!["survey_size".to_string(), "seed".to_string()];
    header.extend((0..arms).map(|k| format!("arm_{k}")));
    header.extend((0..buckets).map(|b| {
        if b + 1 == buckets {
            format!("cells_{b}_plus")
        } else {
            format!("cells_{b}")
        }
    }));
    w.write_record(&header)?;
    for r in rows {
        for (seed, c) in r.seeds.iter().zip(&r.coverage) {
            let mut rec = vec![r.survey_size.to_string(), seed.to_string()];
            rec.extend(c.arm_counts.iter().map(u64::to_string));
            rec.extend(c.cell_histogram.iter().map(usize::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
