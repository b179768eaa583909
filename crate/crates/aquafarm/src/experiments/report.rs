//! Result rows and the CSV schema shared by all tables:
//! `scenario,E_tau,J_mean,J_stderr,diff_vs_fd6` (diff empty when not
//! applicable).

use std::io::{self, Write};

use crate::payoff::EvaluationReport;

#[derive(Debug, Clone)]
pub struct ReportRow {
    pub scenario: String,
    pub e_tau: f64,
    pub j_mean: f64,
    pub j_stderr: f64,
    /// Gap to the joint finite-difference optimum, where the table
    /// defines one.
    pub diff_vs_fd6: Option<f64>,
}

impl ReportRow {
    pub fn new(scenario: impl Into<String>, report: &EvaluationReport, h0_scale: f64) -> Self {
        Self {
            scenario: scenario.into(),
            e_tau: report.mean_stop_time,
            j_mean: h0_scale * report.mean,
            j_stderr: h0_scale * report.stderr,
            diff_vs_fd6: None,
        }
    }

    pub fn with_diff(mut self, reference: f64) -> Self {
        self.diff_vs_fd6 = Some((self.j_mean - reference).abs());
        self
    }
}

pub fn write_csv<W: Write>(rows: &[ReportRow], mut out: W) -> io::Result<()> {
    writeln!(out, "scenario,E_tau,J_mean,J_stderr,diff_vs_fd6")?;
    for row in rows {
        let diff = row.diff_vs_fd6.map(|d| d.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{}",
            row.scenario, row.e_tau, row.j_mean, row.j_stderr, diff
        )?;
    }
    Ok(())
}

/// Plain-text table for the terminal.
pub fn render_table(rows: &[ReportRow]) -> String {
    let mut s = String::from(format!(
        "{:<18} {:>8} {:>10} {:>10} {:>12}\n",
        "scenario", "E[tau]", "J_mean", "J_stderr", "diff_vs_fd6"
    ));
    for row in rows {
        let diff = row
            .diff_vs_fd6
            .map(|d| format!("{d:.4}"))
            .unwrap_or_else(|| "-".into());
        s.push_str(&format!(
            "{:<18} {:>8.4} {:>10.4} {:>10.5} {:>12}\n",
            row.scenario, row.e_tau, row.j_mean, row.j_stderr, diff
        ));
    }
    s
}
