//! Result tables. Every file is UTF-8, comma-separated, with a header row.
//! Missing values are empty fields; reals use the shortest round-trip form.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::hdvar::VarianceReport;
use crate::io::population::fmt_f64;
use crate::oracle::OracleReport;
use crate::sim::{ReplicationResult, Summary};

pub const REPLICATES_HEADER: [&str; 11] = [
    "replicate",
    "seed",
    "n",
    "a_hat",
    "v_asy",
    "v_hd",
    "v_ij",
    "t_asy_s",
    "t_hd_s",
    "t_ij_s",
    "skipped_reason",
];
pub const SUMMARY_HEADER: [&str; 4] = ["method", "metric", "alpha", "value"];
pub const ESTIMATE_HEADER: [&str; 2] = ["estimator", "value"];
pub const VARIANCE_HEADER: [&str; 2] = ["component", "value"];
pub const ORACLE_HEADER: [&str; 2] = ["quantity", "value"];
pub const ORACLE_UNITS_HEADER: [&str; 4] = ["unit", "theta_bar", "phi_bar_observed", "phi_bar_unobserved"];

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn write_replicates<W: Write>(writer: W, result: &ReplicationResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REPLICATES_HEADER)?;
    for r in &result.records {
        w.write_record([
            r.replicate.to_string(),
            r.seed.to_string(),
            r.n.to_string(),
            opt(r.a_hat),
            opt(r.v_asy),
            opt(r.v_hd),
            opt(r.v_ij),
            opt(r.t_asy_s),
            opt(r.t_hd_s),
            opt(r.t_ij_s),
            r.skipped_reason.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(writer: W, summary: &Summary) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_HEADER)?;
    for row in summary.rows() {
        w.write_record([row.method, row.metric, opt(row.alpha), fmt_f64(row.value)])?;
    }
    w.flush()?;
    Ok(())
}

/// Two-column `(name, value)` table.
pub fn write_pairs<W: Write>(writer: W, header: [&str; 2], rows: &[(&str, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for (k, v) in rows {
        w.write_record([k.to_string(), fmt_f64(*v)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn variance_rows(rep: &VarianceReport, timing: bool) -> Vec<(&'static str, f64)> {
    let mut rows = vec![
        ("point_estimate", rep.point_estimate),
        ("tau1_hat", rep.tau1_hat),
        ("tau1_bias_hat", rep.tau1_bias_hat),
        ("tau1_bcf", rep.tau1_bcf),
        ("tau1_floored", rep.tau1_floored as u8 as f64),
        ("tau2a_hat", rep.tau2a_hat),
        ("tau2a_bias_hat", rep.tau2a_bias_hat),
    ];
    if let Some(b) = rep.tau2b_hat {
        rows.push(("tau2b_hat", b));
    }
    rows.extend([
        ("tau2_hat", rep.tau2_hat),
        ("tau2_bcf", rep.tau2_bcf),
        ("tau2_floored", rep.tau2_floored as u8 as f64),
        ("hd_variance", rep.hd_variance),
    ]);
    if timing {
        let t = &rep.timings;
        rows.extend([
            ("t_setup_s", t.setup),
            ("t_tau1_s", t.tau1),
            ("t_tau2a_s", t.tau2a),
            ("t_tau2a_bias_s", t.tau2a_bias),
            ("t_tau2b_s", t.tau2b),
        ]);
    }
    rows
}

pub fn oracle_rows(r: &OracleReport) -> Vec<(&'static str, f64)> {
    vec![
        ("n", r.n as f64),
        ("exact_mean", r.exact_mean),
        ("exact_variance", r.exact_variance),
        ("theta", r.theta),
        ("tau1", r.tau1),
        ("tau2", r.tau2),
        ("omega12", r.omega12),
        ("tau1_closed_form", r.tau1_closed_form),
        ("identity_residual", r.identity_residual),
        ("reconstruction_residual", r.reconstruction_residual),
        ("max_abs_mean_h1", r.max_abs_mean_h1),
        ("max_abs_mean_h2", r.max_abs_mean_h2),
        ("total_probability", r.total_probability),
    ]
}

pub fn write_oracle_units<W: Write>(writer: W, r: &OracleReport, ids: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ORACLE_UNITS_HEADER)?;
    for i in 0..r.n {
        w.write_record([
            ids[i].clone(),
            fmt_f64(r.theta_bar_table[i]),
            fmt_f64(r.phi_bar_observed[i]),
            fmt_f64(r.phi_bar_unobserved[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_replicates_file(path: &Path, result: &ReplicationResult) -> Result<()> {
    write_replicates(File::create(path)?, result)
}

pub fn write_summary_file(path: &Path, summary: &Summary) -> Result<()> {
    write_summary(File::create(path)?, summary)
}

pub fn write_pairs_file(path: &Path, header: [&str; 2], rows: &[(&str, f64)]) -> Result<()> {
    write_pairs(File::create(path)?, header, rows)
}
