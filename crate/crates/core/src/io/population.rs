//! Comma-separated population and sample files.
//!
//! Data rows are numbered from 1 (the header is row 0) in error messages.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Population, Sample};

/// Binds file columns to population fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub id: Option<String>,
    pub outcome: String,
    pub covariates: Vec<String>,
    /// Prepend a constant 1 covariate.
    pub intercept: bool,
    pub stratum: Option<String>,
    pub cluster: Option<String>,
    pub size_measure: Option<String>,
    /// Replace the outcome by its natural log.
    pub log_outcome: bool,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            id: None,
            outcome: "y".into(),
            covariates: Vec::new(),
            intercept: true,
            stratum: None,
            cluster: None,
            size_measure: None,
            log_outcome: false,
        }
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn parse_f64(rec: &csv::StringRecord, idx: usize, row: usize, name: &str) -> Result<f64> {
    let raw = rec.get(idx).unwrap_or("").trim();
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            row,
            column: name.to_string(),
            value: raw.to_string(),
        }),
    }
}

pub fn load_population(path: impl AsRef<Path>, mapping: &ColumnMapping) -> Result<Population> {
    read_population(File::open(path)?, mapping)
}

pub fn read_population<R: Read>(reader: R, mapping: &ColumnMapping) -> Result<Population> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let y_col = column(&headers, &mapping.outcome)?;
    let x_cols = mapping
        .covariates
        .iter()
        .map(|c| column(&headers, c).map(|i| (i, c.as_str())))
        .collect::<Result<Vec<_>>>()?;
    let opt = |c: &Option<String>| c.as_deref().map(|n| column(&headers, n)).transpose();
    let id_col = opt(&mapping.id)?;
    let s_col = opt(&mapping.stratum)?;
    let c_col = opt(&mapping.cluster)?;
    let z_col = opt(&mapping.size_measure)?;
    if x_cols.is_empty() && !mapping.intercept {
        return Err(Error::Config("no covariates: list columns or enable the intercept".into()));
    }

    let p = x_cols.len() + mapping.intercept as usize;
    let mut y = Vec::new();
    let mut x = Vec::new();
    let mut ids = Vec::new();
    let mut seen = BTreeSet::new();
    let mut strata = Vec::new();
    let mut clusters = Vec::new();
    let mut size = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = k + 1;
        let mut yi = parse_f64(&rec, y_col, row, &mapping.outcome)?;
        if mapping.log_outcome {
            if yi <= 0.0 {
                return Err(Error::Domain { row, value: yi });
            }
            yi = yi.ln();
        }
        y.push(yi);
        if mapping.intercept {
            x.push(1.0);
        }
        for &(i, name) in &x_cols {
            x.push(parse_f64(&rec, i, row, name)?);
        }
        let id = match id_col {
            Some(i) => rec.get(i).unwrap_or("").to_string(),
            None => row.to_string(),
        };
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId { row, id });
        }
        ids.push(id);
        if let Some(i) = s_col {
            strata.push(rec.get(i).unwrap_or("").to_string());
        }
        if let Some(i) = c_col {
            clusters.push(rec.get(i).unwrap_or("").to_string());
        }
        if let Some(i) = z_col {
            size.push(parse_f64(&rec, i, row, mapping.size_measure.as_deref().unwrap_or(""))?);
        }
    }
    let mut pop = Population::from_flat(y, x, p)?.with_ids(ids)?;
    if s_col.is_some() {
        pop = pop.with_strata(strata)?;
    }
    if c_col.is_some() {
        pop = pop.with_clusters(clusters)?;
    }
    if z_col.is_some() {
        pop = pop.with_size_measure(size)?;
    }
    Ok(pop)
}

/// Column names used by [`write_population`]: `id, y, x0.., [stratum],
/// [cluster], [size]`.
pub fn population_header(pop: &Population) -> Vec<String> {
    let mut h = vec!["id".to_string(), "y".to_string()];
    h.extend((0..pop.n_covariates()).map(|k| format!("x{k}")));
    if pop.strata().is_some() {
        h.push("stratum".into());
    }
    if pop.clusters().is_some() {
        h.push("cluster".into());
    }
    if pop.size_measure().is_some() {
        h.push("size".into());
    }
    h
}

/// Mapping that reads back a file produced by [`write_population`].
pub fn written_mapping(pop: &Population) -> ColumnMapping {
    ColumnMapping {
        id: Some("id".into()),
        outcome: "y".into(),
        covariates: (0..pop.n_covariates()).map(|k| format!("x{k}")).collect(),
        intercept: false,
        stratum: pop.strata().map(|_| "stratum".into()),
        cluster: pop.clusters().map(|_| "cluster".into()),
        size_measure: pop.size_measure().map(|_| "size".into()),
        log_outcome: false,
    }
}

pub fn write_population(path: impl AsRef<Path>, pop: &Population) -> Result<()> {
    let mut f = File::create(path)?;
    write_population_to(&mut f, pop)?;
    f.flush()?;
    Ok(())
}

pub fn write_population_to<W: Write>(writer: W, pop: &Population) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(population_header(pop))?;
    for i in 0..pop.len() {
        let mut rec = vec![pop.ids()[i].clone(), fmt_f64(pop.y()[i])];
        rec.extend(pop.x_row(i).iter().map(|&v| fmt_f64(v)));
        if let Some(s) = pop.strata() {
            rec.push(s[i].clone());
        }
        if let Some(c) = pop.clusters() {
            rec.push(c[i].clone());
        }
        if let Some(z) = pop.size_measure() {
            rec.push(fmt_f64(z[i]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Reads a sample file with an `id` column naming population units.
pub fn load_sample(path: impl AsRef<Path>, pop: &Population) -> Result<Sample> {
    read_sample(File::open(path)?, pop)
}

pub fn read_sample<R: Read>(reader: R, pop: &Population) -> Result<Sample> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let id_col = column(&headers, "id")?;
    let index: BTreeMap<&str, usize> = pop.id_index();
    let mut units = BTreeSet::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = k + 1;
        let id = rec.get(id_col).unwrap_or("");
        let &i = index.get(id).ok_or_else(|| Error::UnknownId { row, id: id.to_string() })?;
        if !units.insert(i) {
            return Err(Error::DuplicateId { row, id: id.to_string() });
        }
    }
    Sample::new(units.into_iter().collect(), pop.len())
}

pub fn write_sample<W: Write>(writer: W, pop: &Population, sample: &Sample) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id"])?;
    for &i in sample.indices() {
        w.write_record([pop.ids()[i].as_str()])?;
    }
    w.flush()?;
    Ok(())
}
