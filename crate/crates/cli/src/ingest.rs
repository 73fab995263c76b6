//! Reading and writing panel and coordinate CSV files.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::Deserialize;

use crate::error::CliError;

/// Rectangular panel as read from disk, before coordinates and the location
/// of interest are attached.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    /// Ascending.
    pub years: Vec<i64>,
    /// In order of first appearance.
    pub location_ids: Vec<String>,
    /// One column per location, aligned with `years`.
    pub maxima: Vec<Vec<f64>>,
    pub covariate: Vec<f64>,
}

impl PanelData {
    pub fn location_index(&self, id: &str) -> Option<usize> {
        self.location_ids.iter().position(|l| l == id)
    }

    pub fn year_index(&self, year: i64) -> Option<usize> {
        self.years.iter().position(|&y| y == year)
    }
}

#[derive(Debug, Deserialize)]
struct PanelRow {
    year: Option<i64>,
    location_id: Option<String>,
    maximum: Option<f64>,
    covariate: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct CoordRow {
    location_id: Option<String>,
    x: Option<f64>,
    y: Option<f64>,
}

fn ingest_err(source: &str, line: u64, message: impl Into<String>) -> CliError {
    CliError::Ingest {
        file: source.to_string(),
        line,
        message: message.into(),
    }
}

fn require_columns(headers: &csv::StringRecord, cols: &[&str], source: &str) -> Result<(), CliError> {
    for col in cols {
        if !headers.iter().any(|h| h == *col) {
            return Err(ingest_err(source, 1, format!("missing column `{col}` in header")));
        }
    }
    Ok(())
}

/// Iterates over data records with their 1-based line numbers.
fn records<'a, R: Read + 'a>(
    rdr: &'a mut csv::Reader<R>,
    source: &str,
) -> impl Iterator<Item = Result<(u64, csv::StringRecord), CliError>> + 'a {
    let source = source.to_string();
    rdr.records().map(move |r| {
        r.map(|rec| (rec.position().map_or(0, |p| p.line()), rec))
            .map_err(|e| ingest_err(&source, e.position().map_or(0, |p| p.line()), e.to_string()))
    })
}

/// Parses a panel with header `year,location_id,maximum,covariate`.
///
/// Every (year, location) pair must appear exactly once and the covariate
/// must agree across locations within a year.
pub fn read_panel<R: Read>(reader: R, source: &str) -> Result<PanelData, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| ingest_err(source, 1, e.to_string()))?
        .clone();
    require_columns(&headers, &["year", "location_id", "maximum", "covariate"], source)?;

    let mut ids: Vec<String> = Vec::new();
    let mut id_index: HashMap<String, usize> = HashMap::new();
    let mut values: HashMap<(usize, i64), f64> = HashMap::new();
    let mut covariates: BTreeMap<i64, (f64, u64)> = BTreeMap::new();

    for item in records(&mut rdr, source) {
        let (line, rec) = item?;
        let row: PanelRow = rec
            .deserialize(Some(&headers))
            .map_err(|e| ingest_err(source, line, e.to_string()))?;
        let id = match row.location_id {
            Some(id) if !id.is_empty() => id,
            _ => return Err(ingest_err(source, line, "missing location_id")),
        };
        let year = row
            .year
            .ok_or_else(|| ingest_err(source, line, format!("missing year for location {id}")))?;
        let maximum = row
            .maximum
            .filter(|v| v.is_finite())
            .ok_or_else(|| ingest_err(source, line, format!("missing or non-finite maximum for location {id}, year {year}")))?;
        let cov = row
            .covariate
            .filter(|v| v.is_finite())
            .ok_or_else(|| ingest_err(source, line, format!("missing or non-finite covariate for location {id}, year {year}")))?;

        let loc = *id_index.entry(id.clone()).or_insert_with(|| {
            ids.push(id.clone());
            ids.len() - 1
        });
        if values.insert((loc, year), maximum).is_some() {
            return Err(ingest_err(source, line, format!("duplicate row for location {id}, year {year}")));
        }
        match covariates.get(&year) {
            Some(&(c, first_line)) if c != cov => {
                return Err(ingest_err(
                    source,
                    line,
                    format!("covariate {cov} for year {year} differs from {c} given on line {first_line}"),
                ))
            }
            Some(_) => {}
            None => {
                covariates.insert(year, (cov, line));
            }
        }
    }
    if ids.is_empty() {
        return Err(ingest_err(source, 1, "panel has no data rows"));
    }

    let years: Vec<i64> = covariates.keys().copied().collect();
    let covariate: Vec<f64> = covariates.values().map(|(c, _)| *c).collect();
    let mut maxima = Vec::with_capacity(ids.len());
    for (loc, id) in ids.iter().enumerate() {
        let mut col = Vec::with_capacity(years.len());
        for &y in &years {
            match values.get(&(loc, y)) {
                Some(&v) => col.push(v),
                None => {
                    return Err(ingest_err(
                        source,
                        0,
                        format!("location {id} has no row for year {y}"),
                    ))
                }
            }
        }
        maxima.push(col);
    }
    Ok(PanelData {
        years,
        location_ids: ids,
        maxima,
        covariate,
    })
}

/// Writes a panel in the format accepted by [`read_panel`], location-major.
pub fn write_panel<W: Write>(panel: &PanelData, writer: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["year", "location_id", "maximum", "covariate"])?;
    for (id, col) in panel.location_ids.iter().zip(&panel.maxima) {
        for ((y, m), c) in panel.years.iter().zip(col).zip(&panel.covariate) {
            w.write_record([y.to_string(), id.clone(), m.to_string(), c.to_string()])?;
        }
    }
    w.flush().map_err(|e| CliError::Csv(e.into()))
}

/// Parses coordinates with header `location_id,x,y` into a map by id.
pub fn read_coords<R: Read>(reader: R, source: &str) -> Result<HashMap<String, [f64; 2]>, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| ingest_err(source, 1, e.to_string()))?
        .clone();
    require_columns(&headers, &["location_id", "x", "y"], source)?;
    let mut out = HashMap::new();
    for item in records(&mut rdr, source) {
        let (line, rec) = item?;
        let row: CoordRow = rec
            .deserialize(Some(&headers))
            .map_err(|e| ingest_err(source, line, e.to_string()))?;
        let id = match row.location_id {
            Some(id) if !id.is_empty() => id,
            _ => return Err(ingest_err(source, line, "missing location_id")),
        };
        let (Some(x), Some(y)) = (row.x.filter(|v| v.is_finite()), row.y.filter(|v| v.is_finite())) else {
            return Err(ingest_err(source, line, format!("missing or non-finite coordinate for location {id}")));
        };
        if out.insert(id.clone(), [x, y]).is_some() {
            return Err(ingest_err(source, line, format!("duplicate coordinates for location {id}")));
        }
    }
    Ok(out)
}

/// Coordinates aligned with the panel's locations.
pub fn align_coords(
    panel: &PanelData,
    coords: &HashMap<String, [f64; 2]>,
    source: &str,
) -> Result<Vec<[f64; 2]>, CliError> {
    panel
        .location_ids
        .iter()
        .map(|id| {
            coords
                .get(id)
                .copied()
                .ok_or_else(|| ingest_err(source, 0, format!("no coordinates for location {id}")))
        })
        .collect()
}
