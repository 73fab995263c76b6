//! Block-maxima panels: n years by D locations plus the shared covariate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Temporal covariate `c(t)`, one value per year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSeries {
    values: Vec<f64>,
}

impl CovariateSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "covariate value at year index {i} is not finite"
            )));
        }
        Ok(Self { values })
    }

    /// A constant covariate, which reduces the scale-GEV model to a stationary GEV.
    pub fn constant(value: f64, n: usize) -> Self {
        Self {
            values: vec![value; n],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Complete panel of block maxima stored column-wise (one vector per location).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockMaximaPanel {
    maxima: Vec<Vec<f64>>,
    covariate: CovariateSeries,
    coords: Vec<[f64; 2]>,
    location_ids: Vec<String>,
    loi: usize,
}

impl BlockMaximaPanel {
    /// Builds a panel, validating completeness, coordinates and the LOI index.
    pub fn new(
        maxima: Vec<Vec<f64>>,
        covariate: CovariateSeries,
        coords: Vec<[f64; 2]>,
        location_ids: Vec<String>,
        loi: usize,
    ) -> Result<Self> {
        let d = maxima.len();
        if d == 0 {
            return Err(Error::InvalidInput("panel has no locations".into()));
        }
        if coords.len() != d || location_ids.len() != d {
            return Err(Error::InvalidInput(format!(
                "panel has {d} columns but {} coordinates and {} location ids",
                coords.len(),
                location_ids.len()
            )));
        }
        let n = covariate.len();
        for (col, id) in maxima.iter().zip(&location_ids) {
            if col.len() != n {
                return Err(Error::InvalidInput(format!(
                    "location {id} has {} maxima, expected {n}",
                    col.len()
                )));
            }
            if let Some(t) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "location {id} has a missing or non-finite maximum at year index {t}"
                )));
            }
        }
        if loi >= d {
            return Err(Error::InvalidInput(format!(
                "location of interest index {loi} out of range for {d} locations"
            )));
        }
        for i in 0..d {
            if !(coords[i][0].is_finite() && coords[i][1].is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "location {} has non-finite coordinates",
                    location_ids[i]
                )));
            }
            for j in 0..i {
                if coords[i] == coords[j] {
                    return Err(Error::InvalidInput(format!(
                        "locations {} and {} share coordinates {:?}",
                        location_ids[j], location_ids[i], coords[i]
                    )));
                }
            }
        }
        Ok(Self {
            maxima,
            covariate,
            coords,
            location_ids,
            loi,
        })
    }

    pub fn n_years(&self) -> usize {
        self.covariate.len()
    }

    pub fn n_locations(&self) -> usize {
        self.maxima.len()
    }

    pub fn column(&self, d: usize) -> &[f64] {
        &self.maxima[d]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.maxima
    }

    pub fn covariate(&self) -> &CovariateSeries {
        &self.covariate
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn location_ids(&self) -> &[String] {
        &self.location_ids
    }

    pub fn loi(&self) -> usize {
        self.loi
    }

    /// Same coordinates, covariate and labels with new maxima (e.g. a bootstrap sample).
    pub fn with_maxima(&self, maxima: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            maxima,
            self.covariate.clone(),
            self.coords.clone(),
            self.location_ids.clone(),
            self.loi,
        )
    }

    /// Restriction to the given columns; the LOI maps to its position in `locs`
    /// or to 0 when it is not included.
    pub fn subset(&self, locs: &[usize]) -> Result<Self> {
        validate_locations(locs, self.n_locations())?;
        let loi = locs.iter().position(|&d| d == self.loi).unwrap_or(0);
        Self::new(
            locs.iter().map(|&d| self.maxima[d].clone()).collect(),
            self.covariate.clone(),
            locs.iter().map(|&d| self.coords[d]).collect(),
            locs.iter().map(|&d| self.location_ids[d].clone()).collect(),
            loi,
        )
    }
}

/// Checks that a location set is nonempty with distinct in-range indices.
pub fn validate_locations(locs: &[usize], d: usize) -> Result<()> {
    if locs.is_empty() {
        return Err(Error::InvalidInput("location set is empty".into()));
    }
    for (i, &l) in locs.iter().enumerate() {
        if l >= d {
            return Err(Error::InvalidInput(format!(
                "location index {l} out of range for {d} locations"
            )));
        }
        if locs[..i].contains(&l) {
            return Err(Error::InvalidInput(format!(
                "location index {l} appears twice"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(d: usize) -> Vec<String> {
        (1..=d).map(|i| i.to_string()).collect()
    }

    #[test]
    fn rejects_duplicate_coordinates() {
        let cov = CovariateSeries::constant(0.0, 2);
        let err = BlockMaximaPanel::new(
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            cov,
            vec![[0.0, 0.0], [0.0, 0.0]],
            ids(2),
            0,
        );
        assert!(err.is_err());
    }

    #[test]
    fn rejects_missing_values_and_bad_loi() {
        let cov = CovariateSeries::constant(0.0, 2);
        assert!(BlockMaximaPanel::new(
            vec![vec![1.0, f64::NAN]],
            cov.clone(),
            vec![[0.0, 0.0]],
            ids(1),
            0
        )
        .is_err());
        assert!(BlockMaximaPanel::new(vec![vec![1.0]], cov.clone(), vec![[0.0, 0.0]], ids(1), 0)
            .is_err());
        assert!(
            BlockMaximaPanel::new(vec![vec![1.0, 2.0]], cov, vec![[0.0, 0.0]], ids(1), 1).is_err()
        );
    }

    #[test]
    fn subset_remaps_loi() {
        let cov = CovariateSeries::constant(0.0, 1);
        let p = BlockMaximaPanel::new(
            vec![vec![1.0], vec![2.0], vec![3.0]],
            cov,
            vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
            ids(3),
            2,
        )
        .unwrap();
        let s = p.subset(&[2, 0]).unwrap();
        assert_eq!(s.loi(), 0);
        assert_eq!(s.column(1), &[1.0]);
        assert!(p.subset(&[0, 0]).is_err());
    }
}
