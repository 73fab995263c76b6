//! Multiplicity adjustment of pairwise p-values and the resulting pooling region.

use serde::{Deserialize, Serialize};

use crate::bootstrap::PairTestRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum AdjustMethod {
    /// Ignore multiplicity.
    Im,
    Holm,
    /// Benjamini–Hochberg.
    Bh,
}

impl AdjustMethod {
    pub const ALL: [AdjustMethod; 3] = [AdjustMethod::Im, AdjustMethod::Holm, AdjustMethod::Bh];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustedPValues {
    pub method: AdjustMethod,
    pub raw: Vec<f64>,
    /// Aligned with `raw`.
    pub adjusted: Vec<f64>,
}

impl AdjustedPValues {
    /// Rejection flags `adjusted <= alpha`, aligned with `raw`.
    pub fn rejections(&self, alpha: f64) -> Vec<bool> {
        self.adjusted.iter().map(|&p| p <= alpha).collect()
    }
}

fn check_raw(raw: &[f64]) -> Result<()> {
    if raw.is_empty() {
        return Err(Error::InvalidInput("no p-values to adjust".into()));
    }
    if let Some(p) = raw.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidInput(format!("p-value {p} outside [0, 1]")));
    }
    Ok(())
}

/// Indices ordering `raw` ascending; ties keep input order.
fn ascending_order(raw: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..raw.len()).collect();
    idx.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]));
    idx
}

pub fn adjust_im(raw: &[f64]) -> Result<AdjustedPValues> {
    check_raw(raw)?;
    Ok(AdjustedPValues {
        method: AdjustMethod::Im,
        raw: raw.to_vec(),
        adjusted: raw.to_vec(),
    })
}

/// Holm step-down adjustment: running maximum of `(m - j + 1) p_(j)`, capped at 1.
pub fn adjust_holm(raw: &[f64]) -> Result<AdjustedPValues> {
    check_raw(raw)?;
    let m = raw.len();
    let order = ascending_order(raw);
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (j, &i) in order.iter().enumerate() {
        running = running.max(((m - j) as f64 * raw[i]).min(1.0));
        adjusted[i] = running;
    }
    Ok(AdjustedPValues {
        method: AdjustMethod::Holm,
        raw: raw.to_vec(),
        adjusted,
    })
}

/// Benjamini–Hochberg step-up adjustment: backward running minimum of
/// `m p_(j) / j`, capped at 1.
pub fn adjust_bh(raw: &[f64]) -> Result<AdjustedPValues> {
    check_raw(raw)?;
    let m = raw.len();
    let order = ascending_order(raw);
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (j, &i) in order.iter().enumerate().rev() {
        running = running.min(m as f64 * raw[i] / (j + 1) as f64);
        adjusted[i] = running;
    }
    Ok(AdjustedPValues {
        method: AdjustMethod::Bh,
        raw: raw.to_vec(),
        adjusted,
    })
}

pub fn adjust(method: AdjustMethod, raw: &[f64]) -> Result<AdjustedPValues> {
    match method {
        AdjustMethod::Im => adjust_im(raw),
        AdjustMethod::Holm => adjust_holm(raw),
        AdjustMethod::Bh => adjust_bh(raw),
    }
}

/// One tested pair `{loi, partner}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartnerRow {
    pub partner: usize,
    pub observed_t: f64,
    pub p_raw: f64,
    pub p_holm: f64,
    pub p_bh: f64,
    /// Rejected under the report's method at the report's level.
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolingReport {
    pub loi: usize,
    pub method: AdjustMethod,
    pub alpha: f64,
    pub rows: Vec<PartnerRow>,
    /// The location of interest and every partner not rejected, sorted.
    pub recommended: Vec<usize>,
}

/// Adjusts the pairwise records and derives the recommended pooling region.
pub fn recommend(
    loi: usize,
    records: &[PairTestRecord],
    method: AdjustMethod,
    alpha: f64,
) -> Result<PoolingReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut partners = Vec::with_capacity(records.len());
    for r in records {
        let locs = r.set.locations();
        let partner = match locs {
            [a, b] if *a == loi => *b,
            [a, b] if *b == loi => *a,
            _ => {
                return Err(Error::InvalidInput(format!(
                    "record for set {locs:?} is not a pair containing location {loi}"
                )))
            }
        };
        if partners.contains(&partner) {
            return Err(Error::InvalidInput(format!("partner {partner} tested twice")));
        }
        partners.push(partner);
    }
    let mut recommended = vec![loi];
    if records.is_empty() {
        return Ok(PoolingReport {
            loi,
            method,
            alpha,
            rows: Vec::new(),
            recommended,
        });
    }
    let raw: Vec<f64> = records.iter().map(|r| r.p_raw).collect();
    let holm = adjust_holm(&raw)?;
    let bh = adjust_bh(&raw)?;
    let chosen = match method {
        AdjustMethod::Im => &raw,
        AdjustMethod::Holm => &holm.adjusted,
        AdjustMethod::Bh => &bh.adjusted,
    };
    let rows: Vec<PartnerRow> = records
        .iter()
        .enumerate()
        .map(|(i, r)| PartnerRow {
            partner: partners[i],
            observed_t: r.observed_t,
            p_raw: raw[i],
            p_holm: holm.adjusted[i],
            p_bh: bh.adjusted[i],
            rejected: chosen[i] <= alpha,
        })
        .collect();
    recommended.extend(rows.iter().filter(|r| !r.rejected).map(|r| r.partner));
    recommended.sort_unstable();
    Ok(PoolingReport {
        loi,
        method,
        alpha,
        rows,
        recommended,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dependence::{BivEvSpec, DependenceFit, DependenceSpec};
    use crate::wald::{HypothesisSet, StatisticKind};
    use proptest::prelude::*;

    /// Direct step-down rule: reject sorted hypotheses while `p_(j) <= alpha / (m - j + 1)`.
    fn stepdown(raw: &[f64], alpha: f64) -> Vec<bool> {
        let m = raw.len();
        let order = ascending_order(raw);
        let mut rej = vec![false; m];
        for (j, &i) in order.iter().enumerate() {
            if raw[i] <= alpha / (m - j) as f64 {
                rej[i] = true;
            } else {
                break;
            }
        }
        rej
    }

    /// Direct step-up rule: reject the `k` smallest, `k` the largest rank with `p_(k) <= k alpha / m`.
    fn stepup(raw: &[f64], alpha: f64) -> Vec<bool> {
        let m = raw.len();
        let order = ascending_order(raw);
        let k = (0..m)
            .rev()
            .find(|&j| raw[order[j]] <= (j + 1) as f64 * alpha / m as f64)
            .map_or(0, |j| j + 1);
        let mut rej = vec![false; m];
        for &i in &order[..k] {
            rej[i] = true;
        }
        rej
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn hand_fixtures() {
        let h = adjust_holm(&[0.01, 0.04, 0.03]).unwrap();
        assert!(close(&h.adjusted, &[0.03, 0.06, 0.06]));
        assert!(h.rejections(0.1).iter().all(|&r| r));
        let b = adjust_bh(&[0.01, 0.03, 0.04]).unwrap();
        assert!(close(&b.adjusted, &[0.03, 0.04, 0.04]));
        let single = adjust_holm(&[0.3]).unwrap();
        assert_eq!(single.adjusted, vec![0.3]);
        let eq = adjust_bh(&[0.2; 5]).unwrap();
        assert!(close(&eq.adjusted, &[0.2; 5]));
        let im = adjust_im(&[0.05, 0.2]).unwrap();
        assert_eq!(im.rejections(0.1), vec![true, false]);
        assert!(adjust_bh(&[]).is_err());
        assert!(adjust_holm(&[1.2]).is_err());
    }

    /// Percent values of one bootstrap column of a reference 15-pair fixture,
    /// with raw p-values on the grid k / 2001.
    fn check_table(raw_pct: &[f64], bh_pct: &[f64], holm_pct: &[f64]) {
        let raw: Vec<f64> = raw_pct.iter().map(|p| (p / 100.0 * 2001.0).round() / 2001.0).collect();
        let bh = adjust_bh(&raw).unwrap();
        let holm = adjust_holm(&raw).unwrap();
        for i in 0..raw.len() {
            assert!((100.0 * bh.adjusted[i] - bh_pct[i]).abs() <= 0.0051, "bh row {i}");
            assert!((100.0 * holm.adjusted[i] - holm_pct[i]).abs() <= 0.0051, "holm row {i}");
        }
    }

    #[test]
    fn reproduces_reference_grid_fixture() {
        check_table(
            &[0.00, 1.60, 2.50, 3.40, 3.55, 5.30, 7.15, 8.05, 10.00, 10.39, 13.04, 20.34, 46.08, 52.17, 66.92],
            &[0.00, 10.64, 10.64, 10.64, 10.64, 13.24, 15.09, 15.09, 15.59, 15.59, 17.79, 25.42, 53.17, 55.90, 66.92],
            &[0.00, 22.39, 32.48, 40.78, 40.78, 52.97, 64.32, 64.37, 69.97, 69.97, 69.97, 81.36, 100.00, 100.00, 100.00],
        );
        check_table(
            &[0.05, 1.45, 2.50, 3.30, 3.05, 6.30, 9.85, 8.10, 10.44, 11.69, 11.99, 22.04, 45.73, 50.92, 65.77],
            &[0.75, 9.90, 9.90, 9.90, 9.90, 15.74, 16.36, 16.36, 16.36, 16.36, 16.36, 27.55, 52.76, 54.56, 65.77],
            &[0.75, 20.29, 32.48, 36.58, 36.58, 62.97, 78.76, 72.86, 78.76, 78.76, 78.76, 88.16, 100.00, 100.00, 100.00],
        );
    }

    fn record(loi: usize, d: usize, p: f64) -> PairTestRecord {
        PairTestRecord {
            set: HypothesisSet::new(vec![loi, d], StatisticKind::Ed).unwrap(),
            observed_t: 1.0,
            boot_ts: vec![1.0],
            p_raw: p,
            dependence: DependenceFit {
                spec: DependenceSpec::Bivariate(BivEvSpec::Logistic { r: 0.5 }),
                criterion: 0.0,
                loglik: 0.0,
                converged: true,
                at_boundary: false,
                warnings: vec![],
            },
            null_params: vec![],
            failed_replicates: 0,
            warnings: vec![],
        }
    }

    #[test]
    fn recommendation() {
        let recs: Vec<_> = [0, 1, 3].iter().map(|&d| record(2, d, 1.0)).collect();
        let rep = recommend(2, &recs, AdjustMethod::Bh, 0.1).unwrap();
        assert_eq!(rep.recommended, vec![0, 1, 2, 3]);
        let mut recs = recs;
        recs[1].p_raw = 0.0;
        for m in AdjustMethod::ALL {
            let rep = recommend(2, &recs, m, 0.05).unwrap();
            assert_eq!(rep.recommended, vec![0, 2, 3]);
        }
        let bad = vec![record(0, 1, 0.5)];
        assert!(recommend(2, &bad, AdjustMethod::Im, 0.1).is_err());
        assert!(recommend(2, &[], AdjustMethod::Im, 1.5).is_err());
        assert_eq!(recommend(2, &[], AdjustMethod::Im, 0.1).unwrap().recommended, vec![2]);
    }

    proptest! {
        #[test]
        fn decisions_match_threshold_rules(raw in prop::collection::vec(0.0f64..=1.0, 1..36), alpha in 0.001f64..0.5) {
            let h = adjust_holm(&raw).unwrap();
            let b = adjust_bh(&raw).unwrap();
            prop_assert_eq!(h.rejections(alpha), stepdown(&raw, alpha));
            prop_assert_eq!(b.rejections(alpha), stepup(&raw, alpha));
        }

        #[test]
        fn ordering_and_nesting(raw in prop::collection::vec(0.0f64..=1.0, 1..36), alpha in 0.001f64..0.5) {
            let h = adjust_holm(&raw).unwrap();
            let b = adjust_bh(&raw).unwrap();
            for i in 0..raw.len() {
                prop_assert!(h.adjusted[i] >= b.adjusted[i] - 1e-15);
                prop_assert!(b.adjusted[i] >= raw[i] - 1e-15);
                prop_assert!(h.adjusted[i] <= 1.0);
            }
            let (rh, rb) = (h.rejections(alpha), b.rejections(alpha));
            for i in 0..raw.len() {
                prop_assert!(!rh[i] || rb[i]);
                prop_assert!(!rb[i] || raw[i] <= alpha);
            }
        }

        #[test]
        fn permutation_invariant(raw in prop::collection::vec(0.0f64..=1.0, 2..20), rot in 0usize..19) {
            let k = rot % raw.len();
            let mut shifted = raw.clone();
            shifted.rotate_left(k);
            for m in [AdjustMethod::Holm, AdjustMethod::Bh] {
                let a = adjust(m, &raw).unwrap().adjusted;
                let mut b = adjust(m, &shifted).unwrap().adjusted;
                b.rotate_right(k);
                prop_assert_eq!(a, b);
            }
        }
    }
}
