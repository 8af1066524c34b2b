//! Archive storage economics: data growth with derived products, yearly
//! purchase outlay under falling prices, and provisioning rules.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Level-0 arrival rate, TB/year.
    #[serde(alias = "R")]
    pub r: f64,
    /// Size of one derived product relative to the level-0 data it covers.
    #[serde(default = "defaults::rho")]
    pub rho: f64,
    /// Number of derived products.
    #[serde(alias = "P", default = "defaults::products")]
    pub products: u32,
    /// Fractional price drop per year.
    #[serde(default = "defaults::price_decline")]
    pub price_decline: f64,
    /// Price per TB in year one.
    #[serde(default = "defaults::p0")]
    pub p0: f64,
    #[serde(default = "defaults::depreciation_years")]
    pub depreciation_years: u32,
    /// Years projected.
    pub horizon: u32,
    /// Replacement purchases themselves wear out and are bought again.
    #[serde(default = "defaults::recursive")]
    pub recursive_replacement: bool,
}

mod defaults {
    pub fn rho() -> f64 {
        0.1
    }
    pub fn products() -> u32 {
        10
    }
    pub fn price_decline() -> f64 {
        0.6
    }
    pub fn p0() -> f64 {
        1.0
    }
    pub fn depreciation_years() -> u32 {
        3
    }
    pub fn recursive() -> bool {
        true
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            r: 1.0,
            rho: defaults::rho(),
            products: defaults::products(),
            price_decline: defaults::price_decline(),
            p0: defaults::p0(),
            depreciation_years: defaults::depreciation_years(),
            horizon: 10,
            recursive_replacement: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CapacityError {
    #[error("invalid parameter {name}: {reason}")]
    Invalid { name: &'static str, reason: String },
    #[error("year {t} is outside 0..={horizon}")]
    OutOfRange { t: f64, horizon: u32 },
    #[error("requirement must be non-negative, got {0}")]
    NegativeRequirement(f64),
    #[error("params: {0}")]
    Parse(String),
}

impl ModelParams {
    pub fn from_toml(text: &str) -> Result<ModelParams, CapacityError> {
        let p: ModelParams = toml::from_str(text).map_err(|e| CapacityError::Parse(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CapacityError> {
        let bad = |name, reason: &str| Err(CapacityError::Invalid { name, reason: reason.into() });
        if !(self.r.is_finite() && self.r >= 0.0) {
            return bad("r", "must be finite and non-negative");
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad("rho", "must be in (0, 1]");
        }
        if !(self.price_decline >= 0.0 && self.price_decline < 1.0) {
            return bad("price_decline", "must be in [0, 1)");
        }
        if !(self.p0.is_finite() && self.p0 >= 0.0) {
            return bad("p0", "must be finite and non-negative");
        }
        if self.depreciation_years < 1 {
            return bad("depreciation_years", "must be at least 1");
        }
        if self.horizon < 1 {
            return bad("horizon", "must be at least 1");
        }
        Ok(())
    }

    fn check_t(&self, t: f64) -> Result<(), CapacityError> {
        if t.is_nan() || t < 0.0 || t > self.horizon as f64 {
            return Err(CapacityError::OutOfRange { t, horizon: self.horizon });
        }
        Ok(())
    }
}

/// Cumulative level-0 volume after `t` years.
pub fn level0_volume(p: &ModelParams, t: f64) -> Result<f64, CapacityError> {
    p.check_t(t)?;
    Ok(p.r * t)
}

/// Cumulative volume of one derived product after `t` years: each year's
/// edition reprocesses all level-0 data so far, and every edition stays
/// published.
pub fn level1_volume(p: &ModelParams, t: f64) -> Result<f64, CapacityError> {
    p.check_t(t)?;
    Ok(p.rho * p.r * (t * (t + 1.0) / 2.0))
}

/// Total storage needed after `t` years.
pub fn demand(p: &ModelParams, t: f64) -> Result<f64, CapacityError> {
    Ok(level0_volume(p, t)? + p.products as f64 * level1_volume(p, t)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub year: f64,
    pub level0_cum: f64,
    /// One derived product; demand counts it `products` times.
    pub level1_cum: f64,
    pub capacity_bought: f64,
    pub unit_price: f64,
    pub outlay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub rows: Vec<ProjectionRow>,
}

pub const CSV_HEADER: [&str; 6] = ["year", "level0_cum", "level1_cum", "capacity_bought", "unit_price", "outlay"];

impl Projection {
    /// Year of the largest outlay; the earliest on ties.
    pub fn peak_year(&self) -> Option<f64> {
        let mut best: Option<&ProjectionRow> = None;
        for r in &self.rows {
            if best.is_none_or(|b| r.outlay > b.outlay) {
                best = Some(r);
            }
        }
        best.map(|r| r.year)
    }

    pub fn total_bought(&self) -> f64 {
        self.rows.iter().map(|r| r.capacity_bought).sum()
    }

    pub fn total_outlay(&self) -> f64 {
        self.rows.iter().map(|r| r.outlay).sum()
    }

    pub fn write_csv(&self, out: impl std::io::Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            let cells = [r.year, r.level0_cum, r.level1_cum, r.capacity_bought, r.unit_price, r.outlay];
            w.write_record(cells.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Purchases and outlay per year over the horizon.
pub fn yearly_outlay(p: &ModelParams) -> Result<Projection, CapacityError> {
    stepped_outlay(p, 1.0)
}

/// As [`yearly_outlay`] with time advancing in steps of `step` years (for
/// example 1/12 for monthly). Rows are per step; depreciation is rounded
/// to whole steps.
pub fn stepped_outlay(p: &ModelParams, step: f64) -> Result<Projection, CapacityError> {
    p.validate()?;
    if !(step > 0.0 && step <= p.horizon as f64) {
        return Err(CapacityError::Invalid { name: "step", reason: format!("must be in (0, {}]", p.horizon) });
    }
    let steps = (p.horizon as f64 / step + 1e-9).floor() as usize;
    let dep = ((p.depreciation_years as f64 / step).round() as usize).max(1);
    let mut growth: Vec<f64> = Vec::with_capacity(steps);
    let mut bought: Vec<f64> = Vec::with_capacity(steps);
    let mut rows = Vec::with_capacity(steps);
    let mut prev = 0.0;
    for k in 1..=steps {
        let t = if k == steps && (p.horizon as f64 - k as f64 * step).abs() < 1e-9 { p.horizon as f64 } else { k as f64 * step };
        let d = demand(p, t)?;
        let new = (d - prev).max(0.0);
        prev = d;
        let replacement = if k > dep {
            if p.recursive_replacement {
                bought[k - 1 - dep]
            } else {
                growth[k - 1 - dep]
            }
        } else {
            0.0
        };
        let total = new + replacement;
        let price = p.p0 * (1.0 - p.price_decline).powf(t - step);
        growth.push(new);
        bought.push(total);
        rows.push(ProjectionRow {
            year: t,
            level0_cum: level0_volume(p, t)?,
            level1_cum: level1_volume(p, t)?,
            capacity_bought: total,
            unit_price: price,
            outlay: total * price,
        });
    }
    Ok(Projection { rows })
}

/// First whole year in which the derived products outweigh level-0 data.
pub fn inflation_crossover(p: &ModelParams) -> Option<u32> {
    (1..=p.horizon).find(|&t| inflation_ratio(p, t as f64).is_some_and(|x| x > 1.0))
}

/// Derived-product volume over level-0 volume at year `t`.
pub fn inflation_ratio(p: &ModelParams, t: f64) -> Option<f64> {
    let l0 = level0_volume(p, t).ok()?;
    let l1 = level1_volume(p, t).ok()?;
    (l0 > 0.0).then(|| p.products as f64 * l1 / l0)
}

/// Copies kept for safety.
pub const SAFETY_COPIES: u32 = 2;
/// Versions held at once: the old one, an intermediate, and the target.
pub const CONCURRENT_VERSIONS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provision {
    pub requirement: f64,
    pub provisioned: f64,
    pub copies: u32,
    pub versions: u32,
}

/// Storage to buy for a given requirement.
pub fn provision(requirement: f64) -> Result<Provision, CapacityError> {
    if requirement.is_nan() || requirement < 0.0 {
        return Err(CapacityError::NegativeRequirement(requirement));
    }
    Ok(Provision {
        requirement,
        provisioned: requirement * (SAFETY_COPIES * CONCURRENT_VERSIONS) as f64,
        copies: SAFETY_COPIES,
        versions: CONCURRENT_VERSIONS,
    })
}

/// Pairwise comparisons available among `n` federated datasets.
pub fn federation_utility(n: u64) -> u128 {
    let n = n as u128;
    n * n.saturating_sub(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_year_buys_demand_at_p0() {
        let p = ModelParams { p0: 250.0, ..Default::default() };
        let proj = yearly_outlay(&p).unwrap();
        let d1 = demand(&p, 1.0).unwrap();
        assert_eq!(proj.rows[0].capacity_bought, d1);
        assert_eq!(proj.rows[0].outlay, d1 * 250.0);
    }

    #[test]
    fn params_from_toml() {
        let p = ModelParams::from_toml("R = 2.0\nP = 4\nhorizon = 7\n").unwrap();
        assert_eq!((p.r, p.products, p.horizon, p.rho), (2.0, 4, 7, 0.1));
        assert!(ModelParams::from_toml("r = 1\nhorizon = 3\nrho = 0\n").is_err());
        assert!(ModelParams::from_toml("r = 1\nhorizon = 3\ncolour = 1\n").is_err());
    }
}
