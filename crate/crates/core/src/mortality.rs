//! Gompertz-Makeham force of mortality, survival curve, and least-squares
//! fitting against period life tables.

use crate::error::{check_time, Error, Result};
use crate::optimize::{levenberg_marquardt, nelder_mead_restarted, SimplexOptions};

/// Default truncation horizon: age 115 from base age 65.
pub const DEFAULT_LIMITING_AGE_YEARS: f64 = 50.0;

/// Hazard `a1·exp(a2·t) + a3`, with `t` measured in years after the base age.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GompertzMakehamParams {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub limiting_age_years: f64,
}

impl GompertzMakehamParams {
    pub fn new(a1: f64, a2: f64, a3: f64) -> Result<Self> {
        Self::with_limiting_age(a1, a2, a3, DEFAULT_LIMITING_AGE_YEARS)
    }

    pub fn with_limiting_age(a1: f64, a2: f64, a3: f64, limiting_age_years: f64) -> Result<Self> {
        for (name, v) in [("a1", a1), ("a2", a2), ("a3", a3)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(limiting_age_years.is_finite() && limiting_age_years > 0.0) {
            return Err(Error::param(
                "limiting_age_years",
                format!("must be > 0, got {limiting_age_years}"),
            ));
        }
        Ok(Self {
            a1,
            a2,
            a3,
            limiting_age_years,
        })
    }

    /// UK 2019 period table (both sexes, ages 65-110) fitted from age 65.
    pub fn uk_2019() -> Self {
        Self {
            a1: 0.00584,
            a2: 0.12150,
            a3: 0.0024117,
            limiting_age_years: DEFAULT_LIMITING_AGE_YEARS,
        }
    }

    pub fn force_of_mortality(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.hazard(t))
    }

    pub fn survival(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok((-self.cumulative_hazard(t)).exp())
    }

    /// Unchecked hazard for inner loops.
    #[inline]
    pub fn hazard(&self, t: f64) -> f64 {
        self.a1 * (self.a2 * t).exp() + self.a3
    }

    /// `∫_0^t λ_u du`, using `expm1` so small `a2` stays accurate.
    #[inline]
    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        let gompertz = if self.a2 > 0.0 {
            self.a1 * (self.a2 * t).exp_m1() / self.a2
        } else {
            self.a1 * t
        };
        gompertz + self.a3 * t
    }

    pub fn with_limit(self, limiting_age_years: f64) -> Result<Self> {
        Self::with_limiting_age(self.a1, self.a2, self.a3, limiting_age_years)
    }
}

/// Survival probabilities relative to `base_age`, one row per integer age.
#[derive(Debug, Clone, PartialEq)]
pub struct LifeTable {
    base_age: u32,
    rows: Vec<(u32, f64)>,
}

impl LifeTable {
    pub fn new(base_age: u32, rows: Vec<(u32, f64)>) -> Result<Self> {
        let Some(&(first_age, first_s)) = rows.first() else {
            return Err(Error::LifeTable("table is empty".into()));
        };
        if first_age != base_age {
            return Err(Error::LifeTable(format!(
                "first row is age {first_age}, expected base age {base_age}"
            )));
        }
        if (first_s - 1.0).abs() > 1e-12 {
            return Err(Error::LifeTable(format!(
                "survival at base age must be 1, got {first_s}"
            )));
        }
        for w in rows.windows(2) {
            let ((a0, s0), (a1, s1)) = (w[0], w[1]);
            if a1 <= a0 {
                return Err(Error::LifeTable(format!(
                    "ages must be strictly increasing: {a0} then {a1}"
                )));
            }
            if s1 > s0 {
                return Err(Error::LifeTable(format!(
                    "survival increases from {s0} at age {a0} to {s1} at age {a1}"
                )));
            }
        }
        if let Some(&(age, s)) = rows.iter().find(|(_, s)| !(0.0..=1.0).contains(s)) {
            return Err(Error::LifeTable(format!(
                "survival {s} at age {age} outside [0, 1]"
            )));
        }
        Ok(Self { base_age, rows })
    }

    /// Builds survival from one-year death probabilities:
    /// `S(x) = Π_{base ≤ y < x} (1 − q_y)`. The final row's `q` is not used.
    pub fn from_death_probabilities(base_age: u32, qx: &[(u32, f64)]) -> Result<Self> {
        let mut rows = Vec::with_capacity(qx.len());
        let mut s = 1.0;
        for (i, &(age, q)) in qx.iter().enumerate() {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::LifeTable(format!("q_x {q} at age {age} outside [0, 1]")));
            }
            if i > 0 {
                let (prev_age, prev_q) = qx[i - 1];
                if age != prev_age + 1 {
                    return Err(Error::LifeTable(format!(
                        "q_x rows must be consecutive ages: {prev_age} then {age}"
                    )));
                }
                s *= 1.0 - prev_q;
            }
            rows.push((age, s));
        }
        Self::new(base_age, rows)
    }

    /// Parses a CSV with header `age,survival` or `age,qx`. The first row
    /// sets the base age.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines
            .next()
            .ok_or_else(|| Error::LifeTable("empty file".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let is_qx = match cols.as_slice() {
            ["age", "survival"] => false,
            ["age", "qx"] => true,
            _ => {
                return Err(Error::Parse {
                    line: hline,
                    message: format!("expected header `age,survival` or `age,qx`, got `{header}`"),
                })
            }
        };
        let mut rows = Vec::new();
        for (line, l) in lines {
            let fields: Vec<&str> = l.split(',').map(str::trim).collect();
            if fields.len() != 2 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 2 fields, got {}", fields.len()),
                });
            }
            let age: u32 = fields[0].parse().map_err(|_| Error::Parse {
                line,
                message: format!("age `{}` is not an integer", fields[0]),
            })?;
            let v: f64 = fields[1].parse().map_err(|_| Error::Parse {
                line,
                message: format!("value `{}` is not a number", fields[1]),
            })?;
            rows.push((age, v));
        }
        let base = rows
            .first()
            .map(|r| r.0)
            .ok_or_else(|| Error::LifeTable("no data rows".into()))?;
        if is_qx {
            Self::from_death_probabilities(base, &rows)
        } else {
            Self::new(base, rows)
        }
    }

    /// Tabulates `params` at integer ages `base_age..=last_age`.
    pub fn from_model(params: &GompertzMakehamParams, base_age: u32, last_age: u32) -> Self {
        let rows = (base_age..=last_age)
            .map(|age| (age, (-params.cumulative_hazard((age - base_age) as f64)).exp()))
            .collect();
        Self { base_age, rows }
    }

    pub fn base_age(&self) -> u32 {
        self.base_age
    }

    pub fn rows(&self) -> &[(u32, f64)] {
        &self.rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MortalityFit {
    pub params: GompertzMakehamParams,
    /// Sum of squared survival differences at the returned parameters.
    pub objective: f64,
}

impl MortalityFit {
    pub fn csv_header() -> &'static str {
        "a1,a2,a3,objective"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.params.a1, self.params.a2, self.params.a3, self.objective
        )
    }
}

/// Sum over table ages of `(S_data − S_model(age − base_age))²`.
pub fn squared_distance(table: &LifeTable, a1: f64, a2: f64, a3: f64) -> f64 {
    let p = GompertzMakehamParams {
        a1,
        a2,
        a3,
        limiting_age_years: DEFAULT_LIMITING_AGE_YEARS,
    };
    table
        .rows
        .iter()
        .map(|&(age, s)| {
            let t = (age - table.base_age) as f64;
            let d = s - (-p.cumulative_hazard(t)).exp();
            d * d
        })
        .sum()
}

/// Residuals `S_model − S_data` and their derivatives in `(a1, a2, a3)`.
fn residuals(table: &LifeTable, p: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (a1, a2, a3) = (p[0], p[1], p[2]);
    let mut r = Vec::with_capacity(table.rows.len());
    let mut jac = Vec::with_capacity(table.rows.len());
    for &(age, s) in &table.rows {
        let t = (age - table.base_age) as f64;
        // g = (e^{a2 t} − 1)/a2 and its derivative in a2, with the a2 → 0 limits.
        let (g, dg) = if a2 * t < 1e-8 {
            (t + 0.5 * a2 * t * t, 0.5 * t * t)
        } else {
            let g = (a2 * t).exp_m1() / a2;
            (g, (t * (a2 * t).exp() - g) / a2)
        };
        let model = (-(a1 * g + a3 * t)).exp();
        r.push(model - s);
        jac.push(vec![-model * g, -model * a1 * dg, -model * t]);
    }
    (r, jac)
}

// Search coordinates: (ln a1, ln a2, a3) with a3 clamped at zero.
fn decode(x: &[f64]) -> (f64, f64, f64) {
    (x[0].exp(), x[1].exp(), x[2].max(0.0))
}

/// Least-squares Gompertz-Makeham fit from 16 fixed starting points.
pub fn fit_gompertz_makeham(table: &LifeTable) -> Result<MortalityFit> {
    fit_gompertz_makeham_with_limit(table, DEFAULT_LIMITING_AGE_YEARS)
}

pub fn fit_gompertz_makeham_with_limit(
    table: &LifeTable,
    limiting_age_years: f64,
) -> Result<MortalityFit> {
    if table.rows.len() < 4 {
        return Err(Error::LifeTable(format!(
            "need at least 4 rows to fit 3 parameters, got {}",
            table.rows.len()
        )));
    }
    let objective = |x: &[f64]| {
        let (a1, a2, a3) = decode(x);
        let v = squared_distance(table, a1, a2, a3);
        if v.is_finite() {
            v
        } else {
            f64::MAX
        }
    };

    let opts = SimplexOptions {
        max_evals: 6_000,
        step: 0.5,
        ..SimplexOptions::default()
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for &a1 in &[1e-4, 1e-3, 1e-2, 1e-1] {
        for &a2 in &[0.03, 0.15] {
            for &a3 in &[1e-4, 1e-2] {
                let start = [f64::ln(a1), f64::ln(a2), a3];
                let m = nelder_mead_restarted(objective, &start, &opts, 12);
                if best.as_ref().is_none_or(|(_, v)| m.value < *v) {
                    best = Some((m.x, m.value));
                }
            }
        }
    }
    let (x, _) = best.expect("at least one start");
    // Polish the winner with a small simplex.
    let polish = SimplexOptions {
        max_evals: 20_000,
        step: 1e-3,
        ..SimplexOptions::default()
    };
    let m = nelder_mead_restarted(objective, &x, &polish, 20);
    let (a1, a2, a3) = decode(&m.x);
    let refined = levenberg_marquardt(|p| residuals(table, p), &[a1, a2, a3], &[0.0, 0.0, 0.0], 2_000);
    let (a1, a2, a3) = if refined.value < squared_distance(table, a1, a2, a3) {
        (refined.x[0], refined.x[1], refined.x[2])
    } else {
        (a1, a2, a3)
    };
    let params = GompertzMakehamParams::with_limiting_age(a1, a2, a3, limiting_age_years)?;
    Ok(MortalityFit {
        params,
        objective: squared_distance(table, a1, a2, a3),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_hazard_degenerate_case() {
        let p = GompertzMakehamParams::new(0.0, 1.0, 0.01).unwrap();
        assert_eq!(p.force_of_mortality(7.0).unwrap(), 0.01);
    }

    #[test]
    fn hazard_at_base_age_uses_fitted_constants() {
        let p = GompertzMakehamParams::uk_2019();
        assert!((p.force_of_mortality(0.0).unwrap() - 0.0082517).abs() < 1e-15);
    }

    #[test]
    fn survival_at_zero_is_one() {
        let p = GompertzMakehamParams::uk_2019();
        assert_eq!(p.survival(0.0).unwrap(), 1.0);
    }

    #[test]
    fn constant_hazard_survival() {
        let p = GompertzMakehamParams::new(0.0, 1.0, 0.02).unwrap();
        let s = p.survival(10.0).unwrap();
        assert!((s - (-0.2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn zero_growth_reduces_to_exponential() {
        let p = GompertzMakehamParams::new(0.01, 0.0, 0.02).unwrap();
        assert!((p.survival(5.0).unwrap() - (-0.15f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn negative_time_rejected() {
        let p = GompertzMakehamParams::uk_2019();
        assert_eq!(p.survival(-1.0), Err(Error::NegativeTime(-1.0)));
        assert!(p.force_of_mortality(-0.5).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(GompertzMakehamParams::new(-1e-3, 0.1, 0.0).is_err());
        assert!(GompertzMakehamParams::with_limiting_age(0.01, 0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn csv_survival_and_qx_agree() {
        let surv = "age,survival\n65,1\n66,0.99\n\n67,0.9702\n";
        let qx = "age,qx\n65,0.01\n66,0.02\n67,0.5\n";
        let a = LifeTable::parse_csv(surv).unwrap();
        let b = LifeTable::parse_csv(qx).unwrap();
        assert_eq!(a.base_age(), 65);
        for (x, y) in a.rows().iter().zip(b.rows()) {
            assert_eq!(x.0, y.0);
            assert!((x.1 - y.1).abs() < 1e-15);
        }
    }

    #[test]
    fn non_monotone_table_rejected() {
        let err = LifeTable::parse_csv("age,survival\n65,1\n66,0.9\n67,0.95\n").unwrap_err();
        assert!(matches!(err, Error::LifeTable(ref m) if m.contains("increases")), "{err}");
    }

    #[test]
    fn bad_header_and_ages_rejected() {
        assert!(matches!(
            LifeTable::parse_csv("x,y\n65,1\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(LifeTable::parse_csv("age,survival\n65,1\n65,0.9\n").is_err());
        assert!(LifeTable::parse_csv("age,survival\n65,1\n66,abc\n").is_err());
    }

    #[test]
    fn short_table_rejected() {
        let t = LifeTable::new(65, vec![(65, 1.0), (66, 0.99), (67, 0.97)]).unwrap();
        assert!(matches!(fit_gompertz_makeham(&t), Err(Error::LifeTable(_))));
    }

    #[test]
    fn synthetic_round_trip() {
        let truth = GompertzMakehamParams::new(0.006, 0.12, 0.002).unwrap();
        let table = LifeTable::from_model(&truth, 65, 110);
        let fit = fit_gompertz_makeham(&table).unwrap();
        assert!((fit.params.a1 - 0.006).abs() < 1e-4, "{:?}", fit);
        assert!((fit.params.a2 - 0.12).abs() < 1e-4, "{:?}", fit);
        assert!((fit.params.a3 - 0.002).abs() < 1e-4, "{:?}", fit);
    }

    #[test]
    fn flat_hazard_recovery() {
        let rows = (65..=110)
            .map(|age| (age, (-0.05 * (age - 65) as f64).exp()))
            .collect();
        let table = LifeTable::new(65, rows).unwrap();
        let fit = fit_gompertz_makeham(&table).unwrap();
        assert!(fit.objective <= 1e-12, "{:?}", fit);
        for t in 0..=45 {
            let h = fit.params.hazard(t as f64);
            assert!((h - 0.05).abs() < 1e-4, "t={t} h={h}");
        }
    }
}
