//! Bequest-weight schedules `b_t` and the scale calibration that forces a
//! zero initial tontine allocation.

use std::fmt;

use crate::controls::{MarketParams, OptimalControls};
use crate::error::{check_time, Error, Result};
use crate::mortality::GompertzMakehamParams;

/// Default bequest cutoff for the trimmed variants, in years.
pub const DEFAULT_HORIZON_YEARS: f64 = 20.0;

/// Tabulated bequest weights, interpolated linearly and zero outside the
/// tabulated range.
#[derive(Debug, Clone, PartialEq)]
pub struct BequestTable {
    points: Vec<(f64, f64)>,
}

impl BequestTable {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Schedule("bequest table is empty".into()));
        }
        for &(t, b) in &points {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::Schedule(format!("table time {t} must be >= 0")));
            }
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::Schedule(format!(
                    "table weight {b} at t={t} must be finite and >= 0"
                )));
            }
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Schedule("table times must be strictly increasing".into()));
        }
        Ok(Self { points })
    }

    /// Parses CSV with header `t,b`.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        match lines.next() {
            Some((_, h)) if h.replace(' ', "") == "t,b" => {}
            Some((line, h)) => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected header `t,b`, got `{h}`"),
                })
            }
            None => return Err(Error::Schedule("bequest table file is empty".into())),
        }
        let mut points = Vec::new();
        for (line, l) in lines {
            let mut it = l.split(',').map(str::trim);
            let (Some(t), Some(b), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::Parse {
                    line,
                    message: "expected 2 fields".into(),
                });
            };
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("`{s}` is not a number"),
                })
            };
            points.push((parse(t)?, parse(b)?));
        }
        Self::new(points)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn value(&self, t: f64) -> f64 {
        let pts = &self.points;
        let (first, last) = (pts[0], pts[pts.len() - 1]);
        if t < first.0 || t > last.0 {
            return 0.0;
        }
        if pts.len() == 1 {
            return first.1;
        }
        let i = pts.partition_point(|p| p.0 <= t).clamp(1, pts.len() - 1);
        let (t0, b0) = pts[i - 1];
        let (t1, b1) = pts[i];
        b0 + (b1 - b0) * (t - t0) / (t1 - t0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BequestVariant {
    /// `b ≡ 0`.
    None,
    /// `b_t = λ_t^γ`.
    Power,
    /// `b_t = κ·λ_t^γ`; `kappa: None` until calibrated.
    ScaledPower { kappa: Option<f64> },
    /// `b_t = (1/(1/λ_t − 1/λ_H))^γ` on `[0, H)`, zero afterwards.
    Trimmed { horizon_years: f64 },
    /// `κ` times the trimmed weight.
    ScaledTrimmed {
        kappa: Option<f64>,
        horizon_years: f64,
    },
    Table(BequestTable),
}

impl BequestVariant {
    pub fn name(&self) -> &'static str {
        match self {
            BequestVariant::None => "none",
            BequestVariant::Power => "power",
            BequestVariant::ScaledPower { .. } => "scaled_power",
            BequestVariant::Trimmed { .. } => "trimmed",
            BequestVariant::ScaledTrimmed { .. } => "scaled_trimmed",
            BequestVariant::Table(_) => "table",
        }
    }

    pub fn is_scaled(&self) -> bool {
        matches!(
            self,
            BequestVariant::ScaledPower { .. } | BequestVariant::ScaledTrimmed { .. }
        )
    }

    pub fn is_trimmed(&self) -> bool {
        matches!(
            self,
            BequestVariant::Trimmed { .. } | BequestVariant::ScaledTrimmed { .. }
        )
    }

    pub fn horizon(&self) -> Option<f64> {
        match *self {
            BequestVariant::Trimmed { horizon_years }
            | BequestVariant::ScaledTrimmed { horizon_years, .. } => Some(horizon_years),
            _ => None,
        }
    }

    /// Scale factor: 1 for unscaled variants, `None` when a scaled variant is
    /// still uncalibrated.
    pub fn kappa(&self) -> Option<f64> {
        match *self {
            BequestVariant::ScaledPower { kappa } | BequestVariant::ScaledTrimmed { kappa, .. } => {
                kappa
            }
            _ => Some(1.0),
        }
    }

    /// Same variant with the scale replaced; unscaled variants are unchanged.
    pub fn with_kappa(&self, k: f64) -> Self {
        match *self {
            BequestVariant::ScaledPower { .. } => BequestVariant::ScaledPower { kappa: Some(k) },
            BequestVariant::ScaledTrimmed { horizon_years, .. } => BequestVariant::ScaledTrimmed {
                kappa: Some(k),
                horizon_years,
            },
            ref other => other.clone(),
        }
    }
}

impl fmt::Display for BequestVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceSchedule {
    gamma: f64,
    rho: f64,
    variant: BequestVariant,
}

impl PreferenceSchedule {
    pub fn new(gamma: f64, rho: f64, variant: BequestVariant) -> Result<Self> {
        if !(gamma.is_finite() && gamma < 1.0 && gamma != 0.0) {
            return Err(Error::param("gamma", format!("must lie in (-inf, 1) \\ {{0}}, got {gamma}")));
        }
        if !rho.is_finite() {
            return Err(Error::param("rho", format!("must be finite, got {rho}")));
        }
        match variant {
            BequestVariant::ScaledPower { kappa: Some(k) }
            | BequestVariant::ScaledTrimmed { kappa: Some(k), .. }
                if !(k.is_finite() && k > 0.0) =>
            {
                return Err(Error::param("kappa", format!("must be > 0, got {k}")));
            }
            _ => {}
        }
        if let Some(h) = variant.horizon() {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::param("horizon_years", format!("must be > 0, got {h}")));
            }
        }
        Ok(Self {
            gamma,
            rho,
            variant,
        })
    }

    /// Discount rate tied to the interest rate, `ρ = r·γ`, so utility is
    /// measured in purchasing power.
    pub fn rate_linked(gamma: f64, r: f64, variant: BequestVariant) -> Result<Self> {
        Self::new(gamma, r * gamma, variant)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn variant(&self) -> &BequestVariant {
        &self.variant
    }

    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        Self::new(self.gamma, self.rho, self.variant.with_kappa(kappa))
    }

    /// Checks the variant against a mortality model: the trimmed base needs
    /// `λ_t < λ_H` on `[0, H)`.
    pub fn check_mortality(&self, mortality: &GompertzMakehamParams) -> Result<()> {
        if let Some(h) = self.variant.horizon() {
            if !(mortality.a1 > 0.0 && mortality.a2 > 0.0) {
                return Err(Error::Schedule(format!(
                    "trimmed weight needs a strictly increasing hazard, but λ_t = λ_{h} for t < {h}"
                )));
            }
        }
        Ok(())
    }

    /// `b_t` for the configured variant.
    pub fn bequest_weight(&self, t: f64, mortality: &GompertzMakehamParams) -> Result<f64> {
        check_time(t)?;
        self.check_mortality(mortality)?;
        let kappa = self
            .variant
            .kappa()
            .ok_or_else(|| Error::Uncalibrated(format!("{} variant", self.variant)))?;
        Ok(match &self.variant {
            BequestVariant::None => 0.0,
            BequestVariant::Power | BequestVariant::ScaledPower { .. } => {
                kappa * mortality.hazard(t).powf(self.gamma)
            }
            BequestVariant::Trimmed { horizon_years }
            | BequestVariant::ScaledTrimmed { horizon_years, .. } => {
                if t >= *horizon_years {
                    0.0
                } else {
                    kappa * trimmed_gap(t, *horizon_years, mortality).powf(-self.gamma)
                }
            }
            BequestVariant::Table(table) => table.value(t),
        })
    }

    /// `b_t^{1/(1−γ)}` in a form that stays finite up to the trimming cutoff.
    /// Uncalibrated scaled variants are treated as `κ = 1`.
    #[inline]
    pub(crate) fn bequest_root(&self, t: f64, mortality: &GompertzMakehamParams) -> f64 {
        let g = self.gamma;
        let inv = 1.0 / (1.0 - g);
        let kappa_root = self.variant.kappa().unwrap_or(1.0).powf(inv);
        match &self.variant {
            BequestVariant::None => 0.0,
            BequestVariant::Power | BequestVariant::ScaledPower { .. } => {
                kappa_root * mortality.hazard(t).powf(g * inv)
            }
            BequestVariant::Trimmed { horizon_years }
            | BequestVariant::ScaledTrimmed { horizon_years, .. } => {
                if t >= *horizon_years {
                    0.0
                } else {
                    kappa_root * trimmed_gap(t, *horizon_years, mortality).powf(-g * inv)
                }
            }
            BequestVariant::Table(table) => table.value(t).powf(inv),
        }
    }

    /// Base weight `g_t^{γ/(1−γ)}` with `κ` factored out, for calibration.
    pub(crate) fn unit_scale(&self) -> Self {
        Self {
            variant: self.variant.with_kappa(1.0),
            ..self.clone()
        }
    }

    /// True when the bequest part of the denominator integral diverges at
    /// the trimming cutoff: near `H` the integrand behaves like
    /// `(H − t)^{−γ/(1−γ)}`, which is not integrable once `γ ≥ 1/2`.
    pub fn bequest_integral_diverges(&self) -> bool {
        self.variant.is_trimmed() && self.gamma >= 0.5
    }
}

/// `1/λ_t − 1/λ_H`, written to avoid cancellation near `H`.
#[inline]
fn trimmed_gap(t: f64, h: f64, mortality: &GompertzMakehamParams) -> f64 {
    let lt = mortality.hazard(t);
    let lh = mortality.hazard(h);
    let shrink = (-mortality.a2 * (h - t)).exp_m1();
    let diff = -mortality.a1 * (mortality.a2 * h).exp() * shrink;
    diff / (lt * lh)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaCalibration {
    pub kappa: Option<f64>,
    /// `|α*_0|` recomputed with the returned scale.
    pub residual: f64,
    pub feasible: bool,
    pub warnings: Vec<String>,
}

/// Chooses `κ` so that the initial tontine allocation is zero.
///
/// With `b_t = κ·g_t^γ` and `m = κ^{1/(1−γ)}`, the condition `α*_0 = 0`
/// becomes `m·g_0^{γ/(1−γ)} = A + m·B`, which is linear in `m`. A solution
/// with `κ > 0` exists exactly when `g_0^{γ/(1−γ)} > B`.
pub fn calibrate_kappa(
    schedule: &PreferenceSchedule,
    market: &MarketParams,
    mortality: &GompertzMakehamParams,
) -> Result<KappaCalibration> {
    if !schedule.variant.is_scaled() {
        return Err(Error::Schedule(format!(
            "calibration needs a scaled variant, got {}",
            schedule.variant
        )));
    }
    schedule.check_mortality(mortality)?;
    let mut warnings = Vec::new();
    let linked = market.r * schedule.gamma;
    if (schedule.rho - linked).abs() > 1e-12 {
        warnings.push(format!(
            "rho = {} differs from r*gamma = {linked}; zero initial allocation may not be attainable",
            schedule.rho
        ));
    }

    let unit = schedule.unit_scale();
    let problem = OptimalControls::new(market, mortality, &unit)?;
    let (a, b) = problem.calibration_integrals();
    let g0 = unit.bequest_root(0.0, mortality);
    let denom = g0 - b;
    if !(denom > 0.0 && a.is_finite()) {
        return Ok(KappaCalibration {
            kappa: None,
            residual: f64::NAN,
            feasible: false,
            warnings,
        });
    }
    let m = a / denom;
    let kappa = m.powf(1.0 - schedule.gamma);
    let calibrated = schedule.with_kappa(kappa)?;
    let residual = OptimalControls::new(market, mortality, &calibrated)?
        .tontine_allocation(0.0)?
        .abs();
    Ok(KappaCalibration {
        kappa: Some(kappa),
        residual,
        feasible: kappa > 0.0 && kappa.is_finite() && residual <= 1e-10,
        warnings,
    })
}
