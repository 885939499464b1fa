//! Closed-form optimal controls: equity fraction `π*`, consumption rate
//! `c*_t`, tontine allocation `α*_t`, and the denominator integral
//!
//! ```text
//! D(t) = ∫_t^{T_max} e^{−βu} S_u (1 + b_u^{1/(1−γ)} λ_u) du
//! c*_t = e^{−βt} S_t / D(t)
//! 1 − α*_t = e^{−βt} S_t b_t^{1/(1−γ)} / D(t)
//! ```
//!
//! The infinite upper limit is replaced by the mortality model's limiting age.

use std::fmt;

use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::mortality::GompertzMakehamParams;
use crate::preferences::{BequestVariant, PreferenceSchedule};
use crate::quadrature::{composite, PanelSpec};

/// Default tabulation step: one week.
pub const DEFAULT_GRID_STEP: f64 = 1.0 / 52.0;

/// Black-Scholes market with one stock and a bank account.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    pub mu: f64,
    pub sigma: f64,
    pub r: f64,
}

impl Default for MarketParams {
    /// Long-run equity index and inflation levels: μ = 10%, σ = 20%, r = 3%.
    fn default() -> Self {
        Self {
            mu: 0.10,
            sigma: 0.20,
            r: 0.03,
        }
    }
}

impl MarketParams {
    pub fn new(mu: f64, sigma: f64, r: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::param("sigma", format!("must be > 0, got {sigma}")));
        }
        if !(mu.is_finite() && r.is_finite()) {
            return Err(Error::param("mu/r", "must be finite"));
        }
        Ok(Self { mu, sigma, r })
    }

    /// `(μ − r)/σ`.
    pub fn price_of_risk(&self) -> f64 {
        (self.mu - self.r) / self.sigma
    }

    pub fn drift_above_rate(&self) -> bool {
        self.mu > self.r
    }
}

/// `β = r + (ρ − r)/(1 − γ) − ½·γ/(1 − γ)²·((μ − r)/σ)²`.
pub fn beta(market: &MarketParams, gamma: f64, rho: f64) -> f64 {
    let one_minus = 1.0 - gamma;
    let theta = market.price_of_risk();
    market.r + (rho - market.r) / one_minus - 0.5 * gamma / (one_minus * one_minus) * theta * theta
}

/// `π* = (μ − r)/((1 − γ)σ²)`.
pub fn merton_fraction(market: &MarketParams, gamma: f64) -> f64 {
    (market.mu - market.r) / ((1.0 - gamma) * market.sigma * market.sigma)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlWarning {
    DriftNotAboveRate { mu: f64, r: f64 },
    /// The denominator integral is infinite before the trimming cutoff.
    IntegrabilityViolated { gamma: f64, horizon_years: f64 },
    /// Trimmed weights with `γ > 0` blow up at the cutoff; controls are still
    /// computed.
    TrimmedWithPositiveGamma { gamma: f64 },
    /// Grid clamped where `D` reaches zero.
    Truncated { last_time: f64 },
}

impl fmt::Display for ControlWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlWarning::DriftNotAboveRate { mu, r } => {
                write!(f, "stock drift {mu} does not exceed the interest rate {r}")
            }
            ControlWarning::IntegrabilityViolated {
                gamma,
                horizon_years,
            } => write!(
                f,
                "bequest integral diverges at t={horizon_years} for gamma={gamma}; D(t)=inf before the cutoff"
            ),
            ControlWarning::TrimmedWithPositiveGamma { gamma } => write!(
                f,
                "trimmed bequest weight with gamma={gamma} > 0 violates the integrability condition"
            ),
            ControlWarning::Truncated { last_time } => {
                write!(f, "schedule truncated at t={last_time} where D vanishes")
            }
        }
    }
}

/// The optimal-control problem for one market, mortality model and
/// preference schedule. Evaluates the controls at arbitrary times.
#[derive(Debug, Clone)]
pub struct OptimalControls {
    market: MarketParams,
    mortality: GompertzMakehamParams,
    schedule: PreferenceSchedule,
    beta: f64,
    pi_star: f64,
}

/// Controls at a single time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPoint {
    pub t: f64,
    pub pi_star: f64,
    pub c_star: f64,
    pub alpha_star: f64,
    pub denominator: f64,
}

impl OptimalControls {
    pub fn new(
        market: &MarketParams,
        mortality: &GompertzMakehamParams,
        schedule: &PreferenceSchedule,
    ) -> Result<Self> {
        schedule.check_mortality(mortality)?;
        Ok(Self {
            market: *market,
            mortality: *mortality,
            schedule: schedule.clone(),
            beta: beta(market, schedule.gamma(), schedule.rho()),
            pi_star: merton_fraction(market, schedule.gamma()),
        })
    }

    /// Like [`OptimalControls::new`] but refuses uncalibrated scaled variants.
    pub fn calibrated(
        market: &MarketParams,
        mortality: &GompertzMakehamParams,
        schedule: &PreferenceSchedule,
    ) -> Result<Self> {
        if schedule.variant().kappa().is_none() {
            return Err(Error::Uncalibrated(format!(
                "{} variant has no kappa",
                schedule.variant()
            )));
        }
        Self::new(market, mortality, schedule)
    }

    pub fn market(&self) -> &MarketParams {
        &self.market
    }

    pub fn mortality(&self) -> &GompertzMakehamParams {
        &self.mortality
    }

    pub fn schedule(&self) -> &PreferenceSchedule {
        &self.schedule
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn pi_star(&self) -> f64 {
        self.pi_star
    }

    pub fn gamma(&self) -> f64 {
        self.schedule.gamma()
    }

    pub fn t_max(&self) -> f64 {
        self.mortality.limiting_age_years
    }

    /// `e^{−βt} S_t`, evaluated in log space.
    #[inline]
    pub fn discount_survival(&self, t: f64) -> f64 {
        (-self.beta * t - self.mortality.cumulative_hazard(t)).exp()
    }

    #[inline]
    pub fn bequest_root(&self, t: f64) -> f64 {
        self.schedule.bequest_root(t, &self.mortality)
    }

    /// Integrand of `D`: `e^{−βu} S_u (1 + b_u^{1/(1−γ)} λ_u)`.
    #[inline]
    pub fn integrand(&self, u: f64) -> f64 {
        self.discount_survival(u) * (1.0 + self.bequest_root(u) * self.mortality.hazard(u))
    }

    fn panels(&self) -> PanelSpec {
        let mut spec = PanelSpec::uniform(1.0);
        match self.schedule.variant() {
            BequestVariant::Trimmed { horizon_years }
            | BequestVariant::ScaledTrimmed { horizon_years, .. } => {
                spec.breaks.push(*horizon_years);
                spec.graded.push(*horizon_years);
            }
            BequestVariant::Table(table) => {
                for &(t, _) in table.points() {
                    spec.breaks.push(t);
                    spec.graded.push(t);
                }
            }
            _ => {}
        }
        spec
    }

    fn diverges_before(&self, t: f64) -> bool {
        self.schedule.bequest_integral_diverges()
            && self.schedule.variant().horizon().is_some_and(|h| t < h)
    }

    fn check_t(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t <= self.t_max()) {
            return Err(Error::param(
                "t",
                format!("must lie in [0, {}], got {t}", self.t_max()),
            ));
        }
        Ok(())
    }

    /// `D(t)` by composite Gauss-Legendre, one-year panels split at the
    /// bequest cutoff. Infinite where the bequest integral diverges.
    pub fn denominator(&self, t: f64) -> Result<f64> {
        self.check_t(t)?;
        Ok(self.denominator_on(t, self.t_max(), &self.panels()))
    }

    /// `D(t)` and the step-halving difference `|D_{panels/2} − D|`.
    pub fn denominator_with_error(&self, t: f64) -> Result<(f64, f64)> {
        self.check_t(t)?;
        let spec = self.panels();
        let coarse = self.denominator_on(t, self.t_max(), &spec);
        let fine = self.denominator_on(t, self.t_max(), &spec.halved());
        Ok((fine, (fine - coarse).abs()))
    }

    fn denominator_on(&self, a: f64, b: f64, spec: &PanelSpec) -> f64 {
        if self.diverges_before(a) {
            return f64::INFINITY;
        }
        composite(|u| self.integrand(u), a, b, spec)
    }

    /// `|D(0; T_max) − D(0; T_max + 10)| / D(0; T_max)`.
    pub fn truncation_sensitivity(&self) -> f64 {
        let spec = self.panels();
        let d = self.denominator_on(0.0, self.t_max(), &spec);
        let extended = d + composite(|u| self.integrand(u), self.t_max(), self.t_max() + 10.0, &spec);
        if d.is_finite() {
            (extended - d).abs() / d
        } else {
            f64::NAN
        }
    }

    /// `(∫ e^{−βu}S_u du, ∫ e^{−βu}S_u b_u^{1/(1−γ)} λ_u du)` over `[0, T_max]`.
    pub(crate) fn calibration_integrals(&self) -> (f64, f64) {
        let spec = self.panels();
        let a = composite(|u| self.discount_survival(u), 0.0, self.t_max(), &spec);
        let b = if self.diverges_before(0.0) {
            f64::INFINITY
        } else {
            composite(
                |u| self.discount_survival(u) * self.bequest_root(u) * self.mortality.hazard(u),
                0.0,
                self.t_max(),
                &spec,
            )
        };
        (a, b)
    }

    pub fn controls_at(&self, t: f64) -> Result<ControlPoint> {
        let d = self.denominator(t)?;
        let (c, one_minus_alpha) = self.rates_from(t, d);
        Ok(ControlPoint {
            t,
            pi_star: self.pi_star,
            c_star: c,
            alpha_star: 1.0 - one_minus_alpha,
            denominator: d,
        })
    }

    pub fn consumption(&self, t: f64) -> Result<f64> {
        Ok(self.controls_at(t)?.c_star)
    }

    pub fn tontine_allocation(&self, t: f64) -> Result<f64> {
        Ok(self.controls_at(t)?.alpha_star)
    }

    /// `(c*_t, 1 − α*_t)` from a precomputed `D(t)`.
    fn rates_from(&self, t: f64, d: f64) -> (f64, f64) {
        let n = self.discount_survival(t);
        let root = self.bequest_root(t);
        let c = n / d;
        let bequest = if root == 0.0 { 0.0 } else { n * root / d };
        (c, bequest)
    }

    pub fn warnings(&self) -> Vec<ControlWarning> {
        let mut w = Vec::new();
        if !self.market.drift_above_rate() {
            w.push(ControlWarning::DriftNotAboveRate {
                mu: self.market.mu,
                r: self.market.r,
            });
        }
        if self.schedule.variant().is_trimmed() && self.gamma() > 0.0 {
            w.push(ControlWarning::TrimmedWithPositiveGamma { gamma: self.gamma() });
        }
        if self.schedule.bequest_integral_diverges() {
            w.push(ControlWarning::IntegrabilityViolated {
                gamma: self.gamma(),
                horizon_years: self.schedule.variant().horizon().unwrap_or(f64::NAN),
            });
        }
        w
    }

    /// Tabulates the controls on a uniform grid over `[0, T_max]`.
    pub fn tabulate(&self, grid_step: f64) -> Result<ControlSchedule> {
        if !(grid_step.is_finite() && grid_step > 0.0) {
            return Err(Error::param("grid_step", format!("must be > 0, got {grid_step}")));
        }
        let t_max = self.t_max();
        let n_f = t_max / grid_step;
        let n = n_f.round() as usize;
        if n == 0 || (n_f - n as f64).abs() > 1e-9 * n_f.max(1.0) {
            return Err(Error::param(
                "grid_step",
                format!("{grid_step} does not divide the limiting age {t_max}"),
            ));
        }
        let grid: Vec<f64> = (0..=n).map(|i| i as f64 * grid_step).collect();

        // Backward accumulation over grid cells.
        let spec = self.panels();
        let mut denominator = vec![0.0; n + 1];
        for i in (0..n).rev() {
            denominator[i] = if self.diverges_before(grid[i]) {
                f64::INFINITY
            } else {
                denominator[i + 1] + composite(|u| self.integrand(u), grid[i], grid[i + 1], &spec)
            };
        }

        let mut warnings = self.warnings();
        let last = denominator
            .iter()
            .rposition(|&d| d > 0.0)
            .ok_or_else(|| Error::param("grid", "denominator vanishes everywhere"))?;
        warnings.push(ControlWarning::Truncated {
            last_time: grid[last],
        });

        let mut c_star = Vec::with_capacity(last + 1);
        let mut alpha_star = Vec::with_capacity(last + 1);
        let mut bequest_root = Vec::with_capacity(last + 1);
        for (&t, &d) in grid.iter().zip(&denominator).take(last + 1) {
            let (c, bequest) = self.rates_from(t, d);
            c_star.push(c);
            alpha_star.push(1.0 - bequest);
            bequest_root.push(self.bequest_root(t));
        }
        let mut grid = grid;
        grid.truncate(last + 1);
        denominator.truncate(last + 1);

        Ok(ControlSchedule {
            grid_step,
            grid,
            pi_star: self.pi_star,
            c_star,
            alpha_star,
            denominator,
            bequest_root,
            beta: self.beta,
            gamma: self.gamma(),
            truncation_sensitivity: self.truncation_sensitivity(),
            warnings,
        })
    }
}

/// `D(t)` as a free function.
pub fn denominator_integral(
    t: f64,
    schedule: &PreferenceSchedule,
    mortality: &GompertzMakehamParams,
    market: &MarketParams,
) -> Result<f64> {
    OptimalControls::calibrated(market, mortality, schedule)?.denominator(t)
}

pub fn build_control_schedule(
    schedule: &PreferenceSchedule,
    mortality: &GompertzMakehamParams,
    market: &MarketParams,
    grid_step: f64,
) -> Result<ControlSchedule> {
    OptimalControls::calibrated(market, mortality, schedule)?.tabulate(grid_step)
}

/// Controls tabulated on a uniform grid. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule {
    pub grid_step: f64,
    pub grid: Vec<f64>,
    pub pi_star: f64,
    pub c_star: Vec<f64>,
    pub alpha_star: Vec<f64>,
    pub denominator: Vec<f64>,
    /// `b_t^{1/(1−γ)}` at each grid point.
    pub bequest_root: Vec<f64>,
    pub beta: f64,
    pub gamma: f64,
    pub truncation_sensitivity: f64,
    pub warnings: Vec<ControlWarning>,
}

impl ControlSchedule {
    pub fn last_time(&self) -> f64 {
        *self.grid.last().expect("grid is never empty")
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let x = (t / self.grid_step).max(0.0);
        let i = (x.floor() as usize).min(self.grid.len().saturating_sub(2));
        (i, (x - i as f64).clamp(0.0, 1.0))
    }

    fn lerp(&self, values: &[f64], t: f64) -> f64 {
        if values.len() == 1 {
            return values[0];
        }
        let (i, w) = self.locate(t);
        values[i] + w * (values[i + 1] - values[i])
    }

    pub fn consumption_at(&self, t: f64) -> f64 {
        self.lerp(&self.c_star, t)
    }

    pub fn tontine_at(&self, t: f64) -> f64 {
        self.lerp(&self.alpha_star, t)
    }

    /// Log-linear interpolation of `D`.
    pub fn denominator_at(&self, t: f64) -> f64 {
        if self.denominator.len() == 1 {
            return self.denominator[0];
        }
        let (i, w) = self.locate(t);
        let (d0, d1) = (self.denominator[i], self.denominator[i + 1]);
        if !(d0.is_finite() && d1.is_finite()) || d1 <= 0.0 {
            return d0 + w * (d1 - d0);
        }
        (d0.ln() + w * (d1.ln() - d0.ln())).exp()
    }

    pub fn csv_header() -> &'static str {
        "t,age,pi_star,c_star,alpha_star,D"
    }

    /// One row per grid point, 12 significant digits.
    pub fn to_csv(&self, base_age: f64) -> String {
        let mut out = String::from(Self::csv_header());
        out.push('\n');
        for i in 0..self.grid.len() {
            let t = self.grid[i];
            let row = [
                t,
                base_age + t,
                self.pi_star,
                self.c_star[i],
                self.alpha_star[i],
                self.denominator[i],
            ];
            let cells: Vec<String> = row.iter().map(|&v| fmt_sig(v, 12)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> (MarketParams, GompertzMakehamParams) {
        (MarketParams::default(), GompertzMakehamParams::uk_2019())
    }

    #[test]
    fn beta_collapses_without_risk_premium() {
        let m = MarketParams::new(0.03, 0.2, 0.03).unwrap();
        for g in [-3.0, 0.5] {
            assert!((beta(&m, g, 0.03) - 0.03).abs() < 1e-15);
        }
    }

    #[test]
    fn beta_at_rate_linked_discount() {
        let (m, _) = reference();
        let b = beta(&m, -3.0, -0.09);
        assert!((b - 0.011484375).abs() < 1e-15, "{b}");
    }

    #[test]
    fn merton_fractions() {
        let (m, _) = reference();
        assert!((merton_fraction(&m, 0.5) - 3.5).abs() < 1e-14);
        assert!((merton_fraction(&m, -3.0) - 0.4375).abs() < 1e-15);
        assert!((merton_fraction(&m, -11.0) - 0.145_833_333_333_333_3).abs() < 1e-15);
    }

    #[test]
    fn sigma_must_be_positive() {
        assert!(MarketParams::new(0.1, 0.0, 0.03).is_err());
    }

    #[test]
    fn exponential_survival_denominator() {
        // b ≡ 0, β = 0, λ ≡ m: D(t) = (e^{−mt} − e^{−mT})/m
        let market = MarketParams::new(0.03, 0.2, 0.03).unwrap();
        let mort = GompertzMakehamParams::with_limiting_age(0.0, 0.1, 0.04, 400.0).unwrap();
        let s = PreferenceSchedule::new(-1.0, -0.03, BequestVariant::None).unwrap();
        let p = OptimalControls::new(&market, &mort, &s).unwrap();
        assert!(p.beta().abs() < 1e-15);
        for t in [0.0, 5.0, 30.0] {
            let d = p.denominator(t).unwrap();
            let expect = (-0.04 * t).exp() / 0.04;
            assert!((d / expect - 1.0).abs() < 1e-6, "t={t} d={d}");
        }
    }

    #[test]
    fn none_variant_has_full_tontine() {
        let (m, mort) = reference();
        let s = PreferenceSchedule::rate_linked(-3.0, m.r, BequestVariant::None).unwrap();
        let cs = build_control_schedule(&s, &mort, &m, 0.25).unwrap();
        assert!(cs.alpha_star.iter().all(|&a| a == 1.0));
        assert!(cs.c_star.iter().all(|&c| c > 0.0));
    }

    #[test]
    fn uncalibrated_schedule_rejected() {
        let (m, mort) = reference();
        let s = PreferenceSchedule::rate_linked(-3.0, m.r, BequestVariant::ScaledPower { kappa: None }).unwrap();
        assert!(matches!(
            build_control_schedule(&s, &mort, &m, 0.25),
            Err(Error::Uncalibrated(_))
        ));
    }

    #[test]
    fn grid_step_must_divide_horizon() {
        let (m, mort) = reference();
        let s = PreferenceSchedule::rate_linked(-3.0, m.r, BequestVariant::Power).unwrap();
        assert!(build_control_schedule(&s, &mort, &m, 0.3).is_err());
        assert!(build_control_schedule(&s, &mort, &m, -1.0).is_err());
    }

    #[test]
    fn power_variant_starts_negative() {
        let (m, mort) = reference();
        let s = PreferenceSchedule::rate_linked(-3.0, m.r, BequestVariant::Power).unwrap();
        let p = OptimalControls::new(&m, &mort, &s).unwrap();
        assert!(p.tontine_allocation(0.0).unwrap() < 0.0);
    }

    #[test]
    fn schedule_is_truncated_before_limiting_age() {
        let (m, mort) = reference();
        let s = PreferenceSchedule::rate_linked(-3.0, m.r, BequestVariant::Power).unwrap();
        let cs = build_control_schedule(&s, &mort, &m, 0.5).unwrap();
        assert!(cs.last_time() < 50.0);
        assert!(cs
            .warnings
            .iter()
            .any(|w| matches!(w, ControlWarning::Truncated { .. })));
        assert!(cs.truncation_sensitivity < 1e-9);
    }

    #[test]
    fn schedule_matches_pointwise_controls() {
        let (m, mort) = reference();
        let s = PreferenceSchedule::rate_linked(
            -5.0,
            m.r,
            BequestVariant::Trimmed {
                horizon_years: 20.0,
            },
        )
        .unwrap();
        let p = OptimalControls::new(&m, &mort, &s).unwrap();
        let cs = p.tabulate(0.25).unwrap();
        for i in [0, 13, 79, 80, 81, 150] {
            let cp = p.controls_at(cs.grid[i]).unwrap();
            assert!(
                (cp.denominator / cs.denominator[i] - 1.0).abs() < 1e-11,
                "i={i} {} {}",
                cp.denominator,
                cs.denominator[i]
            );
            assert!((cp.alpha_star - cs.alpha_star[i]).abs() < 1e-11, "i={i}");
        }
    }

    #[test]
    fn divergent_trimmed_case_is_flagged_not_failed() {
        let (m, mort) = reference();
        let s = PreferenceSchedule::rate_linked(
            0.5,
            m.r,
            BequestVariant::Trimmed {
                horizon_years: 20.0,
            },
        )
        .unwrap();
        let p = OptimalControls::new(&m, &mort, &s).unwrap();
        assert!(p.denominator(0.0).unwrap().is_infinite());
        assert!(p.denominator(25.0).unwrap().is_finite());
        let cs = p.tabulate(0.5).unwrap();
        assert!(cs
            .warnings
            .iter()
            .any(|w| matches!(w, ControlWarning::IntegrabilityViolated { .. })));
        assert_eq!(cs.alpha_star[0], 1.0);
        assert_eq!(cs.c_star[0], 0.0);
    }

    #[test]
    fn csv_has_header_and_one_row_per_point() {
        let (m, mort) = reference();
        let s = PreferenceSchedule::rate_linked(-3.0, m.r, BequestVariant::None).unwrap();
        let cs = build_control_schedule(&s, &mort, &m, 1.0).unwrap();
        let csv = cs.to_csv(65.0);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,age,pi_star,c_star,alpha_star,D"));
        assert_eq!(lines.count(), cs.grid.len());
    }
}
