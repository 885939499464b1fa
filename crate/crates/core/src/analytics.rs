//! Closed-form expected income, bequest and objective values, plus the
//! tables behind the four reference figures.

use crate::controls::{MarketParams, OptimalControls};
use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::mortality::GompertzMakehamParams;
use crate::preferences::{calibrate_kappa, BequestVariant, PreferenceSchedule, DEFAULT_HORIZON_YEARS};

/// Annual income offered by comparable annuities for a 65-year-old with
/// 100,000 of capital. Used for reporting only.
pub const ANNUITY_INCOME_BAND: (f64, f64) = (4540.0, 4756.0);

/// Risk-aversion parameters shown in the reference figures.
pub const FIGURE_GAMMAS: [f64; 6] = [0.5, -1.0, -3.0, -5.0, -8.0, -11.0];

pub const DEFAULT_BASE_AGE: f64 = 65.0;
pub const DEFAULT_INITIAL_WEALTH: f64 = 100_000.0;

fn require_calibrated(problem: &OptimalControls) -> Result<()> {
    if problem.schedule().variant().kappa().is_none() {
        return Err(Error::Uncalibrated(format!(
            "{} variant needs kappa; run calibrate_kappa first",
            problem.schedule().variant()
        )));
    }
    Ok(())
}

/// `(μ−r)π* − β`, the growth rate of expected discounted income.
pub fn income_growth_rate(problem: &OptimalControls) -> f64 {
    let m = problem.market();
    (m.mu - m.r) * problem.pi_star() - problem.beta()
}

pub fn income_is_constant(problem: &OptimalControls) -> bool {
    income_growth_rate(problem).abs() < 1e-12
}

/// `E[e^{−rt} c*_t X*_t] = X0 e^{((μ−r)π*−β)t} / D(0)`.
pub fn expected_discounted_income(problem: &OptimalControls, t: f64, initial_wealth: f64) -> Result<f64> {
    require_calibrated(problem)?;
    if !(t >= 0.0 && t <= problem.t_max()) {
        return Err(Error::param("t", format!("must lie in [0, {}], got {t}", problem.t_max())));
    }
    let d0 = problem.denominator(0.0)?;
    Ok(initial_wealth * (income_growth_rate(problem) * t).exp() / d0)
}

/// [`expected_discounted_income`] from its parts.
pub fn expected_income(
    t: f64,
    schedule: &PreferenceSchedule,
    market: &MarketParams,
    mortality: &GompertzMakehamParams,
    initial_wealth: f64,
) -> Result<f64> {
    let problem = OptimalControls::calibrated(market, mortality, schedule)?;
    expected_discounted_income(&problem, t, initial_wealth)
}

/// `E[e^{−rt}(1−α*_t) X*_t]`, the expected discounted bequest pot.
pub fn expected_discounted_bequest(problem: &OptimalControls, t: f64, initial_wealth: f64) -> Result<f64> {
    Ok(expected_discounted_income(problem, t, initial_wealth)? * problem.bequest_root(t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncomeCurve {
    pub times: Vec<f64>,
    pub expected_income: Vec<f64>,
    pub expected_bequest_fraction: Vec<f64>,
    pub expected_bequest: Vec<f64>,
    pub note: &'static str,
}

impl IncomeCurve {
    pub fn csv_header() -> &'static str {
        "t,age,expected_income,expected_bequest_fraction"
    }

    pub fn to_csv(&self, base_age: f64) -> String {
        let mut out = format!("{}\n", Self::csv_header());
        for i in 0..self.times.len() {
            let t = self.times[i];
            let cells = [t, base_age + t, self.expected_income[i], self.expected_bequest_fraction[i]];
            out.push_str(&cells.iter().map(|&v| fmt_sig(v, 12)).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    /// Largest relative deviation from the first value.
    pub fn relative_variation(&self) -> f64 {
        let first = self.expected_income[0];
        self.expected_income
            .iter()
            .map(|v| ((v - first) / first).abs())
            .fold(0.0, f64::max)
    }
}

/// Uniform grid `0, step, 2·step, …` not exceeding `end`.
pub fn uniform_grid(step: f64, end: f64) -> Result<Vec<f64>> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::param("grid_step", format!("must be > 0, got {step}")));
    }
    let n = (end / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| i as f64 * step).collect())
}

pub fn income_curve(problem: &OptimalControls, initial_wealth: f64, grid: &[f64]) -> Result<IncomeCurve> {
    require_calibrated(problem)?;
    let d0 = problem.denominator(0.0)?;
    let g = income_growth_rate(problem);
    let mut curve = IncomeCurve {
        times: grid.to_vec(),
        expected_income: Vec::with_capacity(grid.len()),
        expected_bequest_fraction: Vec::with_capacity(grid.len()),
        expected_bequest: Vec::with_capacity(grid.len()),
        note: "instantaneous rate c*_t X*_t discounted at r, per year",
    };
    for &t in grid {
        if !(t >= 0.0 && t <= problem.t_max()) {
            return Err(Error::param("grid", format!("time {t} outside [0, {}]", problem.t_max())));
        }
        let income = initial_wealth * (g * t).exp() / d0;
        let root = problem.bequest_root(t);
        curve.expected_income.push(income);
        curve.expected_bequest_fraction.push(1.0 - problem.tontine_allocation(t)?);
        curve.expected_bequest.push(income * root);
    }
    Ok(curve)
}

/// `(X0^γ/γ) D(0)^{1−γ}`, the optimal value of the objective.
pub fn objective_value_closed_form(problem: &OptimalControls, initial_wealth: f64) -> Result<f64> {
    require_calibrated(problem)?;
    let g = problem.gamma();
    let d0 = problem.denominator(0.0)?;
    Ok(initial_wealth.powf(g) / g * d0.powf(1.0 - g))
}

/// The reference market, mortality model and risk aversions.
#[derive(Debug, Clone)]
pub struct FigureSetup {
    pub market: MarketParams,
    pub mortality: GompertzMakehamParams,
    pub gammas: Vec<f64>,
    pub horizon_years: f64,
    pub base_age: f64,
    pub grid_step: f64,
    pub initial_wealth: f64,
}

impl Default for FigureSetup {
    fn default() -> Self {
        Self {
            market: MarketParams::default(),
            mortality: GompertzMakehamParams::uk_2019(),
            gammas: FIGURE_GAMMAS.to_vec(),
            horizon_years: DEFAULT_HORIZON_YEARS,
            base_age: DEFAULT_BASE_AGE,
            grid_step: crate::controls::DEFAULT_GRID_STEP,
            initial_wealth: DEFAULT_INITIAL_WEALTH,
        }
    }
}

impl FigureSetup {
    /// Rate-linked schedule (`ρ = rγ`) with `κ` calibrated for scaled variants.
    pub fn schedule(&self, gamma: f64, variant: BequestVariant) -> Result<PreferenceSchedule> {
        let s = PreferenceSchedule::rate_linked(gamma, self.market.r, variant)?;
        if !s.variant().is_scaled() || s.variant().kappa().is_some() {
            return Ok(s);
        }
        let cal = calibrate_kappa(&s, &self.market, &self.mortality)?;
        match cal.kappa {
            Some(k) if cal.feasible => s.with_kappa(k),
            _ => Err(Error::Uncalibrated(format!(
                "no positive kappa for gamma={gamma} ({})",
                s.variant().name()
            ))),
        }
    }

    pub fn problem(&self, gamma: f64, variant: BequestVariant) -> Result<OptimalControls> {
        OptimalControls::calibrated(&self.market, &self.mortality, &self.schedule(gamma, variant)?)
    }

    fn trimmed(&self) -> BequestVariant {
        BequestVariant::Trimmed {
            horizon_years: self.horizon_years,
        }
    }

    fn scaled_trimmed(&self) -> BequestVariant {
        BequestVariant::ScaledTrimmed {
            kappa: None,
            horizon_years: self.horizon_years,
        }
    }

    fn negative_gammas(&self) -> Vec<f64> {
        self.gammas.iter().copied().filter(|&g| g <= -1.0).collect()
    }

    /// Tontine allocation under the power schedule `b = λ^γ`.
    pub fn fig1(&self) -> Result<FigureTable> {
        let columns = self
            .gammas
            .iter()
            .map(|&g| Ok((gamma_label("", g), self.problem(g, BequestVariant::Power)?)))
            .collect::<Result<Vec<_>>>()?;
        self.allocation_table(columns)
    }

    /// Tontine allocation for the calibrated whole-life scale (`scaled:`
    /// columns) and the trimmed schedule (`trimmed:` columns).
    pub fn fig2(&self) -> Result<FigureTable> {
        let mut columns = Vec::new();
        for g in self.negative_gammas() {
            columns.push((
                gamma_label("scaled:", g),
                self.problem(g, BequestVariant::ScaledPower { kappa: None })?,
            ));
        }
        for &g in &self.gammas {
            columns.push((gamma_label("trimmed:", g), self.problem(g, self.trimmed())?));
        }
        self.allocation_table(columns)
    }

    /// Tontine allocation for the calibrated trimmed schedule.
    pub fn fig3(&self) -> Result<FigureTable> {
        let columns = self
            .negative_gammas()
            .into_iter()
            .map(|g| Ok((gamma_label("", g), self.problem(g, self.scaled_trimmed())?)))
            .collect::<Result<Vec<_>>>()?;
        self.allocation_table(columns)
    }

    /// Expected discounted income for the calibrated trimmed schedule.
    pub fn fig4(&self) -> Result<FigureTable> {
        let grid = uniform_grid(self.grid_step, self.mortality.limiting_age_years)?;
        let mut table = FigureTable::new(grid, self.base_age);
        for g in self.negative_gammas() {
            let problem = self.problem(g, self.scaled_trimmed())?;
            let d0 = problem.denominator(0.0)?;
            let rate = income_growth_rate(&problem);
            let values = table
                .times
                .iter()
                .map(|&t| self.initial_wealth * (rate * t).exp() / d0)
                .collect();
            table.push(gamma_label("", g), values);
        }
        Ok(table)
    }

    fn allocation_table(&self, columns: Vec<(String, OptimalControls)>) -> Result<FigureTable> {
        let schedules = columns
            .into_iter()
            .map(|(name, p)| Ok((name, p.tabulate(self.grid_step)?)))
            .collect::<Result<Vec<_>>>()?;
        let len = schedules.iter().map(|(_, s)| s.grid.len()).min().unwrap_or(0);
        let times = schedules
            .first()
            .map(|(_, s)| s.grid[..len].to_vec())
            .unwrap_or_default();
        let mut table = FigureTable::new(times, self.base_age);
        for (name, s) in schedules {
            table.push(name, s.alpha_star[..len].to_vec());
        }
        Ok(table)
    }
}

fn gamma_label(prefix: &str, gamma: f64) -> String {
    format!("{prefix}gamma={gamma}")
}

/// A figure as columns over a common time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureTable {
    pub times: Vec<f64>,
    pub base_age: f64,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl FigureTable {
    pub fn new(times: Vec<f64>, base_age: f64) -> Self {
        Self {
            times,
            base_age,
            columns: Vec::new(),
        }
    }

    pub fn push(&mut self, name: String, values: Vec<f64>) {
        assert_eq!(values.len(), self.times.len(), "column length must match the grid");
        self.columns.push((name, values));
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,age");
        for (name, _) in &self.columns {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, &t) in self.times.iter().enumerate() {
            out.push_str(&fmt_sig(t, 12));
            out.push(',');
            out.push_str(&fmt_sig(self.base_age + t, 12));
            for (_, v) in &self.columns {
                out.push(',');
                out.push_str(&fmt_sig(v[i], 12));
            }
            out.push('\n');
        }
        out
    }
}
