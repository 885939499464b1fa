//! Monte Carlo simulation of the wealth process under deterministic-in-time
//! controls, together with the state-price density
//!
//! ```text
//! dX/X = (r + (μ−r)π − c + αλ) dt + σπ dW
//! dζ/ζ = −(r + λ) dt − (μ−r)/σ dW
//! Y_t  = ζ_t X_t + ∫_0^t ζ_u (c_u + λ_u (1−α_u)) X_u du
//! ```
//!
//! Controls are treated as constant over each step (their step average), so
//! the log-space update of `X` and `ζ` is exact per step. Each path draws from
//! its own ChaCha stream keyed by `(seed, path index)`, which makes results
//! independent of thread scheduling and gives common random numbers across
//! runs that share a seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::controls::{ControlSchedule, MarketParams, OptimalControls};
use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::mortality::GompertzMakehamParams;
use crate::preferences::PreferenceSchedule;
use crate::quadrature::gauss_legendre_16;

pub const DEFAULT_STEP: f64 = 1.0 / 252.0;

/// Times at which summaries are reported.
pub const REPORT_TIMES: [f64; 7] = [1.0, 5.0, 10.0, 15.0, 20.0, 30.0, 40.0];

const PATHS_PER_TASK: usize = 512;

/// Deterministic controls `t ↦ (π_t, c_t, α_t)`.
pub trait ControlLaw: Sync {
    fn equity(&self, t: f64) -> f64;
    fn consumption(&self, t: f64) -> f64;
    fn tontine(&self, t: f64) -> f64;
    /// Controls are defined on `[0, defined_until()]`.
    fn defined_until(&self) -> f64;
}

impl ControlLaw for ControlSchedule {
    fn equity(&self, _t: f64) -> f64 {
        self.pi_star
    }

    fn consumption(&self, t: f64) -> f64 {
        self.consumption_at(t)
    }

    fn tontine(&self, t: f64) -> f64 {
        self.tontine_at(t)
    }

    fn defined_until(&self) -> f64 {
        self.last_time()
    }
}

/// Constant controls up to a fixed time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantControls {
    pub equity: f64,
    pub consumption: f64,
    pub tontine: f64,
    pub until: f64,
}

impl ControlLaw for ConstantControls {
    fn equity(&self, _t: f64) -> f64 {
        self.equity
    }

    fn consumption(&self, _t: f64) -> f64 {
        self.consumption
    }

    fn tontine(&self, _t: f64) -> f64 {
        self.tontine
    }

    fn defined_until(&self) -> f64 {
        self.until
    }
}

/// Base controls with piecewise-constant multiplicative jitter on
/// consumption and tontine allocation; the allocation is capped at 1.
#[derive(Debug, Clone)]
pub struct PerturbedControls<'a, C: ControlLaw> {
    base: &'a C,
    piece: f64,
    consumption_factors: Vec<f64>,
    tontine_factors: Vec<f64>,
}

impl<'a, C: ControlLaw> PerturbedControls<'a, C> {
    pub fn new(base: &'a C, piece: f64, consumption_factors: Vec<f64>, tontine_factors: Vec<f64>) -> Self {
        assert!(piece > 0.0 && !consumption_factors.is_empty() && !tontine_factors.is_empty());
        Self {
            base,
            piece,
            consumption_factors,
            tontine_factors,
        }
    }

    /// Consumption scaled by a constant factor, allocation unchanged.
    pub fn scaled_consumption(base: &'a C, factor: f64) -> Self {
        Self::new(base, f64::INFINITY, vec![factor], vec![1.0])
    }

    /// Independent uniform factors in `[lo, hi]` for each `piece`-long interval.
    pub fn random(base: &'a C, piece: f64, lo: f64, hi: f64, seed: u64) -> Self {
        use rand::Rng;
        let n = (base.defined_until() / piece).ceil().max(1.0) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |_| rng.random_range(lo..=hi);
        let c: Vec<f64> = (0..n).map(&mut draw).collect();
        let a: Vec<f64> = (0..n).map(&mut draw).collect();
        Self::new(base, piece, c, a)
    }

    fn factor(&self, factors: &[f64], t: f64) -> f64 {
        let i = if self.piece.is_finite() {
            (t / self.piece).floor().max(0.0) as usize
        } else {
            0
        };
        factors[i.min(factors.len() - 1)]
    }
}

impl<C: ControlLaw> ControlLaw for PerturbedControls<'_, C> {
    fn equity(&self, t: f64) -> f64 {
        self.base.equity(t)
    }

    fn consumption(&self, t: f64) -> f64 {
        self.base.consumption(t) * self.factor(&self.consumption_factors, t)
    }

    fn tontine(&self, t: f64) -> f64 {
        (self.base.tontine(t) * self.factor(&self.tontine_factors, t)).min(1.0)
    }

    fn defined_until(&self) -> f64 {
        self.base.defined_until()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n_paths: usize,
    pub step: f64,
    pub horizon: f64,
    pub seed: u64,
    pub initial_wealth: f64,
    /// `ζ_0`; the candidate's value is `φ_0 = S_0/(c*_0)^{1−γ}`.
    pub initial_spd: f64,
    /// Times at which per-path values are kept; 0 is always added.
    pub record_times: Vec<f64>,
}

impl SimulationConfig {
    pub fn new(n_paths: usize, horizon: f64, seed: u64) -> Self {
        Self {
            n_paths,
            step: DEFAULT_STEP,
            horizon,
            seed,
            initial_wealth: 100_000.0,
            initial_spd: 1.0,
            record_times: REPORT_TIMES.iter().copied().filter(|&t| t <= horizon).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::param("n_paths", "must be >= 1"));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::param("step", format!("must be > 0, got {}", self.step)));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::param("horizon", format!("must be > 0, got {}", self.horizon)));
        }
        if !(self.initial_wealth.is_finite() && self.initial_wealth > 0.0) {
            return Err(Error::param("initial_wealth", "must be > 0"));
        }
        if !(self.initial_spd.is_finite() && self.initial_spd > 0.0) {
            return Err(Error::param("initial_spd", "must be > 0"));
        }
        if let Some(&t) = self
            .record_times
            .iter()
            .find(|&&t| !(t >= 0.0 && t <= self.horizon + 1e-12))
        {
            return Err(Error::param("record_times", format!("{t} outside [0, horizon]")));
        }
        Ok(())
    }
}

/// Per-path values at the record times, stored path-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMatrix {
    n_times: usize,
    data: Vec<f64>,
}

impl PathMatrix {
    pub fn n_paths(&self) -> usize {
        self.data.len() / self.n_times
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn path(&self, p: usize) -> &[f64] {
        &self.data[p * self.n_times..(p + 1) * self.n_times]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(j).step_by(self.n_times).copied()
    }

    /// Sample mean and standard error of column `j`.
    pub fn mean_se(&self, j: usize) -> (f64, f64) {
        mean_se(self.column(j))
    }

    /// Rows are paths, columns are record times.
    pub fn to_csv(&self, times: &[f64]) -> String {
        let mut out = times
            .iter()
            .map(|&t| format!("t={}", fmt_sig(t, 12)))
            .collect::<Vec<_>>()
            .join(",");
        out.push('\n');
        for p in 0..self.n_paths() {
            let row: Vec<String> = self.path(p).iter().map(|&v| fmt_sig(v, 12)).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Mean and standard error of the mean (sample standard deviation / √n).
/// An infinite mean is returned with a NaN standard error.
pub fn mean_se(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let values: Vec<f64> = values.collect();
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 || !mean.is_finite() {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub t: f64,
    pub mean_income: f64,
    pub se_income: f64,
    pub mean_y: f64,
    pub se_y: f64,
    pub mean_zeta_x: f64,
    pub se_zeta_x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub times: Vec<f64>,
    /// Step actually used (horizon divided into equal steps).
    pub step: f64,
    pub n_steps: usize,
    pub seed: u64,
    pub initial_y: f64,
    pub wealth: PathMatrix,
    pub spd: PathMatrix,
    pub y: PathMatrix,
    /// Discounted income `e^{−rt} c_t X_t`.
    pub income: PathMatrix,
    /// Brownian motion `W_t`.
    pub brownian: PathMatrix,
    /// Per-path realised objective when a preference schedule was supplied.
    pub objective: Option<Vec<f64>>,
}

impl SimulationResult {
    pub fn n_paths(&self) -> usize {
        self.wealth.n_paths()
    }

    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 0.5 * self.step)
    }

    pub fn zeta_x(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.wealth.column(j).zip(self.spd.column(j)).map(|(x, z)| x * z)
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        (0..self.times.len())
            .map(|j| {
                let (mean_income, se_income) = self.income.mean_se(j);
                let (mean_y, se_y) = self.y.mean_se(j);
                let (mean_zeta_x, se_zeta_x) = mean_se(self.zeta_x(j));
                SummaryRow {
                    t: self.times[j],
                    mean_income,
                    se_income,
                    mean_y,
                    se_y,
                    mean_zeta_x,
                    se_zeta_x,
                }
            })
            .collect()
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("t,mean_income,se_income,mean_Y,se_Y,mean_zetaX,se_zetaX\n");
        for r in self.summary() {
            let cells = [
                r.t,
                r.mean_income,
                r.se_income,
                r.mean_y,
                r.se_y,
                r.mean_zeta_x,
                r.se_zeta_x,
            ];
            out.push_str(&cells.iter().map(|&v| fmt_sig(v, 12)).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    /// Monte Carlo estimate of the objective and its standard error.
    pub fn objective_estimate(&self) -> Option<(f64, f64)> {
        self.objective.as_ref().map(|o| mean_se(o.iter().copied()))
    }
}

/// Mean and standard error of `a − b` over paired paths.
pub fn paired_difference(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len(), "paired runs need equal path counts");
    mean_se(a.iter().zip(b).map(|(x, y)| x - y))
}

/// Deterministic per-step coefficients shared by all paths.
struct StepPlan {
    dt: f64,
    n_steps: usize,
    /// Coefficients for the step ending at grid point `k + 1`.
    steps: Vec<StepCoefficients>,
    log_z_vol: f64,
    /// `c + λ(1−α)` at grid points.
    flow: Vec<f64>,
    /// `e^{−rt} c_t` at grid points.
    income: Vec<f64>,
    utility: Option<UtilityPlan>,
    record_index: Vec<usize>,
}

#[derive(Clone, Copy)]
struct StepCoefficients {
    x_drift: f64,
    x_vol: f64,
    z_drift: f64,
    flow: f64,
    utility: f64,
}

/// Utility flow at grid point `k` is `coefficient[k] · X^γ`.
struct UtilityPlan {
    gamma: f64,
    coefficient: Vec<f64>,
}

impl StepPlan {
    fn build<C: ControlLaw + ?Sized>(
        config: &SimulationConfig,
        controls: &C,
        market: &MarketParams,
        mortality: &GompertzMakehamParams,
        preferences: Option<&PreferenceSchedule>,
    ) -> Result<Self> {
        let n_steps = (config.horizon / config.step - 1e-9).ceil().max(1.0) as usize;
        let dt = config.horizon / n_steps as f64;
        let times: Vec<f64> = (0..=n_steps).map(|k| k as f64 * dt).collect();
        let sqrt_dt = dt.sqrt();
        let theta = market.price_of_risk();
        let gl = gauss_legendre_16();

        let mut log_x_drift = Vec::with_capacity(n_steps);
        let mut log_x_vol = Vec::with_capacity(n_steps);
        let mut log_z_drift = Vec::with_capacity(n_steps);
        for k in 0..n_steps {
            let (a, b) = (times[k], times[k + 1]);
            let pi_bar = gl.integrate(|u| controls.equity(u), a, b) / dt;
            let c_int = gl.integrate(|u| controls.consumption(u), a, b);
            let tontine_int = gl.integrate(|u| controls.tontine(u) * mortality.hazard(u), a, b);
            let hazard_int = mortality.cumulative_hazard(b) - mortality.cumulative_hazard(a);
            let s = market.sigma * pi_bar;
            log_x_drift.push(
                (market.r + (market.mu - market.r) * pi_bar - 0.5 * s * s) * dt - c_int + tontine_int,
            );
            log_x_vol.push(s * sqrt_dt);
            log_z_drift.push(-(market.r + 0.5 * theta * theta) * dt - hazard_int);
        }

        let mut flow = Vec::with_capacity(n_steps + 1);
        let mut income = Vec::with_capacity(n_steps + 1);
        for &t in &times {
            let c = controls.consumption(t);
            let a = controls.tontine(t);
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::param("consumption", format!("c={c} at t={t} must be finite and >= 0")));
            }
            if a.is_nan() || a > 1.0 {
                return Err(Error::param("tontine", format!("alpha={a} at t={t} must be <= 1")));
            }
            flow.push(c + mortality.hazard(t) * (1.0 - a));
            income.push((-market.r * t).exp() * c);
        }

        let utility = match preferences {
            None => None,
            Some(pref) => {
                let gamma = pref.gamma();
                let mut coefficient = Vec::with_capacity(n_steps + 1);
                for &t in &times {
                    let base = (-pref.rho() * t - mortality.cumulative_hazard(t)).exp() / gamma;
                    let mut k = base * controls.consumption(t).powf(gamma);
                    let b = pref.bequest_weight(t, mortality)?;
                    if b != 0.0 {
                        k += base * mortality.hazard(t) * b * (1.0 - controls.tontine(t)).powf(gamma);
                    }
                    coefficient.push(k);
                }
                let plan = UtilityPlan { gamma, coefficient };
                Some(plan)
            }
        };

        let mut record_index: Vec<usize> = std::iter::once(0)
            .chain(config.record_times.iter().map(|&t| (t / dt).round() as usize))
            .map(|k| k.min(n_steps))
            .collect();
        record_index.sort_unstable();
        record_index.dedup();

        let steps = (0..n_steps)
            .map(|k| StepCoefficients {
                x_drift: log_x_drift[k],
                x_vol: log_x_vol[k],
                z_drift: log_z_drift[k],
                flow: flow[k + 1],
                utility: utility.as_ref().map_or(0.0, |u| u.coefficient[k + 1]),
            })
            .collect();
        Ok(Self {
            dt,
            n_steps,
            steps,
            log_z_vol: -theta * sqrt_dt,
            flow,
            income,
            utility,
            record_index,
        })
    }
}

impl UtilityPlan {
    #[inline]
    fn flow(&self, k: usize, log_x: f64) -> f64 {
        self.coefficient[k] * (self.gamma * log_x).exp()
    }
}

struct PathOutput {
    wealth: Vec<f64>,
    spd: Vec<f64>,
    y: Vec<f64>,
    income: Vec<f64>,
    brownian: Vec<f64>,
    objective: f64,
}

fn run_path(plan: &StepPlan, config: &SimulationConfig, path: usize) -> Result<PathOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(path as u64);
    let n_rec = plan.record_index.len();
    let mut out = PathOutput {
        wealth: Vec::with_capacity(n_rec),
        spd: Vec::with_capacity(n_rec),
        y: Vec::with_capacity(n_rec),
        income: Vec::with_capacity(n_rec),
        brownian: Vec::with_capacity(n_rec),
        objective: 0.0,
    };

    let sqrt_dt = plan.dt.sqrt();
    let mut log_x = config.initial_wealth.ln();
    let mut log_z = config.initial_spd.ln();
    let mut w = 0.0;
    let mut consumed = 0.0;
    let mut prev_flow = config.initial_spd * config.initial_wealth * plan.flow[0];
    let mut prev_util = plan.utility.as_ref().map_or(0.0, |u| u.flow(0, log_x));
    let mut next_rec = 0;

    let record = |k: usize, log_x: f64, log_z: f64, w: f64, consumed: f64, out: &mut PathOutput| {
        let x = log_x.exp();
        let z = log_z.exp();
        out.wealth.push(x);
        out.spd.push(z);
        out.y.push(z * x + consumed);
        out.income.push(plan.income[k] * x);
        out.brownian.push(w);
    };

    if plan.record_index[0] == 0 {
        record(0, log_x, log_z, w, consumed, &mut out);
        next_rec = 1;
    }
    let utility = plan.utility.as_ref();
    let half_dt = 0.5 * plan.dt;
    let z_vol = plan.log_z_vol;
    let gamma = utility.map_or(0.0, |u| u.gamma);
    for (k, step) in plan.steps.iter().enumerate() {
        let z: f64 = StandardNormal.sample(&mut rng);
        w += sqrt_dt * z;
        log_x += step.x_drift + step.x_vol * z;
        log_z += step.z_drift + z_vol * z;
        if !(log_x.is_finite() && log_z.is_finite()) {
            return Err(Error::NonFinite {
                path,
                step: k,
                t: (k + 1) as f64 * plan.dt,
            });
        }
        let flow = (log_x + log_z).exp() * step.flow;
        consumed += half_dt * (prev_flow + flow);
        prev_flow = flow;
        if utility.is_some() {
            let util = step.utility * (gamma * log_x).exp();
            out.objective += half_dt * (prev_util + util);
            prev_util = util;
        }
        if next_rec < plan.record_index.len() && plan.record_index[next_rec] == k + 1 {
            record(k + 1, log_x, log_z, w, consumed, &mut out);
            next_rec += 1;
        }
    }
    Ok(out)
}

/// Simulates wealth, state-price density and `Y` under `controls`.
/// Supplying `preferences` also accumulates the realised objective per path.
pub fn simulate_wealth<C: ControlLaw + ?Sized>(
    config: &SimulationConfig,
    controls: &C,
    market: &MarketParams,
    mortality: &GompertzMakehamParams,
    preferences: Option<&PreferenceSchedule>,
) -> Result<SimulationResult> {
    config.validate()?;
    if config.horizon > controls.defined_until() + 1e-12 {
        return Err(Error::ControlsUndefined {
            t: config.horizon,
            end: controls.defined_until(),
        });
    }
    let plan = StepPlan::build(config, controls, market, mortality, preferences)?;

    let n_tasks = config.n_paths.div_ceil(PATHS_PER_TASK);
    let chunks: Vec<Vec<PathOutput>> = (0..n_tasks)
        .into_par_iter()
        .map(|task| {
            let lo = task * PATHS_PER_TASK;
            let hi = (lo + PATHS_PER_TASK).min(config.n_paths);
            (lo..hi).map(|p| run_path(&plan, config, p)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let n_times = plan.record_index.len();
    let cap = config.n_paths * n_times;
    let mut wealth = Vec::with_capacity(cap);
    let mut spd = Vec::with_capacity(cap);
    let mut y = Vec::with_capacity(cap);
    let mut income = Vec::with_capacity(cap);
    let mut brownian = Vec::with_capacity(cap);
    let mut objective = Vec::with_capacity(config.n_paths);
    for p in chunks.into_iter().flatten() {
        wealth.extend(p.wealth);
        spd.extend(p.spd);
        y.extend(p.y);
        income.extend(p.income);
        brownian.extend(p.brownian);
        objective.push(p.objective);
    }
    let matrix = |data| PathMatrix { n_times, data };
    Ok(SimulationResult {
        times: plan.record_index.iter().map(|&k| k as f64 * plan.dt).collect(),
        step: plan.dt,
        n_steps: plan.n_steps,
        seed: config.seed,
        initial_y: config.initial_spd * config.initial_wealth,
        wealth: matrix(wealth),
        spd: matrix(spd),
        y: matrix(y),
        income: matrix(income),
        brownian: matrix(brownian),
        objective: plan.utility.is_some().then_some(objective),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCheck {
    pub s: f64,
    pub t: f64,
    pub mean_s: f64,
    pub mean_t: f64,
    /// Standard error of the paired difference `Y_t − Y_s`.
    pub se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleCheck {
    pub t: f64,
    pub mean: f64,
    pub y0: f64,
    pub se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport {
    pub supermartingale: Vec<PairCheck>,
    /// Filled only when the controls are the candidate optimum.
    pub martingale: Vec<MartingaleCheck>,
}

impl MartingaleReport {
    pub fn passed(&self) -> bool {
        self.supermartingale.iter().all(|c| c.pass) && self.martingale.iter().all(|c| c.pass)
    }
}

/// Checks `mean(Y_t) ≤ mean(Y_s) + 3·SE` for every pair of record times and,
/// for candidate controls, `|mean(Y_t) − Y_0| ≤ 3·SE`.
pub fn check_supermartingale(result: &SimulationResult, candidate: bool) -> MartingaleReport {
    let n = result.times.len();
    let mut supermartingale = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (mean_s, _) = result.y.mean_se(i);
            let (mean_t, _) = result.y.mean_se(j);
            let (_, se) = mean_se(result.y.column(j).zip(result.y.column(i)).map(|(b, a)| b - a));
            supermartingale.push(PairCheck {
                s: result.times[i],
                t: result.times[j],
                mean_s,
                mean_t,
                se,
                pass: mean_t <= mean_s + 3.0 * se,
            });
        }
    }
    let martingale = if candidate {
        (1..n)
            .map(|j| {
                let (mean, se) = result.y.mean_se(j);
                MartingaleCheck {
                    t: result.times[j],
                    mean,
                    y0: result.initial_y,
                    se,
                    pass: (mean - result.initial_y).abs() <= 3.0 * se,
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    MartingaleReport {
        supermartingale,
        martingale,
    }
}

/// `φ_0 = S_0/(c*_0)^{1−γ} = D(0)^{1−γ}`.
pub fn initial_spd(problem: &OptimalControls) -> Result<f64> {
    let c0 = problem.consumption(0.0)?;
    Ok(c0.powf(problem.gamma() - 1.0))
}

/// `E[ζ_t X*_t] = φ_0 X_0 exp(−∫_0^t c*_u + λ_u(1−α*_u) du) = φ_0 X_0 D(t)/D(0)`.
pub fn first_moment_spd_wealth(problem: &OptimalControls, t: f64, initial_wealth: f64) -> Result<f64> {
    let phi0 = initial_spd(problem)?;
    let ratio = problem.denominator(t)? / problem.denominator(0.0)?;
    Ok(phi0 * initial_wealth * ratio)
}

/// `(φ_0 X_0)² exp(∫_0^t (σπ* − (μ−r)/σ)² du)`.
pub fn second_moment_bound(problem: &OptimalControls, t: f64, initial_wealth: f64) -> Result<f64> {
    let phi0 = initial_spd(problem)?;
    let m = problem.market();
    let loading = m.sigma * problem.pi_star() - m.price_of_risk();
    Ok((phi0 * initial_wealth).powi(2) * (loading * loading * t).exp())
}

/// Cross-sectional regression slope of `(Y_{t1} − Y_{t0})/(ζX)_{t0}` on
/// `W_{t1} − W_{t0}`. For the candidate controls this approaches
/// `σπ* − (μ−r)/σ` as the interval shrinks.
pub fn loading_regression(result: &SimulationResult, j0: usize, j1: usize) -> f64 {
    let zx0: Vec<f64> = result.zeta_x(j0).collect();
    let dy: Vec<f64> = result
        .y
        .column(j1)
        .zip(result.y.column(j0))
        .zip(&zx0)
        .map(|((b, a), s)| (b - a) / s)
        .collect();
    let dw: Vec<f64> = result
        .brownian
        .column(j1)
        .zip(result.brownian.column(j0))
        .map(|(b, a)| b - a)
        .collect();
    let n = dy.len() as f64;
    let mx = dw.iter().sum::<f64>() / n;
    let my = dy.iter().sum::<f64>() / n;
    let sxy: f64 = dw.iter().zip(&dy).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = dw.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn market() -> MarketParams {
        MarketParams::default()
    }

    #[test]
    fn bank_account_is_exact() {
        let mort = GompertzMakehamParams::new(0.0, 0.0, 0.0).unwrap();
        let controls = ConstantControls {
            equity: 0.0,
            consumption: 0.0,
            tontine: 0.0,
            until: 10.0,
        };
        let mut cfg = SimulationConfig::new(8, 10.0, 1);
        cfg.initial_wealth = 1.0;
        let res = simulate_wealth(&cfg, &controls, &market(), &mort, None).unwrap();
        for p in 0..8 {
            for (j, &t) in res.times.iter().enumerate() {
                let x = res.wealth.path(p)[j];
                assert!((x / (0.03 * t).exp() - 1.0).abs() < 1e-12, "t={t} x={x}");
            }
        }
    }

    #[test]
    fn horizon_beyond_controls_is_an_error() {
        let controls = ConstantControls {
            equity: 0.5,
            consumption: 0.05,
            tontine: 1.0,
            until: 5.0,
        };
        let cfg = SimulationConfig::new(4, 6.0, 1);
        let err = simulate_wealth(&cfg, &controls, &market(), &GompertzMakehamParams::uk_2019(), None);
        assert!(matches!(err, Err(Error::ControlsUndefined { .. })));
    }

    #[test]
    fn invalid_config_rejected() {
        let controls = ConstantControls {
            equity: 0.5,
            consumption: 0.05,
            tontine: 1.0,
            until: 5.0,
        };
        let mort = GompertzMakehamParams::uk_2019();
        let mut cfg = SimulationConfig::new(0, 1.0, 1);
        assert!(simulate_wealth(&cfg, &controls, &market(), &mort, None).is_err());
        cfg.n_paths = 2;
        cfg.step = 0.0;
        assert!(simulate_wealth(&cfg, &controls, &market(), &mort, None).is_err());
    }

    #[test]
    fn tontine_above_one_rejected() {
        let controls = ConstantControls {
            equity: 0.5,
            consumption: 0.05,
            tontine: 1.5,
            until: 5.0,
        };
        let cfg = SimulationConfig::new(2, 1.0, 1);
        assert!(simulate_wealth(&cfg, &controls, &market(), &GompertzMakehamParams::uk_2019(), None).is_err());
    }

    #[test]
    fn same_seed_same_summary() {
        let controls = ConstantControls {
            equity: 0.6,
            consumption: 0.05,
            tontine: 0.5,
            until: 5.0,
        };
        let mort = GompertzMakehamParams::uk_2019();
        let mut cfg = SimulationConfig::new(1500, 5.0, 99);
        cfg.step = 1.0 / 52.0;
        let a = simulate_wealth(&cfg, &controls, &market(), &mort, None).unwrap();
        let b = simulate_wealth(&cfg, &controls, &market(), &mort, None).unwrap();
        assert_eq!(a.summary_csv(), b.summary_csv());
        cfg.seed = 100;
        let c = simulate_wealth(&cfg, &controls, &market(), &mort, None).unwrap();
        assert_ne!(a.summary_csv(), c.summary_csv());
    }

    #[test]
    fn perturbed_controls_cap_allocation() {
        let base = ConstantControls {
            equity: 0.4,
            consumption: 0.05,
            tontine: 0.9,
            until: 3.0,
        };
        let p = PerturbedControls::new(&base, 1.0, vec![1.0, 1.2, 0.8], vec![1.2, 1.0, 0.9]);
        assert_eq!(p.tontine(0.5), 1.0);
        assert!((p.consumption(1.5) - 0.06).abs() < 1e-15);
        assert!((p.tontine(2.5) - 0.81).abs() < 1e-15);
        assert!((p.consumption(7.0) - 0.04).abs() < 1e-15);
        let s = PerturbedControls::scaled_consumption(&base, 1.2);
        assert!((s.consumption(2.9) - 0.06).abs() < 1e-15);
    }

    #[test]
    fn infinite_values_give_infinite_mean() {
        let (m, se) = mean_se([1.0, f64::INFINITY, 2.0].into_iter());
        assert_eq!(m, f64::INFINITY);
        assert!(se.is_nan());
    }

    #[test]
    fn mean_se_matches_direct_formula() {
        let v = [1.0, 2.0, 4.0, 7.0];
        let (m, se) = mean_se(v.iter().copied());
        assert!((m - 3.5).abs() < 1e-15);
        let var = v.iter().map(|x| (x - 3.5f64).powi(2)).sum::<f64>() / 3.0;
        assert!((se - (var / 4.0).sqrt()).abs() < 1e-15);
    }
}
