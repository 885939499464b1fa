use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tontine_core::analytics::{income_curve, uniform_grid, FigureSetup, FIGURE_GAMMAS};
use tontine_core::simulate::{initial_spd, simulate_wealth, SimulationConfig, REPORT_TIMES};
use tontine_core::{
    calibrate_kappa, fit_gompertz_makeham_with_limit, ControlSchedule, LifeTable, OptimalControls, PreferenceSchedule,
};

mod config;
mod error;
mod output;

use config::{Overrides, Settings};
use error::CliError;
use output::{emit, Staged};

/// Optimal investment, consumption and tontine allocation with
/// time-dependent bequest preferences.
#[derive(Debug, Parser)]
#[command(name = "tontine", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit Gompertz-Makeham parameters to a life table (`--life-table`).
    Fit,
    /// Calibrate the bequest scale so that the initial tontine allocation is zero.
    Calibrate,
    /// Tabulate the optimal controls.
    Schedule,
    /// Expected discounted income and bequest fraction over time.
    Income,
    /// Monte Carlo summary of wealth, income and the state-price process.
    Simulate,
    /// Write fig1.csv ... fig4.csv into the `--out` directory.
    Figures,
}

#[derive(Debug, Args)]
struct Flags {
    /// Flat key=value settings file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    gamma: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    mu: Option<String>,
    #[arg(long, global = true)]
    sigma: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    r: Option<String>,
    /// Subjective discount rate, or `auto` for r·gamma.
    #[arg(long, global = true, allow_hyphen_values = true)]
    rho: Option<String>,
    /// none, power, scaled_power, trimmed, scaled_trimmed or table.
    #[arg(long, global = true)]
    variant: Option<String>,
    /// Bequest scale, or `auto` to calibrate.
    #[arg(long, global = true)]
    kappa: Option<String>,
    /// Bequest horizon H in years for trimmed variants.
    #[arg(long, global = true)]
    horizon: Option<String>,
    #[arg(long, global = true)]
    base_age: Option<String>,
    /// Age at which integrals are truncated.
    #[arg(long, global = true)]
    limiting_age: Option<String>,
    #[arg(long, global = true)]
    grid_step: Option<String>,
    #[arg(long, global = true)]
    paths: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Output file, or output directory for `figures`.
    #[arg(long, global = true)]
    out: Option<String>,
    /// Life-table CSV (`age,survival` or `age,qx`).
    #[arg(long, global = true)]
    life_table: Option<String>,
    /// Bequest table CSV (`t,b`) for `--variant table`.
    #[arg(long, global = true)]
    table_path: Option<String>,
    /// Initial wealth.
    #[arg(long, global = true)]
    x0: Option<String>,
    #[arg(long, global = true)]
    a1: Option<String>,
    #[arg(long, global = true)]
    a2: Option<String>,
    #[arg(long, global = true)]
    a3: Option<String>,
    /// Simulation step in years.
    #[arg(long, global = true)]
    sim_step: Option<String>,
    /// Simulation horizon in years.
    #[arg(long, global = true)]
    sim_horizon: Option<String>,
    /// Directory for per-path dumps (one CSV per quantity).
    #[arg(long, global = true)]
    dump_paths: Option<String>,
}

impl Flags {
    fn overrides(&self) -> Result<Overrides, CliError> {
        let mut o = Overrides::default();
        let pairs = [
            ("gamma", &self.gamma),
            ("mu", &self.mu),
            ("sigma", &self.sigma),
            ("r", &self.r),
            ("rho", &self.rho),
            ("variant", &self.variant),
            ("kappa", &self.kappa),
            ("horizon_years", &self.horizon),
            ("base_age", &self.base_age),
            ("limiting_age", &self.limiting_age),
            ("grid_step", &self.grid_step),
            ("paths", &self.paths),
            ("seed", &self.seed),
            ("out", &self.out),
            ("life_table", &self.life_table),
            ("table_path", &self.table_path),
            ("x0", &self.x0),
            ("a1", &self.a1),
            ("a2", &self.a2),
            ("a3", &self.a3),
            ("sim_step", &self.sim_step),
            ("sim_horizon", &self.sim_horizon),
            ("dump_paths", &self.dump_paths),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                o.set(key, v.clone())?;
            }
        }
        Ok(o)
    }
}

fn settings(flags: &Flags) -> Result<Settings, CliError> {
    let file = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            Overrides::parse(&text)?
        }
        None => Overrides::default(),
    };
    file.merged(flags.overrides()?).resolve()
}

fn warn(message: impl std::fmt::Display) {
    eprintln!("WARN {message}");
}

/// The schedule with `kappa` filled in when it was left to calibration.
fn calibrated_schedule(s: &Settings) -> Result<PreferenceSchedule, CliError> {
    let schedule = s.schedule()?;
    if !schedule.variant().is_scaled() || schedule.variant().kappa().is_some() {
        return Ok(schedule);
    }
    let cal = calibrate_kappa(&schedule, &s.market()?, &s.mortality()?)?;
    for w in &cal.warnings {
        warn(w);
    }
    match cal.kappa {
        Some(k) if cal.feasible => Ok(schedule.with_kappa(k)?),
        _ => Err(tontine_core::Error::Uncalibrated(format!(
            "no positive kappa exists for gamma={} with the {} variant",
            schedule.gamma(),
            schedule.variant()
        ))
        .into()),
    }
}

fn problem(s: &Settings) -> Result<OptimalControls, CliError> {
    let p = OptimalControls::calibrated(&s.market()?, &s.mortality()?, &calibrated_schedule(s)?)?;
    for w in p.warnings() {
        warn(w);
    }
    Ok(p)
}

fn control_schedule(s: &Settings, p: &OptimalControls) -> Result<ControlSchedule, CliError> {
    Ok(p.tabulate(s.grid_step)?)
}

fn run_fit(s: &Settings) -> Result<(), CliError> {
    let path = s
        .life_table
        .as_ref()
        .ok_or_else(|| CliError::Usage("fit needs --life-table".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let table = LifeTable::parse_csv(&text)?;
    let fit = fit_gompertz_makeham_with_limit(&table, s.limiting_age_years())?;
    let csv = format!("{}\n{}\n", tontine_core::MortalityFit::csv_header(), fit.csv_row());
    emit(s.out.as_deref(), &csv)
}

fn run_calibrate(s: &Settings) -> Result<(), CliError> {
    let schedule = s.schedule()?;
    let cal = calibrate_kappa(&schedule, &s.market()?, &s.mortality()?)?;
    for w in &cal.warnings {
        warn(w);
    }
    let kappa = cal.kappa.map(|k| tontine_core::format::fmt_sig(k, 12)).unwrap_or_default();
    let csv = format!(
        "gamma,variant,kappa,residual,feasible\n{},{},{},{},{}\n",
        schedule.gamma(),
        schedule.variant(),
        kappa,
        tontine_core::format::fmt_sig(cal.residual, 12),
        cal.feasible
    );
    emit(s.out.as_deref(), &csv)
}

fn run_schedule(s: &Settings) -> Result<(), CliError> {
    let p = problem(s)?;
    let cs = control_schedule(s, &p)?;
    emit(s.out.as_deref(), &cs.to_csv(s.base_age))
}

fn run_income(s: &Settings) -> Result<(), CliError> {
    let p = problem(s)?;
    let grid = uniform_grid(s.grid_step, p.t_max())?;
    let curve = income_curve(&p, s.x0, &grid)?;
    emit(s.out.as_deref(), &curve.to_csv(s.base_age))
}

fn run_simulate(s: &Settings) -> Result<(), CliError> {
    let p = problem(s)?;
    let cs = control_schedule(s, &p)?;
    let mut cfg = SimulationConfig::new(s.paths, s.sim_horizon, s.seed);
    cfg.step = s.sim_step;
    cfg.initial_wealth = s.x0;
    cfg.initial_spd = initial_spd(&p)?;
    cfg.record_times = REPORT_TIMES.iter().copied().filter(|&t| t <= s.sim_horizon).collect();
    let res = simulate_wealth(&cfg, &cs, p.market(), p.mortality(), None)?;

    let mut staged = Staged::default();
    if let Some(dir) = &s.dump_paths {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for (name, m) in [
            ("wealth", &res.wealth),
            ("spd", &res.spd),
            ("y", &res.y),
            ("income", &res.income),
        ] {
            staged.add(&dir.join(format!("{name}.csv")), &m.to_csv(&res.times))?;
        }
    }
    let summary = res.summary_csv();
    match &s.out {
        Some(path) => staged.add(path, &summary)?,
        None => emit(None, &summary)?,
    }
    staged.commit()
}

fn run_figures(s: &Settings) -> Result<(), CliError> {
    let setup = FigureSetup {
        market: s.market()?,
        mortality: s.mortality()?,
        gammas: FIGURE_GAMMAS.to_vec(),
        horizon_years: s.horizon_years,
        base_age: s.base_age,
        grid_step: s.grid_step,
        initial_wealth: s.x0,
    };
    let dir = s.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let figures = [setup.fig1()?, setup.fig2()?, setup.fig3()?, setup.fig4()?];
    let mut staged = Staged::default();
    for (i, fig) in figures.iter().enumerate() {
        staged.add(&dir.join(format!("fig{}.csv", i + 1)), &fig.to_csv())?;
    }
    staged.commit()
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let s = settings(&cli.flags)?;
    match cli.command {
        Command::Fit => run_fit(&s),
        Command::Calibrate => run_calibrate(&s),
        Command::Schedule => run_schedule(&s),
        Command::Income => run_income(&s),
        Command::Simulate => run_simulate(&s),
        Command::Figures => run_figures(&s),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments");
            let first = first.trim_start_matches("error: ");
            eprintln!("{}", CliError::Usage(first.to_string()).line());
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::FAILURE
        }
    }
}

