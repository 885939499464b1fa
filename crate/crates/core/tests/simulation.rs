use tontine_core::analytics::{expected_discounted_income, objective_value_closed_form, FigureSetup};
use tontine_core::simulate::{
    check_supermartingale, first_moment_spd_wealth, initial_spd, loading_regression, mean_se, paired_difference,
    second_moment_bound, simulate_wealth, ConstantControls, ControlLaw, PerturbedControls, SimulationConfig,
};
use tontine_core::{BequestVariant, ControlSchedule, GompertzMakehamParams, MarketParams, OptimalControls};

fn candidate() -> (FigureSetup, OptimalControls, ControlSchedule) {
    let setup = FigureSetup::default();
    let p = setup
        .problem(
            -3.0,
            BequestVariant::ScaledTrimmed {
                kappa: None,
                horizon_years: 20.0,
            },
        )
        .unwrap();
    let cs = p.tabulate(1.0 / 52.0).unwrap();
    (setup, p, cs)
}

fn config(p: &OptimalControls, n_paths: usize, horizon: f64, seed: u64) -> SimulationConfig {
    let mut cfg = SimulationConfig::new(n_paths, horizon, seed);
    cfg.initial_spd = initial_spd(p).unwrap();
    cfg
}

/// Smooth deterministic controls used for the exact-step check.
struct Smooth;

impl ControlLaw for Smooth {
    fn equity(&self, _t: f64) -> f64 {
        0.0
    }
    fn consumption(&self, t: f64) -> f64 {
        0.04 + 0.002 * t
    }
    fn tontine(&self, t: f64) -> f64 {
        (0.1 * t).sin()
    }
    fn defined_until(&self) -> f64 {
        30.0
    }
}

#[test]
fn zero_volatility_matches_the_ode() {
    let m = MarketParams::default();
    let mort = GompertzMakehamParams::uk_2019();
    let mut cfg = SimulationConfig::new(3, 30.0, 5);
    cfg.step = 1.0 / 12.0;
    cfg.record_times = (1..=30).map(f64::from).collect();
    let res = simulate_wealth(&cfg, &Smooth, &m, &mort, None).unwrap();
    for (j, &t) in res.times.iter().enumerate() {
        // ∫_0^t r − c + αλ du in closed form.
        let (a1, a2, a3) = (mort.a1, mort.a2, mort.a3);
        let c_int = 0.04 * t + 0.001 * t * t;
        // ∫ sin(0.1u)(a1 e^{a2 u} + a3) du
        let k = 0.1;
        let e = |u: f64| a1 * (a2 * u).exp() * (a2 * (k * u).sin() - k * (k * u).cos()) / (a2 * a2 + k * k);
        let tontine = e(t) - e(0.0) + a3 * (1.0 - (k * t).cos()) / k;
        let exact = cfg.initial_wealth * (m.r * t - c_int + tontine).exp();
        for p in 0..3 {
            let x = res.wealth.path(p)[j];
            assert!((x / exact - 1.0).abs() < 1e-12, "t={t}: {x} vs {exact}");
        }
    }
}

#[test]
fn income_and_first_moment_match_closed_forms() {
    let (_, p, cs) = candidate();
    let cfg = config(&p, 20_000, 20.0, 11);
    let res = simulate_wealth(&cfg, &cs, p.market(), p.mortality(), None).unwrap();
    for t in [5.0, 10.0, 15.0, 20.0] {
        let j = res.time_index(t).unwrap();
        let (mean, se) = res.income.mean_se(j);
        let closed = expected_discounted_income(&p, t, cfg.initial_wealth).unwrap();
        assert!((mean - closed).abs() <= 3.0 * se, "income t={t}: {mean} ± {se} vs {closed}");

        let (mzx, sezx) = mean_se(res.zeta_x(j));
        let first = first_moment_spd_wealth(&p, t, cfg.initial_wealth).unwrap();
        assert!((mzx - first).abs() <= 3.0 * sezx, "zetaX t={t}: {mzx} ± {sezx} vs {first}");

        let sq: Vec<f64> = res.zeta_x(j).map(|v| v * v).collect();
        let (m2, se2) = mean_se(sq.into_iter());
        let bound = second_moment_bound(&p, t, cfg.initial_wealth).unwrap();
        assert!(m2 <= bound * (1.0 + 5.0 * se2 / m2), "second moment t={t}");
    }
    let first0 = first_moment_spd_wealth(&p, 0.0, cfg.initial_wealth).unwrap();
    assert!((first0 / (cfg.initial_spd * cfg.initial_wealth) - 1.0).abs() < 1e-14);
    assert!(first_moment_spd_wealth(&p, 49.9, 1.0).unwrap() < 1e-6 * first0);
}

#[test]
fn candidate_y_is_a_martingale() {
    let (_, p, cs) = candidate();
    let cfg = config(&p, 20_000, 20.0, 12);
    let res = simulate_wealth(&cfg, &cs, p.market(), p.mortality(), None).unwrap();
    let report = check_supermartingale(&res, true);
    assert!(report.passed(), "{report:?}");
    assert_eq!(report.martingale.len(), 5);
}

#[test]
fn zero_consumption_without_bequest_keeps_zeta_x_constant() {
    let m = MarketParams::default();
    let mort = GompertzMakehamParams::uk_2019();
    let controls = ConstantControls {
        equity: 0.6,
        consumption: 0.0,
        tontine: 1.0,
        until: 20.0,
    };
    let res = simulate_wealth(&SimulationConfig::new(20_000, 20.0, 3), &controls, &m, &mort, None).unwrap();
    for j in 1..res.times.len() {
        let (mean, se) = mean_se(res.zeta_x(j));
        let (my, _) = res.y.mean_se(j);
        assert_eq!(mean, my);
        assert!((mean - res.initial_y).abs() <= 3.0 * se, "t={}", res.times[j]);
    }
}

#[test]
fn y_loading_matches_the_diffusion_coefficient() {
    let (_, p, cs) = candidate();
    let mut cfg = config(&p, 20_000, 1.0 + 1.0 / 252.0, 4);
    cfg.record_times = vec![1.0, 1.0 + 1.0 / 252.0];
    let res = simulate_wealth(&cfg, &cs, p.market(), p.mortality(), None).unwrap();
    let slope = loading_regression(&res, 1, 2);
    let m = p.market();
    let expect = m.sigma * p.pi_star() - m.price_of_risk();
    assert!((slope / expect - 1.0).abs() < 1e-2, "{slope} vs {expect}");
}

#[test]
fn monte_carlo_objective_matches_closed_form() {
    let (_, p, cs) = candidate();
    let horizon = cs.last_time();
    let mut cfg = config(&p, 20_000, horizon, 21);
    cfg.step = 1.0 / 52.0;
    let res = simulate_wealth(&cfg, &cs, p.market(), p.mortality(), Some(p.schedule())).unwrap();
    let (est, se) = res.objective_estimate().unwrap();
    let closed = objective_value_closed_form(&p, cfg.initial_wealth).unwrap();
    assert!((est - closed).abs() <= 3.0 * se, "{est} ± {se} vs {closed}");
}

#[test]
fn overconsumption_is_worse_under_common_random_numbers() {
    let (_, p, cs) = candidate();
    let horizon = cs.last_time();
    let mut cfg = config(&p, 20_000, horizon, 22);
    cfg.step = 1.0 / 52.0;
    let base = simulate_wealth(&cfg, &cs, p.market(), p.mortality(), Some(p.schedule())).unwrap();
    let more = PerturbedControls::scaled_consumption(&cs, 1.2);
    let alt = simulate_wealth(&cfg, &more, p.market(), p.mortality(), Some(p.schedule())).unwrap();
    assert!(check_supermartingale(&alt, false).passed());
    let (diff, se) = paired_difference(base.objective.as_ref().unwrap(), alt.objective.as_ref().unwrap());
    assert!(diff > 3.0 * se, "{diff} ± {se}");
}

#[test]
fn results_are_reproducible_and_parallel_safe() {
    let (_, p, cs) = candidate();
    let mut cfg = config(&p, 3_000, 10.0, 77);
    cfg.step = 1.0 / 52.0;
    let a = simulate_wealth(&cfg, &cs, p.market(), p.mortality(), None).unwrap();
    let b = simulate_wealth(&cfg, &cs, p.market(), p.mortality(), None).unwrap();
    assert_eq!(a.summary_csv(), b.summary_csv());
    assert_eq!(a.wealth, b.wealth);
    // Path 1000 of a larger run is the same path.
    let mut big = cfg.clone();
    big.n_paths = 5_000;
    let c = simulate_wealth(&big, &cs, p.market(), p.mortality(), None).unwrap();
    assert_eq!(a.wealth.path(1000), c.wealth.path(1000));
    assert!(a.summary_csv().starts_with("t,mean_income,se_income,mean_Y,se_Y,mean_zetaX,se_zetaX\n0,"));
}

#[test]
fn full_tontine_with_bequest_motive_has_minus_infinite_objective() {
    let (_, p, cs) = candidate();
    let all_in = PerturbedControls::new(&cs, 1.0, vec![1.0], vec![10.0]);
    let mut cfg = config(&p, 200, 5.0, 8);
    cfg.step = 1.0 / 52.0;
    let res = simulate_wealth(&cfg, &all_in, p.market(), p.mortality(), Some(p.schedule())).unwrap();
    let obj = res.objective.as_ref().unwrap();
    assert!(obj.iter().all(|v| *v == f64::NEG_INFINITY));
    let base = simulate_wealth(&cfg, &cs, p.market(), p.mortality(), Some(p.schedule())).unwrap();
    let (diff, _) = paired_difference(base.objective.as_ref().unwrap(), obj);
    assert_eq!(diff, f64::INFINITY);
}
