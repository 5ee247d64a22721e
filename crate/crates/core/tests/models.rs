use chrono::NaiveDate;
use hourlasso_core::backtest::{select_pca_k, synth_panel, BacktestConfig, SynthPreset, SynthSpec};
use hourlasso_core::dataio::{demean, HourMeans, PricePanel, HOURS};
use hourlasso_core::estim::{multivar_yule_walker, ols, ArFit};
use hourlasso_core::models::{
    build_design, fit, fit_24ar, fit_expert, fit_lasso_model, fit_pca_var, fit_univariate_ar, Coefficient, Family,
    FittedForecaster, HourlyRegression, LagIndexSet, ModelBody, ModelConfig, ModelKind, RegressorLabel,
};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2011, 1, 2).unwrap()
}

fn lag(hour: usize, lag: usize) -> RegressorLabel {
    RegressorLabel::Lag { hour, lag }
}

fn normals(n: usize, sd: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, sd).unwrap();
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

/// Univariate AR recursion with the given `(lag, coefficient)` terms and a
/// burn-in of 2000 steps.
fn simulate_ar(terms: &[(usize, f64)], n: usize, seed: u64) -> Vec<f64> {
    let burn = 2000;
    let eps = normals(n + burn, 1.0, seed);
    let mut x = vec![0.0; n + burn];
    for t in 0..n + burn {
        x[t] = eps[t] + terms.iter().filter(|(k, _)| *k <= t).map(|(k, c)| c * x[t - k]).sum::<f64>();
    }
    x.split_off(burn)
}

fn white_panel(days: usize, mean: f64, sd: f64, seed: u64) -> PricePanel {
    synth_panel(&SynthSpec::white_noise(mean, sd), days, start(), seed).unwrap()
}

/// Squared one-step errors of `model` on the days `from..` of `panel`.
fn out_of_sample_sse(model: &FittedForecaster, panel: &PricePanel, from: usize) -> f64 {
    (from..panel.len())
        .map(|d| {
            let f = model.forecast_day(&panel.slice(0..d)).unwrap();
            (0..HOURS).map(|h| (panel.price(d, h) - f[h]).powi(2)).sum::<f64>()
        })
        .sum()
}

#[test]
fn design_columns_and_entries() {
    let panel = white_panel(60, 30.0, 3.0, 1);
    let (_, y) = demean(&panel, 0..60).unwrap();
    let idx = LagIndexSet::default();
    let plain = build_design(&y, 5, &idx, None).unwrap();
    assert_eq!(plain.x.ncols(), 220);
    assert_eq!(plain.x.nrows(), 60 - 36);
    let weekdays: Vec<usize> = (0..60).map(|d| panel.weekday(d)).collect();
    let wd = build_design(&y, 5, &idx, Some(&weekdays)).unwrap();
    assert_eq!(wd.x.ncols(), 227);

    // Column order: same-hour lags, other hours ascending, then Sun..Sat.
    assert_eq!(plain.labels[0], lag(5, 1));
    assert_eq!(plain.labels[35], lag(5, 36));
    assert_eq!(plain.labels[36], lag(0, 1));
    assert_eq!(plain.labels[36 + 8 * 5], lag(6, 1));
    assert_eq!(plain.labels[219], lag(23, 8));
    assert_eq!(wd.labels[220], RegressorLabel::Weekday(0));
    assert_eq!(wd.labels[226], RegressorLabel::Weekday(6));

    let col = plain.labels.iter().position(|l| *l == lag(23, 1)).unwrap();
    for i in 0..plain.x.nrows() {
        let d = 36 + i;
        assert_eq!(plain.x[(i, col)], y[d - 1][23]);
        assert_eq!(plain.y[i], y[d][5]);
        assert_eq!(wd.x[(i, 220 + panel.weekday(d))], 1.0);
    }
    assert!(build_design(&y[..36], 0, &idx, None).is_err());
}

#[test]
fn labels_and_families_round_trip() {
    for h in 0..HOURS {
        for label in LagIndexSet::default().labels(h) {
            assert_eq!(label.to_string().parse::<RegressorLabel>().unwrap(), label);
        }
    }
    for k in 0..7 {
        let label = RegressorLabel::Weekday(k);
        assert_eq!(label.to_string().parse::<RegressorLabel>().unwrap(), label);
    }
    assert_eq!(lag(23, 1).to_string(), "23@1");
    assert!("24@1".parse::<RegressorLabel>().is_err());
    assert!("3@0".parse::<RegressorLabel>().is_err());

    let names: Vec<String> = Family::all().iter().map(Family::name).collect();
    assert_eq!(
        names,
        ["lasso", "lasso-wd", "24d.AR", "24d.AR-wd", "exp.AR", "exp.AR-wd", "AR(p)", "AR(p)-wd", "PCA*", "PCA*-wd"]
    );
    for f in Family::all() {
        assert_eq!(f.name().parse::<Family>().unwrap(), f);
    }
    assert!("ridge".parse::<Family>().is_err());
}

fn regression_model(hours: Vec<HourlyRegression>, mu: HourMeans, weekdays: bool) -> FittedForecaster {
    FittedForecaster {
        family: Family::new(ModelKind::Lasso, weekdays),
        window_start: start(),
        window_end: start(),
        mu,
        body: ModelBody::Regression { hours },
    }
}

#[test]
fn forecast_definitions() {
    let panel = white_panel(40, 50.0, 4.0, 2);
    let mu = HourMeans(std::array::from_fn(|h| 30.0 + h as f64));
    let zero: Vec<HourlyRegression> = (0..HOURS).map(|h| HourlyRegression::from_centered(h, &mu, vec![], 220)).collect();
    assert_eq!(regression_model(zero.clone(), mu, false).forecast_day(&panel).unwrap(), mu.0);

    // Weekday offsets on top of μ.
    let next = panel.last_date().unwrap().succ_opt().unwrap();
    let wd = hourlasso_core::dataio::weekday_of(next);
    let with_offset: Vec<HourlyRegression> = (0..HOURS)
        .map(|h| {
            let c = Coefficient { label: RegressorLabel::Weekday(wd), value: 2.5, standardized: None };
            HourlyRegression::from_centered(h, &mu, vec![c], 227)
        })
        .collect();
    let f = regression_model(with_offset, mu, true).forecast_day(&panel).unwrap();
    assert!(f.iter().zip(&mu.0).all(|(a, b)| (a - b - 2.5).abs() < 1e-12));

    let mut hours = zero;
    hours[0] =
        HourlyRegression::from_centered(0, &mu, vec![Coefficient { label: lag(23, 1), value: 1.0, standardized: None }], 220);
    let f = regression_model(hours, mu, false).forecast_day(&panel).unwrap();
    let last = panel.len() - 1;
    assert!((f[0] - (mu.0[0] + panel.price(last, 23) - mu.0[23])).abs() < 1e-12);

    // AR(1) with φ = 0.5: deviations halve every hour.
    let c = 40.0;
    let mut rows = panel.rows().to_vec();
    rows.last_mut().unwrap()[23] = c + 8.0;
    let history = PricePanel::from_rows(start(), rows).unwrap();
    let model = FittedForecaster {
        family: Family::new(ModelKind::UnivariateAr, false),
        window_start: start(),
        window_end: start(),
        mu,
        body: ModelBody::UnivariateAr {
            ar: ArFit { order: 1, phi: vec![0.5], intercept: c, innovation_variance: 1.0 },
            weekday_levels: None,
        },
    };
    let f = model.forecast_day(&history).unwrap();
    for (j, v) in f.iter().enumerate() {
        assert!((v - c - 8.0 * 0.5f64.powi(j as i32 + 1)).abs() < 1e-12);
    }
    assert!(model.forecast_day(&history.slice(0..0)).is_err());
}

#[test]
fn lasso_on_white_noise_is_sparse() {
    let panel = white_panel(300, 40.0, 5.0, 3);
    let model = fit_lasso_model(&panel, false, &ModelConfig::default()).unwrap();
    let ModelBody::Regression { hours } = &model.body else { panic!() };
    let avg = hours.iter().map(|r| r.coefficients.len()).sum::<usize>() as f64 / HOURS as f64;
    assert!(avg <= 2.0, "average support {avg}");
    assert!(hours.iter().flat_map(|r| &r.coefficients).all(|c| c.value.is_finite()));
}

#[test]
fn weekday_dummies_capture_sunday_effect() {
    let spec = SynthSpec { weekday_offsets: [10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], ..SynthSpec::white_noise(40.0, 2.0) };
    let panel = synth_panel(&spec, 400, start(), 4).unwrap();
    let window = panel.slice(0..250);
    let cfg = ModelConfig::default();
    let plain = fit_lasso_model(&window, false, &cfg).unwrap();
    let wd = fit_lasso_model(&window, true, &cfg).unwrap();
    // Judged on held-out days: BIC-selected fits can push in-sample RSS below the noise floor.
    let (a, b) = (out_of_sample_sse(&plain, &panel, 250), out_of_sample_sse(&wd, &panel, 250));
    assert!(a > b, "weekday-free SSE {a} vs weekday SSE {b}");
    let ModelBody::Regression { hours } = &wd.body else { panic!() };
    let with_sun = hours.iter().filter(|r| r.coefficients.iter().any(|c| c.label == RegressorLabel::Weekday(0))).count();
    assert!(with_sun >= 20, "Sun selected in {with_sun} of 24 hours");
}

#[test]
fn hourly_ar_recovers_first_coefficient() {
    let panel = synth_panel(&SynthSpec::diagonal(20.0, 0.7, 1.0), 2000, start(), 5).unwrap();
    let model = fit_24ar(&panel, false, &ModelConfig::default()).unwrap();
    let ModelBody::HourlyAr { hours } = &model.body else { panic!() };
    for m in hours {
        assert!(m.ar.order >= 1 && (m.ar.phi[0] - 0.7).abs() < 0.05, "hour {}: {:?}", m.h, m.ar.phi);
    }
}

#[test]
fn hourly_ar_on_white_noise_picks_order_zero() {
    let panel = white_panel(1000, 30.0, 2.0, 6);
    let model = fit_24ar(&panel, false, &ModelConfig::default()).unwrap();
    let ModelBody::HourlyAr { hours } = &model.body else { panic!() };
    // AIC keeps a positive chance of overfitting on white noise, roughly 0.3 per hour.
    let zeros = hours.iter().filter(|m| m.ar.order == 0).count();
    assert!(zeros >= 10, "order 0 in {zeros} of 24 hours");
}

#[test]
fn two_step_weekday_levels() {
    let offsets = [-6.0, 1.0, 2.0, 3.0, 2.0, 1.0, -3.0];
    let sd = 2.0;
    let spec = SynthSpec { weekday_offsets: offsets, ..SynthSpec::white_noise(40.0, sd) };
    let panel = synth_panel(&spec, 700, start(), 7).unwrap();
    let model = fit_24ar(&panel, true, &ModelConfig::default()).unwrap();
    let ModelBody::HourlyAr { hours } = &model.body else { panic!() };
    let zeros = hours.iter().filter(|m| m.ar.order == 0).count();
    assert!(zeros >= 10, "order 0 in {zeros} of 24 hours");
    let per_weekday: f64 = 100.0;
    let se = sd / per_weekday.sqrt();
    for m in hours {
        let levels = m.weekday_levels.unwrap();
        for k in 0..7 {
            assert!((levels[k] - 40.0 - offsets[k]).abs() <= 4.0 * se, "hour {} weekday {k}: {}", m.h, levels[k]);
        }
    }
    // Two standard errors hold for the bulk of the 168 levels.
    let within: usize = hours
        .iter()
        .map(|m| {
            let l = m.weekday_levels.unwrap();
            (0..7).filter(|&k| (l[k] - 40.0 - offsets[k]).abs() <= 2.0 * se).count()
        })
        .sum();
    assert!(within >= 150, "{within} of 168 levels within two standard errors");
}

/// Per-hour expert dynamics `P_d = 1 + 0.5 P_{d-1} + 0.2 P_{d-2} + 0.1 P_{d-7} + ε`.
fn expert_panel(days: usize, sd: f64, seed: u64) -> PricePanel {
    let cols: Vec<Vec<f64>> = (0..HOURS)
        .map(|h| {
            let burn = 500;
            let eps = normals(days + burn, sd, seed * 100 + h as u64);
            let mut x = vec![5.0; days + burn];
            for t in 7..days + burn {
                x[t] = 1.0 + 0.5 * x[t - 1] + 0.2 * x[t - 2] + 0.1 * x[t - 7] + eps[t];
            }
            x.split_off(burn)
        })
        .collect();
    let rows = (0..days).map(|d| std::array::from_fn(|h| cols[h][d])).collect();
    PricePanel::from_rows(start(), rows).unwrap()
}

#[test]
fn expert_recovers_coefficients_and_labels() {
    let panel = expert_panel(2000, 0.2, 8);
    let model = fit_expert(&panel, false).unwrap();
    let ModelBody::Regression { hours } = &model.body else { panic!() };
    for r in hours {
        let labels: Vec<RegressorLabel> = r.coefficients.iter().map(|c| c.label).collect();
        assert_eq!(labels, vec![lag(r.h, 1), lag(r.h, 2), lag(r.h, 7)]);
        // Standard errors are about 0.07 (intercept) and 0.025 (lags) per hour.
        assert!((r.intercept - 1.0).abs() < 0.3, "hour {} intercept {}", r.h, r.intercept);
        for (c, truth) in r.coefficients.iter().zip([0.5, 0.2, 0.1]) {
            assert!((c.value - truth).abs() < 0.1, "hour {} {}: {}", r.h, c.label, c.value);
        }
    }
    // Hours are independent replicates, so their average meets the tight tolerance.
    let mean_intercept = hours.iter().map(|r| r.intercept).sum::<f64>() / HOURS as f64;
    assert!((mean_intercept - 1.0).abs() < 0.05, "mean intercept {mean_intercept}");
    for (j, truth) in [0.5, 0.2, 0.1].into_iter().enumerate() {
        let mean = hours.iter().map(|r| r.coefficients[j].value).sum::<f64>() / HOURS as f64;
        assert!((mean - truth).abs() < 0.05, "mean coefficient {j}: {mean}");
    }
    let wd = fit_expert(&panel, true).unwrap();
    let ModelBody::Regression { hours } = &wd.body else { panic!() };
    let names: Vec<String> = hours[3].coefficients.iter().map(|c| c.label.to_string()).collect();
    assert_eq!(names, ["3@1", "3@2", "3@7", "Sun", "Mon", "Sat"]);
}

fn rss_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let beta = ols(x, y).unwrap();
    (y - x * beta).norm_squared()
}

#[test]
fn nested_least_squares_ordering() {
    let panel = synth_panel(&SynthSpec::preset(SynthPreset::SeasonalWeekly), 400, start(), 9).unwrap();
    let rows = panel.rows();
    let first = 36;
    let n = rows.len() - first;
    let (_, centered) = demean(&panel, 0..panel.len()).unwrap();
    for h in [0, 11, 23] {
        let y = DVector::from_fn(n, |i, _| rows[first + i][h]);
        let design = |lags: &[usize]| {
            DMatrix::from_fn(n, lags.len() + 1, |i, j| if j == 0 { 1.0 } else { rows[first + i - lags[j - 1]][h] })
        };
        let expert = rss_ols(&design(&[1, 2, 7]), &y);
        let ar: Vec<usize> = (1..=9).collect();
        let hourly = rss_ols(&design(&ar), &y);
        let full = build_design(&centered, h, &LagIndexSet::default(), None).unwrap();
        let full_x = full.x.clone().insert_column(0, 1.0);
        let lasso_ols = rss_ols(&full_x, &full.y);
        assert!(expert >= hourly - 1e-9 && hourly >= lasso_ols - 1e-9, "{expert} {hourly} {lasso_ols}");
    }
}

#[test]
fn univariate_ar_recovers_phi_with_small_order() {
    let mut small = 0;
    for seed in 0..10 {
        let x = simulate_ar(&[(1, 0.9)], 24 * 1000, 40 + seed);
        let panel = PricePanel::from_hourly(start(), &x).unwrap();
        let model = fit_univariate_ar(&panel, false, &ModelConfig::default()).unwrap();
        let ModelBody::UnivariateAr { ar, .. } = &model.body else { panic!() };
        assert!((ar.phi[0] - 0.9).abs() < 0.02, "seed {seed}: {}", ar.phi[0]);
        if ar.order <= 5 {
            small += 1;
        }
    }
    assert!(small >= 8, "small order in {small} of 10 seeds");
}

#[test]
fn univariate_ar_reaches_weekly_lag() {
    let x = simulate_ar(&[(1, 0.5), (168, 0.3)], 24 * 1000, 11);
    let panel = PricePanel::from_hourly(start(), &x).unwrap();
    let model = fit_univariate_ar(&panel, false, &ModelConfig::default()).unwrap();
    let ModelBody::UnivariateAr { ar, .. } = &model.body else { panic!() };
    assert!(ar.order >= 168, "selected order {}", ar.order);
    assert_eq!(panel.hourly()[24 * 2 + 5], panel.price(2, 5));
}

#[test]
fn full_rank_pca_matches_direct_var() {
    let mut phi = DMatrix::identity(HOURS, HOURS) * 0.4;
    for h in 1..HOURS {
        phi[(h, h - 1)] = 0.3;
    }
    phi[(0, 23)] = 0.3;
    let spec = SynthSpec { phi: vec![phi.clone()], ..SynthSpec::white_noise(30.0, 1.0) };
    let panel = synth_panel(&spec, 6000, start(), 12).unwrap();
    let cfg = ModelConfig { pmax_var: 3, ..ModelConfig::default() };
    let model = fit_pca_var(&panel, 24, false, &cfg).unwrap();
    let ModelBody::Pca { factorization, var, .. } = &model.body else { panic!() };
    assert_eq!(var.order, 1);

    // Rotate the factor dynamics back to prices: Φ = Γ Φ_F Γᵀ.
    let gamma = DMatrix::from_fn(HOURS, HOURS, |h, j| factorization.loadings[j][h]);
    let phi_f = DMatrix::from_fn(HOURS, HOURS, |i, j| var.phi[0][i][j]);
    let implied = &gamma * phi_f * gamma.transpose();
    let worst = (implied - &phi).abs().max();
    assert!(worst < 0.05, "largest coefficient error {worst}");

    // Same forecasts as a VAR fitted directly on the centered prices.
    let rows: Vec<Vec<f64>> = panel.rows().iter().map(|r| r.to_vec()).collect();
    let direct = multivar_yule_walker(&rows, 3).unwrap();
    let f = model.forecast_day(&panel).unwrap();
    let g = direct.predict(&rows);
    assert!(f.iter().zip(&g).all(|(a, b)| (a - b).abs() < 1e-8));
}

#[test]
fn rank_two_panel_reconstructs_exactly() {
    let a = simulate_ar(&[(1, 0.6)], 500, 13);
    let b = simulate_ar(&[(1, -0.3)], 500, 14);
    let g1: [f64; HOURS] = std::array::from_fn(|h| 1.0 + (h as f64 / 4.0).sin());
    let g2: [f64; HOURS] = std::array::from_fn(|h| (h as f64 - 11.5) / 10.0);
    let rows: Vec<[f64; HOURS]> = (0..500).map(|d| std::array::from_fn(|h| 40.0 + 5.0 * a[d] * g1[h] + 3.0 * b[d] * g2[h])).collect();
    let panel = PricePanel::from_rows(start(), rows).unwrap();
    let model = fit_pca_var(&panel, 2, false, &ModelConfig::default()).unwrap();
    let ModelBody::Pca { factorization, .. } = &model.body else { panic!() };
    let total_var: f64 = factorization.eigenvalues.iter().sum();
    for row in panel.rows() {
        let back = factorization.reconstruct(&factorization.score_row(row, 2));
        let err: f64 = back.iter().zip(row).map(|(x, y)| (x - y).powi(2)).sum();
        assert!(err <= 1e-6 * total_var);
    }
    for k in 2..=12 {
        let m = fit_pca_var(&white_panel(200, 10.0, 1.0, 15), k, true, &ModelConfig::default()).unwrap();
        assert_eq!(m.forecast_day(&panel).unwrap().len(), HOURS);
    }
}

#[test]
fn pca_selection_prefers_fewest_factors_for_one_factor_panel() {
    let f = simulate_ar(&[(1, 0.8)], 260, 16);
    let noise = normals(260 * HOURS, 0.05, 17);
    let g: [f64; HOURS] = std::array::from_fn(|h| 1.0 + 0.5 * (h as f64 / 3.0).cos());
    let rows = (0..260).map(|d| std::array::from_fn(|h| 40.0 + 4.0 * f[d] * g[h] + noise[d * HOURS + h])).collect();
    let panel = PricePanel::from_rows(start(), rows).unwrap();
    let cfg = BacktestConfig { window: 200, bootstrap: 10, ..BacktestConfig::default() };
    let sel = select_pca_k(&panel, false, &cfg, None).unwrap();
    assert_eq!(sel.scores.len(), 11);
    assert_eq!(sel.k, 2, "{:?}", sel.scores);
}

#[test]
fn model_dump_round_trips() {
    let panel = synth_panel(&SynthSpec::preset(SynthPreset::Weekday), 260, start(), 18).unwrap();
    let window = panel.slice(0..250);
    let cfg = ModelConfig { pmax_univariate: 200, ..ModelConfig::default() };
    for family in Family::all() {
        let model = fit(family, &window, &cfg).unwrap();
        let json = model.to_json();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["family", "window_start", "window_end", "mu", "hours", "extras"] {
            assert!(value.get(key).is_some(), "{family}: missing {key}");
        }
        let back = FittedForecaster::from_json(&json).unwrap();
        assert_eq!(back.forecast_day(&panel).unwrap(), model.forecast_day(&panel).unwrap(), "{family}");
        assert_eq!(fit(family, &window, &cfg).unwrap(), model, "{family} is not deterministic");
    }
}
