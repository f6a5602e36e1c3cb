//! Acceptance checks for the whole system. Each criterion prints one
//! `PASS` / `FAIL` line; the process exits non-zero if any fails.
//!
//! Baselines (static GLMs) and oracles (quadrature, closed-form Kalman
//! filter) are computed here, independently of the library code under test.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use claimstate_core::data::batch_midpoint;
use claimstate_core::evaluation::{
    count_diff_table, double_lift_data, gini_index, lifts, poisson_deviance,
};
use claimstate_core::filter::run_filter;
use claimstate_core::prediction::{predict_dataset, ForecastMode};
use claimstate_core::simgen::{self, Curve, SimData, SimFamily, SimSpec};
use claimstate_core::{
    filter_step, fit, load_dataset, load_snapshot, select_smoothing, update, write_dataset,
    BatchDataset, Counts, DatasetSchema, DesignRow, EtaDerivs, Family, FilterOptions,
    GaussianState, ModelConfig, ModelSnapshot, NewtonOptions, Obs, ObservationModel, PreparedBatch,
    SmoothingSearchConfig, SystemMatrices,
};

const DEFAULT_SEED: u64 = 20_240_501;
const PANEL_SEEDS: [u64; 5] = [DEFAULT_SEED, 1, 2, 3, 4];
const K_MAX: usize = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------------------------------------------------------------------------
// Independent static baselines

fn design_matrix(ds: &BatchDataset) -> DMatrix<f64> {
    DMatrix::from_fn(ds.len(), 3, |i, j| {
        if j == 0 {
            1.0
        } else {
            ds.rows()[i].covariates[j - 1]
        }
    })
}

fn responses(ds: &BatchDataset) -> DVector<f64> {
    DVector::from_iterator(ds.len(), ds.rows().iter().map(|r| r.y.unwrap() as f64))
}

/// Weighted Poisson GLM with log link by Newton (IRLS).
fn poisson_irls(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
    start: DVector<f64>,
) -> DVector<f64> {
    let mut b = start;
    for _ in 0..100 {
        let mu = (x * &b).map(f64::exp);
        let r = (y - &mu).component_mul(w);
        let g = x.transpose() * r;
        let weights = mu.component_mul(w);
        let xw = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * weights[i]);
        let h = x.transpose() * xw;
        let step = h.cholesky().expect("information matrix is SPD").solve(&g);
        b += &step;
        if step.amax() < 1e-12 {
            break;
        }
    }
    b
}

/// Static Poisson GLM `log mu = b0 + b1 x1 + b2 x2` fitted on training data;
/// returns predicted test means.
fn static_poisson(train: &BatchDataset, test: &BatchDataset) -> Vec<f64> {
    let x = design_matrix(train);
    let b = poisson_irls(
        &x,
        &responses(train),
        &DVector::from_element(train.len(), 1.0),
        DVector::zeros(3),
    );
    (design_matrix(test) * b).iter().map(|e| e.exp()).collect()
}

/// Static ZIP with constant zero probability, fitted by EM.
fn static_zip(train: &BatchDataset, test: &BatchDataset) -> Vec<f64> {
    let x = design_matrix(train);
    let y = responses(train);
    let mut b = DVector::zeros(3);
    let mut phi: f64 = 0.3;
    for _ in 0..500 {
        let lambda = (&x * &b).map(f64::exp);
        let z = DVector::from_fn(y.len(), |i, _| {
            if y[i] == 0.0 {
                phi / (phi + (1.0 - phi) * (-lambda[i]).exp())
            } else {
                0.0
            }
        });
        let next_phi = z.mean();
        let w = z.map(|v| 1.0 - v);
        let next_b = poisson_irls(&x, &y, &w, b.clone());
        let change = (&next_b - &b).amax().max((next_phi - phi).abs());
        b = next_b;
        phi = next_phi;
        if change < 1e-10 {
            break;
        }
    }
    (design_matrix(test) * b)
        .iter()
        .map(|e| (1.0 - phi) * e.exp())
        .collect()
}

fn nb_loglik(y: &DVector<f64>, mu: &DVector<f64>, alpha: f64) -> f64 {
    y.iter()
        .zip(mu.iter())
        .map(|(&y, &m)| {
            ln_gamma(y + alpha) - ln_gamma(alpha) - ln_gamma(y + 1.0)
                + alpha * (alpha / (alpha + m)).ln()
                + y * (m / (alpha + m)).ln()
        })
        .sum()
}

/// Mean coefficients of a static NB2 GLM at fixed dispersion, by Newton.
fn nb_coefficients(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    alpha: f64,
    start: DVector<f64>,
) -> DVector<f64> {
    let mut b = start;
    for _ in 0..100 {
        let mu = (x * &b).map(f64::exp);
        let r = DVector::from_fn(y.len(), |i, _| (y[i] - mu[i]) * alpha / (alpha + mu[i]));
        let g = x.transpose() * r;
        let w = DVector::from_fn(y.len(), |i, _| {
            mu[i] * alpha * (alpha + y[i]) / (alpha + mu[i]).powi(2)
        });
        let xw = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * w[i]);
        let step = (x.transpose() * xw).cholesky().expect("SPD").solve(&g);
        b += &step;
        if step.amax() < 1e-12 {
            break;
        }
    }
    b
}

/// Static NB2 GLM; dispersion by golden-section search on the profile
/// likelihood over `log10 alpha` in `[-2, 4]`.
fn static_nb(train: &BatchDataset, test: &BatchDataset) -> Vec<f64> {
    let x = design_matrix(train);
    let y = responses(train);
    let profile = |la: f64| {
        let alpha = 10f64.powf(la);
        let b = nb_coefficients(&x, &y, alpha, DVector::zeros(3));
        (nb_loglik(&y, &(&x * &b).map(f64::exp), alpha), b)
    };
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (-2.0, 4.0);
    while hi - lo > 1e-4 {
        let c = hi - ratio * (hi - lo);
        let d = lo + ratio * (hi - lo);
        if profile(c).0 > profile(d).0 {
            hi = d;
        } else {
            lo = c;
        }
    }
    let b = profile((lo + hi) / 2.0).1;
    (design_matrix(test) * b).iter().map(|e| e.exp()).collect()
}

fn poisson_pmf_rows(means: &[f64]) -> Vec<Vec<f64>> {
    means
        .iter()
        .map(|&m| {
            let mut p = Vec::with_capacity(K_MAX + 1);
            let mut v = (-m).exp();
            for k in 0..=K_MAX {
                p.push(v);
                v *= m / (k + 1) as f64;
            }
            p
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Simulation panel shared by criteria 1-3 and 8

struct PanelRun {
    seed: u64,
    sim: SimData,
    snapshot: ModelSnapshot,
    dpss_means: Vec<f64>,
    dpss_deviance: f64,
    dpss_zero_diff: f64,
    static_means: Vec<f64>,
    static_deviance: f64,
    static_zero_diff: f64,
}

fn run_seed(seed: u64) -> PanelRun {
    let spec = SimSpec {
        seed,
        ..SimSpec::default()
    };
    let sim = simgen::generate(&spec).unwrap();
    let config = simgen::default_model_config(&spec).unwrap();
    let sel = select_smoothing(&sim.train, &config, &SmoothingSearchConfig::default()).unwrap();
    let snapshot = fit(&sim.train, &sel.apply(&config).unwrap())
        .unwrap()
        .snapshot;
    let y = sim.test.counts().unwrap();
    let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let pred = predict_dataset(&snapshot, &sim.test, ForecastMode::Rolling, K_MAX as u64).unwrap();
    let dpss_deviance = poisson_deviance(&yf, &pred.means).unwrap().1;
    let dpss_zero_diff = count_diff_table(&y, &pred.pmf, K_MAX).unwrap()[0];
    let static_means = static_poisson(&sim.train, &sim.test);
    let static_deviance = poisson_deviance(&yf, &static_means).unwrap().1;
    let static_zero_diff =
        count_diff_table(&y, &poisson_pmf_rows(&static_means), K_MAX).unwrap()[0];
    PanelRun {
        seed,
        sim,
        snapshot,
        dpss_means: pred.means,
        dpss_deviance,
        dpss_zero_diff,
        static_means,
        static_deviance,
        static_zero_diff,
    }
}

fn panel() -> &'static [PanelRun] {
    static PANEL: OnceLock<Vec<PanelRun>> = OnceLock::new();
    PANEL.get_or_init(|| PANEL_SEEDS.iter().map(|&s| run_seed(s)).collect())
}

fn simulation_replication() -> Outcome {
    let runs = panel();
    let base = &runs[0];
    let dpss_ok = (0.83..=0.88).contains(&base.dpss_deviance);
    let static_ok = (0.92..=0.95).contains(&base.static_deviance);
    let gaps: Vec<String> = runs
        .iter()
        .map(|r| format!("{}:{:.4}", r.seed, r.static_deviance - r.dpss_deviance))
        .collect();
    let gaps_ok = runs
        .iter()
        .all(|r| r.static_deviance - r.dpss_deviance >= 0.05);
    outcome(
        dpss_ok && static_ok && gaps_ok,
        format!(
            "seed {}: dpss {:.4} in [0.83, 0.88], static {:.4} in [0.92, 0.95]; gaps (seed:static-dpss) {}",
            base.seed,
            base.dpss_deviance,
            base.static_deviance,
            gaps.join(" ")
        ),
    )
}

fn count_difference_pattern() -> Outcome {
    let runs = panel();
    let pass = runs
        .iter()
        .all(|r| r.dpss_zero_diff.abs() <= 200.0 && r.static_zero_diff.abs() >= 2000.0);
    let cells: Vec<String> = runs
        .iter()
        .map(|r| {
            format!(
                "{}: dpss {:+.1} static {:+.1}",
                r.seed, r.dpss_zero_diff, r.static_zero_diff
            )
        })
        .collect();
    outcome(
        pass,
        format!(
            "count_diff at k=0 (observed - expected): {}",
            cells.join("; ")
        ),
    )
}

fn coefficient_recovery() -> Outcome {
    let run = &panel()[0];
    let snap = &run.snapshot;
    let layout = snap.config.layout();
    let intercept = layout
        .value_slot(claimstate_core::config::INTERCEPT)
        .unwrap();
    let slope = layout.value_slot("x1").unwrap();
    let constant = layout.value_slot("x2").unwrap();
    let z = 1.959_963_984_540_054;
    let (mut hit0, mut hit1) = (0, 0);
    for h in &snap.history {
        let t = snap
            .time_scale
            .denormalize(batch_midpoint(h.batch_index, snap.config.batches));
        let truth0 = t - 2.0;
        let truth1 = 0.2 * t.ln() + 0.5;
        hit0 +=
            usize::from((h.mean[intercept] - truth0).abs() <= z * h.cov_diagonal[intercept].sqrt());
        hit1 += usize::from((h.mean[slope] - truth1).abs() <= z * h.cov_diagonal[slope].sqrt());
    }
    let points = snap.history.len();
    let est = snap.state.mean[constant];
    let need = (0.9 * points as f64).ceil() as usize;
    outcome(
        points == 50 && hit0 >= need && hit1 >= need && (est - 0.25).abs() <= 0.05,
        format!("intercept covered {hit0}/{points}, x1 slope covered {hit1}/{points}, constant {est:.4} vs 0.25"),
    )
}

// ---------------------------------------------------------------------------
// Criterion 4: Laplace filtering step against quadrature

/// Posterior mean and variance of `g` under `Poisson(y; e^g) N(g; m, v)`.
fn quadrature_posterior(y: u64, m: f64, v: f64) -> (f64, f64) {
    let sd = v.sqrt();
    let (lo, hi) = (m - 14.0 * sd, m + 14.0 * sd);
    let n = 40_000;
    let h = (hi - lo) / n as f64;
    let ln_fact: f64 = (1..=y).map(|k| (k as f64).ln()).sum();
    let log_w = |g: f64| y as f64 * g - g.exp() - ln_fact - 0.5 * (g - m).powi(2) / v;
    let peak = (0..=n)
        .map(|k| log_w(lo + k as f64 * h))
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for k in 0..=n {
        let g = lo + k as f64 * h;
        let w = (log_w(g) - peak).exp() * if k == 0 || k == n { 0.5 } else { 1.0 };
        s0 += w;
        s1 += w * g;
        s2 += w * g * g;
    }
    let mean = s1 / s0;
    (mean, s2 / s0 - mean * mean)
}

fn laplace_filter_oracle() -> Outcome {
    let mut failures = Vec::new();
    let mut worst_mean: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    for m in [-1.0, 0.0, 1.0] {
        for v in [0.25, 1.0, 4.0] {
            for y in [0u64, 1, 3] {
                let prior = GaussianState {
                    mean: DVector::from_element(1, m),
                    cov: DMatrix::from_element(1, 1, v),
                    batch_index: 1,
                    timepoint: 0.5,
                };
                let batch = PreparedBatch {
                    index: 1,
                    obs: vec![Obs::count(y)],
                    count: DMatrix::from_element(1, 1, 1.0),
                    zero: None,
                };
                let step = filter_step(&Family::Poisson, &prior, &batch, &NewtonOptions::default())
                    .unwrap();
                let (qm, qv) = quadrature_posterior(y, m, v);
                let dm = (step.state.mean[0] - qm).abs();
                let dv = (step.state.cov[(0, 0)] - qv).abs() / qv;
                worst_mean = worst_mean.max(dm);
                worst_var = worst_var.max(dv);
                if dm > 0.05 || dv > 0.10 {
                    failures.push(format!(
                        "(m={m}, v={v}, y={y}: mean err {dm:.3}, var err {:.1}%)",
                        100.0 * dv
                    ));
                }
            }
        }
    }
    let detail = format!(
        "27 cells, worst mean error {worst_mean:.3} (tol 0.05), worst variance error {:.1}% (tol 10%){}",
        100.0 * worst_var,
        if failures.is_empty() {
            String::new()
        } else {
            format!("; {} cells out of tolerance: {}", failures.len(), failures.join(" "))
        }
    );
    outcome(failures.is_empty(), detail)
}

// ---------------------------------------------------------------------------
// Criterion 5: Gaussian observations against the closed-form Kalman filter

struct GaussianObservation {
    variance: f64,
}

impl ObservationModel for GaussianObservation {
    fn predictors(&self) -> usize {
        1
    }

    fn eval(&self, obs: &Obs, eta: [f64; 2]) -> EtaDerivs {
        let r = obs.y - eta[0];
        EtaDerivs {
            loglik: -0.5 * (2.0 * std::f64::consts::PI * self.variance).ln()
                - 0.5 * r * r / self.variance,
            grad: [r / self.variance, 0.0],
            hess: [[-1.0 / self.variance, 0.0], [0.0, 0.0]],
            clamped: false,
        }
    }
}

fn uniform_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| scale * (2.0 * rng.random::<f64>() - 1.0))
}

/// Largest deviation between the filter and the Kalman recursion on one
/// random 3-dimensional system over 20 batches.
fn gaussian_system_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 3;
    let steps = 20;
    let variance = 0.2 + rng.random::<f64>();
    let transition = DMatrix::identity(d, d) + uniform_matrix(&mut rng, d, d, 0.1);
    let a = uniform_matrix(&mut rng, d, d, 0.3);
    let noise = &a * a.transpose() + DMatrix::identity(d, d) * 0.01;
    let b = uniform_matrix(&mut rng, d, d, 1.0);
    let start = GaussianState {
        mean: DVector::from_fn(d, |_, _| rng.random::<f64>() - 0.5),
        cov: &b * b.transpose() + DMatrix::identity(d, d),
        batch_index: 0,
        timepoint: 0.0,
    };
    let batches: Vec<PreparedBatch> = (1..=steps)
        .map(|s| {
            let n = rng.random_range(1..=4);
            PreparedBatch {
                index: s,
                count: uniform_matrix(&mut rng, n, d, 1.0),
                obs: (0..n)
                    .map(|_| Obs::real(3.0 * rng.random::<f64>() - 1.5))
                    .collect(),
                zero: None,
            }
        })
        .collect();
    let system = SystemMatrices {
        transition: transition.clone(),
        noise: noise.clone(),
    };
    let model = GaussianObservation { variance };
    let (_, trace) = run_filter(
        &model,
        &system,
        start.clone(),
        &batches,
        steps,
        steps,
        &FilterOptions::default(),
    )
    .unwrap();

    let mut worst: f64 = 0.0;
    let mut m = start.mean;
    let mut p = start.cov;
    for (batch, step) in batches.iter().zip(&trace.steps) {
        m = &transition * &m;
        p = &transition * &p * transition.transpose() + &noise;
        let h = &batch.count;
        let mut predictive = 0.0;
        for i in 0..batch.len() {
            let hi = h.row(i).transpose();
            let v = hi.dot(&(&p * &hi)) + variance;
            predictive += -0.5
                * ((2.0 * std::f64::consts::PI * v).ln()
                    + (batch.obs[i].y - hi.dot(&m)).powi(2) / v);
        }
        let y = DVector::from_iterator(batch.len(), batch.obs.iter().map(|o| o.y));
        let s = h * &p * h.transpose() + DMatrix::identity(batch.len(), batch.len()) * variance;
        let gain = &p * h.transpose() * s.clone().try_inverse().unwrap();
        m = &m + &gain * (&y - h * &m);
        p = &p - &gain * &s * gain.transpose();
        let rel = |x: f64, scale: f64| x / (1.0 + scale);
        worst = worst
            .max(rel(
                (step.predictive_loglik.unwrap() - predictive).abs(),
                predictive.abs(),
            ))
            .max(rel((&step.filtered.mean - &m).amax(), m.amax()))
            .max(rel((&step.filtered.cov - &p).amax(), p.amax()));
    }
    worst
}

fn gaussian_exactness() -> Outcome {
    let worst = (0..25u64).map(gaussian_system_error).fold(0.0, f64::max);
    outcome(
        worst < 1e-8,
        format!("25 random systems x 20 batches, worst relative deviation {worst:.2e} (tol 1e-8)"),
    )
}

// ---------------------------------------------------------------------------
// Criterion 6: continuation identity, library and command line

fn max_state_gap(a: &ModelSnapshot, b: &ModelSnapshot) -> f64 {
    (&a.state.mean - &b.state.mean)
        .amax()
        .max((&a.state.cov - &b.state.cov).amax())
}

fn library_continuation(rng: &mut ChaCha8Rng) -> (f64, Vec<usize>) {
    let spec = SimSpec {
        n: 20_000,
        seed: 17,
        ..SimSpec::default()
    };
    let sim = simgen::generate(&spec).unwrap();
    let config = simgen::default_model_config(&spec)
        .unwrap()
        .with_tau(vec![1e3, 2.0])
        .unwrap();
    let full = fit(&sim.train, &config).unwrap().snapshot;
    let mut worst: f64 = 0.0;
    let mut ks = Vec::new();
    for _ in 0..8 {
        let k = rng.random_range(1..spec.batches);
        ks.push(k);
        let (head, tail) = sim.train.split_at_batch(k);
        let partial = fit(&head, &config).unwrap().snapshot;
        let resumed = update(&partial, &tail).unwrap().snapshot;
        worst = worst.max(if resumed.batch_index() == full.batch_index() {
            max_state_gap(&resumed, &full)
        } else {
            f64::INFINITY
        });
    }
    (worst, ks)
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_claimstate"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn cli_continuation(k: usize) -> Result<f64, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    cli(&[
        "simulate",
        "--n",
        "20000",
        "--seed",
        "23",
        "--out",
        &p("all.csv"),
        "--train-out",
        &p("train.csv"),
    ])?;

    let schema = DatasetSchema::default();
    let probe = simgen::default_model_config(&SimSpec::default()).unwrap();
    let train = load_dataset(
        Path::new(&p("train.csv")),
        &schema,
        &probe,
        None,
        Counts::Required,
    )
    .map_err(|e| e.to_string())?;
    let scale = train.scale();
    let config = format!(
        "family = \"poisson\"\nvarying = [\"x1\"]\nconstant = [\"x2\"]\nbatches = 50\n\
         tau = [1000.0, 2.0]\nfix_tau = true\ntime_min = {:?}\ntime_max = {:?}\n",
        scale.min, scale.max
    );
    std::fs::write(p("config.toml"), config).map_err(|e| e.to_string())?;
    let (head, tail) = train.split_at_batch(k);
    for (name, ds) in [("head.csv", &head), ("tail.csv", &tail)] {
        let mut f = std::fs::File::create(p(name)).map_err(|e| e.to_string())?;
        write_dataset(&mut f, ds, &schema, None).map_err(|e| e.to_string())?;
    }

    let kk = k.to_string();
    cli(&[
        "fit",
        "--data",
        &p("train.csv"),
        "--config",
        &p("config.toml"),
        "--out-snapshot",
        &p("full.json"),
    ])?;
    cli(&[
        "fit",
        "--data",
        &p("head.csv"),
        "--config",
        &p("config.toml"),
        "--through-batch",
        &kk,
        "--out-snapshot",
        &p("head.json"),
    ])?;
    cli(&[
        "update",
        "--snapshot",
        &p("head.json"),
        "--data",
        &p("tail.csv"),
        "--out-snapshot",
        &p("resumed.json"),
    ])?;
    let full = load_snapshot(p("full.json")).map_err(|e| e.to_string())?;
    let resumed = load_snapshot(p("resumed.json")).map_err(|e| e.to_string())?;
    if full.batch_index() != resumed.batch_index() {
        return Err(format!(
            "batch {} vs {}",
            resumed.batch_index(),
            full.batch_index()
        ));
    }
    Ok(max_state_gap(&full, &resumed))
}

fn continuation_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (lib, ks) = library_continuation(&mut rng);
    let k = rng.random_range(1..50);
    match cli_continuation(k) {
        Ok(gap) => outcome(
            lib <= 1e-10 && gap <= 1e-10,
            format!("library max gap {lib:.2e} over k={ks:?}; command line (snapshot files) k={k} gap {gap:.2e}; tol 1e-10"),
        ),
        Err(e) => outcome(false, format!("library max gap {lib:.2e}; command line failed: {e}")),
    }
}

// ---------------------------------------------------------------------------
// Criterion 7: straight-line limit

fn straight_line_limit() -> Outcome {
    let spec = SimSpec {
        intercept: Curve::Constant { value: -1.5 },
        slope: Curve::Constant { value: 0.3 },
        ..SimSpec::default()
    };
    let sim = simgen::generate(&spec).unwrap();
    let config = simgen::default_model_config(&spec).unwrap();
    let search = SmoothingSearchConfig::default();
    let sel = select_smoothing(&sim.train, &config, &search).unwrap();
    let fitted = fit(&sim.train, &sel.apply(&config).unwrap())
        .unwrap()
        .snapshot;
    let layout = fitted.config.layout();
    // At the bound the fitted coefficient is a line on the normalized time
    // axis; its drift over the span [0, 1] is the derivative slot.
    let drifts: Vec<(String, f64)> = layout
        .coefficients()
        .filter_map(|slot| {
            layout
                .derivative_slot(&slot.name)
                .map(|d| (slot.name.clone(), fitted.state.mean[d].abs()))
        })
        .collect();
    let log_tau: Vec<String> = sel
        .tau
        .iter()
        .map(|t| format!("{:.3}", t.log10()))
        .collect();
    let pass = sel.at_bound.iter().all(|&b| b)
        && sel
            .tau
            .iter()
            .all(|t| (t.log10() - search.log10_tau[1]).abs() <= search.tolerance)
        && drifts.iter().all(|(_, d)| *d < 0.05);
    let drift_text: Vec<String> = drifts.iter().map(|(n, d)| format!("{n} {d:.4}")).collect();
    outcome(
        pass,
        format!(
            "log10 tau = [{}] (upper bound {}), fitted drift over the span: {} (tol 0.05)",
            log_tau.join(", "),
            search.log10_tau[1],
            drift_text.join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 8: metric unit values

fn metric_unit_values() -> Outcome {
    let mut errors: Vec<(String, f64)> = Vec::new();
    let mut check =
        |name: &str, got: f64, want: f64| errors.push((name.to_string(), (got - want).abs()));
    check(
        "deviance y=1,yhat=1",
        poisson_deviance(&[1.0], &[1.0]).unwrap().0,
        0.0,
    );
    check(
        "deviance y=2,yhat=1",
        poisson_deviance(&[2.0], &[1.0]).unwrap().0,
        2.0 * (2.0 * 2f64.ln() - 1.0),
    );
    check(
        "deviance y=0,yhat=0.5",
        poisson_deviance(&[0.0], &[0.5]).unwrap().0,
        1.0,
    );
    let e1 = (-1f64).exp();
    let pmf = vec![vec![e1, e1], vec![e1, e1]];
    check(
        "count_diff k=0",
        count_diff_table(&[0, 0], &pmf, 1).unwrap()[0],
        2.0 - 2.0 * e1,
    );
    let ten: Vec<f64> = (1..=10).map(f64::from).collect();
    let l = lifts(&ten, &ten).unwrap();
    check("one-way lift 1..10", l.one_way, 10.0 / 5.5);
    check("two-way lift 1..10", l.two_way.unwrap(), 10.0);
    let mut sparse = vec![0.0; 9];
    sparse.push(10.0);
    let undefined = lifts(&sparse, &sparse).unwrap().two_way.is_none();
    check(
        "gini (0,0,1)",
        gini_index(&[0.0, 0.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(),
        2.0 / 3.0,
    );
    check(
        "gini reversed",
        gini_index(&[0.0, 0.0, 1.0], &[3.0, 2.0, 1.0]).unwrap(),
        -2.0 / 3.0,
    );
    check(
        "gini flat",
        gini_index(&[2.0; 6], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(),
        0.0,
    );
    let b = [0.5, 1.0, 2.0, 1.5];
    let a: Vec<f64> = b.iter().map(|v| 2.0 * v).collect();
    let dl = double_lift_data(&a, &a, &b, &claimstate_core::evaluation::DOUBLE_LIFT_EDGES).unwrap();
    check("double lift buckets", dl.rows.len() as f64, 1.0);
    check("double lift actual", dl.rows[0].actual_ratio, 2.0);
    check("double lift model", dl.rows[0].model_ratio, 2.0);

    // Double lift of the simulated DPSS fit against the static baseline.
    let run = &panel()[0];
    let y: Vec<f64> = run
        .sim
        .test
        .counts()
        .unwrap()
        .iter()
        .map(|&v| v as f64)
        .collect();
    let dl = double_lift_data(
        &y,
        &run.dpss_means,
        &run.static_means,
        &claimstate_core::evaluation::DOUBLE_LIFT_EDGES,
    )
    .unwrap();
    let xs: Vec<f64> = dl.rows.iter().map(|r| r.actual_ratio).collect();
    let ys: Vec<f64> = dl.rows.iter().map(|r| r.model_ratio).collect();
    let corr = correlation(&xs, &ys);

    let worst = errors.iter().fold(0.0f64, |m, (_, e)| m.max(*e));
    let bad: Vec<&str> = errors
        .iter()
        .filter(|(_, e)| *e > 1e-12)
        .map(|(n, _)| n.as_str())
        .collect();
    outcome(
        bad.is_empty() && undefined && corr > 0.5,
        format!(
            "{} closed-form values, worst error {worst:.1e} (tol 1e-12){}; undefined two-way lift reported: {undefined}; \
             double-lift correlation on the simulation {corr:.3} over {} buckets (need > 0.5)",
            errors.len(),
            if bad.is_empty() { String::new() } else { format!(", failing: {}", bad.join(", ")) },
            dl.rows.len()
        ),
    )
}

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

// ---------------------------------------------------------------------------
// Criterion 9: zero-inflated and negative-binomial extensions

/// Worst relative error of state gradients and Hessians against central
/// differences over a fixed grid of states and counts.
fn finite_difference_error(family: Family) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    let loglik = |y: f64, row: &DesignRow, g: &DVector<f64>| {
        let eta = row.eta(g);
        family.loglik(y, &eta[..family.predictors()]).unwrap()
    };
    for _ in 0..200 {
        let z: Vec<f64> = (0..6).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        let row = match family {
            Family::Zip => DesignRow::Pair {
                count: DVector::from_column_slice(&z[..3]),
                zero: DVector::from_column_slice(&z[3..]),
            },
            _ => DesignRow::Single(DVector::from_column_slice(&z[..3])),
        };
        let g = DVector::from_fn(3, |_, _| 2.0 * rng.random::<f64>() - 1.0);
        let y = rng.random_range(0..8) as f64;
        let eval = family.grad_hess(y, &row, &g).unwrap();
        let h = 1e-5;
        for j in 0..3 {
            let mut up = g.clone();
            let mut down = g.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (loglik(y, &row, &up) - loglik(y, &row, &down)) / (2.0 * h);
            worst = worst.max((eval.grad[j] - fd).abs() / (1.0 + fd.abs()));
            let gu = family.grad_hess(y, &row, &up).unwrap().grad;
            let gd = family.grad_hess(y, &row, &down).unwrap().grad;
            for i in 0..3 {
                let fd = (gu[i] - gd[i]) / (2.0 * h);
                worst = worst.max((eval.hess[(i, j)] - fd).abs() / (1.0 + fd.abs()));
            }
        }
    }
    worst
}

struct ExtensionRun {
    dynamic: f64,
    baseline: f64,
    converged: bool,
    fd_error: f64,
    selected: String,
}

fn extension_run(
    family: SimFamily,
    config_family: Family,
    baseline: fn(&BatchDataset, &BatchDataset) -> Vec<f64>,
) -> ExtensionRun {
    let spec = SimSpec {
        family,
        ..SimSpec::default()
    };
    let sim = simgen::generate(&spec).unwrap();
    let config: ModelConfig = simgen::default_model_config(&spec).unwrap();
    let y: Vec<f64> = sim
        .test
        .counts()
        .unwrap()
        .iter()
        .map(|&v| v as f64)
        .collect();
    let baseline = poisson_deviance(&y, &baseline(&sim.train, &sim.test))
        .unwrap()
        .1;
    let result = select_smoothing(&sim.train, &config, &SmoothingSearchConfig::default())
        .and_then(|sel| {
            let fitted = fit(&sim.train, &sel.apply(&config)?)?;
            Ok((sel, fitted))
        })
        .and_then(|(sel, fitted)| {
            let p = predict_dataset(
                &fitted.snapshot,
                &sim.test,
                ForecastMode::Rolling,
                K_MAX as u64,
            )?;
            Ok((sel, fitted, p))
        });
    let fd_error = finite_difference_error(config_family);
    match result {
        Ok((sel, fitted, p)) => ExtensionRun {
            dynamic: poisson_deviance(&y, &p.means).unwrap().1,
            baseline,
            converged: fitted
                .trace
                .steps
                .iter()
                .all(|s| s.iterations < NewtonOptions::default().max_iter),
            fd_error,
            selected: format!(
                "tau {:?}{}",
                sel.tau
                    .iter()
                    .map(|t| format!("{t:.3e}"))
                    .collect::<Vec<_>>(),
                sel.nb_alpha
                    .map_or(String::new(), |a| format!(", alpha {a:.3}"))
            ),
        },
        Err(e) => ExtensionRun {
            dynamic: f64::NAN,
            baseline,
            converged: false,
            fd_error,
            selected: format!("error: {e}"),
        },
    }
}

fn family_extensions() -> Outcome {
    let zip = extension_run(
        SimFamily::Zip {
            zero_logit: Curve::Constant { value: -1.0 },
        },
        Family::Zip,
        static_zip,
    );
    let nb = extension_run(
        SimFamily::NegBin { alpha: 2.0 },
        Family::NegBin { alpha: 2.0 },
        static_nb,
    );
    let ok = |r: &ExtensionRun| r.converged && r.baseline - r.dynamic >= 0.02 && r.fd_error < 1e-5;
    let text = |name: &str, r: &ExtensionRun| {
        format!(
            "{name}: converged {}, dynamic {:.4} vs static {:.4} (gap {:.4}, need 0.02), FD error {:.1e}, {}",
            r.converged,
            r.dynamic,
            r.baseline,
            r.baseline - r.dynamic,
            r.fd_error,
            r.selected
        )
    };
    outcome(
        ok(&zip) && ok(&nb),
        format!("{}; {}", text("ZIP", &zip), text("NB", &nb)),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("simulation replication", simulation_replication),
        ("count-difference pattern", count_difference_pattern),
        ("coefficient recovery", coefficient_recovery),
        ("Laplace filter vs quadrature", laplace_filter_oracle),
        ("Gaussian exactness", gaussian_exactness),
        ("continuation identity", continuation_identity),
        ("straight-line limit", straight_line_limit),
        ("metric unit values", metric_unit_values),
        ("family extensions", family_extensions),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = check();
        failed += usize::from(!result.pass);
        println!(
            "acceptance {} ({name}): {} | {}",
            i + 1,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
