//! The five experiment commands. Each returns checks, statistics and the
//! artifacts it wrote; the caller assembles the report.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::{grid_indices, ConvergeConfig, LocaltimeConfig, ScalingConfig, SimulateConfig, VerifyConfig};
use crate::artifacts::{with_file, write_csv, write_json};
use crate::convergence::{
    build_ensemble, convergence_curve, energy_test, identification_check, modulus_statistics, moment_scaling,
    path_convergence_curve, ConvergenceCurve, Direction, EnsembleConfig, EstimatorConfig, Envelope,
};
use crate::error::{Error, Result};
use crate::fbm::{covariance, HurstParam};
use crate::occupation::{
    kernel_local_time, linspace, occupation_histogram, occupation_integral, Bandwidth, LocalTimeField, MollifierKernel,
};
use crate::path_gen::{FbmGenerator, Method, SamplePath, TimeGrid};
use crate::quadrature::integrate;
use crate::report::{Check, SeedLedger};
use crate::rng::{derive_seed, Stream, DERIVATION_RULE};
use crate::stats::{mean, std_error};
use crate::svg::{line_chart, Series};
use crate::theory_checks::run_suite;

pub(crate) struct Outcome {
    pub checks: Vec<Check>,
    pub statistics: Value,
    pub artifacts: Vec<String>,
    pub notes: Vec<String>,
    pub seed_ledger: SeedLedger,
}

struct Artifacts<'a> {
    dir: &'a Path,
    names: Vec<String>,
}

impl<'a> Artifacts<'a> {
    fn new(dir: &'a Path) -> Self {
        Artifacts { dir, names: vec![] }
    }

    fn csv(&mut self, name: String, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
        write_csv(&self.dir.join(&name), header, rows)?;
        self.names.push(name);
        Ok(())
    }

    fn svg(&mut self, name: &str, body: String) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        self.names.push(name.to_string());
        Ok(())
    }

    fn field(&mut self, stem: String, field: &LocalTimeField) -> Result<()> {
        let csv = format!("{stem}.csv");
        with_file(&self.dir.join(&csv), |w| field.write_csv(w))?;
        self.names.push(csv);
        let json = format!("{stem}.json");
        write_json(&self.dir.join(&json), &field.sidecar())?;
        self.names.push(json);
        Ok(())
    }
}

fn ledger(master_seed: u64, ensemble_seeds: Vec<u64>) -> SeedLedger {
    SeedLedger {
        master_seed,
        derivation_rule: DERIVATION_RULE.to_string(),
        ensemble_seeds,
    }
}

// ---------------------------------------------------------------------------
// simulate

pub(crate) fn simulate(cfg: &SimulateConfig, out: &Path) -> Result<Outcome> {
    let grid = TimeGrid::new(cfg.horizon, cfg.n_steps)?;
    let n = grid.n_steps();
    let (i_s, i_t) = (n / 2, n);
    let (s, t) = (grid.point(i_s), grid.point(i_t));
    let mut checks = vec![];
    let mut stats = vec![];
    let mut notes = vec![];
    let mut seeds = vec![];
    let mut files = Artifacts::new(out);
    let mut plotted = vec![];

    for (hi, &h) in cfg.hurst.iter().enumerate() {
        for (mi, &method) in cfg.methods.iter().enumerate() {
            let master = derive_seed(cfg.master_seed, (16 * hi + mi) as u64);
            seeds.push(master);
            let g = FbmGenerator::new(h, grid, method)?;
            if let Some(f) = g.fallback() {
                notes.push(format!("H={}: {f}", h.value()));
            }
            let pairs: Vec<(f64, f64)> = (0..cfg.n_paths as u64)
                .into_par_iter()
                .map(|r| {
                    let p = g.sample(derive_seed(master, r));
                    (p.values()[i_s], p.values()[i_t])
                })
                .collect();
            let squares: Vec<f64> = pairs.iter().map(|(_, b)| b * b).collect();
            let products: Vec<f64> = pairs.iter().map(|(a, b)| a * b).collect();
            for (name, sample, exact, at) in [
                ("marginal_variance", &squares, covariance(h, t, t)?, json!([t, t])),
                ("covariance", &products, covariance(h, s, t)?, json!([s, t])),
            ] {
                let (est, se) = (mean(sample), std_error(sample));
                let z = (est - exact).abs() / se;
                let params = json!({
                    "hurst": h.value(), "method": method, "times": at, "n_paths": cfg.n_paths,
                    "exact": exact, "estimate": est, "std_error": se,
                });
                checks.push(Check::at_most(
                    &format!("{name}[H={},{method}]", h.value()),
                    params,
                    z,
                    cfg.z_threshold,
                ));
            }
            if mi == 0 {
                for r in 0..cfg.dump_paths.min(cfg.n_paths) {
                    let p = g.sample(derive_seed(master, r as u64));
                    let name = format!("path_H{}_{r}.csv", h.value());
                    with_file(&out.join(&name), |w| p.write_csv(w))?;
                    files.names.push(name);
                    if r == 0 {
                        let pts = grid.points().into_iter().zip(p.values().iter().copied()).collect();
                        plotted.push(Series::line(format!("H = {}", h.value()), pts));
                    }
                }
            }
            stats.push(json!({"hurst": h.value(), "method": method, "fallback": g.fallback()}));
        }

        if cfg.methods.contains(&Method::Cholesky) && cfg.methods.contains(&Method::Circulant) {
            let idx = grid_indices("", "agreement_times", &cfg.agreement_times, cfg.horizon, cfg.n_steps)?;
            let sample = |method: Method, master: u64| -> Result<Vec<Vec<f64>>> {
                let g = FbmGenerator::new(h, grid, method)?;
                Ok((0..cfg.agreement_paths as u64)
                    .into_par_iter()
                    .map(|r| {
                        let p = g.sample(derive_seed(master, r));
                        idx.iter().map(|&i| p.values()[i]).collect()
                    })
                    .collect())
            };
            let (ma, mb) = (derive_seed(cfg.master_seed, 1000 + hi as u64), derive_seed(cfg.master_seed, 2000 + hi as u64));
            seeds.extend([ma, mb]);
            let a = sample(Method::Cholesky, ma)?;
            let b = sample(Method::Circulant, mb)?;
            let test = energy_test(&a, &b, cfg.n_permutations, derive_seed(cfg.master_seed, 3000 + hi as u64))?;
            checks.push(Check::at_least(
                &format!("generator_agreement[H={}]", h.value()),
                json!({
                    "hurst": h.value(), "times": cfg.agreement_times, "n_paths": cfg.agreement_paths,
                    "n_permutations": cfg.n_permutations, "energy_distance": test.statistic,
                }),
                test.p_value,
                cfg.agreement_alpha,
            ));
        }
    }
    if !plotted.is_empty() {
        files.svg("paths.svg", line_chart("Sample paths", "t", "B(t)", &plotted))?;
    }
    Ok(Outcome {
        checks,
        statistics: json!({ "generators": stats }),
        artifacts: files.names,
        notes,
        seed_ledger: ledger(cfg.master_seed, seeds),
    })
}

// ---------------------------------------------------------------------------
// localtime

/// `E L(x, t) = ∫_0^t (2 pi s^{2H})^{-1/2} exp(-x^2 / (2 s^{2H})) ds`.
pub fn expected_local_time(h: HurstParam, x: f64, t: f64) -> Result<f64> {
    if x == 0.0 {
        let a = 1.0 - h.value();
        return Ok(t.powf(a) / (a * (2.0 * PI).sqrt()));
    }
    let f = |s: f64| {
        if s <= 0.0 {
            return 0.0;
        }
        let v = s.powf(h.two_h());
        (-x * x / (2.0 * v)).exp() / (2.0 * PI * v).sqrt()
    };
    Ok(integrate(f, 0.0, t, 1e-13, 1e-11)?.value)
}

/// Continuous test function `p(y) (1 - y^2)_+`, `y = (u - center) / width`,
/// with a random cubic `p`.
#[derive(Debug, Clone, Copy)]
struct TestFunction {
    center: f64,
    width: f64,
    coef: [f64; 4],
}

impl TestFunction {
    fn random(s: &mut Stream) -> Self {
        TestFunction {
            center: s.uniform_range(-0.5, 0.5),
            width: s.uniform_range(1.0, 3.0),
            coef: [s.uniform_range(-1.0, 1.0), s.uniform_range(-1.0, 1.0), s.uniform_range(-1.0, 1.0), s.uniform_range(-1.0, 1.0)],
        }
    }

    fn eval(&self, u: f64) -> f64 {
        let y = (u - self.center) / self.width;
        if y.abs() >= 1.0 {
            return 0.0;
        }
        let [a, b, c, d] = self.coef;
        (a + y * (b + y * (c + y * d))) * (1.0 - y * y)
    }
}

/// `sup |phi'|` for the bump `(15/16)(1 - y^2)^2`, attained at `y = 1/sqrt(3)`.
const PHI_PRIME_MAX: f64 = 1.443_375_672_974_064_5;

pub(crate) fn localtime(cfg: &LocaltimeConfig, out: &Path) -> Result<Outcome> {
    let grid = TimeGrid::new(cfg.horizon, cfg.n_steps)?;
    let kernel = MollifierKernel::new()?;
    let mut checks = vec![];
    let mut seeds = vec![];
    let mut notes = vec![];
    let mut files = Artifacts::new(out);

    // Mean of the kernel estimate at a single point.
    let m = &cfg.mean;
    let mut mean_stats = vec![];
    for (i, &h) in m.hurst.iter().enumerate() {
        let master = derive_seed(cfg.master_seed, 100 + i as u64);
        seeds.push(master);
        let g = FbmGenerator::new(h, grid, cfg.method)?;
        notes.extend(g.fallback().map(|f| format!("H={}: {f}", h.value())));
        let eps = m.bandwidth.resolve(h, &grid)?;
        let vals: Vec<f64> = (0..m.n_paths as u64)
            .into_par_iter()
            .map(|r| occupation_integral(&g.sample(derive_seed(master, r)), m.t, |u| kernel.g(u, m.x, eps)))
            .collect::<Result<_>>()?;
        let (est, se) = (mean(&vals), std_error(&vals));
        let exact = expected_local_time(h, m.x, m.t)?;
        let rel = (est / exact - 1.0).abs();
        let params = json!({
            "hurst": h.value(), "x": m.x, "t": m.t, "epsilon": eps, "n_paths": m.n_paths, "n_steps": cfg.n_steps,
            "expected": exact, "estimate": est, "std_error": se,
        });
        mean_stats.push(params.clone());
        checks.push(Check::at_most(&format!("local_time_mean[H={}]", h.value()), params, rel, m.tolerance));
    }

    // Histogram occupation measure against the direct time integral.
    let o = &cfg.occupation;
    let master = derive_seed(cfg.master_seed, 200);
    seeds.push(master);
    let mut fs = Stream::new(derive_seed(cfg.master_seed, 201));
    let functions: Vec<TestFunction> = (0..o.n_functions).map(|_| TestFunction::random(&mut fs)).collect();
    let g = FbmGenerator::new(o.hurst, grid, cfg.method)?;
    let t_end = cfg.horizon;
    // per path: (relative error, absolute error) per function
    let errs: Vec<Vec<(f64, f64)>> = (0..o.n_paths as u64)
        .into_par_iter()
        .map(|r| {
            let path = g.sample(derive_seed(master, r));
            let (lo, hi) = path.range();
            let x_lo = o.dx * (lo / o.dx).floor();
            let n_bins = ((hi - x_lo) / o.dx).floor() as usize + 1;
            let hist = occupation_histogram(&path, t_end, x_lo, x_lo + n_bins as f64 * o.dx, n_bins)?;
            functions
                .iter()
                .map(|f| {
                    let via = hist.integrate(|u| f.eval(u));
                    let direct = occupation_integral(&path, t_end, |u| f.eval(u))?;
                    let scale = occupation_integral(&path, t_end, |u| f.eval(u).abs())?;
                    let d = (via - direct).abs();
                    Ok((if scale > 0.0 { d / scale } else { 0.0 }, d))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut worst = (0.0, 0usize, 0usize);
    let mut worst_c: f64 = 0.0;
    for (r, row) in errs.iter().enumerate() {
        for (j, &(rel, abs)) in row.iter().enumerate() {
            if rel > worst.0 {
                worst = (rel, r, j);
            }
            worst_c = worst_c.max(abs / o.dx);
        }
    }
    checks.push(
        Check::at_most(
            "occupation_consistency",
            json!({
                "hurst": o.hurst.value(), "n_paths": o.n_paths, "n_functions": o.n_functions, "dx": o.dx,
                "dt": grid.dt(), "observed_c": worst_c,
            }),
            worst.0,
            o.tolerance,
        )
        .with_witness(json!({"path": worst.1, "function": worst.2})),
    );

    // Fourier and kernel fields on the same paths.
    let f = &cfg.fields;
    let master = derive_seed(cfg.master_seed, 300);
    seeds.push(master);
    let x_grid = linspace(f.x_lo, f.x_hi, f.n_x);
    let ens_cfg = |estimator| EnsembleConfig {
        n_paths: f.n_paths,
        horizon: cfg.horizon,
        n_steps: cfg.n_steps,
        method: cfg.method,
        estimator,
        x_grid: x_grid.clone(),
        t_grid: f.t_grid.clone(),
        master_seed: master,
        max_values: crate::convergence::default_max_values(),
    };
    let kern = build_ensemble(
        f.hurst,
        &ens_cfg(EstimatorConfig::Kernel {
            bandwidth: Bandwidth::Fixed { epsilon: f.epsilon },
        }),
    )?;
    let four = build_ensemble(
        f.hurst,
        &ens_cfg(EstimatorConfig::Fourier {
            n_cutoff: f.n_cutoff,
            du: f.du,
        }),
    )?;
    let mut agreement = (0.0, json!(null));
    let mut per_path = vec![];
    for (r, (k, q)) in kern.fields.iter().zip(&four.fields).enumerate() {
        let scale = k.max_abs();
        let mut best = (0.0, 0);
        for (i, (a, b)) in k.values.iter().zip(&q.values).enumerate() {
            let d = (a - b).abs();
            if d > best.0 {
                best = (d, i);
            }
        }
        let ratio = best.0 / scale;
        per_path.push(ratio);
        if ratio > agreement.0 {
            let (it, ix) = (best.1 / k.nx(), best.1 % k.nx());
            agreement = (ratio, json!({"path": r, "x": k.x_grid[ix], "t": k.t_grid[it]}));
        }
    }
    checks.push(
        Check::at_most(
            "estimator_agreement",
            json!({
                "hurst": f.hurst.value(), "n_paths": f.n_paths, "n_steps": cfg.n_steps, "epsilon": f.epsilon,
                "n_cutoff": f.n_cutoff, "du": f.du, "x_range": [f.x_lo, f.x_hi], "n_x": f.n_x,
            }),
            agreement.0,
            f.agreement_tolerance,
        )
        .with_witness(agreement.1),
    );

    let ident = identification_check(&four, &f.probes, &f.eps_list)?;
    let ident_kernel = identification_check(&kern, &f.probes, &f.eps_list)?;
    checks.push(
        Check::at_most(
            "identification",
            json!({
                "estimator": "fourier", "eps_list": f.eps_list, "probes": f.probes.points,
                "per_epsilon": ident.per_epsilon,
            }),
            ident.max_discrepancy,
            f.identification_tolerance,
        )
        .with_witness(json!({
            "path": ident.witness.0, "x": ident.witness.1, "t": ident.witness.2, "epsilon": ident.witness.3,
        })),
    );

    // Halving the time step moves the kernel field by at most the Lipschitz
    // bound of the discarded steps.
    let generator = kern.generator()?;
    let coarse_grid = TimeGrid::new(cfg.horizon, cfg.n_steps / 2)?;
    let lip = PHI_PRIME_MAX / (f.epsilon * f.epsilon);
    let g_max = kernel.phi(0.0) / f.epsilon;
    let dt = grid.dt();
    let refinement: Vec<(f64, f64)> = (0..kern.len())
        .into_par_iter()
        .map(|r| {
            let path = kern.path(&generator, r);
            let coarse_vals: Vec<f64> = path.values().iter().step_by(2).copied().collect();
            let coarse = SamplePath::from_values(coarse_grid, coarse_vals, f.hurst, path.seed())?;
            let kc = kernel_local_time(&coarse, &x_grid, &f.t_grid, f.epsilon)?;
            let kf = &kern.fields[r];
            let v = path.values();
            // (largest change / bound, largest change)
            let mut worst: (f64, f64) = (0.0, 0.0);
            for (it, &t) in f.t_grid.iter().enumerate() {
                let jf = grid.steps_before(t);
                let jc = coarse_grid.steps_before(t);
                let paired = jc.min(jf / 2);
                let moved: f64 = (0..paired).map(|k| (v[2 * k + 1] - v[2 * k]).abs()).sum();
                let unpaired = (jf as f64 - 2.0 * jc as f64).abs();
                let bound = dt * lip * moved + unpaired * dt * g_max + 1e-12 * kf.max_abs();
                for ix in 0..kf.nx() {
                    let d = (kf.get(ix, it) - kc.get(ix, it)).abs();
                    worst = (worst.0.max(d / bound), worst.1.max(d));
                }
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    let ratio = refinement.iter().map(|w| w.0).fold(0.0, f64::max);
    let max_change = refinement.iter().map(|w| w.1).fold(0.0, f64::max);
    checks.push(Check::at_most(
        "refinement_consistency",
        json!({"epsilon": f.epsilon, "n_steps": cfg.n_steps, "coarse_steps": cfg.n_steps / 2, "max_change": max_change}),
        ratio,
        1.0,
    ));

    for r in 0..f.dump_fields.min(f.n_paths) {
        files.field(format!("field_kernel_{r}"), &kern.fields[r])?;
        files.field(format!("field_fourier_{r}"), &four.fields[r])?;
    }
    if !kern.is_empty() {
        let it = kern.fields[0].nt() - 1;
        let profile = |fl: &LocalTimeField| (0..fl.nx()).map(|ix| (fl.x_grid[ix], fl.get(ix, it))).collect();
        files.svg(
            "field_profile.svg",
            line_chart(
                &format!("Local time at t = {}", f.t_grid[it]),
                "x",
                "L(x, t)",
                &[Series::line("kernel", profile(&kern.fields[0])), Series::line("fourier", profile(&four.fields[0]))],
            ),
        )?;
    }

    Ok(Outcome {
        checks,
        statistics: json!({
            "mean": mean_stats,
            "agreement_per_path": per_path,
            "identification_fourier": ident,
            "identification_kernel": ident_kernel,
            "refinement_max_change": max_change,
        }),
        artifacts: files.names,
        notes,
        seed_ledger: ledger(cfg.master_seed, seeds),
    })
}

// ---------------------------------------------------------------------------
// verify

pub(crate) fn verify(cfg: &VerifyConfig, _out: &Path) -> Result<Outcome> {
    let checks = run_suite(&cfg.suite)?;
    Ok(Outcome {
        checks,
        statistics: json!({}),
        artifacts: vec![],
        notes: vec![],
        seed_ledger: ledger(cfg.suite.seed, vec![]),
    })
}

// ---------------------------------------------------------------------------
// scaling

pub(crate) fn scaling(cfg: &ScalingConfig, out: &Path) -> Result<Outcome> {
    let mut checks = vec![];
    let mut seeds = vec![];
    let mut notes = vec![];
    let mut files = Artifacts::new(out);
    let mut hs = cfg.hurst.clone();
    hs.sort_by(|a, b| a.value().total_cmp(&b.value()));
    let (x0, t0) = cfg.base;
    let mut t_grid = vec![t0];
    t_grid.extend(cfg.lags.iter().map(|l| t0 + l));
    let order = cfg.moment_order as f64;

    let mut slopes = vec![];
    let mut fits = vec![];
    let mut plot = vec![];
    for (i, &h) in hs.iter().enumerate() {
        let master = derive_seed(cfg.master_seed, 400 + i as u64);
        seeds.push(master);
        let e = build_ensemble(
            h,
            &EnsembleConfig {
                n_paths: cfg.n_paths,
                horizon: cfg.horizon,
                n_steps: cfg.n_steps,
                method: cfg.method,
                estimator: EstimatorConfig::Kernel { bandwidth: cfg.bandwidth },
                x_grid: vec![x0],
                t_grid: t_grid.clone(),
                master_seed: master,
                max_values: crate::convergence::default_max_values(),
            },
        )?;
        notes.extend(e.fallback.as_ref().map(|f| format!("H={}: {f}", h.value())));
        let ms = moment_scaling(&e, cfg.moment_order, Direction::Time, cfg.base, &cfg.lags)?;
        let target = order * (1.0 - h.value()) - cfg.slope_margin;
        let params = json!({
            "hurst": h.value(), "m": cfg.moment_order, "n_paths": cfg.n_paths, "n_steps": cfg.n_steps,
            "lags": ms.lags, "intercept": ms.fit.intercept, "r2": ms.fit.r2, "dropped_lags": ms.dropped_lags,
        });
        checks.push(Check::at_least(&format!("moment_slope[H={}]", h.value()), params.clone(), ms.fit.slope, target));
        checks.push(Check::at_least(&format!("moment_fit_r2[H={}]", h.value()), params, ms.fit.r2, cfg.min_r2));
        files.csv(
            format!("moments_H{}.csv", h.value()),
            &["lag", "log_moment"],
            ms.lags.iter().zip(&ms.log_moments).map(|(l, m)| vec![*l, *m]),
        )?;
        let pts: Vec<(f64, f64)> = ms.log_lags.iter().copied().zip(ms.log_moments.iter().copied()).collect();
        let fit_line = pts.iter().map(|&(x, _)| (x, ms.fit.intercept + ms.fit.slope * x)).collect();
        plot.push(Series::markers(format!("H = {}", h.value()), pts));
        plot.push(Series::line(format!("fit, slope {:.3}", ms.fit.slope), fit_line));
        slopes.push(ms.fit.slope);
        fits.push(ms);
    }
    if slopes.len() >= 2 {
        let gap = slopes.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
        checks.push(
            Check::at_least(
                "slope_ordering",
                json!({"hurst": hs.iter().map(|h| h.value()).collect::<Vec<_>>(), "slopes": slopes}),
                gap,
                0.0,
            )
            .and(gap > 0.0),
        );
    }
    files.svg("scaling.svg", line_chart("Moment scaling", "log lag", "log moment", &plot))?;

    // Oscillation envelopes around h0.
    let m = &cfg.modulus;
    let mut hs_mod = vec![m.h0];
    hs_mod.extend(&m.hurst);
    let mut moduli = vec![];
    for (j, &h) in hs_mod.iter().enumerate() {
        let master = derive_seed(cfg.master_seed, 500 + j as u64);
        seeds.push(master);
        let e = build_ensemble(
            h,
            &EnsembleConfig {
                n_paths: m.n_paths,
                horizon: cfg.horizon,
                n_steps: m.n_steps,
                method: cfg.method,
                estimator: EstimatorConfig::Kernel { bandwidth: m.bandwidth },
                x_grid: linspace(m.x_lo, m.x_hi, m.n_x),
                t_grid: linspace(0.0, cfg.horizon, m.n_t),
                master_seed: master,
                max_values: crate::convergence::default_max_values(),
            },
        )?;
        moduli.push(modulus_statistics(&e)?);
    }
    let base = &moduli[0];
    let env_t = Envelope::fit(&base.time_lags, &base.time_osc)?;
    let env_s = Envelope::fit(&base.space_lags, &base.space_osc)?;
    let mut worst = (0.0, json!(null));
    for ms in &moduli[1..] {
        for (dir, r) in [
            ("time", env_t.worst_ratio(&ms.time_lags, &ms.time_osc)),
            ("space", env_s.worst_ratio(&ms.space_lags, &ms.space_osc)),
        ] {
            if r > worst.0 {
                worst = (r, json!({"hurst": ms.hurst, "direction": dir}));
            }
        }
    }
    checks.push(
        Check::at_most(
            "modulus_envelope",
            json!({
                "h0": m.h0.value(), "hurst": m.hurst.iter().map(|h| h.value()).collect::<Vec<_>>(),
                "n_paths": m.n_paths, "time_envelope": env_t, "space_envelope": env_s,
            }),
            worst.0,
            m.envelope_factor,
        )
        .with_witness(worst.1),
    );
    let mut rows = vec![];
    for ms in &moduli {
        rows.extend(ms.time_lags.iter().zip(&ms.time_osc).map(|(l, o)| vec![ms.hurst, 0.0, *l, *o]));
        rows.extend(ms.space_lags.iter().zip(&ms.space_osc).map(|(l, o)| vec![ms.hurst, 1.0, *l, *o]));
    }
    files.csv("modulus.csv".into(), &["h", "direction", "lag", "osc"], rows)?;
    let series: Vec<Series> = moduli
        .iter()
        .map(|ms| Series::line(format!("H = {}", ms.hurst), ms.time_lags.iter().copied().zip(ms.time_osc.iter().copied()).collect()))
        .collect();
    files.svg("modulus_time.svg", line_chart("Time oscillation", "lag", "mean sup |L(x,t+h) - L(x,t)|", &series))?;

    Ok(Outcome {
        checks,
        statistics: json!({"moment_scaling": fits, "modulus": moduli}),
        artifacts: files.names,
        notes,
        seed_ledger: ledger(cfg.master_seed, seeds),
    })
}

// ---------------------------------------------------------------------------
// converge

fn curve_rows(c: &ConvergenceCurve) -> Vec<Vec<f64>> {
    (0..c.h_values.len())
        .map(|i| {
            let (lo, hi) = c.ci(i);
            vec![c.h_values[i], c.distances[i], lo, hi]
        })
        .collect()
}

fn curve_series(c: &ConvergenceCurve, label: &str) -> Vec<Series> {
    let pts = |v: &dyn Fn(usize) -> f64| (0..c.h_values.len()).map(|i| (c.h_values[i], v(i))).collect();
    vec![
        Series::line(label, pts(&|i| c.distances[i])),
        Series::markers(format!("{label} null q95"), pts(&|i| c.ci_halfwidths[i])),
    ]
}

pub(crate) fn converge(cfg: &ConvergeConfig, out: &Path) -> Result<Outcome> {
    let mut files = Artifacts::new(out);
    let mut checks = vec![];
    let c = &cfg.curve;
    let curve = convergence_curve(cfg.h_center, &cfg.h_list, c)?;
    let h_list: Vec<f64> = cfg.h_list.iter().map(|h| h.value()).collect();
    checks.push(
        Check::at_most(
            "convergence_trend",
            json!({
                "h_center": cfg.h_center.value(), "h_list": h_list, "n_paths": c.ensemble.n_paths,
                "probes": c.probes.points, "distances": curve.distances, "p_values": curve.p_values,
                "tau": curve.trend.tau, "exact": curve.trend.exact,
            }),
            curve.trend.p_lower,
            cfg.alpha,
        )
        .and(curve.trend.tau < 0.0),
    );
    if let Some(nt) = &curve.null_check {
        checks.push(Check::at_least(
            "same_h_null",
            json!({"h": cfg.h_center.value(), "energy_distance": nt.statistic, "n_permutations": nt.n_permutations}),
            nt.p_value,
            cfg.null_alpha,
        ));
    }
    files.csv("curve.csv".into(), &["h", "distance", "ci_lo", "ci_hi"], curve_rows(&curve))?;
    let mut plot = curve_series(&curve, "local time");

    let mut masters = vec![c.center_seed];
    masters.extend(&c.seeds);
    masters.extend(c.null_seed);
    let mut path_curve = None;
    if let Some(pl) = &cfg.path_level {
        let p = &pl.curve;
        let pc = path_convergence_curve(cfg.h_center, &pl.h_list, p)?;
        checks.push(
            Check::at_most(
                "path_convergence_trend",
                json!({
                    "h_center": cfg.h_center.value(), "h_list": pc.h_values, "n_paths": p.n_paths, "times": p.times,
                    "distances": pc.distances, "p_values": pc.p_values, "tau": pc.trend.tau,
                }),
                pc.trend.p_lower,
                cfg.alpha,
            )
            .and(pc.trend.tau < 0.0),
        );
        files.csv("path_curve.csv".into(), &["h", "distance", "ci_lo", "ci_hi"], curve_rows(&pc))?;
        plot.extend(curve_series(&pc, "path"));
        masters.push(p.center_seed);
        masters.extend(&p.seeds);
        path_curve = Some(pc);
    }
    files.svg("convergence.svg", line_chart("Energy distance to H0", "H", "energy distance", &plot))?;

    let notes = curve.fallbacks.clone();
    Ok(Outcome {
        checks,
        statistics: json!({"curve": curve, "path_curve": path_curve}),
        artifacts: files.names,
        notes,
        seed_ledger: ledger(c.center_seed, masters),
    })
}
