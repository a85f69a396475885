//! Log-log slope of `E|L(0, h)|^2` against `h` for an ensemble of kernel
//! local times; the slope should be close to `2(1 - H)`.

use fbm_localtime::convergence::{build_ensemble, moment_scaling, Direction, EnsembleConfig, EstimatorConfig};
use fbm_localtime::fbm::HurstParam;
use fbm_localtime::occupation::Bandwidth;
use fbm_localtime::path_gen::Method;

fn main() -> fbm_localtime::Result<()> {
    let lags: Vec<f64> = (1..=5).map(|k| 0.5f64.powi(k)).rev().collect();
    for h in [0.3, 0.7] {
        let cfg = EnsembleConfig {
            n_paths: 500,
            horizon: 1.0,
            n_steps: 512,
            method: Method::Circulant,
            estimator: EstimatorConfig::Kernel {
                bandwidth: Bandwidth::StepScaled { c: 1.0 },
            },
            x_grid: vec![0.0],
            t_grid: std::iter::once(0.0).chain(lags.iter().copied()).collect(),
            master_seed: 5,
            max_values: 1_000_000,
        };
        let e = build_ensemble(HurstParam::new(h)?, &cfg)?;
        let s = moment_scaling(&e, 2, Direction::Time, (0.0, 0.0), &lags)?;
        println!(
            "H={h}: slope {:.3} (2(1-H) = {:.1}), r2 {:.4}",
            s.fit.slope,
            2.0 * (1.0 - h),
            s.fit.r2
        );
    }
    Ok(())
}
