//! Energy distance between local-time ensembles at `H` and at `H0 = 0.6`,
//! for `H` approaching `H0`, with a Kendall trend test.

use fbm_localtime::convergence::{convergence_curve, CurveConfig, EnsembleConfig, EstimatorConfig, ProbeSet};
use fbm_localtime::fbm::HurstParam;
use fbm_localtime::occupation::Bandwidth;
use fbm_localtime::path_gen::Method;

fn main() -> fbm_localtime::Result<()> {
    let cfg = CurveConfig {
        ensemble: EnsembleConfig {
            n_paths: 400,
            horizon: 1.0,
            n_steps: 512,
            method: Method::Circulant,
            estimator: EstimatorConfig::Kernel {
                bandwidth: Bandwidth::Fixed { epsilon: 0.05 },
            },
            x_grid: vec![0.0, 0.5],
            t_grid: vec![0.5, 1.0],
            master_seed: 0,
            max_values: 1_000_000,
        },
        probes: ProbeSet::default_for(1.0),
        n_permutations: 100,
        center_seed: 10,
        seeds: vec![11, 12, 13, 14],
        null_seed: Some(15),
        permutation_seed: 1,
    };
    let h_list: Vec<HurstParam> = [0.9, 0.8, 0.7, 0.65].into_iter().map(HurstParam::new).collect::<Result<_, _>>()?;
    let curve = convergence_curve(HurstParam::new(0.6)?, &h_list, &cfg)?;
    for (i, h) in curve.h_values.iter().enumerate() {
        let (lo, hi) = curve.ci(i);
        println!("H={h}: distance {:.4} [{lo:.4}, {hi:.4}], p {:.3}", curve.distances[i], curve.p_values[i]);
    }
    println!("Kendall tau {:.3}, p {:.4}", curve.trend.tau, curve.trend.p_lower);
    if let Some(null) = &curve.null_check {
        println!("same-H null: distance {:.4}, p {:.3}", null.statistic, null.p_value);
    }
    Ok(())
}
