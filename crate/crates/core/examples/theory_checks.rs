//! Numerical checks of the covariance inequalities behind the local-time
//! convergence argument.

use fbm_localtime::fbm::HurstParam;
use fbm_localtime::theory_checks::{
    check_convexity_inequality, check_gaussian_moment_integral, check_variance_lower_bound, correlation_sup_difference,
    determinant_minimum,
};

fn main() -> fbm_localtime::Result<()> {
    let v = check_variance_lower_bound(4, 500, 1)?;
    println!("variance bound, dim 4: worst ratio {:.4}", v.worst_ratio);

    let m = check_gaussian_moment_integral(2.0, 0.5)?;
    println!("moment integral a=2 alpha=0.5: rel err {:.2e}", m.relative_error());

    let c = check_convexity_inequality(HurstParam::new(0.75)?, 5000, 2)?;
    println!("convexity H=0.75: worst margin {:.3e}", c.worst_margin);

    for h in [0.3, 0.5] {
        let d = determinant_minimum(HurstParam::new(h)?, 4, 400, 3, 1.0)?;
        println!("H={h}: min det of increment correlations (m=4) {:.4e}", d.min_det);
    }

    let h0 = HurstParam::new(0.75)?;
    for d in [0.1, 0.05, 0.02] {
        let s = correlation_sup_difference(h0, HurstParam::new(0.75 + d)?, 2000, 4);
        println!("sup |corr_H - corr_H0| for H - H0 = {d}: {:.4}", s.value);
    }
    Ok(())
}
