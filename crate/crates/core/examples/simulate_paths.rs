//! Draws one fBm path per Hurst index with both generators and prints the
//! empirical increment variance against `dt^{2H}`.

use fbm_localtime::fbm::HurstParam;
use fbm_localtime::path_gen::{FbmGenerator, Method, TimeGrid};

fn main() -> fbm_localtime::Result<()> {
    let grid = TimeGrid::new(1.0, 1024)?;
    for h in [0.25, 0.5, 0.75] {
        let hurst = HurstParam::new(h)?;
        for method in [Method::Cholesky, Method::Circulant] {
            let gen = FbmGenerator::new(hurst, grid.clone(), method)?;
            let path = gen.sample(42);
            let v = path.values();
            let incr_var = v.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / grid.n_steps() as f64;
            let (lo, hi) = path.range();
            println!(
                "H={h} {method:?}: B_1 = {:+.4}, range [{lo:+.3}, {hi:+.3}], mean sq increment / dt^2H = {:.4}",
                path.value_at(1.0),
                incr_var / grid.dt().powf(2.0 * h)
            );
        }
    }
    Ok(())
}
