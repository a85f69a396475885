//! Occupation measure of a path and the occupation formula
//! `∫_0^t g(X_s) ds = ∫ g(x) L(x, t) dx`.

use fbm_localtime::fbm::HurstParam;
use fbm_localtime::occupation::{kernel_local_time, linspace, occupation_histogram, occupation_integral};
use fbm_localtime::path_gen::{FbmGenerator, Method, TimeGrid};

fn main() -> fbm_localtime::Result<()> {
    let grid = TimeGrid::new(1.0, 2048)?;
    let path = FbmGenerator::new(HurstParam::new(0.6)?, grid, Method::Circulant)?.sample(3);
    let (lo, hi) = path.range();
    let g = |y: f64| (1.0 - y * y).max(0.0) * (1.0 + y);

    let direct = occupation_integral(&path, 1.0, g)?;
    let hist = occupation_histogram(&path, 1.0, lo - 0.01, hi + 0.01, 200)?;
    let xs = linspace(lo - 0.5, hi + 0.5, 801);
    let field = kernel_local_time(&path, &xs, &[1.0], 0.02)?;
    let dx = xs[1] - xs[0];
    let via_field: f64 = xs.iter().enumerate().map(|(i, &x)| g(x) * field.get(i, 0)).sum::<f64>() * dx;

    println!("time integral      {direct:.6}");
    println!("histogram integral {:.6} (mass {:.4})", hist.integrate(g), hist.total());
    println!("local-time formula {via_field:.6}");
    Ok(())
}
