//! Kernel and Fourier estimates of the local time of a single Brownian path
//! on an `(x, t)` grid.

use fbm_localtime::fbm::HurstParam;
use fbm_localtime::occupation::{fourier_local_time, kernel_local_time, linspace};
use fbm_localtime::path_gen::{FbmGenerator, Method, TimeGrid};

fn main() -> fbm_localtime::Result<()> {
    let grid = TimeGrid::new(1.0, 2048)?;
    let gen = FbmGenerator::new(HurstParam::new(0.5)?, grid, Method::Circulant)?;
    let path = gen.sample(7);
    let xs = linspace(-2.0, 2.0, 81);
    let ts = [0.5, 1.0];
    let kernel = kernel_local_time(&path, &xs, &ts, 0.05)?;
    let fourier = fourier_local_time(&path, &xs, &ts, 100.0, 0.05)?;

    println!("{:>6} {:>10} {:>10}", "x", "kernel", "fourier");
    for (ix, x) in xs.iter().enumerate().step_by(8) {
        println!("{x:>6.2} {:>10.4} {:>10.4}", kernel.get(ix, 1), fourier.get(ix, 1));
    }
    // total mass of L(., 1) is the elapsed time
    let dx = xs[1] - xs[0];
    let mass: f64 = (0..xs.len()).map(|ix| kernel.get(ix, 1)).sum::<f64>() * dx;
    println!("kernel mass at t=1: {mass:.4}");
    Ok(())
}
