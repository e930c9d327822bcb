//! Fit T = a * x^c to synthetic sweep data and compare against the
//! linear alternative.

use thermognn::fit::{fit_linear, fit_power_law};

fn main() -> thermognn::Result<()> {
    // T proportional to eta^2, with a touch of multiplicative noise
    let xs = [7e-4, 1e-3, 1.5e-3, 2e-3, 3e-3];
    let noise = [1.02, 0.97, 1.01, 0.99, 1.03];
    let ys: Vec<f64> = xs
        .iter()
        .zip(noise)
        .map(|(&x, n)| 5.0 * x * x * n)
        .collect();

    let pw = fit_power_law("conv1", &xs, &ys)?;
    println!(
        "power law: a = {:.4}, exponent = {:.4}, r2 = {:.5}",
        pw.a, pw.c_or_b, pw.r2
    );

    let lin = fit_linear("conv1", &xs, &ys)?;
    println!(
        "linear:    slope = {:.6}, intercept = {:.3e}, r2 = {:.5}",
        lin.a, lin.c_or_b, lin.r2
    );
    Ok(())
}
