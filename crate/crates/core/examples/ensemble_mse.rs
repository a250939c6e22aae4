//! Measure the tracking mean-square error of a 64-run ensemble at the
//! calibrated operating point and compare it with the scaling-law
//! prediction and the standard quantum limit.
//!
//!     cargo run --release --example ensemble_mse [flux_over_kappa]

use squeezetrack::scaling::{check_conditions, predict_parameters, ScalingConstants};
use squeezetrack::simulator::{run_ensemble, SimConfig};
use squeezetrack::spectrum::SpectrumParams;

fn main() -> squeezetrack::Result<()> {
    let flux: f64 = std::env::args()
        .nth(1)
        .map(|a| a.parse().expect("flux must be a number"))
        .unwrap_or(1e4);
    let p = 2.0;
    let pred = predict_parameters(p, flux, &ScalingConstants::calibrated(p))?;
    let report = check_conditions(&pred);

    let spectrum = SpectrumParams::with_default_regularization(p, 1.0)?;
    let mut config = SimConfig::new(
        spectrum,
        flux,
        pred.gamma_over_kappa,
        pred.chi_over_kappa,
        pred.er.ln(),
        pred.delta.min(1.0),
    );
    config.base_seed = 2;

    println!(
        "flux/kappa = {flux:.3e}; operating point chi = {:.4}, e^r = {:.4}, gamma = {:.4}, delta = {:.4}",
        config.chi_over_kappa,
        config.r.exp(),
        config.gamma_over_kappa,
        config.delta
    );
    println!(
        "consistency conditions: C1 {:.2} C2 {:.2} C3 {:.2} C4 {:.2} (all pass: {})",
        report.c1_ratio, report.c2_ratio, report.c3_ratio, report.c4_ratio, report.all_pass
    );

    let result = run_ensemble(&config)?;
    println!(
        "\n{} runs x {} samples in {:.1}s",
        config.runs, result.effective_samples, result.wall_time_s
    );
    println!("measured MSE     {:.6e} +- {:.1e}", result.mse, result.stderr_mse);
    println!("  holevo form    {:.6e}", result.holevo);
    println!("  standard form  {:.6e}", result.standard);
    println!("predicted MSE    {:.6e}", pred.mse);
    println!("SQL (no squeezing, no feedforward) {:.6e}", pred.sql_mse);
    println!(
        "measured / predicted = {:.3}, measured / SQL = {:.3}",
        result.mse / pred.mse,
        result.mse / pred.sql_mse
    );
    Ok(())
}
