//! Sweep the photon flux across two decades, re-optimizing the loop
//! parameters at each point (warm-started along the scaling laws), and fit
//! the power law of the minimum mean-square error. At p = 2 the fitted
//! exponent should approach -2/3, beating the -1/2 of the standard
//! quantum limit. Writes `sweep.csv` and `sweep.json`.
//!
//!     cargo run --release --example heisenberg_sweep

use squeezetrack::optimizer::{sweep_flux, write_sweep_csv, write_sweep_json, ParamPoint, SearchSpec};
use squeezetrack::scaling::{predict_parameters, ScalingConstants};
use squeezetrack::simulator::SimConfig;
use squeezetrack::spectrum::SpectrumParams;

fn main() -> squeezetrack::Result<()> {
    let p = 2.0;
    let grid = [1e2, 1e3, 1e4];
    let pred = predict_parameters(p, grid[0], &ScalingConstants::unity())?;

    let spectrum = SpectrumParams::with_default_regularization(p, 1.0)?;
    let mut template = SimConfig::new(spectrum, grid[0], 1.0, 1.0, 0.0, 0.5);
    template.base_seed = 17;

    let mut spec = SearchSpec::new(template, ParamPoint::from_prediction(&pred));
    spec.search_runs = 8;
    spec.confirm_runs = 64;
    spec.max_cycles = 10;

    println!("optimizing over flux/kappa in {grid:?} (takes a few minutes)...");
    let table = sweep_flux(&spec, &grid)?;

    write_sweep_csv(&table, std::io::BufWriter::new(std::fs::File::create("sweep.csv")?))?;
    write_sweep_json(&table, std::io::BufWriter::new(std::fs::File::create("sweep.json")?))?;

    println!("\n{:>10} {:>10} {:>10} {:>10} {:>10} {:>12} {:>10}", "flux/kappa", "chi", "e^r", "gamma", "delta", "MSE", "MSE*f^2/3");
    for point in &table.points {
        match &point.result {
            Some(res) => println!(
                "{:>10.1e} {:>10.3} {:>10.3} {:>10.3} {:>10.4} {:>12.4e} {:>10.3}",
                point.flux_over_kappa,
                res.best.chi_over_kappa,
                res.best.er(),
                res.best.gamma_over_kappa,
                res.best.delta,
                res.mse,
                res.mse * point.flux_over_kappa.powf(2.0 / 3.0)
            ),
            None => println!(
                "{:>10.1e} {}",
                point.flux_over_kappa,
                point.gap.as_deref().unwrap_or("gap")
            ),
        }
    }

    println!();
    for (name, fit) in table.fits.named() {
        println!(
            "fit {name:<6} exponent {:+.4} +- {:.4}, prefactor {:.4}",
            fit.exponent, fit.stderr, fit.prefactor
        );
    }
    if let Some(fit) = &table.fits.mse {
        println!(
            "\nMSE power law {:+.4} vs standard quantum limit {:+.4} and squeezed-light limit {:+.4}",
            fit.exponent,
            -(p - 1.0) / p,
            -2.0 * (p - 1.0) / (p + 1.0)
        );
    }
    println!("wrote sweep.csv and sweep.json");
    Ok(())
}
