//! Coordinate-search the four loop parameters (filter bandwidth, squeezing,
//! cavity linewidth, blend weight) at a single photon flux, starting from
//! the scaling-law prediction. Writes the evaluation trace to
//! `search_trace.csv`.
//!
//!     cargo run --release --example optimize_point [flux_over_kappa]

use squeezetrack::optimizer::{
    coordinate_search, write_search_csv, ParamPoint, SearchSpec,
};
use squeezetrack::scaling::{predict_parameters, ScalingConstants};
use squeezetrack::simulator::SimConfig;
use squeezetrack::spectrum::SpectrumParams;

fn main() -> squeezetrack::Result<()> {
    let flux: f64 = std::env::args()
        .nth(1)
        .map(|a| a.parse().expect("flux must be a number"))
        .unwrap_or(1e3);
    let p = 2.0;
    let pred = predict_parameters(p, flux, &ScalingConstants::unity())?;

    let spectrum = SpectrumParams::with_default_regularization(p, 1.0)?;
    let template = SimConfig::new(spectrum, flux, 1.0, 1.0, 0.0, 0.5);
    let initial = ParamPoint::from_prediction(&pred);

    let mut spec = SearchSpec::new(template, initial);
    spec.search_runs = 16;
    spec.confirm_runs = 64;
    spec.max_cycles = 8;

    println!(
        "searching at flux/kappa = {flux:.3e} from the unit-prefactor prediction: \
         chi = {:.4}, e^r = {:.4}, gamma = {:.4}, delta = {:.4}",
        initial.chi_over_kappa,
        initial.er(),
        initial.gamma_over_kappa,
        initial.delta
    );

    let result = coordinate_search(&spec)?;
    write_search_csv(
        &result.trace.entries,
        std::io::BufWriter::new(std::fs::File::create("search_trace.csv")?),
    )?;

    println!(
        "\nstopped after {} evaluations ({:?}, final step factor {:.4})",
        result.evaluations, result.stop, result.final_step_factor
    );
    println!(
        "best point: chi = {:.4}, e^r = {:.4}, gamma = {:.4}, delta = {:.4}",
        result.best.chi_over_kappa,
        result.best.er(),
        result.best.gamma_over_kappa,
        result.best.delta
    );
    println!(
        "confirmed MSE {:.6e} +- {:.1e} (prediction at unit prefactors {:.6e})",
        result.mse, result.stderr, pred.mse
    );
    println!(
        "movement from the prediction: chi x{:.3}, e^r x{:.3}, gamma x{:.3}, delta x{:.3}",
        result.best.chi_over_kappa / initial.chi_over_kappa,
        result.best.er() / initial.er(),
        result.best.gamma_over_kappa / initial.gamma_over_kappa,
        result.best.delta / initial.delta
    );
    println!("wrote search_trace.csv");
    Ok(())
}
