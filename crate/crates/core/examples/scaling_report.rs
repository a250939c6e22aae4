//! Print the parameter scaling laws, the analytic limit constants, and
//! the consistency-condition report across several photon fluxes.
//!
//!     cargo run --release --example scaling_report [p]

use squeezetrack::scaling::{
    check_conditions, heisenberg_constant, predict_parameters, pulsed_constant,
    pulsed_prefactor, ScalingConstants,
};

fn main() -> squeezetrack::Result<()> {
    let p: f64 = std::env::args()
        .nth(1)
        .map(|a| a.parse().expect("p must be a number"))
        .unwrap_or(2.0);
    let constants = ScalingConstants::calibrated(p);

    println!("spectral exponent p = {p}");
    println!(
        "prefactors: er {:.4}, chi {:.4}, gamma {:.4}, delta {:.4}, mse {:.4}\n",
        constants.er, constants.chi, constants.gamma, constants.delta, constants.mse
    );
    println!(
        "exponents: e^r ~ f^{:.4}, chi ~ f^{:.4}, gamma ~ f^{:.4}, delta ~ f^{:.4}, MSE ~ f^{:.4}",
        (p - 1.0) / (2.0 * p + 2.0),
        2.0 / (p + 1.0),
        (p + 3.0) / (2.0 * p + 2.0),
        -(p - 1.0) / (p + 2.0),
        -2.0 * (p - 1.0) / (p + 1.0)
    );
    println!(
        "continuous-limit constant c_Z({p}) = {:.8}",
        heisenberg_constant(p)?
    );
    println!(
        "pulsed-limit constant     c_A({p}) = {:.8} ({}x the single-shot bound)\n",
        pulsed_constant(p)?,
        pulsed_prefactor(p)
    );

    println!(
        "{:>10} {:>10} {:>10} {:>10} {:>10} {:>12} {:>12} {:>6}",
        "flux/kappa", "e^r", "chi", "gamma", "delta", "MSE", "SQL", "cond"
    );
    for exp in [2, 3, 4, 5, 6, 7, 8] {
        let flux = 10f64.powi(exp);
        let pred = predict_parameters(p, flux, &constants)?;
        let cond = check_conditions(&pred);
        println!(
            "{flux:>10.1e} {:>10.3} {:>10.3e} {:>10.3e} {:>10.4} {:>12.4e} {:>12.4e} {:>6}",
            pred.er,
            pred.chi_over_kappa,
            pred.gamma_over_kappa,
            pred.delta,
            pred.mse,
            pred.sql_mse,
            if cond.all_pass { "ok" } else { "FAIL" }
        );
    }
    println!("\nMSE/SQL falls like f^{:.4}: squeezing buys a genuinely better power law", -2.0 * (p - 1.0) / (p + 1.0) + (p - 1.0) / p);
    Ok(())
}
