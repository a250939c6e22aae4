//! Synthesize a power-law phase trajectory, write it to `phase.csv`, and
//! check its sample statistics against the analytic autocovariance.
//!
//!     cargo run --release --example generate_phase [p]

use squeezetrack::spectrum::{
    generate_phase_seeded, theoretical_autocovariance, SpectrumParams,
};

fn main() -> squeezetrack::Result<()> {
    let p: f64 = std::env::args()
        .nth(1)
        .map(|a| a.parse().expect("p must be a number"))
        .unwrap_or(2.0);
    let params = SpectrumParams::new(p, 1.0, 0.1)?;
    let n = 1 << 16;
    let dt = 1e-2;

    let traj = generate_phase_seeded(&params, n, dt, 1)?;
    let file = std::fs::File::create("phase.csv")?;
    traj.write_csv(std::io::BufWriter::new(file))?;
    println!("wrote phase.csv ({n} samples, dt = {dt})");

    // single-trajectory estimates are noisy; this is a sanity check, the
    // tight ensemble comparison lives in the spectral_verification example
    for lag_t in [0.0, 1.0, 5.0] {
        let lag = (lag_t / dt).round() as usize;
        let sample = traj.sample_autocovariance(lag);
        let theory = theoretical_autocovariance(&params, lag_t)?;
        println!(
            "C({lag_t}): sample {sample:.4}, theory {theory:.4} (ratio {:.3})",
            sample / theory
        );
    }
    Ok(())
}
