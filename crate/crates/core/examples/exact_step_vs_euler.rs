//! Cross-validate one exact integrator step against a brute-force
//! Euler-Maruyama reference with a thousand substeps: the first and second
//! moments of the post-step quadratures and of the integrated homodyne
//! increment must agree within Monte Carlo error.
//!
//!     cargo run --release --example exact_step_vs_euler

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use squeezetrack::cavity::{
    advance_cavity, euler_reference_step, measurement_increment, sample_step_noise,
    CavityParams, CavityState, StepCoefficients,
};

struct Moments {
    mean_x: f64,
    var_x: f64,
    mean_di: f64,
    var_di: f64,
    cov_x_di: f64,
}

fn moments(samples: &[(f64, f64)]) -> Moments {
    let n = samples.len() as f64;
    let (mut sx, mut si) = (0.0, 0.0);
    for &(x, di) in samples {
        sx += x;
        si += di;
    }
    let (mx, mi) = (sx / n, si / n);
    let (mut vx, mut vi, mut cxi) = (0.0, 0.0, 0.0);
    for &(x, di) in samples {
        vx += (x - mx) * (x - mx);
        vi += (di - mi) * (di - mi);
        cxi += (x - mx) * (di - mi);
    }
    Moments {
        mean_x: mx,
        var_x: vx / (n - 1.0),
        mean_di: mi,
        var_di: vi / (n - 1.0),
        cov_x_di: cxi / (n - 1.0),
    }
}

fn main() -> squeezetrack::Result<()> {
    let params = CavityParams::new(1.0, 1.0, 2.0)?;
    let dt = 0.05;
    let substeps = 1000;
    let trials = 200_000;
    let angle = 0.3; // fixed local-oscillator offset for the step
    let start = CavityState { x: 0.7, y: -0.2 };

    let coeffs = StepCoefficients::new(&params, dt)?;
    let mut rng_x = ChaCha8Rng::seed_from_u64(10);
    let mut rng_y = ChaCha8Rng::seed_from_u64(11);
    let mut rng_ref = ChaCha8Rng::seed_from_u64(20);

    let mut exact = Vec::with_capacity(trials);
    let mut reference = Vec::with_capacity(trials);
    for _ in 0..trials {
        let noise = sample_step_noise(&coeffs, &mut rng_x, &mut rng_y);
        let next = advance_cavity(&coeffs, &start, &noise);
        let di = measurement_increment(&coeffs, &start, &noise, angle);
        exact.push((next.x, di));

        let mut state = start;
        let mut acc = 0.0;
        for _ in 0..substeps {
            let (s, di) =
                euler_reference_step(&params, &state, angle, dt / substeps as f64, &mut rng_ref);
            state = s;
            acc += di;
        }
        reference.push((state.x, acc));
    }

    let me = moments(&exact);
    let mr = moments(&reference);
    let n = trials as f64;
    println!("one step of dt = {dt}, {trials} trials, {substeps} Euler substeps\n");
    println!("{:<12}{:>14}{:>14}{:>10}", "moment", "exact", "euler", "|z|");
    let rows = [
        ("mean x'", me.mean_x, mr.mean_x, (me.var_x / n).sqrt()),
        ("var x'", me.var_x, mr.var_x, me.var_x * (2.0 / n).sqrt()),
        ("mean dI", me.mean_di, mr.mean_di, (me.var_di / n).sqrt()),
        ("var dI", me.var_di, mr.var_di, me.var_di * (2.0 / n).sqrt()),
        (
            "cov(x',dI)",
            me.cov_x_di,
            mr.cov_x_di,
            ((me.var_x * me.var_di + me.cov_x_di * me.cov_x_di) / n).sqrt(),
        ),
    ];
    let mut worst = 0.0f64;
    for (name, a, b, se) in rows {
        // both sides are Monte Carlo, so the difference carries twice the variance
        let z = (a - b).abs() / (se * 2.0f64.sqrt());
        worst = worst.max(z);
        println!("{name:<12}{a:>14.6}{b:>14.6}{z:>10.2}");
    }
    println!(
        "\nworst |z| = {worst:.2}: {}",
        if worst < 4.0 { "consistent" } else { "INCONSISTENT" }
    );
    Ok(())
}
