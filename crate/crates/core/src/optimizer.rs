//! Cyclic coordinate search minimizing ensemble MSE over the four loop
//! parameters (chi/kappa, r, gamma/kappa, delta) at fixed (p, flux).
//!
//! Steps are multiplicative (all parameters are positive and range over
//! decades; r moves by ln(step), which is the same thing for e^r). A
//! proposal is accepted only when it improves the incumbent MSE by more
//! than one ensemble standard error, so the walk does not chase Monte
//! Carlo noise; common random numbers (same base seed for every
//! evaluation) make those comparisons sharp and are on by default.
//!
//! The cycle visits (chi, r, gamma, delta) in that order, chi first
//! because it sets the step size and hence the cost of everything after
//! it. When a full cycle accepts nothing the step factor shrinks by
//! square-root; the search stops when it drops below `min_step_factor`
//! or the cycle budget runs out. Proposals that fail validation (flux
//! budget, delta > 1, r < 0) are rejected without simulation.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::scaling::{fit_power_law, PowerLawFit, ScalingPrediction};
use crate::simulator::{run_ensemble, SimConfig};

/// Hard cap on consecutive accepted steps along one direction in one
/// cycle; unreachable in practice, guards against a runaway objective.
const MAX_WALK: usize = 64;

/// Order of the searched coordinates within a cycle.
const COORD_COUNT: usize = 4;

/// A point in the search space. `r` is stored directly (log of the
/// searched e^r) so trace round-trips are exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    pub chi_over_kappa: f64,
    pub r: f64,
    pub gamma_over_kappa: f64,
    pub delta: f64,
}

impl ParamPoint {
    /// Starting point from the scaling-law prediction (delta clamped
    /// into the filter's valid range).
    pub fn from_prediction(pred: &ScalingPrediction) -> Self {
        ParamPoint {
            chi_over_kappa: pred.chi_over_kappa,
            r: pred.er.ln(),
            gamma_over_kappa: pred.gamma_over_kappa,
            delta: pred.delta.min(1.0),
        }
    }

    pub fn er(&self) -> f64 {
        self.r.exp()
    }

    /// Substitute this point into a config template.
    pub fn apply_to(&self, template: &SimConfig) -> SimConfig {
        let mut c = *template;
        c.chi_over_kappa = self.chi_over_kappa;
        c.r = self.r;
        c.gamma_over_kappa = self.gamma_over_kappa;
        c.delta = self.delta;
        c
    }

    fn stepped(&self, coord: usize, factor: f64) -> ParamPoint {
        let mut p = *self;
        match coord {
            0 => p.chi_over_kappa *= factor,
            1 => p.r += factor.ln(),
            2 => p.gamma_over_kappa *= factor,
            3 => p.delta *= factor,
            _ => unreachable!("coordinate index out of range"),
        }
        p
    }
}

/// Search policy plus the ensemble template the objective runs on.
/// `template.runs` is ignored: searches use `search_runs`, and the
/// located optimum is re-measured with `confirm_runs` (0 skips that).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    pub template: SimConfig,
    pub initial: ParamPoint,
    pub step_factor: f64,
    pub min_step_factor: f64,
    pub max_cycles: usize,
    pub search_runs: u64,
    pub confirm_runs: u64,
    /// Same base seed for every evaluation, so identical parameter sets
    /// give identical MSE and one-standard-error comparisons are exact.
    pub common_random_numbers: bool,
    /// Which of (chi, r, gamma, delta) the cycle may move. Frozen
    /// coordinates stay at their initial value; freezing r and delta at
    /// zero gives the coherent-state baseline search.
    pub active: [bool; COORD_COUNT],
}

impl SearchSpec {
    pub fn new(template: SimConfig, initial: ParamPoint) -> Self {
        SearchSpec {
            template,
            initial,
            step_factor: 1.25,
            min_step_factor: 1.05,
            max_cycles: 20,
            search_runs: 8,
            confirm_runs: 64,
            common_random_numbers: true,
            active: [true; COORD_COUNT],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_factor > self.min_step_factor) || !(self.min_step_factor > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "need step_factor > min_step_factor > 1, got {} and {}",
                self.step_factor, self.min_step_factor
            )));
        }
        if self.max_cycles == 0 {
            return Err(Error::InvalidParameter("max_cycles must be at least 1".into()));
        }
        if self.search_runs == 0 {
            return Err(Error::InvalidParameter("search_runs must be at least 1".into()));
        }
        if !self.active.iter().any(|&a| a) {
            return Err(Error::InvalidParameter(
                "at least one coordinate must be active".into(),
            ));
        }
        let i = &self.initial;
        for (name, v) in [
            ("chi_over_kappa", i.chi_over_kappa),
            ("e^r", i.er()),
            ("gamma_over_kappa", i.gamma_over_kappa),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "initial {name} must be positive and finite, got {v}"
                )));
            }
        }
        // delta may sit at 0 only when it is frozen there
        let delta_ok = if self.active[3] {
            i.delta > 0.0 && i.delta <= 1.0
        } else {
            (0.0..=1.0).contains(&i.delta)
        };
        if !delta_ok {
            return Err(Error::InvalidParameter(format!(
                "initial delta {} outside its valid range",
                i.delta
            )));
        }
        Ok(())
    }
}

/// One objective evaluation as recorded in the search trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub cycle: usize,
    pub point: ParamPoint,
    pub mse: f64,
    pub stderr: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub entries: Vec<TraceEntry>,
    /// Index of the last accepted entry (the incumbent).
    pub best_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// Step factor shrank below `min_step_factor`.
    StepConverged,
    /// `max_cycles` elapsed; the result is best-so-far.
    CycleBudget,
    /// A full cycle produced no feasible proposal; the incumbent is
    /// pinned against the feasible-set boundary in every active
    /// direction, which shrinking cannot cure.
    InfeasibleNeighborhood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: ParamPoint,
    /// From the confirmation ensemble when `confirm_runs > 0`, else the
    /// incumbent's search-resolution value.
    pub mse: f64,
    pub stderr: f64,
    pub stop: StopReason,
    pub evaluations: usize,
    /// Step factor in force during the last completed cycle.
    pub final_step_factor: f64,
    pub trace: SearchTrace,
}

// Mutable loop state, reconstructible from a persisted trace.
#[derive(Debug, Clone, Copy)]
struct SearchState {
    best: ParamPoint,
    best_mse: f64,
    best_stderr: f64,
    step_factor: f64,
    final_step_factor: f64,
    next_cycle: usize,
    evaluations: usize,
}

fn infeasible(spec: &SearchSpec, point: &ParamPoint) -> bool {
    point.apply_to(&spec.template).validate().is_err()
}

fn search_from<F>(
    spec: &SearchSpec,
    mut st: SearchState,
    mut entries: Vec<TraceEntry>,
    mut objective: F,
) -> Result<SearchResult>
where
    F: FnMut(&ParamPoint) -> Result<(f64, f64)>,
{
    let stop = loop {
        if st.step_factor < spec.min_step_factor {
            break StopReason::StepConverged;
        }
        if st.next_cycle > spec.max_cycles {
            break StopReason::CycleBudget;
        }
        let cycle = st.next_cycle;
        st.final_step_factor = st.step_factor;
        let mut accepted_any = false;
        let mut feasible_any = false;
        for coord in 0..COORD_COUNT {
            if !spec.active[coord] {
                continue;
            }
            'directions: for factor in [st.step_factor, 1.0 / st.step_factor] {
                let mut walked = false;
                for _ in 0..MAX_WALK {
                    let proposal = st.best.stepped(coord, factor);
                    if infeasible(spec, &proposal) {
                        break;
                    }
                    feasible_any = true;
                    let (mse, stderr) = objective(&proposal)?;
                    st.evaluations += 1;
                    let improved = st.best_mse - mse > stderr;
                    entries.push(TraceEntry {
                        cycle,
                        point: proposal,
                        mse,
                        stderr,
                        accepted: improved,
                    });
                    if !improved {
                        break;
                    }
                    st.best = proposal;
                    st.best_mse = mse;
                    st.best_stderr = stderr;
                    accepted_any = true;
                    walked = true;
                }
                if walked {
                    break 'directions;
                }
            }
        }
        if !feasible_any {
            break StopReason::InfeasibleNeighborhood;
        }
        if !accepted_any {
            st.step_factor = st.step_factor.sqrt();
        }
        st.next_cycle = cycle + 1;
    };
    let best_index = entries
        .iter()
        .rposition(|e| e.accepted)
        .unwrap_or(0);
    Ok(SearchResult {
        best: st.best,
        mse: st.best_mse,
        stderr: st.best_stderr,
        stop,
        evaluations: st.evaluations,
        final_step_factor: st.final_step_factor,
        trace: SearchTrace {
            entries,
            best_index,
        },
    })
}

/// Run the full search against a caller-supplied objective returning
/// `(mse, stderr)`. The initial point must be feasible.
pub fn coordinate_search_with<F>(spec: &SearchSpec, mut objective: F) -> Result<SearchResult>
where
    F: FnMut(&ParamPoint) -> Result<(f64, f64)>,
{
    spec.validate()?;
    if let Err(e) = spec.initial.apply_to(&spec.template).validate() {
        return Err(Error::InfeasibleStart(format!(
            "initial search point rejected: {e}"
        )));
    }
    let (mse, stderr) = objective(&spec.initial)?;
    let entries = vec![TraceEntry {
        cycle: 0,
        point: spec.initial,
        mse,
        stderr,
        accepted: true,
    }];
    let st = SearchState {
        best: spec.initial,
        best_mse: mse,
        best_stderr: stderr,
        step_factor: spec.step_factor,
        final_step_factor: spec.step_factor,
        next_cycle: 1,
        evaluations: 1,
    };
    search_from(spec, st, entries, objective)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn eval_seed(spec: &SearchSpec, eval_index: u64) -> u64 {
    if spec.common_random_numbers {
        spec.template.base_seed
    } else {
        splitmix64(spec.template.base_seed ^ splitmix64(eval_index.wrapping_add(1)))
    }
}

/// The real objective: a `search_runs` ensemble at the substituted
/// parameters. Starts its evaluation counter at `start` so a resumed
/// search does not reuse seeds when common random numbers are off.
pub fn ensemble_objective(
    spec: &SearchSpec,
    start: usize,
) -> impl FnMut(&ParamPoint) -> Result<(f64, f64)> + '_ {
    let mut counter = start as u64;
    move |point: &ParamPoint| {
        let mut config = point.apply_to(&spec.template);
        config.runs = spec.search_runs;
        config.base_seed = eval_seed(spec, counter);
        counter += 1;
        let res = run_ensemble(&config)?;
        Ok((res.mse, res.stderr_mse))
    }
}

fn confirm(spec: &SearchSpec, result: &mut SearchResult) -> Result<()> {
    if spec.confirm_runs == 0 {
        return Ok(());
    }
    let mut config = result.best.apply_to(&spec.template);
    config.runs = spec.confirm_runs;
    config.base_seed = spec.template.base_seed;
    let res = run_ensemble(&config)?;
    result.mse = res.mse;
    result.stderr = res.stderr_mse;
    Ok(())
}

/// Coordinate search against the ensemble objective, with a final
/// `confirm_runs` re-measurement at the located optimum.
pub fn coordinate_search(spec: &SearchSpec) -> Result<SearchResult> {
    let mut result = coordinate_search_with(spec, ensemble_objective(spec, 0))?;
    confirm(spec, &mut result)?;
    Ok(result)
}

// Replay a persisted trace to the state at its last cycle boundary.
// Cycles recorded with no accepted entry shrink the step factor exactly
// as the live loop would have.
fn state_from_trace(spec: &SearchSpec, prior: &[TraceEntry]) -> Result<SearchState> {
    let first = prior.first().ok_or_else(|| {
        Error::Config("search trace: no entries to resume from".into())
    })?;
    if first.cycle != 0 || !first.accepted {
        return Err(Error::Config(
            "search trace: first entry must be the accepted cycle-0 evaluation".into(),
        ));
    }
    let last_cycle = prior.iter().map(|e| e.cycle).max().unwrap_or(0);
    let mut step_factor = spec.step_factor;
    let mut final_step_factor = spec.step_factor;
    for cycle in 1..=last_cycle {
        if step_factor < spec.min_step_factor {
            break;
        }
        final_step_factor = step_factor;
        let accepted_any = prior
            .iter()
            .any(|e| e.cycle == cycle && e.accepted);
        if !accepted_any {
            step_factor = step_factor.sqrt();
        }
    }
    let incumbent = prior
        .iter()
        .filter(|e| e.accepted)
        .next_back()
        .expect("first entry is accepted");
    Ok(SearchState {
        best: incumbent.point,
        best_mse: incumbent.mse,
        best_stderr: incumbent.stderr,
        step_factor,
        final_step_factor,
        next_cycle: last_cycle + 1,
        evaluations: prior.len(),
    })
}

/// Continue a search from a persisted trace without re-evaluating
/// completed cycles. The spec must be the one that produced the trace.
pub fn resume_search_with<F>(
    spec: &SearchSpec,
    prior: &[TraceEntry],
    objective: F,
) -> Result<SearchResult>
where
    F: FnMut(&ParamPoint) -> Result<(f64, f64)>,
{
    spec.validate()?;
    let st = state_from_trace(spec, prior)?;
    search_from(spec, st, prior.to_vec(), objective)
}

/// Resumed counterpart of [`coordinate_search`].
pub fn resume_search(spec: &SearchSpec, prior: &[TraceEntry]) -> Result<SearchResult> {
    let st = state_from_trace(spec, prior)?;
    let mut result = coordinate_search_with_resume(spec, st, prior)?;
    confirm(spec, &mut result)?;
    Ok(result)
}

fn coordinate_search_with_resume(
    spec: &SearchSpec,
    st: SearchState,
    prior: &[TraceEntry],
) -> Result<SearchResult> {
    spec.validate()?;
    let objective = ensemble_objective(spec, st.evaluations);
    search_from(spec, st, prior.to_vec(), objective)
}

const TRACE_HEADER: &str = "cycle,chi,r,gamma,delta,mse,stderr,accepted";

/// Persist a search trace (`r` is the log of the searched e^r).
pub fn write_search_csv<W: Write>(entries: &[TraceEntry], mut out: W) -> Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for e in entries {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            e.cycle,
            e.point.chi_over_kappa,
            e.point.r,
            e.point.gamma_over_kappa,
            e.point.delta,
            e.mse,
            e.stderr,
            e.accepted
        )?;
    }
    Ok(())
}

pub fn read_search_csv<R: BufRead>(input: R) -> Result<Vec<TraceEntry>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Config("search trace: empty file".into()))?;
    if header.trim() != TRACE_HEADER {
        return Err(Error::Config(format!(
            "search trace: expected header `{TRACE_HEADER}`, got `{header}`"
        )));
    }
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Config(format!(
                "search trace row {}: expected 8 fields, got {}",
                i + 2,
                fields.len()
            )));
        }
        let num = |j: usize| -> Result<f64> {
            fields[j].trim().parse::<f64>().map_err(|e| {
                Error::Config(format!("search trace row {}: field {}: {e}", i + 2, j + 1))
            })
        };
        let cycle = fields[0].trim().parse::<usize>().map_err(|e| {
            Error::Config(format!("search trace row {}: cycle: {e}", i + 2))
        })?;
        let accepted = match fields[7].trim() {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::Config(format!(
                    "search trace row {}: accepted must be true/false, got `{other}`",
                    i + 2
                )))
            }
        };
        entries.push(TraceEntry {
            cycle,
            point: ParamPoint {
                chi_over_kappa: num(1)?,
                r: num(2)?,
                gamma_over_kappa: num(3)?,
                delta: num(4)?,
            },
            mse: num(5)?,
            stderr: num(6)?,
            accepted,
        });
    }
    Ok(entries)
}

/// One flux grid point of a sweep; `result` is None for gap rows, with
/// the failure recorded in `gap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub flux_over_kappa: f64,
    pub result: Option<SearchResult>,
    pub gap: Option<String>,
}

/// Power-law fits of the per-point optima against flux, appended to the
/// sweep table. Absent when fewer than two points support the fit (or,
/// for delta, when it is frozen at zero).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepFits {
    pub er: Option<PowerLawFit>,
    pub chi: Option<PowerLawFit>,
    pub gamma: Option<PowerLawFit>,
    pub delta: Option<PowerLawFit>,
    pub mse: Option<PowerLawFit>,
}

impl SweepFits {
    pub fn named(&self) -> Vec<(&'static str, &PowerLawFit)> {
        let mut v = Vec::new();
        for (name, fit) in [
            ("er", &self.er),
            ("chi", &self.chi),
            ("gamma", &self.gamma),
            ("delta", &self.delta),
            ("mse", &self.mse),
        ] {
            if let Some(f) = fit {
                v.push((name, f));
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub p: f64,
    pub points: Vec<SweepPoint>,
    pub fits: SweepFits,
}

// Warm start for the next flux: the previous optimum rescaled by the
// scaling laws; frozen coordinates keep their values.
fn rescale_warm_start(
    prev: &ParamPoint,
    p: f64,
    flux_prev: f64,
    flux_next: f64,
    active: [bool; COORD_COUNT],
) -> ParamPoint {
    let lr = (flux_next / flux_prev).ln();
    ParamPoint {
        chi_over_kappa: if active[0] {
            prev.chi_over_kappa * (lr * 2.0 / (p + 1.0)).exp()
        } else {
            prev.chi_over_kappa
        },
        r: if active[1] {
            prev.r + lr * (p - 1.0) / (2.0 * p + 2.0)
        } else {
            prev.r
        },
        gamma_over_kappa: if active[2] {
            prev.gamma_over_kappa * (lr * (p + 3.0) / (2.0 * p + 2.0)).exp()
        } else {
            prev.gamma_over_kappa
        },
        delta: if active[3] {
            (prev.delta * (-lr * (p - 1.0) / (p + 2.0)).exp()).min(1.0)
        } else {
            prev.delta
        },
    }
}

fn fit_column<G>(points: &[SweepPoint], get: G) -> Option<PowerLawFit>
where
    G: Fn(&SearchResult) -> f64,
{
    let data: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|pt| pt.result.as_ref().map(|r| (pt.flux_over_kappa, get(r))))
        .collect();
    fit_power_law(&data).ok()
}

fn check_grid(flux_grid: &[f64]) -> Result<()> {
    if flux_grid.is_empty() {
        return Err(Error::InvalidParameter("flux grid is empty".into()));
    }
    for w in flux_grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidParameter(format!(
                "flux grid must be strictly ascending, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    if flux_grid.iter().any(|&f| !(f > 0.0) || !f.is_finite()) {
        return Err(Error::InvalidParameter(
            "flux grid values must be positive and finite".into(),
        ));
    }
    Ok(())
}

fn sweep_core<S>(spec: &SearchSpec, flux_grid: &[f64], mut search: S) -> Result<SweepTable>
where
    S: FnMut(&SearchSpec) -> Result<SearchResult>,
{
    spec.validate()?;
    check_grid(flux_grid)?;
    let p = spec.template.spectrum.p;
    let mut anchor_flux = spec.template.flux_over_kappa;
    let mut anchor_point = spec.initial;
    let mut points = Vec::with_capacity(flux_grid.len());
    for &flux in flux_grid {
        let mut point_spec = *spec;
        point_spec.template.flux_over_kappa = flux;
        point_spec.initial = rescale_warm_start(&anchor_point, p, anchor_flux, flux, spec.active);
        match search(&point_spec) {
            Ok(result) => {
                anchor_flux = flux;
                anchor_point = result.best;
                points.push(SweepPoint {
                    flux_over_kappa: flux,
                    result: Some(result),
                    gap: None,
                });
            }
            Err(e) => points.push(SweepPoint {
                flux_over_kappa: flux,
                result: None,
                gap: Some(e.to_string()),
            }),
        }
    }
    let fits = SweepFits {
        er: fit_column(&points, |r| r.best.er()),
        chi: fit_column(&points, |r| r.best.chi_over_kappa),
        gamma: fit_column(&points, |r| r.best.gamma_over_kappa),
        delta: fit_column(&points, |r| r.best.delta),
        mse: fit_column(&points, |r| r.mse),
    };
    Ok(SweepTable { p, points, fits })
}

/// Coordinate search per flux grid point (ascending grid required),
/// each warm-started from the previous optimum rescaled by the scaling
/// laws; failed points become gap rows and later points restart from
/// the last success. Per-point optima are confirmed at `confirm_runs`.
pub fn sweep_flux(spec: &SearchSpec, flux_grid: &[f64]) -> Result<SweepTable> {
    sweep_core(spec, flux_grid, coordinate_search)
}

/// Sweep against a caller-supplied objective `(flux, point) -> (mse,
/// stderr)`. No confirmation pass: the reported MSE is the incumbent's
/// search-resolution value.
pub fn sweep_flux_with<F>(spec: &SearchSpec, flux_grid: &[f64], mut objective: F) -> Result<SweepTable>
where
    F: FnMut(f64, &ParamPoint) -> Result<(f64, f64)>,
{
    sweep_core(spec, flux_grid, |point_spec| {
        let flux = point_spec.template.flux_over_kappa;
        coordinate_search_with(point_spec, |pt: &ParamPoint| objective(flux, pt))
    })
}

/// Sweep table rows plus `# fit` comment lines, plot-ready. The
/// `scaled_mse` column is MSE times flux^{2(p-1)/(p+1)}, flat when the
/// sweep follows the predicted law.
pub fn write_sweep_csv<W: Write>(table: &SweepTable, mut out: W) -> Result<()> {
    writeln!(
        out,
        "flux_over_kappa,chi,r,gamma,delta,mse,stderr,scaled_mse,status"
    )?;
    let p = table.p;
    for pt in &table.points {
        match &pt.result {
            Some(r) => {
                let scaled = r.mse * pt.flux_over_kappa.powf(2.0 * (p - 1.0) / (p + 1.0));
                writeln!(
                    out,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},ok",
                    pt.flux_over_kappa,
                    r.best.chi_over_kappa,
                    r.best.r,
                    r.best.gamma_over_kappa,
                    r.best.delta,
                    r.mse,
                    r.stderr,
                    scaled
                )?;
            }
            None => {
                let reason = pt
                    .gap
                    .as_deref()
                    .unwrap_or("unknown")
                    .replace(',', ";");
                writeln!(out, "{:.16e},,,,,,,,gap: {reason}", pt.flux_over_kappa)?;
            }
        }
    }
    for (name, fit) in table.fits.named() {
        writeln!(
            out,
            "# fit,{name},{:.16e},{:.16e},{:.16e}",
            fit.exponent, fit.prefactor, fit.stderr
        )?;
    }
    Ok(())
}

pub fn write_sweep_json<W: Write>(table: &SweepTable, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, table)?;
    writeln!(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::SpectrumParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::collections::hash_map::DefaultHasher;
    use std::hash::{Hash, Hasher};

    // Roomy template: the flux budget never binds within the bowls below.
    fn roomy_template() -> SimConfig {
        let spectrum = SpectrumParams::new(2.0, 1.0, 1e-3).unwrap();
        let mut c = SimConfig::new(spectrum, 1e6, 1.0, 1.0, 0.0, 0.5);
        c.warmup_multiple = 1.0;
        c.total_multiple = 3.0;
        c
    }

    fn tiny_real_template(flux: f64) -> SimConfig {
        let spectrum = SpectrumParams::new(2.0, 1.0, 1e-3).unwrap();
        let mut c = SimConfig::new(spectrum, flux, 1.0, 1.0, 0.0, 0.5);
        c.warmup_multiple = 1.0;
        c.total_multiple = 3.0;
        c.base_seed = 11;
        c
    }

    const BOWL_MIN: ParamPoint = ParamPoint {
        chi_over_kappa: 50.0,
        r: 1.1,
        gamma_over_kappa: 900.0,
        delta: 0.3,
    };

    fn bowl(point: &ParamPoint) -> f64 {
        let d0 = (point.chi_over_kappa / BOWL_MIN.chi_over_kappa).ln();
        let d1 = point.r - BOWL_MIN.r;
        let d2 = (point.gamma_over_kappa / BOWL_MIN.gamma_over_kappa).ln();
        let d3 = (point.delta / BOWL_MIN.delta).ln();
        0.07 + 1.3 * d0 * d0 + 0.8 * d1 * d1 + 2.1 * d2 * d2 + 1.1 * d3 * d3
    }

    fn bowl_spec(initial: ParamPoint) -> SearchSpec {
        let mut spec = SearchSpec::new(roomy_template(), initial);
        spec.confirm_runs = 0;
        spec
    }

    fn off_center_start() -> ParamPoint {
        ParamPoint {
            chi_over_kappa: 12.0,
            r: 0.4,
            gamma_over_kappa: 3000.0,
            delta: 0.8,
        }
    }

    fn log_distance(a: &ParamPoint, b: &ParamPoint) -> [f64; 4] {
        [
            (a.chi_over_kappa / b.chi_over_kappa).ln().abs(),
            (a.r - b.r).abs(),
            (a.gamma_over_kappa / b.gamma_over_kappa).ln().abs(),
            (a.delta / b.delta).ln().abs(),
        ]
    }

    #[test]
    fn spec_validation() {
        let good = bowl_spec(off_center_start());
        assert!(good.validate().is_ok());

        let mut s = good;
        s.step_factor = 1.04;
        assert!(s.validate().is_err());
        let mut s = good;
        s.min_step_factor = 1.0;
        assert!(s.validate().is_err());
        let mut s = good;
        s.max_cycles = 0;
        assert!(s.validate().is_err());
        let mut s = good;
        s.search_runs = 0;
        assert!(s.validate().is_err());
        let mut s = good;
        s.active = [false; 4];
        assert!(s.validate().is_err());
        let mut s = good;
        s.initial.delta = 0.0;
        assert!(s.validate().is_err());
        // ... but delta = 0 is fine once delta is frozen
        s.active[3] = false;
        assert!(s.validate().is_ok());
        let mut s = good;
        s.initial.delta = 1.2;
        assert!(s.validate().is_err());
        let mut s = good;
        s.initial.chi_over_kappa = -1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn infeasible_start_is_reported() {
        // r < 0 fails the substituted config's validation
        let mut start = off_center_start();
        start.r = -0.2;
        let err = coordinate_search_with(&bowl_spec(start), |p| Ok((bowl(p), 0.0))).unwrap_err();
        assert!(matches!(err, Error::InfeasibleStart(_)));
        assert_eq!(err.exit_code(), 3);

        // squeezing cost beyond the flux budget
        let mut spec = bowl_spec(off_center_start());
        spec.template.flux_over_kappa = 10.0;
        spec.initial.gamma_over_kappa = 3000.0;
        spec.initial.r = 1.0;
        let err = coordinate_search_with(&spec, |p| Ok((bowl(p), 0.0))).unwrap_err();
        assert!(matches!(err, Error::InfeasibleStart(_)));
    }

    #[test]
    fn bowl_recovers_known_minimum_from_multiple_starts() {
        let starts = [
            off_center_start(),
            ParamPoint {
                chi_over_kappa: 200.0,
                r: 2.0,
                gamma_over_kappa: 300.0,
                delta: 0.1,
            },
            ParamPoint {
                chi_over_kappa: 40.0,
                r: 0.9,
                gamma_over_kappa: 1100.0,
                delta: 0.35,
            },
        ];
        for start in starts {
            let spec = bowl_spec(start);
            let result = coordinate_search_with(&spec, |p| Ok((bowl(p), 0.0))).unwrap();
            assert_eq!(result.stop, StopReason::StepConverged);
            // converged within the final cycle's step per coordinate
            let tol = result.final_step_factor.ln() + 1e-12;
            for (i, d) in log_distance(&result.best, &BOWL_MIN).iter().enumerate() {
                assert!(*d <= tol, "coordinate {i}: off by {d}, tol {tol}");
            }
            // accepted-MSE sequence is non-increasing
            let accepted: Vec<f64> = result
                .trace
                .entries
                .iter()
                .filter(|e| e.accepted)
                .map(|e| e.mse)
                .collect();
            assert!(accepted.windows(2).all(|w| w[1] <= w[0]));
            assert_eq!(
                result.trace.entries[result.trace.best_index].mse,
                result.mse
            );
            assert_eq!(result.evaluations, result.trace.entries.len());
        }
    }

    // The search result beats every neighbor on the 3^4 grid spaced at
    // the final step factor.
    #[test]
    fn bowl_result_matches_grid_optimum() {
        let spec = bowl_spec(off_center_start());
        let result = coordinate_search_with(&spec, |p| Ok((bowl(p), 0.0))).unwrap();
        let s = result.final_step_factor;
        let best_value = bowl(&result.best);
        let mut checked = 0;
        for a in -1i32..=1 {
            for b in -1i32..=1 {
                for c in -1i32..=1 {
                    for d in -1i32..=1 {
                        let neighbor = result
                            .best
                            .stepped(0, s.powi(a))
                            .stepped(1, s.powi(b))
                            .stepped(2, s.powi(c))
                            .stepped(3, s.powi(d));
                        assert!(
                            bowl(&neighbor) >= best_value - 1e-12,
                            "grid neighbor ({a},{b},{c},{d}) improves"
                        );
                        checked += 1;
                    }
                }
            }
        }
        assert_eq!(checked, 81);
    }

    // Point-keyed noise, as common random numbers would produce.
    fn noisy_bowl(point: &ParamPoint, rep: u64, sigma: f64) -> f64 {
        let mut h = DefaultHasher::new();
        for v in [
            point.chi_over_kappa,
            point.r,
            point.gamma_over_kappa,
            point.delta,
        ] {
            v.to_bits().hash(&mut h);
        }
        rep.hash(&mut h);
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
        let noise: f64 = rng.sample(StandardNormal);
        bowl(point) + sigma * noise
    }

    #[test]
    fn noisy_bowl_converges_over_twenty_repetitions() {
        let sigma = 0.005;
        for rep in 0..20u64 {
            let mut spec = bowl_spec(off_center_start());
            spec.min_step_factor = 1.1;
            let result =
                coordinate_search_with(&spec, |p| Ok((noisy_bowl(p, rep, sigma), sigma))).unwrap();
            // within two final steps of the true optimum, every coordinate
            let tol = 2.0 * result.final_step_factor.ln() + 1e-12;
            for (i, d) in log_distance(&result.best, &BOWL_MIN).iter().enumerate() {
                assert!(*d <= tol, "rep {rep} coordinate {i}: off by {d}, tol {tol}");
            }
        }
    }

    #[test]
    fn infeasible_proposals_are_never_evaluated() {
        // tight flux budget: gamma and r up-steps soon exceed it
        let mut spec = bowl_spec(ParamPoint {
            chi_over_kappa: 30.0,
            r: 1.0,
            gamma_over_kappa: 50.0,
            delta: 0.9,
        });
        spec.template.flux_over_kappa = 10.0;
        let mut evaluated: Vec<ParamPoint> = Vec::new();
        let result = coordinate_search_with(&spec, |p| {
            evaluated.push(*p);
            Ok((bowl(p), 0.0))
        })
        .unwrap();
        assert!(!evaluated.is_empty());
        for p in &evaluated {
            assert!(
                p.apply_to(&spec.template).validate().is_ok(),
                "evaluated an infeasible point: {p:?}"
            );
            assert!(p.delta <= 1.0);
        }
        assert!(result.stop != StopReason::InfeasibleNeighborhood);
    }

    #[test]
    fn crn_reuses_and_fresh_seeds_differ() {
        let flux = 1e2;
        let template = tiny_real_template(flux);
        let initial = ParamPoint {
            chi_over_kappa: 21.5,
            r: 0.77,
            gamma_over_kappa: 46.0,
            delta: 0.32,
        };
        let mut spec = SearchSpec::new(template, initial);
        spec.search_runs = 2;

        {
            let mut obj = ensemble_objective(&spec, 0);
            let (m1, s1) = obj(&initial).unwrap();
            let (m2, s2) = obj(&initial).unwrap();
            assert_eq!(m1, m2, "common random numbers must reuse the seed");
            assert_eq!(s1, s2);
        }

        spec.common_random_numbers = false;
        let mut obj = ensemble_objective(&spec, 0);
        let (m3, _) = obj(&initial).unwrap();
        let (m4, _) = obj(&initial).unwrap();
        assert!(m3 != m4, "fresh seeds should move the estimate");
    }

    #[test]
    fn trace_csv_roundtrip_is_exact() {
        let entries = vec![
            TraceEntry {
                cycle: 0,
                point: off_center_start(),
                mse: 0.123456789,
                stderr: 0.0,
                accepted: true,
            },
            TraceEntry {
                cycle: 1,
                point: BOWL_MIN,
                mse: 1.0 / 3.0,
                stderr: 1e-300,
                accepted: false,
            },
        ];
        let mut buf = Vec::new();
        write_search_csv(&entries, &mut buf).unwrap();
        let back = read_search_csv(buf.as_slice()).unwrap();
        assert_eq!(entries, back);

        assert!(read_search_csv("nonsense\n".as_bytes()).is_err());
        assert!(read_search_csv(TRACE_HEADER.as_bytes()).unwrap().is_empty());
        let bad = format!("{TRACE_HEADER}\n0,1,2,3\n");
        assert!(read_search_csv(bad.as_bytes()).is_err());
    }

    #[test]
    fn resume_continues_without_reevaluating() {
        let spec = bowl_spec(off_center_start());
        let mut full_calls = 0usize;
        let full = coordinate_search_with(&spec, |p| {
            full_calls += 1;
            Ok((bowl(p), 0.0))
        })
        .unwrap();
        assert_eq!(full_calls, full.evaluations);

        // checkpoint at a mid-search cycle boundary, through the CSV layer
        let last_cycle = full.trace.entries.last().unwrap().cycle;
        assert!(last_cycle >= 4, "bowl search ended too quickly to test");
        let cut = last_cycle / 2;
        let prefix: Vec<TraceEntry> = full
            .trace
            .entries
            .iter()
            .copied()
            .filter(|e| e.cycle <= cut)
            .collect();
        let mut buf = Vec::new();
        write_search_csv(&prefix, &mut buf).unwrap();
        let reloaded = read_search_csv(buf.as_slice()).unwrap();

        let mut resumed_calls = 0usize;
        let resumed = resume_search_with(&spec, &reloaded, |p| {
            resumed_calls += 1;
            Ok((bowl(p), 0.0))
        })
        .unwrap();
        assert_eq!(resumed_calls, full.evaluations - prefix.len());
        assert_eq!(resumed.best, full.best);
        assert_eq!(resumed.mse, full.mse);
        assert_eq!(resumed.stop, full.stop);
        assert_eq!(resumed.trace.entries, full.trace.entries);
    }

    #[test]
    fn resume_of_finished_search_is_a_noop() {
        let spec = bowl_spec(off_center_start());
        let full = coordinate_search_with(&spec, |p| Ok((bowl(p), 0.0))).unwrap();
        let resumed = resume_search_with(&spec, &full.trace.entries, |_p| {
            panic!("finished search must not re-evaluate")
        })
        .unwrap();
        assert_eq!(resumed.best, full.best);
        assert_eq!(resumed.stop, StopReason::StepConverged);

        assert!(resume_search_with(&spec, &[], |p| Ok((bowl(p), 0.0))).is_err());
    }

    #[test]
    fn budget_exhaustion_reports_best_so_far() {
        let mut spec = bowl_spec(off_center_start());
        spec.max_cycles = 1;
        let result = coordinate_search_with(&spec, |p| Ok((bowl(p), 0.0))).unwrap();
        assert_eq!(result.stop, StopReason::CycleBudget);
        assert!(bowl(&result.best) <= bowl(&off_center_start()));
        assert_eq!(result.final_step_factor, spec.step_factor);
    }

    #[test]
    fn sweep_of_one_point_equals_single_search() {
        let flux = 1e2;
        let mut spec = SearchSpec::new(
            tiny_real_template(flux),
            ParamPoint {
                chi_over_kappa: 21.5,
                r: 0.77,
                gamma_over_kappa: 46.0,
                delta: 0.32,
            },
        );
        spec.search_runs = 2;
        spec.confirm_runs = 3;
        spec.max_cycles = 2;

        let single = coordinate_search(&spec).unwrap();
        let table = sweep_flux(&spec, &[flux]).unwrap();
        assert_eq!(table.points.len(), 1);
        let swept = table.points[0].result.as_ref().unwrap();
        assert_eq!(swept.best, single.best);
        assert_eq!(swept.mse, single.mse);
        assert_eq!(swept.stderr, single.stderr);
        // single-point tables carry no fits
        assert!(table.fits.named().is_empty());
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let spec = bowl_spec(off_center_start());
        let obj = |_f: f64, p: &ParamPoint| Ok((bowl(p), 0.0));
        assert!(sweep_flux_with(&spec, &[], obj).is_err());
        assert!(sweep_flux_with(&spec, &[1e3, 1e2], obj).is_err());
        assert!(sweep_flux_with(&spec, &[1e2, 1e2], obj).is_err());
    }

    // Bowl whose minimum moves with flux along exact power laws: the
    // sweep must warm-start onto it and the appended fits recover the
    // exponents.
    #[test]
    fn sweep_recovers_planted_exponents() {
        let laws = |f: f64| ParamPoint {
            chi_over_kappa: 0.215 * f.powf(2.0 / 3.0),
            r: (0.9 * f.powf(1.0 / 6.0)).ln(),
            gamma_over_kappa: 0.046 * f.powf(5.0 / 6.0),
            delta: 1.6 * f.powf(-0.25),
        };
        let moving_bowl = |f: f64, p: &ParamPoint| {
            let m = laws(f);
            let d = log_distance(p, &m);
            Ok((
                f.powf(-2.0 / 3.0)
                    * (1.0 + 1.3 * d[0] * d[0] + 0.8 * d[1] * d[1] + 2.1 * d[2] * d[2]
                        + 1.1 * d[3] * d[3]),
                0.0,
            ))
        };
        let mut spec = bowl_spec(laws(1e2));
        spec.template.flux_over_kappa = 1e2;
        let grid = [1e2, 1e3, 1e4];
        let table = sweep_flux_with(&spec, &grid, moving_bowl).unwrap();
        assert!(table.points.iter().all(|pt| pt.result.is_some()));

        let fits = &table.fits;
        assert!((fits.mse.as_ref().unwrap().exponent - (-2.0 / 3.0)).abs() < 0.05);
        assert!((fits.chi.as_ref().unwrap().exponent - 2.0 / 3.0).abs() < 0.05);
        assert!((fits.er.as_ref().unwrap().exponent - 1.0 / 6.0).abs() < 0.05);
        assert!((fits.gamma.as_ref().unwrap().exponent - 5.0 / 6.0).abs() < 0.05);
        assert!((fits.delta.as_ref().unwrap().exponent - (-0.25)).abs() < 0.05);

        // warm start for the second point is the first optimum rescaled
        let first_best = table.points[0].result.as_ref().unwrap().best;
        let second_start = table.points[1].result.as_ref().unwrap().trace.entries[0].point;
        let expected = rescale_warm_start(&first_best, 2.0, 1e2, 1e3, spec.active);
        assert!((second_start.chi_over_kappa / expected.chi_over_kappa - 1.0).abs() < 1e-12);
        assert!((second_start.r - expected.r).abs() < 1e-12);
        assert!((second_start.delta / expected.delta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_marks_gaps_and_recovers() {
        // budget never binds at these fluxes, so the gap comes only from
        // the injected failure
        let spec = bowl_spec(off_center_start());
        let table = sweep_flux_with(&spec, &[1e6, 1e7, 1e8], |f, p| {
            if f == 1e7 {
                Err(Error::Numeric {
                    step: 0,
                    what: "synthetic failure".into(),
                })
            } else {
                Ok((bowl(p), 0.0))
            }
        })
        .unwrap();
        assert!(table.points[0].result.is_some());
        assert!(table.points[1].result.is_none());
        assert!(table.points[1].gap.as_ref().unwrap().contains("synthetic"));
        assert!(table.points[2].result.is_some());

        let mut csv = Vec::new();
        write_sweep_csv(&table, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "flux_over_kappa,chi,r,gamma,delta,mse,stderr,scaled_mse,status"
        );
        assert!(text.lines().any(|l| l.ends_with(",ok")));
        assert!(text.lines().any(|l| l.contains("gap: ")));
        assert!(text.lines().any(|l| l.starts_with("# fit,mse,")));
        // gap rows keep the column count
        let gap_row = text.lines().find(|l| l.contains("gap: ")).unwrap();
        assert_eq!(gap_row.split(',').count(), 9);

        let mut json = Vec::new();
        write_sweep_json(&table, &mut json).unwrap();
        let parsed: serde_json::Value = serde_json::from_slice(&json).unwrap();
        assert_eq!(parsed["points"].as_array().unwrap().len(), 3);
        assert!(parsed["points"][1]["gap"].is_string());
    }

    #[test]
    fn delta_boundary_is_respected() {
        // delta starts at 1: every up-step is infeasible, down-steps work
        let mut start = off_center_start();
        start.delta = 1.0;
        let spec = bowl_spec(start);
        let mut evaluated = Vec::new();
        let result = coordinate_search_with(&spec, |p| {
            evaluated.push(*p);
            Ok((bowl(p), 0.0))
        })
        .unwrap();
        assert!(evaluated.iter().all(|p| p.delta <= 1.0));
        assert!(result.best.delta < 1.0);
    }
}
