use nalgebra::DVector;
use rand::Rng;

use crate::diagnostics::{certify, RandomIterate, RunOptions, RunTrace, TraceRow};
use crate::error::{Error, Result};
use crate::problems::{ParamVector, StochasticProblem};
use crate::rng::{report_rng, SeedStream};
use crate::RunError;

pub(crate) struct StepOutcome {
    pub x: DVector<f64>,
    pub oracle_calls: u64,
    pub h_norm: Option<f64>,
    pub model_decrease: Option<f64>,
    pub decrease_ok: bool,
}

pub(crate) struct DriverSpec {
    pub t_max: usize,
    pub echo: String,
    pub cubic_columns: bool,
    pub draw_random_iterate: bool,
}

/// Shared optimizer loop: steps, certification rows and budget accounting.
pub(crate) fn drive<P, S>(
    p: &P,
    x0: &ParamVector,
    spec: DriverSpec,
    opts: &RunOptions,
    seed: u64,
    mut step: S,
) -> Result<RunTrace, RunError>
where
    P: StochasticProblem + ?Sized,
    S: FnMut(&DVector<f64>, &mut SeedStream) -> Result<StepOutcome>,
{
    let mut trace = RunTrace::new(spec.echo, seed, spec.cubic_columns);
    let fail = |source: Error, trace: RunTrace| RunError { source, trace };
    if let Err(e) = opts.validate() {
        return Err(fail(e, trace));
    }
    if x0.dim() != p.dim() {
        let e = Error::Input(format!(
            "start point has dimension {}, problem has {}",
            x0.dim(),
            p.dim()
        ));
        return Err(fail(e, trace));
    }
    let random_step = (spec.draw_random_iterate && spec.t_max >= 1)
        .then(|| report_rng(seed).random_range(1..=spec.t_max));

    let mut seeds = SeedStream::new(seed);
    let mut x = x0.as_vector().clone();
    let mut calls = 0u64;

    let record = |trace: &mut RunTrace, t: usize, x: &DVector<f64>, calls: u64, out: Option<&StepOutcome>| {
        let cert = certify(p, x, opts.epsilon)?;
        trace.rows.push(TraceRow {
            t,
            f: p.exact_value(x),
            grad_norm: cert.grad_norm,
            lambda_min: cert.lambda_min,
            oracle_calls: calls,
            certified: cert.certified,
            h_norm: out.and_then(|o| o.h_norm),
            model_decrease: out.and_then(|o| o.model_decrease),
        });
        Ok::<_, Error>(cert)
    };

    match record(&mut trace, 0, &x, 0, None) {
        Ok(c) if c.certified && opts.stop_at_first_certified => return Ok(trace),
        Ok(_) => {}
        Err(e) => return Err(fail(e, trace)),
    }

    for t in 1..=spec.t_max {
        let out = match step(&x, &mut seeds) {
            Ok(o) => o,
            Err(e) => return Err(fail(e.at_iteration(t - 1), trace)),
        };
        if out.x.iter().any(|v| !v.is_finite()) {
            let e = Error::numerical("iterate is not finite").at_iteration(t - 1);
            return Err(fail(e, trace));
        }
        calls += out.oracle_calls;
        if !out.decrease_ok {
            trace.decrease_violations += 1;
        }
        x = out.x.clone();
        let on_schedule = t % opts.certify_every == 0 || t == spec.t_max;
        let mut cert = None;
        if on_schedule {
            match record(&mut trace, t, &x, calls, Some(&out)) {
                Ok(c) => cert = Some(c),
                Err(e) => return Err(fail(e.at_iteration(t), trace)),
            }
        }
        if random_step == Some(t) {
            let c = match cert {
                Some(c) => c,
                None => match certify(p, &x, opts.epsilon) {
                    Ok(c) => c,
                    Err(e) => return Err(fail(e.at_iteration(t), trace)),
                },
            };
            trace.random_iterate = Some(RandomIterate {
                step: t,
                certificate: c,
            });
        }
        if opts.stop_at_first_certified && cert.is_some_and(|c| c.certified) {
            break;
        }
    }
    Ok(trace)
}
