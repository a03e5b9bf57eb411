use std::io::Write;

use crate::dde::{integrate, DdeProblem, SolverConfig, Trajectory};
use crate::error::{Error, Result};
use crate::model::{
    auxiliary_from_slice, constant_history, derivative_into, nominal_initial_state, DelayedValues, ParameterSet,
    StateVector, DEFAULT_MAX_DELAY,
};

pub const TRAJECTORY_CSV_HEADER: &str = "t,LH_RP,LH,FSH_RP,FSH,RcF,SeF,PrF,Sc1,Sc2,Lut1,Lut2,Lut3,Lut4,E2,P4,Ih";

/// Integrates the mechanistic model over `[0, span_days]` from the bundled
/// limit-cycle state, held constant as history.
pub fn solve_clark(params: &ParameterSet, span_days: f64, config: &SolverConfig) -> Result<Trajectory> {
    solve_clark_from(params, nominal_initial_state(), span_days, config)
}

pub fn solve_clark_from(
    params: &ParameterSet,
    initial: StateVector,
    span_days: f64,
    config: &SolverConfig,
) -> Result<Trajectory> {
    params.validate(DEFAULT_MAX_DELAY)?;
    if !initial.is_finite() || initial.0.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidInput("initial state must be finite and nonnegative".into()));
    }
    let problem = DdeProblem {
        rhs: |t: f64, y: &[f64], lag: &[&[f64]], dy: &mut [f64]| {
            let delayed = DelayedValues {
                p4: auxiliary_from_slice(lag[0], params).p4,
                ih: auxiliary_from_slice(lag[1], params).ih,
            };
            derivative_into(t, y, delayed, params, dy)
        },
        delays: vec![params.delta_P, params.delta_Ih],
        history: constant_history(initial),
        t0: 0.0,
        t1: span_days,
        initial_state: initial.0.to_vec(),
    };
    integrate(&problem, config)
}

/// Writes the 13 states plus E2, P4 and Ih at each requested time.
pub fn write_trajectory_csv<W: Write>(
    mut out: W,
    trajectory: &Trajectory,
    params: &ParameterSet,
    times: &[f64],
) -> Result<()> {
    writeln!(out, "{TRAJECTORY_CSV_HEADER}")?;
    let mut buf = vec![0.0; trajectory.dim()];
    for &t in times {
        trajectory.eval_into(t, &mut buf)?;
        let aux = auxiliary_from_slice(&buf, params);
        let mut line = format!("{t}");
        for v in buf.iter().chain([aux.e2, aux.p4, aux.ih].iter()) {
            line.push(',');
            line.push_str(&v.to_string());
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}
