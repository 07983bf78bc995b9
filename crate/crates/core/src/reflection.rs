//! Normal reflection at zero for piecewise-constant paths.
//!
//! For a step path `X` with `X(0) = 0` the regulator is
//! `psi(t) = -inf over s <= t of X(s)` clipped below at zero, and the
//! reflected path is `phi(t) = X(t) + psi(t)`. When `X` is the difference
//! between an arrival count and a departure-opportunity count, `phi` is the
//! queue-length path.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("times must start at 0, got {0}")]
    BadOrigin(f64),
    #[error("times must be strictly increasing and finite")]
    NonMonotoneTimes,
    #[error("times and values must have equal, nonzero length")]
    LengthMismatch,
    #[error("path must start at value 0 for reflection, starts at {0}")]
    NonzeroStart(f64),
    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),
    #[error("jump times must be strictly positive")]
    JumpAtOrigin,
}

/// Right-continuous piecewise-constant path: value `values[n]` holds on
/// `[times[n], times[n+1])`, with `times[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPath {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl StepPath {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self, PathError> {
        if times.is_empty() || times.len() != values.len() {
            return Err(PathError::LengthMismatch);
        }
        if times[0] != 0.0 {
            return Err(PathError::BadOrigin(times[0]));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) || times.iter().any(|t| !t.is_finite()) {
            return Err(PathError::NonMonotoneTimes);
        }
        Ok(StepPath { times, values })
    }

    /// Builds a path starting at 0 from (time, jump size) pairs. Jumps at
    /// the same time are merged by summing. Jump times must be positive.
    pub fn from_jumps(jumps: &[(f64, f64)]) -> Result<Self, PathError> {
        let mut sorted: Vec<(f64, f64)> = jumps.to_vec();
        if sorted.iter().any(|&(t, _)| !(t > 0.0) || !t.is_finite()) {
            return Err(PathError::JumpAtOrigin);
        }
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite times"));
        let mut times = vec![0.0];
        let mut values = vec![0.0];
        for &(t, dx) in &sorted {
            let last = *times.last().expect("non-empty");
            if t == last {
                *values.last_mut().expect("non-empty") += dx;
            } else {
                let v = *values.last().expect("non-empty");
                times.push(t);
                values.push(v + dx);
            }
        }
        Ok(StepPath { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Path value at time `t >= 0`.
    pub fn value_at(&self, t: f64) -> Result<f64, PathError> {
        let idx = self.piece_index(t)?;
        Ok(self.values[idx])
    }

    /// Index of the piece containing `t`.
    fn piece_index(&self, t: f64) -> Result<usize, PathError> {
        if !(t >= 0.0) {
            return Err(PathError::NegativeTime(t));
        }
        Ok(self.times.partition_point(|&x| x <= t) - 1)
    }

    fn require_zero_start(&self) -> Result<(), PathError> {
        if self.values[0] != 0.0 {
            return Err(PathError::NonzeroStart(self.values[0]));
        }
        Ok(())
    }
}

/// Regulator value at `t`: the running infimum of the path, negated and
/// clipped below at zero. Step paths attain the infimum at piece starts.
pub fn psi(path: &StepPath, t: f64) -> Result<f64, PathError> {
    path.require_zero_start()?;
    let idx = path.piece_index(t)?;
    let inf = path.values[..=idx]
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    Ok((-inf).max(0.0))
}

/// Reflected value at `t`.
pub fn phi(path: &StepPath, t: f64) -> Result<f64, PathError> {
    let idx = path.piece_index(t)?;
    path.require_zero_start()?;
    let inf = path.values[..=idx]
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    Ok(path.values[idx] + (-inf).max(0.0))
}

/// Full reflected path, computed in one left-to-right pass over the pieces.
pub fn reflect(path: &StepPath) -> Result<StepPath, PathError> {
    path.require_zero_start()?;
    let mut running_inf = 0.0f64;
    let values = path
        .values
        .iter()
        .map(|&x| {
            running_inf = running_inf.min(x);
            x + (-running_inf).max(0.0)
        })
        .collect();
    Ok(StepPath {
        times: path.times.clone(),
        values,
    })
}
