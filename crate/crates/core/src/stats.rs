//! Distribution estimators over replicated trajectories.
//!
//! All estimators are plain folds over the replication list: empirical
//! frequencies with binomial standard errors, pre-departure tabulations,
//! and the two event-driven integrals compared by the limit-law checks.
//! Integration against the queue path is exact (piecewise-constant between
//! events); no grid Riemann sums are involved.

use thiserror::Error;

use crate::fluid;
use crate::model::DerivedParams;
use crate::sim::Trajectory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("time {0} is not on the sample grid")]
    OffGrid(f64),
    #[error("no trajectories supplied")]
    Empty,
    #[error("station index {0} out of range")]
    BadStation(usize),
    #[error("pmf supports differ in length")]
    SupportMismatch,
    #[error("need t1 < t2, got {0} and {1}")]
    BadTimePair(f64, f64),
    #[error("t1 = {t1} is inside the burn-in window {burn_in}")]
    InsideBurnIn { t1: f64, burn_in: f64 },
    #[error("trajectories were recorded without {0}; rerun with it enabled")]
    MissingRecords(&'static str),
    #[error(transparent)]
    Fluid(#[from] fluid::FluidError),
}

/// Empirical queue-length pmf at one station and time.
#[derive(Debug, Clone, PartialEq)]
pub struct DistEstimate {
    pub station: usize,
    pub t: f64,
    /// `pmf[l]` estimates the probability of queue length `l`, `l <= levels`.
    pub pmf: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Mass beyond the tracked levels; closes the distribution to one.
    pub tail: f64,
    pub n_reps: usize,
}

impl DistEstimate {
    /// Pmf with the tail appended as a final bin.
    pub fn with_tail(&self) -> Vec<f64> {
        let mut v = self.pmf.clone();
        v.push(self.tail);
        v
    }
}

/// Empirical pmf of the queue seen by the last departure opportunity at or
/// before `t` (level 0 when no opportunity has occurred yet).
pub type PreDepartureEstimate = DistEstimate;

/// The two sides of the integral limit law, per level.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralEstimate {
    pub station: usize,
    pub horizon: f64,
    /// Time integral of `rho_j(s) * P(queue = l)`.
    pub lhs: Vec<f64>,
    /// Time integral of `P(queue seen by last opportunity = l + 1)`.
    pub rhs: Vec<f64>,
    pub stderr_lhs: Vec<f64>,
    pub stderr_rhs: Vec<f64>,
    /// Standard error of the paired per-replication difference.
    pub stderr_diff: Vec<f64>,
    pub n_reps: usize,
}

/// Report of a stationarity comparison between two observation times.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeInvarianceReport {
    pub station: usize,
    pub t1: f64,
    pub t2: f64,
    pub tv: f64,
    pub threshold: f64,
    pub pass: bool,
}

fn grid_index(trajs: &[Trajectory], t: f64) -> Result<usize, StatsError> {
    let first = trajs.first().ok_or(StatsError::Empty)?;
    first
        .grid
        .iter()
        .position(|&g| (g - t).abs() < 1e-9)
        .ok_or(StatsError::OffGrid(t))
}

fn check_station(trajs: &[Trajectory], station: usize) -> Result<(), StatsError> {
    let first = trajs.first().ok_or(StatsError::Empty)?;
    if station >= first.queue_len.len() {
        return Err(StatsError::BadStation(station));
    }
    Ok(())
}

fn tabulate(samples: impl Iterator<Item = usize>, levels: usize, n: usize) -> DistEstimate {
    let mut counts = vec![0u64; levels + 1];
    let mut tail = 0u64;
    for s in samples {
        if s <= levels {
            counts[s] += 1;
        } else {
            tail += 1;
        }
    }
    let nf = n as f64;
    let pmf: Vec<f64> = counts.iter().map(|&c| c as f64 / nf).collect();
    let stderr = pmf.iter().map(|&p| (p * (1.0 - p) / nf).sqrt()).collect();
    DistEstimate {
        station: 0,
        t: 0.0,
        pmf,
        stderr,
        tail: tail as f64 / nf,
        n_reps: n,
    }
}

/// Empirical pmf of the queue length at grid time `t`.
pub fn pmf_at(
    trajs: &[Trajectory],
    station: usize,
    t: f64,
    levels: usize,
) -> Result<DistEstimate, StatsError> {
    check_station(trajs, station)?;
    let g = grid_index(trajs, t)?;
    let mut est = tabulate(
        trajs.iter().map(|tr| tr.queue_len[station][g] as usize),
        levels,
        trajs.len(),
    );
    est.station = station;
    est.t = t;
    Ok(est)
}

/// Empirical pmf of the queue seen by the last departure opportunity at or
/// before `t`.
pub fn predeparture_pmf_at(
    trajs: &[Trajectory],
    station: usize,
    t: f64,
    levels: usize,
) -> Result<PreDepartureEstimate, StatsError> {
    check_station(trajs, station)?;
    let samples: Vec<usize> = trajs
        .iter()
        .map(|tr| {
            let recs = &tr.predeparture[station];
            let idx = recs.partition_point(|&(epoch, _)| epoch <= t);
            if idx == 0 {
                0 // queue starts empty, so the substituted value is 0
            } else {
                recs[idx - 1].1 as usize
            }
        })
        .collect();
    let mut est = tabulate(samples.into_iter(), levels, trajs.len());
    est.station = station;
    est.t = t;
    Ok(est)
}

/// Reconstructed piecewise-constant queue path of one station, as
/// `(piece start, level)` with the final piece running to the horizon.
fn queue_pieces(tr: &Trajectory, station: usize, horizon: f64) -> Vec<(f64, u32)> {
    let arr = &tr.arrivals[station];
    let eps = &tr.predeparture[station];
    let mut pieces = Vec::with_capacity(arr.len() + eps.len() + 1);
    pieces.push((0.0, 0u32));
    let mut level = 0u32;
    let (mut a, mut e) = (0usize, 0usize);
    while a < arr.len() || e < eps.len() {
        // Epochs are processed before arrivals at equal times, matching the
        // simulator's tie priority.
        let take_epoch = match (arr.get(a), eps.get(e)) {
            (Some(&(ta, _)), Some(&(te, _))) => te <= ta,
            (None, Some(_)) => true,
            _ => false,
        };
        let t;
        if take_epoch {
            let (te, qpre) = eps[e];
            debug_assert_eq!(qpre, level, "replayed path diverged from records");
            if level > 0 {
                level -= 1;
            }
            t = te;
            e += 1;
        } else {
            let (ta, qpre) = arr[a];
            debug_assert_eq!(qpre, level, "replayed path diverged from records");
            level += 1;
            t = ta;
            a += 1;
        }
        if t > horizon {
            break;
        }
        pieces.push((t, level));
    }
    pieces
}

/// Computes both sides of the integral limit law over `[0, t]` for levels
/// `0..=levels`, exactly per replication, then averages. Requires arrival
/// and pre-departure records.
pub fn theorem1_integrals(
    trajs: &[Trajectory],
    station: usize,
    t: f64,
    levels: usize,
    params: &DerivedParams,
) -> Result<IntegralEstimate, StatsError> {
    check_station(trajs, station)?;
    if trajs.is_empty() {
        return Err(StatsError::Empty);
    }
    if trajs
        .iter()
        .any(|tr| tr.arrivals[station].is_empty() && tr.arrivals_total[station] > 0)
    {
        return Err(StatsError::MissingRecords("record_events"));
    }
    if trajs
        .iter()
        .any(|tr| tr.predeparture[station].is_empty() && tr.wasted_epochs[station] + tr.departures_total[station] > 0)
    {
        return Err(StatsError::MissingRecords("record_predeparture"));
    }
    let rho = params.rho_j[station];
    let coupling = params.bottleneck_coupling(station);
    // Exact integral of rho_j over a piece, via the closed form of the
    // integrated bottleneck fluid queue.
    let int_rho = |a: f64, b: f64| -> Result<f64, StatsError> {
        let iq = fluid::int_q(params, b)? - fluid::int_q(params, a)?;
        Ok(rho * ((b - a) - coupling * iq))
    };

    let n = trajs.len();
    let mut lhs_rows = vec![vec![0.0f64; n]; levels + 1];
    let mut rhs_rows = vec![vec![0.0f64; n]; levels + 1];

    for (rep, tr) in trajs.iter().enumerate() {
        // Left side: occupation of each level, weighted by rho_j(s).
        let pieces = queue_pieces(tr, station, t);
        for (idx, &(start, level)) in pieces.iter().enumerate() {
            if start >= t {
                break;
            }
            let end = pieces.get(idx + 1).map(|&(s, _)| s).unwrap_or(t).min(t);
            if end > start && (level as usize) <= levels {
                lhs_rows[level as usize][rep] += int_rho(start, end)?;
            }
        }

        // Right side: occupation of each level by the last-opportunity
        // value, which is constant between epochs. Before the first epoch
        // the value is 0, which never matches l + 1 >= 1.
        let recs = &tr.predeparture[station];
        for (u, &(epoch, qpre)) in recs.iter().enumerate() {
            if epoch >= t {
                break;
            }
            let next = recs.get(u + 1).map(|&(s, _)| s).unwrap_or(t).min(t);
            let value = qpre as usize;
            if value >= 1 && value <= levels + 1 && next > epoch {
                rhs_rows[value - 1][rep] += next - epoch;
            }
        }
    }

    let summarize = |rows: &Vec<Vec<f64>>| -> (Vec<f64>, Vec<f64>) {
        let mut means = Vec::with_capacity(levels + 1);
        let mut errs = Vec::with_capacity(levels + 1);
        for row in rows {
            let (m, s) = mean_stderr(row);
            means.push(m);
            errs.push(s);
        }
        (means, errs)
    };
    let (lhs, stderr_lhs) = summarize(&lhs_rows);
    let (rhs, stderr_rhs) = summarize(&rhs_rows);
    let stderr_diff: Vec<f64> = (0..=levels)
        .map(|l| {
            let diffs: Vec<f64> = (0..n).map(|rep| lhs_rows[l][rep] - rhs_rows[l][rep]).collect();
            mean_stderr(&diffs).1
        })
        .collect();

    Ok(IntegralEstimate {
        station,
        horizon: t,
        lhs,
        rhs,
        stderr_lhs,
        stderr_rhs,
        stderr_diff,
        n_reps: n,
    })
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Total-variation distance between two pmfs on the same support.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64, StatsError> {
    if p.len() != q.len() {
        return Err(StatsError::SupportMismatch);
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Geometric pmf with parameter `rho` on `0..=levels`, tail appended.
pub fn geometric_pmf(rho: f64, levels: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..=levels).map(|l| (1.0 - rho) * rho.powi(l as i32)).collect();
    v.push(rho.powi(levels as i32 + 1));
    v
}

/// Compares the empirical laws at two grid times. `t1` must lie beyond the
/// burn-in `0.5 / mu_j`, which dampens the deterministic empty start.
#[allow(clippy::too_many_arguments)]
pub fn time_invariance_check(
    trajs: &[Trajectory],
    station: usize,
    t1: f64,
    t2: f64,
    levels: usize,
    threshold: f64,
    mu_j: f64,
) -> Result<TimeInvarianceReport, StatsError> {
    if !(t1 < t2) {
        return Err(StatsError::BadTimePair(t1, t2));
    }
    let burn_in = 0.5 / mu_j;
    if t1 < burn_in {
        return Err(StatsError::InsideBurnIn { t1, burn_in });
    }
    let a = pmf_at(trajs, station, t1, levels)?;
    let b = pmf_at(trajs, station, t2, levels)?;
    let tv = tv_distance(&a.with_tail(), &b.with_tail())?;
    Ok(TimeInvarianceReport {
        station,
        t1,
        t2,
        tv,
        threshold,
        pass: tv <= threshold,
    })
}
