//! Exact stochastic simulation of the closed network.
//!
//! Units live at infinite-server stations with exponential per-unit holding
//! times and are routed to single-server client stations whose departure
//! opportunities come from autonomous epoch streams. An opportunity at an
//! empty queue is wasted; otherwise one unit leaves and instantly returns
//! to its home server station.
//!
//! The default engine replaces the per-unit exponential clocks of server
//! station `i` by one aggregate alarm with rate `lambda_i * sigma_i`, which
//! is distributionally exact by memorylessness and O(1) per event. The
//! literal per-unit construction is kept as a reference engine for
//! small-population equivalence tests.
//!
//! Invariants maintained at every event: unit conservation
//! (`sum_i sigma_i + sum_j |queue_j| = n`) and `A_j - D_j = |queue_j|`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{validate_spec, NetworkSpec};
use crate::point_process::{self, EpochStream};
use crate::seeds::{self, StreamDomain};

/// Order in which queued units are served.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discipline {
    #[default]
    Fifo,
    Lifo,
    Random,
}

/// Server-completion engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineMode {
    /// One exponential alarm per server station at the aggregate rate.
    #[default]
    Aggregate,
    /// One exponential clock per unit (slow reference construction).
    PerUnit,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub spec: NetworkSpec,
    /// End time of each replication.
    pub horizon: f64,
    /// Observation times; sorted, within `[0, horizon]`.
    pub sample_grid: Vec<f64>,
    pub seed: u64,
    /// Queue levels tracked individually by the distribution estimators.
    pub record_levels: usize,
    pub discipline: Discipline,
    pub engine: EngineMode,
    /// Record every arrival as `(time, queue seen)`. Needed to replay the
    /// driver path or integrate queue-level indicators exactly.
    pub record_events: bool,
    /// Record every departure epoch as `(time, queue seen)`.
    pub record_predeparture: bool,
}

impl SimConfig {
    pub fn new(spec: NetworkSpec, horizon: f64, sample_grid: Vec<f64>, seed: u64) -> Self {
        SimConfig {
            spec,
            horizon,
            sample_grid,
            seed,
            record_levels: 10,
            discipline: Discipline::Fifo,
            engine: EngineMode::Aggregate,
            record_events: true,
            record_predeparture: true,
        }
    }
}

/// Crossing counters of one client station: how many arrivals and epochs
/// observed each pre-event queue level. Levels up to the tracked maximum
/// are counted exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StationCrossings {
    pub arrivals_seeing: Vec<u64>,
    pub epochs_seeing: Vec<u64>,
}

/// Everything observed during one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub rep: u64,
    pub grid: Vec<f64>,
    /// Queue length per client station and grid point.
    pub queue_len: Vec<Vec<u32>>,
    /// Queue composition per client station, home server and grid point.
    pub class_len: Vec<Vec<Vec<u32>>>,
    /// Units present per server station and grid point.
    pub server_count: Vec<Vec<u32>>,
    /// Departure-opportunity records `(epoch, queue seen)` per station.
    pub predeparture: Vec<Vec<(f64, u32)>>,
    /// Arrival records `(time, queue seen)` per station; empty unless
    /// `record_events` was set.
    pub arrivals: Vec<Vec<(f64, u32)>>,
    pub crossings: Vec<StationCrossings>,
    /// Queue lengths at the horizon.
    pub final_queue: Vec<u32>,
    pub arrivals_total: Vec<u64>,
    pub departures_total: Vec<u64>,
    /// Arrivals per (server, client) class.
    pub class_arrivals_total: Vec<Vec<u64>>,
    /// Epochs that found an empty queue.
    pub wasted_epochs: Vec<u64>,
    /// Exact event-time ties between a client epoch and a server alarm,
    /// resolved by the fixed client-first priority.
    pub anomalies: u64,
}

/// Pending per-unit completion, ordered by time with a deterministic
/// insertion-sequence tie-break.
struct UnitAlarm {
    time: f64,
    server: usize,
    seq: u64,
}

impl PartialEq for UnitAlarm {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for UnitAlarm {}
impl PartialOrd for UnitAlarm {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for UnitAlarm {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap pops the earliest alarm first.
        other
            .time
            .partial_cmp(&self.time)
            .expect("alarm times are finite")
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

enum Alarms {
    Aggregate { next: Vec<f64> },
    PerUnit { heap: BinaryHeap<UnitAlarm>, seq: u64 },
}

/// Runs one replication. Deterministic given `(config.seed, rep)`.
pub fn run_replication(config: &SimConfig, rep: u64) -> Trajectory {
    debug_assert!(validate_spec(&config.spec).is_empty(), "spec must be valid");
    let spec = &config.spec;
    let (r, k) = (spec.r, spec.k);
    let n = spec.n;
    let grid = &config.sample_grid;
    assert!(
        grid.windows(2).all(|w| w[0] <= w[1])
            && grid.last().map_or(true, |&g| g <= config.horizon),
        "sample grid must be sorted and within the horizon"
    );
    let level_cap = config.record_levels.max(10);

    let mut alarm_rng = seeds::stream_rng(config.seed, rep, StreamDomain::ServerAlarms);
    let mut route_rng = seeds::stream_rng(config.seed, rep, StreamDomain::Routing);
    let mut disc_rng = seeds::stream_rng(config.seed, rep, StreamDomain::Discipline);
    let mut streams: Vec<EpochStream> = (0..k)
        .map(|j| {
            point_process::station_stream(
                &spec.departure_kind[j],
                spec.mu_j[j],
                n,
                config.seed,
                rep,
                j,
            )
            .expect("spec was validated")
        })
        .collect();

    // Cumulative routing rows over the positive entries only.
    let routes: Vec<Vec<(f64, usize)>> = (0..r)
        .map(|i| {
            let mut acc = 0.0;
            spec.p[i]
                .iter()
                .enumerate()
                .filter(|(_, &x)| x > 0.0)
                .map(|(j, &x)| {
                    acc += x;
                    (acc, j)
                })
                .collect()
        })
        .collect();

    let mut sigma: Vec<u64> = spec.n_i.clone();
    let mut sigma_total: u64 = n;
    let mut in_queues: u64 = 0;
    let mut queues: Vec<VecDeque<u16>> = vec![VecDeque::new(); k];
    let mut class_count: Vec<Vec<u32>> = vec![vec![0; r]; k];

    let mut alarms = match config.engine {
        EngineMode::Aggregate => {
            let next = (0..r)
                .map(|i| {
                    let e: f64 = Exp1.sample(&mut alarm_rng);
                    e / (spec.lambda_i[i] * sigma[i] as f64)
                })
                .collect();
            Alarms::Aggregate { next }
        }
        EngineMode::PerUnit => {
            let mut heap = BinaryHeap::with_capacity(n as usize);
            let mut seq = 0u64;
            for i in 0..r {
                for _ in 0..spec.n_i[i] {
                    let e: f64 = Exp1.sample(&mut alarm_rng);
                    heap.push(UnitAlarm {
                        time: e / spec.lambda_i[i],
                        server: i,
                        seq,
                    });
                    seq += 1;
                }
            }
            Alarms::PerUnit { heap, seq }
        }
    };

    let mut out = Trajectory {
        rep,
        grid: grid.clone(),
        queue_len: vec![vec![0; grid.len()]; k],
        class_len: vec![vec![vec![0; grid.len()]; r]; k],
        server_count: vec![vec![0; grid.len()]; r],
        predeparture: vec![Vec::new(); k],
        arrivals: vec![Vec::new(); k],
        crossings: vec![
            StationCrossings {
                arrivals_seeing: vec![0; level_cap + 1],
                epochs_seeing: vec![0; level_cap + 1],
            };
            k
        ],
        final_queue: vec![0; k],
        arrivals_total: vec![0; k],
        departures_total: vec![0; k],
        class_arrivals_total: vec![vec![0; k]; r],
        wasted_epochs: vec![0; k],
        anomalies: 0,
    };

    let mut next_grid = 0usize;
    loop {
        let mut tc = f64::INFINITY;
        let mut jc = usize::MAX;
        for (j, s) in streams.iter().enumerate() {
            if s.peek() < tc {
                tc = s.peek();
                jc = j;
            }
        }
        let (ts, is) = match &alarms {
            Alarms::Aggregate { next } => {
                let mut ts = f64::INFINITY;
                let mut is = usize::MAX;
                for (i, &t) in next.iter().enumerate() {
                    if t < ts {
                        ts = t;
                        is = i;
                    }
                }
                (ts, is)
            }
            Alarms::PerUnit { heap, .. } => heap
                .peek()
                .map(|a| (a.time, a.server))
                .unwrap_or((f64::INFINITY, usize::MAX)),
        };

        let te = tc.min(ts);
        if te > config.horizon {
            break;
        }
        if tc == ts && tc.is_finite() {
            out.anomalies += 1;
        }

        while next_grid < grid.len() && grid[next_grid] < te {
            snapshot(
                &mut out, next_grid, &queues, &class_count, &sigma, n, sigma_total, in_queues,
            );
            next_grid += 1;
        }

        // Fixed priority: client epochs before server completions.
        if tc <= ts {
            let j = jc;
            let qpre = queues[j].len();
            if config.record_predeparture {
                out.predeparture[j].push((tc, qpre as u32));
            }
            if qpre <= level_cap {
                out.crossings[j].epochs_seeing[qpre] += 1;
            }
            if qpre > 0 {
                let tag = match config.discipline {
                    Discipline::Fifo => queues[j].pop_front().expect("nonempty"),
                    Discipline::Lifo => queues[j].pop_back().expect("nonempty"),
                    Discipline::Random => {
                        let idx = disc_rng.gen_range(0..queues[j].len());
                        queues[j].remove(idx).expect("in range")
                    }
                } as usize;
                class_count[j][tag] -= 1;
                in_queues -= 1;
                out.departures_total[j] += 1;
                sigma[tag] += 1;
                sigma_total += 1;
                match &mut alarms {
                    Alarms::Aggregate { next } => {
                        let e: f64 = Exp1.sample(&mut alarm_rng);
                        next[tag] = tc + e / (spec.lambda_i[tag] * sigma[tag] as f64);
                    }
                    Alarms::PerUnit { heap, seq } => {
                        let e: f64 = Exp1.sample(&mut alarm_rng);
                        heap.push(UnitAlarm {
                            time: tc + e / spec.lambda_i[tag],
                            server: tag,
                            seq: *seq,
                        });
                        *seq += 1;
                    }
                }
            } else {
                out.wasted_epochs[j] += 1;
            }
            streams[j].advance();
        } else {
            let i = match &mut alarms {
                Alarms::Aggregate { .. } => is,
                Alarms::PerUnit { heap, .. } => heap.pop().expect("alarm exists").server,
            };
            sigma[i] -= 1;
            sigma_total -= 1;
            let u: f64 = route_rng.gen();
            let row = &routes[i];
            let j = row
                .iter()
                .find(|&&(c, _)| u < c)
                .map(|&(_, j)| j)
                .unwrap_or(row.last().expect("row-stochastic").1);
            let qpre = queues[j].len();
            if qpre <= level_cap {
                out.crossings[j].arrivals_seeing[qpre] += 1;
            }
            if config.record_events {
                out.arrivals[j].push((ts, qpre as u32));
            }
            queues[j].push_back(i as u16);
            class_count[j][i] += 1;
            in_queues += 1;
            out.arrivals_total[j] += 1;
            out.class_arrivals_total[i][j] += 1;
            if let Alarms::Aggregate { next } = &mut alarms {
                next[i] = if sigma[i] == 0 {
                    f64::INFINITY
                } else {
                    let e: f64 = Exp1.sample(&mut alarm_rng);
                    ts + e / (spec.lambda_i[i] * sigma[i] as f64)
                };
            }
        }
        debug_assert_eq!(sigma_total + in_queues, n, "unit conservation");
        debug_assert!(
            out.arrivals_total
                .iter()
                .zip(&out.departures_total)
                .zip(&queues)
                .all(|((&a, &d), q)| a - d == q.len() as u64),
            "arrivals minus departures must equal the queue length"
        );
    }

    while next_grid < grid.len() {
        snapshot(
            &mut out, next_grid, &queues, &class_count, &sigma, n, sigma_total, in_queues,
        );
        next_grid += 1;
    }
    for j in 0..k {
        out.final_queue[j] = queues[j].len() as u32;
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn snapshot(
    out: &mut Trajectory,
    g: usize,
    queues: &[VecDeque<u16>],
    class_count: &[Vec<u32>],
    sigma: &[u64],
    n: u64,
    sigma_total: u64,
    in_queues: u64,
) {
    // Full conservation recount at observation points, active in release
    // builds as well.
    let recount: u64 = sigma.iter().sum::<u64>() + queues.iter().map(|q| q.len() as u64).sum::<u64>();
    assert_eq!(recount, n, "unit conservation violated");
    assert_eq!(sigma_total + in_queues, n, "conservation counters drifted");
    for (j, q) in queues.iter().enumerate() {
        out.queue_len[j][g] = q.len() as u32;
        for i in 0..class_count[j].len() {
            out.class_len[j][i][g] = class_count[j][i];
        }
    }
    for (i, &s) in sigma.iter().enumerate() {
        out.server_count[i][g] = s as u32;
    }
}

/// Runs `n_reps` independent replications in parallel. Replication `m`
/// derives its own seed from `(config.seed, m)`, so the result does not
/// depend on scheduling or on the degree of parallelism.
pub fn replicate(config: &SimConfig, n_reps: u64) -> Vec<Trajectory> {
    (0..n_reps)
        .into_par_iter()
        .map(|m| run_replication(config, m))
        .collect()
}

/// Sequential variant of [`replicate`]; same output by construction.
pub fn replicate_serial(config: &SimConfig, n_reps: u64) -> Vec<Trajectory> {
    (0..n_reps).map(|m| run_replication(config, m)).collect()
}

/// Checks the up/down-crossing identity
/// `arrivals_seeing[l-1] = epochs_seeing[l] + (final_queue >= l)` for every
/// station and level `1..=max_level`. Returns the first violation.
pub fn crossing_identity_violation(
    traj: &Trajectory,
    max_level: usize,
) -> Option<(usize, usize)> {
    for (j, c) in traj.crossings.iter().enumerate() {
        for l in 1..=max_level.min(c.epochs_seeing.len() - 1) {
            let up = c.arrivals_seeing[l - 1];
            let down = c.epochs_seeing[l];
            let standing = u64::from(traj.final_queue[j] as usize >= l);
            if up != down + standing {
                return Some((j, l));
            }
        }
    }
    None
}
