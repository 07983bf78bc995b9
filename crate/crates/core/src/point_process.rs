//! Departure-epoch streams for the client stations.
//!
//! Each client station is served only at the epochs of an exogenous point
//! process built from a stationary ergodic sequence of inter-epoch times
//! with a prescribed mean. Streams are lazy: epochs are generated on demand
//! and the horizon is unbounded.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeds;

/// Inter-epoch law, up to a rescaling that fixes the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointProcessKind {
    /// Exponential inter-epoch times.
    Poisson,
    /// Gamma inter-epoch times with the given shape (shape 2 = Erlang-2).
    RenewalGamma { shape: f64 },
    /// Equally spaced epochs.
    RenewalDeterministic,
    /// Exponential inter-epoch times whose rate is modulated by a discrete
    /// phase chain advancing one step per epoch. `rates` are relative; the
    /// whole stream is rescaled to the target mean. The phase starts in the
    /// stationary distribution of `transition`, making the inter-epoch
    /// sequence strictly stationary.
    MarkovModulated {
        rates: Vec<f64>,
        transition: Vec<Vec<f64>>,
    },
}

/// A kind plus the target mean inter-epoch time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointProcessSpec {
    pub kind: PointProcessKind,
    pub mean: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StreamError {
    #[error("mean inter-epoch time must be positive, got {0}")]
    NonPositiveMean(f64),
    #[error("gamma shape must be positive and finite, got {0}")]
    BadShape(f64),
    #[error("modulation needs at least one phase")]
    NoPhases,
    #[error("modulated rate {0} must be positive and finite")]
    BadRate(f64),
    #[error("transition matrix must be square and row-stochastic")]
    BadTransition,
    #[error("transition matrix must be irreducible")]
    ReducibleTransition,
}

/// Validates the distribution parameters of a kind.
pub fn validate_kind(kind: &PointProcessKind) -> Result<(), StreamError> {
    match kind {
        PointProcessKind::Poisson | PointProcessKind::RenewalDeterministic => Ok(()),
        PointProcessKind::RenewalGamma { shape } => {
            if *shape > 0.0 && shape.is_finite() {
                Ok(())
            } else {
                Err(StreamError::BadShape(*shape))
            }
        }
        PointProcessKind::MarkovModulated { rates, transition } => {
            if rates.is_empty() {
                return Err(StreamError::NoPhases);
            }
            for &r in rates {
                if !(r > 0.0) || !r.is_finite() {
                    return Err(StreamError::BadRate(r));
                }
            }
            let m = rates.len();
            if transition.len() != m {
                return Err(StreamError::BadTransition);
            }
            for row in transition {
                if row.len() != m
                    || row.iter().any(|&x| x < 0.0 || !x.is_finite())
                    || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9
                {
                    return Err(StreamError::BadTransition);
                }
            }
            if !is_irreducible(transition) {
                return Err(StreamError::ReducibleTransition);
            }
            Ok(())
        }
    }
}

fn is_irreducible(p: &[Vec<f64>]) -> bool {
    let m = p.len();
    // Strong connectivity by forward and backward reachability from node 0.
    let reach = |forward: bool| {
        let mut seen = vec![false; m];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for y in 0..m {
                let edge = if forward { p[x][y] } else { p[y][x] };
                if edge > 0.0 && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Stationary distribution of a small row-stochastic matrix, by solving
/// `pi (P - I) = 0` with the normalization row appended (dense elimination).
fn stationary_distribution(p: &[Vec<f64>]) -> Vec<f64> {
    let m = p.len();
    if m == 1 {
        return vec![1.0];
    }
    // Unknowns pi_0..pi_{m-1}; equations: pi P = pi (first m-1 columns) plus
    // sum pi = 1.
    let mut a = vec![vec![0.0f64; m + 1]; m];
    for col in 0..m - 1 {
        for row in 0..m {
            a[col][row] = p[row][col] - if row == col { 1.0 } else { 0.0 };
        }
    }
    for row in 0..m {
        a[m - 1][row] = 1.0;
    }
    a[m - 1][m] = 1.0;
    // Gaussian elimination with partial pivoting.
    for c in 0..m {
        let piv = (c..m)
            .max_by(|&x, &y| a[x][c].abs().partial_cmp(&a[y][c].abs()).unwrap())
            .unwrap();
        a.swap(c, piv);
        let d = a[c][c];
        for x in c..=m {
            a[c][x] /= d;
        }
        for rr in 0..m {
            if rr != c && a[rr][c] != 0.0 {
                let f = a[rr][c];
                for x in c..=m {
                    a[rr][x] -= f * a[c][x];
                }
            }
        }
    }
    (0..m).map(|i| a[i][m].max(0.0)).collect()
}

enum KindState {
    Poisson {
        mean: f64,
    },
    Gamma {
        dist: Gamma<f64>,
    },
    Deterministic {
        mean: f64,
    },
    MarkovModulated {
        /// Per-phase mean inter-epoch times after rescaling.
        phase_means: Vec<f64>,
        cumulative_rows: Vec<Vec<f64>>,
        phase: usize,
    },
}

/// Lazy generator of the strictly increasing epochs of one client station.
pub struct EpochStream {
    state: KindState,
    rng: ChaCha8Rng,
    /// Next epoch, always generated one ahead.
    next: f64,
    /// Epochs emitted so far.
    count: u64,
}

impl EpochStream {
    pub fn new(spec: &PointProcessSpec, seed: u64) -> Result<Self, StreamError> {
        if !(spec.mean > 0.0) || !spec.mean.is_finite() {
            return Err(StreamError::NonPositiveMean(spec.mean));
        }
        validate_kind(&spec.kind)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = match &spec.kind {
            PointProcessKind::Poisson => KindState::Poisson { mean: spec.mean },
            PointProcessKind::RenewalGamma { shape } => KindState::Gamma {
                dist: Gamma::new(*shape, spec.mean / *shape).expect("validated shape"),
            },
            PointProcessKind::RenewalDeterministic => KindState::Deterministic { mean: spec.mean },
            PointProcessKind::MarkovModulated { rates, transition } => {
                let pi = stationary_distribution(transition);
                let raw_mean: f64 = pi.iter().zip(rates).map(|(&w, &r)| w / r).sum();
                let scale = raw_mean / spec.mean;
                let phase_means: Vec<f64> = rates.iter().map(|&r| 1.0 / (r * scale)).collect();
                let cumulative_rows: Vec<Vec<f64>> = transition
                    .iter()
                    .map(|row| {
                        row.iter()
                            .scan(0.0, |acc, &x| {
                                *acc += x;
                                Some(*acc)
                            })
                            .collect()
                    })
                    .collect();
                let phase = sample_index(&cumulative(&pi), &mut rng);
                KindState::MarkovModulated {
                    phase_means,
                    cumulative_rows,
                    phase,
                }
            }
        };
        let mut stream = EpochStream {
            state,
            rng,
            next: 0.0,
            count: 0,
        };
        stream.next = stream.draw_interval();
        Ok(stream)
    }

    /// Next epoch without consuming it.
    pub fn peek(&self) -> f64 {
        self.next
    }

    /// Consumes and returns the next epoch.
    pub fn advance(&mut self) -> f64 {
        let epoch = self.next;
        self.count += 1;
        let dt = self.draw_interval();
        self.next = match &self.state {
            // Exact multiples of the mean, no floating accumulation.
            KindState::Deterministic { mean } => (self.count + 1) as f64 * mean,
            _ => epoch + dt,
        };
        epoch
    }

    /// Number of epochs emitted so far.
    pub fn emitted(&self) -> u64 {
        self.count
    }

    fn draw_interval(&mut self) -> f64 {
        let dt = match &mut self.state {
            KindState::Poisson { mean } => {
                let e: f64 = Exp1.sample(&mut self.rng);
                e * *mean
            }
            KindState::Gamma { dist } => dist.sample(&mut self.rng),
            KindState::Deterministic { mean } => *mean,
            KindState::MarkovModulated {
                phase_means,
                cumulative_rows,
                phase,
            } => {
                let e: f64 = Exp1.sample(&mut self.rng);
                let dt = e * phase_means[*phase];
                *phase = sample_index(&cumulative_rows[*phase], &mut self.rng);
                dt
            }
        };
        // Keep epochs strictly increasing even on a zero draw.
        dt.max(f64::MIN_POSITIVE)
    }

}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .scan(0.0, |acc, &w| {
            *acc += w;
            Some(*acc)
        })
        .collect()
}

fn sample_index(cumulative_row: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let total = *cumulative_row.last().expect("non-empty row");
    let target = u * total;
    cumulative_row
        .iter()
        .position(|&c| target < c)
        .unwrap_or(cumulative_row.len() - 1)
}

/// Builds the epoch stream for `(spec, seed)`.
pub fn make_stream(spec: &PointProcessSpec, seed: u64) -> Result<EpochStream, StreamError> {
    EpochStream::new(spec, seed)
}

/// Largest epoch `<= t`, consuming the stream up to the first epoch beyond
/// `t`. Returns `None` when no epoch has occurred by `t`.
pub fn last_before(stream: &mut EpochStream, t: f64) -> Option<f64> {
    let mut last = None;
    while stream.peek() <= t {
        last = Some(stream.advance());
    }
    last
}

/// Normalized count `S(t) / n`, consuming the stream up to `t`.
pub fn empirical_rate(stream: &mut EpochStream, t: f64, n: u64) -> f64 {
    while stream.peek() <= t {
        stream.advance();
    }
    stream.emitted() as f64 / n as f64
}

/// Convenience constructor used by the simulator: stream for client `j` of
/// replication `rep`, with mean `1 / (mu_j n)`.
pub fn station_stream(
    kind: &PointProcessKind,
    mu_j: f64,
    n: u64,
    root_seed: u64,
    rep: u64,
    station: usize,
) -> Result<EpochStream, StreamError> {
    let spec = PointProcessSpec {
        kind: kind.clone(),
        mean: 1.0 / (mu_j * n as f64),
    };
    let seed = seeds::stream_seed(
        seeds::replication_seed(root_seed, rep),
        seeds::StreamDomain::ClientEpochs(station),
    );
    EpochStream::new(&spec, seed)
}
