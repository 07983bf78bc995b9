//! Network parameterization and derived quantities.
//!
//! A network has `r` infinite-server "server stations" holding the units and
//! `k` single-server "client stations" served autonomously at the epochs of
//! exogenous point processes. Station indices are 0-based throughout the
//! code; client station `k-1` must be the unique bottleneck.
//!
//! From the raw parameters we derive the class rates `lambda_ij`, station
//! loads `rho_j`, the per-class arrival weights `beta_ij` and the feeder
//! index sets, and classify each client station by its limit regime.

use serde::{Deserialize, Serialize};

use crate::point_process::{self, PointProcessKind};

/// Tolerance for "row sums to one" checks on routing matrices.
const ROW_SUM_TOL: f64 = 1e-9;

/// Normalization convention for the class arrival weights `beta_ij`.
///
/// `UnitSum` divides the class rate `lambda_ij * alpha_i` by the total
/// arrival rate `rho_j * mu_j` of the station, so the weights of one station
/// sum to one; it is the convention every identity in this crate is
/// consistent with. `MuScaled` divides by `rho_j` only (the weights then sum
/// to `mu_j`) and is kept as an experimentation switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaConvention {
    #[default]
    UnitSum,
    MuScaled,
}

/// Full parameterization of the closed network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Number of server stations.
    pub r: usize,
    /// Number of client stations; station `k-1` is the bottleneck.
    pub k: usize,
    /// Total number of units.
    pub n: u64,
    /// Units initially at each server station; sums to `n`.
    pub n_i: Vec<u64>,
    /// Per-unit departure rate at each server station.
    pub lambda_i: Vec<f64>,
    /// Routing probabilities `p[i][j]`: server `i` sends a completed unit to
    /// client `j`. Rows sum to one.
    pub p: Vec<Vec<f64>>,
    /// Normalized client service rates; the mean inter-epoch time at client
    /// `j` is `1 / (mu_j[j] * n)`.
    pub mu_j: Vec<f64>,
    /// Departure point-process kind per client station.
    pub departure_kind: Vec<PointProcessKind>,
    /// Weight normalization used by the fluid formulas.
    #[serde(default)]
    pub beta_convention: BetaConvention,
}

/// One violated invariant found by [`validate_spec`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    BadDimension,
    ZeroUnits,
    UnitCountMismatch,
    NonPositiveRate,
    NegativeRouting,
    RowNotStochastic,
    EmptyInflow,
    BadDepartureProcess,
    NoBottleneck,
    MultipleBottlenecks,
    BottleneckNotLast,
}

impl Violation {
    fn new(code: ViolationCode, message: String) -> Self {
        Violation { code, message }
    }
}

/// Quantities derived from a valid [`NetworkSpec`].
#[derive(Debug, Clone)]
pub struct DerivedParams {
    pub r: usize,
    pub k: usize,
    /// Class rates `lambda_i * p[i][j]`.
    pub lambda_ij: Vec<Vec<f64>>,
    /// Unit fractions `n_i / n`.
    pub alpha_i: Vec<f64>,
    /// Loads at the concrete unit counts.
    pub rho_finite_j: Vec<f64>,
    /// Limiting loads (identical to `rho_finite_j` here since `alpha_i` is
    /// taken from the concrete spec).
    pub rho_j: Vec<f64>,
    /// Class arrival weights under the configured convention.
    pub beta_ij: Vec<Vec<f64>>,
    /// Feeder servers of each client station: `{i : lambda_ij > 0}`.
    pub feeders: Vec<Vec<usize>>,
    /// Client stations fed by each server: `{j : lambda_ij > 0}`.
    pub clients_of: Vec<Vec<usize>>,
    /// Client service rates, copied for convenience.
    pub mu_j: Vec<f64>,
    pub beta_convention: BetaConvention,
}

impl DerivedParams {
    /// Index of the bottleneck station.
    pub fn bottleneck(&self) -> usize {
        self.k - 1
    }

    /// Whether server `i` feeds the bottleneck.
    pub fn feeds_bottleneck(&self, i: usize) -> bool {
        self.lambda_ij[i][self.bottleneck()] > 0.0
    }

    /// Servers feeding both client `j` and the bottleneck.
    pub fn shared_feeders(&self, j: usize) -> Vec<usize> {
        self.feeders[j]
            .iter()
            .copied()
            .filter(|&i| self.feeds_bottleneck(i))
            .collect()
    }

    /// `sum over shared feeders of beta_ij * beta_ik`, the coupling factor
    /// between client `j` and the bottleneck in the time-dependent load.
    pub fn bottleneck_coupling(&self, j: usize) -> f64 {
        let kb = self.bottleneck();
        self.shared_feeders(j)
            .iter()
            .map(|&i| self.beta_ij[i][j] * self.beta_ij[i][kb])
            .sum()
    }
}

/// Limit regime of a client station, in decreasing precedence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientRegime {
    /// The bottleneck is exactly critical; every limiting law is
    /// time-invariant.
    CriticalBottleneck,
    /// Single server station feeds the whole network.
    SingleServer,
    /// No feeder shared with the bottleneck; the limiting law is
    /// time-invariant.
    DisjointFromBottleneck,
    /// Same feeder set as the bottleneck.
    FullOverlapWithBottleneck,
    General,
}

/// Topology analysis of a validated spec.
#[derive(Debug, Clone, Serialize)]
pub struct TopologyReport {
    /// Connected components of the bipartite station graph, each listed as
    /// (server indices, client indices).
    pub components: Vec<(Vec<usize>, Vec<usize>)>,
    /// Client stations with load at least one.
    pub bottleneck_ids: Vec<usize>,
    /// Per client station: does it share a feeder with the bottleneck?
    pub shares_hub_with_bottleneck: Vec<bool>,
    /// Per client station (bottleneck included for completeness).
    pub regime: Vec<ClientRegime>,
}

/// Checks every structural invariant and returns the violations found.
/// An empty list means the spec is accepted by all other modules.
pub fn validate_spec(spec: &NetworkSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let (r, k) = (spec.r, spec.k);

    if r == 0 || k == 0 {
        out.push(Violation::new(
            ViolationCode::BadDimension,
            format!("need at least one station of each type, got r={r}, k={k}"),
        ));
        return out;
    }
    let dims_ok = spec.n_i.len() == r
        && spec.lambda_i.len() == r
        && spec.p.len() == r
        && spec.p.iter().all(|row| row.len() == k)
        && spec.mu_j.len() == k
        && spec.departure_kind.len() == k;
    if !dims_ok {
        out.push(Violation::new(
            ViolationCode::BadDimension,
            "field lengths do not match r and k".to_string(),
        ));
        return out;
    }

    for (i, &ni) in spec.n_i.iter().enumerate() {
        if ni == 0 {
            out.push(Violation::new(
                ViolationCode::ZeroUnits,
                format!("server station {i} has no units"),
            ));
        }
    }
    let total: u64 = spec.n_i.iter().sum();
    if total != spec.n {
        out.push(Violation::new(
            ViolationCode::UnitCountMismatch,
            format!("n_i sums to {total}, spec says n={}", spec.n),
        ));
    }

    for (i, &l) in spec.lambda_i.iter().enumerate() {
        if !(l > 0.0) || !l.is_finite() {
            out.push(Violation::new(
                ViolationCode::NonPositiveRate,
                format!("lambda_i[{i}] = {l} must be positive and finite"),
            ));
        }
    }
    for (j, &m) in spec.mu_j.iter().enumerate() {
        if !(m > 0.0) || !m.is_finite() {
            out.push(Violation::new(
                ViolationCode::NonPositiveRate,
                format!("mu_j[{j}] = {m} must be positive and finite"),
            ));
        }
    }

    for (i, row) in spec.p.iter().enumerate() {
        if row.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            out.push(Violation::new(
                ViolationCode::NegativeRouting,
                format!("routing row {i} has a negative or non-finite entry"),
            ));
            continue;
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            out.push(Violation::new(
                ViolationCode::RowNotStochastic,
                format!("routing row {i} sums to {s}"),
            ));
        }
    }

    for (j, kind) in spec.departure_kind.iter().enumerate() {
        if let Err(e) = point_process::validate_kind(kind) {
            out.push(Violation::new(
                ViolationCode::BadDepartureProcess,
                format!("departure process of client {j}: {e}"),
            ));
        }
    }

    if !out.is_empty() {
        // Load-based checks below assume well-formed rates.
        return out;
    }

    // Inflow and bottleneck structure.
    let rho: Vec<f64> = (0..k)
        .map(|j| {
            let inflow: f64 = (0..r)
                .map(|i| spec.lambda_i[i] * spec.p[i][j] * spec.n_i[i] as f64)
                .sum();
            inflow / (spec.mu_j[j] * spec.n as f64)
        })
        .collect();
    for (j, &x) in rho.iter().enumerate() {
        if x == 0.0 {
            out.push(Violation::new(
                ViolationCode::EmptyInflow,
                format!("client station {j} receives no units"),
            ));
        }
    }
    let bottlenecks: Vec<usize> = (0..k).filter(|&j| rho[j] >= 1.0).collect();
    match bottlenecks.len() {
        0 => out.push(Violation::new(
            ViolationCode::NoBottleneck,
            "no client station has load >= 1".to_string(),
        )),
        1 => {
            if bottlenecks[0] != k - 1 {
                out.push(Violation::new(
                    ViolationCode::BottleneckNotLast,
                    format!(
                        "bottleneck is station {} but must be the last station {}",
                        bottlenecks[0],
                        k - 1
                    ),
                ));
            }
        }
        _ => out.push(Violation::new(
            ViolationCode::MultipleBottlenecks,
            format!("stations {bottlenecks:?} all have load >= 1"),
        )),
    }

    out
}

/// Computes all derived parameters. The spec must have passed
/// [`validate_spec`]; this is checked with a debug assertion only.
pub fn derive_params(spec: &NetworkSpec) -> DerivedParams {
    debug_assert!(validate_spec(spec).is_empty(), "spec must be valid");
    let (r, k) = (spec.r, spec.k);
    let n = spec.n as f64;

    let lambda_ij: Vec<Vec<f64>> = (0..r)
        .map(|i| (0..k).map(|j| spec.lambda_i[i] * spec.p[i][j]).collect())
        .collect();
    let alpha_i: Vec<f64> = spec.n_i.iter().map(|&ni| ni as f64 / n).collect();

    let rho_finite_j: Vec<f64> = (0..k)
        .map(|j| {
            (0..r)
                .map(|i| lambda_ij[i][j] * spec.n_i[i] as f64)
                .sum::<f64>()
                / (spec.mu_j[j] * n)
        })
        .collect();
    // alpha_i is read off the concrete spec, so the limit load coincides
    // with the finite-n load.
    let rho_j: Vec<f64> = (0..k)
        .map(|j| {
            (0..r)
                .map(|i| lambda_ij[i][j] * alpha_i[i])
                .sum::<f64>()
                / spec.mu_j[j]
        })
        .collect();

    let beta_ij: Vec<Vec<f64>> = (0..r)
        .map(|i| {
            (0..k)
                .map(|j| {
                    if lambda_ij[i][j] == 0.0 {
                        0.0
                    } else {
                        let raw = lambda_ij[i][j] * alpha_i[i] / rho_j[j];
                        match spec.beta_convention {
                            BetaConvention::UnitSum => raw / spec.mu_j[j],
                            BetaConvention::MuScaled => raw,
                        }
                    }
                })
                .collect()
        })
        .collect();

    let feeders: Vec<Vec<usize>> = (0..k)
        .map(|j| (0..r).filter(|&i| lambda_ij[i][j] > 0.0).collect())
        .collect();
    let clients_of: Vec<Vec<usize>> = (0..r)
        .map(|i| (0..k).filter(|&j| lambda_ij[i][j] > 0.0).collect())
        .collect();

    DerivedParams {
        r,
        k,
        lambda_ij,
        alpha_i,
        rho_finite_j,
        rho_j,
        beta_ij,
        feeders,
        clients_of,
        mu_j: spec.mu_j.clone(),
        beta_convention: spec.beta_convention,
    }
}

/// Classifies the topology of a validated spec.
pub fn classify(spec: &NetworkSpec, params: &DerivedParams) -> TopologyReport {
    let (r, k) = (spec.r, spec.k);
    let kb = params.bottleneck();

    // Union-find over r server nodes followed by k client nodes.
    let mut parent: Vec<usize> = (0..r + k).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }
    for i in 0..r {
        for j in 0..k {
            if params.lambda_ij[i][j] > 0.0 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, r + j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut components: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    let mut root_index: Vec<Option<usize>> = vec![None; r + k];
    for x in 0..r + k {
        let root = find(&mut parent, x);
        let idx = *root_index[root].get_or_insert_with(|| {
            components.push((Vec::new(), Vec::new()));
            components.len() - 1
        });
        if x < r {
            components[idx].0.push(x);
        } else {
            components[idx].1.push(x - r);
        }
    }

    let bottleneck_ids: Vec<usize> = (0..k).filter(|&j| params.rho_j[j] >= 1.0).collect();
    let shares: Vec<bool> = (0..k).map(|j| !params.shared_feeders(j).is_empty()).collect();
    let critical = params.rho_j[kb] == 1.0;

    let regime: Vec<ClientRegime> = (0..k)
        .map(|j| {
            if critical {
                ClientRegime::CriticalBottleneck
            } else if r == 1 {
                ClientRegime::SingleServer
            } else if params.shared_feeders(j).is_empty() {
                ClientRegime::DisjointFromBottleneck
            } else if params.feeders[j] == params.feeders[kb] {
                ClientRegime::FullOverlapWithBottleneck
            } else {
                ClientRegime::General
            }
        })
        .collect();

    TopologyReport {
        components,
        bottleneck_ids,
        shares_hub_with_bottleneck: shares,
        regime,
    }
}

/// Permutes client indices so the unique station with load >= 1 becomes the
/// last one. Fails if the spec has no unique bottleneck.
pub fn normalize_order(spec: &NetworkSpec) -> Result<NetworkSpec, Violation> {
    let k = spec.k;
    let n = spec.n as f64;
    let rho: Vec<f64> = (0..k)
        .map(|j| {
            (0..spec.r)
                .map(|i| spec.lambda_i[i] * spec.p[i][j] * spec.n_i[i] as f64)
                .sum::<f64>()
                / (spec.mu_j[j] * n)
        })
        .collect();
    let bottlenecks: Vec<usize> = (0..k).filter(|&j| rho[j] >= 1.0).collect();
    let b = match bottlenecks.as_slice() {
        [only] => *only,
        [] => {
            return Err(Violation::new(
                ViolationCode::NoBottleneck,
                "no client station has load >= 1".to_string(),
            ))
        }
        _ => {
            return Err(Violation::new(
                ViolationCode::MultipleBottlenecks,
                format!("stations {bottlenecks:?} all have load >= 1"),
            ))
        }
    };

    let mut order: Vec<usize> = (0..k).filter(|&j| j != b).collect();
    order.push(b);

    let mut out = spec.clone();
    out.p = spec
        .p
        .iter()
        .map(|row| order.iter().map(|&j| row[j]).collect())
        .collect();
    out.mu_j = order.iter().map(|&j| spec.mu_j[j]).collect();
    out.departure_kind = order.iter().map(|&j| spec.departure_kind[j].clone()).collect();
    Ok(out)
}
