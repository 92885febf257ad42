//! Exact per-graph detuning bounds for the ground-state encoding of the
//! maximum independent set, the alternating-triangle counterexample family,
//! and ensemble statistics over graph collections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::UnitDiskGraph;
use crate::hamiltonian::InteractionTable;

/// Default vertex cap for the exhaustive configuration sweep.
pub const DEFAULT_BOUNDS_LIMIT: usize = 20;

/// Open interval of final detunings for which the cost ground state encodes a
/// maximum independent set. A detuning exactly at an endpoint degenerates the
/// ground manifold with a non-optimal configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsInterval {
    /// Exact lower bound (MHz), possibly zero.
    pub lower_mhz: f64,
    /// Exact upper bound (MHz); `None` marks an unbounded interval.
    pub upper_mhz: Option<f64>,
    pub feasible: bool,
}

impl BoundsInterval {
    pub fn contains(&self, delta: f64) -> bool {
        self.feasible && delta > self.lower_mhz && self.upper_mhz.map_or(true, |u| delta < u)
    }
}

/// Sweep every vertex configuration and derive the exact detuning interval.
///
/// With `V*` the smallest interaction energy over the maximum independent
/// sets, a configuration `x` with fewer selected vertices demands
/// `delta > (V* - V(x)) / (|MIS| - |x|)` and one with more demands
/// `delta < (V(x) - V*) / (|x| - |MIS|)`; equal-size non-independent
/// configurations must satisfy `V(x) > V*` outright for the encoding to be
/// feasible at all.
pub fn exact_detuning_bounds(graph: &UnitDiskGraph, table: &InteractionTable) -> Result<BoundsInterval> {
    exact_detuning_bounds_with_limit(graph, table, DEFAULT_BOUNDS_LIMIT)
}

pub fn exact_detuning_bounds_with_limit(
    graph: &UnitDiskGraph,
    table: &InteractionTable,
    limit: usize,
) -> Result<BoundsInterval> {
    let n = graph.order();
    if n > limit {
        return Err(Error::EnumerationLimit { order: n, limit });
    }
    let adj = graph.adjacency_masks()?;
    let size = 1usize << n;

    // interaction energy of every configuration, built incrementally from the
    // configuration with the lowest set bit removed
    let mut v = vec![0.0f64; size];
    for m in 1..size {
        let low = m.trailing_zeros() as usize;
        let rest = m & (m - 1);
        let mut acc = v[rest];
        let mut bits = rest;
        while bits != 0 {
            let j = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            acc += table.get(low, j);
        }
        v[m] = acc;
    }

    // independence number and the minimal interaction energy over maximum
    // independent sets
    let mut k_max = 0usize;
    let mut v_star = f64::INFINITY;
    for m in 0..size {
        let mm = m as u32;
        let independent = (0..n).all(|i| mm >> i & 1 == 0 || mm & adj[i] == 0);
        if !independent {
            continue;
        }
        let k = mm.count_ones() as usize;
        if k > k_max {
            k_max = k;
            v_star = v[m];
        } else if k == k_max {
            v_star = v_star.min(v[m]);
        }
    }
    if k_max == 0 {
        return Err(Error::ZeroIndependenceNumber);
    }

    let mut lower = 0.0f64;
    let mut upper: Option<f64> = None;
    let mut feasible = true;
    for m in 0..size {
        let k = (m as u32).count_ones() as usize;
        match k.cmp(&k_max) {
            std::cmp::Ordering::Less => {
                let bound = (v_star - v[m]) / (k_max - k) as f64;
                lower = lower.max(bound);
            }
            std::cmp::Ordering::Greater => {
                let bound = (v[m] - v_star) / (k - k_max) as f64;
                upper = Some(upper.map_or(bound, |u: f64| u.min(bound)));
            }
            std::cmp::Ordering::Equal => {
                // same-size configurations: only maximum independent sets may
                // reach V*; a non-independent one at or below V* blocks the
                // encoding for every detuning
                let mm = m as u32;
                let independent = (0..n).all(|i| mm >> i & 1 == 0 || mm & adj[i] == 0);
                if !independent && v[m] <= v_star {
                    feasible = false;
                }
            }
        }
    }
    if let Some(u) = upper {
        if lower >= u {
            feasible = false;
        }
    }
    Ok(BoundsInterval { lower_mhz: lower, upper_mhz: upper, feasible })
}

/// Closed-form interaction sums of the alternating-triangle chain.
///
/// `sigma0` belongs to the maximum independent set on the main line,
/// `sigma1` to the chain of tips; both are in units of `V0/64`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainSums {
    pub m: usize,
    pub sigma0: f64,
    pub sigma1: f64,
}

impl ChainSums {
    /// Energy of the main-line configuration at detuning `delta` (MHz).
    pub fn e0(&self, v0: f64, delta: f64) -> f64 {
        -((self.m + 1) as f64) * delta + v0 / 64.0 * self.sigma0
    }

    /// Energy of the tip configuration at detuning `delta` (MHz).
    pub fn e1(&self, v0: f64, delta: f64) -> f64 {
        -(self.m as f64) * delta + v0 / 64.0 * self.sigma1
    }

    /// The tip configuration drops below the maximum independent set once
    /// `delta < (V0/64) (sigma0 - sigma1)`.
    pub fn crossover_delta(&self, v0: f64) -> f64 {
        v0 / 64.0 * (self.sigma0 - self.sigma1)
    }
}

/// Interaction sums of the `m`-triangle chain:
/// `sigma0 = sum_{i=1..m} (m+1-i)/i^6` and
/// `sigma1 = sum_{i=1..floor(m/2)} [(m+1-2i)/(4i^2-4i+2)^3 + (m-2i)/(2i)^6]`.
pub fn triangle_chain_sigma(m: usize) -> Result<ChainSums> {
    if m == 0 {
        return Err(Error::EmptyChain);
    }
    let mut sigma0 = 0.0;
    for i in 1..=m {
        let i6 = (i * i * i) as f64;
        sigma0 += (m + 1 - i) as f64 / (i6 * i6);
    }
    let mut sigma1 = 0.0;
    for i in 1..=m / 2 {
        let diag = (4 * i * i - 4 * i + 2) as f64;
        let even = (2 * i) as f64;
        sigma1 += (m + 1 - 2 * i) as f64 / (diag * diag * diag);
        sigma1 += (m - 2 * i) as f64 / even.powi(6);
    }
    Ok(ChainSums { m, sigma0, sigma1 })
}

/// Quantiles `(min, q25, median, q75, max)` of one hardness bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinQuantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

fn quantiles(sorted: &[f64]) -> BinQuantiles {
    let q = |p: f64| -> f64 {
        let pos = p * (sorted.len() - 1) as f64;
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        if i + 1 < sorted.len() {
            sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
        } else {
            sorted[i]
        }
    };
    BinQuantiles { min: sorted[0], q25: q(0.25), median: q(0.5), q75: q(0.75), max: *sorted.last().unwrap() }
}

/// Bound statistics of one hardness bin; bounds are normalized by `V0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpBinStats {
    pub hp_lo: f64,
    pub hp_hi: f64,
    pub count: usize,
    pub lower_over_v0: Option<BinQuantiles>,
    /// Quantiles over graphs with a finite upper bound.
    pub upper_over_v0: Option<BinQuantiles>,
    pub unbounded_upper: usize,
}

/// Summary of the detuning-bound distribution over a graph collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleBoundsStats {
    pub n_graphs: usize,
    pub bins: Vec<HpBinStats>,
    /// Fraction with exact lower bound at or below the recommended `V0/12`.
    pub frac_lower_ok: f64,
    /// Fraction with exact upper bound at or above the recommended `V0/8`.
    pub frac_upper_ok: f64,
    pub infeasible: usize,
}

/// Per-graph exact bounds, grouped into geometric hardness bins, plus the
/// fraction of graphs compatible with the recommended interval
/// `[V0/12, V0/8]`.
pub fn ensemble_bounds_stats(
    entries: &[(f64, BoundsInterval)],
    v0: f64,
) -> Result<EnsembleBoundsStats> {
    if entries.is_empty() {
        return Err(Error::EmptyCollection("bounds ensemble"));
    }
    // the dataset bins, extended by catch-all bins on both sides
    let edges: Vec<f64> = (0..=5).map(|i| 0.375 * f64::powi(2.0, i)).collect();
    let bin_of = |hp: f64| -> usize {
        if hp < edges[0] {
            return 0;
        }
        for (i, w) in edges.windows(2).enumerate() {
            if hp >= w[0] && hp < w[1] {
                return i + 1;
            }
        }
        6
    };
    let mut lower_bins: Vec<Vec<f64>> = vec![Vec::new(); 7];
    let mut upper_bins: Vec<Vec<f64>> = vec![Vec::new(); 7];
    let mut unbounded: Vec<usize> = vec![0; 7];
    let mut counts: Vec<usize> = vec![0; 7];
    let mut lower_ok = 0usize;
    let mut upper_ok = 0usize;
    let mut infeasible = 0usize;
    for &(hp, interval) in entries {
        let b = bin_of(hp);
        counts[b] += 1;
        lower_bins[b].push(interval.lower_mhz / v0);
        match interval.upper_mhz {
            Some(u) => upper_bins[b].push(u / v0),
            None => unbounded[b] += 1,
        }
        if interval.lower_mhz <= v0 / 12.0 {
            lower_ok += 1;
        }
        if interval.upper_mhz.map_or(true, |u| u >= v0 / 8.0) {
            upper_ok += 1;
        }
        if !interval.feasible {
            infeasible += 1;
        }
    }
    let mut bins = Vec::new();
    for b in 0..7 {
        if counts[b] == 0 {
            continue;
        }
        let (hp_lo, hp_hi) = match b {
            0 => (0.0, edges[0]),
            6 => (edges[5], f64::INFINITY),
            _ => (edges[b - 1], edges[b]),
        };
        lower_bins[b].sort_by(|a, b| a.total_cmp(b));
        upper_bins[b].sort_by(|a, b| a.total_cmp(b));
        bins.push(HpBinStats {
            hp_lo,
            hp_hi,
            count: counts[b],
            lower_over_v0: (!lower_bins[b].is_empty()).then(|| quantiles(&lower_bins[b])),
            upper_over_v0: (!upper_bins[b].is_empty()).then(|| quantiles(&upper_bins[b])),
            unbounded_upper: unbounded[b],
        });
    }
    let n = entries.len();
    Ok(EnsembleBoundsStats {
        n_graphs: n,
        bins,
        frac_lower_ok: lower_ok as f64 / n as f64,
        frac_upper_ok: upper_ok as f64 / n as f64,
        infeasible,
    })
}
