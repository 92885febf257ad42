//! Rydberg Hamiltonian pieces: physical constants, pairwise interactions,
//! blockade-subspace bases and a matrix-free matvec.
//!
//! All "MHz" quantities are angular frequencies in rad/us (hbar = 1), so the
//! propagator exponent is `H[rad/us] * t[us]` directly.

use std::collections::HashMap;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{Bitstring, UnitDiskGraph};

/// Default vertex cap for full-Hilbert-space simulation.
pub const FULL_SPACE_LIMIT: usize = 20;
/// Vertex cap for restricted-subspace simulation.
pub const SUBSPACE_LIMIT: usize = 25;
/// Hard cap on basis dimension (packed coupling entries carry 24-bit indices).
pub const MAX_BASIS_DIM: usize = 1 << 24;

/// Device-level constants of the neutral-atom hardware.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Van der Waals coefficient C6 (MHz um^6).
    pub c6: f64,
    /// Maximum Rabi amplitude (MHz).
    pub omega_max: f64,
    /// Maximum coherent evolution duration (us).
    pub t_max_us: f64,
    /// Detuning noise floor (MHz); initial detunings must sit at or below its
    /// negative.
    pub delta_noise: f64,
    /// Minimal hardware waveform step (us).
    pub hw_step_us: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            c6: 5_420_503.0,
            omega_max: 15.8,
            t_max_us: 4.0,
            delta_noise: 1.0,
            hw_step_us: 0.05,
        }
    }
}

impl PhysicalConstants {
    /// Nearest-neighbor interaction strength `V0 = C6 / a^6` (MHz).
    pub fn v0(&self, spacing_um: f64) -> f64 {
        self.c6 / spacing_um.powi(6)
    }

    /// Blockade radius `(C6 / Omega_max)^(1/6)` (um).
    pub fn blockade_radius_um(&self) -> f64 {
        (self.c6 / self.omega_max).powf(1.0 / 6.0)
    }

    /// Recommended final-detuning interval `[V0/12, V0/8]` (MHz).
    pub fn recommended_detuning_interval(&self, spacing_um: f64) -> (f64, f64) {
        let v0 = self.v0(spacing_um);
        (v0 / 12.0, v0 / 8.0)
    }
}

/// Symmetric table of pairwise interaction strengths `V_ij = C6 / r_ij^6`.
#[derive(Debug, Clone)]
pub struct InteractionTable {
    n: usize,
    v: Vec<f64>,
    v0: f64,
}

impl InteractionTable {
    /// Interactions of `graph` under `constants`. Every vertex pair enters,
    /// not just graph edges; the beyond-edge tails matter near the blockade
    /// radius.
    pub fn new(graph: &UnitDiskGraph, constants: &PhysicalConstants) -> Self {
        let v0 = constants.v0(graph.spacing_um());
        Self::with_unit_strength(graph, v0)
    }

    /// Table with an explicit nearest-neighbor strength, so `V_ij = v0 / d^6`
    /// with `d` the lattice distance.
    pub fn with_unit_strength(graph: &UnitDiskGraph, v0: f64) -> Self {
        let n = graph.order();
        let sites = graph.sites();
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d2 = sites[i].dist2(&sites[j]) as f64;
                let vij = v0 / (d2 * d2 * d2);
                v[i * n + j] = vij;
                v[j * n + i] = vij;
            }
        }
        InteractionTable { n, v, v0 }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    /// `V_ij` in MHz; zero on the diagonal.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.v[i * self.n + j]
    }

    /// Nearest-neighbor strength `V0` (MHz).
    pub fn v0(&self) -> f64 {
        self.v0
    }
}

/// Which doubly-excited pairs are dropped from the simulation basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubspaceRadius {
    /// Full Hilbert space, 2^N states.
    Full,
    /// Drop pairs at distance <= a (orthogonal nearest neighbors).
    NearestNeighbor,
    /// Drop pairs at distance <= sqrt(2) a; the basis is exactly the
    /// independent sets of the unit-disk graph.
    UnitDisk,
}

impl SubspaceRadius {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SubspaceRadius::Full),
            "nn" => Ok(SubspaceRadius::NearestNeighbor),
            "ud" => Ok(SubspaceRadius::UnitDisk),
            other => Err(Error::InvalidInput(format!(
                "unknown subspace {other:?}; expected full, nn or ud"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SubspaceRadius::Full => "full",
            SubspaceRadius::NearestNeighbor => "nn",
            SubspaceRadius::UnitDisk => "ud",
        }
    }

    /// Maximum blocked squared lattice distance.
    fn blocked_dist2(&self) -> i64 {
        match self {
            SubspaceRadius::Full => 0,
            SubspaceRadius::NearestNeighbor => 1,
            SubspaceRadius::UnitDisk => 2,
        }
    }
}

/// Ordered simulation basis of occupation bitmasks.
///
/// States are enumerated in lexicographic order of the bit sequence
/// `b_0 b_1 ... b_{N-1}`, so the all-zeros state is always index 0.
#[derive(Debug, Clone)]
pub struct BasisSet {
    n_atoms: usize,
    radius: SubspaceRadius,
    masks: Vec<u32>,
    index: HashMap<u32, u32>,
}

impl BasisSet {
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn radius(&self) -> SubspaceRadius {
        self.radius
    }

    pub fn mask(&self, idx: usize) -> u32 {
        self.masks[idx]
    }

    pub fn masks(&self) -> &[u32] {
        &self.masks
    }

    pub fn index_of_mask(&self, mask: u32) -> Option<usize> {
        self.index.get(&mask).map(|&i| i as usize)
    }

    pub fn index_of(&self, bits: &Bitstring) -> Option<usize> {
        bits.to_mask().and_then(|m| self.index_of_mask(m))
    }

    pub fn bitstring(&self, idx: usize) -> Bitstring {
        Bitstring::from_mask(self.masks[idx], self.n_atoms)
    }
}

/// Enumerate the simulation basis for a graph under a blockade choice.
pub fn build_basis(graph: &UnitDiskGraph, radius: SubspaceRadius) -> Result<BasisSet> {
    let n = graph.order();
    match radius {
        SubspaceRadius::Full if n > FULL_SPACE_LIMIT => {
            return Err(Error::BasisLimit { order: n, choice: "full", limit: FULL_SPACE_LIMIT })
        }
        _ if n > SUBSPACE_LIMIT => {
            return Err(Error::BasisLimit {
                order: n,
                choice: radius.as_str(),
                limit: SUBSPACE_LIMIT,
            })
        }
        _ => {}
    }

    let sites = graph.sites();
    let blocked2 = radius.blocked_dist2();
    let mut blocked = vec![0u32; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && sites[i].dist2(&sites[j]) <= blocked2 {
                blocked[i] |= 1 << j;
            }
        }
    }

    // Depth-first over vertices in index order, branching 0 before 1; this
    // emits masks in lexicographic order of the bit sequence.
    let mut masks = Vec::new();
    let mut stack: Vec<(usize, u32)> = vec![(0, 0)];
    while let Some((depth, mask)) = stack.pop() {
        if depth == n {
            masks.push(mask);
            continue;
        }
        if blocked[depth] & mask == 0 {
            stack.push((depth + 1, mask | 1 << depth));
        }
        stack.push((depth + 1, mask));
        if masks.len() > MAX_BASIS_DIM {
            return Err(Error::BasisDimension { dim: masks.len(), max: MAX_BASIS_DIM });
        }
    }
    if masks.len() > MAX_BASIS_DIM {
        return Err(Error::BasisDimension { dim: masks.len(), max: MAX_BASIS_DIM });
    }

    let index = masks.iter().enumerate().map(|(i, &m)| (m, i as u32)).collect();
    Ok(BasisSet { n_atoms: n, radius, masks, index })
}

// Packed coupling entry: bits 0..24 partner index, bits 24..29 flipped atom,
// bit 31 set when the partner has one more excitation.
const PARTNER_BITS: u32 = 24;
const PARTNER_MASK: u32 = (1 << PARTNER_BITS) - 1;
const RAISING_BIT: u32 = 1 << 31;

/// Time- and protocol-independent pieces of the Hamiltonian over a basis.
#[derive(Debug, Clone)]
pub struct PrecomputedOperators {
    dim: usize,
    n_atoms: usize,
    diag_n: Vec<u8>,
    diag_v: Vec<f64>,
    coupling_offsets: Vec<u32>,
    coupling_entries: Vec<u32>,
}

impl PrecomputedOperators {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    /// Total excitation count per basis state.
    pub fn diag_n(&self) -> &[u8] {
        &self.diag_n
    }

    /// Interaction energy per basis state (MHz), summed over all vertex pairs.
    pub fn diag_v(&self) -> &[f64] {
        &self.diag_v
    }

    /// One-flip partners of a basis state: `(partner index, flipped atom,
    /// raising)`.
    pub fn couplings(&self, idx: usize) -> impl Iterator<Item = (usize, usize, bool)> + '_ {
        let lo = self.coupling_offsets[idx] as usize;
        let hi = self.coupling_offsets[idx + 1] as usize;
        self.coupling_entries[lo..hi].iter().map(|&e| {
            (
                (e & PARTNER_MASK) as usize,
                (e >> PARTNER_BITS & 0x1F) as usize,
                e & RAISING_BIT != 0,
            )
        })
    }
}

/// Precompute diagonal terms and one-flip couplings for `basis`.
pub fn precompute_operators(
    graph: &UnitDiskGraph,
    constants: &PhysicalConstants,
    basis: &BasisSet,
) -> Result<PrecomputedOperators> {
    if basis.n_atoms() != graph.order() {
        return Err(Error::Inconsistent {
            context: "basis atom count",
            expected: graph.order(),
            got: basis.n_atoms(),
        });
    }
    let table = InteractionTable::new(graph, constants);
    Ok(precompute_with_table(&table, basis))
}

pub(crate) fn precompute_with_table(
    table: &InteractionTable,
    basis: &BasisSet,
) -> PrecomputedOperators {
    let n = basis.n_atoms();
    let dim = basis.len();
    let mut diag_n = Vec::with_capacity(dim);
    let mut diag_v = Vec::with_capacity(dim);
    let mut coupling_offsets = Vec::with_capacity(dim + 1);
    let mut coupling_entries = Vec::new();
    coupling_offsets.push(0u32);

    for idx in 0..dim {
        let mask = basis.mask(idx);
        diag_n.push(mask.count_ones() as u8);

        let mut v = 0.0;
        let mut rest = mask;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let mut others = rest;
            while others != 0 {
                let j = others.trailing_zeros() as usize;
                others &= others - 1;
                v += table.get(i, j);
            }
        }
        diag_v.push(v);

        for atom in 0..n {
            let partner = mask ^ (1 << atom);
            if let Some(pidx) = basis.index_of_mask(partner) {
                let raising = mask >> atom & 1 == 0;
                let mut entry = pidx as u32 | (atom as u32) << PARTNER_BITS;
                if raising {
                    entry |= RAISING_BIT;
                }
                coupling_entries.push(entry);
            }
        }
        coupling_offsets.push(coupling_entries.len() as u32);
    }

    PrecomputedOperators {
        dim,
        n_atoms: n,
        diag_n,
        diag_v,
        coupling_offsets,
        coupling_entries,
    }
}

/// Instantaneous drive values (MHz, MHz, rad).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSample {
    pub omega: f64,
    pub delta: f64,
    pub phi: f64,
}

/// Apply `H(omega, delta, phi)` to a state vector, matrix-free.
///
/// `H = (omega/2) sum_i (e^{i phi} |0><1|_i + h.c.) - delta sum_i n_i
///      + sum_{i<j} V_ij n_i n_j`, restricted to the basis.
pub fn apply_hamiltonian(
    state: &[C64],
    drive: DriveSample,
    ops: &PrecomputedOperators,
) -> Result<Vec<C64>> {
    if state.len() != ops.dim() {
        return Err(Error::StateLength { got: state.len(), expected: ops.dim() });
    }
    let mut out = vec![C64::new(0.0, 0.0); state.len()];
    apply_hamiltonian_into(state, drive, ops, &mut out);
    Ok(out)
}

/// In-place variant of [`apply_hamiltonian`]; `out` is overwritten.
pub fn apply_hamiltonian_into(
    state: &[C64],
    drive: DriveSample,
    ops: &PrecomputedOperators,
    out: &mut [C64],
) {
    debug_assert_eq!(state.len(), ops.dim);
    debug_assert_eq!(out.len(), ops.dim);
    let half = 0.5 * drive.omega;
    // Raising partner (one more excitation) couples with e^{+i phi}; the
    // lowering direction is the conjugate.
    let e_plus = C64::from_polar(half, drive.phi);
    let e_minus = e_plus.conj();

    for idx in 0..ops.dim {
        let diag = ops.diag_v[idx] - drive.delta * f64::from(ops.diag_n[idx]);
        let mut acc = state[idx] * diag;
        if half != 0.0 {
            let lo = ops.coupling_offsets[idx] as usize;
            let hi = ops.coupling_offsets[idx + 1] as usize;
            for &e in &ops.coupling_entries[lo..hi] {
                let p = (e & PARTNER_MASK) as usize;
                let phase = if e & RAISING_BIT != 0 { e_plus } else { e_minus };
                acc += phase * state[p];
            }
        }
        out[idx] = acc;
    }
}

/// Classical cost of an occupation pattern: `-delta * sum(x) + sum_{i<j}
/// V_ij x_i x_j` (MHz).
pub fn configuration_energy(bits: &Bitstring, delta_mhz: f64, table: &InteractionTable) -> f64 {
    let ones: Vec<usize> = bits.iter_ones().collect();
    let mut v = 0.0;
    for (a, &i) in ones.iter().enumerate() {
        for &j in &ones[a + 1..] {
            v += table.get(i, j);
        }
    }
    v - delta_mhz * ones.len() as f64
}
