//! Unit-disk graphs on the integer square lattice.
//!
//! Vertices live on lattice points and two vertices share an edge when their
//! Euclidean distance is at most √2 lattice units, i.e. nearest and
//! next-nearest neighbors. Since coordinates are integers the edge rule is
//! exact: `dx² + dy² ≤ 2`.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap for exhaustive independent-set enumeration.
pub const DEFAULT_ENUMERATION_LIMIT: usize = 25;

/// A lattice site. Coordinates are in units of the lattice spacing `a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub x: i32,
    pub y: i32,
}

impl Site {
    pub fn new(x: i32, y: i32) -> Self {
        Site { x, y }
    }

    /// Squared Euclidean distance in lattice units. Exact integer arithmetic.
    pub fn dist2(&self, other: &Site) -> i64 {
        let dx = i64::from(self.x) - i64::from(other.x);
        let dy = i64::from(self.y) - i64::from(other.y);
        dx * dx + dy * dy
    }
}

/// Occupation pattern over the vertices of a graph; bit `i` marks vertex `i`
/// as selected (Rydberg-excited).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Bitstring {
    bits: Vec<bool>,
}

impl Bitstring {
    pub fn new(bits: Vec<bool>) -> Self {
        Bitstring { bits }
    }

    pub fn zeros(n: usize) -> Self {
        Bitstring { bits: vec![false; n] }
    }

    /// Decode a `u32` mask where bit `i` is vertex `i`. Only valid for `n <= 32`.
    pub fn from_mask(mask: u32, n: usize) -> Self {
        assert!(n <= 32);
        Bitstring { bits: (0..n).map(|i| mask >> i & 1 == 1).collect() }
    }

    /// Pack into a `u32` mask with bit `i` = vertex `i`; `None` for orders above 32.
    pub fn to_mask(&self) -> Option<u32> {
        if self.bits.len() > 32 {
            return None;
        }
        let mut m = 0u32;
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                m |= 1 << i;
            }
        }
        Some(m)
    }

    /// Parse from a string of `0`/`1` characters, vertex 0 first.
    pub fn parse(s: &str) -> Result<Self> {
        let mut bits = Vec::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0' => bits.push(false),
                '1' => bits.push(true),
                _ => return Err(Error::InvalidInput(format!("invalid bitstring character {c:?}"))),
            }
        }
        Ok(Bitstring { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, v: bool) {
        self.bits[i] = v;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter_map(|(i, &b)| b.then_some(i))
    }
}

impl fmt::Display for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            write!(f, "{}", if b { '1' } else { '0' })?;
        }
        Ok(())
    }
}

/// Unit-disk graph over lattice sites, with edges derived from the √2 rule.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitDiskGraph {
    name: String,
    sites: Vec<Site>,
    spacing_um: f64,
    edges: Vec<(u16, u16)>,
    neighbors: Vec<Vec<u16>>,
}

impl UnitDiskGraph {
    pub fn order(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    /// Lattice spacing `a` in micrometers.
    pub fn spacing_um(&self) -> f64 {
        self.spacing_um
    }

    /// Edges as index pairs `(i, j)` with `i < j`.
    pub fn edges(&self) -> &[(u16, u16)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[u16] {
        &self.neighbors[v]
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    pub fn is_connected(&self) -> bool {
        if self.sites.is_empty() {
            return false;
        }
        let mut seen = vec![false; self.order()];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &self.neighbors[u] {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    count += 1;
                    stack.push(v as usize);
                }
            }
        }
        count == self.order()
    }

    /// Per-vertex neighbor bitmasks; requires order ≤ 32.
    pub fn adjacency_masks(&self) -> Result<Vec<u32>> {
        let n = self.order();
        if n > 32 {
            return Err(Error::EnumerationLimit { order: n, limit: 32 });
        }
        let mut adj = vec![0u32; n];
        for &(i, j) in &self.edges {
            adj[i as usize] |= 1 << j;
            adj[j as usize] |= 1 << i;
        }
        Ok(adj)
    }

    /// True when no two selected vertices share an edge.
    pub fn is_independent(&self, bits: &Bitstring) -> bool {
        self.edges.iter().all(|&(i, j)| !(bits.get(i as usize) && bits.get(j as usize)))
    }

    /// Stable identifier derived from the canonical form of the site set.
    pub fn id(&self) -> String {
        let canon = crate::dataset::canonical_sites(&self.sites);
        let mut h: u64 = 0xcbf29ce484222325;
        for s in &canon {
            for b in s.x.to_le_bytes().into_iter().chain(s.y.to_le_bytes()) {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        format!("g{h:016x}")
    }
}

/// Build a unit-disk graph from lattice sites, preserving the input vertex order.
pub fn build_unit_disk_graph(sites: Vec<Site>, spacing_um: f64) -> Result<UnitDiskGraph> {
    if sites.is_empty() {
        return Err(Error::EmptyGraph);
    }
    if !(spacing_um > 0.0) {
        return Err(Error::InvalidSpacing(spacing_um));
    }
    let mut seen: HashMap<Site, usize> = HashMap::with_capacity(sites.len());
    for (i, s) in sites.iter().enumerate() {
        if let Some(&first) = seen.get(s) {
            return Err(Error::DuplicateSite { x: s.x, y: s.y, first, second: i });
        }
        seen.insert(*s, i);
    }
    let n = sites.len();
    let mut edges = Vec::new();
    let mut neighbors = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if sites[i].dist2(&sites[j]) <= 2 {
                edges.push((i as u16, j as u16));
                neighbors[i].push(j as u16);
                neighbors[j].push(i as u16);
            }
        }
    }
    Ok(UnitDiskGraph { name: String::new(), sites, spacing_um, edges, neighbors })
}

/// Degeneracy counts of the independent sets of a graph, the independence
/// number, and the list of maximum independent sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndependentSetCensus {
    degeneracies: Vec<u64>,
    independence_number: usize,
    mis_solutions: Vec<Bitstring>,
}

impl IndependentSetCensus {
    /// `D_k`: number of independent sets with exactly `k` vertices.
    pub fn degeneracy(&self, k: usize) -> u64 {
        self.degeneracies.get(k).copied().unwrap_or(0)
    }

    pub fn degeneracies(&self) -> &[u64] {
        &self.degeneracies
    }

    pub fn independence_number(&self) -> usize {
        self.independence_number
    }

    pub fn mis_solutions(&self) -> &[Bitstring] {
        &self.mis_solutions
    }

    /// Total number of independent sets, which is also the dimension of the
    /// unit-disk blockade subspace.
    pub fn total_independent_sets(&self) -> u64 {
        self.degeneracies.iter().sum()
    }

    /// Hardness parameter as an exact reduced fraction (numerator, denominator).
    pub fn hardness_fraction(&self) -> Result<(u64, u64)> {
        let k = self.independence_number;
        if k == 0 {
            return Err(Error::ZeroIndependenceNumber);
        }
        let num = self.degeneracy(k - 1);
        let den = k as u64 * self.degeneracy(k);
        let g = gcd(num.max(1), den);
        Ok((num / g, den / g))
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Count every independent set of the graph, grouped by size, using the
/// default enumeration limit.
pub fn independent_set_census(graph: &UnitDiskGraph) -> Result<IndependentSetCensus> {
    independent_set_census_with_limit(graph, DEFAULT_ENUMERATION_LIMIT)
}

/// As [`independent_set_census`] with an explicit vertex-count cap.
///
/// The enumeration branches on each vertex in index order and prunes by
/// adjacency, so it visits exactly the independent sets rather than all
/// 2^N subsets.
pub fn independent_set_census_with_limit(
    graph: &UnitDiskGraph,
    limit: usize,
) -> Result<IndependentSetCensus> {
    let n = graph.order();
    if n > limit {
        return Err(Error::EnumerationLimit { order: n, limit });
    }
    let adj = graph.adjacency_masks()?;
    let mut degeneracies = vec![0u64; n + 1];
    let mut best = 0usize;
    let mut best_sets: Vec<u32> = Vec::new();

    // Iterative include/exclude over the remaining allowed vertices.
    let mut stack: Vec<(u32, u32, usize)> = vec![(!0u32 >> (32 - n), 0, 0)];
    while let Some((allowed, current, size)) = stack.pop() {
        if allowed == 0 {
            degeneracies[size] += 1;
            if size > best {
                best = size;
                best_sets.clear();
            }
            if size == best {
                best_sets.push(current);
            }
            continue;
        }
        let v = allowed.trailing_zeros();
        let bit = 1u32 << v;
        stack.push((allowed & !bit, current, size));
        stack.push((allowed & !bit & !adj[v as usize], current | bit, size + 1));
    }

    degeneracies.truncate(best + 1);
    best_sets.sort_unstable();
    let mis_solutions = best_sets.into_iter().map(|m| Bitstring::from_mask(m, n)).collect();
    Ok(IndependentSetCensus { degeneracies, independence_number: best, mis_solutions })
}

/// Ratio of near-optimal to optimal independent-set degeneracy,
/// `D_{|MIS|-1} / (|MIS| * D_{|MIS|})`. Large values mean many suboptimal traps.
pub fn hardness_parameter(census: &IndependentSetCensus) -> Result<f64> {
    let (num, den) = census.hardness_fraction()?;
    Ok(num as f64 / den as f64)
}

const TOY_COLS: usize = 4;
const TOY_ROWS: usize = 3;

/// Decode a three-hex-digit identifier into a graph on a 4x3 lattice window.
///
/// Nibble `i` (most significant first) gives row `i` from the top; within a
/// nibble the most significant bit is the leftmost of the four columns.
/// Vertices are numbered in reading order, top-to-bottom then left-to-right.
pub fn parse_toy_graph_id(id: &str, spacing_um: f64) -> Result<UnitDiskGraph> {
    if id.len() != 3 || !id.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_lowercase()) {
        return Err(Error::MalformedToyId(id.to_string()));
    }
    let v = u16::from_str_radix(id, 16).map_err(|_| Error::MalformedToyId(id.to_string()))?;
    let mut sites = Vec::new();
    for r in 0..TOY_ROWS {
        let nibble = (v >> (4 * (TOY_ROWS - 1 - r))) & 0xF;
        for c in 0..TOY_COLS {
            if nibble & (1 << (TOY_COLS - 1 - c)) != 0 {
                sites.push(Site::new(c as i32, r as i32));
            }
        }
    }
    if sites.is_empty() {
        return Err(Error::EmptyToyId(id.to_string()));
    }
    Ok(build_unit_disk_graph(sites, spacing_um)?.with_name(format!("toy-{id}")))
}

fn toy_id_of_sites(sites: &[Site]) -> String {
    let mut nibbles = [0u16; TOY_ROWS];
    for s in sites {
        nibbles[s.y as usize] |= 1 << (TOY_COLS - 1 - s.x as usize);
    }
    format!("{:03X}", (nibbles[0] << 8) | (nibbles[1] << 4) | nibbles[2])
}

/// The canonical identifiers of the eleven reference graphs on the 4x3 window:
/// connected, 9 or 10 vertices, a unique maximum independent set, and hardness
/// parameter between 2 and 3, quotiented by the mirror symmetries of the
/// window (each class represented by its smallest identifier).
pub fn toy_graph_ids() -> Vec<String> {
    let mut reps: Vec<String> = Vec::new();
    let mut seen: std::collections::HashSet<String> = std::collections::HashSet::new();
    for v in 1u16..0x1000 {
        let id = format!("{v:03X}");
        let graph = match parse_toy_graph_id(&id, 1.0) {
            Ok(g) => g,
            Err(_) => continue,
        };
        let n = graph.order();
        if n != 9 && n != 10 {
            continue;
        }
        if !graph.is_connected() {
            continue;
        }
        let census = match independent_set_census(&graph) {
            Ok(c) => c,
            Err(_) => continue,
        };
        if census.mis_solutions().len() != 1 {
            continue;
        }
        let hp = match hardness_parameter(&census) {
            Ok(h) => h,
            Err(_) => continue,
        };
        if !(2.0..=3.0).contains(&hp) {
            continue;
        }
        // Quotient by the window's mirror symmetries.
        let canon = mirror_images(graph.sites())
            .iter()
            .map(|s| toy_id_of_sites(s))
            .min()
            .expect("nonempty");
        if seen.insert(canon.clone()) {
            reps.push(canon);
        }
    }
    reps.sort();
    reps
}

fn mirror_images(sites: &[Site]) -> Vec<Vec<Site>> {
    let flips: [fn(&Site) -> Site; 4] = [
        |s| *s,
        |s| Site::new(TOY_COLS as i32 - 1 - s.x, s.y),
        |s| Site::new(s.x, TOY_ROWS as i32 - 1 - s.y),
        |s| Site::new(TOY_COLS as i32 - 1 - s.x, TOY_ROWS as i32 - 1 - s.y),
    ];
    flips.iter().map(|f| sites.iter().map(f).collect()).collect()
}

/// Chain of `m` alternating upward and downward triangles with `3m + 1`
/// vertices: a line of `2m + 1` sites plus `m` tips. The maximum independent
/// set is the `m + 1` line sites with even coordinates, spaced two lattice
/// units apart.
pub fn triangle_chain_graph(m: usize, spacing_um: f64) -> Result<UnitDiskGraph> {
    if m == 0 {
        return Err(Error::EmptyChain);
    }
    let mut sites: Vec<Site> = (0..=2 * m as i32).map(|x| Site::new(x, 0)).collect();
    for i in 1..=m as i32 {
        let y = if i % 2 == 1 { 1 } else { -1 };
        sites.push(Site::new(2 * i - 1, y));
    }
    Ok(build_unit_disk_graph(sites, spacing_um)?.with_name(format!("triangle-chain-{m}")))
}

/// Vertex indices of the maximum independent set of [`triangle_chain_graph`].
pub fn triangle_chain_mis(m: usize) -> Vec<usize> {
    (0..=m).map(|i| 2 * i).collect()
}

/// Vertex indices of the suboptimal tip configuration of
/// [`triangle_chain_graph`].
pub fn triangle_chain_tips(m: usize) -> Vec<usize> {
    (0..m).map(|i| 2 * m + 1 + i).collect()
}

/// Repair a measured occupation into a maximal independent set.
///
/// Phase 1 removes a uniformly random endpoint of a uniformly random violated
/// edge until the set is independent; phase 2 adds a uniformly random free
/// vertex (unselected, with no selected neighbor) until none remains.
/// Applied to the all-zeros pattern this is the classical greedy baseline.
pub fn greedy_repair(measured: &Bitstring, graph: &UnitDiskGraph, seed: u64) -> Result<Bitstring> {
    if measured.len() != graph.order() {
        return Err(Error::BitstringLength { got: measured.len(), expected: graph.order() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(greedy_repair_with_rng(measured, graph, &mut rng))
}

pub(crate) fn greedy_repair_with_rng(
    measured: &Bitstring,
    graph: &UnitDiskGraph,
    rng: &mut impl Rng,
) -> Bitstring {
    let mut bits = measured.clone();
    loop {
        let violated: Vec<(u16, u16)> = graph
            .edges()
            .iter()
            .copied()
            .filter(|&(i, j)| bits.get(i as usize) && bits.get(j as usize))
            .collect();
        if violated.is_empty() {
            break;
        }
        let (i, j) = violated[rng.gen_range(0..violated.len())];
        let drop = if rng.gen_bool(0.5) { i } else { j };
        bits.set(drop as usize, false);
    }
    loop {
        let free: Vec<usize> = (0..graph.order())
            .filter(|&v| {
                !bits.get(v) && graph.neighbors(v).iter().all(|&u| !bits.get(u as usize))
            })
            .collect();
        if free.is_empty() {
            break;
        }
        let v = free[rng.gen_range(0..free.len())];
        bits.set(v, true);
    }
    bits
}
