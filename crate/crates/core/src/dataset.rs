//! Random unit-disk graph generation, representative dataset selection and
//! graph file IO.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{
    build_unit_disk_graph, hardness_parameter, independent_set_census, Site, UnitDiskGraph,
};

/// Rectangular lattice window of `width x height` sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeWindow {
    pub width: u32,
    pub height: u32,
}

impl LatticeWindow {
    pub fn new(width: u32, height: u32) -> Self {
        LatticeWindow { width, height }
    }

    pub fn cells(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Window sized so the mean site density stays in the regime of small
/// hardware-ready clusters (roughly 4x3 up to 5x5 site patches), while
/// leaving enough room for the isomorphism rejection to find distinct graphs.
pub fn default_window(order: usize) -> LatticeWindow {
    match order {
        0..=9 => LatticeWindow::new(5, 4),
        10..=12 => LatticeWindow::new(5, 4),
        13..=14 => LatticeWindow::new(5, 5),
        _ => LatticeWindow::new(6, 5),
    }
}

/// The eight symmetries of the square lattice.
fn symmetry_images(sites: &[Site]) -> [Vec<Site>; 8] {
    let apply = |f: &dyn Fn(&Site) -> Site| -> Vec<Site> { sites.iter().map(f).collect() };
    [
        apply(&|s| Site::new(s.x, s.y)),
        apply(&|s| Site::new(-s.y, s.x)),
        apply(&|s| Site::new(-s.x, -s.y)),
        apply(&|s| Site::new(s.y, -s.x)),
        apply(&|s| Site::new(-s.x, s.y)),
        apply(&|s| Site::new(s.x, -s.y)),
        apply(&|s| Site::new(s.y, s.x)),
        apply(&|s| Site::new(-s.y, -s.x)),
    ]
}

fn translate_to_origin(sites: &mut [Site]) {
    let min_x = sites.iter().map(|s| s.x).min().unwrap_or(0);
    let min_y = sites.iter().map(|s| s.y).min().unwrap_or(0);
    for s in sites.iter_mut() {
        s.x -= min_x;
        s.y -= min_y;
    }
}

/// Canonical representative of a site set under the eight lattice symmetries
/// composed with translations: the lexicographically smallest sorted site
/// list. Used for isomorphism rejection of generated graphs.
pub fn canonical_sites(sites: &[Site]) -> Vec<Site> {
    let mut best: Option<Vec<Site>> = None;
    for mut image in symmetry_images(sites) {
        translate_to_origin(&mut image);
        image.sort_unstable();
        if best.as_ref().map_or(true, |b| image < *b) {
            best = Some(image);
        }
    }
    best.unwrap_or_default()
}

/// Rebuild a graph on the canonical form of its sites.
pub fn canonical_graph(graph: &UnitDiskGraph) -> UnitDiskGraph {
    let sites = canonical_sites(graph.sites());
    build_unit_disk_graph(sites, graph.spacing_um())
        .expect("canonical form preserves distinctness")
        .with_name(graph.name().to_string())
}

/// Sample `order` distinct sites uniformly from `window` and return the graph
/// in canonical form.
pub fn generate_random_udg(
    order: usize,
    window: LatticeWindow,
    spacing_um: f64,
    rng: &mut impl Rng,
) -> Result<UnitDiskGraph> {
    if window.cells() < order || order == 0 {
        return Err(Error::WindowTooSmall { w: window.width, h: window.height, order });
    }
    let mut cells: Vec<usize> = (0..window.cells()).collect();
    let (chosen, _) = cells.partial_shuffle(rng, order);
    let sites: Vec<Site> = chosen
        .iter()
        .map(|&c| Site::new((c % window.width as usize) as i32, (c / window.width as usize) as i32))
        .collect();
    let canon = canonical_sites(&sites);
    build_unit_disk_graph(canon, spacing_um)
}

/// Keep drawing random graphs of one order until `count` canonically distinct
/// ones are collected.
pub fn generate_unique_graphs(
    order: usize,
    count: usize,
    window: LatticeWindow,
    spacing_um: f64,
    seed: u64,
) -> Result<Vec<UnitDiskGraph>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<Vec<Site>> = HashSet::new();
    let mut out = Vec::with_capacity(count);
    let max_attempts = 1000 * count.max(10);
    for _ in 0..max_attempts {
        if out.len() == count {
            break;
        }
        let g = generate_random_udg(order, window, spacing_um, &mut rng)?;
        if seen.insert(g.sites().to_vec()) {
            out.push(g);
        }
    }
    if out.len() < count {
        return Err(Error::InvalidInput(format!(
            "window {}x{} holds fewer than {count} distinct graphs of order {order}",
            window.width, window.height
        )));
    }
    Ok(out)
}

/// Rules of the representative dataset: how many graphs per order and how the
/// hardness axis is binned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub orders: Vec<u32>,
    pub per_order: usize,
    /// Left edge of the first hardness bin; each bin doubles the range.
    pub hp_min: f64,
    pub n_bins: usize,
    pub per_bin: usize,
}

impl DatasetSpec {
    /// 500 graphs: 50 for each order 8..17, 100 in each of the five
    /// geometric hardness bins covering [0.375, 12).
    pub fn standard() -> Self {
        DatasetSpec { orders: (8..=17).collect(), per_order: 50, hp_min: 0.375, n_bins: 5, per_bin: 100 }
    }

    /// A smaller spec with the same bin structure, for tests and quick runs.
    pub fn scaled(orders: Vec<u32>, per_order: usize, per_bin: usize) -> Self {
        DatasetSpec { orders, per_order, hp_min: 0.375, n_bins: 5, per_bin }
    }

    pub fn total(&self) -> usize {
        self.orders.len() * self.per_order
    }

    pub fn validate(&self) -> Result<()> {
        if self.orders.is_empty() || self.per_order == 0 || self.n_bins == 0 || self.per_bin == 0 {
            return Err(Error::InvalidDatasetSpec("empty orders or zero counts".into()));
        }
        if !(self.hp_min > 0.0) {
            return Err(Error::InvalidDatasetSpec(format!("hp_min must be positive, got {}", self.hp_min)));
        }
        let mut uniq: Vec<u32> = self.orders.clone();
        uniq.sort_unstable();
        uniq.dedup();
        if uniq.len() != self.orders.len() {
            return Err(Error::InvalidDatasetSpec("repeated order".into()));
        }
        if self.orders.len() * self.per_order != self.n_bins * self.per_bin {
            return Err(Error::InvalidDatasetSpec(format!(
                "{} orders x {} != {} bins x {}",
                self.orders.len(),
                self.per_order,
                self.n_bins,
                self.per_bin
            )));
        }
        Ok(())
    }

    /// Half-open bin `[hp_min * 2^i, hp_min * 2^{i+1})`.
    pub fn bin_edges(&self, bin: usize) -> (f64, f64) {
        let lo = self.hp_min * f64::powi(2.0, bin as i32);
        (lo, 2.0 * lo)
    }

    pub fn hp_max(&self) -> f64 {
        self.hp_min * f64::powi(2.0, self.n_bins as i32)
    }

    pub fn bin_of(&self, hp: f64) -> Option<usize> {
        if !(hp >= self.hp_min) || hp >= self.hp_max() {
            return None;
        }
        let bin = (hp / self.hp_min).log2().floor() as usize;
        Some(bin.min(self.n_bins - 1))
    }
}

/// A pool graph annotated with its census-derived hardness.
#[derive(Debug, Clone)]
pub struct PoolEntry {
    pub graph: UnitDiskGraph,
    pub hp: f64,
    /// Exact reduced fraction, used for the distinct-hardness rule.
    pub hp_key: (u64, u64),
}

impl PoolEntry {
    pub fn annotate(graph: UnitDiskGraph) -> Result<Self> {
        let census = independent_set_census(&graph)?;
        let hp = hardness_parameter(&census)?;
        let hp_key = census.hardness_fraction()?;
        Ok(PoolEntry { graph, hp, hp_key })
    }
}

/// Pick `spec.total()` pool indices satisfying the dataset rules exactly:
/// `per_order` graphs of each order, `per_bin` per hardness bin, pairwise
/// distinct hardness values, hardness spread evenly in log scale within each
/// bin, and orders kept as uniform as possible within bins.
///
/// Deterministic given `seed`; ties are broken by a seeded shuffle.
pub fn select_representative_dataset(
    pool: &[PoolEntry],
    spec: &DatasetSpec,
    seed: u64,
) -> Result<Vec<usize>> {
    spec.validate()?;
    if pool.is_empty() {
        return Err(Error::EmptyCollection("dataset pool"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order_slot: HashMap<u32, usize> =
        spec.orders.iter().enumerate().map(|(i, &o)| (o, i)).collect();

    // Group pool entries by (bin, exact hardness); a hardness value may be
    // used at most once across the whole dataset, and bins partition the
    // hardness axis so per-bin grouping suffices.
    #[derive(Debug)]
    struct HpGroup {
        hp: f64,
        /// candidate pool indices per order slot
        candidates: Vec<Vec<usize>>,
    }
    let mut groups_per_bin: Vec<Vec<HpGroup>> = (0..spec.n_bins).map(|_| Vec::new()).collect();
    let mut group_index: HashMap<(usize, (u64, u64)), usize> = HashMap::new();
    for (i, entry) in pool.iter().enumerate() {
        let order = entry.graph.order() as u32;
        let Some(&slot) = order_slot.get(&order) else { continue };
        let Some(bin) = spec.bin_of(entry.hp) else { continue };
        let gi = *group_index.entry((bin, entry.hp_key)).or_insert_with(|| {
            groups_per_bin[bin].push(HpGroup {
                hp: entry.hp,
                candidates: vec![Vec::new(); spec.orders.len()],
            });
            groups_per_bin[bin].len() - 1
        });
        groups_per_bin[bin][gi].candidates[slot].push(i);
    }
    for bin_groups in groups_per_bin.iter_mut() {
        bin_groups.sort_by(|a, b| a.hp.total_cmp(&b.hp));
    }

    // assignment state: for each (bin, group) the matched order slot, and the
    // reverse map order slot -> matched (bin, group) list
    let n_slots = spec.orders.len();
    let mut matched: Vec<Vec<Option<usize>>> =
        groups_per_bin.iter().map(|g| vec![None; g.len()]).collect();
    let mut by_slot: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_slots];
    let mut bin_slot_count: Vec<Vec<usize>> = vec![vec![0; n_slots]; spec.n_bins];

    // Augmenting search: try to give group (bin, gi) an order slot, possibly
    // re-routing already matched groups. Slots are visited-marked per
    // augmentation so a displaced holder cannot slip back into the slot being
    // vacated. Prefers slots that keep the order distribution within the bin
    // uniform.
    fn try_assign(
        bin: usize,
        gi: usize,
        groups_per_bin: &[Vec<HpGroup>],
        matched: &mut [Vec<Option<usize>>],
        by_slot: &mut [Vec<(usize, usize)>],
        bin_slot_count: &mut [Vec<usize>],
        per_order: usize,
        visited_slots: &mut HashSet<usize>,
        rng: &mut ChaCha8Rng,
    ) -> bool {
        let mut slots: Vec<usize> = groups_per_bin[bin][gi]
            .candidates
            .iter()
            .enumerate()
            .filter_map(|(s, c)| (!c.is_empty()).then_some(s))
            .collect();
        slots.shuffle(rng);
        slots.sort_by_key(|&s| bin_slot_count[bin][s]);
        // direct assignment first
        for &s in &slots {
            if !visited_slots.contains(&s) && by_slot[s].len() < per_order {
                matched[bin][gi] = Some(s);
                by_slot[s].push((bin, gi));
                bin_slot_count[bin][s] += 1;
                return true;
            }
        }
        // otherwise re-route a group currently holding a candidate slot
        for &s in &slots {
            if !visited_slots.insert(s) {
                continue;
            }
            let holders = by_slot[s].clone();
            for (hbin, hgi) in holders {
                matched[hbin][hgi] = None;
                by_slot[s].retain(|&x| x != (hbin, hgi));
                bin_slot_count[hbin][s] -= 1;
                if try_assign(
                    hbin,
                    hgi,
                    groups_per_bin,
                    matched,
                    by_slot,
                    bin_slot_count,
                    per_order,
                    visited_slots,
                    rng,
                ) {
                    matched[bin][gi] = Some(s);
                    by_slot[s].push((bin, gi));
                    bin_slot_count[bin][s] += 1;
                    return true;
                }
                matched[hbin][hgi] = Some(s);
                by_slot[s].push((hbin, hgi));
                bin_slot_count[hbin][s] += 1;
            }
        }
        false
    }

    // Per bin, walk evenly spaced quantile targets over the sorted hardness
    // values and admit the nearest unused group that the matching can absorb.
    let mut selected_groups: Vec<Vec<usize>> = vec![Vec::new(); spec.n_bins];
    let mut deficient: Vec<(u32, usize)> = Vec::new();
    for bin in 0..spec.n_bins {
        let groups = &groups_per_bin[bin];
        let avail = groups.len();
        let mut used = vec![false; avail];
        for k in 0..spec.per_bin {
            let target = if spec.per_bin == 1 {
                0.0
            } else {
                k as f64 * (avail.saturating_sub(1)) as f64 / (spec.per_bin - 1) as f64
            };
            // candidates ordered by distance to the quantile target
            let mut order_of_try: Vec<usize> = (0..avail).filter(|&g| !used[g]).collect();
            order_of_try.sort_by(|&a, &b| {
                (a as f64 - target)
                    .abs()
                    .total_cmp(&(b as f64 - target).abs())
            });
            let mut placed = false;
            for g in order_of_try {
                let mut visited = HashSet::new();
                if try_assign(
                    bin,
                    g,
                    &groups_per_bin,
                    &mut matched,
                    &mut by_slot,
                    &mut bin_slot_count,
                    spec.per_order,
                    &mut visited,
                    &mut rng,
                ) {
                    used[g] = true;
                    selected_groups[bin].push(g);
                    placed = true;
                    break;
                }
            }
            if !placed {
                // report the under-supplied cells of this bin
                for (slot, &order) in spec.orders.iter().enumerate() {
                    let have = groups.iter().filter(|g| !g.candidates[slot].is_empty()).count();
                    let ideal = spec.per_bin / n_slots;
                    if have < ideal {
                        deficient.push((order, bin + 1));
                    }
                }
                if deficient.is_empty() {
                    deficient.push((0, bin + 1));
                }
            }
        }
    }
    if !deficient.is_empty() {
        deficient.sort_unstable();
        deficient.dedup();
        return Err(Error::SelectionInfeasible(deficient));
    }

    // Materialize: each selected group contributes one concrete graph of its
    // matched order.
    let mut picked = Vec::with_capacity(spec.total());
    for bin in 0..spec.n_bins {
        for &gi in &selected_groups[bin] {
            let slot = matched[bin][gi].expect("selected groups are matched");
            let cands = &groups_per_bin[bin][gi].candidates[slot];
            let &idx = cands.iter().min().expect("matched slot has candidates");
            picked.push(idx);
        }
    }
    picked.sort_unstable();

    debug_assert_eq!(picked.len(), spec.total());
    Ok(picked)
}

/// Pearson correlation between graph order and log hardness.
pub fn order_hp_correlation(entries: &[(usize, f64)]) -> f64 {
    let n = entries.len() as f64;
    if entries.len() < 2 {
        return 0.0;
    }
    let mx = entries.iter().map(|e| e.0 as f64).sum::<f64>() / n;
    let my = entries.iter().map(|e| e.1.ln()).sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for &(o, hp) in entries {
        let dx = o as f64 - mx;
        let dy = hp.ln() - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

// ---------------------------------------------------------------------------
// Graph file IO
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct GraphFile {
    #[serde(default)]
    name: String,
    spacing_um: f64,
    sites: Vec<(i32, i32)>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum GraphFileOrList {
    One(GraphFile),
    Many(Vec<GraphFile>),
}

fn graph_from_file(f: GraphFile) -> Result<UnitDiskGraph> {
    let sites = f.sites.into_iter().map(|(x, y)| Site::new(x, y)).collect();
    Ok(build_unit_disk_graph(sites, f.spacing_um)?.with_name(f.name))
}

fn graph_to_file(g: &UnitDiskGraph) -> GraphFile {
    GraphFile {
        name: g.name().to_string(),
        spacing_um: g.spacing_um(),
        sites: g.sites().iter().map(|s| (s.x, s.y)).collect(),
    }
}

/// Load one graph or a list of graphs from a JSON file. Edges are always
/// derived from the sites, never stored.
pub fn load_graphs(path: impl AsRef<Path>) -> Result<Vec<UnitDiskGraph>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parsed: GraphFileOrList =
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    match parsed {
        GraphFileOrList::One(f) => Ok(vec![graph_from_file(f)?]),
        GraphFileOrList::Many(fs) => fs.into_iter().map(graph_from_file).collect(),
    }
}

/// Save graphs as JSON: a single object for one graph, an array otherwise.
pub fn save_graphs(path: impl AsRef<Path>, graphs: &[UnitDiskGraph]) -> Result<()> {
    let path = path.as_ref();
    let text = if graphs.len() == 1 {
        serde_json::to_string_pretty(&graph_to_file(&graphs[0]))
    } else {
        serde_json::to_string_pretty(&graphs.iter().map(graph_to_file).collect::<Vec<_>>())
    }
    .map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Sidecar description of a generated dataset.
#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub spec: DatasetSpec,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub name: String,
    pub order: usize,
    pub hp: f64,
}
