//! Per-graph schedule optimization with the Nelder-Mead simplex, batch runs
//! over graph collections, and hardness-model fitting.

use std::io::Write as _;
use std::path::Path;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{EvolutionConfig, Simulator};
use crate::graphs::{hardness_parameter, UnitDiskGraph};
use crate::hamiltonian::{PhysicalConstants, SubspaceRadius};
use crate::schedules::{
    build_schedule, graph_traces, hp_schedule_model, GraphTraces, ProtocolFamily, ProtocolParams,
    SaturatingCurve, ScheduleModel,
};

/// Box constraint on one schedule parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxConstraint {
    pub lo: f64,
    pub hi: f64,
}

impl BoxConstraint {
    /// Map an unbounded coordinate into the box through a sigmoid; the
    /// optimizer works on the unbounded side so every iterate is feasible.
    pub fn to_bounded(&self, u: f64) -> f64 {
        self.lo + (self.hi - self.lo) / (1.0 + (-u).exp())
    }

    pub fn to_unbounded(&self, x: f64) -> f64 {
        let eps = 1e-9 * (self.hi - self.lo);
        let frac = ((x - self.lo) / (self.hi - self.lo)).clamp(eps, 1.0 - eps);
        (frac / (1.0 - frac)).ln()
    }
}

/// Free-parameter boxes of one protocol family, spanning the published
/// optima with room on both sides.
pub fn default_boxes(
    family: ProtocolFamily,
    t_f: f64,
    delta_ub: f64,
    v0: f64,
    constants: &PhysicalConstants,
) -> Vec<BoxConstraint> {
    let tau_i = BoxConstraint { lo: 0.02 * t_f, hi: 0.80 * t_f };
    let tau_f = BoxConstraint { lo: 0.02 * t_f, hi: 0.19 * t_f };
    let delta_i = BoxConstraint { lo: -1.5 * delta_ub, hi: -constants.delta_noise };
    let delta_f = BoxConstraint { lo: 0.05 * delta_ub, hi: 1.5 * delta_ub };
    match family {
        ProtocolFamily::Lin4 => vec![tau_i, tau_f, delta_i, delta_f],
        ProtocolFamily::Lin6 => vec![
            tau_i,
            tau_f,
            delta_i,
            BoxConstraint { lo: 0.02 * t_f, hi: 0.98 * t_f },
            BoxConstraint { lo: -1.2 * delta_ub, hi: 1.2 * delta_ub },
            delta_f,
        ],
        ProtocolFamily::Cd => vec![
            delta_i,
            delta_f,
            BoxConstraint { lo: 0.0, hi: v0 },
        ],
        ProtocolFamily::Hardware | ProtocolFamily::Custom => Vec::new(),
    }
}

/// One graph, one protocol family, one fixed duration: everything a simplex
/// run needs to score a parameter vector.
pub struct OptimizationProblem {
    simulator: Simulator,
    family: ProtocolFamily,
    t_f: f64,
    boxes: Vec<BoxConstraint>,
    traces: GraphTraces,
    delta_ub: f64,
    evolution: EvolutionConfig,
    hp: f64,
}

impl OptimizationProblem {
    pub fn new(
        graph: UnitDiskGraph,
        family: ProtocolFamily,
        t_f: f64,
        constants: PhysicalConstants,
        radius: SubspaceRadius,
        evolution: EvolutionConfig,
    ) -> Result<Self> {
        let traces = graph_traces(&graph);
        let spacing = graph.spacing_um();
        let (_, delta_ub) = constants.recommended_detuning_interval(spacing);
        let v0 = constants.v0(spacing);
        let boxes = default_boxes(family, t_f, delta_ub, v0, &constants);
        if boxes.is_empty() {
            return Err(Error::InvalidInput(format!(
                "family {} has no free parameters to optimize",
                family.as_str()
            )));
        }
        let simulator = Simulator::new(graph, constants, radius)?;
        let hp = hardness_parameter(simulator.census())?;
        Ok(OptimizationProblem { simulator, family, t_f, boxes, traces, delta_ub, evolution, hp })
    }

    pub fn family(&self) -> ProtocolFamily {
        self.family
    }

    pub fn boxes(&self) -> &[BoxConstraint] {
        &self.boxes
    }

    pub fn simulator(&self) -> &Simulator {
        &self.simulator
    }

    pub fn hardness(&self) -> f64 {
        self.hp
    }

    pub fn dim(&self) -> usize {
        self.boxes.len()
    }

    /// Success probability of the schedule at a bounded parameter vector.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let params = ProtocolParams::from_vec(self.family, x)?;
        let schedule =
            build_schedule(&params, self.t_f, self.simulator.constants(), Some(&self.traces))?;
        Ok(self.simulator.evolve(&schedule, &self.evolution)?.p_mis)
    }

    /// Starting point: the infinite-hardness model constants, clamped into
    /// the boxes.
    pub fn initial_point(&self) -> Vec<f64> {
        let params =
            hp_schedule_model(self.hp, self.family, &ScheduleModel::Limit, self.t_f, self.delta_ub)
                .expect("limit model is always available");
        params
            .to_vec()
            .iter()
            .zip(&self.boxes)
            .map(|(&x, b)| x.clamp(b.lo + 1e-9 * (b.hi - b.lo), b.hi - 1e-9 * (b.hi - b.lo)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexConfig {
    pub max_evals: usize,
    pub x_tol: f64,
    pub f_tol: f64,
    pub restarts: usize,
    /// Initial simplex extent as a fraction of each box.
    pub init_scale: f64,
}

impl Default for SimplexConfig {
    fn default() -> Self {
        SimplexConfig { max_evals: 400, x_tol: 1e-4, f_tol: 1e-5, restarts: 2, init_scale: 0.1 }
    }
}

/// One scored evaluation, in bounded coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub x: Vec<f64>,
    pub p_mis: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizationOutcome {
    pub best_x: Vec<f64>,
    pub best_params: ProtocolParams,
    pub best_p_mis: f64,
    pub evals: usize,
    pub trace: Vec<EvalRecord>,
}

struct Objective<'a> {
    problem: &'a OptimizationProblem,
    trace: Vec<EvalRecord>,
    first_error: Option<Error>,
    failures: usize,
}

impl<'a> Objective<'a> {
    /// Negated success probability; failed evaluations score worst.
    fn eval_u(&mut self, u: &[f64]) -> f64 {
        let x: Vec<f64> =
            u.iter().zip(self.problem.boxes()).map(|(&ui, b)| b.to_bounded(ui)).collect();
        match self.problem.evaluate(&x) {
            Ok(p) => {
                self.trace.push(EvalRecord { x, p_mis: p });
                -p
            }
            Err(e) => {
                if self.first_error.is_none() {
                    self.first_error = Some(e);
                }
                self.failures += 1;
                self.trace.push(EvalRecord { x, p_mis: f64::NAN });
                f64::INFINITY
            }
        }
    }
}

/// Maximize the success probability over the family's parameter box with the
/// Nelder-Mead simplex (reflection, expansion, contraction, shrink), run
/// from the hardness-limit starting point with seeded restarts.
pub fn optimize_schedule(
    problem: &OptimizationProblem,
    config: &SimplexConfig,
    seed: u64,
) -> Result<OptimizationOutcome> {
    let dim = problem.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut objective =
        Objective { problem, trace: Vec::new(), first_error: None, failures: 0 };

    let u0: Vec<f64> = problem
        .initial_point()
        .iter()
        .zip(problem.boxes())
        .map(|(&x, b)| b.to_unbounded(x))
        .collect();
    // a 10% box move around the center corresponds to ~0.4 in sigmoid space
    let u_step = 4.0 * problem_init_scale(config);

    let mut best_u = u0.clone();
    let mut best_f = f64::INFINITY;
    let mut evals = 0usize;

    for restart in 0..=config.restarts {
        if evals >= config.max_evals {
            break;
        }
        // simplex seeded on the current best, with a random jitter after the
        // first pass to escape collapsed geometry
        let mut center = best_u.clone();
        if restart > 0 {
            for c in center.iter_mut() {
                *c += u_step * 0.5 * (rng.gen::<f64>() - 0.5);
            }
        }
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
        let f0 = objective.eval_u(&center);
        evals += 1;
        simplex.push((center.clone(), f0));
        for i in 0..dim {
            let mut v = center.clone();
            v[i] += u_step;
            let f = objective.eval_u(&v);
            evals += 1;
            simplex.push((v, f));
        }

        loop {
            if evals >= config.max_evals {
                break;
            }
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let spread_f = simplex[dim].1 - simplex[0].1;
            let spread_x = (0..dim)
                .map(|i| {
                    simplex
                        .iter()
                        .map(|(v, _)| v[i])
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                            (lo.min(x), hi.max(x))
                        })
                })
                .map(|(lo, hi)| hi - lo)
                .fold(0.0f64, f64::max);
            if (spread_f.abs() <= config.f_tol && spread_x <= config.x_tol)
                || !spread_f.is_finite() && simplex[0].1.is_infinite()
            {
                break;
            }

            let centroid: Vec<f64> = (0..dim)
                .map(|i| simplex[..dim].iter().map(|(v, _)| v[i]).sum::<f64>() / dim as f64)
                .collect();
            let worst = simplex[dim].clone();
            let reflect: Vec<f64> =
                (0..dim).map(|i| centroid[i] + (centroid[i] - worst.0[i])).collect();
            let f_r = objective.eval_u(&reflect);
            evals += 1;

            if f_r < simplex[0].1 {
                // try to expand
                if evals < config.max_evals {
                    let expand: Vec<f64> =
                        (0..dim).map(|i| centroid[i] + 2.0 * (centroid[i] - worst.0[i])).collect();
                    let f_e = objective.eval_u(&expand);
                    evals += 1;
                    simplex[dim] = if f_e < f_r { (expand, f_e) } else { (reflect, f_r) };
                } else {
                    simplex[dim] = (reflect, f_r);
                }
            } else if f_r < simplex[dim - 1].1 {
                simplex[dim] = (reflect, f_r);
            } else {
                // contract, inside or outside
                let outside = f_r < worst.1;
                let toward = if outside { &reflect } else { &worst.0 };
                let contract: Vec<f64> =
                    (0..dim).map(|i| centroid[i] + 0.5 * (toward[i] - centroid[i])).collect();
                let f_c = objective.eval_u(&contract);
                evals += 1;
                let threshold = if outside { f_r } else { worst.1 };
                if f_c <= threshold {
                    simplex[dim] = (contract, f_c);
                } else {
                    // shrink toward the best vertex
                    let best = simplex[0].0.clone();
                    for entry in simplex.iter_mut().skip(1) {
                        for i in 0..dim {
                            entry.0[i] = best[i] + 0.5 * (entry.0[i] - best[i]);
                        }
                        if evals >= config.max_evals {
                            break;
                        }
                        entry.1 = objective.eval_u(&entry.0);
                        evals += 1;
                    }
                }
            }
        }

        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[0].1 < best_f {
            best_f = simplex[0].1;
            best_u = simplex[0].0.clone();
        }
    }

    if !best_f.is_finite() {
        let first = objective.first_error.map(|e| e.to_string()).unwrap_or_default();
        return Err(Error::AllEvaluationsFailed { first });
    }
    let best_x: Vec<f64> =
        best_u.iter().zip(problem.boxes()).map(|(&u, b)| b.to_bounded(u)).collect();
    let best_params = ProtocolParams::from_vec(problem.family(), &best_x)?;
    Ok(OptimizationOutcome {
        best_x,
        best_params,
        best_p_mis: -best_f,
        evals,
        trace: objective.trace,
    })
}

fn problem_init_scale(config: &SimplexConfig) -> f64 {
    config.init_scale.clamp(1e-3, 1.0)
}

/// One graph's result in a batch run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub graph_id: String,
    pub name: String,
    pub n: usize,
    pub hp: f64,
    pub family: ProtocolFamily,
    pub params: Vec<f64>,
    pub p_mis: f64,
    pub evals: usize,
    pub status: String,
}

impl BatchRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn csv_header(family: ProtocolFamily) -> String {
        let mut cols = vec!["graph_id", "name", "n", "hp", "family"];
        cols.extend(family.param_names());
        cols.extend(["p_mis", "evals", "status"]);
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        // default float formatting round-trips exactly, which the resume
        // path relies on
        let mut fields = vec![
            self.graph_id.clone(),
            self.name.replace(',', ";"),
            self.n.to_string(),
            format!("{}", self.hp),
            self.family.as_str().to_string(),
        ];
        for p in &self.params {
            fields.push(format!("{p}"));
        }
        fields.push(format!("{}", self.p_mis));
        fields.push(self.evals.to_string());
        fields.push(self.status.replace(',', ";"));
        fields.join(",")
    }

    pub fn parse_csv(line: &str, family: ProtocolFamily) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        let n_params = family.param_names().len();
        let expect = 5 + n_params + 3;
        if fields.len() != expect {
            return Err(Error::InvalidInput(format!(
                "batch row has {} fields, expected {expect}: {line:?}",
                fields.len()
            )));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::InvalidInput(format!("bad number {s:?} in batch row")))
        };
        Ok(BatchRow {
            graph_id: fields[0].to_string(),
            name: fields[1].to_string(),
            n: fields[2].parse().map_err(|_| Error::InvalidInput(format!("bad order in {line:?}")))?,
            hp: parse_f(fields[3])?,
            family,
            params: fields[5..5 + n_params].iter().map(|s| parse_f(s)).collect::<Result<_>>()?,
            p_mis: parse_f(fields[5 + n_params])?,
            evals: fields[5 + n_params + 1]
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad eval count in {line:?}")))?,
            status: fields[5 + n_params + 2].to_string(),
        })
    }
}

/// Settings of one batch-optimization run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub family: ProtocolFamily,
    pub t_f: f64,
    pub radius: SubspaceRadius,
    pub simplex: SimplexConfig,
    pub evolution: EvolutionConfig,
    pub jobs: usize,
    pub seed: u64,
}

fn fnv(text: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Optimize every graph of a collection, in parallel, resuming from an
/// optional on-disk checkpoint. Per-graph failures become rows with an error
/// status; the batch continues. Results come back in input order and are
/// byte-stable for fixed seeds.
pub fn batch_optimize(
    graphs: &[UnitDiskGraph],
    constants: &PhysicalConstants,
    config: &BatchConfig,
    checkpoint: Option<&Path>,
) -> Result<Vec<BatchRow>> {
    if graphs.is_empty() {
        return Err(Error::EmptyCollection("batch-optimization graph list"));
    }
    let mut done: std::collections::HashMap<String, BatchRow> = std::collections::HashMap::new();
    if let Some(path) = checkpoint {
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
                let row = BatchRow::parse_csv(line, config.family)?;
                done.insert(row.graph_id.clone(), row);
            }
        }
    }

    let checkpoint_file = match checkpoint {
        Some(path) => {
            let fresh = !path.exists();
            let mut file = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            if fresh {
                writeln!(file, "{}", BatchRow::csv_header(config.family))
                    .map_err(|e| Error::io(path, e))?;
            }
            Some(Mutex::new(file))
        }
        None => None,
    };

    let run_one = |graph: &UnitDiskGraph| -> BatchRow {
        let id = graph.id();
        let seed = config.seed ^ fnv(&id);
        let built = OptimizationProblem::new(
            graph.clone(),
            config.family,
            config.t_f,
            *constants,
            config.radius,
            config.evolution,
        );
        let row = match built.and_then(|p| {
            let outcome = optimize_schedule(&p, &config.simplex, seed)?;
            Ok((p.hardness(), outcome))
        }) {
            Ok((hp, outcome)) => BatchRow {
                graph_id: id,
                name: graph.name().to_string(),
                n: graph.order(),
                hp,
                family: config.family,
                params: outcome.best_x,
                p_mis: outcome.best_p_mis,
                evals: outcome.evals,
                status: "ok".into(),
            },
            Err(e) => BatchRow {
                graph_id: id,
                name: graph.name().to_string(),
                n: graph.order(),
                hp: f64::NAN,
                family: config.family,
                params: vec![f64::NAN; config.family.param_names().len()],
                p_mis: f64::NAN,
                evals: 0,
                status: e.to_string(),
            },
        };
        if let Some(file) = &checkpoint_file {
            let mut guard = file.lock().expect("checkpoint lock");
            let _ = writeln!(guard, "{}", row.to_csv());
        }
        row
    };

    let todo: Vec<&UnitDiskGraph> =
        graphs.iter().filter(|g| !done.contains_key(&g.id())).collect();
    let fresh_rows: Vec<BatchRow> = if config.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            todo.par_iter().map(|g| run_one(g)).collect()
        })
    } else {
        todo.iter().map(|g| run_one(g)).collect()
    };
    for row in fresh_rows {
        done.insert(row.graph_id.clone(), row);
    }

    Ok(graphs
        .iter()
        .map(|g| done.get(&g.id()).expect("every graph has a row").clone())
        .collect())
}

/// Saturating fit of one schedule parameter against the hardness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamFit {
    pub name: String,
    pub curve: SaturatingCurve,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
    pub degenerate: bool,
}

/// Fitted hardness model of one protocol family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitModel {
    pub family: ProtocolFamily,
    pub params: Vec<ParamFit>,
}

impl FitModel {
    pub fn to_schedule_model(&self) -> ScheduleModel {
        ScheduleModel::Fitted(self.params.iter().map(|p| p.curve).collect())
    }
}

/// Least-squares solution of `p ~ p_inf + (p0 - p_inf) exp(-h / h_scale)` for
/// a fixed `h_scale`; returns `(p0, p_inf, sse)`.
fn linear_fit_at(hs: f64, data: &[(f64, f64)]) -> (f64, f64, f64) {
    // design: p = a + b e, with e = exp(-h/hs); p_inf = a, p0 = a + b
    let n = data.len() as f64;
    let mut se = 0.0;
    let mut see = 0.0;
    let mut sp = 0.0;
    let mut sep = 0.0;
    for &(h, p) in data {
        let e = (-h / hs).exp();
        se += e;
        see += e * e;
        sp += p;
        sep += e * p;
    }
    let det = n * see - se * se;
    let (a, b) = if det.abs() < 1e-14 * n * n {
        (sp / n, 0.0)
    } else {
        let b = (n * sep - se * sp) / det;
        let a = (sp - b * se) / n;
        (a, b)
    };
    let mut sse = 0.0;
    for &(h, p) in data {
        let e = (-h / hs).exp();
        let r = p - (a + b * e);
        sse += r * r;
    }
    (a + b, a, sse)
}

/// Fit every schedule parameter of a batch result table against the hardness
/// with the saturating form. The rows must span at least one decade of
/// hardness; constant parameters are flagged as degenerate.
pub fn fit_hp_model(rows: &[BatchRow], family: ProtocolFamily) -> Result<FitModel> {
    let usable: Vec<&BatchRow> =
        rows.iter().filter(|r| r.is_ok() && r.family == family && r.hp.is_finite()).collect();
    const MIN_ROWS: usize = 20;
    if usable.len() < MIN_ROWS {
        return Err(Error::TooFewRows { min: MIN_ROWS, got: usable.len() });
    }
    let hp_lo = usable.iter().map(|r| r.hp).fold(f64::INFINITY, f64::min);
    let hp_hi = usable.iter().map(|r| r.hp).fold(0.0f64, f64::max);
    if !(hp_hi / hp_lo >= 10.0) {
        return Err(Error::DegenerateHardnessSpread { lo: hp_lo, hi: hp_hi });
    }

    let names = family.param_names();
    let mut fits = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let data: Vec<(f64, f64)> = usable.iter().map(|r| (r.hp, r.params[j])).collect();
        let mean = data.iter().map(|d| d.1).sum::<f64>() / data.len() as f64;
        let sst: f64 = data.iter().map(|d| (d.1 - mean) * (d.1 - mean)).sum();
        let scale: f64 = data.iter().map(|d| d.1.abs()).fold(0.0, f64::max).max(1e-12);

        if sst <= (1e-9 * scale) * (1e-9 * scale) * data.len() as f64 {
            fits.push(ParamFit {
                name: (*name).to_string(),
                curve: SaturatingCurve { p0: mean, p_inf: mean, h_scale: 1.0 },
                r_squared: 1.0,
                residuals: data.iter().map(|d| d.1 - mean).collect(),
                degenerate: true,
            });
            continue;
        }

        // coarse log-spaced scan of the saturation scale, then golden refine
        let lo = (hp_lo / 10.0).ln();
        let hi = (hp_hi * 10.0).ln();
        let mut best = (f64::INFINITY, 0.0f64);
        for k in 0..=80 {
            let hs = (lo + (hi - lo) * k as f64 / 80.0).exp();
            let (_, _, sse) = linear_fit_at(hs, &data);
            if sse < best.0 {
                best = (sse, hs.ln());
            }
        }
        let golden = 0.618_033_988_749_895;
        let width = (hi - lo) / 80.0;
        let (mut a, mut b) = (best.1 - width, best.1 + width);
        for _ in 0..60 {
            let c = b - golden * (b - a);
            let d = a + golden * (b - a);
            let (_, _, fc) = linear_fit_at(c.exp(), &data);
            let (_, _, fd) = linear_fit_at(d.exp(), &data);
            if fc < fd {
                b = d;
            } else {
                a = c;
            }
        }
        let h_scale = (0.5 * (a + b)).exp();
        let (p0, p_inf, sse) = linear_fit_at(h_scale, &data);
        let curve = SaturatingCurve { p0, p_inf, h_scale };
        fits.push(ParamFit {
            name: (*name).to_string(),
            curve,
            r_squared: 1.0 - sse / sst,
            residuals: data.iter().map(|&(h, p)| p - curve.eval(h)).collect(),
            degenerate: false,
        });
    }
    Ok(FitModel { family, params: fits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{build_unit_disk_graph, Site};

    fn consts() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    fn single_atom_problem() -> OptimizationProblem {
        let g = build_unit_disk_graph(vec![Site::new(0, 0)], 5.0).unwrap();
        OptimizationProblem::new(
            g,
            ProtocolFamily::Lin4,
            1.0,
            consts(),
            SubspaceRadius::Full,
            EvolutionConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn box_reparametrization_round_trips() {
        let b = BoxConstraint { lo: -3.0, hi: 7.0 };
        for x in [-2.9, 0.0, 3.3, 6.9] {
            assert!((b.to_bounded(b.to_unbounded(x)) - x).abs() < 1e-9);
        }
        assert!(b.to_bounded(-50.0) >= b.lo);
        assert!(b.to_bounded(50.0) <= b.hi);
    }

    #[test]
    fn single_atom_sweep_reaches_near_unity() {
        let problem = single_atom_problem();
        // dense grid oracle over the four parameters
        let boxes = problem.boxes().to_vec();
        let mut grid_best = 0.0f64;
        let steps = 4;
        for a in 0..=steps {
            for b in 0..=steps {
                for c in 0..=steps {
                    for d in 0..=steps {
                        let frac = |k: usize| 0.05 + 0.9 * k as f64 / steps as f64;
                        let x = vec![
                            boxes[0].lo + (boxes[0].hi - boxes[0].lo) * frac(a),
                            boxes[1].lo + (boxes[1].hi - boxes[1].lo) * frac(b),
                            boxes[2].lo + (boxes[2].hi - boxes[2].lo) * frac(c),
                            boxes[3].lo + (boxes[3].hi - boxes[3].lo) * frac(d),
                        ];
                        if let Ok(p) = problem.evaluate(&x) {
                            grid_best = grid_best.max(p);
                        }
                    }
                }
            }
        }
        let config = SimplexConfig { max_evals: 250, restarts: 1, ..Default::default() };
        let outcome = optimize_schedule(&problem, &config, 7).unwrap();
        assert!(outcome.best_p_mis >= 0.99, "best = {}", outcome.best_p_mis);
        assert!(outcome.best_p_mis >= grid_best - 0.01, "grid found {grid_best}");
    }

    #[test]
    fn best_never_falls_below_the_initial_point() {
        let problem = single_atom_problem();
        let initial = problem.evaluate(&problem.initial_point()).unwrap();
        let config = SimplexConfig { max_evals: 60, restarts: 0, ..Default::default() };
        let outcome = optimize_schedule(&problem, &config, 3).unwrap();
        assert!(outcome.best_p_mis >= initial - 1e-12);
    }

    #[test]
    fn optimization_is_deterministic_given_seed() {
        let g = build_unit_disk_graph(
            vec![Site::new(0, 0), Site::new(1, 0), Site::new(2, 0)],
            5.0,
        )
        .unwrap();
        let make = || {
            OptimizationProblem::new(
                g.clone(),
                ProtocolFamily::Lin4,
                1.0,
                consts(),
                SubspaceRadius::Full,
                EvolutionConfig::default(),
            )
            .unwrap()
        };
        let config = SimplexConfig { max_evals: 60, restarts: 1, ..Default::default() };
        let a = optimize_schedule(&make(), &config, 11).unwrap();
        let b = optimize_schedule(&make(), &config, 11).unwrap();
        assert_eq!(a.best_x, b.best_x);
        assert_eq!(a.best_p_mis, b.best_p_mis);
        assert_eq!(a.trace.len(), b.trace.len());
    }

    #[test]
    fn objective_is_pure() {
        let problem = single_atom_problem();
        let x = problem.initial_point();
        let p1 = problem.evaluate(&x).unwrap();
        let p2 = problem.evaluate(&x).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn converged_point_is_a_local_maximum() {
        let problem = single_atom_problem();
        let config = SimplexConfig { max_evals: 300, restarts: 1, ..Default::default() };
        let outcome = optimize_schedule(&problem, &config, 5).unwrap();
        let boxes = problem.boxes();
        let u_best: Vec<f64> =
            outcome.best_x.iter().zip(boxes).map(|(&x, b)| b.to_unbounded(x)).collect();
        for i in 0..problem.dim() {
            for sign in [-1.0, 1.0] {
                let mut u = u_best.clone();
                u[i] += sign * 2.0 * config.x_tol;
                let x: Vec<f64> =
                    u.iter().zip(boxes).map(|(&ui, b)| b.to_bounded(ui)).collect();
                let p = problem.evaluate(&x).unwrap();
                assert!(
                    p <= outcome.best_p_mis + config.f_tol,
                    "axis {i} sign {sign}: {p} vs {}",
                    outcome.best_p_mis
                );
            }
        }
    }

    #[test]
    fn batch_runs_resume_and_reject_empty_input() {
        let graphs: Vec<UnitDiskGraph> = vec![
            build_unit_disk_graph(vec![Site::new(0, 0)], 5.0).unwrap().with_name("a"),
            build_unit_disk_graph(vec![Site::new(0, 0), Site::new(1, 0)], 5.0)
                .unwrap()
                .with_name("b"),
        ];
        let config = BatchConfig {
            family: ProtocolFamily::Lin4,
            t_f: 0.4,
            radius: SubspaceRadius::Full,
            simplex: SimplexConfig { max_evals: 30, restarts: 0, ..Default::default() },
            evolution: EvolutionConfig::default(),
            jobs: 1,
            seed: 9,
        };
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("ckpt.csv");
        let rows = batch_optimize(&graphs, &consts(), &config, Some(&ckpt)).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.is_ok()));

        // a second run reuses the checkpoint rather than recomputing
        let rows2 = batch_optimize(&graphs, &consts(), &config, Some(&ckpt)).unwrap();
        assert_eq!(rows, rows2);

        // byte-identical tables for equal seeds
        let t1: Vec<String> = rows.iter().map(|r| r.to_csv()).collect();
        let t2: Vec<String> = rows2.iter().map(|r| r.to_csv()).collect();
        assert_eq!(t1, t2);

        assert!(matches!(
            batch_optimize(&[], &consts(), &config, None),
            Err(Error::EmptyCollection(_))
        ));
    }

    #[test]
    fn batch_rows_roundtrip_through_csv() {
        let row = BatchRow {
            graph_id: "g1234".into(),
            name: "toy, with comma".into(),
            n: 9,
            hp: 2.5,
            family: ProtocolFamily::Lin6,
            params: vec![0.22, 0.12, -36.0, 0.34, 15.6, 43.36],
            p_mis: 0.625,
            evals: 212,
            status: "ok".into(),
        };
        let line = row.to_csv();
        let back = BatchRow::parse_csv(&line, ProtocolFamily::Lin6).unwrap();
        assert_eq!(back.graph_id, row.graph_id);
        assert_eq!(back.params, row.params);
        assert_eq!(back.p_mis, row.p_mis);
    }

    fn synthetic_rows(curves: &[SaturatingCurve]) -> Vec<BatchRow> {
        let mut rows = Vec::new();
        for k in 0..30 {
            let hp = 0.4 * f64::powf(1.13, k as f64 * 1.2); // spans > 1 decade
            let params: Vec<f64> = curves.iter().map(|c| c.eval(hp)).collect();
            rows.push(BatchRow {
                graph_id: format!("g{k}"),
                name: String::new(),
                n: 10,
                hp,
                family: ProtocolFamily::Cd,
                params,
                p_mis: 0.5,
                evals: 1,
                status: "ok".into(),
            });
        }
        rows
    }

    #[test]
    fn fit_recovers_its_own_model_class() {
        let truth = [
            SaturatingCurve { p0: -8.0, p_inf: -4.3, h_scale: 1.7 },
            SaturatingCurve { p0: 25.0, p_inf: 43.4, h_scale: 2.4 },
            SaturatingCurve { p0: 0.5, p_inf: 4.3, h_scale: 3.1 },
        ];
        let rows = synthetic_rows(&truth);
        let fit = fit_hp_model(&rows, ProtocolFamily::Cd).unwrap();
        for (got, want) in fit.params.iter().zip(&truth) {
            let tol = 1e-6;
            assert!((got.curve.p0 - want.p0).abs() <= tol * want.p0.abs().max(1.0), "{}", got.name);
            assert!(
                (got.curve.p_inf - want.p_inf).abs() <= tol * want.p_inf.abs().max(1.0),
                "{}",
                got.name
            );
            assert!(got.r_squared > 1.0 - 1e-9);
            assert!(!got.degenerate);
        }
    }

    #[test]
    fn constant_parameters_are_flagged_degenerate() {
        let truth = [
            SaturatingCurve { p0: -5.0, p_inf: -5.0, h_scale: 1.0 },
            SaturatingCurve { p0: 40.0, p_inf: 43.0, h_scale: 2.0 },
            SaturatingCurve { p0: 2.0, p_inf: 4.0, h_scale: 2.0 },
        ];
        let rows = synthetic_rows(&truth);
        let fit = fit_hp_model(&rows, ProtocolFamily::Cd).unwrap();
        assert!(fit.params[0].degenerate);
        assert_eq!(fit.params[0].curve.p0, fit.params[0].curve.p_inf);
        assert!(!fit.params[1].degenerate);
    }

    #[test]
    fn fit_rejects_thin_or_narrow_data() {
        let truth = [
            SaturatingCurve { p0: -5.0, p_inf: -4.0, h_scale: 1.0 },
            SaturatingCurve { p0: 40.0, p_inf: 43.0, h_scale: 2.0 },
            SaturatingCurve { p0: 2.0, p_inf: 4.0, h_scale: 2.0 },
        ];
        let rows = synthetic_rows(&truth);
        assert!(matches!(
            fit_hp_model(&rows[..10], ProtocolFamily::Cd),
            Err(Error::TooFewRows { .. })
        ));
        let mut narrow = rows.clone();
        for r in narrow.iter_mut() {
            r.hp = 1.0 + 0.001 * r.hp;
        }
        assert!(matches!(
            fit_hp_model(&narrow, ProtocolFamily::Cd),
            Err(Error::DegenerateHardnessSpread { .. })
        ));
    }
}
