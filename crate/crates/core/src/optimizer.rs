//! Levenberg–Marquardt over the factor graph with a block-sparse Cholesky solve.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::factors::{Factor, FactorError, VarId};
use crate::geometry::{Pose, Vec3, Vec6, WallAngles};
use crate::graph::{FactorGraph, Kernel};
use crate::linalg::{BlockMatrix, SymbolicFactor};
use crate::map::{HierMap, KeyframeId};

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeConfig {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub convergence_tol: f64,
    pub huber_delta: Option<f64>,
    /// Keyframe held fixed; `None` fixes the lowest keyframe id in the map.
    pub gauge: Option<KeyframeId>,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            initial_damping: 1e-4,
            damping_up: 10.0,
            damping_down: 0.2,
            convergence_tol: 1e-12,
            huber_delta: None,
            gauge: None,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let ok = self.max_iterations >= 1
            && self.initial_damping > 0.0
            && self.damping_up > 1.0
            && self.damping_down > 0.0
            && self.damping_down < 1.0
            && self.convergence_tol > 0.0
            && self.huber_delta.is_none_or(|d| d > 0.0);
        if ok {
            Ok(())
        } else {
            Err(OptimizeError::InvalidConfig)
        }
    }
}

/// Absolute cost below which the problem counts as solved.
const COST_FLOOR: f64 = 1e-26;
/// Damping beyond this is treated as "no descent direction left".
const MAX_DAMPING: f64 = 1e16;
/// Floor on the Marquardt scaling diagonal.
const DIAGONAL_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Relative decrease below tolerance, or cost at the floor.
    Converged,
    MaxIterations,
    /// Every step was rejected until the damping overflowed.
    DampingOverflow,
    /// Nothing to optimize.
    NoVariables,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iterations",
            Termination::DampingOverflow => "damping_overflow",
            Termination::NoVariables => "no_variables",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Cost after every accepted step; never increasing.
    pub accepted_costs: Vec<f64>,
    pub termination: Termination,
    /// Factors left out because they could not be evaluated at the initial state.
    pub skipped_factors: usize,
    pub free_variables: usize,
}

impl OptimizeReport {
    pub fn converged(&self) -> bool {
        matches!(
            self.termination,
            Termination::Converged | Termination::NoVariables | Termination::DampingOverflow
        )
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum OptimizeError {
    #[error("damped normal equations are singular")]
    SingularSystem,
    #[error("gauge keyframe {0} is not in the map")]
    MissingGauge(KeyframeId),
    #[error("invalid optimizer configuration")]
    InvalidConfig,
    #[error(transparent)]
    Factor(#[from] FactorError),
}

#[derive(Clone, Copy, Debug)]
enum Value {
    Pose(Pose),
    Vector(Vec3),
    Wall(WallAngles),
}

fn read(map: &HierMap, v: VarId) -> Option<Value> {
    Some(match v {
        VarId::Keyframe(id) => Value::Pose(map.keyframes.get(&id)?.pose),
        VarId::Marker(id) => Value::Pose(map.markers.get(&id)?.pose),
        VarId::Point(id) => Value::Vector(map.points.get(&id)?.position),
        VarId::Wall(id) => Value::Wall(map.walls.get(&id)?.state),
        VarId::Room(id) => Value::Vector(map.rooms.get(&id)?.center),
    })
}

fn write(map: &mut HierMap, v: VarId, value: Value) {
    match (v, value) {
        (VarId::Keyframe(id), Value::Pose(p)) => map.keyframes.get_mut(&id).unwrap().pose = p,
        (VarId::Marker(id), Value::Pose(p)) => map.markers.get_mut(&id).unwrap().pose = p,
        (VarId::Point(id), Value::Vector(x)) => map.points.get_mut(&id).unwrap().position = x,
        (VarId::Wall(id), Value::Wall(w)) => map.walls.get_mut(&id).unwrap().state = w,
        (VarId::Room(id), Value::Vector(x)) => map.rooms.get_mut(&id).unwrap().center = x,
        _ => unreachable!("value kind matches variable kind"),
    }
}

fn retract(value: Value, delta: &[f64]) -> Value {
    match value {
        Value::Pose(p) => Value::Pose(p.retract(&Vec6::from_column_slice(delta))),
        Value::Vector(x) => Value::Vector(x + Vector3::from_column_slice(delta)),
        Value::Wall(w) => Value::Wall(w.retract(&Vector3::from_column_slice(delta))),
    }
}

/// Optimizes every variable in the graph except the gauge keyframe.
pub fn optimize(
    graph: &FactorGraph,
    map: &mut HierMap,
    cfg: &OptimizeConfig,
) -> Result<OptimizeReport, OptimizeError> {
    optimize_subset(graph, map, cfg, None)
}

/// Like [`optimize`], but only variables in `free` move; factors with no free
/// variable are ignored and the rest see their other variables as constants.
pub fn optimize_subset(
    graph: &FactorGraph,
    map: &mut HierMap,
    cfg: &OptimizeConfig,
    free: Option<&BTreeSet<VarId>>,
) -> Result<OptimizeReport, OptimizeError> {
    optimize_filtered(graph, map, cfg, free, &|_| true)
}

/// Like [`optimize_subset`], restricted to the factors accepted by `keep`.
pub fn optimize_filtered(
    graph: &FactorGraph,
    map: &mut HierMap,
    cfg: &OptimizeConfig,
    free: Option<&BTreeSet<VarId>>,
    keep: &dyn Fn(&Factor) -> bool,
) -> Result<OptimizeReport, OptimizeError> {
    cfg.validate()?;
    let kernel = Kernel::from_delta(cfg.huber_delta);
    let gauge = match cfg.gauge {
        Some(g) if map.keyframe(g).is_none() => return Err(OptimizeError::MissingGauge(g)),
        Some(g) => Some(g),
        None => map.keyframes.keys().next().copied(),
    };

    let mut index: BTreeMap<VarId, usize> = BTreeMap::new();
    let mut vars: Vec<VarId> = Vec::new();
    let kept: BTreeSet<VarId> = graph
        .factors()
        .iter()
        .filter(|f| keep(f))
        .flat_map(|f| f.variables())
        .collect();
    for v in kept {
        if read(map, v).is_none() {
            return Err(FactorError::MissingVariable(v).into());
        }
        let is_free = free.is_none_or(|s| s.contains(&v)) && Some(v) != gauge.map(VarId::Keyframe);
        if is_free {
            index.insert(v, vars.len());
            vars.push(v);
        }
    }

    let mut skipped = 0;
    let mut active: Vec<&Factor> = Vec::new();
    for f in graph.factors().iter().filter(|f| keep(f)) {
        if !f.variables().iter().any(|v| index.contains_key(v)) {
            continue;
        }
        if f.residual(map).is_ok() {
            active.push(f);
        } else {
            skipped += 1;
        }
    }

    let mut cost = total_cost(&active, map, kernel).expect("active factors evaluate");
    let mut report = OptimizeReport {
        iterations: 0,
        initial_cost: cost,
        final_cost: cost,
        accepted_costs: Vec::new(),
        termination: Termination::Converged,
        skipped_factors: skipped,
        free_variables: vars.len(),
    };
    if vars.is_empty() {
        report.termination = Termination::NoVariables;
        return Ok(report);
    }
    if cost <= COST_FLOOR {
        return Ok(report);
    }

    let dims: Vec<usize> = vars.iter().map(|v| v.dim()).collect();
    let mut edges = BTreeSet::new();
    for f in &active {
        let idx: Vec<usize> = f.variables().iter().filter_map(|v| index.get(v).copied()).collect();
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[..a] {
                edges.insert((i.max(j), i.min(j)));
            }
        }
    }
    let symbolic = SymbolicFactor::analyze(vars.len(), edges);
    let original: Vec<Value> = vars.iter().map(|&v| read(map, v).unwrap()).collect();

    let mut lambda = cfg.initial_damping;
    let mut termination = Termination::MaxIterations;
    'outer: for _ in 0..cfg.max_iterations {
        report.iterations += 1;
        let (h, g) = normal_equations(&active, map, &index, &dims, kernel)?;
        if g.amax() < 1e-20 {
            termination = Termination::Converged;
            break;
        }
        let neg_g = -&g;
        loop {
            let mut damped = h.clone();
            for i in 0..damped.num_blocks() {
                let blk = damped.diagonal_block_mut(i);
                for k in 0..blk.nrows() {
                    blk[(k, k)] += lambda * blk[(k, k)].max(DIAGONAL_FLOOR);
                }
            }
            let delta = match symbolic.solve(&damped, &neg_g) {
                Ok(d) => d,
                Err(_) => {
                    lambda *= cfg.damping_up;
                    if lambda > MAX_DAMPING {
                        for (v, val) in vars.iter().zip(&original) {
                            write(map, *v, *val);
                        }
                        return Err(OptimizeError::SingularSystem);
                    }
                    continue;
                }
            };

            let saved: Vec<Value> = vars.iter().map(|&v| read(map, v).unwrap()).collect();
            for (i, v) in vars.iter().enumerate() {
                let o = h.offset(i);
                let stepped = retract(saved[i], &delta.as_slice()[o..o + dims[i]]);
                write(map, *v, stepped);
            }
            match total_cost(&active, map, kernel) {
                Some(new_cost) if new_cost < cost => {
                    let rel = (cost - new_cost) / cost;
                    cost = new_cost;
                    report.accepted_costs.push(cost);
                    lambda = (lambda * cfg.damping_down).max(1e-15);
                    if rel < cfg.convergence_tol || cost <= COST_FLOOR {
                        termination = Termination::Converged;
                        break 'outer;
                    }
                    break;
                }
                _ => {
                    for (v, val) in vars.iter().zip(&saved) {
                        write(map, *v, *val);
                    }
                    lambda *= cfg.damping_up;
                    if lambda > MAX_DAMPING {
                        termination = Termination::DampingOverflow;
                        break 'outer;
                    }
                }
            }
        }
    }
    report.final_cost = cost;
    report.termination = termination;
    Ok(report)
}

fn total_cost(active: &[&Factor], map: &HierMap, kernel: Kernel) -> Option<f64> {
    let mut sum = 0.0;
    for f in active {
        let r = f.residual(map).ok()?;
        sum += kernel.cost(f.squared_norm(&r));
    }
    sum.is_finite().then_some(sum)
}

/// `H = Σ w JᵀΛJ` and `g = Σ w JᵀΛr` over the free variables.
fn normal_equations(
    active: &[&Factor],
    map: &HierMap,
    index: &BTreeMap<VarId, usize>,
    dims: &[usize],
    kernel: Kernel,
) -> Result<(BlockMatrix, DVector<f64>), OptimizeError> {
    let mut h = BlockMatrix::new(dims.to_vec());
    let mut g = DVector::zeros(h.size());
    for f in active {
        let lin = f.linearize(map)?;
        let w = kernel.weight(f.squared_norm(&lin.residual));
        let info = &f.information * w;
        let lr = &info * &lin.residual;
        let blocks: Vec<(usize, &DMatrix<f64>)> = f
            .variables()
            .iter()
            .zip(&lin.jacobians)
            .filter_map(|(v, j)| index.get(v).map(|&i| (i, j)))
            .collect();
        for (a, &(i, ji)) in blocks.iter().enumerate() {
            let jt_info = ji.transpose() * &info;
            let o = h.offset(i);
            let mut gi = g.rows_mut(o, dims[i]);
            gi += ji.transpose() * &lr;
            for &(j, jj) in &blocks[..=a] {
                h.add(i, j, &(&jt_info * jj));
            }
        }
    }
    Ok((h, g))
}
