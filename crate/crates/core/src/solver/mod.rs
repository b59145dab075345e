//! Solvers over the mixed-binary conic models.
//!
//! The continuous relaxation is solved by LP outer approximation: an LP
//! master over the box, linear rows and an accumulating cut pool, refined at
//! each round by supporting hyperplanes of violated cone rows and by greedy
//! epigraph cuts for each set function. The exact mixed-binary optimum comes
//! from enumerating the binaries and solving the continuous fiber with the
//! same machinery (epigraph variables pinned to the function values), and
//! branch-and-bound wraps the relaxation with best-bound node selection.

mod lp;

pub use lp::{solve_lp, LpProblem, LpRow, LpSolution, LpStatus};

use crate::model::{LinearRow, MixedBinaryConicModel, Sense, VarId};
use crate::polymatroid::{
    lovasz_extension, round_key, separate_greedy, validate_cut, CutCheck, GreedyCut,
};
use crate::set_function::Subset;
use crate::{Error, Result, DEFAULT_PIVOT_TOL, DEFAULT_TOL_FEAS, DEFAULT_TOL_OPT, MAX_EXACT_N};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tol_feas: f64,
    pub tol_opt: f64,
    pub pivot_tol: f64,
    pub max_kelley_iterations: usize,
    pub max_nodes: usize,
    /// When false, epigraph variables are only kept nonnegative; no greedy
    /// cuts are separated and preloaded cuts are ignored.
    pub enable_polymatroid: bool,
    pub record_cuts: bool,
    pub trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol_feas: DEFAULT_TOL_FEAS,
            tol_opt: DEFAULT_TOL_OPT,
            pivot_tol: DEFAULT_PIVOT_TOL,
            max_kelley_iterations: 10_000,
            max_nodes: 100_000,
            enable_polymatroid: true,
            record_cuts: false,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// An iteration or node cap fired; `value`/`bound` hold the best known.
    CapHit,
}

/// A full primal point of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub lp_value: f64,
    pub max_violation: f64,
    pub cuts_added: usize,
}

/// Cuts replayed by the validity suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "origin", rename_all = "snake_case")]
pub enum RecordedCut {
    Polymatroid {
        function: usize,
        cut: GreedyCut,
        violation: f64,
    },
    ConicSupport {
        block: usize,
        lambda: Vec<f64>,
        violation: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub value: f64,
    pub point: Point,
    /// Proven lower bound (minimization).
    pub bound: f64,
    pub cuts_added: usize,
    pub nodes: usize,
    /// Whether the root relaxation already had integral binaries
    /// (branch-and-bound only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_integral: Option<bool>,
    /// A solve touched an artificial box bound with a nonzero multiplier.
    pub bound_touched: bool,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRow>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub recorded_cuts: Vec<RecordedCut>,
}

// ---------------------------------------------------------------------------
// Column layout and master assembly
// ---------------------------------------------------------------------------

struct Layout {
    num_x: usize,
    num_y: usize,
    n: usize,
}

impl Layout {
    fn of(model: &MixedBinaryConicModel) -> Self {
        Layout {
            num_x: model.num_x(),
            num_y: model.num_y(),
            n: model.n,
        }
    }
    fn cols(&self) -> usize {
        self.num_x + self.num_y + self.n
    }
    fn col(&self, var: VarId) -> usize {
        match var {
            VarId::X(i) => i,
            VarId::Y(j) => self.num_x + j,
            VarId::Z(i) => self.num_x + self.num_y + i,
        }
    }
}

/// Deduplicated pool of linear cuts, shared across Kelley rounds. Tree
/// search nodes inherit a snapshot of the parent's pool: every cut is
/// globally valid for the model.
#[derive(Clone)]
struct CutPool {
    rows: Vec<LpRow>,
    keys: HashSet<(u8, usize, Vec<i64>)>,
}

impl CutPool {
    fn new() -> Self {
        CutPool {
            rows: Vec::new(),
            keys: HashSet::new(),
        }
    }

    fn add_polymatroid(&mut self, layout: &Layout, j: usize, cut: &GreedyCut) -> bool {
        if !self.keys.insert((1, j, round_key(&cut.pi))) {
            return false;
        }
        let mut coeffs = vec![0.0; layout.cols()];
        coeffs[layout.col(VarId::Y(j))] = 1.0;
        for (i, &pi) in cut.pi.iter().enumerate() {
            coeffs[layout.col(VarId::Z(i))] = -pi;
        }
        self.rows.push(LpRow {
            coeffs,
            sense: Sense::Ge,
            rhs: cut.offset,
        });
        true
    }

    fn add_conic(
        &mut self,
        layout: &Layout,
        model: &MixedBinaryConicModel,
        block_idx: usize,
        lambda: &[f64],
    ) -> bool {
        if !self.keys.insert((0, block_idx, round_key(lambda))) {
            return false;
        }
        let mb = &model.blocks[block_idx];
        let mut coeffs = vec![0.0; layout.cols()];
        for (local, &col) in mb.x_cols.iter().enumerate() {
            let mut acc = 0.0;
            for (r, row) in mb.block.a.iter().enumerate() {
                acc += lambda[r] * row[local];
            }
            coeffs[layout.col(VarId::X(col))] += acc;
        }
        if let Some(j) = mb.y_index {
            let mut acc = 0.0;
            for (r, &b) in mb.block.b.iter().enumerate() {
                acc += lambda[r] * b;
            }
            coeffs[layout.col(VarId::Y(j))] += acc;
        }
        self.rows.push(LpRow {
            coeffs,
            sense: Sense::Ge,
            rhs: 0.0,
        });
        true
    }
}

fn linear_row_to_lp(layout: &Layout, row: &LinearRow) -> LpRow {
    let mut coeffs = vec![0.0; layout.cols()];
    for t in &row.terms {
        coeffs[layout.col(t.var)] += t.coef;
    }
    LpRow {
        coeffs,
        sense: row.sense,
        rhs: row.rhs,
    }
}

fn objective_vector(layout: &Layout, model: &MixedBinaryConicModel) -> Vec<f64> {
    let mut c = vec![0.0; layout.cols()];
    for t in &model.objective.terms {
        c[layout.col(t.var)] += t.coef;
    }
    c
}

struct Bounds {
    lb: Vec<f64>,
    ub: Vec<f64>,
}

fn base_bounds(
    layout: &Layout,
    model: &MixedBinaryConicModel,
    y_ub: &[f64],
    y_fix: Option<&[f64]>,
    z_lb: &[f64],
    z_ub: &[f64],
) -> Bounds {
    let mut lb = Vec::with_capacity(layout.cols());
    let mut ub = Vec::with_capacity(layout.cols());
    for v in &model.vars {
        lb.push(v.lb);
        ub.push(v.ub);
    }
    for j in 0..layout.num_y {
        match y_fix {
            Some(vals) => {
                lb.push(vals[j]);
                ub.push(vals[j]);
            }
            None => {
                lb.push(0.0);
                ub.push(y_ub[j]);
            }
        }
    }
    lb.extend_from_slice(z_lb);
    ub.extend_from_slice(z_ub);
    Bounds { lb, ub }
}

fn split_point(layout: &Layout, w: &[f64]) -> Point {
    Point {
        x: w[..layout.num_x].to_vec(),
        y: w[layout.num_x..layout.num_x + layout.num_y].to_vec(),
        z: w[layout.num_x + layout.num_y..].to_vec(),
    }
}

// ---------------------------------------------------------------------------
// Kelley loop
// ---------------------------------------------------------------------------

/// How greedy epigraph cuts are handled per function: trusted when the
/// function verified submodular, validated cut-by-cut when the check was not
/// conclusive, and skipped when even exhaustive validation is out of reach.
#[derive(Clone, Copy, PartialEq, Eq)]
enum GreedyMode {
    Trusted,
    Validate,
    Skip,
}

fn greedy_modes(model: &MixedBinaryConicModel) -> Vec<GreedyMode> {
    model
        .functions
        .iter()
        .map(|f| {
            if f.n() <= crate::MAX_ENUM_N {
                match f.check_submodular() {
                    Ok(check) if check.is_submodular() => GreedyMode::Trusted,
                    _ if f.n() <= crate::MAX_CUT_CHECK_N => GreedyMode::Validate,
                    _ => GreedyMode::Skip,
                }
            } else {
                GreedyMode::Skip
            }
        })
        .collect()
}

struct KelleyOutcome {
    status: SolveStatus,
    value: f64,
    point: Point,
    lp: Option<LpSolution>,
    cuts_added: usize,
    trace: Vec<TraceRow>,
}

/// Iterates LP master / separation until no cone row is violated beyond
/// `tol_feas` and (when enabled) no greedy epigraph cut is violated.
#[allow(clippy::too_many_arguments)]
fn kelley(
    model: &MixedBinaryConicModel,
    layout: &Layout,
    objective: &[f64],
    bounds: &Bounds,
    base_rows: &[LpRow],
    pool: &mut CutPool,
    separate_epigraph: Option<&[GreedyMode]>,
    opts: &SolveOptions,
    recorded: &mut Vec<RecordedCut>,
) -> Result<KelleyOutcome> {
    let mut trace = Vec::new();
    let mut cuts_added = 0usize;

    for iteration in 1..=opts.max_kelley_iterations {
        let mut rows = base_rows.to_vec();
        rows.extend(pool.rows.iter().cloned());
        let problem = LpProblem {
            objective: objective.to_vec(),
            lb: bounds.lb.clone(),
            ub: bounds.ub.clone(),
            rows,
        };
        let sol = solve_lp(&problem, opts.pivot_tol)?;
        match sol.status {
            LpStatus::Infeasible => {
                return Ok(KelleyOutcome {
                    status: SolveStatus::Infeasible,
                    value: f64::INFINITY,
                    point: split_point(layout, &vec![0.0; layout.cols()]),
                    lp: None,
                    cuts_added,
                    trace,
                });
            }
            LpStatus::Unbounded => {
                return Err(Error::Solver("master LP unbounded despite finite boxes".into()));
            }
            LpStatus::Optimal => {}
        }

        let point = split_point(layout, &sol.x);
        let mut max_violation: f64 = 0.0;
        let mut added_this_round = 0usize;

        for (bi, mb) in model.blocks.iter().enumerate() {
            let xs: Vec<f64> = mb.x_cols.iter().map(|&c| point.x[c]).collect();
            let y = mb.y_index.map(|j| point.y[j]);
            let v = mb.block.vector(&xs, y);
            let r = mb.block.cone.residual(&v)?;
            max_violation = max_violation.max(r);
            if r > opts.tol_feas {
                let lambda = mb.block.cone.supporting_direction(&v);
                if pool.add_conic(layout, model, bi, &lambda) {
                    added_this_round += 1;
                    if opts.record_cuts {
                        recorded.push(RecordedCut::ConicSupport {
                            block: bi,
                            lambda,
                            violation: r,
                        });
                    }
                }
            }
        }

        if let Some(modes) = separate_epigraph {
            let z_clamped: Vec<f64> = point.z.iter().map(|v| v.clamp(0.0, 1.0)).collect();
            for (j, f) in model.functions.iter().enumerate() {
                if modes[j] == GreedyMode::Skip {
                    continue;
                }
                let sep = separate_greedy(f, &z_clamped, point.y[j])?;
                if !sep.violated {
                    continue;
                }
                // For a function without a conclusive submodularity verdict
                // the greedy candidate is only a valid polar cut if it
                // survives exhaustive validation.
                if modes[j] == GreedyMode::Validate
                    && validate_cut(f, &sep.cut)? != CutCheck::Valid
                {
                    continue;
                }
                let viol = sep.value - (point.y[j] - sep.cut.offset);
                max_violation = max_violation.max(viol);
                if pool.add_polymatroid(layout, j, &sep.cut) {
                    added_this_round += 1;
                    if opts.record_cuts {
                        recorded.push(RecordedCut::Polymatroid {
                            function: j,
                            cut: sep.cut.clone(),
                            violation: viol,
                        });
                    }
                }
            }
        }

        cuts_added += added_this_round;
        if opts.trace {
            trace.push(TraceRow {
                iteration,
                lp_value: sol.value,
                max_violation,
                cuts_added: added_this_round,
            });
        }

        if added_this_round == 0 {
            return Ok(KelleyOutcome {
                status: SolveStatus::Optimal,
                value: sol.value,
                point,
                lp: Some(sol),
                cuts_added,
                trace,
            });
        }
    }

    // Cap hit: report the last LP value as the best bound.
    let mut rows = base_rows.to_vec();
    rows.extend(pool.rows.iter().cloned());
    let sol = solve_lp(
        &LpProblem {
            objective: objective.to_vec(),
            lb: bounds.lb.clone(),
            ub: bounds.ub.clone(),
            rows,
        },
        opts.pivot_tol,
    )?;
    let point = split_point(layout, &sol.x);
    Ok(KelleyOutcome {
        status: SolveStatus::CapHit,
        value: sol.value,
        point,
        lp: Some(sol),
        cuts_added,
        trace,
    })
}

/// Whether the final LP hugs an artificial box bound with a meaningful
/// multiplier. Epigraph variables are exempt: their upper bound is the exact
/// maximum of the function, which the optimum legitimately attains whenever
/// the full binary set is chosen.
fn soft_bound_touched(model: &MixedBinaryConicModel, layout: &Layout, lp: &LpSolution) -> bool {
    if lp.x.is_empty() {
        return false;
    }
    for (i, v) in model.vars.iter().enumerate() {
        if !v.soft {
            continue;
        }
        let col = layout.col(VarId::X(i));
        let at_ub = (lp.x[col] - v.ub).abs() <= 1e-6 * (1.0 + v.ub.abs());
        let at_lb = (lp.x[col] - v.lb).abs() <= 1e-6 * (1.0 + v.lb.abs()) && v.lb < 0.0;
        if (at_ub || at_lb) && lp.reduced_costs[col].abs() > 1e-8 {
            return true;
        }
    }
    false
}

fn seeded_pool(model: &MixedBinaryConicModel, layout: &Layout, enable: bool) -> CutPool {
    let mut pool = CutPool::new();
    if enable {
        for pc in &model.preloaded_cuts {
            pool.add_polymatroid(layout, pc.y, &pc.cut);
        }
    }
    pool
}

// ---------------------------------------------------------------------------
// Public solves
// ---------------------------------------------------------------------------

/// Optimizes the continuous relaxation: binaries in `[0,1]`, epigraph
/// variables tied down by greedy cuts, cone rows by supporting hyperplanes.
pub fn solve_relaxation(model: &MixedBinaryConicModel, opts: &SolveOptions) -> Result<SolveResult> {
    model.validate()?;
    let start = Instant::now();
    let layout = Layout::of(model);
    let y_ub = model.y_upper_bounds()?;
    let bounds = base_bounds(&layout, model, &y_ub, None, &vec![0.0; model.n], &vec![1.0; model.n]);
    let base_rows: Vec<LpRow> = model.linear.iter().map(|r| linear_row_to_lp(&layout, r)).collect();
    let mut pool = seeded_pool(model, &layout, opts.enable_polymatroid);
    let mut recorded = Vec::new();
    let objective = objective_vector(&layout, model);
    let modes = greedy_modes(model);

    let out = kelley(
        model,
        &layout,
        &objective,
        &bounds,
        &base_rows,
        &mut pool,
        opts.enable_polymatroid.then_some(modes.as_slice()),
        opts,
        &mut recorded,
    )?;

    let touched = out
        .lp
        .as_ref()
        .is_some_and(|lp| soft_bound_touched(model, &layout, lp));
    let value = out.value + model.objective.constant;
    Ok(SolveResult {
        status: out.status,
        value,
        bound: value,
        point: out.point,
        cuts_added: out.cuts_added,
        nodes: 1,
        root_integral: None,
        bound_touched: touched,
        wall_time_s: start.elapsed().as_secs_f64(),
        trace: opts.trace.then_some(out.trace),
        recorded_cuts: recorded,
    })
}

/// Solves the continuous fiber at a fixed binary assignment: epigraph
/// variables pinned to the function values, cone rows by supporting cuts.
fn solve_fiber(
    model: &MixedBinaryConicModel,
    layout: &Layout,
    z: Subset,
    pool: &mut CutPool,
    opts: &SolveOptions,
    recorded: &mut Vec<RecordedCut>,
) -> Result<KelleyOutcome> {
    let zvec: Vec<f64> = (0..model.n).map(|i| ((z >> i) & 1) as f64).collect();
    let y_fix: Vec<f64> = model.functions.iter().map(|f| f.evaluate(z)).collect();
    let bounds = base_bounds(layout, model, &y_fix, Some(&y_fix), &zvec, &zvec);
    let base_rows: Vec<LpRow> = model.linear.iter().map(|r| linear_row_to_lp(layout, r)).collect();
    let objective = objective_vector(layout, model);
    kelley(
        model,
        layout,
        &objective,
        &bounds,
        &base_rows,
        pool,
        None,
        opts,
        recorded,
    )
}

/// Ground-truth optimum by enumerating every admissible binary assignment
/// and solving its continuous fiber.
pub fn solve_exact_enumeration(
    model: &MixedBinaryConicModel,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    model.validate()?;
    if model.n > MAX_EXACT_N {
        return Err(Error::Capacity(format!(
            "n = {} exceeds the enumeration bound {MAX_EXACT_N}",
            model.n
        )));
    }
    let start = Instant::now();
    let layout = Layout::of(model);
    let mut recorded = Vec::new();

    let mut best: Option<(f64, Point)> = None;
    let mut nodes = 0usize;
    let mut cuts = 0usize;
    for z in 0..1usize << model.n {
        if !model.z_only_rows_feasible(z) {
            continue;
        }
        nodes += 1;
        // Fibers get fresh pools: inherited cuts stay valid but bloat the
        // master far beyond what each tiny fiber needs.
        let mut pool = CutPool::new();
        let out = solve_fiber(model, &layout, z, &mut pool, opts, &mut recorded)?;
        cuts += out.cuts_added;
        match out.status {
            SolveStatus::Infeasible => continue,
            SolveStatus::CapHit => {
                return Ok(SolveResult {
                    status: SolveStatus::CapHit,
                    value: out.value + model.objective.constant,
                    bound: f64::NEG_INFINITY,
                    point: out.point,
                    cuts_added: cuts,
                    nodes,
                    root_integral: None,
                    bound_touched: false,
                    wall_time_s: start.elapsed().as_secs_f64(),
                    trace: None,
                    recorded_cuts: recorded,
                })
            }
            SolveStatus::Optimal => {}
        }
        let value = out.value + model.objective.constant;
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, out.point));
        }
    }

    let wall = start.elapsed().as_secs_f64();
    match best {
        Some((value, point)) => Ok(SolveResult {
            status: SolveStatus::Optimal,
            value,
            bound: value,
            point,
            cuts_added: cuts,
            nodes,
            root_integral: None,
            bound_touched: false,
            wall_time_s: wall,
            trace: None,
            recorded_cuts: recorded,
        }),
        None => Ok(SolveResult {
            status: SolveStatus::Infeasible,
            value: f64::INFINITY,
            bound: f64::INFINITY,
            point: Point {
                x: vec![],
                y: vec![],
                z: vec![],
            },
            cuts_added: cuts,
            nodes,
            root_integral: None,
            bound_touched: false,
            wall_time_s: wall,
            trace: None,
            recorded_cuts: recorded,
        }),
    }
}

const INT_TOL: f64 = 1e-6;

fn integral_assignment(z: &[f64]) -> Option<Subset> {
    let mut mask = 0usize;
    for (i, &v) in z.iter().enumerate() {
        if (v - v.round()).abs() > INT_TOL {
            return None;
        }
        if v.round() == 1.0 {
            mask |= 1 << i;
        }
    }
    Some(mask)
}

/// Branch-and-bound over the binaries. Best-bound node selection, branching
/// on the most fractional binary (ties to the lowest index), one cut pool
/// shared by every node: the cuts describe the epigraph hulls and the cones,
/// so they stay valid under branching.
pub fn solve_branch_and_bound(
    model: &MixedBinaryConicModel,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    model.validate()?;
    let start = Instant::now();
    let layout = Layout::of(model);
    let y_ub = model.y_upper_bounds()?;
    let base_rows: Vec<LpRow> = model.linear.iter().map(|r| linear_row_to_lp(&layout, r)).collect();
    let objective = objective_vector(&layout, model);
    let modes = greedy_modes(model);
    let mut recorded = Vec::new();

    struct Node {
        bound: f64,
        id: u64,
        z_lb: Vec<f64>,
        z_ub: Vec<f64>,
        pool: CutPool,
    }
    let root_pool = seeded_pool(model, &layout, opts.enable_polymatroid);
    let mut queue: Vec<Node> = vec![Node {
        bound: f64::NEG_INFINITY,
        id: 0,
        z_lb: vec![0.0; model.n],
        z_ub: vec![1.0; model.n],
        pool: root_pool,
    }];
    let mut next_id = 1u64;
    let mut incumbent: Option<(f64, Point)> = None;
    let mut nodes = 0usize;
    let mut cuts = 0usize;
    let mut root_integral = false;
    let mut cap_hit = false;

    let tol_abs = |v: f64| opts.tol_opt * (1.0 + v.abs());

    while let Some(pos) = queue
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            a.bound
                .total_cmp(&b.bound)
                .then(a.id.cmp(&b.id))
                .then(ia.cmp(ib))
        })
        .map(|(i, _)| i)
    {
        let mut node = queue.swap_remove(pos);
        if let Some((inc, _)) = &incumbent {
            if node.bound >= inc - tol_abs(*inc) {
                continue;
            }
        }
        if nodes >= opts.max_nodes {
            cap_hit = true;
            break;
        }
        nodes += 1;

        let bounds = base_bounds(&layout, model, &y_ub, None, &node.z_lb, &node.z_ub);
        let out = kelley(
            model,
            &layout,
            &objective,
            &bounds,
            &base_rows,
            &mut node.pool,
            opts.enable_polymatroid.then_some(modes.as_slice()),
            opts,
            &mut recorded,
        )?;
        cuts += out.cuts_added;
        match out.status {
            SolveStatus::Infeasible => continue,
            SolveStatus::CapHit => {
                cap_hit = true;
                break;
            }
            SolveStatus::Optimal => {}
        }
        let node_value = out.value + model.objective.constant;
        if let Some((inc, _)) = &incumbent {
            if node_value >= inc - tol_abs(*inc) {
                continue;
            }
        }

        if nodes == 1 {
            root_integral = integral_assignment(&out.point.z).is_some();
        }

        // Certify an incumbent at the rounded assignment (serves both the
        // integral case and a cheap dive at fractional nodes).
        let rounded: Subset = {
            let mut mask = 0usize;
            for (i, &v) in out.point.z.iter().enumerate() {
                if v >= 0.5 {
                    mask |= 1 << i;
                }
            }
            mask
        };
        let respects_node = (0..model.n).all(|i| {
            let v = ((rounded >> i) & 1) as f64;
            v >= node.z_lb[i] - 1e-9 && v <= node.z_ub[i] + 1e-9
        });
        if respects_node && model.z_only_rows_feasible(rounded) {
            let mut fiber_pool = CutPool::new();
            let fiber = solve_fiber(model, &layout, rounded, &mut fiber_pool, opts, &mut recorded)?;
            cuts += fiber.cuts_added;
            if fiber.status == SolveStatus::Optimal {
                let fiber_value = fiber.value + model.objective.constant;
                if incumbent.as_ref().is_none_or(|(inc, _)| fiber_value < *inc) {
                    incumbent = Some((fiber_value, fiber.point));
                }
            }
        }

        // The node is finished once its bound meets the incumbent. An
        // integral relaxation point alone does not close a node: when the
        // epigraph cuts are incomplete (non-submodular functions) the bound
        // can sit strictly below the certified value, and the subtree must
        // still be explored.
        if let Some((inc, _)) = &incumbent {
            if node_value >= inc - tol_abs(*inc) {
                continue;
            }
        }

        // Branch on the most fractional unfixed binary, ties to the lowest
        // index (any unfixed one when the point is integral).
        let branch_var = (0..model.n)
            .filter(|&i| node.z_lb[i] < node.z_ub[i])
            .max_by(|&a, &b| {
                let fa = frac_distance(out.point.z[a]);
                let fb = frac_distance(out.point.z[b]);
                fa.partial_cmp(&fb).unwrap().then(b.cmp(&a))
            });
        let Some(i) = branch_var else {
            continue;
        };
        let mut down = Node {
            bound: node_value,
            id: next_id,
            z_lb: node.z_lb.clone(),
            z_ub: node.z_ub.clone(),
            pool: node.pool.clone(),
        };
        down.z_ub[i] = 0.0;
        next_id += 1;
        let mut up = Node {
            bound: node_value,
            id: next_id,
            z_lb: node.z_lb,
            z_ub: node.z_ub,
            pool: node.pool,
        };
        up.z_lb[i] = 1.0;
        next_id += 1;
        queue.push(down);
        queue.push(up);
    }

    let wall = start.elapsed().as_secs_f64();
    let remaining_bound = queue
        .iter()
        .map(|n| n.bound)
        .fold(f64::INFINITY, f64::min);
    match incumbent {
        Some((value, point)) => {
            let bound = if cap_hit {
                remaining_bound.min(value)
            } else {
                value
            };
            Ok(SolveResult {
                status: if cap_hit { SolveStatus::CapHit } else { SolveStatus::Optimal },
                value,
                bound,
                point,
                cuts_added: cuts,
                nodes,
                root_integral: Some(root_integral),
                bound_touched: false,
                wall_time_s: wall,
                trace: None,
                recorded_cuts: recorded,
            })
        }
        None => Ok(SolveResult {
            status: if cap_hit { SolveStatus::CapHit } else { SolveStatus::Infeasible },
            value: f64::INFINITY,
            bound: remaining_bound,
            point: Point {
                x: vec![],
                y: vec![],
                z: vec![],
            },
            cuts_added: cuts,
            nodes,
            root_integral: Some(root_integral),
            bound_touched: false,
            wall_time_s: wall,
            trace: None,
            recorded_cuts: recorded,
        }),
    }
}

fn frac_distance(v: f64) -> f64 {
    let f = v - v.floor();
    f.min(1.0 - f)
}

// ---------------------------------------------------------------------------
// Feasibility utilities
// ---------------------------------------------------------------------------

/// Worst violation of a point against the continuous relaxation: box bounds,
/// linear rows, cone rows, binaries in [0,1], and each epigraph variable
/// dominating the convex extension of its function (exact at binary points).
pub fn relaxation_point_violation(model: &MixedBinaryConicModel, point: &Point) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (v, &xv) in model.vars.iter().zip(&point.x) {
        worst = worst.max(v.lb - xv).max(xv - v.ub);
    }
    for &zv in &point.z {
        worst = worst.max(-zv).max(zv - 1.0);
    }
    for row in &model.linear {
        worst = worst.max(row.violation(&point.x, &point.y, &point.z));
    }
    for mb in &model.blocks {
        let xs: Vec<f64> = mb.x_cols.iter().map(|&c| point.x[c]).collect();
        let y = mb.y_index.map(|j| point.y[j]);
        let v = mb.block.vector(&xs, y);
        worst = worst.max(mb.block.cone.residual(&v)?);
    }
    let z_clamped: Vec<f64> = point.z.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    for (j, f) in model.functions.iter().enumerate() {
        let need = lovasz_extension(f, &z_clamped)?;
        worst = worst.max(need - point.y[j]);
    }
    Ok(worst)
}

/// Point of minimum worst-case cone residual on a fiber (epigraph values
/// pinned to the functions, linear rows ignored): the anchor the falsifier
/// uses to generate exactly feasible samples. Returns the point and its
/// residual; strictly negative residual means a strictly interior point.
pub fn min_residual_point_at_z(
    model: &MixedBinaryConicModel,
    z: Subset,
) -> Result<Option<(Vec<f64>, f64)>> {
    let num_x = model.num_x();
    let y_vals: Vec<f64> = model.functions.iter().map(|f| f.evaluate(z)).collect();

    // Columns: x then the residual bound mu.
    let mut lb: Vec<f64> = model.vars.iter().map(|v| v.lb).collect();
    let mut ub: Vec<f64> = model.vars.iter().map(|v| v.ub).collect();
    lb.push(-1e9);
    ub.push(1e9);
    let mut objective = vec![0.0; num_x + 1];
    objective[num_x] = 1.0;

    let mut rows: Vec<LpRow> = Vec::new();
    let mut keys: HashSet<(usize, Vec<i64>)> = HashSet::new();
    let mut best: Option<(Vec<f64>, f64)> = None;

    for _ in 0..2_000 {
        let sol = solve_lp(
            &LpProblem {
                objective: objective.clone(),
                lb: lb.clone(),
                ub: ub.clone(),
                rows: rows.clone(),
            },
            DEFAULT_PIVOT_TOL,
        )?;
        if sol.status != LpStatus::Optimal {
            return Ok(None);
        }
        let x = &sol.x[..num_x];
        let mu = sol.x[num_x];

        let mut worst = f64::NEG_INFINITY;
        let mut new_rows = 0usize;
        for (bi, mb) in model.blocks.iter().enumerate() {
            let xs: Vec<f64> = mb.x_cols.iter().map(|&c| x[c]).collect();
            let y = mb.y_index.map(|j| y_vals[j]);
            let v = mb.block.vector(&xs, y);
            let r = mb.block.cone.residual(&v)?;
            worst = worst.max(r);
            if r > mu + 1e-9 {
                // Linearize: -lambda^T (A x + B y) <= mu.
                let lambda = mb.block.cone.supporting_direction(&v);
                if !keys.insert((bi, round_key(&lambda))) {
                    continue;
                }
                let mut coeffs = vec![0.0; num_x + 1];
                for (local, &col) in mb.x_cols.iter().enumerate() {
                    let mut acc = 0.0;
                    for (r_i, row) in mb.block.a.iter().enumerate() {
                        acc += lambda[r_i] * row[local];
                    }
                    coeffs[col] -= acc;
                }
                coeffs[num_x] -= 1.0;
                let rhs = mb
                    .y_index
                    .map(|j| {
                        mb.block
                            .b
                            .iter()
                            .zip(&lambda)
                            .map(|(b, l)| b * l)
                            .sum::<f64>()
                            * y_vals[j]
                    })
                    .unwrap_or(0.0);
                rows.push(LpRow {
                    coeffs,
                    sense: Sense::Le,
                    rhs,
                });
                new_rows += 1;
            }
        }

        if best.as_ref().is_none_or(|(_, b)| worst < *b) {
            best = Some((x.to_vec(), worst));
        }
        if new_rows == 0 {
            return Ok(Some((x.to_vec(), worst)));
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Decomposition search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompLog {
    pub pairs_tried: usize,
    pub starts_tried: usize,
    pub best_violation: f64,
    pub note: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum DecompOutcome {
    /// Two distinct relaxation-feasible points whose midpoint is the
    /// candidate.
    Decomposed { p1: Point, p2: Point },
    NoneFound { log: DecompLog },
}

/// Searches for a midpoint decomposition of `candidate` into two feasible
/// points of the relaxation whose binaries are complementary on the
/// fractional coordinates. A heuristic refuter: `NoneFound` is evidence of
/// extremality, not proof.
pub fn decomposition_check(
    model: &MixedBinaryConicModel,
    candidate: &Point,
    opts: &SolveOptions,
) -> Result<DecompOutcome> {
    model.validate()?;
    let feas = relaxation_point_violation(model, candidate)?;
    if feas > opts.tol_feas {
        return Err(Error::Argument(format!(
            "candidate is infeasible for the relaxation (violation {feas:.3e})"
        )));
    }

    // Classify binaries.
    let mut frac = Vec::new();
    for (i, &v) in candidate.z.iter().enumerate() {
        if frac_distance(v) > 1e-9 {
            if (v - 0.5).abs() > 1e-9 {
                return Ok(DecompOutcome::NoneFound {
                    log: DecompLog {
                        pairs_tried: 0,
                        starts_tried: 0,
                        best_violation: f64::INFINITY,
                        note: format!(
                            "binary {i} is fractional but not 1/2; midpoint pairing does not apply"
                        ),
                    },
                });
            }
            frac.push(i);
        }
    }
    let fixed_mask: Subset = candidate
        .z
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.5 + 1e-9)
        .map(|(i, _)| 1usize << i)
        .sum();

    // Complementary binary pairs on the fractional coordinates.
    let k = frac.len();
    let pair_count = if k == 0 { 1usize } else { 1usize << (k - 1) };
    let layout = Layout::of(model);
    let mut log = DecompLog {
        pairs_tried: 0,
        starts_tried: 0,
        best_violation: f64::INFINITY,
        note: String::new(),
    };

    for pair_bits in 0..pair_count {
        let mut za = fixed_mask;
        for (t, &i) in frac.iter().enumerate() {
            // Fix the first fractional coordinate to 1 in za to avoid
            // enumerating each unordered pair twice.
            let bit = if t == 0 {
                1
            } else {
                (pair_bits >> (t - 1)) & 1
            };
            if bit == 1 {
                za |= 1 << i;
            }
        }
        let mut zb = fixed_mask;
        for &i in &frac {
            if za & (1 << i) == 0 {
                zb |= 1 << i;
            }
        }
        if !model.z_only_rows_feasible(za) || !model.z_only_rows_feasible(zb) {
            continue;
        }
        log.pairs_tried += 1;

        let fa: Vec<f64> = model.functions.iter().map(|f| f.evaluate(za)).collect();
        let fb: Vec<f64> = model.functions.iter().map(|f| f.evaluate(zb)).collect();
        // y_a in [fa, 2*ybar - fb]; empty interval kills the pair.
        let mut ya0 = Vec::with_capacity(fa.len());
        let mut ok = true;
        for j in 0..fa.len() {
            let slack = 2.0 * candidate.y[j] - fa[j] - fb[j];
            if slack < -opts.tol_feas {
                ok = false;
                break;
            }
            ya0.push(fa[j] + 0.5 * slack.max(0.0));
        }
        if !ok {
            continue;
        }

        // Multi-start list for x_a: the candidate itself, the objective-
        // optimal point of each endpoint fiber, and its mirror image.
        let mut starts: Vec<Vec<f64>> = vec![candidate.x.clone()];
        let mut anchor_pool = CutPool::new();
        let mut scratch = Vec::new();
        for (fiber_z, mirror) in [(za, false), (zb, true)] {
            let out = solve_fiber(model, &layout, fiber_z, &mut anchor_pool, opts, &mut scratch)?;
            if out.status != SolveStatus::Optimal {
                continue;
            }
            let anchor = out.point.x;
            starts.push(if mirror {
                candidate
                    .x
                    .iter()
                    .zip(&anchor)
                    .map(|(c, a)| 2.0 * c - a)
                    .collect()
            } else {
                anchor
            });
        }

        let zvec_a: Vec<f64> = (0..model.n).map(|i| ((za >> i) & 1) as f64).collect();
        let zvec_b: Vec<f64> = (0..model.n).map(|i| ((zb >> i) & 1) as f64).collect();

        // Coordinate bounds keeping both endpoints inside the box.
        let dim = model.num_x() + model.num_y();
        let coord_bounds: Vec<(f64, f64)> = (0..dim)
            .map(|c| {
                if c < model.num_x() {
                    let v = &model.vars[c];
                    let lo = v.lb.max(2.0 * candidate.x[c] - v.ub);
                    let hi = v.ub.min(2.0 * candidate.x[c] - v.lb);
                    (lo, hi)
                } else {
                    let j = c - model.num_x();
                    (fa[j], (2.0 * candidate.y[j] - fb[j]).max(fa[j]))
                }
            })
            .collect();

        let violation = |u: &[f64]| -> f64 {
            let xa = &u[..model.num_x()];
            let ya = &u[model.num_x()..];
            let xb: Vec<f64> = candidate
                .x
                .iter()
                .zip(xa)
                .map(|(c, a)| 2.0 * c - a)
                .collect();
            let yb: Vec<f64> = candidate
                .y
                .iter()
                .zip(ya)
                .map(|(c, a)| 2.0 * c - a)
                .collect();
            let pa = Point {
                x: xa.to_vec(),
                y: ya.to_vec(),
                z: zvec_a.clone(),
            };
            let pb = Point {
                x: xb,
                y: yb,
                z: zvec_b.clone(),
            };
            let va = relaxation_point_violation(model, &pa).unwrap_or(f64::INFINITY);
            let vb = relaxation_point_violation(model, &pb).unwrap_or(f64::INFINITY);
            va.max(vb)
        };

        for start_x in &starts {
            log.starts_tried += 1;
            let mut u: Vec<f64> = start_x
                .iter()
                .enumerate()
                .map(|(c, &v)| v.clamp(coord_bounds[c].0, coord_bounds[c].1))
                .chain(ya0.iter().cloned())
                .collect();
            let mut best = violation(&u);
            // Cyclic coordinate descent with ternary search; the objective is
            // convex along every line, so each 1-D step is exact.
            for _sweep in 0..60 {
                let before = best;
                for c in 0..dim {
                    let (lo, hi) = coord_bounds[c];
                    if hi - lo <= 1e-14 {
                        continue;
                    }
                    let mut a = lo;
                    let mut b = hi;
                    for _ in 0..80 {
                        let m1 = a + (b - a) / 3.0;
                        let m2 = b - (b - a) / 3.0;
                        let mut u1 = u.clone();
                        u1[c] = m1;
                        let mut u2 = u.clone();
                        u2[c] = m2;
                        if violation(&u1) <= violation(&u2) {
                            b = m2;
                        } else {
                            a = m1;
                        }
                    }
                    let mut cand = u.clone();
                    cand[c] = 0.5 * (a + b);
                    let v = violation(&cand);
                    if v < best {
                        best = v;
                        u = cand;
                    }
                }
                if before - best < 1e-13 {
                    break;
                }
            }
            log.best_violation = log.best_violation.min(best);

            if best <= opts.tol_feas {
                let xa = u[..model.num_x()].to_vec();
                let ya = u[model.num_x()..].to_vec();
                let xb: Vec<f64> = candidate.x.iter().zip(&xa).map(|(c, a)| 2.0 * c - a).collect();
                let yb: Vec<f64> = candidate.y.iter().zip(&ya).map(|(c, a)| 2.0 * c - a).collect();
                let p1 = Point {
                    x: xa,
                    y: ya,
                    z: zvec_a.clone(),
                };
                let p2 = Point {
                    x: xb,
                    y: yb,
                    z: zvec_b.clone(),
                };
                let distinct = p1
                    .x
                    .iter()
                    .chain(&p1.y)
                    .chain(&p1.z)
                    .zip(p2.x.iter().chain(&p2.y).chain(&p2.z))
                    .any(|(a, b)| (a - b).abs() >= 1e-6);
                if distinct {
                    return Ok(DecompOutcome::Decomposed { p1, p2 });
                }
            }
        }
    }

    log.note = "no feasible distinct midpoint pair found".into();
    Ok(DecompOutcome::NoneFound { log })
}

#[cfg(test)]
mod tests;
