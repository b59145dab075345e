//! Desk-scale verification harnesses: hull equality of the relaxation against
//! the enumeration oracle over random objectives, the bound improvement from
//! greedy epigraph cuts, separation against factorial brute force, replayed
//! cut validity, and the report on the worked example's fractional midpoint
//! candidates.

use crate::conic::{model_condition_star, StarCheck};
use crate::linalg::dot;
use crate::model::{MixedBinaryConicModel, Objective, VarId, VarRole};
use crate::polymatroid::{separate_greedy, validate_cut, vertex_from_permutation, CutCheck};
use crate::set_function::SetFunction;
use crate::solver::{
    decomposition_check, relaxation_point_violation, solve_exact_enumeration, solve_relaxation,
    DecompOutcome, Point, RecordedCut, SolveOptions, SolveStatus,
};
use crate::{Error, Result};
use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HullRow {
    pub objective_seed: u64,
    pub relaxation: f64,
    pub exact: f64,
    /// `(exact - relaxation) / (1 + |exact|)`.
    pub rel_gap: f64,
    pub bound_inflations: usize,
    pub failed: bool,
    pub note: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HullSummary {
    pub max_gap: f64,
    pub trials: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HullReport {
    pub instance: String,
    /// All functions passed the submodularity check, every block certified
    /// the scaling-closure pattern, and the model carries no extra linear
    /// rows or homogenization columns. Only then is a clean pass a hull
    /// certificate.
    pub hypotheses_met: bool,
    pub certificate: bool,
    pub rows: Vec<HullRow>,
    pub summary: HullSummary,
}

impl HullReport {
    pub fn passed(&self) -> bool {
        self.summary.failures == 0
    }
}

/// Standard normal via Box-Muller, deterministic given the stream.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Draws a unit-sphere objective over the plain continuous variables and the
/// binaries (epigraph and homogenization variables get no weight).
/// Coefficients are normalized standard normals; the continuous ones are
/// folded to be nonnegative, since the model families recede in every `x`
/// direction and a negative coefficient would make the row unbounded below.
fn random_objective(model: &MixedBinaryConicModel, seed: u64) -> Objective {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms: Vec<(VarId, f64)> = Vec::new();
    for (i, v) in model.vars.iter().enumerate() {
        if v.role == VarRole::Plain {
            terms.push((VarId::X(i), standard_normal(&mut rng).abs()));
        }
    }
    for i in 0..model.n {
        terms.push((VarId::Z(i), standard_normal(&mut rng)));
    }
    let norm = terms.iter().map(|(_, c)| c * c).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, c) in &mut terms {
            *c /= norm;
        }
    }
    Objective::new(terms)
}

fn hull_hypotheses(model: &MixedBinaryConicModel) -> Result<bool> {
    for f in &model.functions {
        if !f.check_submodular()?.is_submodular() {
            return Ok(false);
        }
    }
    if model_condition_star(model) == StarCheck::Unknown {
        return Ok(false);
    }
    // Side rows and homogenization slices sit outside the hull statement.
    if !model.linear.is_empty() {
        return Ok(false);
    }
    if model.vars.iter().any(|v| v.role == VarRole::Homogenization) {
        return Ok(false);
    }
    Ok(true)
}

fn run_hull_row(
    model: &MixedBinaryConicModel,
    objective_seed: u64,
    opts: &SolveOptions,
) -> HullRow {
    let objective = random_objective(model, objective_seed);
    let mut trial = model.clone();
    trial.objective = objective;

    let mut inflations = 0usize;
    loop {
        let relax = match solve_relaxation(&trial, opts) {
            Ok(r) => r,
            Err(e) => {
                return HullRow {
                    objective_seed,
                    relaxation: f64::NAN,
                    exact: f64::NAN,
                    rel_gap: f64::NAN,
                    bound_inflations: inflations,
                    failed: true,
                    note: format!("relaxation error: {e}"),
                }
            }
        };
        if relax.status == SolveStatus::Optimal && relax.bound_touched && inflations == 0 {
            trial.inflate_soft_bounds(10.0);
            inflations += 1;
            continue;
        }
        let exact = match solve_exact_enumeration(&trial, opts) {
            Ok(r) => r,
            Err(e) => {
                return HullRow {
                    objective_seed,
                    relaxation: relax.value,
                    exact: f64::NAN,
                    rel_gap: f64::NAN,
                    bound_inflations: inflations,
                    failed: true,
                    note: format!("oracle error: {e}"),
                }
            }
        };

        let mut failed = false;
        let mut note = String::new();
        if relax.status != SolveStatus::Optimal || exact.status != SolveStatus::Optimal {
            failed = true;
            note = format!("statuses {:?}/{:?}", relax.status, exact.status);
        } else if relax.bound_touched {
            failed = true;
            note = "artificial bound still active after inflation".into();
        }
        let rel_gap = (exact.value - relax.value) / (1.0 + exact.value.abs());
        if !failed && rel_gap.abs() > opts.tol_opt {
            failed = true;
            note = format!("gap {rel_gap:.3e}");
        }
        return HullRow {
            objective_seed,
            relaxation: relax.value,
            exact: exact.value,
            rel_gap,
            bound_inflations: inflations,
            failed,
            note,
        };
    }
}

/// Compares the relaxation optimum against the enumeration oracle on
/// `num_objectives` random unit-sphere objectives. Rows are independent and
/// keyed by their derived seed; `threads > 1` runs them concurrently.
pub fn hull_equality_test(
    model: &MixedBinaryConicModel,
    num_objectives: usize,
    seed: u64,
    threads: usize,
    opts: &SolveOptions,
) -> Result<HullReport> {
    model.validate()?;
    let hypotheses_met = hull_hypotheses(model)?;
    let seeds: Vec<u64> = (0..num_objectives)
        .map(|t| seed.wrapping_add((t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
        .collect();

    let mut rows: Vec<HullRow> = if threads <= 1 {
        seeds.iter().map(|&s| run_hull_row(model, s, opts)).collect()
    } else {
        let chunk = seeds.len().div_ceil(threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = seeds
                .chunks(chunk.max(1))
                .map(|part| {
                    scope.spawn(move || {
                        part.iter()
                            .map(|&s| run_hull_row(model, s, opts))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("hull row worker panicked"))
                .collect()
        })
    };
    rows.sort_by_key(|r| r.objective_seed);

    let max_gap = rows
        .iter()
        .map(|r| r.rel_gap.abs())
        .fold(0.0_f64, |a, b| if b.is_nan() { a } else { a.max(b) });
    let failures = rows.iter().filter(|r| r.failed).count();
    let trials = rows.len();
    Ok(HullReport {
        instance: model.meta.family.clone(),
        hypotheses_met,
        certificate: hypotheses_met && failures == 0,
        rows,
        summary: HullSummary {
            max_gap,
            trials,
            failures,
        },
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrengtheningReport {
    pub value_no_polymatroid: f64,
    pub value_with: f64,
    pub value_exact: f64,
}

/// Solves the relaxation with and without greedy epigraph cuts and compares
/// against the enumeration oracle.
pub fn strengthening_gap(
    model: &MixedBinaryConicModel,
    objective: &Objective,
    opts: &SolveOptions,
) -> Result<StrengtheningReport> {
    let mut trial = model.clone();
    trial.objective = objective.clone();
    let bare = SolveOptions {
        enable_polymatroid: false,
        ..opts.clone()
    };
    let no_poly = solve_relaxation(&trial, &bare)?;
    let with = solve_relaxation(&trial, opts)?;
    let exact = solve_exact_enumeration(&trial, opts)?;
    Ok(StrengtheningReport {
        value_no_polymatroid: no_poly.value,
        value_with: with.value,
        value_exact: exact.value,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparationReport {
    pub trials: usize,
    pub exact_matches: usize,
    pub max_abs_diff: f64,
}

impl SeparationReport {
    pub fn all_exact(&self) -> bool {
        self.exact_matches == self.trials
    }
}

/// Greedy separation against the factorial brute force: at random fractional
/// points the greedy value must equal the maximum over all permutation
/// vertices, bit for bit (both sides share the same dot-product path).
pub fn separation_vs_bruteforce(f: &SetFunction, trials: usize, seed: u64) -> Result<SeparationReport> {
    let n = f.n();
    if n > 7 {
        return Err(Error::Capacity(format!(
            "n = {n} exceeds the factorial brute-force bound 7"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exact_matches = 0usize;
    let mut max_abs_diff = 0.0_f64;
    for _ in 0..trials {
        let z_bar: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let sep = separate_greedy(f, &z_bar, 0.0)?;
        let mut best = f64::NEG_INFINITY;
        for perm in (0..n).permutations(n) {
            let vertex = vertex_from_permutation(f, &perm)?;
            best = best.max(dot(&vertex.pi, &z_bar));
        }
        if sep.value == best {
            exact_matches += 1;
        }
        max_abs_diff = max_abs_diff.max((sep.value - best).abs());
    }
    Ok(SeparationReport {
        trials,
        exact_matches,
        max_abs_diff,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CutValidityReport {
    pub polymatroid_checked: usize,
    pub conic_checked: usize,
    pub invalid: Vec<String>,
}

impl CutValidityReport {
    pub fn all_valid(&self) -> bool {
        self.invalid.is_empty()
    }
}

/// Exhaustively validates every recorded cut of a solve: greedy cuts against
/// their source function over all subsets, conic cuts by dual-cone
/// membership.
pub fn cut_validity_suite(
    model: &MixedBinaryConicModel,
    cuts: &[RecordedCut],
) -> Result<CutValidityReport> {
    let mut report = CutValidityReport {
        polymatroid_checked: 0,
        conic_checked: 0,
        invalid: Vec::new(),
    };
    for (k, rec) in cuts.iter().enumerate() {
        match rec {
            RecordedCut::Polymatroid { function, cut, .. } => {
                report.polymatroid_checked += 1;
                match validate_cut(&model.functions[*function], cut)? {
                    CutCheck::Valid => {}
                    CutCheck::Violated { subset, slack } => report.invalid.push(format!(
                        "cut {k} (function {function}): pi({subset:#b}) exceeds by {slack:.3e}"
                    )),
                }
            }
            RecordedCut::ConicSupport { block, lambda, .. } => {
                report.conic_checked += 1;
                let cone = &model.blocks[*block].block.cone;
                let r = cone.dual_residual(lambda)?;
                if r > 1e-9 {
                    report
                        .invalid
                        .push(format!("cut {k} (block {block}): dual residual {r:.3e}"));
                }
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MidpointCandidateRow {
    pub x1: f64,
    pub x2: f64,
    pub y: f64,
    /// Worst violation of the candidate against the relaxation.
    pub feasibility_violation: f64,
    /// `y - f(empty) - pi^T z` per preloaded cut; zero means tight.
    pub cut_slacks: Vec<f64>,
    pub decomposed: bool,
    pub decomposition_note: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoints: Option<(Point, Point)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MidpointCandidateReport {
    pub instance: String,
    pub rows: Vec<MidpointCandidateRow>,
    /// Every candidate satisfied the relaxation within tolerance.
    pub all_feasible: bool,
}

/// Builds the worked example and examines its fractional midpoint candidates
/// `z = (1/2, 1/2)`, `y = sqrt(2)/2`, `x2 = 1 + sqrt(x1^2 + 1/2)` for the
/// given `x1` values: feasibility and cut tightness are asserted by the
/// caller; the decomposition outcome is recorded, not asserted.
pub fn midpoint_candidate_report(
    x1_values: &[f64],
    opts: &SolveOptions,
) -> Result<MidpointCandidateReport> {
    let model = crate::model::build_example1()?;
    let y_bar = std::f64::consts::SQRT_2 / 2.0;
    let mut rows = Vec::new();
    let mut all_feasible = true;
    for &x1 in x1_values {
        let x2 = 1.0 + (x1 * x1 + 0.5).sqrt();
        let candidate = Point {
            x: vec![x1, x2, 1.0],
            y: vec![y_bar],
            z: vec![0.5, 0.5],
        };
        let feasibility = relaxation_point_violation(&model, &candidate)?;
        all_feasible &= feasibility <= opts.tol_feas;
        let cut_slacks: Vec<f64> = model
            .preloaded_cuts
            .iter()
            .map(|pc| {
                let lhs: f64 = pc.cut.pi.iter().zip(&candidate.z).map(|(p, z)| p * z).sum();
                candidate.y[pc.y] - pc.cut.offset - lhs
            })
            .collect();
        let (decomposed, note, endpoints) = match decomposition_check(&model, &candidate, opts)? {
            DecompOutcome::Decomposed { p1, p2 } => {
                (true, "decomposed".to_string(), Some((p1, p2)))
            }
            DecompOutcome::NoneFound { log } => (
                false,
                format!(
                    "none found (pairs {}, starts {}, best violation {:.3e})",
                    log.pairs_tried, log.starts_tried, log.best_violation
                ),
                None,
            ),
        };
        rows.push(MidpointCandidateRow {
            x1,
            x2,
            y: y_bar,
            feasibility_violation: feasibility,
            cut_slacks,
            decomposed,
            decomposition_note: note,
            endpoints,
        });
    }
    Ok(MidpointCandidateReport {
        instance: model.meta.family.clone(),
        rows,
        all_feasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_h, random_drccp, random_h, DEFAULT_BOX};
    use approx::assert_relative_eq;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    #[test]
    fn hull_report_on_small_h() {
        let model = random_h(3, 2, 1).unwrap();
        let report = hull_equality_test(&model, 5, 7, 1, &SolveOptions::default()).unwrap();
        assert!(report.hypotheses_met);
        assert!(report.passed(), "rows: {:?}", report.rows);
        assert!(report.certificate);
        assert!(report.summary.max_gap <= 1e-6);
    }

    #[test]
    fn hull_rows_are_deterministic_and_thread_invariant() {
        let model = random_drccp(2.0, 1, 1, 3, 5).unwrap();
        let opts = SolveOptions::default();
        let a = hull_equality_test(&model, 6, 3, 1, &opts).unwrap();
        let b = hull_equality_test(&model, 6, 3, 3, &opts).unwrap();
        let rows_a: Vec<(u64, f64, f64)> = a
            .rows
            .iter()
            .map(|r| (r.objective_seed, r.relaxation, r.exact))
            .collect();
        let rows_b: Vec<(u64, f64, f64)> = b
            .rows
            .iter()
            .map(|r| (r.objective_seed, r.relaxation, r.exact))
            .collect();
        assert_eq!(rows_a, rows_b);
    }

    #[test]
    fn worked_example_report_is_flagged_not_certified() {
        let model = crate::model::build_example1().unwrap();
        let report = hull_equality_test(&model, 3, 11, 1, &SolveOptions::default()).unwrap();
        assert!(!report.hypotheses_met);
        assert!(!report.certificate);
    }

    #[test]
    fn strengthening_on_the_designed_instance() {
        let mut model = build_h(0.0, &[1.0, 1.0], &[], 1, DEFAULT_BOX).unwrap();
        model.objective = Objective::default();
        let objective = Objective::new(vec![
            (VarId::X(0), 1.0),
            (VarId::Z(0), -1.0),
            (VarId::Z(1), -1.0),
        ]);
        let rep = strengthening_gap(&model, &objective, &SolveOptions::default()).unwrap();
        assert_relative_eq!(rep.value_no_polymatroid, -2.0, epsilon = 1e-6);
        assert_relative_eq!(rep.value_with, SQRT2 - 2.0, epsilon = 1e-6);
        assert_relative_eq!(rep.value_exact, SQRT2 - 2.0, epsilon = 1e-6);
    }

    #[test]
    fn zero_binary_weight_collapses_the_gap() {
        // With no offset the function vanishes at the empty set, so the bare
        // epigraph bound y >= 0 is already exact for a pure-x objective.
        let model = build_h(0.0, &[1.0, 2.0], &[], 1, DEFAULT_BOX).unwrap();
        let objective = Objective::new(vec![(VarId::X(0), 1.0)]);
        let rep = strengthening_gap(&model, &objective, &SolveOptions::default()).unwrap();
        assert_relative_eq!(rep.value_no_polymatroid, rep.value_exact, epsilon = 1e-6);
        assert_relative_eq!(rep.value_with, rep.value_exact, epsilon = 1e-6);
    }

    #[test]
    fn separation_matches_brute_force_on_canonical_cases() {
        let sym = SetFunction::SqrtAffine {
            sigma: 0.0,
            c: vec![1.0, 1.0],
        };
        let rep = separation_vs_bruteforce(&sym, 25, 3).unwrap();
        assert!(rep.all_exact());

        let modular = SetFunction::Table {
            values: vec![0.0, 2.0, 3.0, 5.0],
        };
        let rep = separation_vs_bruteforce(&modular, 25, 4).unwrap();
        assert!(rep.all_exact());

        let random6 = SetFunction::SqrtAffine {
            sigma: 0.3,
            c: vec![0.4, 1.7, 0.9, 0.2, 1.1, 0.6],
        };
        let rep = separation_vs_bruteforce(&random6, 10, 5).unwrap();
        assert!(rep.all_exact());
    }

    #[test]
    fn recorded_cuts_all_validate() {
        let mut model = random_h(3, 2, 9).unwrap();
        model.objective = Objective::new(vec![
            (VarId::X(1), 1.0),
            (VarId::Z(0), -1.0),
            (VarId::Z(1), -0.6),
            (VarId::Z(2), -0.8),
        ]);
        let opts = SolveOptions {
            record_cuts: true,
            ..SolveOptions::default()
        };
        let res = solve_relaxation(&model, &opts).unwrap();
        assert!(!res.recorded_cuts.is_empty());
        let report = cut_validity_suite(&model, &res.recorded_cuts).unwrap();
        assert!(report.all_valid(), "invalid: {:?}", report.invalid);

        // Empty pool: vacuous pass.
        let report = cut_validity_suite(&model, &[]).unwrap();
        assert!(report.all_valid());

        // A corrupted cut is reported.
        let bad = RecordedCut::Polymatroid {
            function: 0,
            cut: crate::polymatroid::GreedyCut {
                pi: vec![10.0, 10.0, 10.0],
                offset: 0.0,
                perm: None,
            },
            violation: 0.0,
        };
        let report = cut_validity_suite(&model, &[bad]).unwrap();
        assert_eq!(report.invalid.len(), 1);
    }

    #[test]
    fn midpoint_candidates_are_feasible_and_tight() {
        let report =
            midpoint_candidate_report(&[0.0, 0.5, 1.0], &SolveOptions::default()).unwrap();
        assert!(report.all_feasible);
        for row in &report.rows {
            assert!(row.feasibility_violation <= 1e-7);
            for slack in &row.cut_slacks {
                assert!(slack.abs() <= 1e-7, "cut not tight: {slack}");
            }
        }
        // Determinism: a second run reproduces the same outcomes.
        let again =
            midpoint_candidate_report(&[0.0, 0.5, 1.0], &SolveOptions::default()).unwrap();
        let flags: Vec<bool> = report.rows.iter().map(|r| r.decomposed).collect();
        let flags2: Vec<bool> = again.rows.iter().map(|r| r.decomposed).collect();
        assert_eq!(flags, flags2);
    }
}
