//! Valid inequalities for the epigraph of a set function `f`.
//!
//! For the shifted function `f~ = f - f(∅)`, the associated polyhedron is
//!
//! ```text
//! P = { pi in R^n : pi(V) <= f~(V) for all V ⊆ [n] }
//! ```
//!
//! and every `pi in P` yields the valid inequality `y - f(∅) >= pi^T z` on
//! `epi(f)`. When `f` is submodular these inequalities describe the convex
//! hull of the epigraph completely, their binding vertices come from
//! permutations (greedy marginals), and a most-violated one is found by
//! sorting `z` once.

use crate::linalg::{dot, solve_dense};
use crate::set_function::{SetFunction, Subset};
use crate::{Error, Result, DEFAULT_TOL_FEAS, MAX_CUT_CHECK_N, MAX_VERTEX_ENUM_N};
use serde::{Deserialize, Serialize};

/// A polar / extended polymatroid inequality `y - offset >= pi^T z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyCut {
    pub pi: Vec<f64>,
    /// Equals `f(∅)` of the source function.
    pub offset: f64,
    /// The permutation that generated `pi`, when it came from the greedy
    /// construction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perm: Option<Vec<usize>>,
}

/// Result of one greedy separation call.
#[derive(Debug, Clone)]
pub struct Separation {
    pub cut: GreedyCut,
    /// `pi^T z_bar`, the left-hand side the cut demands of `y - f(∅)`.
    pub value: f64,
    pub violated: bool,
}

/// Outcome of exhaustive cut validation against `P`.
#[derive(Debug, Clone, PartialEq)]
pub enum CutCheck {
    Valid,
    /// `pi(V) > f(V) - f(∅)` on this subset by `slack`.
    Violated { subset: Subset, slack: f64 },
}

impl CutCheck {
    pub fn is_valid(&self) -> bool {
        matches!(self, CutCheck::Valid)
    }
}

/// Builds the vertex of `P` induced by a permutation: with
/// `V_t = {sigma(1), ..., sigma(t)}`,
/// `pi_{sigma(t)} = f(V_t) - f(V_{t-1})`.
///
/// For submodular `f` this is an extreme point of `P`; otherwise it is just a
/// candidate that must pass [`validate_cut`] to be usable.
pub fn vertex_from_permutation(f: &SetFunction, sigma: &[usize]) -> Result<GreedyCut> {
    let n = f.n();
    if sigma.len() != n {
        return Err(Error::Argument(format!(
            "permutation length {} does not match n = {n}",
            sigma.len()
        )));
    }
    let mut seen = vec![false; n];
    for &i in sigma {
        if i >= n || seen[i] {
            return Err(Error::Argument(format!("not a permutation of 0..{n}")));
        }
        seen[i] = true;
    }

    let mut pi = vec![0.0; n];
    let mut prefix: Subset = 0;
    let mut prev = f.evaluate(0);
    for &i in sigma {
        prefix |= 1 << i;
        let cur = f.evaluate(prefix);
        pi[i] = cur - prev;
        prev = cur;
    }
    Ok(GreedyCut {
        pi,
        offset: f.value_empty(),
        perm: Some(sigma.to_vec()),
    })
}

/// Greedy separation at `(z_bar, y_bar)`: sorts `z_bar` in non-increasing
/// order (ties by ascending index), builds the induced vertex and reports
/// whether `y_bar - f(∅) < pi^T z_bar - tol`. For submodular `f` the returned
/// value is the maximum of `pi^T z_bar` over all of `P`.
pub fn separate_greedy(f: &SetFunction, z_bar: &[f64], y_bar: f64) -> Result<Separation> {
    let n = f.n();
    if z_bar.len() != n {
        return Err(Error::Argument(format!(
            "point length {} does not match n = {n}",
            z_bar.len()
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        z_bar[b]
            .partial_cmp(&z_bar[a])
            .expect("z_bar must not contain NaN")
            .then(a.cmp(&b))
    });

    let cut = vertex_from_permutation(f, &order)?;
    let value = dot(&cut.pi, z_bar);
    let violated = y_bar - cut.offset < value - DEFAULT_TOL_FEAS;
    Ok(Separation { cut, value, violated })
}

/// The convex extension of a submodular `f` to `[0,1]^n`:
/// `f(∅) + max_{pi in P} pi^T z_bar`, computed by one greedy call.
/// Agrees with `f` exactly at binary points.
pub fn lovasz_extension(f: &SetFunction, z_bar: &[f64]) -> Result<f64> {
    let sep = separate_greedy(f, z_bar, 0.0)?;
    Ok(f.value_empty() + sep.value)
}

/// Exhaustively checks `pi(V) <= f(V) - f(∅)` over all subsets.
pub fn validate_cut(f: &SetFunction, cut: &GreedyCut) -> Result<CutCheck> {
    let n = f.n();
    if n > MAX_CUT_CHECK_N {
        return Err(Error::Capacity(format!(
            "n = {n} exceeds the cut validation bound {MAX_CUT_CHECK_N}"
        )));
    }
    if cut.pi.len() != n {
        return Err(Error::Argument("cut dimension mismatch".into()));
    }
    let f_empty = f.value_empty();
    for subset in 0..1usize << n {
        let mut pi_v = 0.0;
        for i in 0..n {
            if subset & (1 << i) != 0 {
                pi_v += cut.pi[i];
            }
        }
        let slack = pi_v - (f.evaluate(subset) - f_empty);
        if slack > DEFAULT_TOL_FEAS {
            return Ok(CutCheck::Violated { subset, slack });
        }
    }
    Ok(CutCheck::Valid)
}

/// Enumerates all vertices of `P` for a general (not necessarily submodular)
/// `f` by solving every `n x n` subsystem of the nonempty-subset constraints
/// and keeping the solutions feasible for all of them. Singular subsystems
/// are skipped. For submodular `f` the result equals the set of distinct
/// permutation vertices.
pub fn enumerate_polar_vertices(f: &SetFunction) -> Result<Vec<GreedyCut>> {
    let n = f.n();
    if n > MAX_VERTEX_ENUM_N {
        return Err(Error::Capacity(format!(
            "n = {n} exceeds the vertex enumeration bound {MAX_VERTEX_ENUM_N}"
        )));
    }
    let f_empty = f.value_empty();
    let subsets: Vec<Subset> = (1..1usize << n).collect();
    let rhs_all: Vec<f64> = subsets.iter().map(|&s| f.evaluate(s) - f_empty).collect();

    let rows: Vec<Vec<f64>> = subsets
        .iter()
        .map(|&s| (0..n).map(|i| ((s >> i) & 1) as f64).collect())
        .collect();

    let mut vertices: Vec<GreedyCut> = Vec::new();
    let mut seen_keys: Vec<Vec<i64>> = Vec::new();

    for combo in combinations(subsets.len(), n) {
        let m: Vec<Vec<f64>> = combo.iter().map(|&k| rows[k].clone()).collect();
        let b: Vec<f64> = combo.iter().map(|&k| rhs_all[k]).collect();
        let Some(pi) = solve_dense(&m, &b, 1e-10) else {
            continue;
        };
        // Feasibility against every constraint of the polyhedron.
        let feasible = rows
            .iter()
            .zip(&rhs_all)
            .all(|(row, &rhs)| dot(row, &pi) <= rhs + DEFAULT_TOL_FEAS);
        if !feasible {
            continue;
        }
        let key = round_key(&pi);
        if seen_keys.contains(&key) {
            continue;
        }
        seen_keys.push(key);
        vertices.push(GreedyCut {
            pi,
            offset: f_empty,
            perm: None,
        });
    }

    // Deterministic output order.
    vertices.sort_by(|a, b| {
        a.pi.partial_cmp(&b.pi)
            .expect("vertex coordinates are finite")
    });
    Ok(vertices)
}

/// Rounds coordinates to 12 decimal digits; the deduplication key for cuts.
pub(crate) fn round_key(pi: &[f64]) -> Vec<i64> {
    pi.iter()
        .map(|&v| {
            let scaled = v * 1e12;
            debug_assert!(scaled.abs() < 9.0e18);
            scaled.round() as i64
        })
        .collect()
}

/// All k-element index combinations of `0..len` in lexicographic order.
fn combinations(len: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut state: Option<Vec<usize>> = if k <= len {
        Some((0..k).collect())
    } else {
        None
    };
    std::iter::from_fn(move || {
        let cur = state.clone()?;
        // Advance to the next combination.
        let mut next = cur.clone();
        let mut i = k;
        loop {
            if i == 0 {
                state = None;
                break;
            }
            i -= 1;
            if next[i] < len - (k - i) {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                state = Some(next);
                break;
            }
        }
        Some(cur)
    })
}
