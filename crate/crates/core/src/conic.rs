//! Cones, membership residuals, supporting hyperplanes, homogenization of
//! affine conic rows, and the scaling-closure condition checks.
//!
//! The scaling-closure condition ("condition star") asks that every `(x, z)`
//! with `A x + B f(z) in K` also satisfies `A (alpha x) + B f(z) in K` for all
//! `alpha >= 1`. It is what licenses substituting `y = f(z)` into the conic
//! row, and it holds structurally for the application families built by
//! [`crate::model`]. A cheap sufficient certificate: whenever membership of
//! `A x + B f(z)` forces `A x in K`, the condition follows because
//! `A(alpha x) + B f(z) = (alpha - 1) A x + (A x + B f(z))` stays in the cone.

use crate::linalg::dot;
use crate::model::MixedBinaryConicModel;
use crate::set_function::Subset;
use crate::{Error, Result, DEFAULT_TOL_FEAS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Supported cone types. `RotatedSoc(d)` stores points as
/// `(xi_1, ..., xi_{d-2}, u, v)` with membership `||xi||^2 <= 4 u v`,
/// `u, v >= 0`; it is handled through the exact linear map
/// `(xi, u, v) -> (xi, u - v, u + v)` into `Soc(d)`, so only one
/// residual / supporting-cut code path exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum Cone {
    NonnegOrthant { dim: usize },
    Soc { dim: usize },
    RotatedSoc { dim: usize },
    POrder { p: f64, dim: usize },
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::NonnegOrthant { dim }
            | Cone::Soc { dim }
            | Cone::RotatedSoc { dim }
            | Cone::POrder { dim, .. } => dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Cone::NonnegOrthant { dim } | Cone::Soc { dim } => {
                if dim == 0 {
                    return Err(Error::Structure("cone dimension must be positive".into()));
                }
            }
            Cone::RotatedSoc { dim } => {
                if dim < 2 {
                    return Err(Error::Structure("rotated cone needs dimension >= 2".into()));
                }
            }
            Cone::POrder { p, dim } => {
                if dim == 0 {
                    return Err(Error::Structure("cone dimension must be positive".into()));
                }
                if p.is_nan() || p < 1.0 {
                    return Err(Error::Structure("p-order cone needs p >= 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Membership residual: `<= 0` iff `v` is in the cone (up to tolerance).
    ///
    /// Orthant: `-min_i v_i`. Norm cones: `||v_head|| - v_last` in the
    /// respective norm. Rotated cone: residual of the mapped point.
    pub fn residual(&self, v: &[f64]) -> Result<f64> {
        self.check_dim(v)?;
        Ok(match self {
            Cone::NonnegOrthant { .. } => -v.iter().cloned().fold(f64::INFINITY, f64::min),
            Cone::Soc { .. } => norm_head(v, 2.0) - v[v.len() - 1],
            Cone::POrder { p, .. } => norm_head(v, *p) - v[v.len() - 1],
            Cone::RotatedSoc { .. } => {
                let mapped = rotated_to_soc(v);
                norm_head(&mapped, 2.0) - mapped[mapped.len() - 1]
            }
        })
    }

    /// A hyperplane separating a non-member `v` from the cone:
    /// `lambda^T w >= 0` for every `w` in the cone and
    /// `lambda^T v = -residual(v) < 0`.
    ///
    /// Errors if `v` is already a member within tolerance.
    pub fn supporting_cut(&self, v: &[f64]) -> Result<Vec<f64>> {
        let r = self.residual(v)?;
        if r <= DEFAULT_TOL_FEAS {
            return Err(Error::Logic(format!(
                "supporting_cut called at a member point (residual {r:.3e})"
            )));
        }
        Ok(self.supporting_direction(v))
    }

    /// Same construction as [`Cone::supporting_cut`] but defined at every
    /// point: `lambda^T w >= 0` on the cone and `lambda^T v = -residual(v)`.
    /// Used by the outer-approximation loops, which also need tangents at
    /// feasible points.
    pub fn supporting_direction(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Cone::NonnegOrthant { dim } => {
                let mut arg = 0;
                for i in 1..*dim {
                    if v[i] < v[arg] {
                        arg = i;
                    }
                }
                let mut lambda = vec![0.0; *dim];
                lambda[arg] = 1.0;
                lambda
            }
            Cone::Soc { .. } => norm_cut(v, 2.0),
            Cone::POrder { p, .. } => norm_cut(v, *p),
            Cone::RotatedSoc { .. } => {
                let mapped = rotated_to_soc(v);
                let mu = norm_cut(&mapped, 2.0);
                // Pull back through the transpose of the map.
                let d = v.len();
                let mut lambda = mu.clone();
                lambda[d - 2] = mu[d - 2] + mu[d - 1];
                lambda[d - 1] = -mu[d - 2] + mu[d - 1];
                lambda
            }
        }
    }

    /// Residual of membership in the dual cone: `<= 0` iff
    /// `lambda^T w >= 0` for every `w` in the cone.
    pub fn dual_residual(&self, lambda: &[f64]) -> Result<f64> {
        self.check_dim(lambda)?;
        Ok(match self {
            Cone::NonnegOrthant { .. } => {
                -lambda.iter().cloned().fold(f64::INFINITY, f64::min)
            }
            Cone::Soc { .. } => norm_head(lambda, 2.0) - lambda[lambda.len() - 1],
            Cone::POrder { p, .. } => {
                // Dual of the p-norm is the q-norm with 1/p + 1/q = 1.
                let head = &lambda[..lambda.len() - 1];
                let qnorm = if *p == 1.0 {
                    head.iter().fold(0.0_f64, |m, &a| m.max(a.abs()))
                } else {
                    let q = p / (p - 1.0);
                    head.iter().map(|a| a.abs().powf(q)).sum::<f64>().powf(1.0 / q)
                };
                qnorm - lambda[lambda.len() - 1]
            }
            Cone::RotatedSoc { .. } => {
                // lambda = M^T mu with mu in the mapped cone; invert.
                let d = lambda.len();
                let mut mu = lambda.to_vec();
                mu[d - 2] = 0.5 * (lambda[d - 2] - lambda[d - 1]);
                mu[d - 1] = 0.5 * (lambda[d - 2] + lambda[d - 1]);
                norm_head(&mu, 2.0) - mu[d - 1]
            }
        })
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::Argument(format!(
                "vector length {} does not match cone dimension {}",
                v.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

fn norm_head(v: &[f64], p: f64) -> f64 {
    let head = &v[..v.len() - 1];
    if p == 2.0 {
        dot(head, head).sqrt()
    } else if p == 1.0 {
        head.iter().map(|a| a.abs()).sum()
    } else {
        head.iter().map(|a| a.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// `(-s, 1)` where `s` is the dual-norm subgradient of the p-norm at the head
/// of `v`. Zero heads map to the zero subvector so that cut coefficients are
/// deterministic at kinks.
fn norm_cut(v: &[f64], p: f64) -> Vec<f64> {
    let d = v.len();
    let head = &v[..d - 1];
    let norm = norm_head(v, p);
    let mut lambda = vec![0.0; d];
    lambda[d - 1] = 1.0;
    if norm <= 0.0 {
        return lambda;
    }
    if p == 1.0 {
        for i in 0..d - 1 {
            lambda[i] = -sign0(head[i]);
        }
    } else if p == 2.0 {
        for i in 0..d - 1 {
            lambda[i] = -head[i] / norm;
        }
    } else {
        let scale = norm.powf(p - 1.0);
        for i in 0..d - 1 {
            lambda[i] = -sign0(head[i]) * head[i].abs().powf(p - 1.0) / scale;
        }
    }
    lambda
}

fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn rotated_to_soc(v: &[f64]) -> Vec<f64> {
    let d = v.len();
    let mut w = v.to_vec();
    let (u, vv) = (v[d - 2], v[d - 1]);
    w[d - 2] = u - vv;
    w[d - 1] = u + vv;
    w
}

/// One affine conic row `A x + B y (+ C) in K` over a block of continuous
/// variables and a single epigraph variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicBlock {
    /// Dense, row-major; one row per cone coordinate.
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    pub cone: Cone,
    /// Constant term; `None` (or all zeros) means the row is homogeneous.
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<Vec<f64>>,
}

impl ConicBlock {
    pub fn num_cols(&self) -> usize {
        self.a.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        self.cone.validate()?;
        let dim = self.cone.dim();
        if self.a.len() != dim || self.b.len() != dim {
            return Err(Error::Structure(format!(
                "block rows ({}/{}) do not match cone dimension {dim}",
                self.a.len(),
                self.b.len()
            )));
        }
        let cols = self.num_cols();
        if self.a.iter().any(|row| row.len() != cols) {
            return Err(Error::Structure("ragged block matrix".into()));
        }
        if let Some(c) = &self.constant {
            if c.len() != dim {
                return Err(Error::Structure("constant length mismatch".into()));
            }
        }
        let finite = self.a.iter().flatten().all(|v| v.is_finite())
            && self.b.iter().all(|v| v.is_finite())
            && self.constant.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Structure("non-finite block entry".into()));
        }
        Ok(())
    }

    pub fn is_homogeneous(&self) -> bool {
        self.constant
            .as_ref()
            .is_none_or(|c| c.iter().all(|&v| v == 0.0))
    }

    /// Evaluates `A x (+ B y) (+ C)` for this block.
    pub fn vector(&self, x: &[f64], y: Option<f64>) -> Vec<f64> {
        let dim = self.cone.dim();
        let mut out = vec![0.0; dim];
        for (r, row) in self.a.iter().enumerate() {
            out[r] = dot(row, x);
        }
        if let Some(y) = y {
            for r in 0..dim {
                out[r] += self.b[r] * y;
            }
        }
        if let Some(c) = &self.constant {
            for r in 0..dim {
                out[r] += c[r];
            }
        }
        out
    }
}

/// Replaces a nonzero constant `C` by a fresh column `C * v`; the caller
/// registers the accompanying affine row `v = 1`. Returns the augmented block
/// and the appended column's index, or the block unchanged when it was
/// already homogeneous. Feasibility is preserved exactly on the `v = 1`
/// slice.
pub fn homogenize(block: &ConicBlock) -> (ConicBlock, Option<usize>) {
    if block.is_homogeneous() {
        let mut out = block.clone();
        out.constant = None;
        return (out, None);
    }
    let c = block.constant.clone().expect("nonzero constant");
    let new_col = block.num_cols();
    let mut a = block.a.clone();
    for (row, ci) in a.iter_mut().zip(&c) {
        row.push(*ci);
    }
    (
        ConicBlock {
            a,
            b: block.b.clone(),
            cone: block.cone.clone(),
            constant: None,
        },
        Some(new_col),
    )
}

/// Structural patterns that certify the scaling-closure condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StarPattern {
    /// Epigraph variable enters only the first coordinate of a norm cone and
    /// that coordinate is otherwise free of `x` (or the block does not couple
    /// the epigraph variable at all, `B = 0`). Dropping the `B`-term can only
    /// shrink the norm, so `A x` stays in the cone.
    P1,
    /// The paired `+beta / -beta` rows at the bottom of a second-order cone
    /// with a homogenization column: the rows agree except for that column,
    /// where they differ by sign, and every variable they touch is bounded
    /// nonnegative. Membership then forces the bracketing that keeps `A x`
    /// in the cone.
    P2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StarCheck {
    Holds(StarPattern),
    Unknown,
}

impl StarCheck {
    pub fn holds(&self) -> bool {
        matches!(self, StarCheck::Holds(_))
    }
}

/// Pattern-matches a block against the verified structures under which the
/// scaling-closure condition is guaranteed. `x_lb` are the lower bounds of
/// the block's columns, `homog_col` is the column introduced by
/// [`homogenize`], if any. Returns `Unknown` whenever the block fits no
/// verified pattern; never a false `Holds`.
pub fn condition_star_structural(
    block: &ConicBlock,
    x_lb: &[f64],
    homog_col: Option<usize>,
) -> StarCheck {
    let dim = block.cone.dim();

    // No epigraph coupling at all: A(alpha x) = (alpha - 1) Ax + Ax.
    if block.b.iter().all(|&v| v == 0.0) {
        return StarCheck::Holds(StarPattern::P1);
    }

    // P1: B = beta * e_1 into a norm cone whose first coordinate carries no x.
    // Only proven for homogeneous blocks, so a homogenization column opts out.
    let is_norm_cone = matches!(
        block.cone,
        Cone::Soc { .. } | Cone::POrder { .. } | Cone::RotatedSoc { .. }
    );
    if homog_col.is_none()
        && is_norm_cone
        && block.b[0] > 0.0
        && block.b[1..].iter().all(|&v| v == 0.0)
        && block.a[0].iter().all(|&v| v == 0.0)
    {
        return StarCheck::Holds(StarPattern::P1);
    }

    // P2: second-order cone, B = (0, ..., 0, +beta, -beta), the two coupled
    // rows of A identical except for an opposite-sign homogenization column,
    // and all referenced variables bounded nonnegative.
    if let (Cone::Soc { .. }, Some(h)) = (&block.cone, homog_col) {
        if dim >= 2 {
            let r1 = dim - 2;
            let r2 = dim - 1;
            let beta = block.b[r1];
            let b_pattern = beta > 0.0
                && block.b[r2] == -beta
                && block.b[..r1].iter().all(|&v| v == 0.0);
            if b_pattern {
                let cols = block.num_cols();
                let mut rows_match = h < cols && block.a[r1][h] != 0.0 && block.a[r1][h] == -block.a[r2][h];
                let mut referenced_nonneg = true;
                for c in 0..cols {
                    if c == h {
                        continue;
                    }
                    if block.a[r1][c] != block.a[r2][c] {
                        rows_match = false;
                        break;
                    }
                    if (block.a[r1][c] != 0.0 || block.a[r2][c] != 0.0) && x_lb[c] < 0.0 {
                        referenced_nonneg = false;
                    }
                }
                if rows_match && referenced_nonneg && x_lb.get(h).is_some_and(|&lb| lb >= 0.0) {
                    return StarCheck::Holds(StarPattern::P2);
                }
            }
        }
    }

    StarCheck::Unknown
}

/// Model-level structural check: `Holds` only when every block certifies.
/// Reports the strongest pattern name among the non-trivial blocks.
pub fn model_condition_star(model: &MixedBinaryConicModel) -> StarCheck {
    let mut pattern = StarPattern::P1;
    for mb in &model.blocks {
        let lb: Vec<f64> = mb.x_cols.iter().map(|&c| model.vars[c].lb).collect();
        match condition_star_structural(&mb.block, &lb, mb.homog_col) {
            StarCheck::Holds(StarPattern::P2) => pattern = StarPattern::P2,
            StarCheck::Holds(StarPattern::P1) => {}
            StarCheck::Unknown => return StarCheck::Unknown,
        }
    }
    StarCheck::Holds(pattern)
}

/// Sampler configuration for the falsifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FalsifyConfig {
    pub seed: u64,
    pub samples: usize,
    pub alpha_grid: Vec<f64>,
    /// A scaled point counts as a witness only when its residual exceeds this
    /// (well above feasibility noise on exactly-feasible samples).
    pub witness_threshold: f64,
}

impl Default for FalsifyConfig {
    fn default() -> Self {
        FalsifyConfig {
            seed: 0,
            samples: 10_000,
            alpha_grid: vec![1.1, 2.0, 10.0, 100.0],
            witness_threshold: 1e-6,
        }
    }
}

/// A point certifying that scaling breaks conic membership.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StarWitness {
    pub x: Vec<f64>,
    pub z: Vec<u8>,
    pub alpha: f64,
    pub block_index: usize,
    pub violation: f64,
}

/// Falsifier outcome. `NoneFound` is evidence, not proof; `Inconclusive`
/// means the sampler produced no exactly feasible point to test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum FalsifyOutcome {
    Witness(StarWitness),
    NoneFound { samples_tested: usize },
    Inconclusive { reason: String },
}

/// Samples exactly feasible points of the substituted set (binary `z` by
/// enumeration, `x` by pulling random box draws toward a strictly feasible
/// anchor with bisection) and tests each `alpha` on the grid against every
/// block. Returns the first violation found.
pub fn condition_star_falsify(
    model: &MixedBinaryConicModel,
    config: &FalsifyConfig,
) -> Result<FalsifyOutcome> {
    let n = model.n;
    if n > 12 {
        return Err(Error::Capacity(format!(
            "n = {n} exceeds the falsifier enumeration bound 12"
        )));
    }
    model.validate()?;

    // Anchors: one strictly feasible interior point per admissible z.
    let mut anchored: Vec<(Subset, Vec<f64>)> = Vec::new();
    for z in 0..1usize << n {
        if !model.z_only_rows_feasible(z) {
            continue;
        }
        if let Some((x, r)) = crate::solver::min_residual_point_at_z(model, z)? {
            // The bisection base must itself satisfy every block exactly.
            if r <= 0.0 && exact_residual(model, &x, z) <= 0.0 {
                anchored.push((z, x));
            }
        }
    }
    if anchored.is_empty() {
        return Ok(FalsifyOutcome::Inconclusive {
            reason: "no exactly feasible anchor point found for any z".into(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tested = 0usize;
    for i in 0..config.samples {
        let (z, anchor) = &anchored[i % anchored.len()];
        let draw: Vec<f64> = model
            .vars
            .iter()
            .map(|v| rng.gen_range(v.lb..=v.ub))
            .collect();
        let x = pull_to_feasible(model, anchor, &draw, *z);
        tested += 1;

        for &alpha in &config.alpha_grid {
            for (bi, mb) in model.blocks.iter().enumerate() {
                let xs: Vec<f64> = mb.x_cols.iter().map(|&c| alpha * x[c]).collect();
                let y = mb.y_index.map(|j| model.functions[j].evaluate(*z));
                let v = mb.block.vector(&xs, y);
                let r = mb.block.cone.residual(&v)?;
                if r > config.witness_threshold {
                    return Ok(FalsifyOutcome::Witness(StarWitness {
                        x,
                        z: (0..n).map(|i| ((z >> i) & 1) as u8).collect(),
                        alpha,
                        block_index: bi,
                        violation: r,
                    }));
                }
            }
        }
    }

    Ok(FalsifyOutcome::NoneFound { samples_tested: tested })
}

/// Largest residual over all blocks at `(x, f(z))`.
fn exact_residual(model: &MixedBinaryConicModel, x: &[f64], z: Subset) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for mb in &model.blocks {
        let xs: Vec<f64> = mb.x_cols.iter().map(|&c| x[c]).collect();
        let y = mb.y_index.map(|j| model.functions[j].evaluate(z));
        let v = mb.block.vector(&xs, y);
        let r = mb.block.cone.residual(&v).expect("validated dims");
        worst = worst.max(r);
    }
    worst
}

/// Walks from `anchor` toward `draw`, keeping the farthest exactly feasible
/// point on the segment.
fn pull_to_feasible(
    model: &MixedBinaryConicModel,
    anchor: &[f64],
    draw: &[f64],
    z: Subset,
) -> Vec<f64> {
    let blend = |t: f64| -> Vec<f64> {
        anchor
            .iter()
            .zip(draw)
            .map(|(a, d)| a + t * (d - a))
            .collect()
    };
    if exact_residual(model, draw, z) <= 0.0 {
        return draw.to_vec();
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if exact_residual(model, &blend(mid), z) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    blend(lo)
}
