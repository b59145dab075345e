//! The mixed-binary conic model container and builders for the application
//! families: the epigraph-in-a-cone sets H and R, their multi-constraint
//! combination M, sum-of-ratios binary programs, best subset selection with
//! information criteria, norm substructures with an augmented binary vector,
//! a small worked example with a shifted cone row, and a crafted instance on
//! which the scaling-closure condition fails.

use crate::conic::{homogenize, Cone, ConicBlock};
use crate::polymatroid::{vertex_from_permutation, GreedyCut};
use crate::set_function::{Extremum, SetFunction, Subset};
use crate::{Error, Result, MAX_ENUM_N, MAX_EXACT_N};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Default box half-width for generated continuous variables. Wide enough
/// that hull tests do not bind it; touches are detected and inflated.
pub const DEFAULT_BOX: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarRole {
    Plain,
    /// Column introduced to absorb a constant term; pinned to 1 by a row.
    Homogenization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousVar {
    pub name: String,
    pub lb: f64,
    pub ub: f64,
    pub role: VarRole,
    /// Whether the box is an artificial compactness bound (eligible for
    /// inflation when a solve touches it) rather than model data.
    pub soft: bool,
}

/// Variable reference used by linear rows and objectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarId {
    /// Continuous variable index.
    X(usize),
    /// Epigraph variable index (one per set function).
    Y(usize),
    /// Binary variable index.
    Z(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinTerm {
    pub var: VarId,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub terms: Vec<LinTerm>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearRow {
    pub fn new(terms: Vec<(VarId, f64)>, sense: Sense, rhs: f64) -> Self {
        LinearRow {
            terms: terms
                .into_iter()
                .map(|(var, coef)| LinTerm { var, coef })
                .collect(),
            sense,
            rhs,
        }
    }

    pub fn is_z_only(&self) -> bool {
        self.terms.iter().all(|t| matches!(t.var, VarId::Z(_)))
    }

    pub fn activity(&self, x: &[f64], y: &[f64], z: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.coef
                    * match t.var {
                        VarId::X(i) => x[i],
                        VarId::Y(j) => y[j],
                        VarId::Z(i) => z[i],
                    }
            })
            .sum()
    }

    /// Signed violation: positive means the row is broken by that much.
    pub fn violation(&self, x: &[f64], y: &[f64], z: &[f64]) -> f64 {
        let a = self.activity(x, y, z);
        match self.sense {
            Sense::Le => a - self.rhs,
            Sense::Ge => self.rhs - a,
            Sense::Eq => (a - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Objective {
    pub terms: Vec<LinTerm>,
    #[serde(default)]
    pub constant: f64,
}

impl Objective {
    pub fn new(terms: Vec<(VarId, f64)>) -> Self {
        Objective {
            terms: terms
                .into_iter()
                .map(|(var, coef)| LinTerm { var, coef })
                .collect(),
            constant: 0.0,
        }
    }

    pub fn value(&self, x: &[f64], y: &[f64], z: &[f64]) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|t| {
                    t.coef
                        * match t.var {
                            VarId::X(i) => x[i],
                            VarId::Y(j) => y[j],
                            VarId::Z(i) => z[i],
                        }
                })
                .sum::<f64>()
    }
}

/// A conic block wired into the model: which continuous columns feed `A`,
/// which epigraph variable feeds `B`, and which column (if any) is the
/// homogenization variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBlock {
    #[serde(flatten)]
    pub block: ConicBlock,
    /// Global continuous-variable indices of the block's columns.
    pub x_cols: Vec<usize>,
    /// Epigraph variable index; `None` for blocks with `B = 0` (embedded
    /// side constraints on `x`).
    #[serde(rename = "y")]
    pub y_index: Option<usize>,
    /// Position within `x_cols` of the homogenization column, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homog_col: Option<usize>,
}

/// A polymatroid cut stored with the instance and seeded into every solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreloadedCut {
    /// Index of the epigraph variable the cut bounds.
    pub y: usize,
    #[serde(flatten)]
    pub cut: GreedyCut,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Meta {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Binary variables `z in {0,1}^n`, box-bounded continuous variables, one
/// epigraph variable per set function, conic blocks, linear side rows and a
/// linear objective (minimized).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedBinaryConicModel {
    pub version: u32,
    pub n: usize,
    pub vars: Vec<ContinuousVar>,
    pub functions: Vec<SetFunction>,
    pub blocks: Vec<ModelBlock>,
    pub linear: Vec<LinearRow>,
    pub objective: Objective,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub preloaded_cuts: Vec<PreloadedCut>,
    pub meta: Meta,
}

impl MixedBinaryConicModel {
    pub fn num_x(&self) -> usize {
        self.vars.len()
    }

    pub fn num_y(&self) -> usize {
        self.functions.len()
    }

    /// Checks every structural invariant. Called by `load` and the builders.
    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_SCHEMA_VERSION {
            return Err(Error::Structure(format!(
                "unsupported schema version {} (expected {MODEL_SCHEMA_VERSION})",
                self.version
            )));
        }
        if self.n == 0 || self.n > MAX_EXACT_N {
            return Err(Error::Structure(format!(
                "n = {} out of supported range 1..={MAX_EXACT_N}",
                self.n
            )));
        }
        for v in &self.vars {
            if !v.lb.is_finite() || !v.ub.is_finite() || v.lb > v.ub {
                return Err(Error::Structure(format!(
                    "variable {} needs finite bounds with lb <= ub",
                    v.name
                )));
            }
        }
        for f in &self.functions {
            f.validate()?;
            if f.n() != self.n {
                return Err(Error::Structure(format!(
                    "function over {} variables in a model with n = {}",
                    f.n(),
                    self.n
                )));
            }
        }
        let mut y_refs = vec![0usize; self.num_y()];
        for mb in &self.blocks {
            mb.block.validate()?;
            if !mb.block.is_homogeneous() {
                return Err(Error::Structure(
                    "model blocks must be homogeneous; homogenize first".into(),
                ));
            }
            if mb.x_cols.len() != mb.block.num_cols() {
                return Err(Error::Structure("block column count mismatch".into()));
            }
            if mb.x_cols.iter().any(|&c| c >= self.num_x()) {
                return Err(Error::Structure("block references a missing variable".into()));
            }
            match mb.y_index {
                Some(j) => {
                    if j >= self.num_y() {
                        return Err(Error::Structure("block references a missing function".into()));
                    }
                    y_refs[j] += 1;
                }
                None => {
                    if mb.block.b.iter().any(|&v| v != 0.0) {
                        return Err(Error::Structure(
                            "block with no epigraph variable must have B = 0".into(),
                        ));
                    }
                }
            }
            if let Some(h) = mb.homog_col {
                let Some(&col) = mb.x_cols.get(h) else {
                    return Err(Error::Structure("homogenization column out of range".into()));
                };
                if self.vars[col].role != VarRole::Homogenization {
                    return Err(Error::Structure(
                        "homogenization column must point at a homogenization variable".into(),
                    ));
                }
            }
        }
        if let Some(j) = y_refs.iter().position(|&c| c != 1) {
            return Err(Error::Structure(format!(
                "epigraph variable {j} must be referenced by exactly one block (found {})",
                y_refs[j]
            )));
        }
        for row in &self.linear {
            self.check_terms(&row.terms)?;
            if !row.rhs.is_finite() {
                return Err(Error::Structure("non-finite row rhs".into()));
            }
        }
        self.check_terms(&self.objective.terms)?;
        for pc in &self.preloaded_cuts {
            if pc.y >= self.num_y() || pc.cut.pi.len() != self.n {
                return Err(Error::Structure("preloaded cut shape mismatch".into()));
            }
        }
        Ok(())
    }

    fn check_terms(&self, terms: &[LinTerm]) -> Result<()> {
        for t in terms {
            let ok = match t.var {
                VarId::X(i) => i < self.num_x(),
                VarId::Y(j) => j < self.num_y(),
                VarId::Z(i) => i < self.n,
            };
            if !ok || !t.coef.is_finite() {
                return Err(Error::Structure("bad linear term".into()));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let model: MixedBinaryConicModel =
            serde_json::from_reader(std::io::BufReader::new(file))?;
        model.validate()?;
        Ok(model)
    }

    /// Whether the binary assignment satisfies every row that involves only
    /// `z` variables.
    pub fn z_only_rows_feasible(&self, z: Subset) -> bool {
        let zvec: Vec<f64> = (0..self.n).map(|i| ((z >> i) & 1) as f64).collect();
        self.linear
            .iter()
            .filter(|r| r.is_z_only())
            .all(|r| r.violation(&[], &[], &zvec) <= 1e-9)
    }

    /// Upper bounds for the epigraph variables: the exact maximum of each
    /// function over all subsets.
    pub fn y_upper_bounds(&self) -> Result<Vec<f64>> {
        self.functions
            .iter()
            .map(|f| f.extremal_value(Extremum::Max))
            .collect()
    }

    /// Multiplies every artificial box bound by `factor` (both ends when the
    /// lower end is negative). Used when a solve touches the box.
    pub fn inflate_soft_bounds(&mut self, factor: f64) {
        for v in &mut self.vars {
            if v.soft {
                v.ub *= factor;
                if v.lb < 0.0 {
                    v.lb *= factor;
                }
            }
        }
    }

    pub fn push_row(&mut self, row: LinearRow) {
        self.linear.push(row);
    }
}

fn plain_var(name: String, lb: f64, ub: f64) -> ContinuousVar {
    ContinuousVar {
        name,
        lb,
        ub,
        role: VarRole::Plain,
        soft: true,
    }
}

fn require_nonneg(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::Argument(format!("{what} must be nonnegative and finite")));
    }
    Ok(())
}

fn check_function_nonneg(f: &SetFunction) -> Result<()> {
    f.validate()?;
    if f.n() <= MAX_ENUM_N {
        let check = f.check_nonnegative()?;
        if let crate::set_function::NonnegativityCheck::Violated { subset, value } = check {
            return Err(Error::Argument(format!(
                "set function is negative ({value}) on subset {subset:#b}"
            )));
        }
    }
    Ok(())
}

/// Identity-like orthant block enforcing `x_cols >= 0` as a conic row.
fn orthant_block(x_cols: Vec<usize>) -> ModelBlock {
    let m = x_cols.len();
    let a: Vec<Vec<f64>> = (0..m)
        .map(|r| (0..m).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
        .collect();
    ModelBlock {
        block: ConicBlock {
            a,
            b: vec![0.0; m],
            cone: Cone::NonnegOrthant { dim: m },
            constant: None,
        },
        x_cols,
        y_index: None,
        homog_col: None,
    }
}

fn h_type_block(d: &[f64], x_cols: Vec<usize>, y_index: usize) -> ModelBlock {
    let m = x_cols.len();
    debug_assert_eq!(d.len(), m - 1);
    let dim = m + 1;
    let mut a = vec![vec![0.0; m]; dim];
    for (j, &dj) in d.iter().enumerate() {
        a[j + 1][j] = dj.sqrt();
    }
    a[m][m - 1] = 1.0;
    ModelBlock {
        block: ConicBlock {
            a,
            b: first_unit(dim),
            cone: Cone::Soc { dim },
            constant: None,
        },
        x_cols,
        y_index: Some(y_index),
        homog_col: None,
    }
}

fn r_type_block(d: &[f64], x_cols: Vec<usize>, y_index: usize) -> ModelBlock {
    let m = x_cols.len();
    debug_assert_eq!(d.len(), m - 2);
    let dim = m + 1;
    let mut a = vec![vec![0.0; m]; dim];
    for (j, &dj) in d.iter().enumerate() {
        a[j + 1][j] = dj.sqrt();
    }
    a[dim - 2][m - 2] = 1.0; // u slot
    a[dim - 1][m - 1] = 1.0; // v slot
    ModelBlock {
        block: ConicBlock {
            a,
            b: first_unit(dim),
            cone: Cone::RotatedSoc { dim },
            constant: None,
        },
        x_cols,
        y_index: Some(y_index),
        homog_col: None,
    }
}

fn first_unit(dim: usize) -> Vec<f64> {
    let mut b = vec![0.0; dim];
    b[0] = 1.0;
    b
}

/// `sqrt(sigma + c^T z + sum_j d_j x_j^2) <= x_m` over `x >= 0`.
pub fn build_h(sigma: f64, c: &[f64], d: &[f64], m: usize, box_ub: f64) -> Result<MixedBinaryConicModel> {
    if m == 0 || d.len() != m - 1 {
        return Err(Error::Argument(format!(
            "H needs m >= 1 and {} d-coefficients, got {}",
            m.saturating_sub(1),
            d.len()
        )));
    }
    require_nonneg(&[sigma], "sigma")?;
    require_nonneg(c, "c")?;
    require_nonneg(d, "d")?;
    let f = SetFunction::SqrtAffine { sigma, c: c.to_vec() };
    check_function_nonneg(&f)?;

    let vars: Vec<ContinuousVar> = (0..m)
        .map(|j| plain_var(format!("x{}", j + 1), 0.0, box_ub))
        .collect();
    let model = MixedBinaryConicModel {
        version: MODEL_SCHEMA_VERSION,
        n: c.len(),
        vars,
        functions: vec![f],
        blocks: vec![h_type_block(d, (0..m).collect(), 0), orthant_block((0..m).collect())],
        linear: vec![],
        objective: Objective::default(),
        preloaded_cuts: vec![],
        meta: Meta {
            family: "h".into(),
            seed: None,
        },
    };
    model.validate()?;
    Ok(model)
}

/// `sigma + c^T z + sum_j d_j x_j^2 <= 4 x_{m-1} x_m` over `x >= 0`.
pub fn build_r(sigma: f64, c: &[f64], d: &[f64], m: usize, box_ub: f64) -> Result<MixedBinaryConicModel> {
    if m < 2 || d.len() != m - 2 {
        return Err(Error::Argument(format!(
            "R needs m >= 2 and {} d-coefficients, got {}",
            m.saturating_sub(2),
            d.len()
        )));
    }
    require_nonneg(&[sigma], "sigma")?;
    require_nonneg(c, "c")?;
    require_nonneg(d, "d")?;
    let f = SetFunction::SqrtAffine { sigma, c: c.to_vec() };
    check_function_nonneg(&f)?;

    let vars: Vec<ContinuousVar> = (0..m)
        .map(|j| plain_var(format!("x{}", j + 1), 0.0, box_ub))
        .collect();
    let model = MixedBinaryConicModel {
        version: MODEL_SCHEMA_VERSION,
        n: c.len(),
        vars,
        functions: vec![f],
        blocks: vec![r_type_block(d, (0..m).collect(), 0), orthant_block((0..m).collect())],
        linear: vec![],
        objective: Objective::default(),
        preloaded_cuts: vec![],
        meta: Meta {
            family: "r".into(),
            seed: None,
        },
    };
    model.validate()?;
    Ok(model)
}

/// Parameters of one constraint of `M`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConeParams {
    pub sigma: f64,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

/// Multiple H-type and R-type constraints over shared binaries and disjoint
/// continuous blocks.
pub fn build_m(
    h_params: &[ConeParams],
    r_params: &[ConeParams],
    m: usize,
    box_ub: f64,
) -> Result<MixedBinaryConicModel> {
    if h_params.is_empty() && r_params.is_empty() {
        return Err(Error::Argument("M needs at least one constraint".into()));
    }
    let n = h_params
        .iter()
        .chain(r_params)
        .map(|p| p.c.len())
        .next()
        .unwrap();
    if h_params.iter().chain(r_params).any(|p| p.c.len() != n) {
        return Err(Error::Argument("inconsistent n across constraints".into()));
    }

    let mut vars = Vec::new();
    let mut functions = Vec::new();
    let mut blocks = Vec::new();
    let mut next_col = 0usize;
    for (ell, (params, is_h)) in h_params
        .iter()
        .map(|p| (p, true))
        .chain(r_params.iter().map(|p| (p, false)))
        .enumerate()
    {
        require_nonneg(&[params.sigma], "sigma")?;
        require_nonneg(&params.c, "c")?;
        require_nonneg(&params.d, "d")?;
        let expected_d = if is_h { m - 1 } else { m - 2 };
        if params.d.len() != expected_d {
            return Err(Error::Argument(format!(
                "constraint {ell} needs {expected_d} d-coefficients"
            )));
        }
        let f = SetFunction::SqrtAffine {
            sigma: params.sigma,
            c: params.c.clone(),
        };
        check_function_nonneg(&f)?;
        functions.push(f);
        let cols: Vec<usize> = (next_col..next_col + m).collect();
        for j in 0..m {
            vars.push(plain_var(format!("x{}_{}", ell + 1, j + 1), 0.0, box_ub));
        }
        blocks.push(if is_h {
            h_type_block(&params.d, cols, ell)
        } else {
            r_type_block(&params.d, cols, ell)
        });
        next_col += m;
    }
    blocks.push(orthant_block((0..next_col).collect()));

    let model = MixedBinaryConicModel {
        version: MODEL_SCHEMA_VERSION,
        n,
        vars,
        functions,
        blocks,
        linear: vec![],
        objective: Objective::default(),
        preloaded_cuts: vec![],
        meta: Meta {
            family: "m".into(),
            seed: None,
        },
    };
    model.validate()?;
    Ok(model)
}

/// Sum-of-ratios binary program
/// `min sum_l (a0_l + a_l^T z) / (b0_l + b_l^T z)` over `z in X`,
/// reformulated per ratio as `4 a0 + 4 a^T z <= 4 u v`, `v = b0 + b^T z`,
/// objective `sum u`.
pub fn build_fractional(
    a0: &[f64],
    a: &[Vec<f64>],
    b0: &[f64],
    b: &[Vec<f64>],
    x_rows: Vec<LinearRow>,
    box_ub: f64,
) -> Result<MixedBinaryConicModel> {
    let r = a0.len();
    if r == 0 || a.len() != r || b0.len() != r || b.len() != r {
        return Err(Error::Argument("ratio parameter shape mismatch".into()));
    }
    let n = a[0].len();
    if a.iter().chain(b).any(|row| row.len() != n) {
        return Err(Error::Argument("inconsistent n across ratios".into()));
    }
    require_nonneg(a0, "a0")?;
    require_nonneg(b0, "b0")?;
    for row in a.iter().chain(b) {
        require_nonneg(row, "ratio coefficients")?;
    }
    if x_rows.iter().any(|row| !row.is_z_only()) {
        return Err(Error::Argument("X rows must involve only z".into()));
    }

    let mut vars = Vec::new();
    let mut functions = Vec::new();
    let mut blocks = Vec::new();
    let mut linear = x_rows;
    let mut obj_terms = Vec::new();

    for ell in 0..r {
        let f = SetFunction::SqrtAffine {
            sigma: 4.0 * a0[ell],
            c: a[ell].iter().map(|v| 4.0 * v).collect(),
        };
        check_function_nonneg(&f)?;
        functions.push(f);
        let u_col = vars.len();
        vars.push(plain_var(format!("u{}", ell + 1), 0.0, box_ub));
        let v_col = vars.len();
        vars.push(plain_var(format!("v{}", ell + 1), 0.0, box_ub));

        // (f(z), u, v) in the rotated cone: 4 a0 + 4 a^T z <= 4 u v.
        blocks.push(ModelBlock {
            block: ConicBlock {
                a: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
                b: vec![1.0, 0.0, 0.0],
                cone: Cone::RotatedSoc { dim: 3 },
                constant: None,
            },
            x_cols: vec![u_col, v_col],
            y_index: Some(ell),
            homog_col: None,
        });

        let mut terms = vec![(VarId::X(v_col), 1.0)];
        for (i, &bi) in b[ell].iter().enumerate() {
            if bi != 0.0 {
                terms.push((VarId::Z(i), -bi));
            }
        }
        linear.push(LinearRow::new(terms, Sense::Eq, b0[ell]));
        obj_terms.push((VarId::X(u_col), 1.0));
    }

    let model = MixedBinaryConicModel {
        version: MODEL_SCHEMA_VERSION,
        n,
        vars,
        functions,
        blocks,
        linear,
        objective: Objective::new(obj_terms),
        preloaded_cuts: vec![],
        meta: Meta {
            family: "fractional".into(),
            seed: None,
        },
    };
    model.validate()?;

    // Denominators must stay strictly positive on the admissible binaries.
    if n <= MAX_ENUM_N {
        for z in 0..1usize << n {
            if !model.z_only_rows_feasible(z) {
                continue;
            }
            for ell in 0..r {
                let denom = b0[ell]
                    + b[ell]
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| z >> i & 1 == 1)
                        .map(|(_, v)| v)
                        .sum::<f64>();
                if denom <= 0.0 {
                    return Err(Error::Argument(format!(
                        "denominator {ell} vanishes on admissible subset {z:#b}"
                    )));
                }
            }
        }
    }
    Ok(model)
}

/// Information criterion for best subset selection. All three use
/// `g(s) = exp(...)` of the selected-subset cardinality `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BssCriterion {
    /// `g(s) = exp(-alpha s)`.
    Aic { alpha: f64 },
    /// `g(s) = exp(-alpha s)` with the BIC weight baked into `alpha`.
    Bic { alpha: f64 },
    /// `g(s) = exp(-2 alpha / (alpha - s))`; needs `alpha > n`.
    Aicc { alpha: f64 },
}

/// Best subset selection: `min ||a - U beta||^2 / g(sum z)` with big-M
/// linking rows, reformulated as `min t` with the product constraint folded
/// into one homogenized second-order cone block.
pub fn build_bss(
    u_mat: &[Vec<f64>],
    a: &[f64],
    big_m: f64,
    criterion: BssCriterion,
    box_ub: f64,
) -> Result<MixedBinaryConicModel> {
    let k = u_mat.len();
    if k == 0 || a.len() != k {
        return Err(Error::Argument("data shape mismatch".into()));
    }
    let n = u_mat[0].len();
    if u_mat.iter().any(|row| row.len() != n) {
        return Err(Error::Argument("ragged design matrix".into()));
    }
    if big_m <= 0.0 {
        return Err(Error::Argument("big-M must be positive".into()));
    }

    let h = match criterion {
        BssCriterion::Aic { alpha } | BssCriterion::Bic { alpha } => {
            if alpha < 0.0 {
                return Err(Error::Argument("alpha must be nonnegative".into()));
            }
            SetFunction::ExpDecay { n, alpha }
        }
        BssCriterion::Aicc { alpha } => {
            if alpha <= n as f64 {
                return Err(Error::Argument(format!(
                    "corrected criterion needs alpha > n = {n} (pole inside the domain)"
                )));
            }
            if n > MAX_ENUM_N {
                return Err(Error::Capacity(format!(
                    "corrected criterion materializes a table; n = {n} exceeds {MAX_ENUM_N}"
                )));
            }
            let values = (0..1usize << n)
                .map(|s| {
                    let card = s.count_ones() as f64;
                    (-2.0 * alpha / (alpha - card)).exp()
                })
                .collect();
            SetFunction::Table { values }
        }
    };
    if !h.check_supermodular()?.is_submodular() {
        return Err(Error::Structure("criterion map is not supermodular".into()));
    }
    let f = h.to_submodular_complement()?;
    let h_max = match &f {
        SetFunction::Complement { h_max, .. } => *h_max,
        _ => unreachable!(),
    };

    // x = [t, v, beta_1, ..., beta_n].
    let mut vars = vec![
        plain_var("t".into(), 0.0, box_ub),
        ContinuousVar {
            name: "v".into(),
            lb: 0.0,
            ub: 2.0,
            role: VarRole::Homogenization,
            soft: false,
        },
    ];
    for i in 0..n {
        vars.push(ContinuousVar {
            name: format!("beta{}", i + 1),
            lb: -big_m,
            ub: big_m,
            role: VarRole::Plain,
            soft: false,
        });
    }

    // Rows (2 a_i v - 2 U_i beta), then (t - h_max v + y), (t + h_max v - y).
    let cols = n + 2;
    let dim = k + 2;
    let mut mat = vec![vec![0.0; cols]; dim];
    for i in 0..k {
        mat[i][1] = 2.0 * a[i];
        for j in 0..n {
            mat[i][2 + j] = -2.0 * u_mat[i][j];
        }
    }
    mat[k][0] = 1.0;
    mat[k][1] = -h_max;
    mat[k + 1][0] = 1.0;
    mat[k + 1][1] = h_max;
    let mut b = vec![0.0; dim];
    b[k] = 1.0;
    b[k + 1] = -1.0;

    let mut linear = vec![LinearRow::new(vec![(VarId::X(1), 1.0)], Sense::Eq, 1.0)];
    for i in 0..n {
        linear.push(LinearRow::new(
            vec![(VarId::X(2 + i), 1.0), (VarId::Z(i), -big_m)],
            Sense::Le,
            0.0,
        ));
        linear.push(LinearRow::new(
            vec![(VarId::X(2 + i), -1.0), (VarId::Z(i), -big_m)],
            Sense::Le,
            0.0,
        ));
    }

    let model = MixedBinaryConicModel {
        version: MODEL_SCHEMA_VERSION,
        n,
        vars,
        functions: vec![f],
        blocks: vec![ModelBlock {
            block: ConicBlock {
                a: mat,
                b,
                cone: Cone::Soc { dim },
                constant: None,
            },
            x_cols: (0..cols).collect(),
            y_index: Some(0),
            homog_col: Some(1),
        }],
        linear,
        objective: Objective::new(vec![(VarId::X(0), 1.0)]),
        preloaded_cuts: vec![],
        meta: Meta {
            family: "bss".into(),
            seed: None,
        },
    };
    model.validate()?;
    Ok(model)
}

/// Norm substructure `||[x; z; eta2]||_p <= t` with `x, t >= 0`, modeled as a
/// p-order cone over `(f(z), x, t)` with `f(z) = ||[z; eta2]||_p`.
pub fn build_drccp_norm(
    p: f64,
    eta1: u8,
    eta2: u8,
    m: usize,
    n: usize,
    box_ub: f64,
) -> Result<MixedBinaryConicModel> {
    if eta1 != 1 {
        return Err(Error::Argument(
            "eta1 = 0 leaves no binaries inside the norm; nothing to strengthen".into(),
        ));
    }
    if eta2 > 1 {
        return Err(Error::Argument("eta2 must be 0 or 1".into()));
    }
    if p < 1.0 {
        return Err(Error::Argument("p must be >= 1".into()));
    }
    let f = SetFunction::PNormAugmented { n, p, eta2 };
    check_function_nonneg(&f)?;

    // Variables x_1..x_m then t (last).
    let mut vars: Vec<ContinuousVar> = (0..m)
        .map(|j| plain_var(format!("x{}", j + 1), 0.0, box_ub))
        .collect();
    vars.push(plain_var("t".into(), 0.0, box_ub));

    let cols = m + 1;
    let dim = m + 2;
    let mut mat = vec![vec![0.0; cols]; dim];
    for j in 0..cols {
        mat[j + 1][j] = 1.0;
    }
    let model = MixedBinaryConicModel {
        version: MODEL_SCHEMA_VERSION,
        n,
        vars,
        functions: vec![f],
        blocks: vec![
            ModelBlock {
                block: ConicBlock {
                    a: mat,
                    b: first_unit(dim),
                    cone: Cone::POrder { p, dim },
                    constant: None,
                },
                x_cols: (0..cols).collect(),
                y_index: Some(0),
                homog_col: None,
            },
            orthant_block((0..cols).collect()),
        ],
        linear: vec![],
        objective: Objective::default(),
        preloaded_cuts: vec![],
        meta: Meta {
            family: "drccp".into(),
            seed: None,
        },
    };
    model.validate()?;
    Ok(model)
}

/// Two-variable worked example: `sqrt(x1^2 + z1 + z2) <= x2 - 1`, homogenized
/// with `v = 1` and shipped with both polymatroid cuts of its function.
pub fn build_example1() -> Result<MixedBinaryConicModel> {
    let f = SetFunction::SqrtAffine {
        sigma: 0.0,
        c: vec![1.0, 1.0],
    };
    let raw = ConicBlock {
        a: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
        b: vec![1.0, 0.0, 0.0],
        cone: Cone::Soc { dim: 3 },
        constant: Some(vec![0.0, 0.0, -1.0]),
    };
    let (block, new_col) = homogenize(&raw);
    let homog_col = new_col.expect("constant is nonzero");

    let vars = vec![
        plain_var("x1".into(), -DEFAULT_BOX, DEFAULT_BOX),
        plain_var("x2".into(), -DEFAULT_BOX, DEFAULT_BOX),
        ContinuousVar {
            name: "v".into(),
            lb: 0.0,
            ub: 2.0,
            role: VarRole::Homogenization,
            soft: false,
        },
    ];
    let cuts = vec![
        vertex_from_permutation(&f, &[0, 1])?,
        vertex_from_permutation(&f, &[1, 0])?,
    ];
    let model = MixedBinaryConicModel {
        version: MODEL_SCHEMA_VERSION,
        n: 2,
        vars,
        functions: vec![f],
        blocks: vec![ModelBlock {
            block,
            x_cols: vec![0, 1, 2],
            y_index: Some(0),
            homog_col: Some(homog_col),
        }],
        linear: vec![LinearRow::new(vec![(VarId::X(2), 1.0)], Sense::Eq, 1.0)],
        objective: Objective::new(vec![(VarId::X(1), 1.0)]),
        preloaded_cuts: cuts
            .into_iter()
            .map(|cut| PreloadedCut { y: 0, cut })
            .collect(),
        meta: Meta {
            family: "example1".into(),
            seed: None,
        },
    };
    model.validate()?;
    Ok(model)
}

/// Crafted instance on which the scaling-closure condition fails:
/// `f(z) - x >= 0` with `f` constant 1, so `x = 1` is feasible but any
/// scaled `alpha x` with `alpha > 1` is not.
pub fn build_condstar_fail() -> Result<MixedBinaryConicModel> {
    let model = MixedBinaryConicModel {
        version: MODEL_SCHEMA_VERSION,
        n: 1,
        vars: vec![plain_var("x1".into(), 0.0, 10.0)],
        functions: vec![SetFunction::Table {
            values: vec![1.0, 1.0],
        }],
        blocks: vec![ModelBlock {
            block: ConicBlock {
                a: vec![vec![-1.0]],
                b: vec![1.0],
                cone: Cone::NonnegOrthant { dim: 1 },
                constant: None,
            },
            x_cols: vec![0],
            y_index: Some(0),
            homog_col: None,
        }],
        linear: vec![],
        objective: Objective::new(vec![(VarId::X(0), -1.0)]),
        preloaded_cuts: vec![],
        meta: Meta {
            family: "condstar_fail".into(),
            seed: None,
        },
    };
    model.validate()?;
    Ok(model)
}

// ---------------------------------------------------------------------------
// Seeded random instances used by the CLI generator and the test harnesses.
// ---------------------------------------------------------------------------

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_h(n: usize, m: usize, seed: u64) -> Result<MixedBinaryConicModel> {
    let mut rng = rng_for(seed);
    let sigma = rng.gen_range(0.0..2.0);
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();
    let d: Vec<f64> = (0..m - 1).map(|_| rng.gen_range(0.25..4.0)).collect();
    let mut model = build_h(sigma, &c, &d, m, DEFAULT_BOX)?;
    model.meta.seed = Some(seed);
    Ok(model)
}

pub fn random_r(n: usize, m: usize, seed: u64) -> Result<MixedBinaryConicModel> {
    let mut rng = rng_for(seed);
    let sigma = rng.gen_range(0.0..2.0);
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();
    let d: Vec<f64> = (0..m - 2).map(|_| rng.gen_range(0.25..4.0)).collect();
    let mut model = build_r(sigma, &c, &d, m, DEFAULT_BOX)?;
    model.meta.seed = Some(seed);
    Ok(model)
}

pub fn random_m(
    num_h: usize,
    num_r: usize,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<MixedBinaryConicModel> {
    let mut rng = rng_for(seed);
    let mut draw = |d_len: usize| ConeParams {
        sigma: rng.gen_range(0.0..2.0),
        c: (0..n).map(|_| rng.gen_range(0.2..2.0)).collect(),
        d: (0..d_len).map(|_| rng.gen_range(0.25..4.0)).collect(),
    };
    let h_params: Vec<ConeParams> = (0..num_h).map(|_| draw(m - 1)).collect();
    let r_params: Vec<ConeParams> = (0..num_r).map(|_| draw(m - 2)).collect();
    let mut model = build_m(&h_params, &r_params, m, DEFAULT_BOX)?;
    model.meta.seed = Some(seed);
    Ok(model)
}

pub fn random_fractional(num_ratios: usize, n: usize, seed: u64) -> Result<MixedBinaryConicModel> {
    let mut rng = rng_for(seed);
    let a0: Vec<f64> = (0..num_ratios).map(|_| rng.gen_range(0.1..2.0)).collect();
    let b0: Vec<f64> = (0..num_ratios).map(|_| rng.gen_range(0.5..2.0)).collect();
    let a: Vec<Vec<f64>> = (0..num_ratios)
        .map(|_| (0..n).map(|_| rng.gen_range(0.0..2.0)).collect())
        .collect();
    let b: Vec<Vec<f64>> = (0..num_ratios)
        .map(|_| (0..n).map(|_| rng.gen_range(0.0..2.0)).collect())
        .collect();
    let mut model = build_fractional(&a0, &a, &b0, &b, vec![], DEFAULT_BOX)?;
    model.meta.seed = Some(seed);
    Ok(model)
}

pub fn random_bss(
    k: usize,
    n: usize,
    criterion: BssCriterion,
    seed: u64,
) -> Result<MixedBinaryConicModel> {
    let mut rng = rng_for(seed);
    let u_mat: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let a: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut model = build_bss(&u_mat, &a, 1e3, criterion, DEFAULT_BOX)?;
    model.meta.seed = Some(seed);
    Ok(model)
}

pub fn random_drccp(p: f64, eta2: u8, m: usize, n: usize, seed: u64) -> Result<MixedBinaryConicModel> {
    let mut model = build_drccp_norm(p, 1, eta2, m, n, DEFAULT_BOX)?;
    model.meta.seed = Some(seed);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{model_condition_star, StarCheck, StarPattern};
    use approx::assert_relative_eq;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    #[test]
    fn h_block_layout() {
        let model = build_h(0.0, &[1.0, 1.0], &[1.0, 4.0], 3, DEFAULT_BOX).unwrap();
        let block = &model.blocks[0].block;
        assert_eq!(block.cone, Cone::Soc { dim: 4 });
        assert_relative_eq!(block.a[1][0], 1.0);
        assert_relative_eq!(block.a[2][1], 2.0);
        assert_relative_eq!(block.a[3][2], 1.0);
        assert_eq!(block.b, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(model_condition_star(&model), StarCheck::Holds(StarPattern::P1));
    }

    #[test]
    fn degenerate_h_is_epigraph_bound() {
        let model = build_h(0.0, &[1.0, 1.0], &[], 1, DEFAULT_BOX).unwrap();
        let block = &model.blocks[0].block;
        assert_eq!(block.cone, Cone::Soc { dim: 2 });
        assert_eq!(block.a, vec![vec![0.0], vec![1.0]]);
    }

    #[test]
    fn r_block_maps_to_soc_vector() {
        let model = build_r(1.0, &[1.0], &[], 2, DEFAULT_BOX).unwrap();
        let mb = &model.blocks[0];
        assert_eq!(mb.block.cone, Cone::RotatedSoc { dim: 3 });
        // (y, x1, x2) with y = f(z): membership means y^2 <= 4 x1 x2.
        let v = mb.block.vector(&[1.0, 1.0], Some(2.0));
        assert_eq!(v, vec![2.0, 1.0, 1.0]);
        assert_eq!(model_condition_star(&model), StarCheck::Holds(StarPattern::P1));
    }

    #[test]
    fn m_shares_binaries_across_disjoint_blocks() {
        let h = ConeParams {
            sigma: 0.5,
            c: vec![1.0, 2.0],
            d: vec![1.0],
        };
        let r = ConeParams {
            sigma: 1.0,
            c: vec![0.5, 0.5],
            d: vec![],
        };
        let model = build_m(&[h], &[r], 2, DEFAULT_BOX).unwrap();
        assert_eq!(model.functions.len(), 2);
        assert_eq!(model.n, 2);
        assert_eq!(model.blocks.len(), 3); // two conic + one orthant
        assert_eq!(model.blocks[0].x_cols, vec![0, 1]);
        assert_eq!(model.blocks[1].x_cols, vec![2, 3]);
        assert_eq!(model_condition_star(&model), StarCheck::Holds(StarPattern::P1));
    }

    #[test]
    fn fractional_structure() {
        let model = build_fractional(
            &[1.0],
            &[vec![1.0, 0.0]],
            &[1.0],
            &[vec![0.0, 1.0]],
            vec![],
            DEFAULT_BOX,
        )
        .unwrap();
        assert_eq!(model.functions.len(), 1);
        match &model.functions[0] {
            SetFunction::SqrtAffine { sigma, c } => {
                assert_relative_eq!(*sigma, 4.0);
                assert_eq!(c, &vec![4.0, 0.0]);
            }
            other => panic!("unexpected function {other:?}"),
        }
        assert_eq!(model.linear.len(), 1);
        assert_eq!(model.linear[0].sense, Sense::Eq);
    }

    #[test]
    fn fractional_rejects_vanishing_denominator() {
        let err = build_fractional(
            &[1.0],
            &[vec![1.0]],
            &[0.0],
            &[vec![1.0]],
            vec![],
            DEFAULT_BOX,
        );
        assert!(err.is_err());
    }

    #[test]
    fn bss_block_shape() {
        let model = build_bss(
            &[vec![1.0]],
            &[1.0],
            10.0,
            BssCriterion::Aic { alpha: 0.5 },
            DEFAULT_BOX,
        )
        .unwrap();
        let mb = &model.blocks[0];
        // B = (0_k, +1, -1).
        assert_eq!(mb.block.b, vec![0.0, 1.0, -1.0]);
        assert_eq!(mb.homog_col, Some(1));
        assert_eq!(model_condition_star(&model), StarCheck::Holds(StarPattern::P2));
        // h_max of the decay map is at the empty set: 1.
        match &model.functions[0] {
            SetFunction::Complement { h_max, .. } => assert_relative_eq!(*h_max, 1.0),
            other => panic!("unexpected function {other:?}"),
        }
    }

    #[test]
    fn aicc_domain_guard() {
        let err = build_bss(
            &[vec![1.0, 1.0]],
            &[1.0],
            10.0,
            BssCriterion::Aicc { alpha: 1.5 },
            DEFAULT_BOX,
        );
        assert!(matches!(err, Err(Error::Argument(_))));
        let ok = build_bss(
            &[vec![1.0, 1.0]],
            &[1.0],
            10.0,
            BssCriterion::Aicc { alpha: 5.0 },
            DEFAULT_BOX,
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn drccp_structure() {
        let model = build_drccp_norm(2.0, 1, 1, 0, 2, DEFAULT_BOX).unwrap();
        match &model.functions[0] {
            SetFunction::PNormAugmented { n, p, eta2 } => {
                assert_eq!((*n, *eta2), (2, 1));
                assert_relative_eq!(*p, 2.0);
            }
            other => panic!("unexpected function {other:?}"),
        }
        // f(z) = sqrt(z1 + z2 + 1).
        assert_relative_eq!(model.functions[0].evaluate(0b11), 3.0_f64.sqrt());
        assert_eq!(model_condition_star(&model), StarCheck::Holds(StarPattern::P1));
        assert!(build_drccp_norm(2.0, 0, 1, 0, 2, DEFAULT_BOX).is_err());
    }

    #[test]
    fn example1_cuts_and_feasibility() {
        let model = build_example1().unwrap();
        assert_eq!(model.preloaded_cuts.len(), 2);
        let pis: Vec<&Vec<f64>> = model.preloaded_cuts.iter().map(|c| &c.cut.pi).collect();
        assert_relative_eq!(pis[0][0], 1.0);
        assert_relative_eq!(pis[0][1], SQRT2 - 1.0);
        assert_relative_eq!(pis[1][0], SQRT2 - 1.0);
        assert_relative_eq!(pis[1][1], 1.0);
        assert!(model.preloaded_cuts.iter().all(|c| c.cut.offset == 0.0));

        // The homogenized block is not pattern-certifiable.
        assert_eq!(model_condition_star(&model), StarCheck::Unknown);

        // Midpoint candidate: x = (0, 1 + sqrt(0.5), 1), y = sqrt(2)/2.
        let mb = &model.blocks[0];
        let x = [0.0, 1.0 + 0.5_f64.sqrt(), 1.0];
        let v = mb.block.vector(&x, Some(SQRT2 / 2.0));
        let r = mb.block.cone.residual(&v).unwrap();
        assert!(r.abs() <= 1e-12, "residual {r}");

        // Same point with x2 = 1.5 is infeasible by sqrt(0.5) - 0.5.
        let x_bad = [0.0, 1.5, 1.0];
        let v = mb.block.vector(&x_bad, Some(SQRT2 / 2.0));
        let r = mb.block.cone.residual(&v).unwrap();
        assert_relative_eq!(r, 0.5_f64.sqrt() - 0.5, epsilon = 1e-12);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for model in [
            build_h(0.0, &[1.0, 1.0], &[1.0, 4.0], 3, DEFAULT_BOX).unwrap(),
            build_example1().unwrap(),
            random_bss(3, 2, BssCriterion::Bic { alpha: 0.3 }, 11).unwrap(),
        ] {
            let path = dir.path().join(format!("{}.json", model.meta.family));
            model.save(&path).unwrap();
            let back = MixedBinaryConicModel::load(&path).unwrap();
            assert_eq!(back, model);
        }
    }

    #[test]
    fn load_rejects_bad_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");

        // Malformed cone tag.
        std::fs::write(
            &path,
            r#"{"version":1,"n":1,"vars":[],"functions":[],"blocks":[{"A":[[1.0]],"B":[0.0],"cone":{"tag":"mystery","dim":1},"x_cols":[0],"y":null}],"linear":[],"objective":{"terms":[],"constant":0.0},"meta":{"family":"x"}}"#,
        )
        .unwrap();
        assert!(MixedBinaryConicModel::load(&path).is_err());

        // Wrong version.
        let mut model = build_condstar_fail().unwrap();
        model.version = 7;
        let text = serde_json::to_string(&model).unwrap();
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            MixedBinaryConicModel::load(&path),
            Err(Error::Structure(_))
        ));
    }

    #[test]
    fn builder_functions_are_nonnegative_and_submodular() {
        let models = [
            random_h(4, 2, 3).unwrap(),
            random_r(3, 3, 4).unwrap(),
            random_m(1, 1, 3, 2, 5).unwrap(),
            random_fractional(2, 3, 6).unwrap(),
            random_bss(4, 3, BssCriterion::Aic { alpha: 0.4 }, 7).unwrap(),
            random_drccp(2.0, 1, 2, 3, 8).unwrap(),
        ];
        for model in &models {
            for f in &model.functions {
                assert!(f.check_nonnegative().unwrap().is_nonnegative());
                assert!(f.check_submodular().unwrap().is_submodular());
            }
        }
    }
}
