//! Nonnegative set functions `f : {0,1}^n -> R+` given in closed form or as an
//! explicit value table, plus the exhaustive desk-scale checks (submodularity,
//! nonnegativity, extrema) and the complement / shift transformations that
//! turn supermodular or sign-mixed functions into nonnegative submodular ones.

use crate::{Error, Result, DEFAULT_TOL_FEAS, MAX_ENUM_N};
use serde::{Deserialize, Serialize};

/// Subsets of `[n]` are bitmasks; bit `i` is variable `i` (0-indexed).
pub type Subset = usize;

/// Scalar concave maps available for `ConcaveOfAffine`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcaveMap {
    Sqrt,
    Log1p,
    /// `s -> s^rho` with `rho` in (0,1).
    Power(f64),
}

impl ConcaveMap {
    fn apply(self, s: f64) -> f64 {
        match self {
            ConcaveMap::Sqrt => s.sqrt(),
            ConcaveMap::Log1p => s.ln_1p(),
            ConcaveMap::Power(rho) => s.powf(rho),
        }
    }
}

/// A set function spec. The number of binary variables is implied by the
/// variant (`c.len()`, `log2(values.len())`, or an explicit `n` field).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SetFunction {
    /// `f(z) = sqrt(sigma + c^T z)`.
    SqrtAffine { sigma: f64, c: Vec<f64> },
    /// `f(z) = g(sigma + c^T z)` for a concave scalar map `g`.
    ConcaveOfAffine {
        g: ConcaveMap,
        sigma: f64,
        c: Vec<f64>,
    },
    /// `f(z) = ||[z; eta2]||_p`, the norm of the binary vector optionally
    /// augmented by a constant 1 entry.
    PNormAugmented { n: usize, p: f64, eta2: u8 },
    /// `h(z) = exp(-alpha * sum_i z_i)`; nonnegative, non-increasing,
    /// supermodular.
    ExpDecay { n: usize, alpha: f64 },
    /// Explicit values indexed by subset bitmask (length `2^n`).
    Table { values: Vec<f64> },
    /// `f = h_max - inner`, the complement that turns a nonnegative
    /// supermodular `inner` into a nonnegative submodular function.
    Complement { inner: Box<SetFunction>, h_max: f64 },
    /// `f = inner - delta`; with `delta = inner(empty set)` this is the
    /// shifted function used by the polyhedron of valid cut coefficients.
    Shifted { inner: Box<SetFunction>, delta: f64 },
}

/// Outcome of the exhaustive submodularity check.
#[derive(Debug, Clone, PartialEq)]
pub enum SubmodularityCheck {
    Submodular,
    /// Witness pair with `f(S) + f(T) < f(S ∪ T) + f(S ∩ T)`;
    /// `gap = f(S∪T) + f(S∩T) - f(S) - f(T) > 0`.
    Violated { s: Subset, t: Subset, gap: f64 },
}

impl SubmodularityCheck {
    pub fn is_submodular(&self) -> bool {
        matches!(self, SubmodularityCheck::Submodular)
    }
}

/// Outcome of the exhaustive nonnegativity check.
#[derive(Debug, Clone, PartialEq)]
pub enum NonnegativityCheck {
    Nonnegative,
    Violated { subset: Subset, value: f64 },
}

impl NonnegativityCheck {
    pub fn is_nonnegative(&self) -> bool {
        matches!(self, NonnegativityCheck::Nonnegative)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    Max,
    Min,
}

impl SetFunction {
    /// Number of binary variables.
    pub fn n(&self) -> usize {
        match self {
            SetFunction::SqrtAffine { c, .. } | SetFunction::ConcaveOfAffine { c, .. } => c.len(),
            SetFunction::PNormAugmented { n, .. } | SetFunction::ExpDecay { n, .. } => *n,
            SetFunction::Table { values } => values.len().trailing_zeros() as usize,
            SetFunction::Complement { inner, .. } | SetFunction::Shifted { inner, .. } => inner.n(),
        }
    }

    /// Structural validation: parameter signs, table lengths, finite entries.
    pub fn validate(&self) -> Result<()> {
        match self {
            SetFunction::SqrtAffine { sigma, c } => {
                require(c.iter().all(|v| v.is_finite()), "non-finite coefficient")?;
                require(*sigma >= 0.0, "sigma must be nonnegative")?;
                require(c.iter().all(|&v| v >= 0.0), "c must be nonnegative")?;
            }
            SetFunction::ConcaveOfAffine { g, sigma, c } => {
                require(c.iter().all(|v| v.is_finite()), "non-finite coefficient")?;
                require(*sigma >= 0.0, "sigma must be nonnegative")?;
                require(c.iter().all(|&v| v >= 0.0), "c must be nonnegative")?;
                if let ConcaveMap::Power(rho) = g {
                    require(*rho > 0.0 && *rho < 1.0, "power exponent must be in (0,1)")?;
                }
            }
            SetFunction::PNormAugmented { p, eta2, .. } => {
                require(*p >= 1.0, "p must be >= 1")?;
                require(*eta2 <= 1, "eta2 must be 0 or 1")?;
            }
            SetFunction::ExpDecay { alpha, .. } => {
                require(*alpha >= 0.0, "alpha must be nonnegative")?;
            }
            SetFunction::Table { values } => {
                if values.is_empty() || !values.len().is_power_of_two() {
                    return Err(Error::Structure(format!(
                        "table length {} is not a power of two",
                        values.len()
                    )));
                }
                require(values.iter().all(|v| v.is_finite()), "non-finite table value")?;
            }
            SetFunction::Complement { inner, h_max } => {
                require(h_max.is_finite(), "non-finite h_max")?;
                inner.validate()?;
            }
            SetFunction::Shifted { inner, delta } => {
                require(delta.is_finite(), "non-finite delta")?;
                inner.validate()?;
            }
        }
        Ok(())
    }

    /// Evaluates `f` at the characteristic vector of `subset`.
    ///
    /// The function must be validated; `subset` must be below `2^n`.
    pub fn evaluate(&self, subset: Subset) -> f64 {
        debug_assert!(subset < (1usize << self.n()));
        match self {
            SetFunction::SqrtAffine { sigma, c } => {
                (sigma + masked_sum(c, subset)).sqrt()
            }
            SetFunction::ConcaveOfAffine { g, sigma, c } => {
                g.apply(sigma + masked_sum(c, subset))
            }
            SetFunction::PNormAugmented { p, eta2, .. } => {
                // Entries are 0/1, so z_i^p = z_i and the norm reduces to
                // (|subset| + eta2)^(1/p).
                let card = subset.count_ones() as f64 + f64::from(*eta2);
                card.powf(1.0 / p)
            }
            SetFunction::ExpDecay { alpha, .. } => {
                (-alpha * subset.count_ones() as f64).exp()
            }
            SetFunction::Table { values } => values[subset],
            SetFunction::Complement { inner, h_max } => h_max - inner.evaluate(subset),
            SetFunction::Shifted { inner, delta } => inner.evaluate(subset) - delta,
        }
    }

    /// Value on the empty set, `f(∅)`.
    pub fn value_empty(&self) -> f64 {
        self.evaluate(0)
    }

    /// Materializes all `2^n` values in bitmask order.
    pub fn table(&self) -> Result<Vec<f64>> {
        let n = self.n();
        check_capacity(n)?;
        Ok((0..1usize << n).map(|s| self.evaluate(s)).collect())
    }

    /// Exhaustive submodularity check via marginal monotonicity: the marginal
    /// `f(S ∪ {i}) - f(S)` may not increase when `S` grows by one element.
    /// Runs in `O(2^n n^2)` over a materialized table; rejects `n > 16`.
    pub fn check_submodular(&self) -> Result<SubmodularityCheck> {
        let n = self.n();
        let table = self.table()?;
        Ok(check_submodular_table(n, &table, DEFAULT_TOL_FEAS))
    }

    /// Exhaustive check that `f(z) >= -tol` on every subset.
    pub fn check_nonnegative(&self) -> Result<NonnegativityCheck> {
        let table = self.table()?;
        for (subset, &value) in table.iter().enumerate() {
            if value < -DEFAULT_TOL_FEAS {
                return Ok(NonnegativityCheck::Violated { subset, value });
            }
        }
        Ok(NonnegativityCheck::Nonnegative)
    }

    /// Exact extremum over all subsets by enumeration.
    pub fn extremal_value(&self, mode: Extremum) -> Result<f64> {
        let table = self.table()?;
        let ext = table
            .into_iter()
            .reduce(|a, b| match mode {
                Extremum::Max => a.max(b),
                Extremum::Min => a.min(b),
            })
            .expect("table is never empty");
        Ok(ext)
    }

    /// Wraps a nonnegative supermodular `h` as `f = h_max - h`, which is
    /// nonnegative and submodular. The caller is responsible for checking
    /// supermodularity (see [`SetFunction::check_supermodular`]).
    pub fn to_submodular_complement(&self) -> Result<SetFunction> {
        let h_max = self.extremal_value(Extremum::Max)?;
        Ok(SetFunction::Complement {
            inner: Box::new(self.clone()),
            h_max,
        })
    }

    /// Supermodularity check, i.e. submodularity of `-h`.
    pub fn check_supermodular(&self) -> Result<SubmodularityCheck> {
        let n = self.n();
        let neg: Vec<f64> = self.table()?.iter().map(|v| -v).collect();
        Ok(check_submodular_table(n, &neg, DEFAULT_TOL_FEAS))
    }
}

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Structure(msg.to_string()))
    }
}

fn check_capacity(n: usize) -> Result<()> {
    if n > MAX_ENUM_N {
        return Err(Error::Capacity(format!(
            "n = {n} exceeds the exhaustive enumeration bound {MAX_ENUM_N}"
        )));
    }
    Ok(())
}

#[inline]
fn masked_sum(c: &[f64], subset: Subset) -> f64 {
    let mut acc = 0.0;
    for (i, &ci) in c.iter().enumerate() {
        if subset & (1 << i) != 0 {
            acc += ci;
        }
    }
    acc
}

/// Marginal-monotonicity submodularity test on a value table.
///
/// Reports the first witness in (S, i, j) scan order as the classical pair
/// form `S_1 = S ∪ {i}`, `S_2 = S ∪ {j}`.
pub(crate) fn check_submodular_table(n: usize, table: &[f64], tol: f64) -> SubmodularityCheck {
    for s in 0..1usize << n {
        for i in 0..n {
            if s & (1 << i) != 0 {
                continue;
            }
            let si = s | (1 << i);
            let marginal_at_s = table[si] - table[s];
            for j in 0..n {
                if j == i || s & (1 << j) != 0 {
                    continue;
                }
                let sj = s | (1 << j);
                let marginal_at_sj = table[si | sj] - table[sj];
                let gap = marginal_at_sj - marginal_at_s;
                if gap > tol {
                    return SubmodularityCheck::Violated { s: si, t: sj, gap };
                }
            }
        }
    }
    SubmodularityCheck::Submodular
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sqrt_affine(sigma: f64, c: &[f64]) -> SetFunction {
        SetFunction::SqrtAffine {
            sigma,
            c: c.to_vec(),
        }
    }

    #[test]
    fn evaluate_sqrt_affine() {
        let f = sqrt_affine(0.0, &[1.0, 1.0]);
        assert_relative_eq!(f.evaluate(0b11), 2.0_f64.sqrt());
        assert_eq!(f.evaluate(0), 0.0);
    }

    #[test]
    fn evaluate_exp_decay() {
        let f = SetFunction::ExpDecay { n: 3, alpha: 0.5 };
        // Two selected variables: exp(-0.5 * 2) = exp(-1).
        assert_relative_eq!(f.evaluate(0b011), (-1.0_f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn sqrt_affine_is_submodular() {
        let f = sqrt_affine(1.0, &[2.0, 3.0]);
        assert!(f.check_submodular().unwrap().is_submodular());
    }

    #[test]
    fn product_table_is_not_submodular() {
        // f(z) = z1 * z2 on two variables.
        let f = SetFunction::Table {
            values: vec![0.0, 0.0, 0.0, 1.0],
        };
        match f.check_submodular().unwrap() {
            SubmodularityCheck::Violated { s, t, gap } => {
                assert_eq!((s, t), (0b01, 0b10));
                assert_relative_eq!(gap, 1.0);
            }
            SubmodularityCheck::Submodular => panic!("expected a violation"),
        }
    }

    #[test]
    fn p_norm_augmented_is_submodular() {
        let f = SetFunction::PNormAugmented { n: 3, p: 2.0, eta2: 1 };
        assert!(f.check_submodular().unwrap().is_submodular());
    }

    #[test]
    fn nonnegativity_check() {
        assert!(sqrt_affine(0.5, &[1.0, 1.0])
            .check_nonnegative()
            .unwrap()
            .is_nonnegative());

        let shifted = SetFunction::Shifted {
            inner: Box::new(sqrt_affine(0.0, &[1.0, 1.0])),
            delta: 1.0,
        };
        match shifted.check_nonnegative().unwrap() {
            NonnegativityCheck::Violated { subset, value } => {
                assert_eq!(subset, 0);
                assert_relative_eq!(value, -1.0);
            }
            NonnegativityCheck::Nonnegative => panic!("expected a violation"),
        }

        let complement = SetFunction::ExpDecay { n: 3, alpha: 1.0 }
            .to_submodular_complement()
            .unwrap();
        assert!(complement.check_nonnegative().unwrap().is_nonnegative());
    }

    #[test]
    fn extrema_of_exp_decay() {
        let f = SetFunction::ExpDecay { n: 3, alpha: 0.5 };
        assert_relative_eq!(f.extremal_value(Extremum::Max).unwrap(), 1.0);
        assert_relative_eq!(
            f.extremal_value(Extremum::Min).unwrap(),
            (-1.5_f64).exp(),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            sqrt_affine(0.0, &[1.0, 1.0])
                .extremal_value(Extremum::Min)
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn complement_of_exp_decay() {
        let h = SetFunction::ExpDecay { n: 2, alpha: 1.0 };
        let f = h.to_submodular_complement().unwrap();
        let e1 = (-1.0_f64).exp();
        let e2 = (-2.0_f64).exp();
        let expect = [0.0, 1.0 - e1, 1.0 - e1, 1.0 - e2];
        let table = f.table().unwrap();
        for (got, want) in table.iter().zip(expect) {
            assert_relative_eq!(*got, want, epsilon = 1e-15);
        }
        assert!(f.check_submodular().unwrap().is_submodular());
        assert!(f.check_nonnegative().unwrap().is_nonnegative());
    }

    #[test]
    fn complement_of_product_table() {
        let h = SetFunction::Table {
            values: vec![0.0, 0.0, 0.0, 1.0],
        };
        assert!(h.check_supermodular().unwrap().is_submodular());
        let f = h.to_submodular_complement().unwrap();
        assert_eq!(f.table().unwrap(), vec![1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn complement_of_modular_stays_modular() {
        // Modular h: marginals constant, so both h and -h are submodular.
        let h = SetFunction::Table {
            values: vec![0.0, 2.0, 3.0, 5.0],
        };
        let f = h.to_submodular_complement().unwrap();
        assert!(f.check_submodular().unwrap().is_submodular());
        assert!(f.check_supermodular().unwrap().is_submodular());
    }

    #[test]
    fn capacity_errors() {
        let f = SetFunction::ExpDecay { n: 24, alpha: 0.1 };
        assert!(matches!(f.check_submodular(), Err(Error::Capacity(_))));
        assert!(matches!(f.extremal_value(Extremum::Max), Err(Error::Capacity(_))));
    }

    #[test]
    fn table_length_must_be_power_of_two() {
        let f = SetFunction::Table {
            values: vec![0.0, 1.0, 2.0],
        };
        assert!(matches!(f.validate(), Err(Error::Structure(_))));
    }

    #[test]
    fn shifted_by_empty_value_is_zero_at_empty() {
        let inner = sqrt_affine(2.0, &[1.0, 0.5]);
        let f = SetFunction::Shifted {
            inner: Box::new(inner.clone()),
            delta: inner.value_empty(),
        };
        assert_relative_eq!(f.value_empty(), 0.0);
    }

    #[test]
    fn json_round_trip_matches_schema() {
        let f = sqrt_affine(0.0, &[1.0, 1.0]);
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(json, r#"{"family":"sqrt_affine","sigma":0.0,"c":[1.0,1.0]}"#);
        let back: SetFunction = serde_json::from_str(&json).unwrap();
        assert_eq!(back, f);

        let t = SetFunction::Table {
            values: vec![0.0, 1.0],
        };
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, r#"{"family":"table","values":[0.0,1.0]}"#);
    }
}
