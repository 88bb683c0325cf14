//! Semantic-operator cost Γ, classic cost χ, token estimation and plan
//! selection.
//!
//! Γ(o) = C_in·t_in + C_out·t_out + λ / (A_in·t_in + A_out·t_out) prices a
//! model-backed operator; χ(o) is a cardinality cost for classic operators,
//! scaled by `chi_weight` into the same currency unit. A plan's total is
//! ΣΓ + Σχ·chi_weight and is affine in λ.

mod estimate;

pub use estimate::{annotate, estimate_tokens, plan_cost, select_plan, CostModel, PlanCost, Selection};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-model accuracy and price coefficients, per token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    pub a_input: f64,
    pub a_output: f64,
    pub c_input: f64,
    pub c_output: f64,
}

impl CostMatrix {
    pub fn new(a_input: f64, a_output: f64, c_input: f64, c_output: f64) -> Result<CostMatrix> {
        let m = CostMatrix {
            a_input,
            a_output,
            c_input,
            c_output,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.a_input, self.a_output, self.c_input, self.c_output];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Cost("cost matrix entries must be finite".into()));
        }
        if self.a_input <= 0.0 || self.a_output <= 0.0 {
            return Err(Error::Cost("accuracy coefficients must be positive".into()));
        }
        if self.c_input < 0.0 || self.c_output < 0.0 {
            return Err(Error::Cost("prices must be non-negative".into()));
        }
        Ok(())
    }

    /// Currency cost of a token vector.
    pub fn price(&self, t: TokenVector) -> f64 {
        self.c_input * t.t_input as f64 + self.c_output * t.t_output as f64
    }

    /// Accuracy mass A·t.
    pub fn accuracy(&self, t: TokenVector) -> f64 {
        self.a_input * t.t_input as f64 + self.a_output * t.t_output as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenVector {
    pub t_input: u64,
    pub t_output: u64,
}

impl TokenVector {
    pub fn new(t_input: u64, t_output: u64) -> TokenVector {
        TokenVector { t_input, t_output }
    }

    pub fn is_zero(&self) -> bool {
        self.t_input == 0 && self.t_output == 0
    }

    pub fn total(&self) -> u64 {
        self.t_input + self.t_output
    }
}

impl std::ops::Add for TokenVector {
    type Output = TokenVector;
    fn add(self, o: TokenVector) -> TokenVector {
        TokenVector::new(self.t_input + o.t_input, self.t_output + o.t_output)
    }
}

impl std::ops::AddAssign for TokenVector {
    fn add_assign(&mut self, o: TokenVector) {
        *self = *self + o;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub lambda: f64,
    /// Currency per abstract classic cost unit.
    pub chi_weight: f64,
    pub chars_per_token: f64,
    /// Selectivity of filters and semantic joins.
    pub default_selectivity: f64,
    pub max_plans: usize,
    /// Fixed prompt overhead of one semantic operator.
    pub template_tokens: u64,
    /// Join output is capped at max(N_l, N_r) times this factor.
    pub join_cap_factor: f64,
    /// Items per transform request; judge batches are carried by the operator.
    pub transform_batch: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lambda: 0.0,
            chi_weight: 0.0001,
            chars_per_token: 4.0,
            default_selectivity: 0.1,
            max_plans: 64,
            template_tokens: 50,
            join_cap_factor: 10.0,
            transform_batch: 8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Cost(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.chi_weight > 0.0 && self.chi_weight.is_finite()) {
            return Err(Error::Cost("chi_weight must be positive".into()));
        }
        if !(self.chars_per_token > 0.0) {
            return Err(Error::Cost("chars_per_token must be positive".into()));
        }
        if self.transform_batch == 0 {
            return Err(Error::Cost("transform_batch must be at least 1".into()));
        }
        if self.max_plans == 0 {
            return Err(Error::Cost("max_plans must be at least 1".into()));
        }
        Ok(())
    }
}

/// Γ split into its two terms; `total = cost + lambda * loss`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Gamma {
    pub cost: f64,
    /// Unweighted accuracy-loss term 1 / (A·t).
    pub loss: f64,
    pub lambda: f64,
}

impl Gamma {
    pub fn total(&self) -> f64 {
        self.cost + self.lambda * self.loss
    }
}

/// Γ for one operator invocation.
pub fn gamma(m: &CostMatrix, t: TokenVector, lambda: f64) -> Result<Gamma> {
    let cost = m.price(t);
    let denom = m.accuracy(t);
    if denom <= 0.0 {
        if lambda > 0.0 {
            return Err(Error::Cost(
                "degenerate operator: zero accuracy mass with lambda > 0".into(),
            ));
        }
        return Ok(Gamma { cost, loss: 0.0, lambda });
    }
    Ok(Gamma {
        cost,
        loss: 1.0 / denom,
        lambda,
    })
}

/// Shape of a classic operator's work.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChiKind {
    Scan { n: f64 },
    HashJoin { left: f64, right: f64 },
    NestedLoop { left: f64, right: f64 },
    Sort { n: f64 },
    /// Sorts both inputs, then merges.
    SortMerge { left: f64, right: f64 },
    /// Aggregate, filter and project all cost N.
    Linear { n: f64 },
}

/// Unweighted classic cost.
pub fn chi(kind: ChiKind) -> f64 {
    let sort = |n: f64| n * (n + 1.0).log2();
    match kind {
        ChiKind::Scan { n } | ChiKind::Linear { n } => n,
        ChiKind::HashJoin { left, right } => left + right,
        ChiKind::NestedLoop { left, right } => left * right,
        ChiKind::Sort { n } => sort(n),
        ChiKind::SortMerge { left, right } => sort(left) + sort(right) + left + right,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m() -> CostMatrix {
        CostMatrix::new(0.0005, 0.001, 0.001, 0.002).unwrap()
    }

    #[test]
    fn gamma_hand_values() {
        let t = TokenVector::new(1000, 200);
        let g0 = gamma(&m(), t, 0.0).unwrap();
        assert!((g0.total() - 1.4).abs() < 1e-12);
        let g1 = gamma(&m(), t, 1.0).unwrap();
        assert!((g1.total() - (1.4 + 1.0 / 0.7)).abs() < 1e-12);
        assert!((g1.total() - 2.828_571_428_571_428_5).abs() < 1e-9);
        assert!(gamma(&m(), TokenVector::default(), 1.0).is_err());
        assert_eq!(gamma(&m(), TokenVector::default(), 0.0).unwrap().total(), 0.0);
    }

    #[test]
    fn chi_hand_values() {
        let w = 0.0001;
        assert!((chi(ChiKind::Linear { n: 100.0 }) * w - 0.01).abs() < 1e-15);
        assert_eq!(chi(ChiKind::Linear { n: 0.0 }), 0.0);
        assert_eq!(chi(ChiKind::NestedLoop { left: 10.0, right: 10.0 }), 100.0);
        assert_eq!(chi(ChiKind::HashJoin { left: 10.0, right: 10.0 }), 20.0);
        assert_eq!(chi(ChiKind::Sort { n: 3.0 }), 6.0);
    }

    #[test]
    fn matrix_validation() {
        assert!(CostMatrix::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(CostMatrix::new(1.0, 1.0, -1.0, 0.0).is_err());
        assert!(CostMatrix::new(1.0, f64::NAN, 0.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn gamma_is_affine_in_lambda(
            ai in 1e-6f64..1.0, ao in 1e-6f64..1.0, ci in 0f64..0.01, co in 0f64..0.01,
            ti in 1u64..100_000, to in 0u64..10_000,
        ) {
            let m = CostMatrix::new(ai, ao, ci, co).unwrap();
            let t = TokenVector::new(ti, to);
            let g: Vec<f64> = [0.0, 1.0, 2.0].iter().map(|l| gamma(&m, t, *l).unwrap().total()).collect();
            prop_assert!(((g[2] - g[1]) - (g[1] - g[0])).abs() <= 1e-9 * g[2].abs().max(1.0));
            prop_assert_eq!(g[0], m.price(t));
        }

        #[test]
        fn raising_prices_never_lowers_gamma(
            ci in 0f64..0.01, co in 0f64..0.01, bump in 0f64..0.01, ti in 1u64..10_000, to in 0u64..1000, lambda in 0f64..10.0,
        ) {
            let lo = CostMatrix::new(0.001, 0.001, ci, co).unwrap();
            let hi = CostMatrix::new(0.001, 0.001, ci + bump, co + bump).unwrap();
            let t = TokenVector::new(ti, to);
            prop_assert!(gamma(&hi, t, lambda).unwrap().total() >= gamma(&lo, t, lambda).unwrap().total());
        }
    }
}
