//! Declarative scalar expressions: sums of terms, each term a coefficient
//! times powers and trigonometric factors of individual variables.
//!
//! Charts and explicit fiber metrics are described with these tables so
//! that run configurations stay portable text documents instead of user
//! code.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One multiplicative factor acting on a single variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fn", rename_all = "lowercase")]
pub enum FactorKind {
    /// `x^exp`
    Pow { exp: u32 },
    /// `cos(freq · x)`
    Cos { freq: f64 },
    /// `sin(freq · x)`
    Sin { freq: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub axis: usize,
    #[serde(flatten)]
    pub kind: FactorKind,
}

impl Factor {
    fn eval(&self, vars: &[f64]) -> f64 {
        let x = vars[self.axis];
        match self.kind {
            FactorKind::Pow { exp } => x.powi(exp as i32),
            FactorKind::Cos { freq } => (freq * x).cos(),
            FactorKind::Sin { freq } => (freq * x).sin(),
        }
    }
}

/// `coeff · Π factors`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    #[serde(default)]
    pub factors: Vec<Factor>,
}

/// A scalar expression: the sum of its terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Expr {
    pub terms: Vec<Term>,
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr {
            terms: vec![Term {
                coeff: c,
                factors: vec![],
            }],
        }
    }

    /// `coeff · cos(freq · x_axis)`
    pub fn cos(axis: usize, freq: f64, coeff: f64) -> Expr {
        Expr {
            terms: vec![Term {
                coeff,
                factors: vec![Factor {
                    axis,
                    kind: FactorKind::Cos { freq },
                }],
            }],
        }
    }

    /// `coeff · sin(freq · x_axis)`
    pub fn sin(axis: usize, freq: f64, coeff: f64) -> Expr {
        Expr {
            terms: vec![Term {
                coeff,
                factors: vec![Factor {
                    axis,
                    kind: FactorKind::Sin { freq },
                }],
            }],
        }
    }

    /// `coeff · x_axis^exp`
    pub fn pow(axis: usize, exp: u32, coeff: f64) -> Expr {
        Expr {
            terms: vec![Term {
                coeff,
                factors: vec![Factor {
                    axis,
                    kind: FactorKind::Pow { exp },
                }],
            }],
        }
    }

    pub fn max_axis(&self) -> Option<usize> {
        self.terms
            .iter()
            .flat_map(|t| t.factors.iter().map(|f| f.axis))
            .max()
    }

    pub fn validate(&self, num_vars: usize) -> Result<()> {
        if let Some(m) = self.max_axis() {
            if m >= num_vars {
                return Err(Error::config(format!(
                    "expression references axis {m} but only {num_vars} variables exist"
                )));
            }
        }
        for t in &self.terms {
            if !t.coeff.is_finite() {
                return Err(Error::config("non-finite coefficient in expression"));
            }
        }
        Ok(())
    }

    pub fn eval(&self, vars: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coeff * t.factors.iter().map(|f| f.eval(vars)).product::<f64>())
            .sum()
    }
}
