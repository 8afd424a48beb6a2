use crate::context::ModelContext;
use crate::error::{Result, SpinError};
use serde::{Deserialize, Serialize};

/// Cartesian component of a spin operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpinComponent {
    X,
    Y,
    Z,
}

impl SpinComponent {
    /// Component from the conventional index 1, 2, 3.
    pub fn from_index(idx: u8) -> Result<Self> {
        match idx {
            1 => Ok(SpinComponent::X),
            2 => Ok(SpinComponent::Y),
            3 => Ok(SpinComponent::Z),
            _ => Err(SpinError::InvalidInput(format!(
                "spin component index must be 1, 2 or 3, got {idx}"
            ))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            SpinComponent::X => 1,
            SpinComponent::Y => 2,
            SpinComponent::Z => 3,
        }
    }
}

/// One operator factor: a spin component at a site (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub site: usize,
    pub component: SpinComponent,
}

/// One monomial `coeff * J_{c1}@s1 * J_{c2}@s2 * ...` in operator order.
///
/// Each term is Hermitized as `(P + P^dagger)/2` on assembly, so arbitrary
/// orderings are admissible; different orderings differ only at O(hbar^2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub factors: Vec<Factor>,
}

impl Term {
    pub fn new(coeff: f64, factors: Vec<(usize, SpinComponent)>) -> Self {
        Term {
            coeff,
            factors: factors
                .into_iter()
                .map(|(site, component)| Factor { site, component })
                .collect(),
        }
    }
}

/// Hermitian polynomial in the Cartesian spin components with real
/// coefficients. Houses the operator before dense assembly and before the
/// naive classical substitution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub terms: Vec<Term>,
}

impl HamiltonianSpec {
    pub fn new(terms: Vec<Term>) -> Self {
        HamiltonianSpec { terms }
    }

    /// Single term shorthand.
    pub fn monomial(coeff: f64, factors: Vec<(usize, SpinComponent)>) -> Self {
        HamiltonianSpec::new(vec![Term::new(coeff, factors)])
    }

    pub fn validate(&self, ctx: &ModelContext) -> Result<()> {
        for term in &self.terms {
            if !term.coeff.is_finite() {
                return Err(SpinError::InvalidInput(
                    "term coefficient must be finite".into(),
                ));
            }
            for f in &term.factors {
                if f.site >= ctx.n_sites {
                    return Err(SpinError::SiteOutOfRange {
                        site: f.site,
                        n_sites: ctx.n_sites,
                    });
                }
            }
        }
        Ok(())
    }

    /// Largest number of factors in any term.
    pub fn degree(&self) -> usize {
        self.terms.iter().map(|t| t.factors.len()).max().unwrap_or(0)
    }
}
