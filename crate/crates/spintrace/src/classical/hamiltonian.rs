//! The naive classical Hamilton function and its exact derivatives.
//!
//! Each operator monomial becomes `coeff * J_class^d * prod_site f_site(u, v)`
//! where `f_site` is a product of the unit-vector components at that site.
//! First and second partial derivatives are assembled per monomial from the
//! closed-form derivatives of the components by the product rule; nothing is
//! differentiated numerically.

use crate::chart::{Chart, SiteCoord};
use crate::classical::state::ClassicalState;
use crate::context::ModelContext;
use crate::error::{Result, SpinError};
use crate::hamiltonian::{HamiltonianSpec, SpinComponent};
use crate::{C64, CMat};

/// Value and derivatives of one site factor with respect to that site's
/// chart coordinates, up to second order.
#[derive(Debug, Clone, Copy)]
struct Jet {
    v: C64,
    du: C64,
    dv: C64,
    duu: C64,
    duv: C64,
    dvv: C64,
}

impl Jet {
    fn constant(v: C64) -> Self {
        let z = C64::new(0.0, 0.0);
        Jet { v, du: z, dv: z, duu: z, duv: z, dvv: z }
    }

    fn mul(&self, g: &Jet) -> Jet {
        Jet {
            v: self.v * g.v,
            du: self.du * g.v + self.v * g.du,
            dv: self.dv * g.v + self.v * g.dv,
            duu: self.duu * g.v + 2.0 * self.du * g.du + self.v * g.duu,
            dvv: self.dvv * g.v + 2.0 * self.dv * g.dv + self.v * g.dvv,
            duv: self.duv * g.v + self.du * g.dv + self.dv * g.du + self.v * g.duv,
        }
    }

    fn neg(&self) -> Jet {
        Jet {
            v: -self.v,
            du: -self.du,
            dv: -self.dv,
            duu: -self.duu,
            duv: -self.duv,
            dvv: -self.dvv,
        }
    }
}

/// Jet of the unit-vector component `n_c` at a chart point.
fn component_jet(c: SpinComponent, site: &SiteCoord) -> Jet {
    let (u, v) = (site.u, site.v);
    let one = C64::new(1.0, 0.0);
    let d = one + u * v;
    let d2 = d * d;
    let d3 = d2 * d;
    let jet = match c {
        SpinComponent::X => Jet {
            v: (u + v) / d,
            du: (one - v * v) / d2,
            dv: (one - u * u) / d2,
            duu: -2.0 * v * (one - v * v) / d3,
            dvv: -2.0 * u * (one - u * u) / d3,
            duv: -2.0 * (u + v) / d3,
        },
        SpinComponent::Y => {
            // n2 = -i (v - u)/(1 + uv)
            let mi = C64::new(0.0, -1.0);
            Jet {
                v: mi * (v - u) / d,
                du: mi * (-(one + v * v)) / d2,
                dv: mi * (one + u * u) / d2,
                duu: mi * 2.0 * v * (one + v * v) / d3,
                dvv: mi * (-2.0) * u * (one + u * u) / d3,
                duv: mi * 2.0 * (u - v) / d3,
            }
        }
        SpinComponent::Z => Jet {
            v: (u * v - one) / d,
            du: 2.0 * v / d2,
            dv: 2.0 * u / d2,
            duu: -4.0 * v * v / d3,
            dvv: -4.0 * u * u / d3,
            duv: 2.0 * (one - u * v) / d3,
        },
    };
    match site.chart {
        Chart::Standard => jet,
        // On the reciprocal chart n2 and n3 change sign, n1 keeps its form.
        Chart::Inverted => match c {
            SpinComponent::X => jet,
            SpinComponent::Y | SpinComponent::Z => jet.neg(),
        },
    }
}

#[derive(Debug, Clone)]
struct PreparedTerm {
    /// coeff * J_class^degree
    scale: f64,
    /// (site, components at that site), sites distinct.
    site_factors: Vec<(usize, Vec<SpinComponent>)>,
}

/// Second derivatives of H in the chart coordinates; `huv[(i, k)]` is
/// `d^2 H / du_i dv_k`.
#[derive(Debug, Clone)]
pub struct Hessian {
    pub huu: CMat,
    pub huv: CMat,
    pub hvv: CMat,
}

/// Gradient and Hessian bundle at a point.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub value: C64,
    pub du: Vec<C64>,
    pub dv: Vec<C64>,
    pub hessian: Hessian,
}

#[derive(Debug, Clone)]
pub struct ClassicalHamiltonian {
    terms: Vec<PreparedTerm>,
    pub n_sites: usize,
    pub j_class: f64,
}

impl ClassicalHamiltonian {
    pub fn new(spec: &HamiltonianSpec, ctx: &ModelContext) -> Result<Self> {
        spec.validate(ctx)?;
        let j = ctx.j_class();
        let terms = spec
            .terms
            .iter()
            .map(|t| {
                let mut site_factors: Vec<(usize, Vec<SpinComponent>)> = Vec::new();
                for f in &t.factors {
                    match site_factors.iter_mut().find(|(s, _)| *s == f.site) {
                        Some((_, comps)) => comps.push(f.component),
                        None => site_factors.push((f.site, vec![f.component])),
                    }
                }
                PreparedTerm {
                    scale: t.coeff * j.powi(t.factors.len() as i32),
                    site_factors,
                }
            })
            .collect();
        Ok(ClassicalHamiltonian {
            terms,
            n_sites: ctx.n_sites,
            j_class: j,
        })
    }

    fn check_charts(&self, state: &ClassicalState) -> Result<()> {
        for (site, s) in state.sites.iter().enumerate() {
            let mag = (C64::new(1.0, 0.0) + s.u * s.v).norm();
            if mag < 1e-12 {
                return Err(SpinError::ChartSingularity { site, magnitude: mag });
            }
        }
        Ok(())
    }

    /// H at the point; complex for general states, real for real states.
    pub fn eval(&self, state: &ClassicalState) -> Result<C64> {
        self.check_charts(state)?;
        let mut acc = C64::new(0.0, 0.0);
        for term in &self.terms {
            let mut p = C64::new(term.scale, 0.0);
            for (site, comps) in &term.site_factors {
                for &c in comps {
                    p *= component_jet(c, &state.sites[*site]).v;
                }
            }
            acc += p;
        }
        Ok(acc)
    }

    /// Gradient (dH/du_i, dH/dv_i) in the state's chart coordinates.
    pub fn gradient(&self, state: &ClassicalState) -> Result<(Vec<C64>, Vec<C64>)> {
        let d = self.derivatives(state)?;
        Ok((d.du, d.dv))
    }

    /// Value, gradient and full Hessian in one pass.
    pub fn derivatives(&self, state: &ClassicalState) -> Result<Derivatives> {
        self.check_charts(state)?;
        let n = self.n_sites;
        let zero = C64::new(0.0, 0.0);
        let mut value = zero;
        let mut du = vec![zero; n];
        let mut dv = vec![zero; n];
        let mut huu = CMat::zeros((n, n));
        let mut huv = CMat::zeros((n, n));
        let mut hvv = CMat::zeros((n, n));

        for term in &self.terms {
            let jets: Vec<(usize, Jet)> = term
                .site_factors
                .iter()
                .map(|(site, comps)| {
                    let mut jet = Jet::constant(C64::new(1.0, 0.0));
                    for &c in comps {
                        jet = jet.mul(&component_jet(c, &state.sites[*site]));
                    }
                    (*site, jet)
                })
                .collect();
            let scale = C64::new(term.scale, 0.0);

            let prod_except = |skip: &[usize]| -> C64 {
                jets.iter()
                    .filter(|(s, _)| !skip.contains(s))
                    .map(|(_, j)| j.v)
                    .product()
            };

            value += scale * prod_except(&[]);
            for (i, ji) in &jets {
                let rest = prod_except(&[*i]);
                du[*i] += scale * ji.du * rest;
                dv[*i] += scale * ji.dv * rest;
                huu[(*i, *i)] += scale * ji.duu * rest;
                huv[(*i, *i)] += scale * ji.duv * rest;
                hvv[(*i, *i)] += scale * ji.dvv * rest;
                for (k, jk) in &jets {
                    if k == i {
                        continue;
                    }
                    let rest2 = prod_except(&[*i, *k]);
                    huu[(*i, *k)] += scale * ji.du * jk.du * rest2;
                    huv[(*i, *k)] += scale * ji.du * jk.dv * rest2;
                    hvv[(*i, *k)] += scale * ji.dv * jk.dv * rest2;
                }
            }
        }
        Ok(Derivatives {
            value,
            du,
            dv,
            hessian: Hessian { huu, huv, hvv },
        })
    }
}
