use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Degree bounds stated for the learning results, with every hidden
/// constant set to 1 and natural logarithms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeTheorem {
    /// `(C_GR^Δ · (log(C_SSM n/η)/δ)^{(Δ+1)²})^{d+2} · log(2/ε)`.
    CircuitsSsm,
    /// `(log²(n/ε)/η)^{d+1} · log(8/ε)`.
    CircuitsTree,
    /// `C_GR^{Δ+1} · (log(C_SSM n/η)/δ)^{(Δ+2)²} · C_PI · Γ/ε`.
    LowInfluence,
    /// `C_ζ · log²(1/ε)/ε²`.
    HalfspaceDobrushin,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BudgetParams {
    pub n: Option<usize>,
    pub eps: Option<f64>,
    pub eta: Option<f64>,
    pub depth: Option<u32>,
    pub c_ssm: Option<f64>,
    pub delta: Option<f64>,
    pub c_gr: Option<f64>,
    pub growth_exponent: Option<f64>,
    pub c_pi: Option<f64>,
    pub gamma: Option<f64>,
    pub c_zeta: Option<f64>,
}

fn need<T: Copy>(v: Option<T>, name: &'static str) -> Result<T> {
    v.ok_or(Error::MissingParameter(name))
}

/// Predicted degree (rounded up). The value can be astronomically large;
/// it is meant for reporting next to measured sweeps.
pub fn degree_budget(theorem: DegreeTheorem, p: &BudgetParams) -> Result<f64> {
    let eps = need(p.eps, "eps")?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let raw = match theorem {
        DegreeTheorem::CircuitsSsm => {
            let (n, eta, d) = (need(p.n, "n")? as f64, need(p.eta, "eta")?, need(p.depth, "depth")?);
            let (c_ssm, delta) = (need(p.c_ssm, "c_ssm")?, need(p.delta, "delta")?);
            let (c_gr, big_delta) = (need(p.c_gr, "c_gr")?, need(p.growth_exponent, "growth_exponent")?);
            let inner = c_gr.powf(big_delta) * ((c_ssm * n / eta).ln() / delta).powf((big_delta + 1.0).powi(2));
            inner.powi(d as i32 + 2) * (2.0 / eps).ln()
        }
        DegreeTheorem::CircuitsTree => {
            let (n, eta, d) = (need(p.n, "n")? as f64, need(p.eta, "eta")?, need(p.depth, "depth")?);
            ((n / eps).ln().powi(2) / eta).powi(d as i32 + 1) * (8.0 / eps).ln()
        }
        DegreeTheorem::LowInfluence => {
            let gamma = need(p.gamma, "gamma")?;
            if gamma == 0.0 {
                return Ok(0.0);
            }
            let (n, eta) = (need(p.n, "n")? as f64, need(p.eta, "eta")?);
            let (c_ssm, delta) = (need(p.c_ssm, "c_ssm")?, need(p.delta, "delta")?);
            let (c_gr, big_delta) = (need(p.c_gr, "c_gr")?, need(p.growth_exponent, "growth_exponent")?);
            let c_pi = need(p.c_pi, "c_pi")?;
            c_gr.powf(big_delta + 1.0)
                * ((c_ssm * n / eta).ln() / delta).powf((big_delta + 2.0).powi(2))
                * c_pi
                * gamma
                / eps
        }
        DegreeTheorem::HalfspaceDobrushin => {
            let c_zeta = need(p.c_zeta, "c_zeta")?;
            c_zeta * (1.0 / eps).ln().powi(2) / (eps * eps)
        }
    };
    Ok(raw.ceil())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halfspace_budget() {
        let p = BudgetParams { c_zeta: Some(1.0), eps: Some(0.1), ..Default::default() };
        assert_eq!(degree_budget(DegreeTheorem::HalfspaceDobrushin, &p).unwrap(), 531.0);
        let p = BudgetParams { eps: Some(0.3), ..p };
        assert_eq!(degree_budget(DegreeTheorem::HalfspaceDobrushin, &p).unwrap(), 17.0);
    }

    #[test]
    fn zero_influence_and_missing() {
        let p = BudgetParams { gamma: Some(0.0), eps: Some(0.1), ..Default::default() };
        assert_eq!(degree_budget(DegreeTheorem::LowInfluence, &p).unwrap(), 0.0);
        assert_eq!(
            degree_budget(DegreeTheorem::CircuitsTree, &p),
            Err(Error::MissingParameter("n"))
        );
    }

    #[test]
    fn tree_fixture_value() {
        let p = BudgetParams { n: Some(16), eps: Some(0.5), eta: Some(0.2), depth: Some(2), ..Default::default() };
        let want = ((32f64).ln().powi(2) / 0.2).powi(3) * 16f64.ln();
        assert_eq!(degree_budget(DegreeTheorem::CircuitsTree, &p).unwrap(), want.ceil());
    }
}
