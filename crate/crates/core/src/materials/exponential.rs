use super::{BVec, HVec, Tangent2};
use crate::error::{Error, Result};

/// Largest admissible `γ‖b‖²` before `exp` is considered out of range.
const MAX_EXPONENT: f64 = 700.0;

/// Parameters of `H(b) = (α + β exp(γ‖b‖²)) b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpLawParams {
    /// A/m per T.
    pub alpha: f64,
    /// A/m per T.
    pub beta: f64,
    /// 1/T².
    pub gamma: f64,
}

impl ExpLawParams {
    /// Values used for the SMC grains.
    pub fn benchmark() -> Self {
        Self {
            alpha: 388.0,
            beta: 0.3774,
            gamma: 2.97,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha > 0.0 && self.beta >= 0.0 && self.gamma >= 0.0 {
            Ok(())
        } else {
            Err(Error::config(None, format!("invalid exponential-law parameters {self:?}")))
        }
    }

    fn exp_term(&self, b: &BVec) -> Result<f64> {
        let arg = self.gamma * b.norm_squared();
        if arg > MAX_EXPONENT {
            return Err(Error::Material {
                message: format!("exponential law out of range: gamma*|b|^2 = {arg:e}"),
                residual: arg,
            });
        }
        Ok(self.beta * arg.exp())
    }
}

pub fn exp_law_h(b: &BVec, p: &ExpLawParams) -> Result<HVec> {
    Ok(b * (p.alpha + p.exp_term(b)?))
}

/// `(α + β e^{γ‖b‖²}) I + 2βγ e^{γ‖b‖²} b bᵀ`.
pub fn exp_law_tangent(b: &BVec, p: &ExpLawParams) -> Result<Tangent2> {
    let e = p.exp_term(b)?;
    Ok(Tangent2::identity() * (p.alpha + e) + (b * b.transpose()) * (2.0 * p.gamma * e))
}
