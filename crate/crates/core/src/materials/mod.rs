//! Magnetic constitutive laws `h = H(b)` with consistent tangents, and the
//! piecewise-constant conductivity map.

mod exponential;
mod jiles_atherton;

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};

use crate::error::Result;
use crate::mesh::Region;

pub use exponential::{exp_law_h, exp_law_tangent, ExpLawParams};
pub use jiles_atherton::{ja_update, JAState, JaResponse, JilesAthertonParams};

/// Magnetic flux density (T).
pub type BVec = Vector2<f64>;
/// Magnetic field (A/m).
pub type HVec = Vector2<f64>;
/// Differential reluctivity, `t[(r, c)] = ∂h_r / ∂b_c` (A/m per T).
pub type Tangent2 = Matrix2<f64>;

pub const MU0: f64 = 4.0e-7 * PI;
pub const NU0: f64 = 1.0 / MU0;

/// Grain conductivity of the SMC benchmark (S/m).
pub const SIGMA_GRAIN: f64 = 5.0e6;

#[derive(Debug, Clone, PartialEq)]
pub enum MagneticLaw {
    Linear { nu: f64 },
    Exponential(ExpLawParams),
    JilesAtherton(JilesAthertonParams),
}

/// History carried by one quadrature point.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum MaterialState {
    #[default]
    Reversible,
    Hysteretic(JAState),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LawResponse {
    pub h: HVec,
    pub tangent: Tangent2,
    /// State after accepting `b`; only committed by the caller on step
    /// acceptance.
    pub state: MaterialState,
}

impl MagneticLaw {
    pub fn vacuum() -> Self {
        MagneticLaw::Linear { nu: NU0 }
    }

    pub fn initial_state(&self) -> MaterialState {
        match self {
            MagneticLaw::JilesAtherton(_) => MaterialState::Hysteretic(JAState::default()),
            _ => MaterialState::Reversible,
        }
    }

    pub fn is_reversible(&self) -> bool {
        !matches!(self, MagneticLaw::JilesAtherton(_))
    }

    /// Small-field reluctivity, used for skin-depth estimates.
    pub fn initial_reluctivity(&self) -> f64 {
        match self {
            MagneticLaw::Linear { nu } => *nu,
            MagneticLaw::Exponential(p) => p.alpha + p.beta,
            MagneticLaw::JilesAtherton(p) => {
                // b ≈ µ0 (he + (1-α) χ he) and h ≈ (1 - α χ) he around the
                // demagnetised state, with χ = c Ms / 3a.
                let chi = p.c * p.ms / (3.0 * p.a);
                (1.0 - p.alpha * chi) / (MU0 * (1.0 + (1.0 - p.alpha) * chi))
            }
        }
    }

    pub fn evaluate(&self, b: &BVec, state: &MaterialState) -> Result<LawResponse> {
        match self {
            MagneticLaw::Linear { nu } => Ok(LawResponse {
                h: b * *nu,
                tangent: Tangent2::identity() * *nu,
                state: MaterialState::Reversible,
            }),
            MagneticLaw::Exponential(p) => Ok(LawResponse {
                h: exp_law_h(b, p)?,
                tangent: exp_law_tangent(b, p)?,
                state: MaterialState::Reversible,
            }),
            MagneticLaw::JilesAtherton(p) => {
                let prev = match state {
                    MaterialState::Hysteretic(s) => s.clone(),
                    MaterialState::Reversible => JAState::default(),
                };
                let r = ja_update(b, &prev, p)?;
                Ok(LawResponse {
                    h: r.h,
                    tangent: r.tangent,
                    state: MaterialState::Hysteretic(r.state),
                })
            }
        }
    }
}

/// Assignment of laws and conductivity to mesh regions. Everything that is
/// not a grain is non-magnetic and non-conducting.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialMap {
    pub grain_law: MagneticLaw,
    pub grain_sigma: f64,
    vacuum: MagneticLaw,
}

impl MaterialMap {
    pub fn new(grain_law: MagneticLaw, grain_sigma: f64) -> Self {
        Self {
            grain_law,
            grain_sigma,
            vacuum: MagneticLaw::vacuum(),
        }
    }

    pub fn law(&self, region: Region) -> &MagneticLaw {
        if region.is_grain() {
            &self.grain_law
        } else {
            &self.vacuum
        }
    }

    pub fn conductivity(&self, region: Region) -> f64 {
        conductivity(region, self.grain_sigma)
    }
}

/// Electric conductivity (S/m): `grain_sigma` in grains, zero elsewhere.
pub fn conductivity(region: Region, grain_sigma: f64) -> f64 {
    if region.is_grain() {
        grain_sigma
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conductivity_by_region() {
        assert_eq!(conductivity(Region::Grain(3), SIGMA_GRAIN), 5e6);
        assert_eq!(conductivity(Region::Insulation, SIGMA_GRAIN), 0.0);
        assert_eq!(conductivity(Region::Air, SIGMA_GRAIN), 0.0);
        assert_eq!(conductivity(Region::InductorPos, SIGMA_GRAIN), 0.0);
    }

    #[test]
    fn linear_law_is_isotropic() {
        let law = MagneticLaw::Linear { nu: 123.0 };
        let b = BVec::new(0.3, -0.2);
        for k in 0..8 {
            let th = k as f64 * PI / 4.0;
            let rot = nalgebra::Rotation2::new(th);
            let h0 = law.evaluate(&b, &MaterialState::Reversible).unwrap().h;
            let h1 = law.evaluate(&(rot * b), &MaterialState::Reversible).unwrap().h;
            assert!((rot * h0 - h1).norm() <= 1e-10 * h1.norm());
        }
    }

    #[test]
    fn non_grain_regions_are_vacuum() {
        let map = MaterialMap::new(MagneticLaw::Exponential(ExpLawParams::benchmark()), SIGMA_GRAIN);
        assert_eq!(map.law(Region::Insulation), &MagneticLaw::vacuum());
        assert!(matches!(map.law(Region::Grain(0)), MagneticLaw::Exponential(_)));
    }
}
