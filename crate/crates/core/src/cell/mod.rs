//! Mesoscale periodic cell problems bound to macroscale quadrature points.
//!
//! The cell unknowns are the periodic correction `a_c`, one constant `u` per
//! grain and the multiplier of the zero-mean gauge. The local electric field
//! is `e_m = e_src − ∂t a_c − u` with
//! `e_src(y) = e_M + κ (ḃ_x y₂ − ḃ_y y₁)`.

mod conductivity;
mod problem;

pub use conductivity::{homogenize_conductivity, HomogenizedConductivity};
pub use problem::{
    CellDiagnostics, CellField, CellMode, CellModel, CellOutput, CellProblem, CellSolution, CellState,
    NewtonSettings,
};

use crate::materials::{BVec, HVec, Tangent2};

/// Macroscale data imposed on one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSources {
    pub b_m: BVec,
    pub db_dt: BVec,
    /// `−∂t a_M` at the quadrature point (V/m).
    pub e_mz: f64,
    pub dt: f64,
    pub kappa: f64,
}

impl CellSources {
    /// Backward differences from the current and previous macro values.
    pub fn from_macro(b: BVec, b_prev: BVec, a: f64, a_prev: f64, dt: f64) -> Self {
        Self {
            b_m: b,
            db_dt: (b - b_prev) / dt,
            e_mz: -(a - a_prev) / dt,
            dt,
            kappa: 1.0,
        }
    }

    /// Magnetostatic sources: only `b_M` matters.
    pub fn static_field(b: BVec) -> Self {
        Self {
            b_m: b,
            db_dt: BVec::zeros(),
            e_mz: 0.0,
            dt: f64::INFINITY,
            kappa: 1.0,
        }
    }

    /// Shifts `b_M[c]` by `delta`; the rate moves with it since the previous
    /// macro value is fixed.
    pub fn perturbed(&self, c: usize, delta: f64) -> Self {
        let mut p = *self;
        p.b_m[c] += delta;
        if self.dt.is_finite() {
            p.db_dt[c] += delta / self.dt;
        }
        p
    }

    /// Source electric field at cell coordinate `y`.
    pub fn e_src(&self, y: [f64; 2]) -> f64 {
        self.e_mz + self.kappa * (self.db_dt[0] * y[1] - self.db_dt[1] * y[0])
    }
}

/// Upscaled constitutive response of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct UpscaledLaw {
    pub h: HVec,
    /// `t[(r, c)] = ∂h_r/∂b_c`; `None` until the perturbed solves ran.
    pub tangent: Option<Tangent2>,
    /// Cell-averaged Joule loss density (W/m³).
    pub loss_density: f64,
}

#[cfg(test)]
mod tests;
