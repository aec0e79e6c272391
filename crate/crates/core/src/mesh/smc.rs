//! Soft-magnetic-composite benchmark geometry.
//!
//! An `L × L` block of square conducting grains in an insulating matrix sits
//! between two inductor bars (top carries `+j_s`, bottom `-j_s`) inside an air
//! box. The quarter model keeps `x ≥ 0, y ≥ 0`: the left edge is the vertical
//! symmetry line `Γ_v`, the bottom edge the horizontal one `Γ_h`, everything
//! else is `Γ_inf`.

use std::collections::BTreeMap;

use super::grid::{graded_axis, RectGrid, Side};
use super::{BoundaryTag, Region, TriMesh};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrainShape {
    /// Axis-aligned square whose diagonal equals the grain size `e_a`.
    Square,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmcGeometry {
    /// SMC block side length `L` (m).
    pub smc_side: f64,
    /// Grains per side of the full block.
    pub grains_per_side: usize,
    /// Grain size parameter `e_a` (m).
    pub grain_size: f64,
    /// Inductor thickness `e_i` (m). Zero removes the inductors.
    pub inductor_thickness: f64,
    /// Gap between SMC block and inductor `e_gap` (m).
    pub inductor_gap: f64,
    /// Air between the outermost part and `Γ_inf` (m).
    pub air_margin: f64,
    pub grain_shape: GrainShape,
    pub quarter_symmetry: bool,
}

impl Default for SmcGeometry {
    fn default() -> Self {
        Self::benchmark()
    }
}

impl SmcGeometry {
    /// 10 × 10 grains of side 75 µm on a 100 µm pitch over `L = 1000 µm`.
    pub fn benchmark() -> Self {
        Self {
            smc_side: 1000e-6,
            grains_per_side: 10,
            grain_size: 150e-6 * std::f64::consts::SQRT_2 / 2.0,
            inductor_thickness: 100e-6,
            inductor_gap: 100e-6,
            air_margin: 200e-6,
            grain_shape: GrainShape::Square,
            quarter_symmetry: true,
        }
    }

    /// Reduced benchmark: 8 × 8 grains (4 × 4 in the quarter model).
    pub fn desk() -> Self {
        Self {
            smc_side: 800e-6,
            grains_per_side: 8,
            ..Self::benchmark()
        }
    }

    pub fn pitch(&self) -> f64 {
        self.smc_side / self.grains_per_side as f64
    }

    /// Side of the square grain.
    pub fn grain_side(&self) -> f64 {
        match self.grain_shape {
            GrainShape::Square => self.grain_size / std::f64::consts::SQRT_2,
        }
    }

    /// Conducting area fraction of the unit cell.
    pub fn fill_factor(&self) -> f64 {
        (self.grain_side() / self.pitch()).powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("smc_side", self.smc_side),
            ("grain_size", self.grain_size),
        ];
        for (name, v) in lengths {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Geometry(format!("{name} must be positive, got {v}")));
            }
        }
        let optional = [
            ("inductor_thickness", self.inductor_thickness),
            ("inductor_gap", self.inductor_gap),
            ("air_margin", self.air_margin),
        ];
        for (name, v) in optional {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Geometry(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.grains_per_side == 0 {
            return Err(Error::Geometry("grains_per_side must be at least 1".into()));
        }
        if self.grain_side() >= self.pitch() {
            return Err(Error::Geometry(format!(
                "grain side {:e} m does not fit the pitch {:e} m",
                self.grain_side(),
                self.pitch()
            )));
        }
        Ok(())
    }

    fn half(&self) -> f64 {
        0.5 * self.smc_side
    }

    fn inductor_span(&self) -> (f64, f64) {
        let lo = self.half() + self.inductor_gap;
        (lo, lo + self.inductor_thickness)
    }

    /// Outer extents `(x_max, y_max)`; the box is `[-x_max, x_max] × [-y_max, y_max]`
    /// (or its first quadrant).
    pub fn outer_extent(&self) -> (f64, f64) {
        let y_top = if self.inductor_thickness > 0.0 {
            self.inductor_span().1
        } else {
            self.half()
        };
        (self.half() + self.air_margin, y_top + self.air_margin)
    }

    fn x_breaks(&self) -> Vec<f64> {
        let (xm, _) = self.outer_extent();
        mirror(&[0.0, self.half(), xm], self.quarter_symmetry)
    }

    fn y_breaks(&self) -> Vec<f64> {
        let (_, ym) = self.outer_extent();
        let mut b = vec![0.0, self.half()];
        if self.inductor_thickness > 0.0 {
            let (lo, hi) = self.inductor_span();
            b.extend([lo, hi]);
        }
        b.push(ym);
        mirror(&b, self.quarter_symmetry)
    }

    fn in_smc(&self, p: [f64; 2]) -> bool {
        p[0].abs() < self.half() && p[1].abs() < self.half()
    }

    fn outside_region(&self, p: [f64; 2]) -> Region {
        let (lo, hi) = self.inductor_span();
        if self.inductor_thickness > 0.0 && p[0].abs() < self.half() && p[1].abs() > lo && p[1].abs() < hi {
            if p[1] > 0.0 {
                Region::InductorPos
            } else {
                Region::InductorNeg
            }
        } else {
            Region::Air
        }
    }

    fn outer_tag(&self, side: Side) -> BoundaryTag {
        match (self.quarter_symmetry, side) {
            (true, Side::Left) => BoundaryTag::GammaV,
            (true, Side::Bottom) => BoundaryTag::GammaH,
            _ => BoundaryTag::GammaInf,
        }
    }

    /// Lattice cell index and position relative to that cell's centre.
    pub(crate) fn lattice_cell(&self, p: [f64; 2]) -> ([usize; 2], [f64; 2]) {
        let pitch = self.pitch();
        let mut idx = [0usize; 2];
        let mut local = [0.0; 2];
        for d in 0..2 {
            let s = (p[d] + self.half()) / pitch;
            let i = (s.floor().max(0.0) as usize).min(self.grains_per_side - 1);
            idx[d] = i;
            local[d] = p[d] + self.half() - (i as f64 + 0.5) * pitch;
        }
        (idx, local)
    }

    /// Maps a physical point onto unit-cell coordinates centred on a grain.
    pub fn cell_coordinates(&self, p: [f64; 2]) -> [f64; 2] {
        let pitch = self.pitch();
        let wrap = |v: f64| {
            let s = (v + self.half()) / pitch;
            (s - s.floor() - 0.5) * pitch
        };
        [wrap(p[0]), wrap(p[1])]
    }
}

fn mirror(breaks: &[f64], quarter: bool) -> Vec<f64> {
    if quarter {
        return breaks.to_vec();
    }
    let mut out: Vec<f64> = breaks.iter().rev().filter(|&&v| v > 0.0).map(|v| -v).collect();
    out.extend_from_slice(breaks);
    out
}

/// Homogenised macroscale mesh: the SMC block is one region.
///
/// Grid spacing is `L / (2 n_divisions)` everywhere.
pub fn build_macro_mesh(geom: &SmcGeometry, n_divisions: usize) -> Result<TriMesh> {
    geom.validate()?;
    if n_divisions == 0 {
        return Err(Error::Geometry("n_divisions must be at least 1".into()));
    }
    let h = geom.half() / n_divisions as f64;
    let grid = RectGrid {
        xs: graded_axis(&geom.x_breaks(), |_, _| h),
        ys: graded_axis(&geom.y_breaks(), |_, _| h),
    };
    let mesh = grid.triangulate(
        |p| if geom.in_smc(p) { Region::Smc } else { geom.outside_region(p) },
        |s| geom.outer_tag(s),
    );
    mesh.validate()?;
    Ok(mesh)
}

/// One-pitch periodic unit cell centred on the origin with a single centred
/// grain (`GRAIN(0)`).
///
/// The insulation strip between grain and cell edge is split into `n_refine`
/// elements; the grain uses the same spacing.
pub fn build_cell_mesh(geom: &SmcGeometry, n_refine: usize) -> Result<TriMesh> {
    geom.validate()?;
    if n_refine == 0 {
        return Err(Error::Geometry("n_refine must be at least 1".into()));
    }
    let (p, s) = (0.5 * geom.pitch(), 0.5 * geom.grain_side());
    let h = (p - s).min(2.0 * s) / n_refine as f64;
    let axis = graded_axis(&[-p, -s, s, p], |_, _| h);
    let grid = RectGrid {
        xs: axis.clone(),
        ys: axis,
    };
    let mut mesh = grid.triangulate(
        |c| {
            if c[0].abs() < s && c[1].abs() < s {
                Region::Grain(0)
            } else {
                Region::Insulation
            }
        },
        |side| match side {
            Side::Left => BoundaryTag::CellLeft,
            Side::Right => BoundaryTag::CellRight,
            Side::Bottom => BoundaryTag::CellBottom,
            Side::Top => BoundaryTag::CellTop,
        },
    );
    mesh.periodic = grid.periodic_pairs();
    mesh.validate()?;
    Ok(mesh)
}

/// Fullscale mesh with every grain resolved (`GRAIN(0..N-1)`, numbered
/// row-major from the bottom-left grain of the modelled domain).
///
/// Inside the SMC block the spacing is `min(insulation, grain/6) / n_refine`,
/// which gives at least six elements across each grain side.
pub fn build_reference_mesh(geom: &SmcGeometry, n_refine: usize) -> Result<TriMesh> {
    geom.validate()?;
    if n_refine == 0 {
        return Err(Error::Geometry("n_refine must be at least 1".into()));
    }
    let half = geom.half();
    let (pitch, side) = (geom.pitch(), geom.grain_side());
    let insulation = 0.5 * (pitch - side);
    let h_in = insulation.min(side / 6.0) / n_refine as f64;
    let outer: Vec<f64> = [geom.inductor_gap, geom.inductor_thickness, geom.air_margin]
        .into_iter()
        .filter(|&v| v > 0.0)
        .collect();
    let h_out = outer
        .iter()
        .fold(f64::INFINITY, |m, &v| m.min(v / 4.0))
        .max(h_in);

    let lo = if geom.quarter_symmetry { 0.0 } else { -half };
    let mut grain_edges = Vec::new();
    for i in 0..geom.grains_per_side {
        let c = -half + (i as f64 + 0.5) * pitch;
        for e in [c - 0.5 * side, c + 0.5 * side] {
            if e > lo && e < half {
                grain_edges.push(e);
            }
        }
    }
    let refine = |breaks: Vec<f64>| {
        let mut b = breaks;
        b.extend(&grain_edges);
        b.sort_by(f64::total_cmp);
        b.dedup();
        graded_axis(&b, |a, c| {
            if a >= -half - 1e-15 && c <= half + 1e-15 {
                h_in
            } else {
                h_out
            }
        })
    };
    let grid = RectGrid {
        xs: refine(geom.x_breaks()),
        ys: refine(geom.y_breaks()),
    };

    // Grain numbering over lattice cells that intersect the modelled domain.
    let first = if geom.quarter_symmetry {
        geom.lattice_cell([1e-3 * pitch, 0.0]).0[0]
    } else {
        0
    };
    let per_row = geom.grains_per_side - first;
    let mut ids = BTreeMap::new();
    for j in first..geom.grains_per_side {
        for i in first..geom.grains_per_side {
            ids.insert([i, j], ((j - first) * per_row + (i - first)) as u32);
        }
    }

    let mesh = grid.triangulate(
        |p| {
            if geom.in_smc(p) {
                let (cell, local) = geom.lattice_cell(p);
                if local[0].abs() < 0.5 * side && local[1].abs() < 0.5 * side {
                    Region::Grain(ids[&cell])
                } else {
                    Region::Insulation
                }
            } else {
                geom.outside_region(p)
            }
        },
        |s| geom.outer_tag(s),
    );
    mesh.validate()?;
    Ok(mesh)
}
