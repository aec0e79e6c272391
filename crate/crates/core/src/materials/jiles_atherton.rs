//! Isotropic vector Jiles–Atherton model, driven by `b`.
//!
//! The effective field `he = h + α m` is the primary unknown. Over one
//! increment the irreversible magnetisation relaxes towards the anhysteretic
//! curve with the exact solution of `dm_irr/ds = (m_an − m_irr)/k` at frozen
//! `m_an`, where `s ≥ 0` is the effective-field travel along `m_an − m_irr`.

use nalgebra::{Matrix2, Vector2};

use super::{BVec, HVec, Tangent2, MU0};
use crate::error::{Error, Result};

const MAX_ITER: usize = 50;
const SERIES_LIMIT: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JilesAthertonParams {
    /// Saturation magnetisation (A/m).
    pub ms: f64,
    /// Anhysteretic shape parameter (A/m).
    pub a: f64,
    /// Pinning parameter (A/m).
    pub k: f64,
    /// Reversible fraction.
    pub c: f64,
    /// Inter-domain coupling.
    pub alpha: f64,
}

impl JilesAthertonParams {
    /// Values used for the SMC grains.
    pub fn benchmark() -> Self {
        Self {
            ms: 1_145_500.0,
            a: 59.0,
            k: 99.0,
            c: 0.55,
            alpha: 1.3e-4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.ms > 0.0
            && self.a > 0.0
            && self.k > 0.0
            && (0.0..=1.0).contains(&self.c)
            && self.alpha >= 0.0
            && self.alpha * self.ms / (3.0 * self.a) < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(None, format!("invalid Jiles-Atherton parameters {self:?}")))
        }
    }
}

/// Converged history of one quadrature point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JAState {
    pub m_irr: Vector2<f64>,
    /// Effective field `h + α m`.
    pub he: Vector2<f64>,
    pub h: HVec,
    pub m: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JaResponse {
    pub h: HVec,
    pub tangent: Tangent2,
    pub state: JAState,
}

/// Langevin function and derivative.
fn langevin(x: f64) -> (f64, f64) {
    if x.abs() < SERIES_LIMIT {
        let x2 = x * x;
        (
            x * (1.0 / 3.0 - x2 / 45.0 + 2.0 * x2 * x2 / 945.0),
            1.0 / 3.0 - x2 / 15.0 + 2.0 * x2 * x2 / 189.0,
        )
    } else {
        let s = x.sinh();
        (1.0 / x.tanh() - 1.0 / x, 1.0 / (x * x) - 1.0 / (s * s))
    }
}

/// Anhysteretic magnetisation and its Jacobian with respect to `he`.
fn anhysteretic(he: &Vector2<f64>, p: &JilesAthertonParams) -> (Vector2<f64>, Matrix2<f64>) {
    let r = he.norm();
    let x = r / p.a;
    let (l, dl) = langevin(x);
    if x < SERIES_LIMIT {
        // f(r)/r is smooth and even; f'(r) ≈ f(r)/r near the origin.
        let f_over_r = p.ms / p.a * (1.0 / 3.0 - x * x / 45.0);
        let df = p.ms / p.a * dl;
        let m = he * f_over_r;
        if r == 0.0 {
            return (m, Matrix2::identity() * f_over_r);
        }
        let e = he / r;
        let ee = e * e.transpose();
        return (m, ee * df + (Matrix2::identity() - ee) * f_over_r);
    }
    let e = he / r;
    let f = p.ms * l;
    let df = p.ms * dl / p.a;
    let ee = e * e.transpose();
    (e * f, ee * df + (Matrix2::identity() - ee) * (f / r))
}

struct Eval {
    m: Vector2<f64>,
    m_irr: Vector2<f64>,
    /// dm/dhe
    dm: Matrix2<f64>,
}

fn magnetisation(he: &Vector2<f64>, prev: &JAState, p: &JilesAthertonParams) -> Eval {
    let (m_an, jan) = anhysteretic(he, p);
    let d = m_an - prev.m_irr;
    let dn = d.norm();
    let delta = he - prev.he;
    let mut m_irr = prev.m_irr;
    let mut dm_irr = Matrix2::zeros();
    if dn > 1e-14 * p.ms {
        let dh = d / dn;
        let s = dh.dot(&delta);
        if s > 0.0 {
            let ex = (-s / p.k).exp();
            m_irr += d * (1.0 - ex);
            let proj = Matrix2::identity() - dh * dh.transpose();
            let grad_s = dh + jan.transpose() * (proj * delta) / dn;
            dm_irr = jan * (1.0 - ex) + d * grad_s.transpose() * (ex / p.k);
        }
    }
    Eval {
        m: m_an * p.c + m_irr * (1.0 - p.c),
        m_irr,
        dm: jan * p.c + dm_irr * (1.0 - p.c),
    }
}

fn flux(he: &Vector2<f64>, m: &Vector2<f64>, p: &JilesAthertonParams) -> BVec {
    (he + m * (1.0 - p.alpha)) * MU0
}

/// Finds the field that produces `b_target` from the converged history
/// `prev`, by damped Newton on the effective field.
pub fn ja_update(b_target: &BVec, prev: &JAState, p: &JilesAthertonParams) -> Result<JaResponse> {
    if !b_target.iter().all(|v| v.is_finite()) {
        return Err(Error::Material {
            message: "non-finite flux density".into(),
            residual: f64::NAN,
        });
    }
    let tol = 1e-12 * (b_target.norm() + MU0 * p.ms);
    let mut he = prev.he;
    let mut ev = magnetisation(&he, prev, p);
    let mut res = flux(&he, &ev.m, p) - b_target;
    let mut converged = res.norm() <= tol;
    for _ in 0..MAX_ITER {
        if converged {
            break;
        }
        let jac = (Matrix2::identity() + ev.dm * (1.0 - p.alpha)) * MU0;
        let step = jac.lu().solve(&(-res)).unwrap_or_else(|| -res / MU0);
        let r0 = res.norm();
        let mut lambda = 1.0;
        loop {
            let trial = he + step * lambda;
            let tev = magnetisation(&trial, prev, p);
            let tres = flux(&trial, &tev.m, p) - b_target;
            if tres.norm() < r0 || lambda < 1e-6 {
                he = trial;
                ev = tev;
                res = tres;
                break;
            }
            lambda *= 0.5;
        }
        converged = res.norm() <= tol;
    }
    if !converged {
        return Err(Error::Material {
            message: format!("Jiles-Atherton inversion did not converge in {MAX_ITER} iterations"),
            residual: res.norm(),
        });
    }
    let dh_dhe = Matrix2::identity() - ev.dm * p.alpha;
    let db_dhe = (Matrix2::identity() + ev.dm * (1.0 - p.alpha)) * MU0;
    let inv = db_dhe.try_inverse().ok_or_else(|| Error::Material {
        message: "singular Jiles-Atherton differential permeability".into(),
        residual: res.norm(),
    })?;
    let h = he - ev.m * p.alpha;
    Ok(JaResponse {
        h,
        tangent: dh_dhe * inv,
        state: JAState {
            m_irr: ev.m_irr,
            he,
            h,
            m: ev.m,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn p() -> JilesAthertonParams {
        JilesAthertonParams::benchmark()
    }

    #[test]
    fn langevin_branches_agree_at_switch() {
        let x = SERIES_LIMIT * (1.0 - 1e-9);
        let series = langevin(x);
        let s = x.sinh();
        let direct = (1.0 / x.tanh() - 1.0 / x, 1.0 / (x * x) - 1.0 / (s * s));
        assert!((series.0 - direct.0).abs() < 1e-12);
        assert!((series.1 - direct.1).abs() < 1e-8);
        let (l, dl) = langevin(0.0);
        assert_eq!(l, 0.0);
        assert!((dl - 1.0 / 3.0).abs() < 1e-15);
        let (l, dl) = langevin(1e4);
        assert!((l - (1.0 - 1e-4)).abs() < 1e-12);
        assert!(dl.abs() < 1e-7);
    }

    #[test]
    fn zero_input_from_virgin_state() {
        let r = ja_update(&BVec::zeros(), &JAState::default(), &p()).unwrap();
        assert_eq!(r.h, HVec::zeros());
        assert_eq!(r.state.m, Vector2::zeros());
        assert!(r.tangent.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn inversion_reproduces_target() {
        let mut st = JAState::default();
        for i in 1..=40 {
            let b = BVec::new(0.04 * i as f64, 0.01 * i as f64);
            let r = ja_update(&b, &st, &p()).unwrap();
            let back = (r.h + r.state.m) * MU0;
            assert!((back - b).norm() <= 1e-10 * (b.norm() + 1e-3), "{back} vs {b}");
            assert!(r.state.m.norm() <= p().ms * (1.0 + 1e-9));
            st = r.state;
        }
    }

    #[test]
    fn saturation_reaches_ms() {
        let mut st = JAState::default();
        let mut last = None;
        for i in 1..=200 {
            let b = BVec::new(0.05 * i as f64, 0.0);
            let r = ja_update(&b, &st, &p()).unwrap();
            st = r.state.clone();
            last = Some(r);
        }
        let r = last.unwrap();
        let ratio = r.state.m.norm() / p().ms;
        assert!(ratio > 0.99 && ratio <= 1.0 + 1e-9, "{ratio}");
    }

    #[test]
    fn tangent_matches_frozen_state_difference() {
        let mut st = JAState::default();
        for i in 1..=10 {
            st = ja_update(&BVec::new(0.08 * i as f64, 0.03 * i as f64), &st, &p()).unwrap().state;
        }
        // probe increments that keep loading in the same direction
        let b = BVec::new(0.9, 0.34);
        let r = ja_update(&b, &st, &p()).unwrap();
        let eps = 1e-7;
        for c in 0..2 {
            let mut e = BVec::zeros();
            e[c] = eps;
            let hp = ja_update(&(b + e), &st, &p()).unwrap().h;
            let hm = ja_update(&(b - e), &st, &p()).unwrap().h;
            let fd = (hp - hm) / (2.0 * eps);
            for row in 0..2 {
                let err = (fd[row] - r.tangent[(row, c)]).abs();
                assert!(err <= 1e-5 * r.tangent.norm(), "({row},{c}): fd {} vs {}", fd[row], r.tangent[(row, c)]);
            }
        }
    }

    fn cycle(amp: f64, n: usize, periods: usize) -> Vec<(BVec, HVec)> {
        let mut st = JAState::default();
        let mut out = vec![(BVec::zeros(), HVec::zeros())];
        for i in 1..=n * periods {
            let th = 2.0 * PI * i as f64 / n as f64;
            let b = BVec::new(amp * th.sin(), 0.0);
            let r = ja_update(&b, &st, &p()).unwrap();
            out.push((b, r.h));
            st = r.state;
        }
        out
    }

    #[test]
    fn virgin_curve_is_odd() {
        let (mut sp, mut sm) = (JAState::default(), JAState::default());
        for i in 1..=30 {
            let b = BVec::new(0.03 * i as f64, -0.01 * i as f64);
            let rp = ja_update(&b, &sp, &p()).unwrap();
            let rm = ja_update(&-b, &sm, &p()).unwrap();
            assert!((rp.h + rm.h).norm() <= 1e-10 * rp.h.norm());
            sp = rp.state;
            sm = rm.state;
        }
    }

    #[test]
    fn cycle_dissipates_and_closes() {
        let n = 200;
        let traj = cycle(1.0, n, 3);
        let work = |k: usize| -> f64 {
            traj[k * n..=(k + 1) * n]
                .windows(2)
                .map(|w| 0.5 * (w[0].1 + w[1].1).dot(&(w[1].0 - w[0].0)))
                .sum()
        };
        assert!(work(1) > 0.0 && work(2) > 0.0);
        let hrange = traj[n..].iter().map(|x| x.1.x).fold(f64::MIN, f64::max)
            - traj[n..].iter().map(|x| x.1.x).fold(f64::MAX, f64::min);
        let gap = (traj[2 * n].1 - traj[n].1).norm();
        assert!(gap <= 0.01 * hrange, "gap {gap} range {hrange}");
    }

    #[test]
    fn rotating_field_dissipates() {
        let mut st = JAState::default();
        let mut prev_b = BVec::zeros();
        let mut prev_h = HVec::zeros();
        let mut w = 0.0;
        for i in 1..=600 {
            let th = 2.0 * PI * i as f64 / 200.0;
            let b = BVec::new(th.cos(), th.sin()) * 0.8 * (i as f64 / 100.0).min(1.0);
            let r = ja_update(&b, &st, &p()).unwrap();
            if i > 200 {
                w += 0.5 * (r.h + prev_h).dot(&(b - prev_b));
            }
            prev_b = b;
            prev_h = r.h;
            st = r.state;
        }
        assert!(w > 0.0, "{w}");
    }
}
