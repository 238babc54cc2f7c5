//! Model Z2-harmonic 1-forms, finite-difference checks of `dV = d^*V = 0` on local
//! lifts, and zero-locus extraction with a Minkowski-content curve.

use std::collections::VecDeque;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fueter_families::FamilyKind;
use crate::multivalued::{TwoValuedField, AMBIGUITY_TOL};
use crate::quadrature::{fit_line, LineFit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// `+-e^3`, nowhere zero.
    ConstantDt,
    /// `+-Re(sqrt(e^{i phase} z) dz)` with `z = x1 + i x2`; zero locus the `x3`-axis.
    Branch { phase: f64 },
    /// The single-valued form `d(x1 x2)`.
    Saddle,
    /// Limit of a normalised family: `ConstantDt` for vertical families, the branch form
    /// of `sqrt(-z)` for the horizontal family with datum `q = z`.
    FamilyLimit { family: FamilyKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Z2HarmonicModel {
    pub kind: ModelKind,
    pub amplitude: f64,
}

impl Z2HarmonicModel {
    pub fn constant_dt(amplitude: f64) -> Self {
        Self { kind: ModelKind::ConstantDt, amplitude }
    }

    pub fn branch(amplitude: f64) -> Self {
        Self { kind: ModelKind::Branch { phase: 0.0 }, amplitude }
    }

    pub fn saddle(amplitude: f64) -> Self {
        Self { kind: ModelKind::Saddle, amplitude }
    }

    fn resolved(&self) -> ModelKind {
        match self.kind {
            ModelKind::FamilyLimit { family: FamilyKind::Vertical } => ModelKind::ConstantDt,
            ModelKind::FamilyLimit { family: FamilyKind::Horizontal } => {
                ModelKind::Branch { phase: std::f64::consts::PI }
            }
            k => k,
        }
    }

    /// Homogeneity degree about the origin.
    pub fn degree(&self) -> f64 {
        match self.resolved() {
            ModelKind::ConstantDt => 0.0,
            ModelKind::Branch { .. } => 0.5,
            ModelKind::Saddle => 1.0,
            ModelKind::FamilyLimit { .. } => unreachable!(),
        }
    }

    /// One representative of the pair.
    pub fn eval(&self, x: [f64; 3]) -> [f64; 3] {
        let a = self.amplitude;
        match self.resolved() {
            ModelKind::ConstantDt => [0.0, 0.0, a],
            ModelKind::Branch { phase } => {
                let g = (C64::from_polar(1.0, phase) * C64::new(x[0], x[1])).sqrt();
                [a * g.re, -a * g.im, 0.0]
            }
            ModelKind::Saddle => [a * x[1], a * x[0], 0.0],
            ModelKind::FamilyLimit { .. } => unreachable!(),
        }
    }

    /// `jac[i][j] = d value_i / d x_j` for the lift returned by `eval`.
    pub fn jacobian(&self, x: [f64; 3]) -> [[f64; 3]; 3] {
        let a = self.amplitude;
        match self.resolved() {
            ModelKind::ConstantDt => [[0.0; 3]; 3],
            ModelKind::Branch { phase } => {
                let e = C64::from_polar(1.0, phase);
                let g = (e * C64::new(x[0], x[1])).sqrt();
                if g.norm() == 0.0 {
                    return [[f64::INFINITY; 3]; 3];
                }
                let d = e / (2.0 * g);
                [[a * d.re, -a * d.im, 0.0], [-a * d.im, -a * d.re, 0.0], [0.0; 3]]
            }
            ModelKind::Saddle => [[0.0, a, 0.0], [a, 0.0, 0.0], [0.0; 3]],
            ModelKind::FamilyLimit { .. } => unreachable!(),
        }
    }

    /// Distance in the `(x1, x2)` plane to the zero locus, `+inf` when there is none.
    pub fn distance_to_zero_locus(&self, x: [f64; 3]) -> f64 {
        match self.resolved() {
            ModelKind::ConstantDt => f64::INFINITY,
            ModelKind::Branch { .. } | ModelKind::Saddle => x[0].hypot(x[1]),
            ModelKind::FamilyLimit { .. } => unreachable!(),
        }
    }

    pub fn sample(&self, dims: [usize; 3], h: f64, origin: [f64; 3]) -> TwoValuedField {
        let mut f = TwoValuedField::from_fn(dims, h, origin, 3, |x| self.eval(x).to_vec());
        f.frame = "e1,e2,e3".into();
        f
    }
}

fn neg(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| -x).collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Breadth-first sign propagation over each connected component of `region`, seeded at
/// its smallest index. Returns the sign per cell (0 outside the region).
pub fn lift_signs(f: &TwoValuedField, region: &[bool]) -> Result<Vec<i8>> {
    let mut sign = vec![0i8; f.len()];
    let mut queue = VecDeque::new();
    for seed in 0..f.len() {
        if !region[seed] || sign[seed] != 0 {
            continue;
        }
        sign[seed] = 1;
        queue.push_back(seed);
        while let Some(c) = queue.pop_front() {
            let vc: Vec<f64> = f.value(c).iter().map(|x| x * sign[c] as f64).collect();
            for axis in 0..3 {
                for step in [-1isize, 1] {
                    let Some(n) = f.neighbour(c, axis, step) else { continue };
                    if !region[n] {
                        continue;
                    }
                    let vn = f.value(n);
                    let (dp, dm) = (dist2(&vc, vn), dist2(&vc, &neg(vn)));
                    let want: i8 = if dp <= dm { 1 } else { -1 };
                    if sign[n] == 0 {
                        sign[n] = want;
                        queue.push_back(n);
                    } else if sign[n] != want {
                        let scale = vc.iter().map(|x| x * x).sum::<f64>().sqrt() + f.magnitude(n);
                        if (dp.sqrt() - dm.sqrt()).abs() > AMBIGUITY_TOL * scale {
                            let x = f.centre(n);
                            return Err(Error::Topology(format!(
                                "sign propagation inconsistent at ({:.4}, {:.4}, {:.4}); region meets the branch set",
                                x[0], x[1], x[2]
                            )));
                        }
                    }
                }
            }
        }
    }
    Ok(sign)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarmonicResidual {
    pub d_residual: f64,
    pub dstar_residual: f64,
    /// Cells where the full centred stencil lies in the region.
    pub cells: usize,
}

/// Max-norm centred-difference residuals of `dV` and `d^*V` on the lifted field, over
/// region cells whose whole stencil lies in the region.
pub fn harmonic_residual(f: &TwoValuedField, region: &[bool]) -> Result<HarmonicResidual> {
    if f.fiber != 3 {
        return Err(Error::Dimension(f.fiber, 3));
    }
    let sign = lift_signs(f, region)?;
    let lifted = |i: usize, k: usize| f.value(i)[k] * sign[i] as f64;
    let mut out = HarmonicResidual { d_residual: 0.0, dstar_residual: 0.0, cells: 0 };
    'cells: for idx in 0..f.len() {
        if !region[idx] {
            continue;
        }
        let mut jac = [[0.0; 3]; 3];
        for axis in 0..3 {
            if f.dims[axis] < 2 {
                continue;
            }
            let (Some(p), Some(m)) = (f.neighbour(idx, axis, 1), f.neighbour(idx, axis, -1)) else {
                if f.dims[axis] < 3 {
                    continue;
                }
                continue 'cells;
            };
            if !region[p] || !region[m] {
                continue 'cells;
            }
            for k in 0..3 {
                jac[k][axis] = (lifted(p, k) - lifted(m, k)) / (2.0 * f.h);
            }
        }
        let curl = [jac[2][1] - jac[1][2], jac[0][2] - jac[2][0], jac[1][0] - jac[0][1]];
        let d = curl.iter().map(|x| x * x).sum::<f64>().sqrt();
        let div = (jac[0][0] + jac[1][1] + jac[2][2]).abs();
        out.d_residual = out.d_residual.max(d);
        out.dstar_residual = out.dstar_residual.max(div);
        out.cells += 1;
    }
    Ok(out)
}

/// Mask of cells whose centre satisfies `keep`.
pub fn region_from<F: Fn([f64; 3]) -> bool>(f: &TwoValuedField, keep: F) -> Vec<bool> {
    (0..f.len()).map(|i| keep(f.centre(i))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroLocusReport {
    pub eps: f64,
    pub cells: Vec<usize>,
    /// `(r, |T_r| / (pi r^2))` with `T_r` the union of `r`-balls about locus cell centres,
    /// measured on the lattice and clipped to the box.
    pub content_curve: Vec<(f64, f64)>,
}

/// `max|V| * sqrt(h)`, matched to the square-root vanishing of branch forms.
pub fn default_eps(f: &TwoValuedField) -> f64 {
    let m = (0..f.len()).map(|i| f.magnitude(i)).fold(0.0, f64::max);
    m * f.h.sqrt()
}

pub fn zero_locus(f: &TwoValuedField, eps: f64, radii: &[f64]) -> ZeroLocusReport {
    let cells: Vec<usize> = (0..f.len()).filter(|&i| f.magnitude(i) <= eps).collect();
    let mut curve = Vec::new();
    for &r in radii {
        let rc = r / f.h;
        let span = rc.floor() as isize;
        let sp = |a: usize| if f.dims[a] > 1 { span } else { 0 };
        let mut offs = Vec::new();
        for dk in -sp(2)..=sp(2) {
            for dj in -sp(1)..=sp(1) {
                for di in -sp(0)..=sp(0) {
                    if ((di * di + dj * dj + dk * dk) as f64) <= rc * rc {
                        offs.push([di, dj, dk]);
                    }
                }
            }
        }
        let mut mark = vec![false; f.len()];
        for &c in &cells {
            let cc = f.coords(c);
            for o in &offs {
                let mut p = [0usize; 3];
                let mut ok = true;
                for a in 0..3 {
                    let v = cc[a] as isize + o[a];
                    if v < 0 || v >= f.dims[a] as isize {
                        ok = false;
                        break;
                    }
                    p[a] = v as usize;
                }
                if ok {
                    mark[f.index(p[0], p[1], p[2])] = true;
                }
            }
        }
        let vol = mark.iter().filter(|&&b| b).count() as f64 * f.cell_measure();
        curve.push((r, vol / (std::f64::consts::PI * r * r)));
    }
    ZeroLocusReport { eps, cells, content_curve: curve }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderFit {
    pub exponent: f64,
    pub r2: f64,
}

/// Regression of `log osc(2^k h)` on `log(2^k h)`, where `osc(s)` is the largest pair
/// distance between a cell within distance `s` of `centre` and its lattice neighbour at
/// offset `s` along an active axis.
pub fn holder_exponent_fit(f: &TwoValuedField, centre: [f64; 3], k_min: u32, k_max: u32) -> Result<HolderFit> {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for k in k_min..=k_max {
        let s = 1isize << k;
        let sr = s as f64 * f.h;
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..3 {
            let c = (centre[a] - f.origin[a]) / f.h - 0.5;
            lo[a] = (c - s as f64).floor().clamp(0.0, f.dims[a] as f64 - 1.0) as usize;
            hi[a] = (c + s as f64).ceil().clamp(0.0, f.dims[a] as f64 - 1.0) as usize;
        }
        let mut osc: f64 = 0.0;
        for kk in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let idx = f.index(i, j, kk);
                    let x = f.centre(idx);
                    let d2: f64 = (0..3).filter(|&a| f.dims[a] > 1).map(|a| (x[a] - centre[a]).powi(2)).sum();
                    if d2 > sr * sr {
                        continue;
                    }
                    for axis in 0..3 {
                        if f.dims[axis] < 2 {
                            continue;
                        }
                        if let Some(n) = f.neighbour(idx, axis, s) {
                            osc = osc.max(crate::multivalued::pair_distance(f.value(idx), f.value(n))?);
                        }
                    }
                }
            }
        }
        if osc > 0.0 {
            xs.push(sr.ln());
            ys.push(osc.ln());
        }
    }
    if xs.len() < 2 {
        return Err(Error::Degenerate("fewer than two dyadic scales with nonzero oscillation".into()));
    }
    let LineFit { slope, r2, .. } = fit_line(&xs, &ys);
    Ok(HolderFit { exponent: slope, r2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eval_examples() {
        let c = Z2HarmonicModel::constant_dt(2.0);
        assert_eq!(c.eval([0.3, -4.0, 1.0]), [0.0, 0.0, 2.0]);
        let b = Z2HarmonicModel::branch(1.5);
        assert_eq!(b.eval([1.0, 0.0, 0.0]), [1.5, 0.0, 0.0]);
        let x = [0.3, -0.7, 0.0];
        let m = b.eval(x).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_relative_eq!(m, 1.5 * x[0].hypot(x[1]).sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn analytic_jacobian() {
        for m in [Z2HarmonicModel::branch(1.0), Z2HarmonicModel::saddle(2.0), Z2HarmonicModel {
            kind: ModelKind::FamilyLimit { family: FamilyKind::Horizontal },
            amplitude: 1.0,
        }] {
            let x = [0.4, 0.25, 0.1];
            let j = m.jacobian(x);
            for k in 0..3 {
                let mut p = x;
                let mut q = x;
                p[k] += 1e-6;
                q[k] -= 1e-6;
                let (a, b) = (m.eval(p), m.eval(q));
                for i in 0..3 {
                    assert!(((a[i] - b[i]) / 2e-6 - j[i][k]).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn constant_is_exactly_harmonic() {
        let f = Z2HarmonicModel::constant_dt(1.0).sample([16, 16, 4], 1.0 / 16.0, [0.0; 3]);
        let r = harmonic_residual(&f, &vec![true; f.len()]).unwrap();
        assert_eq!((r.d_residual, r.dstar_residual), (0.0, 0.0));
    }

    #[test]
    fn annulus_lift_is_rejected() {
        let h = 1.0 / 32.0;
        let f = Z2HarmonicModel::branch(1.0).sample([64, 64, 3], h, [-1.0, -1.0, 0.0]);
        let ring = region_from(&f, |x| x[0].hypot(x[1]) > 0.3);
        assert!(matches!(harmonic_residual(&f, &ring), Err(Error::Topology(_))));
    }

    #[test]
    fn non_harmonic_control() {
        for n in [32usize, 64] {
            let h = 1.0 / n as f64;
            let f = TwoValuedField::from_fn([n, n, 3], h, [0.0; 3], 3, |x| vec![x[0] * x[0], 0.0, 0.0]);
            let r = harmonic_residual(&f, &vec![true; f.len()]).unwrap();
            assert!(r.dstar_residual > 1.5);
        }
    }

    #[test]
    fn zero_locus_of_constant_is_empty() {
        let f = Z2HarmonicModel::constant_dt(1.0).sample([8, 8, 8], 0.125, [0.0; 3]);
        let z = zero_locus(&f, default_eps(&f), &[0.5]);
        assert!(z.cells.is_empty());
        assert_eq!(z.content_curve[0].1, 0.0);
    }
}
