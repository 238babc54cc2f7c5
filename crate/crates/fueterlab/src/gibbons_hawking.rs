//! Closed-form Gibbons-Hawking model with potential `V = 1 + k/(2|u|)`.
//!
//! Forms are stored in the coframe `(du1, du2, du3, theta)` and vectors in its dual
//! frame; `*_coords` methods convert to the coordinates `(u1, u2, u3, psi)`. The
//! connection is `theta = c dpsi + A`, `c = |k|/2` (`c = 1` when `k = 0`), with a
//! Dirac-string gauge `A` per chart: north is regular off the negative `u3` axis,
//! south off the positive one.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Chart {
    North,
    South,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GHPoint {
    pub u: [f64; 3],
    pub psi: f64,
    pub chart: Chart,
}

impl GHPoint {
    /// Point with the chart chosen away from its Dirac string.
    pub fn new(u: [f64; 3], psi: f64) -> Self {
        let chart = if u[2] >= 0.0 { Chart::North } else { Chart::South };
        Self { u, psi: psi.rem_euclid(std::f64::consts::TAU), chart }
    }

    pub fn with_chart(u: [f64; 3], psi: f64, chart: Chart) -> Self {
        Self { u, psi, chart }
    }

    pub fn r(&self) -> f64 {
        norm3(&self.u)
    }
}

pub(crate) fn norm3(u: &[f64; 3]) -> f64 {
    (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt()
}

/// Gibbons-Hawking model of bundle degree `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GhModel {
    pub k: i32,
}

impl Default for GhModel {
    fn default() -> Self {
        Self { k: -4 }
    }
}

/// Everything the model provides at one point.
#[derive(Debug, Clone)]
pub struct HyperkahlerData {
    pub point: GHPoint,
    pub v: f64,
    /// `(A1, A2, A3, c)` with `theta = A_i du_i + c dpsi`.
    pub connection: [f64; 4],
    pub g: Matrix4<f64>,
    pub omega: [Matrix4<f64>; 3],
    pub alpha: [Vector4<f64>; 3],
    pub killing: [Vector4<f64>; 3],
}

const CYC: [(usize, usize, usize); 3] = [(0, 1, 2), (1, 2, 0), (2, 0, 1)];

impl GhModel {
    pub fn new(k: i32) -> Self {
        Self { k }
    }

    pub fn potential(&self, u: &[f64; 3]) -> f64 {
        1.0 + self.k as f64 / (2.0 * norm3(u))
    }

    pub fn grad_potential(&self, u: &[f64; 3]) -> [f64; 3] {
        let r = norm3(u);
        let c = -(self.k as f64) / (2.0 * r * r * r);
        [c * u[0], c * u[1], c * u[2]]
    }

    /// Fibre normalisation `c` in `theta = c dpsi + A`.
    pub fn fibre_scale(&self) -> f64 {
        if self.k == 0 {
            1.0
        } else {
            self.k.unsigned_abs() as f64 / 2.0
        }
    }

    /// Coefficient `phi(r) = 1/2 + k/(2r)` of the rotational part of the primitives.
    pub fn primitive_coefficient(&self, r: f64) -> f64 {
        0.5 + self.k as f64 / (2.0 * r)
    }

    /// `(A1, A2, A3, c)` in the given chart.
    pub fn connection(&self, u: &[f64; 3], chart: Chart) -> Result<[f64; 4]> {
        let r = norm3(u);
        let half_k = self.k as f64 / 2.0;
        let (den, sign) = match chart {
            Chart::North => (r * (r + u[2]), 1.0),
            Chart::South => (r * (r - u[2]), -1.0),
        };
        if den <= 1e-10 * r * r {
            return Err(Error::Chart(format!("{chart:?} chart is singular at u = {u:?}; switch charts")));
        }
        let f = sign * half_k / den;
        Ok([-f * u[1], f * u[0], 0.0, self.fibre_scale()])
    }

    /// Assembles metric, Kähler forms, primitives and Killing fields at `p`.
    pub fn data_at(&self, p: &GHPoint) -> Result<HyperkahlerData> {
        let u = p.u;
        let r = norm3(&u);
        let v = self.potential(&u);
        if !(v > 0.0) || !r.is_finite() || r == 0.0 {
            return Err(Error::Domain(format!("V = {v} <= 0 at u = {u:?}")));
        }
        let connection = self.connection(&u, p.chart)?;
        let g = Matrix4::from_diagonal(&Vector4::new(v, v, v, 1.0 / v));
        let phi = self.primitive_coefficient(r);
        let twist = -(self.k as f64) / 2.0;
        let mut omega = [Matrix4::zeros(); 3];
        let mut alpha = [Vector4::zeros(); 3];
        let mut killing = [Vector4::zeros(); 3];
        for (i, j, k) in CYC {
            let o = &mut omega[i];
            o[(3, i)] = 1.0;
            o[(i, 3)] = -1.0;
            o[(j, k)] = v;
            o[(k, j)] = -v;
            let a = &mut alpha[i];
            a[3] = -u[i];
            a[k] = phi * u[j];
            a[j] = -phi * u[k];
            let kv = &mut killing[i];
            kv[k] = u[j];
            kv[j] = -u[k];
            kv[3] = twist * u[i] / r;
        }
        Ok(HyperkahlerData { point: *p, v, connection, g, omega, alpha, killing })
    }
}

impl HyperkahlerData {
    pub fn g_inv(&self) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::new(1.0 / self.v, 1.0 / self.v, 1.0 / self.v, self.v))
    }

    /// Endomorphisms with `omega_a(X, Y) = g(I_a X, Y)`, i.e. `I_a = -g^-1 omega_a`.
    pub fn complex_structures(&self) -> [Matrix4<f64>; 3] {
        let gi = self.g_inv();
        [-gi * self.omega[0], -gi * self.omega[1], -gi * self.omega[2]]
    }

    /// Largest entrywise defect of `I_a I_b = -delta_ab + eps_abc I_c`.
    pub fn quaternion_defect(&self) -> f64 {
        let is = self.complex_structures();
        let id = Matrix4::<f64>::identity();
        let mut worst: f64 = 0.0;
        for a in 0..3 {
            worst = worst.max((is[a] * is[a] + id).amax());
        }
        for (a, b, c) in CYC {
            worst = worst.max((is[a] * is[b] - is[c]).amax());
            worst = worst.max((is[b] * is[a] + is[c]).amax());
        }
        worst
    }

    pub fn norm2(&self, covector: &Vector4<f64>) -> f64 {
        (covector.transpose() * self.g_inv() * covector)[0]
    }

    pub fn alpha_norm2_sum(&self) -> f64 {
        self.alpha.iter().map(|a| self.norm2(a)).sum()
    }

    /// `alpha_i` paired with the radial covector `sum u_i du_i` through the metric.
    pub fn alpha_radial_pairing(&self, i: usize) -> f64 {
        let u = self.point.u;
        let radial = Vector4::new(u[0], u[1], u[2], 0.0);
        (self.alpha[i].transpose() * self.g_inv() * radial)[0]
    }

    /// Rows express `(du1, du2, du3, theta)` in terms of `(du1, du2, du3, dpsi)`.
    pub fn coframe_jacobian(&self) -> Matrix4<f64> {
        let mut j = Matrix4::identity();
        for c in 0..4 {
            j[(3, c)] = self.connection[c];
        }
        j
    }

    pub fn alpha_coords(&self, i: usize) -> Vector4<f64> {
        self.coframe_jacobian().transpose() * self.alpha[i]
    }

    pub fn omega_coords(&self, i: usize) -> Matrix4<f64> {
        let j = self.coframe_jacobian();
        j.transpose() * self.omega[i] * j
    }

    pub fn metric_coords(&self) -> Matrix4<f64> {
        let j = self.coframe_jacobian();
        j.transpose() * self.g * j
    }

    /// Killing field components along `(d/du1, d/du2, d/du3, d/dpsi)`.
    pub fn killing_coords(&self, i: usize) -> Vector4<f64> {
        let j = self.coframe_jacobian();
        j.try_inverse().expect("unit lower-triangular") * self.killing[i]
    }

    /// `(iota_{v_k} omega_j - iota_{v_j} omega_k) / 2` for cyclic `(i, j, k)`.
    pub fn alpha_from_killing(&self, i: usize) -> Vector4<f64> {
        let (_, j, k) = CYC[i];
        let contract = |o: &Matrix4<f64>, x: &Vector4<f64>| o.transpose() * x;
        0.5 * (contract(&self.omega[j], &self.killing[k]) - contract(&self.omega[k], &self.killing[j]))
    }
}

/// Centered-difference exterior derivative `(d beta)_ab = d_a beta_b - d_b beta_a` of a
/// 1-form sampled in coordinates.
pub fn fd_exterior_derivative<F>(sampler: F, x: [f64; 4], h: f64) -> Result<Matrix4<f64>>
where
    F: Fn([f64; 4]) -> Result<Vector4<f64>>,
{
    let mut jac = Matrix4::zeros();
    for a in 0..4 {
        let (mut xp, mut xm) = (x, x);
        xp[a] += h;
        xm[a] -= h;
        let d = (sampler(xp)? - sampler(xm)?) / (2.0 * h);
        for b in 0..4 {
            jac[(a, b)] = d[b];
        }
    }
    Ok(jac - jac.transpose())
}

/// Components `(d omega)_abc`, `a < b < c`, of a sampled 2-form, ordered
/// `012, 013, 023, 123`, together with the largest single term for scaling.
pub fn fd_exterior_derivative_2form<F>(sampler: F, x: [f64; 4], h: f64) -> Result<([f64; 4], f64)>
where
    F: Fn([f64; 4]) -> Result<Matrix4<f64>>,
{
    let mut der = Vec::with_capacity(4);
    for a in 0..4 {
        let (mut xp, mut xm) = (x, x);
        xp[a] += h;
        xm[a] -= h;
        der.push((sampler(xp)? - sampler(xm)?) / (2.0 * h));
    }
    let triples = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)];
    let mut out = [0.0; 4];
    let mut scale: f64 = 0.0;
    for (n, (a, b, c)) in triples.into_iter().enumerate() {
        let terms = [der[a][(b, c)], der[b][(c, a)], der[c][(a, b)]];
        out[n] = terms.iter().sum();
        scale = terms.iter().fold(scale, |m, t| m.max(t.abs()));
    }
    Ok((out, scale))
}

/// Largest component of `*_3 d theta + dV`, with `d theta` by centered differences of
/// the chart connection, relative to `|dV|`.
pub fn star_d_theta_defect(model: &GhModel, p: &GHPoint, h: f64) -> Result<f64> {
    let chart = p.chart;
    let m = *model;
    let dth = fd_exterior_derivative(
        move |x| Ok(Vector4::from(m.connection(&[x[0], x[1], x[2]], chart)?)),
        [p.u[0], p.u[1], p.u[2], p.psi],
        h,
    )?;
    let dv = model.grad_potential(&p.u);
    let star = [dth[(1, 2)], dth[(2, 0)], dth[(0, 1)]];
    let scale = norm3(&dv);
    Ok((0..3).map(|i| (star[i] + dv[i]).abs()).fold(0.0, f64::max) / scale)
}

/// Smooth profile `F(s)` of `s = |u|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialFunction {
    /// `F(s) = s`.
    Quadratic,
    Constant(f64),
    /// `F(s) = cap tanh(s / cap)`.
    SmoothCapped { cap: f64 },
}

impl RadialFunction {
    /// `(F, F', F'')` at `s`.
    pub fn eval(&self, s: f64) -> (f64, f64, f64) {
        match *self {
            RadialFunction::Quadratic => (s, 1.0, 0.0),
            RadialFunction::Constant(c) => (c, 0.0, 0.0),
            RadialFunction::SmoothCapped { cap } => {
                let th = (s / cap).tanh();
                let sech2 = 1.0 - th * th;
                (cap * th, sech2, -2.0 * sech2 * th / cap)
            }
        }
    }

    pub fn value_at(&self, u: &[f64; 3]) -> f64 {
        self.eval(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).0
    }
}

/// Symmetric 2-tensor in the orthonormal frame `(e1, e2, e3, e0)`,
/// `e0 = V^{1/2} d/dtheta`, `e_i = V^{-1/2} d/du_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameForm {
    pub frame: Matrix4<f64>,
    pub v: f64,
}

impl FrameForm {
    /// Coefficients in the coframe `(du1, du2, du3, theta)`.
    pub fn coframe(&self) -> Matrix4<f64> {
        let s = Vector4::new(self.v.sqrt(), self.v.sqrt(), self.v.sqrt(), 1.0 / self.v.sqrt());
        Matrix4::from_diagonal(&s) * self.frame * Matrix4::from_diagonal(&s)
    }

    pub fn asymmetry(&self) -> f64 {
        (self.frame - self.frame.transpose()).amax()
    }
}

/// Closed-form Hessian of `f = F(|u|^2)` in the model.
pub fn hessian_radial(model: &GhModel, f: &RadialFunction, p: &GHPoint, r_min: f64) -> Result<FrameForm> {
    let r = p.r();
    if r < r_min {
        return Err(Error::Regime(format!("|u| = {r} below the asymptotic regime {r_min}")));
    }
    let v = model.potential(&p.u);
    if !(v > 0.0) {
        return Err(Error::Domain(format!("V = {v} <= 0")));
    }
    let (_, f1, f2) = f.eval(r * r);
    let u = Vector3::from(p.u);
    let dv = Vector3::from(model.grad_potential(&p.u));
    let udv = u.dot(&dv);
    let mut hs: Matrix3<f64> = Matrix3::identity() * (f1 * (2.0 / v + udv / (v * v)));
    hs -= (u * dv.transpose() + dv * u.transpose()) * (f1 / (v * v));
    hs += u * u.transpose() * (4.0 * f2 / v);
    let h0i = u.cross(&dv) * (f1 / (v * v));
    let mut m = Matrix4::zeros();
    for i in 0..3 {
        for j in 0..3 {
            m[(i, j)] = hs[(i, j)];
        }
        m[(i, 3)] = h0i[i];
        m[(3, i)] = h0i[i];
    }
    m[(3, 3)] = -f1 * udv / (v * v);
    Ok(FrameForm { frame: m, v })
}

/// Hessian by nested centered differences in the orthonormal frame, corrected with
/// the Levi-Civita connection table of the model.
pub fn fd_hessian(model: &GhModel, f: &RadialFunction, p: &GHPoint, h: f64) -> Result<FrameForm> {
    let vfun = |u: &[f64; 3]| model.potential(u);
    if !(vfun(&p.u) > 0.0) {
        return Err(Error::Domain("V <= 0".into()));
    }
    let shift = |u: &[f64; 3], a: usize, d: f64| {
        let mut w = *u;
        w[a] += d;
        w
    };
    let ffun = |u: &[f64; 3]| f.value_at(u);
    let grad = |g: &dyn Fn(&[f64; 3]) -> f64, u: &[f64; 3]| -> [f64; 3] {
        let mut out = [0.0; 3];
        for (a, o) in out.iter_mut().enumerate() {
            *o = (g(&shift(u, a, h)) - g(&shift(u, a, -h))) / (2.0 * h);
        }
        out
    };
    // e_j f = V^{-1/2} df/du_j
    let ej_f = |u: &[f64; 3], j: usize| -> f64 { grad(&ffun, u)[j] / vfun(u).sqrt() };
    let u = p.u;
    let v = vfun(&u);
    let df = grad(&ffun, &u);
    let dv = grad(&vfun, &u);
    let c = 1.0 / (2.0 * v * v);
    let dvdf: f64 = (0..3).map(|k| dv[k] * df[k]).sum();
    let mut m = Matrix4::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let eij = (ej_f(&shift(&u, i, h), j) - ej_f(&shift(&u, i, -h), j)) / (2.0 * h) / v.sqrt();
            let delta = if i == j { 1.0 } else { 0.0 };
            m[(i, j)] = eij - c * (dv[j] * df[i] - delta * dvdf);
        }
    }
    for (i, j, k) in CYC {
        let x = c * (dv[j] * df[k] - dv[k] * df[j]);
        m[(i, 3)] = -x;
        m[(3, i)] = -x;
    }
    m[(3, 3)] = -c * dvdf;
    Ok(FrameForm { frame: m, v })
}

/// Both sides of the pointwise energy identity for a section `x -> (u, psi)` of the
/// model over flat R^3 with coordinates `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyIdentity {
    /// `|nabla u|^2 / 2`.
    pub lhs: f64,
    /// `-sum_i (u^* omega_i wedge dx_i)(e1, e2, e3)`.
    pub rhs: f64,
    pub residual: f64,
}

pub fn energy_2form_residual<S>(model: &GhModel, section: S, x: [f64; 3], h: f64) -> Result<EnergyIdentity>
where
    S: Fn([f64; 3]) -> ([f64; 3], f64),
{
    let (u0, psi0) = section(x);
    let data = model.data_at(&GHPoint::new(u0, psi0))?;
    let jac = data.coframe_jacobian();
    // columns: coframe components of d_a u for a = 1, 2, 3
    let mut du = [Vector4::zeros(); 3];
    for (a, d) in du.iter_mut().enumerate() {
        let (mut xp, mut xm) = (x, x);
        xp[a] += h;
        xm[a] -= h;
        let (up, pp) = section(xp);
        let (um, pm) = section(xm);
        let mut dpsi = pp - pm;
        dpsi -= std::f64::consts::TAU * (dpsi / std::f64::consts::TAU).round();
        let coord = Vector4::new(up[0] - um[0], up[1] - um[1], up[2] - um[2], dpsi) / (2.0 * h);
        *d = jac * coord;
    }
    let lhs = 0.5 * du.iter().map(|d| (d.transpose() * data.g * d)[0]).sum::<f64>();
    let mut rhs = 0.0;
    for (i, j, k) in CYC {
        rhs -= (du[j].transpose() * data.omega[i] * du[k])[0];
    }
    let scale = lhs.abs().max(rhs.abs());
    let residual = if scale > 0.0 { (lhs - rhs).abs() / scale } else { 0.0 };
    Ok(EnergyIdentity { lhs, rhs, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn alpha_sampler(model: GhModel, chart: Chart, i: usize) -> impl Fn([f64; 4]) -> Result<Vector4<f64>> {
        move |x| {
            let d = model.data_at(&GHPoint::with_chart([x[0], x[1], x[2]], x[3], chart))?;
            Ok(d.alpha_coords(i))
        }
    }

    #[test]
    fn potential_example() {
        let m = GhModel::new(-4);
        assert_relative_eq!(m.potential(&[0.0, 0.0, 50.0]), 0.96, max_relative = 1e-15);
        assert!(matches!(m.data_at(&GHPoint::new([0.0, 0.0, 1.5], 0.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn metric_and_norms() {
        let m = GhModel::new(-4);
        let d = m.data_at(&GHPoint::new([3.0, -4.0, 12.0], 0.3)).unwrap();
        let v = d.v;
        let theta = Vector4::new(0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(d.norm2(&theta), v, max_relative = 1e-15);
        assert_relative_eq!(d.norm2(&Vector4::new(1.0, 0.0, 0.0, 0.0)), 1.0 / v, max_relative = 1e-15);
        assert!(d.metric_coords().symmetric_eigen().eigenvalues.iter().all(|e| *e > 0.0));
    }

    #[test]
    fn alpha_sum_at_fifty() {
        let d = GhModel::new(-4).data_at(&GHPoint::new([0.0, 0.0, 50.0], 0.0)).unwrap();
        let (v, phi) = (0.96, 0.46);
        assert_relative_eq!(d.alpha_norm2_sum(), 2500.0 * (v + 2.0 * phi * phi / v), max_relative = 1e-12);
        assert!(d.alpha_norm2_sum() <= 1.5 * 2500.0);
    }

    #[test]
    fn alpha_is_killing_contraction() {
        let d = GhModel::new(-4).data_at(&GHPoint::new([5.0, 7.0, 9.0], 1.0)).unwrap();
        for i in 0..3 {
            assert!((d.alpha[i] - d.alpha_from_killing(i)).amax() < 1e-12);
            assert!(d.alpha_radial_pairing(i).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_quaternion_relations() {
        let d = GhModel::new(0).data_at(&GHPoint::new([1.0, 2.0, 3.0], 0.0)).unwrap();
        assert!(d.quaternion_defect() < 1e-15);
    }

    #[test]
    fn constant_form_has_zero_derivative() {
        let dd = fd_exterior_derivative(|_| Ok(Vector4::new(1.0, -2.0, 3.0, 0.5)), [1.0, 1.0, 1.0, 0.0], 1e-3).unwrap();
        assert_eq!(dd.amax(), 0.0);
    }

    #[test]
    fn d_alpha3_matches_omega3() {
        let m = GhModel::new(-4);
        let x = [5.0, 7.0, 9.0, 0.4];
        let exact = m.data_at(&GHPoint::with_chart([5.0, 7.0, 9.0], 0.4, Chart::North)).unwrap().omega_coords(2);
        let err = |h: f64| (fd_exterior_derivative(alpha_sampler(m, Chart::North, 2), x, h).unwrap() - exact).amax();
        assert!(err(1e-3) / exact.amax() < 1e-5);
        let order = (err(2e-3) / err(1e-3)).log2();
        assert!(order > 1.9, "{order}");
    }

    #[test]
    fn chart_error_on_dirac_string() {
        let m = GhModel::new(-4);
        let r = m.data_at(&GHPoint::with_chart([0.0, 0.0, -10.0], 0.0, Chart::North));
        assert!(matches!(r, Err(Error::Chart(_))));
        assert!(m.data_at(&GHPoint::new([0.0, 0.0, -10.0], 0.0)).is_ok());
    }

    #[test]
    fn hessian_examples() {
        let m = GhModel::new(-4);
        let p = GHPoint::new([0.0, 0.0, 50.0], 0.0);
        let h = hessian_radial(&m, &RadialFunction::Quadratic, &p, 11.0).unwrap();
        assert_relative_eq!(h.coframe()[(3, 3)], -2.0 / (50.0 * 0.96f64.powi(3)), max_relative = 1e-12);
        let z = hessian_radial(&m, &RadialFunction::Constant(3.0), &p, 11.0).unwrap();
        assert_eq!(z.frame.amax(), 0.0);
        assert!(matches!(
            hessian_radial(&m, &RadialFunction::Quadratic, &GHPoint::new([0.0, 0.0, 5.0], 0.0), 11.0),
            Err(Error::Regime(_))
        ));
    }

    #[test]
    fn hessian_displayed_form() {
        // coefficients of the closed form in the coframe for V = 1 - 2/r
        let m = GhModel::new(-4);
        let u = [3.0, 4.0, 12.0];
        let r: f64 = 13.0;
        let v = 1.0 - 2.0 / r;
        let h = hessian_radial(&m, &RadialFunction::Quadratic, &GHPoint::new(u, 0.0), 11.0).unwrap().coframe();
        for i in 0..3 {
            for j in 0..3 {
                let delta = if i == j { 2.0 * (1.0 + 1.0 / (r * v)) } else { 0.0 };
                let want = delta - 4.0 / (r.powi(3) * v) * u[i] * u[j];
                assert_relative_eq!(h[(i, j)], want, max_relative = 1e-12, epsilon = 1e-14);
            }
            assert!(h[(i, 3)].abs() < 1e-15);
        }
    }

    #[test]
    fn fd_hessian_flat_and_agreement() {
        let flat = fd_hessian(&GhModel::new(0), &RadialFunction::Quadratic, &GHPoint::new([1.0, 2.0, 3.0], 0.0), 1e-3).unwrap();
        let mut want = Matrix4::identity() * 2.0;
        want[(3, 3)] = 0.0;
        assert!((flat.frame - want).amax() < 1e-6);
        let m = GhModel::new(-4);
        let p = GHPoint::new([3.0, 4.0, 12.0], 0.0);
        let a = hessian_radial(&m, &RadialFunction::Quadratic, &p, 11.0).unwrap();
        let b = fd_hessian(&m, &RadialFunction::Quadratic, &p, 1e-3).unwrap();
        assert!((a.frame - b.frame).amax() <= 1e-4);
        assert!(b.asymmetry() <= 1e-8);
    }

    #[test]
    fn energy_identity_constant_section() {
        let e = energy_2form_residual(&GhModel::new(-4), |_| ([0.0, 0.0, 20.0], 0.0), [0.1, 0.2, 0.0], 1e-3).unwrap();
        assert_eq!((e.lhs, e.rhs), (0.0, 0.0));
    }
}
