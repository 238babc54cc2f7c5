//! Based rational maps `S(zeta) = (a1 zeta + a0) / (zeta^2 + b0)` as coordinates on the
//! double cover of the Atiyah-Hitchin manifold, and a concrete total version of the
//! asymptotic projection to `R^3 / Z2`.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::ah_geometry::{smoothstep5, RadialCutoff};
use crate::error::{Error, Result};

/// Tolerance on `a0^2 + b0 a1^2 = 1`, relative to the size of the terms.
pub const SLICE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonopoleRep {
    pub a0: C64,
    pub a1: C64,
    pub b0: C64,
}

impl MonopoleRep {
    pub fn new(a0: C64, a1: C64, b0: C64) -> Self {
        Self { a0, a1, b0 }
    }

    pub fn real(a0: f64, a1: f64, b0: f64) -> Self {
        Self::new(C64::new(a0, 0.0), C64::new(a1, 0.0), C64::new(b0, 0.0))
    }

    /// Defect of the normalisation slice, relative to `1 + |a0|^2 + |b0 a1^2|`.
    pub fn slice_residual(&self) -> f64 {
        let t = self.b0 * self.a1 * self.a1;
        (self.a0 * self.a0 + t - 1.0).norm() / (1.0 + self.a0.norm_sqr() + t.norm())
    }

    pub fn validate(&self) -> Result<()> {
        if self.a0 == C64::new(0.0, 0.0) && self.a1 == C64::new(0.0, 0.0) {
            return Err(Error::Domain("a0 and a1 both vanish".into()));
        }
        let r = self.slice_residual();
        if !(r <= SLICE_TOL) {
            return Err(Error::Domain(format!("a0^2 + b0 a1^2 = 1 violated (relative residual {r:e})")));
        }
        Ok(())
    }

    /// The other lift `(-a0, -a1, b0)`.
    pub fn lift_swap(&self) -> Self {
        Self::new(-self.a0, -self.a1, self.b0)
    }

    pub fn eval(&self, zeta: C64) -> C64 {
        (self.a1 * zeta + self.a0) / (zeta * zeta + self.b0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AHAlgPoint {
    pub z1: C64,
    pub z2: C64,
    pub z3: C64,
    pub z4: C64,
}

impl AHAlgPoint {
    /// `(|z1 z3 - z2^2|, |z1 + z3 z4 - 1|)`.
    pub fn residuals(&self) -> (f64, f64) {
        ((self.z1 * self.z3 - self.z2 * self.z2).norm(), (self.z1 + self.z3 * self.z4 - 1.0).norm())
    }
}

/// `(a0, a1, b0) -> (a0^2, a0 a1, a1^2, b0)`.
pub fn to_quotient(m: &MonopoleRep) -> Result<AHAlgPoint> {
    m.validate()?;
    Ok(AHAlgPoint { z1: m.a0 * m.a0, z2: m.a0 * m.a1, z3: m.a1 * m.a1, z4: m.b0 })
}

/// `(a0, a1, b0) -> (a0, a1 / lambda, lambda^2 b0)` for `|lambda| = 1`.
pub fn u1_act(lambda: C64, m: &MonopoleRep) -> Result<MonopoleRep> {
    if (lambda.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::Argument(format!("|lambda| = {} != 1", lambda.norm())));
    }
    Ok(MonopoleRep::new(m.a0, m.a1 / lambda, lambda * lambda * m.b0))
}

/// The induced action on the quotient coordinates.
pub fn u1_act_quotient(lambda: C64, z: &AHAlgPoint) -> AHAlgPoint {
    AHAlgPoint { z1: z.z1, z2: z.z2 / lambda, z3: z.z3 / (lambda * lambda), z4: lambda * lambda * z.z4 }
}

/// An unordered pair `{x, -x}` in `R^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Z2Point3 {
    pub x: [f64; 3],
}

impl Z2Point3 {
    pub const ZERO: Z2Point3 = Z2Point3 { x: [0.0; 3] };

    pub fn norm(&self) -> f64 {
        crate::gibbons_hawking::norm3(&self.x)
    }

    /// `min(|x - y|, |x + y|)`.
    pub fn distance(&self, o: &Z2Point3) -> f64 {
        let d = |s: f64| {
            ((self.x[0] - s * o.x[0]).powi(2) + (self.x[1] - s * o.x[1]).powi(2) + (self.x[2] - s * o.x[2]).powi(2))
                .sqrt()
        };
        d(1.0).min(d(-1.0))
    }

    pub fn rotate_about_axis3(&self, angle: f64) -> Z2Point3 {
        let (s, c) = angle.sin_cos();
        Z2Point3 { x: [c * self.x[0] - s * self.x[1], s * self.x[0] + c * self.x[1], self.x[2]] }
    }

    /// Representative with nonnegative third component (then second, then first).
    pub fn canonical(&self) -> Z2Point3 {
        let flip = self.x[2] < 0.0 || (self.x[2] == 0.0 && (self.x[1] < 0.0 || (self.x[1] == 0.0 && self.x[0] < 0.0)));
        if flip {
            Z2Point3 { x: [-self.x[0], -self.x[1], -self.x[2]] }
        } else {
            *self
        }
    }
}

/// `(b_i, -log|a_i| / 2)` for each summand `a_i / (zeta - b_i)`; pole pairs closer
/// than `separation` are rejected and must go through the coalesced branch.
pub fn monopole_positions(poles: &[(C64, C64)], separation: f64) -> Result<Vec<(C64, f64)>> {
    for (i, p) in poles.iter().enumerate() {
        for q in &poles[i + 1..] {
            if (p.0 - q.0).norm() <= separation {
                return Err(Error::Degenerate(format!(
                    "poles {} and {} closer than {separation}; use the axisymmetric branch",
                    p.0, q.0
                )));
            }
        }
    }
    Ok(poles.iter().map(|(b, a)| (*b, -0.5 * a.norm().ln())).collect())
}

/// Principal `sqrt(-b)`, with a signed zero in the imaginary part normalised away.
fn neg_sqrt(b: C64) -> C64 {
    C64::new(-b.re, -b.im + 0.0).sqrt()
}

/// `S = a_plus / (zeta - beta) + a_minus / (zeta + beta)` with `beta = sqrt(-b0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialFractions {
    pub beta: C64,
    pub a_plus: C64,
    pub a_minus: C64,
}

impl PartialFractions {
    pub fn of(m: &MonopoleRep) -> Option<Self> {
        let beta = neg_sqrt(m.b0);
        if beta.norm() == 0.0 {
            return None;
        }
        let two_beta = 2.0 * beta;
        Some(Self { beta, a_plus: (m.a1 * beta + m.a0) / two_beta, a_minus: (m.a1 * beta - m.a0) / two_beta })
    }

    pub fn eval(&self, zeta: C64) -> C64 {
        self.a_plus / (zeta - self.beta) + self.a_minus / (zeta + self.beta)
    }
}

/// Lower and upper edge of the blend between the coalesced and separated branches,
/// in terms of `|sqrt(-b0)|`.
pub const BLEND: (f64, f64) = (1.0, 2.0);

fn separated_position(pf: &PartialFractions) -> [f64; 3] {
    let pos = monopole_positions(&[(pf.beta, pf.a_plus), (-pf.beta, pf.a_minus)], 0.0)
        .expect("distinct poles for nonzero beta");
    let mean = 0.5 * (pos[0].1 + pos[1].1);
    [pf.beta.re, pf.beta.im, pos[0].1 - mean]
}

fn axis_position(m: &MonopoleRep) -> [f64; 3] {
    [0.0, 0.0, m.a1.norm().ln().max(0.0)]
}

/// Uncut representative of the projection.
pub fn raw_projection(m: &MonopoleRep) -> Z2Point3 {
    let beta = neg_sqrt(m.b0).norm();
    if beta < BLEND.0 {
        return Z2Point3 { x: axis_position(m) }.canonical();
    }
    let pf = PartialFractions::of(m).expect("beta > 0");
    let sep = Z2Point3 { x: separated_position(&pf) }.canonical();
    if beta >= BLEND.1 {
        return sep;
    }
    let (w, _, _) = smoothstep5((beta - BLEND.0) / (BLEND.1 - BLEND.0));
    let ax = axis_position(m);
    let x = [w * sep.x[0], w * sep.x[1], (1.0 - w) * ax[2] + w * sep.x[2]];
    Z2Point3 { x }.canonical()
}

/// Projection to `R^3 / Z2` with the radial magnitude passed through the cutoff.
pub fn project_pi(m: &MonopoleRep, cutoff: &RadialCutoff) -> Z2Point3 {
    let raw = raw_projection(m);
    let r = raw.norm();
    if r == 0.0 {
        return Z2Point3::ZERO;
    }
    let s = cutoff.h(r) / r;
    if s == 0.0 {
        return Z2Point3::ZERO;
    }
    Z2Point3 { x: [raw.x[0] * s, raw.x[1] * s, raw.x[2] * s] }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum Cover {
    AH,
    Double,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModuliDescription {
    pub label: String,
    pub real_dimension: u32,
    pub components: u32,
}

/// Moduli of translation-invariant Fueter sections over `Sigma_g x S^1`.
pub fn moduli_dimension(genus: u32, cover: Cover) -> ModuliDescription {
    let components = match cover {
        Cover::AH => 1,
        Cover::Double => 2,
    };
    match genus {
        0 => ModuliDescription { label: "H^0(CP^1, L^-1)".into(), real_dimension: 6, components },
        1 => ModuliDescription {
            label: match cover {
                Cover::AH => "X_AH".into(),
                Cover::Double => "double cover of X_AH".into(),
            },
            real_dimension: 4,
            components: 1,
        },
        g => {
            let n = 3 * g - 2;
            ModuliDescription { label: format!("C^{n}"), real_dimension: 2 * n, components }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn quotient_examples() {
        let z = to_quotient(&MonopoleRep::real(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(z, AHAlgPoint { z1: c(1.0, 0.0), z2: c(0.0, 0.0), z3: c(0.0, 0.0), z4: c(0.0, 0.0) });
        let e3 = 3f64.exp();
        let a = to_quotient(&MonopoleRep::real(-1.0, e3, 0.0)).unwrap();
        let b = to_quotient(&MonopoleRep::real(1.0, -e3, 0.0)).unwrap();
        assert_eq!(a, b);
        assert!(to_quotient(&MonopoleRep::real(2.0, 0.0, 0.0)).is_err());
        assert!(to_quotient(&MonopoleRep::real(0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn u1_examples() {
        let m = MonopoleRep::real(1.0, 1.0, 0.0);
        assert_eq!(u1_act(c(1.0, 0.0), &m).unwrap(), m);
        let r = u1_act(c(0.0, 1.0), &m).unwrap();
        assert_eq!(r, MonopoleRep::new(c(1.0, 0.0), c(0.0, -1.0), c(0.0, 0.0)));
        r.validate().unwrap();
        assert!(u1_act(c(2.0, 0.0), &m).is_err());
    }

    #[test]
    fn positions_example() {
        let p = monopole_positions(&[(c(5.0, 0.0), c(1.0, 0.0)), (c(-5.0, 0.0), c((-2f64).exp(), 0.0))], 1.0).unwrap();
        assert_eq!(p[0], (c(5.0, 0.0), 0.0));
        assert_relative_eq!(p[1].1, 1.0, max_relative = 1e-15);
        assert!(monopole_positions(&[(c(0.0, 0.0), c(1.0, 0.0)), (c(0.5, 0.0), c(1.0, 0.0))], 1.0).is_err());
    }

    #[test]
    fn two_pole_oracle() {
        let r = 4f64.exp();
        let m = MonopoleRep::real(1.0, 0.0, r * r);
        let pf = PartialFractions::of(&m).unwrap();
        // 1/(z^2 + R^2) = (1/2iR)/(z - iR) - (1/2iR)/(z + iR)
        let k = 1.0 / c(0.0, 2.0 * r);
        assert!((pf.beta - c(0.0, r)).norm() < 1e-12 * r);
        assert!((pf.a_plus - k).norm() < 1e-12 * k.norm());
        assert!((pf.a_minus + k).norm() < 1e-12 * k.norm());
        let x = project_pi(&m, &RadialCutoff::default());
        assert_relative_eq!(x.norm(), r, max_relative = 1e-12);
        assert!(x.x[2].abs() < 1e-12);
    }

    #[test]
    fn axisymmetric_example() {
        let x = project_pi(&MonopoleRep::real(1.0, 3f64.exp(), 0.0), &RadialCutoff::new(2.0));
        assert_relative_eq!(x.x[2], 3.0, max_relative = 1e-14);
        let inside = project_pi(&MonopoleRep::real(1.0, 3f64.exp(), 0.0), &RadialCutoff::default());
        assert_eq!(inside, Z2Point3::ZERO);
    }

    #[test]
    fn moduli_examples() {
        assert_eq!(moduli_dimension(0, Cover::AH).real_dimension, 6);
        assert_eq!(moduli_dimension(0, Cover::AH).components, 1);
        assert_eq!(moduli_dimension(0, Cover::Double).components, 2);
        assert_eq!(moduli_dimension(1, Cover::AH).label, "X_AH");
        assert_eq!(moduli_dimension(1, Cover::AH).real_dimension, 4);
        let g3 = moduli_dimension(3, Cover::AH);
        assert_eq!((g3.label.as_str(), g3.real_dimension), ("C^7", 14));
    }
}
