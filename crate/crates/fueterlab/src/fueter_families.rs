//! Explicit translation-invariant Fueter sections on `Sigma x S^1` and the fields
//! derived from them: projection to `R^3 / Z2`, sup-norm, model energy density, and a
//! graded quadrature used by every integral diagnostic.
//!
//! Sections are evaluated in charts. The round sphere uses two stereographic charts
//! `z` and `w = 1/z`, each sampled on `[-1.5, 1.5]^2` and glued by a smooth partition
//! of unity in `log|z|`. The projection is computed in the unitary trivialisation of
//! `L^-1 = T CP^1`, so its magnitude is a genuine function on the sphere.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ah_geometry::{smoothstep5, RadialCutoff};
use crate::error::{Error, Result};
use crate::gibbons_hawking::GhModel;
use crate::quadrature::gauss_legendre;
use crate::rational_maps::{project_pi, MonopoleRep, BLEND};

/// Half-width of each stereographic chart square.
pub const SPHERE_CHART_EXTENT: f64 = 1.5;

/// Cutoff radius used for family projections.
pub const FAMILY_CUTOFF_R0: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Surface {
    RoundSphere,
    FlatTorus { periods: [f64; 2] },
    Disc { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartId {
    North,
    South,
    Disc,
    Torus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartDomain {
    pub id: ChartId,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

/// `Sigma x S^1` with its sampling lattice; `lattice` cells per side and chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductGeometry {
    pub surface: Surface,
    pub circle_len: f64,
    pub lattice: usize,
    /// Gauss nodes per direction on each quadrature leaf.
    pub gauss: usize,
}

impl ProductGeometry {
    pub fn sphere(lattice: usize) -> Self {
        Self { surface: Surface::RoundSphere, circle_len: 1.0, lattice, gauss: 2 }
    }

    pub fn disc(radius: f64, lattice: usize) -> Self {
        Self { surface: Surface::Disc { radius }, circle_len: 1.0, lattice, gauss: 2 }
    }

    pub fn torus(periods: [f64; 2], lattice: usize) -> Self {
        Self { surface: Surface::FlatTorus { periods }, circle_len: 1.0, lattice, gauss: 2 }
    }

    pub fn charts(&self) -> Vec<ChartDomain> {
        match self.surface {
            Surface::RoundSphere => {
                let e = SPHERE_CHART_EXTENT;
                [ChartId::North, ChartId::South].iter().map(|&id| ChartDomain { id, lo: [-e, -e], hi: [e, e] }).collect()
            }
            Surface::Disc { radius } => vec![ChartDomain { id: ChartId::Disc, lo: [-radius; 2], hi: [radius; 2] }],
            Surface::FlatTorus { periods } => vec![ChartDomain { id: ChartId::Torus, lo: [0.0; 2], hi: periods }],
        }
    }

    /// Conformal factor `rho` of the surface metric `rho^2 |dz|^2`.
    pub fn conformal_factor(&self, z: C64) -> f64 {
        match self.surface {
            Surface::RoundSphere => 2.0 / (1.0 + z.norm_sqr()),
            _ => 1.0,
        }
    }

    fn grad_log_conformal(&self, z: C64) -> [f64; 2] {
        match self.surface {
            Surface::RoundSphere => {
                let f = -2.0 / (1.0 + z.norm_sqr());
                [f * z.re, f * z.im]
            }
            _ => [0.0; 2],
        }
    }

    /// Partition-of-unity weight of a chart at `z`.
    pub fn chart_weight(&self, chart: ChartId, z: C64) -> f64 {
        match self.surface {
            Surface::RoundSphere => {
                let a = SPHERE_CHART_EXTENT.ln();
                let l = z.norm().ln();
                1.0 - smoothstep5((l + a) / (2.0 * a)).0
            }
            Surface::Disc { radius } => {
                if z.norm() <= radius {
                    1.0
                } else {
                    0.0
                }
            }
            Surface::FlatTorus { .. } => {
                debug_assert_eq!(chart, ChartId::Torus);
                1.0
            }
        }
    }

    pub fn area(&self) -> f64 {
        match self.surface {
            Surface::RoundSphere => 4.0 * std::f64::consts::PI,
            Surface::Disc { radius } => std::f64::consts::PI * radius * radius,
            Surface::FlatTorus { periods } => periods[0] * periods[1],
        }
    }

    pub fn volume(&self) -> f64 {
        self.area() * self.circle_len
    }

    pub fn spacing(&self, chart: &ChartDomain) -> f64 {
        (chart.hi[0] - chart.lo[0]) / self.lattice as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Vertical,
    Horizontal,
}

/// A family of sections with polynomial datum (coefficients in ascending degree).
#[derive(Debug, Clone, PartialEq)]
pub struct FueterFamily {
    pub kind: FamilyKind,
    pub datum: Vec<C64>,
    pub scale: f64,
    pub cutoff: RadialCutoff,
}

fn poly_eval(c: &[C64], z: C64) -> (C64, C64) {
    let mut p = C64::new(0.0, 0.0);
    let mut d = C64::new(0.0, 0.0);
    for &a in c.iter().rev() {
        d = d * z + p;
        p = p * z + a;
    }
    (p, d)
}

fn degree(c: &[C64]) -> Option<usize> {
    c.iter().rposition(|a| a.norm() != 0.0)
}

/// Roots of a polynomial of degree at most 2.
fn low_degree_roots(c: &[C64]) -> Vec<C64> {
    match degree(c) {
        Some(1) => vec![-c[0] / c[1]],
        Some(2) => {
            let (a, b, cc) = (c[2], c[1], c[0]);
            let disc = (b * b - 4.0 * a * cc).sqrt();
            // numerically stable pair
            let q = if (b.conj() * disc).re >= 0.0 { -0.5 * (b + disc) } else { -0.5 * (b - disc) };
            if q.norm() == 0.0 {
                vec![C64::new(0.0, 0.0), C64::new(0.0, 0.0)]
            } else {
                vec![q / a, cc / q]
            }
        }
        _ => Vec::new(),
    }
}

/// Maximum over the sphere of `|z(z-1)|` in the round unitary norm; equals `1 + sqrt 2`.
pub fn vertical_reference_maxnorm() -> f64 {
    1.0 + std::f64::consts::SQRT_2
}

impl FueterFamily {
    pub fn vertical(datum: Vec<C64>, lambda: f64) -> Self {
        Self { kind: FamilyKind::Vertical, datum, scale: lambda, cutoff: RadialCutoff::new(FAMILY_CUTOFF_R0) }
    }

    pub fn horizontal(datum: Vec<C64>, mu: f64) -> Self {
        Self { kind: FamilyKind::Horizontal, datum, scale: mu, cutoff: RadialCutoff::new(FAMILY_CUTOFF_R0) }
    }

    /// `p = z(z - 1) / (1 + sqrt 2)`, a holomorphic vector field of unit sphere norm.
    pub fn sphere_reference(lambda: f64) -> Self {
        let m = vertical_reference_maxnorm();
        Self::vertical(vec![C64::new(0.0, 0.0), C64::new(-1.0 / m, 0.0), C64::new(1.0 / m, 0.0)], lambda)
    }

    pub fn with_scale(&self, scale: f64) -> Self {
        Self { scale, ..self.clone() }
    }

    pub fn validate(&self, geom: &ProductGeometry) -> Result<()> {
        if !(self.scale >= 1.0) {
            return Err(Error::Argument(format!("family scale {} must be >= 1", self.scale)));
        }
        if self.datum.is_empty() {
            return Err(Error::Argument("empty datum".into()));
        }
        let deg = degree(&self.datum).unwrap_or(0);
        match (geom.surface, self.kind) {
            (Surface::RoundSphere, FamilyKind::Vertical) if deg > 2 => {
                Err(Error::Argument(format!("a holomorphic vector field on the sphere has degree <= 2, got {deg}")))
            }
            (Surface::RoundSphere, FamilyKind::Horizontal) => {
                Err(Error::Topology("the sphere carries no nonzero holomorphic quadratic differential".into()))
            }
            (Surface::FlatTorus { .. }, _) if deg > 0 => {
                Err(Error::Argument("on the flat torus only constant sections are modelled".into()))
            }
            (_, FamilyKind::Horizontal) if self.cutoff.r0 < BLEND.1 => Err(Error::Argument(format!(
                "horizontal families need cutoff r0 >= {} so the blend region is cut away",
                BLEND.1
            ))),
            _ => Ok(()),
        }
    }

    /// Datum coefficients in a chart. The south chart uses the vector-field cocycle
    /// `p_S(w) = -w^2 p(1/w)`.
    pub fn chart_datum(&self, chart: ChartId) -> Vec<C64> {
        match chart {
            ChartId::South => {
                let mut c = vec![C64::new(0.0, 0.0); 3];
                for (i, a) in self.datum.iter().enumerate().take(3) {
                    c[2 - i] = -a;
                }
                c
            }
            _ => self.datum.clone(),
        }
    }

    /// Zeros of the datum inside a chart.
    pub fn chart_zeros(&self, chart: ChartId) -> Vec<C64> {
        low_degree_roots(&self.chart_datum(chart))
    }

    /// Radius around a simple zero below which the projection is cut to zero.
    fn core_scale(&self, geom: &ProductGeometry, chart: ChartId, z0: C64) -> f64 {
        let (_, d) = poly_eval(&self.chart_datum(chart), z0);
        let dn = d.norm() * geom.conformal_factor(z0);
        let r = match self.kind {
            FamilyKind::Vertical => self.cutoff.r0.exp() / (self.scale * dn),
            FamilyKind::Horizontal => self.cutoff.r0 * self.cutoff.r0 / (self.scale * dn),
        };
        if r.is_finite() {
            r
        } else {
            1e-14
        }
    }
}

/// Section in the holomorphic trivialisation of the chart.
pub fn eval_section(fam: &FueterFamily, chart: ChartId, z: C64) -> MonopoleRep {
    let (p, _) = poly_eval(&fam.chart_datum(chart), z);
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    match fam.kind {
        FamilyKind::Vertical => MonopoleRep::new(one, fam.scale * p.conj(), zero),
        FamilyKind::Horizontal => MonopoleRep::new(one, zero, fam.scale * p.conj()),
    }
}

/// Section in the unitary trivialisation (differs from the holomorphic one on the sphere).
pub fn eval_section_unitary(fam: &FueterFamily, geom: &ProductGeometry, chart: ChartId, z: C64) -> MonopoleRep {
    let m = eval_section(fam, chart, z);
    let rho = geom.conformal_factor(z);
    match fam.kind {
        FamilyKind::Vertical => MonopoleRep::new(m.a0, m.a1 * rho, m.b0),
        FamilyKind::Horizontal => MonopoleRep::new(m.a0, m.a1, m.b0 * rho * rho),
    }
}

/// Transition of the holomorphic `a1 = lambda conj(p(z))` from the north to the south chart.
pub fn l_inv_transition(a1_north: C64, z: C64) -> C64 {
    let w = 1.0 / z;
    (-w * w).conj() * a1_north
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Gh,
    Core,
}

/// Projection value and first derivatives at one chart point. Derivatives are taken
/// in the orthonormal frame `(e1, e2)` of the surface metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub chart: ChartId,
    pub z: C64,
    pub value: [f64; 3],
    /// `jac[i][a] = e_a(value_i)`.
    pub jac: [[f64; 2]; 3],
    pub magnitude: f64,
    /// Magnitude before the cutoff.
    pub raw: f64,
    /// Cutoff slope at `raw`.
    pub dh: f64,
    /// `|grad arg(datum)|` in the orthonormal frame.
    pub phase_grad: f64,
}

impl FieldSample {
    pub fn grad_norm2(&self) -> f64 {
        self.jac.iter().map(|r| r[0] * r[0] + r[1] * r[1]).sum()
    }

    /// `(|dv|^2, |d^* v|^2)` for the S^1-invariant 1-form with components `value`.
    pub fn d_dstar(&self) -> (f64, f64) {
        let j = &self.jac;
        // dv = (e1 v2 - e2 v1) e12 + e1 v3 e13 + e2 v3 e23, d^*v = -(e1 v1 + e2 v2)
        let curl = j[1][0] - j[0][1];
        let d2 = curl * curl + j[2][0] * j[2][0] + j[2][1] * j[2][1];
        let div = j[0][0] + j[1][1];
        (d2, div * div)
    }

    /// Gradient of the magnitude in the orthonormal frame.
    pub fn magnitude_grad(&self) -> [f64; 2] {
        if self.magnitude == 0.0 {
            return [0.0; 2];
        }
        let mut g = [0.0; 2];
        for i in 0..3 {
            for a in 0..2 {
                g[a] += self.value[i] * self.jac[i][a] / self.magnitude;
            }
        }
        g
    }
}

/// Projection field of the family at a chart point, with analytic derivatives.
pub fn sample(fam: &FueterFamily, geom: &ProductGeometry, chart: ChartId, z: C64) -> FieldSample {
    let datum = fam.chart_datum(chart);
    let (p, dp) = poly_eval(&datum, z);
    let rho = geom.conformal_factor(z);
    let rep = eval_section_unitary(fam, geom, chart, z);
    let proj = project_pi(&rep, &fam.cutoff);
    let log_grad = if p.norm() > 0.0 { dp / p } else { C64::new(0.0, 0.0) };
    let phase_grad = log_grad.norm() / rho;
    let mut s = FieldSample {
        chart,
        z,
        value: proj.x,
        jac: [[0.0; 2]; 3],
        magnitude: proj.norm(),
        raw: 0.0,
        dh: 0.0,
        phase_grad,
    };
    match fam.kind {
        FamilyKind::Vertical => {
            let a = fam.scale * p.norm() * rho;
            s.raw = if a > 0.0 { a.ln() } else { f64::NEG_INFINITY };
            let (_, dh, _) = fam.cutoff.eval(s.raw);
            s.dh = dh;
            if dh != 0.0 {
                let gl = geom.grad_log_conformal(z);
                let gs = [log_grad.re + gl[0], -log_grad.im + gl[1]];
                s.jac[2] = [dh * gs[0] / rho, dh * gs[1] / rho];
            }
        }
        FamilyKind::Horizontal => {
            let beta = crate::rational_maps::PartialFractions::of(&rep).map(|pf| pf.beta);
            let Some(beta) = beta else {
                return s;
            };
            let r = beta.norm();
            s.raw = r;
            let (hv, dh, _) = fam.cutoff.eval(r);
            s.dh = dh;
            if hv == 0.0 && dh == 0.0 {
                return s;
            }
            let k = hv / r;
            let dk = dh / r - hv / (r * r);
            let dzb_beta = -fam.scale * rho * rho * dp.conj() / (2.0 * beta);
            let dzb_r = beta.conj() * dzb_beta / (2.0 * r);
            let dz_r = dzb_r.conj();
            let dz_x = dk * dz_r * beta;
            let dzb_x = dk * dzb_r * beta + k * dzb_beta;
            let dx = dz_x + dzb_x;
            let dy = C64::new(0.0, 1.0) * (dz_x - dzb_x);
            let xval = k * beta;
            let sign = if xval.re * proj.x[0] + xval.im * proj.x[1] >= 0.0 { 1.0 } else { -1.0 };
            s.jac[0] = [sign * dx.re / rho, sign * dy.re / rho];
            s.jac[1] = [sign * dx.im / rho, sign * dy.im / rho];
        }
    }
    s
}

/// Grid of projection values per chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Z2FormField {
    pub charts: Vec<ChartGrid>,
    pub frame: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartGrid {
    pub domain: ChartDomain,
    pub n: usize,
    pub h: f64,
    /// Row-major, `values[j * n + i]` at cell centre `(i, j)`.
    pub values: Vec<[f64; 3]>,
    pub weight: Vec<f64>,
}

impl ChartGrid {
    pub fn centre(&self, i: usize, j: usize) -> C64 {
        C64::new(self.domain.lo[0] + (i as f64 + 0.5) * self.h, self.domain.lo[1] + (j as f64 + 0.5) * self.h)
    }
}

pub fn projection_field(fam: &FueterFamily, geom: &ProductGeometry) -> Result<Z2FormField> {
    fam.validate(geom)?;
    let charts = geom
        .charts()
        .into_iter()
        .map(|d| {
            let n = geom.lattice;
            let h = geom.spacing(&d);
            let mut grid = ChartGrid { domain: d, n, h, values: Vec::new(), weight: Vec::new() };
            let rows: Vec<(Vec<[f64; 3]>, Vec<f64>)> = (0..n)
                .into_par_iter()
                .map(|j| {
                    (0..n)
                        .map(|i| {
                            let z = grid.centre(i, j);
                            (sample(fam, geom, d.id, z).value, geom.chart_weight(d.id, z))
                        })
                        .unzip()
                })
                .collect();
            for (v, w) in rows {
                grid.values.extend(v);
                grid.weight.extend(w);
            }
            grid
        })
        .collect();
    Ok(Z2FormField { charts, frame: "e1,e2,e3" })
}

/// Maximum of `|pi(u)|` over lattice points carrying positive chart weight.
pub fn sup_norm(fam: &FueterFamily, geom: &ProductGeometry) -> Result<f64> {
    let f = projection_field(fam, geom)?;
    let mut m: f64 = 0.0;
    for c in &f.charts {
        for (v, &w) in c.values.iter().zip(&c.weight) {
            if w > 0.0 {
                m = m.max(crate::gibbons_hawking::norm3(v));
            }
        }
    }
    Ok(m)
}

/// Constants of the model energy density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    pub c_psi: f64,
    pub k: i32,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self { c_psi: 2.0, k: -4 }
    }
}

/// `V |grad w|^2 + V^-1 c_psi^2 |grad arg datum|^2` with `w = |pi(u)|`. Inside the core
/// `V` is frozen at the regime edge and the fibre term is damped by the cutoff slope.
pub fn energy_density(model: &EnergyModel, fam: &FueterFamily, s: &FieldSample) -> (f64, Regime) {
    let edge = fam.cutoff.r1;
    let regime = if s.magnitude >= edge { Regime::Gh } else { Regime::Core };
    let gh = GhModel::new(model.k);
    let r = s.magnitude.max(edge);
    let v = gh.potential(&[0.0, 0.0, r]);
    let g = s.magnitude_grad();
    let gw2 = g[0] * g[0] + g[1] * g[1];
    let fib = model.c_psi * model.c_psi * s.dh * s.dh * s.phase_grad * s.phase_grad;
    (v * gw2 + fib / v, regime)
}

pub fn energy_density_model(
    model: &EnergyModel,
    fam: &FueterFamily,
    geom: &ProductGeometry,
    chart: ChartId,
    z: C64,
) -> (f64, Regime) {
    energy_density(model, fam, &sample(fam, geom, chart, z))
}

/// `Delta(w^2) - 2 |grad w|^2` for `w = log|lambda p|` by five-point differences.
pub fn c0_laplacian_check(fam: &FueterFamily, points: &[C64], h: f64) -> Result<Vec<f64>> {
    if fam.kind != FamilyKind::Vertical {
        return Err(Error::Argument("the C0 Laplacian check is defined for vertical families".into()));
    }
    let w = |z: C64| {
        let (p, _) = poly_eval(&fam.datum, z);
        (fam.scale * p.norm()).ln()
    };
    points
        .iter()
        .map(|&z| {
            let (p, dp) = poly_eval(&fam.datum, z);
            if p.norm() == 0.0 {
                return Err(Error::Domain(format!("datum vanishes at {z}")));
            }
            let f = |z: C64| w(z).powi(2);
            let e = [C64::new(h, 0.0), C64::new(0.0, h)];
            let lap = e.iter().map(|&d| f(z + d) + f(z - d)).sum::<f64>() - 4.0 * f(z);
            let grad2 = (dp / p).norm_sqr();
            Ok(lap / (h * h) - 2.0 * grad2)
        })
        .collect()
}

struct Grading {
    zeros: Vec<(C64, f64)>,
    boundary: Option<f64>,
}

impl Grading {
    fn refine(&self, c: C64, size: f64, depth: usize) -> bool {
        if depth > 60 {
            return false;
        }
        let half_diag = size * std::f64::consts::FRAC_1_SQRT_2;
        for &(z0, min) in &self.zeros {
            if size > min && (c - z0).norm() - half_diag < 2.0 * size {
                return true;
            }
        }
        if let Some(r) = self.boundary {
            if depth < 4 && ((c.norm() - r).abs() < half_diag) {
                return true;
            }
        }
        false
    }
}

/// Visits the nodes of a graded tensor-Gauss quadrature over the whole of `M`: a
/// uniform base lattice per chart, refined as a quadtree toward zeros of the datum
/// down to a fraction of the core radius. One accumulator per base row is returned,
/// in chart and row order, so reductions over them are bit-reproducible.
pub fn visit_nodes<A, I, F>(fam: &FueterFamily, geom: &ProductGeometry, init: I, f: F) -> Vec<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&FieldSample, f64, &mut A) + Sync,
{
    let (x, w) = gauss_legendre(geom.gauss);
    let mut out = Vec::new();
    for d in geom.charts() {
        let grading = Grading {
            zeros: fam
                .chart_zeros(d.id)
                .into_iter()
                .map(|z0| (z0, 0.05 * fam.core_scale(geom, d.id, z0)))
                .collect(),
            boundary: match geom.surface {
                Surface::Disc { radius } => Some(radius),
                _ => None,
            },
        };
        let n = geom.lattice;
        let h = geom.spacing(&d);
        let rows: Vec<A> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut acc = init();
                let mut stack = Vec::new();
                for i in 0..n {
                    let lo = C64::new(d.lo[0] + i as f64 * h, d.lo[1] + j as f64 * h);
                    stack.push((lo, h, 0usize));
                    while let Some((lo, size, depth)) = stack.pop() {
                        let c = lo + C64::new(0.5 * size, 0.5 * size);
                        if grading.refine(c, size, depth) {
                            let s2 = 0.5 * size;
                            for (a, b) in [(1.0, 1.0), (0.0, 1.0), (1.0, 0.0), (0.0, 0.0)] {
                                stack.push((lo + C64::new(a * s2, b * s2), s2, depth + 1));
                            }
                            continue;
                        }
                        for (xa, wa) in x.iter().zip(&w) {
                            for (xb, wb) in x.iter().zip(&w) {
                                let z = c + C64::new(0.5 * size * xa, 0.5 * size * xb);
                                let chi = geom.chart_weight(d.id, z);
                                if chi == 0.0 {
                                    continue;
                                }
                                let rho = geom.conformal_factor(z);
                                let wt = 0.25 * size * size * wa * wb * chi * rho * rho * geom.circle_len;
                                f(&sample(fam, geom, d.id, z), wt, &mut acc);
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        out.extend(rows);
    }
    out
}

/// `k` integrals over `M` at once; `f(sample, weight, acc)` adds weighted contributions.
pub fn integrate<F>(fam: &FueterFamily, geom: &ProductGeometry, k: usize, f: F) -> Vec<f64>
where
    F: Fn(&FieldSample, f64, &mut [f64]) + Sync,
{
    let rows = visit_nodes(fam, geom, || vec![0.0; k], |s, w, acc: &mut Vec<f64>| f(s, w, acc));
    let mut total = vec![0.0; k];
    for r in rows {
        for (t, v) in total.iter_mut().zip(r) {
            *t += v;
        }
    }
    total
}

/// Maximum of `g` over all quadrature nodes with positive chart weight.
pub fn sup_over_nodes<G>(fam: &FueterFamily, geom: &ProductGeometry, g: G) -> f64
where
    G: Fn(&FieldSample) -> f64 + Sync,
{
    visit_nodes(fam, geom, || 0.0f64, |s, _, m| *m = m.max(g(s))).into_iter().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn section_examples() {
        let e5 = 5f64.exp();
        let v = FueterFamily::vertical(vec![c(0.0, 0.0), c(1.0, 0.0)], e5);
        assert_eq!(eval_section(&v, ChartId::Disc, c(1.0, 0.0)), MonopoleRep::real(1.0, e5, 0.0));
        let e8 = 8f64.exp();
        let hz = FueterFamily::horizontal(vec![c(0.0, 0.0), c(1.0, 0.0)], e8);
        assert_eq!(eval_section(&hz, ChartId::Disc, c(1.0, 0.0)), MonopoleRep::real(1.0, 0.0, e8));
    }

    #[test]
    fn chart_overlap_cocycle() {
        let fam = FueterFamily::sphere_reference(3.0);
        let geom = ProductGeometry::sphere(8);
        for k in 0..16 {
            let z = C64::from_polar(1.0, 0.3 + k as f64 * 0.39);
            let w = 1.0 / z;
            let n = eval_section(&fam, ChartId::North, z).a1;
            let s = eval_section(&fam, ChartId::South, w).a1;
            assert!((l_inv_transition(n, z) - s).norm() < 1e-12);
            let un = eval_section_unitary(&fam, &geom, ChartId::North, z).a1.norm();
            let us = eval_section_unitary(&fam, &geom, ChartId::South, w).a1.norm();
            assert_relative_eq!(un, us, max_relative = 1e-12);
        }
    }

    #[test]
    fn reference_datum_has_unit_sphere_norm() {
        let fam = FueterFamily::sphere_reference(1.0);
        let geom = ProductGeometry::sphere(8);
        let mut m: f64 = 0.0;
        for i in 0..4000 {
            let z = C64::from_polar(1.0 + 2.0 * i as f64 / 4000.0, std::f64::consts::PI);
            m = m.max(eval_section_unitary(&fam, &geom, ChartId::North, z).a1.norm());
        }
        assert_relative_eq!(m, 1.0, max_relative = 1e-6);
    }

    #[test]
    fn vertical_projection_is_axial() {
        let fam = FueterFamily::vertical(vec![c(0.0, 0.0), c(1.0, 0.0)], 10f64.exp());
        let geom = ProductGeometry::disc(1.0, 8);
        let s = sample(&fam, &geom, ChartId::Disc, C64::from_polar(1.0, 0.7));
        assert_eq!(s.value[0], 0.0);
        assert_eq!(s.value[1], 0.0);
        assert_relative_eq!(s.value[2], 10.0, max_relative = 1e-14);
        let z0 = sample(&fam, &geom, ChartId::Disc, c(0.0, 0.0));
        assert_eq!(z0.value, [0.0; 3]);
    }

    #[test]
    fn horizontal_magnitude_is_root() {
        let r = 30.0;
        let fam = FueterFamily::horizontal(vec![c(0.0, 0.0), c(1.0, 0.0)], r * r);
        let geom = ProductGeometry::disc(1.0, 8);
        let s = sample(&fam, &geom, ChartId::Disc, c(1.0, 0.0));
        assert_relative_eq!(s.magnitude, r, max_relative = 1e-12);
    }

    fn fd_jac(fam: &FueterFamily, geom: &ProductGeometry, chart: ChartId, z: C64) -> [[f64; 2]; 3] {
        let e = 1e-6;
        let base = sample(fam, geom, chart, z).value;
        let mut j = [[0.0; 2]; 3];
        for (a, d) in [c(e, 0.0), c(0.0, e)].iter().enumerate() {
            let align = |v: [f64; 3]| {
                let dot: f64 = v.iter().zip(&base).map(|(x, y)| x * y).sum();
                if dot < 0.0 {
                    [-v[0], -v[1], -v[2]]
                } else {
                    v
                }
            };
            let p = align(sample(fam, geom, chart, z + d).value);
            let m = align(sample(fam, geom, chart, z - d).value);
            for i in 0..3 {
                j[i][a] = (p[i] - m[i]) / (2.0 * e) / geom.conformal_factor(z);
            }
        }
        j
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let geom = ProductGeometry::sphere(8);
        let fam = FueterFamily::sphere_reference(6f64.exp());
        let disc = ProductGeometry::disc(1.0, 8);
        let hz = FueterFamily::horizontal(vec![c(0.1, 0.0), c(1.0, 0.5)], 400.0);
        let cases = [
            (&fam, &geom, ChartId::North, c(0.3, -0.4)),
            (&fam, &geom, ChartId::South, c(-0.2, 0.9)),
            (&fam, &geom, ChartId::North, c(0.02, 0.01)),
            (&hz, &disc, ChartId::Disc, c(0.4, 0.3)),
            (&hz, &disc, ChartId::Disc, c(-0.05, -0.12)),
            (&hz, &disc, ChartId::Disc, c(-0.02, -0.002)),
        ];
        for (f, g, ch, z) in cases {
            let s = sample(f, g, ch, z);
            let j = fd_jac(f, g, ch, z);
            for i in 0..3 {
                for a in 0..2 {
                    assert!((s.jac[i][a] - j[i][a]).abs() < 1e-5 * (1.0 + j[i][a].abs()), "{z} {i} {a}");
                }
            }
        }
    }

    #[test]
    fn density_examples() {
        let fam = FueterFamily::vertical(vec![c(0.0, 0.0), c(1.0, 0.0)], 8f64.exp());
        let geom = ProductGeometry::disc(1.0, 8);
        let m = EnergyModel::default();
        let z = c(0.6, 0.2);
        let (d, reg) = energy_density_model(&m, &fam, &geom, ChartId::Disc, z);
        assert_eq!(reg, Regime::Gh);
        let w = 8.0 + z.norm().ln();
        let v = 1.0 - 2.0 / w;
        assert_relative_eq!(d, (v + 4.0 / v) / z.norm_sqr(), max_relative = 1e-12);
        let rot = FueterFamily { datum: vec![c(0.0, 0.0), C64::from_polar(1.0, 1.1)], ..fam.clone() };
        let (dr, _) = energy_density_model(&m, &rot, &geom, ChartId::Disc, z);
        assert_relative_eq!(d, dr, max_relative = 1e-12);
        let cst = FueterFamily::vertical(vec![c(1.0, 0.0)], 8f64.exp());
        assert_eq!(energy_density_model(&m, &cst, &geom, ChartId::Disc, z).0, 0.0);
    }

    #[test]
    fn laplacian_check() {
        let fam = FueterFamily::vertical(vec![c(0.0, 0.0), c(1.0, 0.0)], 10f64.exp());
        let pts: Vec<C64> = (0..8).map(|k| C64::from_polar(1.0, k as f64 * 0.8)).collect();
        let r1 = c0_laplacian_check(&fam, &pts, 1e-3).unwrap();
        let r2 = c0_laplacian_check(&fam, &pts, 2e-3).unwrap();
        for (a, b) in r1.iter().zip(&r2) {
            assert!(a.abs() <= 1e-4);
            assert!((b / a - 4.0).abs() < 0.5, "{a} {b}");
        }
        let cst = FueterFamily::vertical(vec![c(0.5, 0.0)], 10f64.exp());
        assert!(c0_laplacian_check(&cst, &pts, 1e-3).unwrap().iter().all(|r| *r == 0.0));
    }

    #[test]
    fn quadrature_reproduces_sphere_area() {
        let fam = FueterFamily::sphere_reference(5f64.exp());
        let geom = ProductGeometry::sphere(64);
        let a = integrate(&fam, &geom, 1, |_, w, acc| acc[0] += w);
        assert_relative_eq!(a[0], 4.0 * std::f64::consts::PI, max_relative = 1e-6);
        let disc = ProductGeometry::disc(1.0, 64);
        let hz = FueterFamily::horizontal(vec![c(0.0, 0.0), c(1.0, 0.0)], 100.0);
        let b = integrate(&hz, &disc, 1, |_, w, acc| acc[0] += w);
        assert_relative_eq!(b[0], std::f64::consts::PI, max_relative = 1e-3);
    }

    #[test]
    fn graded_dirichlet_matches_log_law() {
        // int |grad log|lambda z|_g|^2 over the part of the disc outside the core is
        // 2 pi log(1 / r_core) for the flat disc
        let lam = 12f64.exp();
        let fam = FueterFamily::vertical(vec![c(0.0, 0.0), c(1.0, 0.0)], lam);
        let geom = ProductGeometry::disc(1.0, 64);
        let e = integrate(&fam, &geom, 1, |s, w, acc| {
            if s.raw >= fam.cutoff.r1 {
                acc[0] += w * s.grad_norm2()
            }
        });
        let r_core = fam.cutoff.r1.exp() / lam;
        assert_relative_eq!(e[0], 2.0 * std::f64::consts::PI * (1.0 / r_core).ln(), max_relative = 2e-3);
    }

    #[test]
    fn sup_norm_tracks_log_lambda() {
        let geom = ProductGeometry::sphere(128);
        for l in [5.0, 20.0] {
            let s = sup_norm(&FueterFamily::sphere_reference(f64::exp(l)), &geom).unwrap();
            assert!((s - l).abs() < 0.01, "{l} {s}");
        }
        let small = sup_norm(&FueterFamily::sphere_reference(1.0), &geom).unwrap();
        assert!(small <= FAMILY_CUTOFF_R0 + 1.0);
    }

    #[test]
    fn invalid_families() {
        let geom = ProductGeometry::sphere(8);
        let cubic = FueterFamily::vertical(vec![c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], 2.0);
        assert!(cubic.validate(&geom).is_err());
        let hz = FueterFamily::horizontal(vec![c(1.0, 0.0)], 2.0);
        assert!(matches!(hz.validate(&geom), Err(Error::Topology(_))));
    }
}
