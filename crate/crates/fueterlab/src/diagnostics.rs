//! Quantitative experiments on the explicit families and the model forms: sublevel
//! energies, almost-harmonicity, energy monotonicity and decay, the convergence ladder,
//! Lipschitz approximation along a ladder, and mollified frequency functions.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::ah_geometry::smoothstep5;
use crate::error::{Error, Result};
use crate::fueter_families::{
    energy_density, integrate, projection_field, sample, sup_norm, sup_over_nodes, visit_nodes, ChartId,
    EnergyModel, FamilyKind, FieldSample, FueterFamily, ProductGeometry, Surface,
};
use crate::multivalued::{
    campanato_seminorm, dirichlet_energy, holder_seminorm, lipschitz_approx, pair_distance, TwoValuedField,
};
use crate::quadrature::{fit_line, gauss_legendre, LineFit};
use crate::z2_harmonic::Z2HarmonicModel;

/// Default sublevel exponent, just below the admissible threshold `sqrt(2/3)`.
pub const DEFAULT_P: f64 = 0.8;

/// `phi(t) = 1 - S5((t - 3/4) / (1/4))`: one on `[0, 3/4]`, zero beyond 1, C^2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Mollifier;

impl Mollifier {
    pub const ID: &'static str = "smoothstep5[3/4,1]";

    /// `(phi, phi', phi'')` at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let (v, d, dd) = smoothstep5((t - 0.75) / 0.25);
        (1.0 - v, -4.0 * d, -16.0 * dd)
    }
}

// ---------------------------------------------------------------------- energy

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyProfile {
    pub ts: Vec<f64>,
    pub es: Vec<f64>,
    pub total: f64,
}

/// `E(t) = 1/2 int_{|u| <= t} density` for each threshold, plus the full integral.
pub fn sublevel_energy(
    model: &EnergyModel,
    fam: &FueterFamily,
    geom: &ProductGeometry,
    thresholds: &[f64],
) -> Result<EnergyProfile> {
    fam.validate(geom)?;
    let k = thresholds.len();
    let acc = integrate(fam, geom, k + 1, |s, w, acc| {
        let (d, _) = energy_density(model, fam, s);
        let e = 0.5 * w * d;
        for (a, &t) in acc.iter_mut().zip(thresholds) {
            if s.magnitude <= t {
                *a += e;
            }
        }
        acc[k] += e;
    });
    Ok(EnergyProfile { ts: thresholds.to_vec(), es: acc[..k].to_vec(), total: acc[k] })
}

pub fn log_spaced(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| (a.ln() + (b.ln() - a.ln()) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerLawRow {
    pub scale: f64,
    pub norm: f64,
    pub ts: Vec<f64>,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
}

/// `E(t) / (||u||^(2-p) t^p)` on `t in [||u||^0.2, ||u||^0.8]`.
pub fn power_law_ratios(
    model: &EnergyModel,
    fam: &FueterFamily,
    geom: &ProductGeometry,
    p: f64,
    n_t: usize,
) -> Result<PowerLawRow> {
    let norm = sup_norm(fam, geom)?;
    let ts = log_spaced(norm.powf(0.2), norm.powf(0.8), n_t);
    let prof = sublevel_energy(model, fam, geom, &ts)?;
    let ratios: Vec<f64> = ts.iter().zip(&prof.es).map(|(t, e)| e / (norm.powf(2.0 - p) * t.powf(p))).collect();
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(PowerLawRow { scale: fam.scale, norm, ts, ratios, max_ratio })
}

// ------------------------------------------------------------ almost harmonic

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlmostHarmonicRow {
    pub scale: f64,
    pub norm: f64,
    pub d2: f64,
    pub dstar2: f64,
    /// Same quantity from sign-aligned lattice differences.
    pub lattice_total: f64,
    /// Measure of lattice cells excluded for ambiguous sign alignment.
    pub excluded_measure: f64,
}

impl AlmostHarmonicRow {
    pub fn total(&self) -> f64 {
        self.d2 + self.dstar2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlmostHarmonicTable {
    pub rows: Vec<AlmostHarmonicRow>,
    pub slope: f64,
    pub lattice_slope: f64,
}

/// `int |dv|^2 + |d^*v|^2` for `v = pi(u)` per scale, regressed on `log ||u||`.
pub fn almost_harmonic_scaling(
    fam: &FueterFamily,
    geom: &ProductGeometry,
    scales: &[f64],
) -> Result<AlmostHarmonicTable> {
    let mut rows = Vec::new();
    for &sc in scales {
        let f = fam.with_scale(sc);
        f.validate(geom)?;
        let norm = sup_norm(&f, geom)?;
        let acc = integrate(&f, geom, 2, |s, w, acc| {
            let (d, ds) = s.d_dstar();
            acc[0] += w * d;
            acc[1] += w * ds;
        });
        let (lt, ex) = lattice_harmonicity(&f, geom)?;
        rows.push(AlmostHarmonicRow { scale: sc, norm, d2: acc[0], dstar2: acc[1], lattice_total: lt, excluded_measure: ex });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.norm.ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.total().max(1e-300).ln()).collect();
    let yl: Vec<f64> = rows.iter().map(|r| r.lattice_total.max(1e-300).ln()).collect();
    let slope = if rows.len() > 1 { fit_line(&x, &y).slope } else { f64::NAN };
    let lattice_slope = if rows.len() > 1 { fit_line(&x, &yl).slope } else { f64::NAN };
    Ok(AlmostHarmonicTable { rows, slope, lattice_slope })
}

/// Lattice version: centred, sign-aligned differences on each chart grid, weighted by the
/// partition of unity. Cells with an ambiguous alignment are skipped.
fn lattice_harmonicity(fam: &FueterFamily, geom: &ProductGeometry) -> Result<(f64, f64)> {
    let field = projection_field(fam, geom)?;
    let mut total = 0.0;
    let mut excluded = 0.0;
    for c in &field.charts {
        let n = c.n;
        let rows: Vec<(f64, f64)> = (1..n - 1)
            .into_par_iter()
            .map(|j| {
                let mut acc = (0.0, 0.0);
                for i in 1..n - 1 {
                    let idx = j * n + i;
                    let w = c.weight[idx];
                    if w == 0.0 {
                        continue;
                    }
                    let v0 = c.values[idx];
                    let nb = [idx + 1, idx - 1, idx + n, idx - n];
                    let mut lifted = [[0.0; 3]; 4];
                    let mut ambiguous = false;
                    for (l, &q) in lifted.iter_mut().zip(&nb) {
                        let v = c.values[q];
                        let dm: f64 = (0..3).map(|k| (v0[k] - v[k]).powi(2)).sum::<f64>().sqrt();
                        let dp: f64 = (0..3).map(|k| (v0[k] + v[k]).powi(2)).sum::<f64>().sqrt();
                        let scale = crate::gibbons_hawking::norm3(&v0) + crate::gibbons_hawking::norm3(&v);
                        if (dm - dp).abs() <= crate::multivalued::AMBIGUITY_TOL * scale && scale > 0.0 {
                            ambiguous = true;
                        }
                        *l = if dm <= dp { v } else { [-v[0], -v[1], -v[2]] };
                    }
                    let area = c.h * c.h * w * geom.circle_len;
                    if ambiguous {
                        let z = c.centre(i, j);
                        let rho = geom.conformal_factor(z);
                        acc.1 += area * rho * rho;
                        continue;
                    }
                    let dx: Vec<f64> = (0..3).map(|k| (lifted[0][k] - lifted[1][k]) / (2.0 * c.h)).collect();
                    let dy: Vec<f64> = (0..3).map(|k| (lifted[2][k] - lifted[3][k]) / (2.0 * c.h)).collect();
                    // flat partials: |dv|^2 dA and |d^*v|^2 dA are conformally invariant here
                    let curl = dx[1] - dy[0];
                    let div = dx[0] + dy[1];
                    acc.0 += area * (curl * curl + dx[2] * dx[2] + dy[2] * dy[2] + div * div);
                }
                acc
            })
            .collect();
        for r in rows {
            total += r.0;
            excluded += r.1;
        }
    }
    Ok((total, excluded))
}

// ------------------------------------------------------ balls and monotonicity

/// Point on `Sigma` given by a chart and a coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfacePoint {
    pub chart: ChartId,
    pub z: C64,
}

fn sphere_vector(p: &SurfacePoint) -> [f64; 3] {
    let z = p.z;
    let d = 1.0 + z.norm_sqr();
    match p.chart {
        ChartId::South => [2.0 * z.re / d, -2.0 * z.im / d, (1.0 - z.norm_sqr()) / d],
        _ => [2.0 * z.re / d, 2.0 * z.im / d, (z.norm_sqr() - 1.0) / d],
    }
}

/// Geodesic distance on `Sigma`.
pub fn surface_distance(geom: &ProductGeometry, a: &SurfacePoint, b: &SurfacePoint) -> f64 {
    match geom.surface {
        Surface::RoundSphere => {
            let (u, v) = (sphere_vector(a), sphere_vector(b));
            let c = ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2) + (u[2] - v[2]).powi(2)).sqrt();
            2.0 * (0.5 * c).min(1.0).asin()
        }
        Surface::FlatTorus { periods } => {
            let mut d2 = 0.0;
            for (k, per) in periods.iter().enumerate() {
                let x = if k == 0 { a.z.re - b.z.re } else { a.z.im - b.z.im };
                let x = x - per * (x / per).round();
                d2 += x * x;
            }
            d2.sqrt()
        }
        Surface::Disc { .. } => (a.z - b.z).norm(),
    }
}

/// `int_{B((x, 0), r)} g` over `M` for S^1-invariant `g`, `r <= circle_len / 2`: the ball
/// meets each circle fibre in an interval of length `2 sqrt(r^2 - d^2)`.
pub fn ball_integrals<G>(
    fam: &FueterFamily,
    geom: &ProductGeometry,
    centre: SurfacePoint,
    radii: &[f64],
    g: G,
) -> Result<Vec<f64>>
where
    G: Fn(&FieldSample) -> f64 + Sync,
{
    if let Some(r) = radii.iter().find(|&&r| r > 0.5 * geom.circle_len) {
        return Err(Error::Argument(format!("ball radius {r} exceeds half the circle length")));
    }
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    Ok(integrate(fam, geom, radii.len(), |s, w, acc| {
        let d = surface_distance(geom, &SurfacePoint { chart: s.chart, z: s.z }, &centre);
        if d >= rmax {
            return;
        }
        let v = g(s);
        if v == 0.0 {
            return;
        }
        for (a, &r) in acc.iter_mut().zip(radii) {
            if d < r {
                *a += w / geom.circle_len * 2.0 * (r * r - d * d).sqrt() * v;
            }
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub radii: Vec<f64>,
    pub integrals: Vec<f64>,
    /// Radii below the resolution guard, left out of the check.
    pub excluded: Vec<f64>,
    /// Smallest `c >= 0` making every pair satisfy the inequality.
    pub c_min: f64,
}

/// Smallest `c >= 0` with `e^{cr} I(r) / r - e^{cs} I(s) / s >= -c (r^2 - s^2)` for all
/// sampled `s < r` above `4 h_guard`.
pub fn energy_monotonicity_check(radii: &[f64], integrals: &[f64], h_guard: f64) -> MonotonicityReport {
    let mut kept: Vec<(f64, f64)> = Vec::new();
    let mut excluded = Vec::new();
    for (&r, &i) in radii.iter().zip(integrals) {
        if r < 4.0 * h_guard {
            excluded.push(r);
        } else {
            kept.push((r, i));
        }
    }
    kept.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ok = |c: f64, (s, is): (f64, f64), (r, ir): (f64, f64)| {
        (c * r).exp() * ir / r - (c * s).exp() * is / s >= -c * (r * r - s * s) - 1e-12 * ir.abs().max(1.0)
    };
    let mut c_min: f64 = 0.0;
    for a in 0..kept.len() {
        for b in a + 1..kept.len() {
            if ok(c_min, kept[a], kept[b]) {
                continue;
            }
            let mut hi = c_min.max(1.0);
            while !ok(hi, kept[a], kept[b]) && hi < 1e12 {
                hi *= 2.0;
            }
            let mut lo = c_min;
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if ok(mid, kept[a], kept[b]) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            c_min = hi;
        }
    }
    MonotonicityReport {
        radii: kept.iter().map(|x| x.0).collect(),
        integrals: kept.iter().map(|x| x.1).collect(),
        excluded,
        c_min,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub gamma: f64,
    pub constant: f64,
    /// `||u||^(-p / (1 + gamma))`, below which the second envelope term dominates.
    pub crossover: f64,
    pub points_used: usize,
}

/// Fits `int_B density / ||u||^2 <= C (r^(1+gamma) + ||u||^-p)`: `gamma` from the
/// log-log slope on radii where the first term dominates, clamped at 0, then `C` as
/// the smallest constant covering every sample.
pub fn macroscopic_energy_decay(radii: &[f64], integrals: &[f64], norm: f64, p: f64) -> DecayFit {
    let floor = norm.powf(-p);
    let pts: Vec<(f64, f64)> = radii
        .iter()
        .zip(integrals)
        .map(|(&r, &i)| (r, i / (norm * norm)))
        .filter(|&(_, y)| y > floor)
        .collect();
    let gamma = if pts.len() >= 2 {
        let x: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
        (fit_line(&x, &y).slope - 1.0).max(0.0)
    } else {
        0.0
    };
    let constant = radii
        .iter()
        .zip(integrals)
        .map(|(&r, &i)| i / (norm * norm) / (r.powf(1.0 + gamma) + floor))
        .fold(0.0, f64::max);
    DecayFit { gamma, constant, crossover: floor.powf(1.0 / (1.0 + gamma)), points_used: pts.len() }
}

// ------------------------------------------------------------------ convergence

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub scale: f64,
    pub log_scale: f64,
    pub norm: f64,
    pub l2_distance: f64,
    pub sup_distance: f64,
    /// `int |grad v|^p` for `p = 2, 2.5, 3`.
    pub grad_p: [f64; 3],
    pub dirichlet: f64,
    pub limit_dirichlet: f64,
    pub w12: f64,
    pub w13: f64,
    /// `|Dir(v) - Dir(limit)| / ||limit||^2_{W^{1,2}}`.
    pub energy_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Best `c` in `l2_distance ~ c / log(scale)` (least squares in logs).
    pub l2_c: f64,
    /// `l2_distance * log(scale) / c` per row.
    pub l2_ratios: Vec<f64>,
    pub w12_max_over_min: f64,
    /// Slope of `log int |grad v|^3` against `log(scale)`.
    pub raw_growth: f64,
    /// Slope after multiplying by `|log scale|^3`.
    pub compensated_growth: f64,
    pub w13_increasing: bool,
}

/// Limit model for the normalised family.
pub fn limit_model(kind: FamilyKind) -> Z2HarmonicModel {
    Z2HarmonicModel { kind: crate::z2_harmonic::ModelKind::FamilyLimit { family: kind }, amplitude: 1.0 }
}

fn limit_at(limit: &Z2HarmonicModel, geom: &ProductGeometry, s: &FieldSample) -> ([f64; 3], f64) {
    let x = [s.z.re, s.z.im, 0.0];
    let v = limit.eval(x);
    let j = limit.jacobian(x);
    let rho = geom.conformal_factor(s.z);
    let g2: f64 = (0..3).map(|i| (j[i][0] / rho).powi(2) + (j[i][1] / rho).powi(2)).sum();
    (v, if g2.is_finite() { g2 } else { 0.0 })
}

pub fn convergence_experiment(
    fam: &FueterFamily,
    geom: &ProductGeometry,
    scales: &[f64],
    limit: &Z2HarmonicModel,
) -> Result<ConvergenceReport> {
    if limit.degree() > 0.0 && !matches!(geom.surface, Surface::Disc { .. }) {
        return Err(Error::Argument("branch-type limits are defined on the disc only".into()));
    }
    let mut rows = Vec::new();
    for &sc in scales {
        let f = fam.with_scale(sc);
        f.validate(geom)?;
        let norm = sup_norm(&f, geom)?;
        let acc = integrate(&f, geom, 8, |s, w, acc| {
            let v: Vec<f64> = s.value.iter().map(|x| x / norm).collect();
            let (lv, lg2) = limit_at(limit, geom, s);
            let d = pair_distance(&v, &lv).expect("three components");
            let g2 = s.grad_norm2() / (norm * norm);
            let g = g2.sqrt();
            let v2: f64 = v.iter().map(|x| x * x).sum();
            let l2: f64 = lv.iter().map(|x| x * x).sum();
            acc[0] += w * d * d;
            acc[1] += w * g2;
            acc[2] += w * g2 * g.sqrt();
            acc[3] += w * g2 * g;
            acc[4] += w * lg2;
            acc[5] += w * v2;
            acc[6] += w * v2 * v2.sqrt();
            acc[7] += w * l2;
        });
        let sup_distance = sup_over_nodes(&f, geom, |s| {
            let v: Vec<f64> = s.value.iter().map(|x| x / norm).collect();
            pair_distance(&v, &limit_at(limit, geom, s).0).expect("three components")
        });
        let limit_w12_sq = acc[7] + acc[4];
        rows.push(ConvergenceRow {
            scale: sc,
            log_scale: sc.ln(),
            norm,
            l2_distance: acc[0].sqrt(),
            sup_distance,
            grad_p: [acc[1], acc[2], acc[3]],
            dirichlet: acc[1],
            limit_dirichlet: acc[4],
            w12: (acc[5] + acc[1]).sqrt(),
            w13: (acc[6] + acc[3]).cbrt(),
            energy_loss: (acc[1] - acc[4]).abs() / limit_w12_sq,
        });
    }
    let logs: Vec<f64> = rows.iter().map(|r| r.log_scale).collect();
    let l2_c = (rows.iter().map(|r| (r.l2_distance * r.log_scale).ln()).sum::<f64>() / rows.len() as f64).exp();
    let l2_ratios = rows.iter().map(|r| r.l2_distance * r.log_scale / l2_c).collect();
    let w12: Vec<f64> = rows.iter().map(|r| r.w12).collect();
    let w12_max_over_min =
        w12.iter().cloned().fold(0.0, f64::max) / w12.iter().cloned().fold(f64::INFINITY, f64::min);
    let g3: Vec<f64> = rows.iter().map(|r| r.grad_p[2].ln()).collect();
    let g3c: Vec<f64> = rows.iter().map(|r| (r.grad_p[2] * r.log_scale.powi(3)).ln()).collect();
    let (raw_growth, compensated_growth) = if rows.len() > 1 {
        (fit_line(&logs, &g3).slope, fit_line(&logs, &g3c).slope)
    } else {
        (f64::NAN, f64::NAN)
    };
    let w13_increasing = rows.windows(2).all(|w| w[1].w13 > w[0].w13);
    Ok(ConvergenceReport { rows, l2_c, l2_ratios, w12_max_over_min, raw_growth, compensated_growth, w13_increasing })
}

// --------------------------------------------------------- Lipschitz ladder

/// Projection field of the family on one chart lattice of `n x n` cells over
/// `[-half_width, half_width]^2`, as a planar two-valued field.
pub fn family_chart_field(
    fam: &FueterFamily,
    geom: &ProductGeometry,
    chart: ChartId,
    half_width: f64,
    n: usize,
) -> Result<TwoValuedField> {
    fam.validate(geom)?;
    let h = 2.0 * half_width / n as f64;
    let mut f = TwoValuedField::from_fn([n, n, 1], h, [-half_width, -half_width, 0.0], 3, |x| {
        sample(fam, geom, chart, C64::new(x[0], x[1])).value.to_vec()
    });
    f.frame = "e1,e2,e3".into();
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzRow {
    pub lambda: f64,
    pub bad_measure: f64,
    /// `|E| lambda^2 / (energy / ||u||^2)`.
    pub measure_ratio: f64,
    pub lip: f64,
    pub lip_over_lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzScan {
    pub norm: f64,
    pub energy: f64,
    pub rows: Vec<LipschitzRow>,
    pub c_measure: f64,
    pub c_lip: f64,
}

pub fn lipschitz_scan(field: &TwoValuedField, norm: f64, lambdas: &[f64]) -> Result<LipschitzScan> {
    let energy = dirichlet_energy(field, None).energy;
    let mut rows = Vec::new();
    for &lam in lambdas {
        let r = lipschitz_approx(field, lam, norm)?;
        let ratio = if energy > 0.0 { r.bad_measure * lam * lam / (energy / (norm * norm)) } else { 0.0 };
        rows.push(LipschitzRow {
            lambda: lam,
            bad_measure: r.bad_measure,
            measure_ratio: ratio,
            lip: r.lip_bound,
            lip_over_lambda: r.lip_bound / lam,
        });
    }
    let c_measure = rows.iter().map(|r| r.measure_ratio).fold(0.0, f64::max);
    let c_lip = rows.iter().map(|r| r.lip_over_lambda).fold(0.0, f64::max);
    Ok(LipschitzScan { norm, energy, rows, c_measure, c_lip })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderRow {
    pub scale: f64,
    pub norm: f64,
    pub lambda: f64,
    pub holder: f64,
    pub campanato: f64,
    pub sup: f64,
}

/// Holder-`gamma/2` seminorm of the Lipschitz approximation at `lambda = ||u||^q` along
/// a family ladder, on the chart lattice around its centre.
pub fn holder_ladder(
    fam: &FueterFamily,
    geom: &ProductGeometry,
    chart: ChartId,
    half_width: f64,
    n: usize,
    scales: &[f64],
    gamma: f64,
    q: f64,
) -> Result<Vec<HolderRow>> {
    scales
        .iter()
        .map(|&sc| {
            let f = fam.with_scale(sc);
            let norm = sup_norm(&f, geom)?;
            let field = family_chart_field(&f, geom, chart, half_width, n)?;
            let lam = norm.powf(q);
            let r = lipschitz_approx(&field, lam, norm)?;
            let sup = (0..r.field_lambda.len()).map(|i| r.field_lambda.magnitude(i)).fold(0.0, f64::max);
            Ok(HolderRow {
                scale: sc,
                norm,
                lambda: lam,
                holder: holder_seminorm(&r.field_lambda, 0.5 * gamma),
                campanato: campanato_seminorm(&r.field_lambda, gamma),
                sup,
            })
        })
        .collect()
}

// -------------------------------------------------------------------- frequency

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrequencyTriple {
    pub h: f64,
    pub d: f64,
    pub i: f64,
    pub centre: [f64; 3],
    pub r: f64,
    pub mollifier: &'static str,
}

/// Fields on `R^3` with a value, gradient data and Laplacian of `f`, for lattice frequency
/// quadrature.
pub trait FrequencyField: Sync {
    /// `f(x)`, the mass density in `H`.
    fn mass(&self, x: [f64; 3]) -> f64;
    /// Density in `D`.
    fn energy(&self, x: [f64; 3]) -> f64;
    fn grad_mass(&self, x: [f64; 3]) -> [f64; 3];
    fn laplacian_mass(&self, x: [f64; 3]) -> f64;
}

impl FrequencyField for Z2HarmonicModel {
    fn mass(&self, x: [f64; 3]) -> f64 {
        self.eval(x).iter().map(|v| v * v).sum()
    }

    fn energy(&self, x: [f64; 3]) -> f64 {
        let j = self.jacobian(x);
        j.iter().flatten().map(|v| v * v).sum()
    }

    fn grad_mass(&self, x: [f64; 3]) -> [f64; 3] {
        let v = self.eval(x);
        let j = self.jacobian(x);
        let mut g = [0.0; 3];
        for k in 0..3 {
            g[k] = 2.0 * (0..3).map(|i| v[i] * j[i][k]).sum::<f64>();
        }
        g
    }

    /// `Delta |V|^2 = 2 |grad V|^2` for a harmonic lift.
    fn laplacian_mass(&self, x: [f64; 3]) -> f64 {
        2.0 * self.energy(x)
    }
}

/// `f = |x|^2`, the closed-form test of the derivative identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QuadraticMass;

impl FrequencyField for QuadraticMass {
    fn mass(&self, x: [f64; 3]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    fn energy(&self, x: [f64; 3]) -> f64 {
        4.0 * self.mass(x)
    }

    fn grad_mass(&self, x: [f64; 3]) -> [f64; 3] {
        [2.0 * x[0], 2.0 * x[1], 2.0 * x[2]]
    }

    fn laplacian_mass(&self, _: [f64; 3]) -> f64 {
        6.0
    }
}

/// Cell-centred lattice of spacing `h` about `centre`, offset by half a cell so the
/// centre and any axis through it fall on cell corners. `f(y, d)` gets the node and its
/// distance to the centre; returns `sum f * h^3` over nodes with `d < r`.
fn ball_lattice_sum<F>(centre: [f64; 3], r: f64, h: f64, k: usize, f: F) -> Vec<f64>
where
    F: Fn([f64; 3], f64, &mut [f64]) + Sync,
{
    let m = (r / h).ceil() as i64;
    let planes: Vec<Vec<f64>> = (-m..m)
        .into_par_iter()
        .map(|a| {
            let mut acc = vec![0.0; k];
            let x = (a as f64 + 0.5) * h;
            for b in -m..m {
                let y = (b as f64 + 0.5) * h;
                if x * x + y * y >= r * r {
                    continue;
                }
                for c in -m..m {
                    let z = (c as f64 + 0.5) * h;
                    let d = (x * x + y * y + z * z).sqrt();
                    if d < r {
                        f([centre[0] + x, centre[1] + y, centre[2] + z], d, &mut acc);
                    }
                }
            }
            acc
        })
        .collect();
    let mut out = vec![0.0; k];
    for p in planes {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out.iter().map(|v| v * h * h * h).collect()
}

/// Mollified `H`, `D` and `I = r D / H` on a lattice of spacing `h`.
pub fn frequency<F: FrequencyField>(field: &F, centre: [f64; 3], r: f64, h: f64) -> Result<FrequencyTriple> {
    let phi = Mollifier;
    let s = ball_lattice_sum(centre, r, h, 2, |y, d, acc| {
        let (p, dp, _) = phi.eval(d / r);
        if dp != 0.0 {
            acc[0] -= field.mass(y) / d * dp;
        }
        if p != 0.0 {
            acc[1] += field.energy(y) * p;
        }
    });
    let (hh, dd) = (s[0], s[1]);
    let scale = field.mass(centre).abs().max(1.0) * r * r * 1e-13;
    if !(hh > scale) {
        return Err(Error::Degenerate(format!("H = {hh:e} is not positive on B({centre:?}, {r})")));
    }
    Ok(FrequencyTriple { h: hh, d: dd, i: r * dd / hh, centre, r, mollifier: Mollifier::ID })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeIdentity {
    /// Centred difference of `H` in `r` with step `h`.
    pub dh_dr: f64,
    /// `r^-1 int -grad_nu f phi'(d / r)`.
    pub flux_form: f64,
    /// `int Delta f phi(d / r)`.
    pub laplacian_form: f64,
    /// `|dH/dr - laplacian_form| / |laplacian_form|`.
    pub literal_residual: f64,
    /// Same against `(2 / r) H + laplacian_form`, the form that holds in three dimensions.
    pub corrected_residual: f64,
    pub h_value: f64,
}

pub fn frequency_derivative_identity<F: FrequencyField>(
    field: &F,
    centre: [f64; 3],
    r: f64,
    h: f64,
) -> Result<DerivativeIdentity> {
    let phi = Mollifier;
    let hval = |rr: f64| {
        ball_lattice_sum(centre, rr, h, 1, |y, d, acc| {
            let (_, dp, _) = phi.eval(d / rr);
            if dp != 0.0 {
                acc[0] -= field.mass(y) / d * dp;
            }
        })[0]
    };
    let dr = h;
    let dh_dr = (hval(r + dr) - hval(r - dr)) / (2.0 * dr);
    let h0 = hval(r);
    let s = ball_lattice_sum(centre, r, h, 2, |y, d, acc| {
        let (p, dp, _) = phi.eval(d / r);
        if dp != 0.0 && d > 0.0 {
            let g = field.grad_mass(y);
            let nu = [(y[0] - centre[0]) / d, (y[1] - centre[1]) / d, (y[2] - centre[2]) / d];
            acc[0] -= (g[0] * nu[0] + g[1] * nu[1] + g[2] * nu[2]) * dp / r;
        }
        if p != 0.0 {
            acc[1] += field.laplacian_mass(y) * p;
        }
    });
    let (flux, lap) = (s[0], s[1]);
    let denom = lap.abs().max(f64::MIN_POSITIVE);
    let corrected = 2.0 / r * h0 + lap;
    Ok(DerivativeIdentity {
        dh_dr,
        flux_form: flux,
        laplacian_form: lap,
        literal_residual: if lap == 0.0 && dh_dr == 0.0 { 0.0 } else { (dh_dr - lap).abs() / denom },
        corrected_residual: if corrected == 0.0 && dh_dr == 0.0 {
            0.0
        } else {
            (dh_dr - corrected).abs() / corrected.abs().max(f64::MIN_POSITIVE)
        },
        h_value: h0,
    })
}

/// Which gradient density enters `D` for family fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FamilyEnergy {
    /// The full model density `|grad u|^2`.
    #[default]
    Full,
    /// `|grad pi(u)|^2` only.
    Projection,
}

fn fibre_kernel(r: f64, n_tab: usize) -> (Vec<f64>, Vec<f64>) {
    let phi = Mollifier;
    let (x, w) = gauss_legendre(8);
    let panels = 8;
    let mut kh = vec![0.0; n_tab + 1];
    let mut kd = vec![0.0; n_tab + 1];
    for k in 0..=n_tab {
        let d = r * k as f64 / n_tab as f64;
        let tmax = (r * r - d * d).max(0.0).sqrt();
        let (mut sh, mut sd) = (0.0, 0.0);
        for p in 0..panels {
            let a = tmax * p as f64 / panels as f64;
            let b = tmax * (p + 1) as f64 / panels as f64;
            for (xi, wi) in x.iter().zip(&w) {
                let t = 0.5 * (a + b) + 0.5 * (b - a) * xi;
                let rho = (d * d + t * t).sqrt();
                let (v, dv, _) = phi.eval(rho / r);
                let wt = 0.5 * (b - a) * wi * 2.0;
                if rho > 0.0 {
                    sh -= wt * dv / rho;
                }
                sd += wt * v;
            }
        }
        kh[k] = sh;
        kd[k] = sd;
    }
    (kh, kd)
}

fn interp(tab: &[f64], r: f64, d: f64) -> f64 {
    let n = tab.len() - 1;
    let s = d / r * n as f64;
    let i = (s.floor() as usize).min(n - 1);
    let f = s - i as f64;
    tab[i] * (1.0 - f) + tab[i + 1] * f
}

/// Frequency of a family about `(centre, 0)` with `f = |pi(u)|^2`: the fibre integrals of
/// the mollifier are tabulated once per radius and the surface integral uses the graded
/// quadrature.
pub fn family_frequency(
    model: &EnergyModel,
    fam: &FueterFamily,
    geom: &ProductGeometry,
    centre: SurfacePoint,
    radii: &[f64],
    which: FamilyEnergy,
) -> Result<Vec<FrequencyTriple>> {
    fam.validate(geom)?;
    if let Some(r) = radii.iter().find(|&&r| r > 0.5 * geom.circle_len) {
        return Err(Error::Argument(format!("radius {r} exceeds half the circle length")));
    }
    let tabs: Vec<(Vec<f64>, Vec<f64>)> = radii.iter().map(|&r| fibre_kernel(r, 4096)).collect();
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    let k = radii.len();
    let acc = integrate(fam, geom, 2 * k, |s, w, acc| {
        let d = surface_distance(geom, &SurfacePoint { chart: s.chart, z: s.z }, &centre);
        if d >= rmax {
            return;
        }
        let mass = s.magnitude * s.magnitude;
        let en = match which {
            FamilyEnergy::Full => energy_density(model, fam, s).0,
            FamilyEnergy::Projection => s.grad_norm2(),
        };
        let w = w / geom.circle_len;
        for (j, &r) in radii.iter().enumerate() {
            if d < r {
                acc[2 * j] += w * mass * interp(&tabs[j].0, r, d);
                acc[2 * j + 1] += w * en * interp(&tabs[j].1, r, d);
            }
        }
    });
    radii
        .iter()
        .enumerate()
        .map(|(j, &r)| {
            let (hh, dd) = (acc[2 * j], acc[2 * j + 1]);
            if !(hh > 0.0) {
                return Err(Error::Degenerate(format!("H vanishes at radius {r}")));
            }
            Ok(FrequencyTriple { h: hh, d: dd, i: r * dd / hh, centre: [centre.z.re, centre.z.im, 0.0], r, mollifier: Mollifier::ID })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyScan {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub excluded: Vec<f64>,
    /// Smallest `C >= 0` with `I(r) + C r^2` nondecreasing on the samples.
    pub c_model: f64,
    /// Smallest `C >= 0` with `dI/dr >= -C (r I + 1)` where `H >= ||u||^(2-p)` (family mode).
    pub c_family: Option<f64>,
    pub i_min: f64,
    pub i_max: f64,
}

/// Monotonicity scan over sorted radii. Radii below `8 h_guard` are excluded; pass
/// `family = Some((norm, p))` for the differential inequality of family fields.
pub fn frequency_monotonicity_scan(
    triples: &[FrequencyTriple],
    h_guard: f64,
    family: Option<(f64, f64)>,
) -> FrequencyScan {
    let mut t: Vec<FrequencyTriple> = triples.to_vec();
    t.sort_by(|a, b| a.r.total_cmp(&b.r));
    let (kept, excl): (Vec<_>, Vec<_>) = t.into_iter().partition(|x| x.r >= 8.0 * h_guard);
    let mut c_model: f64 = 0.0;
    for w in kept.windows(2) {
        let di = w[1].i - w[0].i;
        if di < 0.0 {
            c_model = c_model.max(-di / (w[1].r * w[1].r - w[0].r * w[0].r));
        }
    }
    let c_family = family.map(|(norm, p)| {
        let floor = norm.powf(2.0 - p);
        let mut c: f64 = 0.0;
        for w in kept.windows(2) {
            if w[0].h < floor || w[1].h < floor {
                continue;
            }
            let slope = (w[1].i - w[0].i) / (w[1].r - w[0].r);
            let rm = 0.5 * (w[0].r + w[1].r);
            let im = 0.5 * (w[0].i + w[1].i);
            if slope < 0.0 {
                c = c.max(-slope / (rm * im + 1.0));
            }
        }
        c
    });
    let values: Vec<f64> = kept.iter().map(|x| x.i).collect();
    FrequencyScan {
        radii: kept.iter().map(|x| x.r).collect(),
        i_min: values.iter().cloned().fold(f64::INFINITY, f64::min),
        i_max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        values,
        excluded: excl.iter().map(|x| x.r).collect(),
        c_model,
        c_family,
    }
}

/// Least-squares fit helper re-exported for reports.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> LineFit {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly)
}

/// Nodes visited by the graded quadrature, for diagnostics of its resolution.
pub fn quadrature_node_count(fam: &FueterFamily, geom: &ProductGeometry) -> usize {
    visit_nodes(fam, geom, || 0usize, |_, _, n| *n += 1).into_iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mollifier_profile() {
        let m = Mollifier;
        assert_eq!(m.eval(0.5), (1.0, 0.0, 0.0));
        assert_eq!(m.eval(1.2).0, 0.0);
        for k in 0..100 {
            let t = 0.75 + 0.25 * k as f64 / 100.0;
            assert!(m.eval(t).1 <= 0.0);
        }
    }

    #[test]
    fn constant_density_monotonicity() {
        let radii = [0.1, 0.2, 0.3, 0.4];
        let ints: Vec<f64> = radii.iter().map(|r: &f64| 3.0 * 4.0 / 3.0 * std::f64::consts::PI * r.powi(3)).collect();
        let rep = energy_monotonicity_check(&radii, &ints, 0.01);
        assert_eq!(rep.c_min, 0.0);
        let guarded = energy_monotonicity_check(&radii, &ints, 0.05);
        assert_eq!(guarded.excluded, vec![0.1]);
        let scaled: Vec<f64> = ints.iter().map(|v| 1e4 * v).collect();
        let fit = macroscopic_energy_decay(&radii, &scaled, 10.0, DEFAULT_P);
        assert_relative_eq!(fit.gamma, 2.0, max_relative = 1e-10);
    }

    #[test]
    fn constant_model_has_zero_frequency() {
        let t = frequency(&Z2HarmonicModel::constant_dt(1.0), [0.0; 3], 0.25, 1.0 / 64.0).unwrap();
        assert_eq!(t.d, 0.0);
        assert_eq!(t.i, 0.0);
        let d = frequency_derivative_identity(&Z2HarmonicModel::constant_dt(1.0), [0.0; 3], 0.25, 1.0 / 64.0).unwrap();
        assert_eq!(d.laplacian_form, 0.0);
        assert!(d.corrected_residual < 1e-3, "{d:?}");
    }

    #[test]
    fn vanishing_field_is_degenerate() {
        let z = Z2HarmonicModel::saddle(0.0);
        assert!(matches!(frequency(&z, [0.0; 3], 0.25, 1.0 / 32.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn constant_family_energy_is_zero() {
        let fam = FueterFamily::vertical(vec![C64::new(1.0, 0.0)], 50.0);
        let geom = ProductGeometry::torus([1.0, 1.0], 16);
        let p = sublevel_energy(&EnergyModel::default(), &fam, &geom, &[10.0]).unwrap();
        assert_eq!(p.total, 0.0);
    }
}
