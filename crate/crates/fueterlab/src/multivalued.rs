//! Average-zero two-valued fields `{w, -w}` on a uniform box lattice: quotient metric,
//! Dirichlet energy with per-edge sign alignment, maximal function, Lipschitz
//! approximation, and Campanato and Holder seminorms.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// `min(|a - b|, |a + b|)`.
pub fn pair_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(a.len(), b.len()));
    }
    Ok(aligned(a, b).0)
}

/// `(min, max)` of `|a - b|` and `|a + b|`, and whether the minimum uses `-b`.
fn aligned_full(a: &[f64], b: &[f64]) -> (f64, f64, bool) {
    let (mut m, mut p) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        m += (x - y) * (x - y);
        p += (x + y) * (x + y);
    }
    let (m, p) = (m.sqrt(), p.sqrt());
    if m <= p {
        (m, p, false)
    } else {
        (p, m, true)
    }
}

fn aligned(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (lo, hi, _) = aligned_full(a, b);
    (lo, hi)
}

/// A sign-quotient field sampled at cell centres `origin + (i + 1/2) h`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoValuedField {
    pub dims: [usize; 3],
    pub h: f64,
    pub origin: [f64; 3],
    pub fiber: usize,
    pub values: Vec<f64>,
    pub frame: String,
}

impl TwoValuedField {
    pub fn from_fn<F>(dims: [usize; 3], h: f64, origin: [f64; 3], fiber: usize, f: F) -> Self
    where
        F: Fn([f64; 3]) -> Vec<f64> + Sync,
    {
        let n = dims[0] * dims[1] * dims[2];
        let cells: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|idx| {
                let v = f(Self::centre_of(dims, h, origin, idx));
                assert_eq!(v.len(), fiber, "fibre dimension");
                v
            })
            .collect();
        Self { dims, h, origin, fiber, values: cells.concat(), frame: "flat".into() }
    }

    fn centre_of(dims: [usize; 3], h: f64, origin: [f64; 3], idx: usize) -> [f64; 3] {
        let i = idx % dims[0];
        let j = (idx / dims[0]) % dims[1];
        let k = idx / (dims[0] * dims[1]);
        [
            origin[0] + (i as f64 + 0.5) * h,
            origin[1] + (j as f64 + 0.5) * h,
            origin[2] + (k as f64 + 0.5) * h,
        ]
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn centre(&self, idx: usize) -> [f64; 3] {
        Self::centre_of(self.dims, self.h, self.origin, idx)
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        [idx % self.dims[0], (idx / self.dims[0]) % self.dims[1], idx / (self.dims[0] * self.dims[1])]
    }

    pub fn value(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.fiber..(idx + 1) * self.fiber]
    }

    pub fn magnitude(&self, idx: usize) -> f64 {
        self.value(idx).iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Number of axes with more than one cell.
    pub fn active_dims(&self) -> usize {
        self.dims.iter().filter(|&&n| n > 1).count()
    }

    /// Measure of one cell in the active dimensions.
    pub fn cell_measure(&self) -> f64 {
        self.h.powi(self.active_dims() as i32)
    }

    pub fn neighbour(&self, idx: usize, axis: usize, step: isize) -> Option<usize> {
        let mut c = self.coords(idx);
        let v = c[axis] as isize + step;
        if v < 0 || v >= self.dims[axis] as isize {
            return None;
        }
        c[axis] = v as usize;
        Some(self.index(c[0], c[1], c[2]))
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut o = self.clone();
        o.values.iter_mut().for_each(|x| *x *= s);
        o
    }

    /// Per-cell `|Dv|` from sign-aligned centred differences (one-sided at the boundary).
    pub fn gradient_norm(&self) -> Vec<f64> {
        (0..self.len())
            .into_par_iter()
            .map(|idx| {
                let c = self.value(idx);
                let mut g2 = 0.0;
                for axis in 0..3 {
                    if self.dims[axis] < 2 {
                        continue;
                    }
                    let p = self.neighbour(idx, axis, 1);
                    let m = self.neighbour(idx, axis, -1);
                    let lift = |n: usize| -> Vec<f64> {
                        let v = self.value(n);
                        if aligned_full(c, v).2 {
                            v.iter().map(|x| -x).collect()
                        } else {
                            v.to_vec()
                        }
                    };
                    let d: Vec<f64> = match (p, m) {
                        (Some(p), Some(m)) => {
                            let (a, b) = (lift(p), lift(m));
                            a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * self.h)).collect()
                        }
                        (Some(p), None) => lift(p).iter().zip(c).map(|(x, y)| (x - y) / self.h).collect(),
                        (None, Some(m)) => c.iter().zip(lift(m)).map(|(x, y)| (x - y) / self.h).collect(),
                        (None, None) => vec![0.0; self.fiber],
                    };
                    g2 += d.iter().map(|x| x * x).sum::<f64>();
                }
                g2.sqrt()
            })
            .collect()
    }

    /// Largest sign-aligned edge quotient `pair_distance / h`.
    pub fn lipschitz_constant(&self) -> f64 {
        (0..self.len())
            .into_par_iter()
            .map(|idx| {
                let mut m: f64 = 0.0;
                for axis in 0..3 {
                    if let Some(n) = self.neighbour(idx, axis, 1) {
                        m = m.max(aligned(self.value(idx), self.value(n)).0 / self.h);
                    }
                }
                m
            })
            .reduce(|| 0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletReport {
    pub energy: f64,
    pub edges: usize,
    /// Edges where both sign alignments agree to within the relative tolerance.
    pub ambiguous: usize,
}

/// Relative tolerance below which an edge counts as ambiguous.
pub const AMBIGUITY_TOL: f64 = 0.25;

/// `sum over edges (aligned difference / h)^2 * cell measure`, over edges with both
/// endpoints in `region` (all cells when `None`).
pub fn dirichlet_energy(f: &TwoValuedField, region: Option<&[bool]>) -> DirichletReport {
    let inside = |i: usize| region.map_or(true, |r| r[i]);
    let rows: Vec<(f64, usize, usize)> = (0..f.len())
        .into_par_iter()
        .map(|idx| {
            let mut acc = (0.0, 0usize, 0usize);
            if !inside(idx) {
                return acc;
            }
            for axis in 0..3 {
                if let Some(n) = f.neighbour(idx, axis, 1) {
                    if !inside(n) {
                        continue;
                    }
                    let (lo, hi) = aligned(f.value(idx), f.value(n));
                    let scale = f.magnitude(idx) + f.magnitude(n);
                    if hi - lo <= AMBIGUITY_TOL * scale {
                        acc.2 += 1;
                    }
                    acc.0 += (lo / f.h).powi(2);
                    acc.1 += 1;
                }
            }
            acc
        })
        .collect();
    let mut out = DirichletReport { energy: 0.0, edges: 0, ambiguous: 0 };
    let e: Vec<f64> = rows.iter().map(|r| r.0).collect();
    out.energy = crate::quadrature::pairwise_sum(&e) * f.cell_measure();
    out.edges = rows.iter().map(|r| r.1).sum();
    out.ambiguous = rows.iter().map(|r| r.2).sum();
    out
}

/// Discrete Dirichlet energy with no sign alignment.
pub fn classical_dirichlet(f: &TwoValuedField) -> f64 {
    let mut e = Vec::with_capacity(f.len());
    for idx in 0..f.len() {
        let mut s = 0.0;
        for axis in 0..3 {
            if let Some(n) = f.neighbour(idx, axis, 1) {
                s += f.value(idx).iter().zip(f.value(n)).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (f.h * f.h);
            }
        }
        e.push(s);
    }
    crate::quadrature::pairwise_sum(&e) * f.cell_measure()
}

fn ball_offsets(dims: [usize; 3], radius_cells: f64) -> Vec<[isize; 3]> {
    let r = radius_cells.floor() as isize;
    let span = |a: usize| if dims[a] > 1 { r } else { 0 };
    let mut out = Vec::new();
    for dk in -span(2)..=span(2) {
        for dj in -span(1)..=span(1) {
            for di in -span(0)..=span(0) {
                if ((di * di + dj * dj + dk * dk) as f64) <= radius_cells * radius_cells {
                    out.push([di, dj, dk]);
                }
            }
        }
    }
    out
}

fn offset_index(dims: [usize; 3], c: [usize; 3], o: [isize; 3]) -> Option<usize> {
    let mut p = [0usize; 3];
    for a in 0..3 {
        let v = c[a] as isize + o[a];
        if v < 0 || v >= dims[a] as isize {
            return None;
        }
        p[a] = v as usize;
    }
    Some((p[2] * dims[1] + p[1]) * dims[0] + p[0])
}

/// Largest ball average of `g` over the radius list (balls clipped to the box).
pub fn maximal_function(g: &[f64], dims: [usize; 3], h: f64, radii: &[f64]) -> Result<Vec<f64>> {
    if g.len() != dims[0] * dims[1] * dims[2] {
        return Err(Error::Dimension(g.len(), dims[0] * dims[1] * dims[2]));
    }
    if let Some(r) = radii.iter().find(|&&r| r < 2.0 * h * (1.0 - 1e-12)) {
        return Err(Error::Argument(format!("radius {r} below 2h = {}", 2.0 * h)));
    }
    let stencils: Vec<Vec<[isize; 3]>> = radii.iter().map(|r| ball_offsets(dims, r / h)).collect();
    Ok((0..g.len())
        .into_par_iter()
        .map(|idx| {
            let c = [idx % dims[0], (idx / dims[0]) % dims[1], idx / (dims[0] * dims[1])];
            let mut best: f64 = 0.0;
            for st in &stencils {
                let (mut s, mut n) = (0.0, 0usize);
                for o in st {
                    if let Some(q) = offset_index(dims, c, *o) {
                        s += g[q];
                        n += 1;
                    }
                }
                best = best.max(s / n as f64);
            }
            best
        })
        .collect())
}

/// Dyadic radii `2h, 4h, ...` not exceeding a quarter of the smallest active extent.
pub fn dyadic_radii(f: &TwoValuedField) -> Vec<f64> {
    let ext = (0..3).filter(|&a| f.dims[a] > 1).map(|a| f.dims[a]).min().unwrap_or(1) as f64 * f.h;
    let mut r = 2.0 * f.h;
    let mut out = Vec::new();
    while r <= 0.25 * ext || out.is_empty() {
        out.push(r);
        r *= 2.0;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzApproxResult {
    pub field_lambda: TwoValuedField,
    pub bad_set: Vec<bool>,
    pub omega_set: Vec<bool>,
    pub lip_bound: f64,
    /// `|E_lambda|` in the active dimensions.
    pub bad_measure: f64,
}

/// Keeps `f / norm_scale` on `{M(|Dv| / norm_scale) <= lam}` and refills the rest by
/// inverse-distance blending of the nearest good values, each aligned in sign with the
/// nearest one. Bad cells are processed in index order.
pub fn lipschitz_approx(f: &TwoValuedField, lam: f64, norm_scale: f64) -> Result<LipschitzApproxResult> {
    if !(norm_scale > 0.0) {
        return Err(Error::Argument(format!("norm scale {norm_scale} must be positive")));
    }
    let g: Vec<f64> = f.gradient_norm().into_iter().map(|x| x / norm_scale).collect();
    let m = maximal_function(&g, f.dims, f.h, &dyadic_radii(f))?;
    let omega: Vec<bool> = m.iter().map(|&x| x <= lam).collect();
    if !omega.iter().any(|&b| b) {
        return Err(Error::Degenerate(format!("Omega_lambda is empty at lambda = {lam}; lambda too small")));
    }
    let bad: Vec<bool> = omega.iter().map(|b| !b).collect();
    let mut out = f.scaled(1.0 / norm_scale);
    let src = out.clone();
    let bad_idx: Vec<usize> = (0..f.len()).filter(|&i| bad[i]).collect();
    let filled: Vec<(usize, Vec<f64>)> = bad_idx
        .par_iter()
        .map(|&idx| (idx, whitney_value(&src, &omega, idx)))
        .collect();
    for (idx, v) in filled {
        out.values[idx * f.fiber..(idx + 1) * f.fiber].copy_from_slice(&v);
    }
    let lip = out.lipschitz_constant();
    Ok(LipschitzApproxResult {
        bad_measure: bad_idx.len() as f64 * f.cell_measure(),
        field_lambda: out,
        bad_set: bad,
        omega_set: omega,
        lip_bound: lip,
    })
}

fn whitney_value(src: &TwoValuedField, good: &[bool], idx: usize) -> Vec<f64> {
    let c = src.coords(idx);
    let dims = src.dims;
    let max_r = *dims.iter().max().expect("three dims") as isize;
    let mut shell = 1isize;
    let mut nearest: Option<(f64, usize)> = None;
    // expand Chebyshev shells until a good cell is found, then one shell beyond its
    // Euclidean distance so the true nearest cells are all seen
    let mut limit = max_r;
    let mut cand: Vec<(f64, usize)> = Vec::new();
    while shell <= limit {
        let span = |a: usize| if dims[a] > 1 { shell } else { 0 };
        for dk in -span(2)..=span(2) {
            for dj in -span(1)..=span(1) {
                for di in -span(0)..=span(0) {
                    if di.abs().max(dj.abs()).max(dk.abs()) != shell {
                        continue;
                    }
                    if let Some(q) = offset_index(dims, c, [di, dj, dk]) {
                        if good[q] {
                            let d = ((di * di + dj * dj + dk * dk) as f64).sqrt();
                            cand.push((d, q));
                            if nearest.map_or(true, |(dn, qn)| d < dn || (d == dn && q < qn)) {
                                nearest = Some((d, q));
                            }
                        }
                    }
                }
            }
        }
        if let Some((d, _)) = nearest {
            limit = limit.min((2.0 * d).ceil() as isize);
        }
        shell += 1;
    }
    let (d0, q0) = nearest.expect("omega nonempty");
    let anchor = src.value(q0).to_vec();
    let mut acc = vec![0.0; src.fiber];
    let mut wsum = 0.0;
    for (d, q) in cand.into_iter().filter(|(d, _)| *d <= 2.0 * d0) {
        let w = (d0 / d).powi(4);
        let v = src.value(q);
        let s = if aligned_full(&anchor, v).2 { -1.0 } else { 1.0 };
        for (a, x) in acc.iter_mut().zip(v) {
            *a += w * s * x;
        }
        wsum += w;
    }
    acc.iter().map(|a| a / wsum).collect()
}

/// `sup over dyadic lattice pairs of pair_distance / d^exponent`.
pub fn holder_seminorm(f: &TwoValuedField, exponent: f64) -> f64 {
    let mut steps = Vec::new();
    let mut s = 1usize;
    let maxn = *f.dims.iter().max().expect("dims");
    while s < maxn {
        steps.push(s);
        s *= 2;
    }
    steps
        .par_iter()
        .map(|&s| {
            let mut m: f64 = 0.0;
            for idx in 0..f.len() {
                for axis in 0..3 {
                    if let Some(n) = f.neighbour(idx, axis, s as isize) {
                        let d = aligned(f.value(idx), f.value(n)).0;
                        m = m.max(d / (s as f64 * f.h).powf(exponent));
                    }
                }
            }
            m
        })
        .reduce(|| 0.0, f64::max)
}

/// `(sup over balls of r^-(1 + gamma) int_B |Df|^2)^(1/2)`, balls of dyadic radius `2^k h`
/// centred on a lattice of stride `max(1, r / 2h)`.
pub fn campanato_seminorm(f: &TwoValuedField, gamma: f64) -> f64 {
    let g2: Vec<f64> = f.gradient_norm().iter().map(|x| x * x).collect();
    let ext = (0..3).filter(|&a| f.dims[a] > 1).map(|a| f.dims[a]).min().unwrap_or(1);
    let mut best: f64 = 0.0;
    let mut rc = 2usize;
    while rc <= ext / 2 {
        let st = ball_offsets(f.dims, rc as f64);
        let stride = (rc / 2).max(1);
        let r = rc as f64 * f.h;
        let centres: Vec<usize> = (0..f.len())
            .filter(|&i| {
                let c = f.coords(i);
                (0..3).all(|a| f.dims[a] == 1 || c[a] % stride == 0)
            })
            .collect();
        let m = centres
            .par_iter()
            .map(|&i| {
                let c = f.coords(i);
                st.iter().filter_map(|o| offset_index(f.dims, c, *o)).map(|q| g2[q]).sum::<f64>()
            })
            .reduce(|| 0.0, f64::max);
        best = best.max(m * f.cell_measure() / r.powf(1.0 + gamma));
        rc *= 2;
    }
    best.sqrt()
}

const MAGIC: &[u8; 8] = b"FLGRID01";

/// Binary layout, little endian: magic `FLGRID01`, `u32` dims (3), `u32` fibre,
/// `f64` spacing, `f64` origin (3), `u8` frame-tag length and ASCII tag, then the
/// `f64` values in cell order.
pub fn write_grid<W: Write>(mut w: W, f: &TwoValuedField) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    for d in f.dims {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    w.write_all(&(f.fiber as u32).to_le_bytes())?;
    w.write_all(&f.h.to_le_bytes())?;
    for o in f.origin {
        w.write_all(&o.to_le_bytes())?;
    }
    let tag = f.frame.as_bytes();
    w.write_all(&[tag.len().min(255) as u8])?;
    w.write_all(&tag[..tag.len().min(255)])?;
    for v in &f.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_grid<R: Read>(mut r: R) -> Result<TwoValuedField> {
    let io = |e: std::io::Error| Error::Argument(format!("grid read: {e}"));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::Argument("not a fueterlab grid file".into()));
    }
    let mut u = [0u8; 4];
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        r.read_exact(&mut u).map_err(io)?;
        *d = u32::from_le_bytes(u) as usize;
    }
    r.read_exact(&mut u).map_err(io)?;
    let fiber = u32::from_le_bytes(u) as usize;
    let mut b = [0u8; 8];
    let mut rd = |r: &mut R| -> Result<f64> {
        r.read_exact(&mut b).map_err(io)?;
        Ok(f64::from_le_bytes(b))
    };
    let h = rd(&mut r)?;
    let origin = [rd(&mut r)?, rd(&mut r)?, rd(&mut r)?];
    let mut l = [0u8; 1];
    r.read_exact(&mut l).map_err(io)?;
    let mut tag = vec![0u8; l[0] as usize];
    r.read_exact(&mut tag).map_err(io)?;
    let n = dims[0] * dims[1] * dims[2] * fiber;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        values.push(rd(&mut r)?);
    }
    Ok(TwoValuedField { dims, h, origin, fiber, values, frame: String::from_utf8_lossy(&tag).into_owned() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_complex::Complex64 as C64;

    fn branch(x: [f64; 3]) -> Vec<f64> {
        let g = C64::new(x[0], x[1]).sqrt();
        vec![g.re, -g.im, 0.0]
    }

    #[test]
    fn pair_distance_examples() {
        let w = [0.3, -1.0, 2.0];
        let m = [-0.3, 1.0, -2.0];
        assert_eq!(pair_distance(&w, &w).unwrap(), 0.0);
        assert_eq!(pair_distance(&w, &m).unwrap(), 0.0);
        assert_relative_eq!(pair_distance(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), 2f64.sqrt());
        assert!(matches!(pair_distance(&[1.0], &[1.0, 2.0]), Err(Error::Dimension(1, 2))));
    }

    #[test]
    fn dirichlet_examples() {
        let c = TwoValuedField::from_fn([8, 8, 8], 0.125, [0.0; 3], 3, |_| vec![1.0, 2.0, 3.0]);
        assert_eq!(dirichlet_energy(&c, None).energy, 0.0);
        let n = 16;
        let h = 1.0 / n as f64;
        let lin = TwoValuedField::from_fn([n, n, n], h, [1.0, 0.0, 0.0], 2, |x| vec![x[0], 0.5 * x[0]]);
        let e = dirichlet_energy(&lin, None).energy;
        // n - 1 edges along x per line, each contributing (1.25 h / h)^2 h^3
        assert_relative_eq!(e, 1.25 * (n - 1) as f64 / n as f64, max_relative = 1e-12);
        assert_relative_eq!(e, classical_dirichlet(&lin), max_relative = 1e-14);
    }

    #[test]
    fn annulus_energy_of_branch_form() {
        let h = 1.0 / 256.0;
        let n = 512;
        let f = TwoValuedField::from_fn([n, n, 1], h, [-1.0, -1.0, 0.0], 3, branch);
        let region: Vec<bool> = (0..f.len())
            .map(|i| {
                let c = f.centre(i);
                let r = c[0].hypot(c[1]);
                (0.5..=1.0).contains(&r)
            })
            .collect();
        let rep = dirichlet_energy(&f, Some(&region));
        // |grad|^2 = 1 / (2 rho); integral over the annulus is pi / 2
        assert_relative_eq!(rep.energy, std::f64::consts::FRAC_PI_2, max_relative = 0.01);
        assert_eq!(rep.ambiguous, 0);
    }

    #[test]
    fn maximal_function_examples() {
        let dims = [16, 16, 16];
        let h = 1.0 / 16.0;
        let c = vec![2.5; 4096];
        assert!(maximal_function(&c, dims, h, &[2.0 * h, 4.0 * h]).unwrap().iter().all(|x| (x - 2.5).abs() < 1e-12));
        let mut spike = vec![0.0; 4096];
        let centre = (8 * 16 + 8) * 16 + 8;
        spike[centre] = 1.0;
        let count = ball_offsets(dims, 4.0).len() as f64;
        let m = maximal_function(&spike, dims, h, &[4.0 * h]).unwrap();
        assert_relative_eq!(m[centre], 1.0 / count);
        assert!(maximal_function(&spike, dims, h, &[h]).is_err());
    }

    #[test]
    fn smooth_field_has_empty_bad_set() {
        let f = TwoValuedField::from_fn([12, 12, 12], 1.0 / 12.0, [0.0; 3], 1, |x| vec![1.0 + x[0] + 0.5 * x[1]]);
        let r = lipschitz_approx(&f, 2.0 * 1.2, 1.0).unwrap();
        assert!(r.bad_set.iter().all(|b| !b));
        assert_eq!(r.field_lambda, f);
        assert!(lipschitz_approx(&f, 0.1, 1.0).is_err());
    }

    #[test]
    fn holder_and_campanato_scale() {
        let f = TwoValuedField::from_fn([64, 64, 1], 1.0 / 32.0, [-1.0, -1.0, 0.0], 3, branch);
        let h = holder_seminorm(&f, 0.5);
        assert!(h.is_finite() && h > 0.5);
        assert_relative_eq!(holder_seminorm(&f.scaled(3.0), 0.5), 3.0 * h, max_relative = 1e-12);
        let c = campanato_seminorm(&f, 0.5);
        assert_relative_eq!(campanato_seminorm(&f.scaled(3.0), 0.5), 3.0 * c, max_relative = 1e-12);
    }

    #[test]
    fn grid_round_trip() {
        let f = TwoValuedField::from_fn([3, 4, 2], 0.1, [1.0, 2.0, 3.0], 3, branch);
        let mut buf = Vec::new();
        write_grid(&mut buf, &f).unwrap();
        assert_eq!(read_grid(&buf[..]).unwrap(), f);
        assert!(read_grid(&b"nonsense"[..]).is_err());
    }
}
