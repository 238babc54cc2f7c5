//! Adaptive Dormand-Prince 5(4) integrator with the standard continuous extension.

use crate::error::{Error, Result};

/// Tolerances and step limits for [`integrate`].
#[derive(Debug, Clone)]
pub struct OdeOptions<const N: usize> {
    pub rtol: f64,
    pub atol: [f64; N],
    pub h_init: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

/// One accepted step together with its dense-output coefficients.
#[derive(Debug, Clone)]
pub struct Step<const N: usize> {
    pub t0: f64,
    pub h: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    rcont: [[f64; N]; 4],
}

impl<const N: usize> Step<N> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    /// Fourth-order interpolant inside the step.
    pub fn eval(&self, t: f64) -> [f64; N] {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let mut out = [0.0; N];
        for (i, o) in out.iter_mut().enumerate() {
            let r = &self.rcont;
            *o = self.y0[i] + th * (r[0][i] + th1 * (r[1][i] + th * (r[2][i] + th1 * r[3][i])));
        }
        out
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Integrates `y' = f(t, y)` from `t0` to `t1 > t0`.
///
/// `guard` is called on every accepted state; it may abort the run with an error or
/// return `Ok(true)` to stop cleanly after that step.
pub fn integrate<const N: usize, F, G>(
    f: F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    opts: &OdeOptions<N>,
    mut guard: G,
) -> Result<Vec<Step<N>>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    G: FnMut(f64, &[f64; N]) -> Result<bool>,
{
    if !(t1 > t0) {
        return Err(Error::Argument(format!("need t1 > t0, got {t0} .. {t1}")));
    }
    let mut t = t0;
    let mut y = y0;
    let mut h = opts.h_init.min(opts.h_max).min(t1 - t0);
    let mut k1 = f(t, &y);
    let mut steps = Vec::new();
    let mut rejected_last = false;
    for _ in 0..opts.max_steps {
        if t >= t1 {
            return Ok(steps);
        }
        if t + h > t1 {
            h = t1 - t;
        }
        let k2 = f(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = f(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(
            t + C5 * h,
            &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = f(
            t + h,
            &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let y1 = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(t + h, &y1);

        let mut err = 0.0;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol[i] + opts.rtol * y[i].abs().max(y1[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / N as f64).sqrt();
        if !err.is_finite() {
            h *= 0.2;
            if h < opts.h_min {
                return Err(Error::Solver { t, last: y.to_vec(), msg: "non-finite error estimate".into() });
            }
            rejected_last = true;
            continue;
        }
        if err <= 1.0 {
            let mut rcont = [[0.0; N]; 4];
            for i in 0..N {
                let dy = y1[i] - y[i];
                let bspl = h * k1[i] - dy;
                rcont[0][i] = dy;
                rcont[1][i] = bspl;
                rcont[2][i] = dy - h * k7[i] - bspl;
                rcont[3][i] =
                    h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let stop = guard(t + h, &y1)?;
            steps.push(Step { t0: t, h, y0: y, y1, rcont });
            if stop {
                return Ok(steps);
            }
            t += h;
            y = y1;
            k1 = k7;
            let mut fac = 0.9 * err.max(1e-12).powf(-0.2);
            fac = fac.clamp(0.2, 5.0);
            if rejected_last {
                fac = fac.min(1.0);
            }
            rejected_last = false;
            h = (h * fac).min(opts.h_max);
        } else {
            let fac = (0.9 * err.powf(-0.2)).max(0.2);
            h *= fac;
            rejected_last = true;
            if h < opts.h_min {
                return Err(Error::Solver { t, last: y.to_vec(), msg: format!("step size underflow (h = {h:e})") });
            }
        }
    }
    Err(Error::Solver { t, last: y.to_vec(), msg: "maximum number of steps exceeded".into() })
}

/// Locates the step containing `t` (steps must be contiguous and increasing).
pub fn find_step<const N: usize>(steps: &[Step<N>], t: f64) -> Option<&Step<N>> {
    if steps.is_empty() {
        return None;
    }
    let i = steps.partition_point(|s| s.t1() < t);
    steps.get(i.min(steps.len() - 1)).filter(|s| t >= s.t0 && t <= s.t1())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(rtol: f64) -> OdeOptions<2> {
        OdeOptions { rtol, atol: [1e-14; 2], h_init: 1e-3, h_max: 1.0, h_min: 1e-14, max_steps: 100_000 }
    }

    #[test]
    fn harmonic_oscillator_matches_closed_form() {
        let steps = integrate(|_, y| [y[1], -y[0]], 0.0, [0.0, 1.0], 10.0, &opts(1e-10), |_, _| Ok(false)).unwrap();
        let last = steps.last().unwrap();
        assert!((last.t1() - 10.0).abs() < 1e-12);
        assert!((last.y1[0] - 10f64.sin()).abs() < 1e-8);
        let mid = find_step(&steps, 3.3).unwrap().eval(3.3);
        assert!((mid[0] - 3.3f64.sin()).abs() < 1e-8, "{}", mid[0] - 3.3f64.sin());
    }

    #[test]
    fn dense_output_hits_step_endpoints() {
        let steps = integrate(|t, y| [t * y[0], 1.0], 0.0, [1.0, 0.0], 2.0, &opts(1e-9), |_, _| Ok(false)).unwrap();
        for s in &steps {
            let a = s.eval(s.t0);
            let b = s.eval(s.t1());
            assert!((a[0] - s.y0[0]).abs() < 1e-13 * s.y0[0].abs().max(1.0));
            assert!((b[0] - s.y1[0]).abs() < 1e-12 * s.y1[0].abs().max(1.0));
        }
    }

    #[test]
    fn guard_aborts() {
        let r = integrate(|_, y| [y[0] * y[0], 0.0], 0.0, [1.0, 0.0], 2.0, &opts(1e-8), |t, y| {
            if y[0] > 1e6 { Err(Error::IntegrationDomain { t, msg: "blow-up".into() }) } else { Ok(false) }
        });
        assert!(matches!(r, Err(Error::IntegrationDomain { .. })));
    }
}
