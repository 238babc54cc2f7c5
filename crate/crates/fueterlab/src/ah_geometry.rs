//! Atiyah-Hitchin metric coefficients from the Darboux-Halphen flow.
//!
//! The flow parameter `t` is the asymptotic one: `t -> 0+` is the far end of the
//! manifold, where `w1 = w2 = -1/t` and `w3 = 1/(4t^2) - 1/t` up to exponentially
//! small terms, and the bolt sits at `t -> +inf`. In this parametrisation the pairwise
//! equations read `w_i' + w_j' = 2 w_i w_j`.
//!
//! The state is integrated as a perturbation of that rational solution:
//! `sigma = s + 1/t` with `s = (w1 + w2)/2`, the antisymmetric mode `delta = w1 - w2`,
//! and `eps3 = w3 - (1/(4t^2) - 1/t)`. The antisymmetric mode behaves like
//! `C t^-2 exp(-1/(2t))`, far below double precision relative to `w1` near the seed,
//! so it has to be carried as its own variable. Once the mode has grown to a
//! resolvable fraction of `w1` the integration continues in `(w1, w2, w3)` directly,
//! which keeps full relative precision on the two components that vanish at the bolt.

use crate::error::{Error, Result};
use crate::ode::{self, OdeOptions, Step};
use crate::quadrature::{fit_line, gauss_legendre, LineFit};

/// Amplitude `C` of the antisymmetric mode that reaches the bolt with `w1 -> -pi^2`
/// (mass `m = pi`). `C = 0` gives the rational solution, which runs into `w3 = 0`
/// at `t = 1/4`.
pub const ATIYAH_HITCHIN_AMPLITUDE: f64 = -4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DarbouxHalphenState {
    pub t: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl DarbouxHalphenState {
    pub fn product(&self) -> f64 {
        self.w1 * self.w2 * self.w3
    }

    pub fn w(&self) -> [f64; 3] {
        [self.w1, self.w2, self.w3]
    }
}

#[derive(Debug, Clone)]
pub struct DhOptions {
    pub rtol: f64,
    /// Largest step the integrator may take.
    pub max_step: f64,
    /// Amplitude of the exponentially small mode `w1 - w2 = C t^-2 exp(-1/(2t))`.
    pub amplitude: f64,
    pub overflow_guard: f64,
    /// Switch to direct variables once `|w1 - w2| > switch_ratio * |w1 + w2| / 2`.
    pub switch_ratio: f64,
}

impl Default for DhOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, max_step: 0.01, amplitude: ATIYAH_HITCHIN_AMPLITUDE, overflow_guard: 1e150, switch_ratio: 1e-3 }
    }
}

fn rational_s(t: f64) -> f64 {
    -1.0 / t
}

fn rational_w3(t: f64) -> f64 {
    0.25 / (t * t) - 1.0 / t
}

/// Perturbation vector field for `(sigma, delta, eps3)`.
fn pert_rhs(t: f64, y: &[f64; 3]) -> [f64; 3] {
    let (sig, d, e) = (y[0], y[1], y[2]);
    let sr = rational_s(t);
    let w3r = rational_w3(t);
    let w3 = w3r + e;
    let dsig = sig * (2.0 * sr + sig) - 0.25 * d * d;
    let dd = 2.0 * w3 * d;
    let de = 2.0 * (sr * e + sig * w3r + sig * e) - (2.0 * sr * sig + sig * sig) + 0.25 * d * d;
    [dsig, dd, de]
}

fn direct_rhs(_t: f64, w: &[f64; 3]) -> [f64; 3] {
    let (a, b, c) = (w[0], w[1], w[2]);
    [a * b + a * c - b * c, b * c + b * a - c * a, c * a + c * b - a * b]
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Vars {
    Perturbation,
    Direct,
}

#[derive(Debug, Clone)]
struct DhStep {
    vars: Vars,
    step: Step<3>,
}

fn to_state(vars: Vars, t: f64, y: &[f64; 3]) -> DarbouxHalphenState {
    match vars {
        Vars::Perturbation => state_from_pert(t, y),
        Vars::Direct => DarbouxHalphenState { t, w1: y[0], w2: y[1], w3: y[2] },
    }
}

impl DhStep {
    fn t0(&self) -> f64 {
        self.step.t0
    }
    fn t1(&self) -> f64 {
        self.step.t1()
    }
    fn state(&self, t: f64) -> DarbouxHalphenState {
        to_state(self.vars, t, &self.step.eval(t))
    }
    fn start(&self) -> DarbouxHalphenState {
        to_state(self.vars, self.step.t0, &self.step.y0)
    }
    fn end(&self) -> DarbouxHalphenState {
        to_state(self.vars, self.t1(), &self.step.y1)
    }
}

fn state_from_pert(t: f64, y: &[f64; 3]) -> DarbouxHalphenState {
    let s = rational_s(t) + y[0];
    DarbouxHalphenState { t, w1: s + 0.5 * y[1], w2: s - 0.5 * y[1], w3: rational_w3(t) + y[2] }
}

/// Value of the antisymmetric mode at the seed.
pub fn seed_delta(t: f64, amplitude: f64) -> f64 {
    amplitude * (-0.5 / t).exp() / (t * t)
}

/// The asymptotic seed `w1 ~ w2 ~ -1/t`, `w3 = 1/(4t^2) - 1/t`.
pub fn asymptotic_seed(t: f64, amplitude: f64) -> DarbouxHalphenState {
    state_from_pert(t, &[0.0, seed_delta(t, amplitude), 0.0])
}

/// Integrated flow with dense output.
#[derive(Debug, Clone)]
pub struct DhTrajectory {
    steps: Vec<DhStep>,
    pub amplitude: f64,
    pub rtol: f64,
}

impl DhTrajectory {
    pub fn t_start(&self) -> f64 {
        self.steps[0].t0()
    }

    /// Start of the direct-variable phase, if it was reached.
    pub fn switch_time(&self) -> Option<f64> {
        self.steps.iter().find(|s| s.vars == Vars::Direct).map(|s| s.t0())
    }

    pub fn t_end(&self) -> f64 {
        self.steps.last().map(|s| s.t1()).unwrap_or(f64::NAN)
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    /// The seed followed by the state at every accepted step.
    pub fn states(&self) -> Vec<DarbouxHalphenState> {
        let mut v = vec![self.steps[0].start()];
        v.extend(self.steps.iter().map(|s| s.end()));
        v
    }

    fn find(&self, t: f64) -> Result<&DhStep> {
        let i = self.steps.partition_point(|s| s.t1() < t);
        self.steps
            .get(i.min(self.steps.len() - 1))
            .filter(|s| t >= s.t0() && t <= s.t1())
            .ok_or(Error::Range { t, lo: self.t_start(), hi: self.t_end() })
    }

    pub fn state_at(&self, t: f64) -> Result<DarbouxHalphenState> {
        Ok(self.find(t)?.state(t))
    }

    /// Relative deviation `a^2 / (r~^2 V) - 1` at `t`, computed without cancellation.
    pub fn a2_relative_deviation(&self, t: f64) -> Result<f64> {
        let step = self.find(t)?;
        let y = step.step.eval(t);
        let st = to_state(step.vars, t, &y);
        let w3r = rational_w3(t);
        match step.vars {
            Vars::Perturbation => {
                let (d, e) = (y[1], y[2]);
                Ok(e / w3r - d / st.w1 - d * e / (st.w1 * w3r))
            }
            Vars::Direct => Ok(st.w2 * st.w3 / (st.w1 * w3r) - 1.0),
        }
    }

    /// Per-step relative residual of the three pairwise equations: the change of
    /// `w_i + w_j` across a step against the three-point Gauss integral of `2 w_i w_j`
    /// over the dense output, normalised by the integral of `|2 w_i w_j|`.
    pub fn step_residuals(&self) -> Vec<f64> {
        let (x, wq) = gauss_legendre(3);
        self.steps
            .iter()
            .map(|s| {
                let a = s.start().w();
                let b = s.end().w();
                let h = s.step.h;
                let mut integ = [0.0; 3];
                let mut abs_integ = [0.0; 3];
                for (xi, wi) in x.iter().zip(&wq) {
                    let t = s.t0() + 0.5 * h * (1.0 + xi);
                    let w = s.state(t).w();
                    for (k, (i, j)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
                        let p = 2.0 * w[i] * w[j] * 0.5 * h * wi;
                        integ[k] += p;
                        abs_integ[k] += p.abs();
                    }
                }
                let mut worst: f64 = 0.0;
                for (k, (i, j)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
                    let lhs = (b[i] + b[j]) - (a[i] + a[j]);
                    worst = worst.max((lhs - integ[k]).abs() / abs_integ[k].max(f64::MIN_POSITIVE));
                }
                worst
            })
            .collect()
    }

    fn abc_integrand(&self, step: &DhStep, t: f64) -> f64 {
        step.state(t).product().max(0.0).sqrt()
    }

    /// Integral of `|abc|` over each step with an `n`-point Gauss rule on `panels` panels.
    fn step_xi_increments(&self, n: usize, panels: usize) -> Vec<f64> {
        let (x, w) = gauss_legendre(n);
        self.steps
            .iter()
            .map(|s| {
                let hp = s.step.h / panels as f64;
                let mut acc = 0.0;
                for p in 0..panels {
                    let a = s.t0() + p as f64 * hp;
                    for (xi, wi) in x.iter().zip(&w) {
                        acc += wi * 0.5 * hp * self.abc_integrand(s, a + 0.5 * hp * (1.0 + xi));
                    }
                }
                acc
            })
            .collect()
    }

    /// Estimate of the remaining distance to the bolt beyond `t_end`, using
    /// `a ~ 2 xi`, `|bc| ~ pi^2` there, so `d xi / dt = -2 pi^2 xi`.
    pub fn bolt_tail(&self) -> f64 {
        let st = self.state_at(self.t_end()).expect("t_end is in range");
        st.product().max(0.0).sqrt() / (2.0 * std::f64::consts::PI.powi(2))
    }
}

/// Integrates the flow from the seed with the default options, `step` being the
/// largest permitted step.
pub fn integrate_darboux_halphen(t_start: f64, t_end: f64, step: f64) -> Result<Vec<DarbouxHalphenState>> {
    let opts = DhOptions { max_step: step, ..DhOptions::default() };
    Ok(integrate_with(t_start, t_end, &opts)?.states())
}

pub fn integrate_with(t_start: f64, t_end: f64, opts: &DhOptions) -> Result<DhTrajectory> {
    if !(t_start > 0.0 && t_start < t_end) {
        return Err(Error::Argument(format!("need 0 < t_start < t_end, got {t_start}, {t_end}")));
    }
    if !(opts.max_step > 0.0) {
        return Err(Error::Argument("step must be positive".into()));
    }
    let y0 = [0.0, seed_delta(t_start, opts.amplitude), 0.0];
    let mut ode_opts = OdeOptions {
        rtol: opts.rtol,
        // sigma and eps3 are measured against w itself; delta is controlled relatively.
        atol: [opts.rtol * 1e-3, 1e-300, opts.rtol * 1e-3],
        h_init: (t_start * 1e-3).min(opts.max_step),
        h_max: opts.max_step,
        h_min: t_start * 1e-14,
        max_steps: 1_000_000,
    };
    let guard = opts.overflow_guard;
    let check = |t: f64, st: &DarbouxHalphenState| -> Result<()> {
        if st.w().iter().any(|w| !w.is_finite() || w.abs() > guard) {
            Err(Error::IntegrationDomain { t, msg: format!("blow-up, w = {:?}", st.w()) })
        } else {
            Ok(())
        }
    };
    let ratio = opts.switch_ratio;
    let first = ode::integrate(pert_rhs, t_start, y0, t_end, &ode_opts, |t, y| {
        let st = state_from_pert(t, y);
        check(t, &st)?;
        Ok(y[1].abs() > ratio * (rational_s(t) + y[0]).abs())
    })?;
    let mut steps: Vec<DhStep> = first.into_iter().map(|step| DhStep { vars: Vars::Perturbation, step }).collect();
    let last = steps.last().expect("at least one step");
    let (t_sw, w_sw) = (last.t1(), last.end().w());
    if t_sw < t_end {
        ode_opts.atol = [1e-300; 3];
        ode_opts.h_init = last.step.h;
        let second = ode::integrate(direct_rhs, t_sw, w_sw, t_end, &ode_opts, |t, y| {
            check(t, &to_state(Vars::Direct, t, y))?;
            Ok(false)
        })?;
        steps.extend(second.into_iter().map(|step| DhStep { vars: Vars::Direct, step }));
    }
    Ok(DhTrajectory { steps, amplitude: opts.amplitude, rtol: opts.rtol })
}

/// Magnitudes `(|a|, |b|, |c|)` from `w1 = bc`, `w2 = ca`, `w3 = ab`.
pub fn recover_abc(s: &DarbouxHalphenState) -> Result<(f64, f64, f64)> {
    let ra = s.w2 * s.w3 / s.w1;
    let rb = s.w3 * s.w1 / s.w2;
    let rc = s.w1 * s.w2 / s.w3;
    if !(ra > 0.0 && rb > 0.0 && rc > 0.0) {
        return Err(Error::Domain(format!(
            "nonpositive radicand at t = {}: a^2 = {ra}, b^2 = {rb}, c^2 = {rc}",
            s.t
        )));
    }
    Ok((ra.sqrt(), rb.sqrt(), rc.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSample {
    pub t: f64,
    pub xi: f64,
    pub w: [f64; 3],
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub rtilde: f64,
}

/// Sampled metric coefficients; samples are ordered by increasing `t`.
#[derive(Debug, Clone)]
pub struct MetricProfile {
    pub samples: Vec<ProfileSample>,
    pub trajectory: DhTrajectory,
}

/// Where the cumulative distance is pinned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XiAnchor {
    /// `xi(t_end) = 0`.
    EndPoint,
    /// `xi(t_end)` equals the bolt-side tail estimate.
    BoltTail,
}

/// Cumulative `xi` at the seed and at every step end, `xi(t) = xi(t_end) + int_t^{t_end} |abc|`.
pub fn xi_of_t(traj: &DhTrajectory, anchor: XiAnchor) -> Vec<(f64, f64)> {
    xi_with_rule(traj, anchor, 5, 1)
}

/// Same as [`xi_of_t`] with a configurable per-step rule, used for self-checks.
pub fn xi_with_rule(traj: &DhTrajectory, anchor: XiAnchor, n: usize, panels: usize) -> Vec<(f64, f64)> {
    let inc = traj.step_xi_increments(n, panels);
    let mut xi = match anchor {
        XiAnchor::EndPoint => 0.0,
        XiAnchor::BoltTail => traj.bolt_tail(),
    };
    let mut out = vec![(traj.t_end(), xi)];
    for (s, d) in traj.steps.iter().zip(&inc).rev() {
        xi += d;
        out.push((s.t0(), xi));
    }
    out.reverse();
    out
}

/// Cumulative integral of a synthetic integrand on the same step grid; `xi(t_end) = 0`.
pub fn xi_synthetic(traj: &DhTrajectory, integrand: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(5);
    let mut xi = 0.0;
    let mut out = vec![(traj.t_end(), 0.0)];
    for s in traj.steps.iter().rev() {
        let (t0, h) = (s.t0(), s.step.h);
        xi += x.iter().zip(&w).map(|(a, b)| b * 0.5 * h * integrand(t0 + 0.5 * h * (1.0 + a))).sum::<f64>();
        out.push((t0, xi));
    }
    out.reverse();
    out
}

impl MetricProfile {
    /// Builds the profile; fails if the flow leaves the physical branch anywhere.
    pub fn from_trajectory(traj: DhTrajectory, anchor: XiAnchor) -> Result<Self> {
        let xis = xi_of_t(&traj, anchor);
        let states = traj.states();
        let mut samples = Vec::with_capacity(states.len());
        for (st, (t, xi)) in states.iter().zip(&xis) {
            debug_assert!((st.t - t).abs() <= 1e-12 * t.abs());
            let (a, b, c) = recover_abc(st)?;
            samples.push(ProfileSample { t: st.t, xi: *xi, w: st.w(), a, b, c, rtilde: 0.5 / st.t });
        }
        Ok(Self { samples, trajectory: traj })
    }

    /// Diagonal coefficients `(1, a^2, b^2, c^2)` in the coframe `(d xi, s1, s2, s3)`.
    pub fn metric_in_frame(&self, t: f64) -> Result<[f64; 4]> {
        metric_in_frame(&self.trajectory, t)
    }
}

pub fn metric_in_frame(traj: &DhTrajectory, t: f64) -> Result<[f64; 4]> {
    let st = traj.state_at(t)?;
    let (a, b, c) = recover_abc(&st)?;
    Ok([1.0, a * a, b * b, c * c])
}

/// Exponential fit of `|a^2 / (r~^2 V) - 1|` against `r~` on `[r_lo, r_hi]`.
#[derive(Debug, Clone)]
pub struct DecayFit {
    pub rtilde: Vec<f64>,
    pub deviation: Vec<f64>,
    /// Fitted decay rate `nu` in `deviation ~ exp(-nu r~)`.
    pub nu: f64,
    pub line: LineFit,
    pub monotone: bool,
    /// Slope of `log deviation` against `log r~` (power-law comparison).
    pub power_slope: f64,
}

pub fn asymptotic_decay_fit(traj: &DhTrajectory, r_lo: f64, r_hi: f64, n: usize) -> Result<DecayFit> {
    let mut rt = Vec::with_capacity(n);
    let mut dev = Vec::with_capacity(n);
    for i in 0..n {
        let r = r_lo + (r_hi - r_lo) * i as f64 / (n - 1) as f64;
        let d = traj.a2_relative_deviation(0.5 / r)?.abs();
        rt.push(r);
        dev.push(d);
    }
    if dev.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::Degenerate("deviation vanishes; seed has no exponential mode".into()));
    }
    let logd: Vec<f64> = dev.iter().map(|d| d.ln()).collect();
    let line = fit_line(&rt, &logd);
    let logr: Vec<f64> = rt.iter().map(|r| r.ln()).collect();
    let power_slope = fit_line(&logr, &logd).slope;
    let monotone = dev.windows(2).all(|w| w[1] < w[0]);
    Ok(DecayFit { rtilde: rt, deviation: dev, nu: -line.slope, line, monotone, power_slope })
}

/// C^2 profile with `h = 0` on `[0, r0]`, `h(s) = s` on `[r0 + 1, inf)`, and
/// `h(s) = s S((s - r0)/(r1 - r0))` in between, `S` the quintic smoothstep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialCutoff {
    pub r0: f64,
    pub r1: f64,
}

impl Default for RadialCutoff {
    fn default() -> Self {
        Self::new(10.0)
    }
}

pub(crate) fn smoothstep5(x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if x >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let x2 = x * x;
        let v = x2 * x * (10.0 - 15.0 * x + 6.0 * x2);
        let d = 30.0 * x2 * (1.0 - x).powi(2);
        let dd = 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x);
        (v, d, dd)
    }
}

impl RadialCutoff {
    pub fn new(r0: f64) -> Self {
        Self { r0, r1: r0 + 1.0 }
    }

    pub fn h(&self, s: f64) -> f64 {
        self.eval(s).0
    }

    /// `(h, h', h'')` at `s`.
    pub fn eval(&self, s: f64) -> (f64, f64, f64) {
        if s <= self.r0 {
            return (0.0, 0.0, 0.0);
        }
        if s >= self.r1 {
            return (s, 1.0, 0.0);
        }
        let w = self.r1 - self.r0;
        let (v, d, dd) = smoothstep5((s - self.r0) / w);
        (s * v, v + s * d / w, 2.0 * d / w + s * dd / (w * w))
    }
}
