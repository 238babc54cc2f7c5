use std::f64::consts::PI;

use fueterlab::diagnostics::{frequency, frequency_derivative_identity, QuadraticMass};
use fueterlab::z2_harmonic::{harmonic_residual, region_from, Z2HarmonicModel};

/// Cut-off profile written out independently: 1 on [0, 3/4], quintic smoothstep down to 0 at 1.
fn profile(t: f64) -> f64 {
    let x = ((t - 0.75) / 0.25).clamp(0.0, 1.0);
    1.0 - x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn quadratic_mass_matches_radial_oracle() {
    let r: f64 = 0.25;
    let j = simpson(|t| t * t * profile(t), 0.0, 1.0, 4000);
    // with f = |x|^2 the weighted mass scales like r^4 and the Laplacian term like r^3
    let h_exact = 12.0 * PI * r.powi(4) * j;
    let lap_exact = 24.0 * PI * r.powi(3) * j;
    let id = frequency_derivative_identity(&QuadraticMass, [0.0; 3], r, 1.0 / 256.0).unwrap();
    assert!((id.h_value - h_exact).abs() < 2e-3 * h_exact, "{} vs {h_exact}", id.h_value);
    assert!((id.laplacian_form - lap_exact).abs() < 2e-3 * lap_exact);
    assert!((id.dh_dr - 4.0 * h_exact / r).abs() < 2e-3 * 4.0 * h_exact / r);
    assert!((id.flux_form - lap_exact).abs() < 2e-3 * lap_exact);
    assert!(id.corrected_residual < 2e-3);
    assert!((id.literal_residual - 1.0).abs() < 1e-2);
}

#[test]
fn homogeneous_models_have_their_degree_as_frequency() {
    let h = 1.0 / 128.0;
    for (m, want) in [(Z2HarmonicModel::saddle(2.0), 1.0), (Z2HarmonicModel::branch(0.5), 0.5)] {
        for cells in [16.0, 32.0] {
            let t = frequency(&m, [0.0; 3], cells * h, h).unwrap();
            assert!((t.i - want).abs() < 0.05, "{:?} r = {}: {}", m.kind, t.r, t.i);
        }
    }
}

#[test]
fn branch_form_residual_decays_with_the_spacing() {
    let res = |h: f64| {
        let n = (1.0 / h) as usize;
        let f = Z2HarmonicModel::branch(1.0).sample([2 * n, 2 * n, 4], h, [-1.0, -1.0, 0.0]);
        let reg = region_from(&f, |x| x[0] >= 0.25);
        let r = harmonic_residual(&f, &reg).unwrap();
        r.d_residual.max(r.dstar_residual)
    };
    let (a, b) = (res(1.0 / 32.0), res(1.0 / 64.0));
    assert!(a / b > 3.0, "ratio {}", a / b);
}
