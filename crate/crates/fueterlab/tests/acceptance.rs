//! Acceptance run: one PASS/FAIL line per criterion, each built from the same drivers
//! the CLI uses. Always exits 0 so the remaining test targets still run; the printed
//! lines are the verdict.

use std::time::Instant;

use fueterlab::runner::{parse_config, resolve, run, Check, Outcome, Subcommand};

const SPHERE_LADDER: &str = "
[geometry]
surface = \"round_sphere\"
lattice = 512

[family]
kind = \"vertical\"
log_ladder = [5.0, 10.0, 15.0, 20.0]
";

const DISC_LADDER: &str = "
[geometry]
surface = \"disc\"
radius = 1.0
lattice = 512

[family]
kind = \"horizontal\"
datum = [[0.0, 0.0], [1.0, 0.0]]
log_ladder = [5.0, 10.0, 15.0, 20.0]
";

fn outcome(sub: Subcommand, body: &str) -> Result<Outcome, String> {
    let cfg = parse_config(&format!("schema_version = 1\n{body}")).map_err(|e| e.to_string())?;
    let r = resolve(cfg, sub).map_err(|e| e.to_string())?;
    run(&r).map_err(|e| e.to_string())
}

fn pick<'a>(o: &'a Outcome, names: &[&str], tag: &str) -> Result<Vec<(String, &'a Check)>, String> {
    names
        .iter()
        .map(|n| o.check(n).map(|c| (format!("{tag}{n}"), c)).ok_or_else(|| format!("missing check {n}")))
        .collect()
}

struct Criterion {
    id: u32,
    title: &'static str,
    eval: fn() -> Result<Vec<(String, Check)>, String>,
}

fn owned(v: Vec<(String, &Check)>) -> Vec<(String, Check)> {
    v.into_iter().map(|(n, c)| (n, c.clone())).collect()
}

fn c1() -> Result<Vec<(String, Check)>, String> {
    let o = outcome(Subcommand::Metric, "[metric]\nt_start = 0.01\nt_end = 0.5\n")?;
    Ok(owned(pick(&o, &["dh_step_residual_max", "c_at_t_start_relative_error"], "")?))
}

const GH: &str = "[gh]\npoints = 100\nhessian_points = 50\nh = 1e-3\nalpha_sum_radius = 50.0\n[tolerances]\nalpha_sum = 0.05\n";

fn c2() -> Result<Vec<(String, Check)>, String> {
    let o = outcome(Subcommand::GhVerify, GH)?;
    Ok(owned(pick(
        &o,
        &["d_alpha_equals_omega_rel_err", "d_alpha_fd_order", "d_omega_rel", "quaternion_relations", "alpha_norm2_sum_over_leading"],
        "",
    )?))
}

fn c3() -> Result<Vec<(String, Check)>, String> {
    let o = outcome(Subcommand::GhVerify, GH)?;
    Ok(owned(pick(&o, &["hessian_formula_vs_fd"], "")?))
}

fn c4() -> Result<Vec<(String, Check)>, String> {
    let o = outcome(Subcommand::Variety, "[variety]\ns_min = 3\ns_max = 20\n")?;
    Ok(owned(pick(&o, &["projection_band_c", "partial_fractions_vs_rational_map", "two_pole_oracle"], "")?))
}

fn c5() -> Result<Vec<(String, Check)>, String> {
    let o = outcome(Subcommand::Converge, SPHERE_LADDER)?;
    Ok(owned(pick(&o, &["l2_fit_ratio_min", "l2_fit_ratio_max", "w12_max_over_min", "energy_loss_last"], "")?))
}

fn c6() -> Result<Vec<(String, Check)>, String> {
    let o = outcome(Subcommand::Converge, SPHERE_LADDER)?;
    Ok(owned(pick(&o, &["sup_distance_min", "grad3_growth_exponent"], "")?))
}

fn c7() -> Result<Vec<(String, Check)>, String> {
    let o = outcome(Subcommand::Energy, SPHERE_LADDER)?;
    Ok(owned(pick(&o, &["power_law_ratio_finite", "power_law_resolution_change"], "")?))
}

fn c8() -> Result<Vec<(String, Check)>, String> {
    let v = outcome(Subcommand::Energy, SPHERE_LADDER)?;
    let h = outcome(Subcommand::Energy, DISC_LADDER)?;
    let mut out = owned(pick(&v, &["almost_harmonic_slope"], "vertical.")?);
    out.extend(owned(pick(&h, &["almost_harmonic_slope"], "horizontal.")?));
    Ok(out)
}

fn c9() -> Result<Vec<(String, Check)>, String> {
    let body = SPHERE_LADDER.replace("lattice = 512", "lattice = 128")
        + "[lipschitz]\nhalf_width = 1.0\ncells = 128\nlambda_max_log2 = 10\n";
    let o = outcome(Subcommand::Lipschitz, &body)?;
    Ok(owned(pick(&o, &["bad_set_constant", "holder_max_over_min"], "")?))
}

fn c10() -> Result<Vec<(String, Check)>, String> {
    let body = format!("[grid]\nspacing = {}\n{}", 1.0 / 512.0, SPHERE_LADDER.replace("lattice = 512", "lattice = 128"));
    let o = outcome(Subcommand::Frequency, &body)?;
    Ok(owned(pick(
        &o,
        &[
            "constant_frequency_abs",
            "saddle_frequency_deviation",
            "branch_frequency_deviation",
            "derivative_identity_literal",
            "saddle_monotonicity_c",
            "branch_monotonicity_c",
            "family_frequency_max",
        ],
        "",
    )?))
}

fn c11() -> Result<Vec<(String, Check)>, String> {
    let body = format!("[grid]\nspacing = {}\n", 1.0 / 256.0);
    let o = outcome(Subcommand::Z2model, &body)?;
    Ok(owned(pick(&o, &["residual_order_finest_pair", "holder_exponent", "content_ratio_min", "content_ratio_max"], "")?))
}

fn main() {
    let criteria = [
        Criterion { id: 1, title: "metric ODE residual and asymptotic c", eval: c1 },
        Criterion { id: 2, title: "hyperkaehler data on the GH model", eval: c2 },
        Criterion { id: 3, title: "Hessian formula against FD Hessian", eval: c3 },
        Criterion { id: 4, title: "projection band and partial fractions", eval: c4 },
        Criterion { id: 5, title: "vertical family L2/W12/energy convergence", eval: c5 },
        Criterion { id: 6, title: "no C0 or W13 convergence", eval: c6 },
        Criterion { id: 7, title: "power-law energy ratio", eval: c7 },
        Criterion { id: 8, title: "almost-harmonic scaling", eval: c8 },
        Criterion { id: 9, title: "Lipschitz approximation and Holder ladder", eval: c9 },
        Criterion { id: 10, title: "frequency function", eval: c10 },
        Criterion { id: 11, title: "Z2 harmonic model suite", eval: c11 },
    ];
    let mut passed = 0;
    for c in &criteria {
        let t0 = Instant::now();
        let res = (c.eval)();
        let secs = t0.elapsed().as_secs_f64();
        match res {
            Ok(checks) => {
                let ok = checks.iter().all(|(_, k)| k.pass);
                passed += ok as usize;
                println!("criterion {:>2} {}: {} ({secs:.1}s)", c.id, if ok { "PASS" } else { "FAIL" }, c.title);
                for (name, k) in &checks {
                    println!("    {} {name} = {:.6e} (required {})", if k.pass { "ok  " } else { "FAIL" }, k.value, k.requirement);
                }
            }
            Err(e) => println!("criterion {:>2} FAIL: {} (error: {e}) ({secs:.1}s)", c.id, c.title),
        }
    }
    println!("acceptance: {passed}/{} criteria passed", criteria.len());
}
