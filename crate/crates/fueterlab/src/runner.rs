//! Configuration schema, experiment drivers and artifact writing behind the CLI.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::Vector4;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::ah_geometry::{integrate_with, recover_abc, DhOptions, MetricProfile, RadialCutoff, XiAnchor};
use crate::diagnostics::{self as diag, FamilyEnergy, QuadraticMass, SurfacePoint};
use crate::error::{Error, Result};
use crate::fueter_families::{
    projection_field, sup_norm, ChartId, EnergyModel, FamilyKind, FueterFamily, ProductGeometry, Surface,
    FAMILY_CUTOFF_R0,
};
use crate::gibbons_hawking::{
    fd_exterior_derivative, fd_exterior_derivative_2form, fd_hessian, hessian_radial, star_d_theta_defect, Chart,
    GHPoint, GhModel, RadialFunction,
};
use crate::multivalued::write_grid;
use crate::plot::Plot;
use crate::rational_maps::{
    moduli_dimension, project_pi, to_quotient, u1_act, u1_act_quotient, Cover, MonopoleRep, PartialFractions,
};
use crate::z2_harmonic::{
    default_eps, harmonic_residual, holder_exponent_fit, region_from, zero_locus, Z2HarmonicModel,
};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const REPORT_SCHEMA: &str = "fueterlab.report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Metric,
    GhVerify,
    Variety,
    Family,
    Lipschitz,
    Z2model,
    Energy,
    Frequency,
    Converge,
}

impl Subcommand {
    pub fn id(&self) -> &'static str {
        match self {
            Subcommand::Metric => "metric",
            Subcommand::GhVerify => "gh-verify",
            Subcommand::Variety => "variety",
            Subcommand::Family => "family",
            Subcommand::Lipschitz => "lipschitz",
            Subcommand::Z2model => "z2model",
            Subcommand::Energy => "energy",
            Subcommand::Frequency => "frequency",
            Subcommand::Converge => "converge",
        }
    }

    fn needs_family(&self) -> bool {
        matches!(self, Subcommand::Family | Subcommand::Lipschitz | Subcommand::Energy | Subcommand::Converge)
    }

    fn needs_grid(&self) -> bool {
        matches!(self, Subcommand::Z2model | Subcommand::Frequency)
    }
}

// ---------------------------------------------------------------------- schema

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    RoundSphere,
    Disc,
    FlatTorus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub surface: Option<SurfaceKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub periods: Option<[f64; 2]>,
    /// Cells per side and chart of the base lattice.
    pub lattice: Option<usize>,
    pub gauss: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub kind: Option<FamilyKind>,
    /// Datum coefficients `[re, im]` in ascending degree; omitted means the reference datum.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub datum: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ladder: Option<Vec<f64>>,
    /// Natural logarithms of the scales; alternative to `ladder`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_ladder: Option<Vec<f64>>,
    pub cutoff_r0: Option<f64>,
    pub c_psi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub spacing: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub dh_residual: f64,
    pub c_asymptotic: f64,
    pub gh_relative: f64,
    pub fd_order: f64,
    pub quaternion: f64,
    /// Relative band for the quadratic growth of the squared moment-map norms; unchecked when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_sum: Option<f64>,
    pub hessian: f64,
    pub projection_band: f64,
    pub partial_fraction: f64,
    pub sup_band: f64,
    pub l2_fit_factor: f64,
    pub w12_ratio: f64,
    pub energy_loss: f64,
    pub sup_distance_min: f64,
    pub growth_exponent: f64,
    pub growth_tolerance: f64,
    pub power_law_stability: f64,
    pub almost_harmonic_slope: f64,
    pub lipschitz_constant_max: f64,
    pub holder_ratio: f64,
    pub frequency_limit: f64,
    pub frequency_c_max: f64,
    pub family_frequency_max: f64,
    pub identity: f64,
    pub residual_order: f64,
    pub holder_exponent: f64,
    pub holder_tolerance: f64,
    pub content_factor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            dh_residual: 1e-8,
            c_asymptotic: 0.01,
            gh_relative: 1e-5,
            fd_order: 1.9,
            quaternion: 1e-8,
            alpha_sum: None,
            hessian: 1e-4,
            projection_band: 1.0,
            partial_fraction: 1e-10,
            sup_band: 1.0,
            l2_fit_factor: 2.0,
            w12_ratio: 1.5,
            energy_loss: 0.10,
            sup_distance_min: 0.9,
            growth_exponent: 1.0,
            growth_tolerance: 0.15,
            power_law_stability: 0.2,
            almost_harmonic_slope: 1.35,
            lipschitz_constant_max: 10.0,
            holder_ratio: 2.0,
            frequency_limit: 0.05,
            frequency_c_max: 1.0,
            family_frequency_max: 5.0,
            identity: 0.01,
            residual_order: 1.9,
            holder_exponent: 0.5,
            holder_tolerance: 0.05,
            content_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricParams {
    pub t_start: f64,
    pub t_end: f64,
    pub rtol: f64,
    pub max_step: f64,
    pub amplitude: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        let d = DhOptions::default();
        Self { t_start: 0.01, t_end: 0.5, rtol: d.rtol, max_step: d.max_step, amplitude: d.amplitude }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GhParams {
    pub k: i32,
    pub points: usize,
    pub hessian_points: usize,
    pub seed: u64,
    pub r_min: f64,
    pub r_max: f64,
    pub h: f64,
    /// Lower edge of the regime where the radial Hessian formula is used.
    pub hessian_regime: f64,
    pub capped_scale: f64,
    pub alpha_sum_radius: f64,
}

impl Default for GhParams {
    fn default() -> Self {
        Self {
            k: -4,
            points: 100,
            hessian_points: 50,
            seed: 1,
            r_min: 5.0,
            r_max: 50.0,
            h: 1e-3,
            hessian_regime: 11.0,
            capped_scale: 2000.0,
            alpha_sum_radius: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VarietyParams {
    pub s_min: u32,
    pub s_max: u32,
    pub cutoff_r0: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for VarietyParams {
    fn default() -> Self {
        Self { s_min: 3, s_max: 20, cutoff_r0: FAMILY_CUTOFF_R0, samples: 200, seed: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LipschitzParams {
    /// Family scale of the Lipschitz scan (default: the last ladder entry).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    pub half_width: f64,
    pub cells: usize,
    pub lambda_max_log2: u32,
    pub gamma: f64,
    pub q: f64,
}

impl Default for LipschitzParams {
    fn default() -> Self {
        Self { scale: None, half_width: 1.0, cells: 128, lambda_max_log2: 10, gamma: 0.5, q: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Z2ModelParams {
    /// Spacing multipliers for the residual ladder; the finest is `grid.spacing`.
    pub ladder: Vec<f64>,
    pub fixed_region_x1: f64,
    pub holder_k_min: u32,
    pub holder_k_max: u32,
    pub content_spacing: f64,
    pub content_radii_cells: Vec<f64>,
}

impl Default for Z2ModelParams {
    fn default() -> Self {
        Self {
            ladder: vec![4.0, 2.0, 1.0],
            fixed_region_x1: 0.25,
            holder_k_min: 3,
            holder_k_max: 7,
            content_spacing: 1.0 / 64.0,
            content_radii_cells: vec![4.0, 8.0, 16.0, 32.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyParams {
    pub p: f64,
    pub thresholds: usize,
    /// Second lattice for the resolution check (default: half the main lattice).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution_lattice: Option<usize>,
    pub ball_centre: [f64; 2],
    pub ball_radii: Vec<f64>,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            p: diag::DEFAULT_P,
            thresholds: 8,
            resolution_lattice: None,
            ball_centre: [0.0, 0.0],
            ball_radii: vec![0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityForm {
    /// `dH/dr = int Delta f phi`.
    Literal,
    /// `dH/dr = (2/r) H + int Delta f phi`.
    Corrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrequencyParams {
    pub radii_cells: Vec<f64>,
    pub identity_radius: f64,
    pub identity_spacing: f64,
    pub identity: IdentityForm,
    pub family_centre: [f64; 2],
    pub family_radii: Vec<f64>,
    pub family_energy: FamilyEnergy,
    pub p: f64,
}

impl Default for FrequencyParams {
    fn default() -> Self {
        Self {
            radii_cells: vec![16.0, 24.0, 32.0, 48.0, 64.0],
            identity_radius: 0.25,
            identity_spacing: 1.0 / 256.0,
            identity: IdentityForm::Literal,
            family_centre: [-0.5, 0.0],
            family_radii: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            family_energy: FamilyEnergy::Full,
            p: diag::DEFAULT_P,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcommand: Option<Subcommand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometrySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub metric: MetricParams,
    #[serde(default)]
    pub gh: GhParams,
    #[serde(default)]
    pub variety: VarietyParams,
    #[serde(default)]
    pub lipschitz: LipschitzParams,
    #[serde(default)]
    pub z2model: Z2ModelParams,
    #[serde(default)]
    pub energy: EnergyParams,
    #[serde(default)]
    pub frequency: FrequencyParams,
}

impl ExperimentConfig {
    pub fn new() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            subcommand: None,
            geometry: None,
            family: None,
            grid: None,
            tolerances: Tolerances::default(),
            output: OutputSpec::default(),
            metric: MetricParams::default(),
            gh: GhParams::default(),
            variety: VarietyParams::default(),
            lipschitz: LipschitzParams::default(),
            z2model: Z2ModelParams::default(),
            energy: EnergyParams::default(),
            frequency: FrequencyParams::default(),
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::new()
    }
}

/// Configuration rejected by the schema; `path` is the dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl SchemaError {
    fn new(path: &str, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "schema error at `{}`: {}", self.path, self.message)
    }
}

impl std::error::Error for SchemaError {}

pub fn parse_config(text: &str) -> std::result::Result<ExperimentConfig, SchemaError> {
    let value: toml::Value = toml::from_str(text).map_err(|e| SchemaError::new("<document>", e.to_string().trim()))?;
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        SchemaError::new(if path == "." { "<root>" } else { &path }, e.into_inner().to_string())
    })?;
    if cfg.schema_version != CONFIG_SCHEMA_VERSION {
        return Err(SchemaError::new(
            "schema_version",
            format!("unsupported version {}, expected {CONFIG_SCHEMA_VERSION}", cfg.schema_version),
        ));
    }
    Ok(cfg)
}

/// Fully resolved inputs of one run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub subcommand: Subcommand,
    pub config: ExperimentConfig,
    pub geometry: Option<ProductGeometry>,
    pub family: Option<FueterFamily>,
    pub scales: Vec<f64>,
    pub energy_model: EnergyModel,
    pub spacing: Option<f64>,
}

fn positive(path: &str, v: f64) -> std::result::Result<f64, SchemaError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(SchemaError::new(path, format!("must be a positive number, got {v}")))
    }
}

/// Checks the fields a subcommand needs and fills defaults into the config.
pub fn resolve(mut cfg: ExperimentConfig, sub: Subcommand) -> std::result::Result<Resolved, SchemaError> {
    if let Some(s) = cfg.subcommand {
        if s != sub {
            return Err(SchemaError::new("subcommand", format!("config is for `{}`, invoked as `{}`", s.id(), sub.id())));
        }
    }
    cfg.subcommand = Some(sub);
    let freq_family = sub == Subcommand::Frequency && cfg.family.is_some();
    let mut geometry = None;
    let mut family = None;
    let mut scales = Vec::new();
    let mut energy_model = EnergyModel::default();
    if sub.needs_family() || freq_family {
        let g = cfg.geometry.as_mut().ok_or_else(|| SchemaError::new("geometry", "missing table"))?;
        let kind = g.surface.ok_or_else(|| SchemaError::new("geometry.surface", "missing field"))?;
        let lattice = g.lattice.ok_or_else(|| SchemaError::new("geometry.lattice", "missing field"))?;
        if lattice < 8 {
            return Err(SchemaError::new("geometry.lattice", format!("must be at least 8, got {lattice}")));
        }
        let gauss = *g.gauss.get_or_insert(2);
        if !(1..=8).contains(&gauss) {
            return Err(SchemaError::new("geometry.gauss", format!("must be in 1..=8, got {gauss}")));
        }
        let mut geom = match kind {
            SurfaceKind::RoundSphere => ProductGeometry::sphere(lattice),
            SurfaceKind::Disc => ProductGeometry::disc(positive("geometry.radius", *g.radius.get_or_insert(1.0))?, lattice),
            SurfaceKind::FlatTorus => {
                let p = *g.periods.get_or_insert([1.0, 1.0]);
                positive("geometry.periods[0]", p[0])?;
                positive("geometry.periods[1]", p[1])?;
                ProductGeometry::torus(p, lattice)
            }
        };
        geom.gauss = gauss;
        let f = cfg.family.as_mut().ok_or_else(|| SchemaError::new("family", "missing table"))?;
        let fk = f.kind.ok_or_else(|| SchemaError::new("family.kind", "missing field"))?;
        scales = match (&f.ladder, &f.log_ladder) {
            (Some(_), Some(_)) => {
                return Err(SchemaError::new("family.log_ladder", "give either `ladder` or `log_ladder`, not both"))
            }
            (Some(l), None) => l.clone(),
            (None, Some(l)) => l.iter().map(|x| x.exp()).collect(),
            (None, None) => return Err(SchemaError::new("family.ladder", "missing field (or `log_ladder`)")),
        };
        if scales.is_empty() {
            return Err(SchemaError::new("family.ladder", "must not be empty"));
        }
        for (i, s) in scales.iter().enumerate() {
            if !(s.is_finite() && *s >= 1.0) {
                return Err(SchemaError::new(&format!("family.ladder[{i}]"), format!("scale must be finite and >= 1, got {s}")));
            }
        }
        let r0 = *f.cutoff_r0.get_or_insert(FAMILY_CUTOFF_R0);
        energy_model.c_psi = positive("family.c_psi", *f.c_psi.get_or_insert(2.0))?;
        let mut fam = match (fk, &f.datum) {
            (_, Some(d)) => {
                let datum: Vec<C64> = d.iter().map(|c| C64::new(c[0], c[1])).collect();
                match fk {
                    FamilyKind::Vertical => FueterFamily::vertical(datum, scales[0]),
                    FamilyKind::Horizontal => FueterFamily::horizontal(datum, scales[0]),
                }
            }
            (FamilyKind::Vertical, None) if geom.surface == Surface::RoundSphere => FueterFamily::sphere_reference(scales[0]),
            (FamilyKind::Vertical, None) => FueterFamily::vertical(vec![C64::new(1.0, 0.0)], scales[0]),
            (FamilyKind::Horizontal, None) => {
                FueterFamily::horizontal(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)], scales[0])
            }
        };
        if f.datum.is_none() {
            f.datum = Some(fam.datum.iter().map(|c| [c.re, c.im]).collect());
        }
        fam.cutoff = RadialCutoff::new(r0);
        fam.validate(&geom).map_err(|e| SchemaError::new("family", e.to_string()))?;
        geometry = Some(geom);
        family = Some(fam);
    }
    let mut spacing = None;
    if sub.needs_grid() {
        let g = cfg.grid.as_ref().ok_or_else(|| SchemaError::new("grid", "missing table"))?;
        let h = g.spacing.ok_or_else(|| SchemaError::new("grid.spacing", "missing field"))?;
        let h = positive("grid.spacing", h)?;
        if h > 0.125 {
            return Err(SchemaError::new("grid.spacing", format!("must be at most 1/8, got {h}")));
        }
        spacing = Some(h);
    }
    if sub == Subcommand::Energy {
        if let Some(l) = cfg.energy.resolution_lattice {
            if l < 8 {
                return Err(SchemaError::new("energy.resolution_lattice", format!("must be at least 8, got {l}")));
            }
        }
    }
    Ok(Resolved { subcommand: sub, config: cfg, geometry, family, scales, energy_model, spacing })
}

// --------------------------------------------------------------------- reports

/// One assertion of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub requirement: String,
    pub pass: bool,
}

impl Check {
    pub fn le(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, requirement: format!("<= {bound}"), pass: value <= bound }
    }

    pub fn ge(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, requirement: format!(">= {bound}"), pass: value >= bound }
    }

    pub fn within(name: &str, value: f64, target: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value,
            requirement: format!("in [{}, {}]", target - tol, target + tol),
            pass: (value - target).abs() <= tol,
        }
    }

    pub fn range(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), value, requirement: format!("in [{lo}, {hi}]"), pass: value >= lo && value <= hi }
    }

    pub fn flag(name: &str, ok: bool) -> Self {
        Self { name: name.into(), value: if ok { 1.0 } else { 0.0 }, requirement: "true".into(), pass: ok }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> std::result::Result<Vec<u8>, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| v.to_string()))?;
        }
        w.into_inner().map_err(|e| e.into_error().into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub subcommand: Subcommand,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    pub summary: BTreeMap<String, Value>,
    #[serde(skip)]
    pub plots: Vec<Plot>,
    #[serde(skip)]
    pub blobs: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    fn new(sub: Subcommand) -> Self {
        Self { subcommand: sub, checks: Vec::new(), tables: Vec::new(), summary: BTreeMap::new(), plots: Vec::new(), blobs: Vec::new() }
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    fn note(&mut self, key: &str, v: impl Serialize) {
        self.summary.insert(key.into(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    pub fn report_json(&self) -> Value {
        json!({
            "schema": REPORT_SCHEMA,
            "subcommand": self.subcommand.id(),
            "pass": self.pass(),
            "checks": self.checks,
            "failures": self.failures().iter().map(|c| &c.name).collect::<Vec<_>>(),
            "summary": self.summary,
            "tables": self.tables.iter().map(|t| json!({"name": t.name, "file": format!("{}.csv", t.name), "rows": t.rows.len(), "header": t.header})).collect::<Vec<_>>(),
        })
    }
}

pub fn run(r: &Resolved) -> Result<Outcome> {
    match r.subcommand {
        Subcommand::Metric => run_metric(r),
        Subcommand::GhVerify => run_gh_verify(r),
        Subcommand::Variety => run_variety(r),
        Subcommand::Family => run_family(r),
        Subcommand::Lipschitz => run_lipschitz(r),
        Subcommand::Z2model => run_z2model(r),
        Subcommand::Energy => run_energy(r),
        Subcommand::Frequency => run_frequency(r),
        Subcommand::Converge => run_converge(r),
    }
}

/// Writes the report, tables, resolved config, binary fields and (optionally) plots.
pub fn write_artifacts(out: &Outcome, r: &Resolved, dir: &Path, plots: bool) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, bytes: &[u8]| -> std::io::Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, bytes)?;
        written.push(p);
        Ok(())
    };
    let cfg = toml::to_string(&r.config).map_err(std::io::Error::other)?;
    put("resolved_config.toml".into(), cfg.as_bytes())?;
    let mut rep = serde_json::to_string_pretty(&out.report_json()).map_err(std::io::Error::other)?;
    rep.push('\n');
    put("report.json".into(), rep.as_bytes())?;
    for t in &out.tables {
        put(format!("{}.csv", t.name), &t.to_csv().map_err(std::io::Error::other)?)?;
    }
    for (name, b) in &out.blobs {
        put(name.clone(), b)?;
    }
    if plots {
        for p in &out.plots {
            put(format!("{}.svg", p.name), p.to_svg().as_bytes())?;
        }
    }
    Ok(written)
}

fn geometry(r: &Resolved) -> Result<(&ProductGeometry, &FueterFamily)> {
    match (&r.geometry, &r.family) {
        (Some(g), Some(f)) => Ok((g, f)),
        _ => Err(Error::Argument("run needs a geometry and a family".into())),
    }
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------------- metric

fn run_metric(r: &Resolved) -> Result<Outcome> {
    let p = &r.config.metric;
    let tol = &r.config.tolerances;
    let opts = DhOptions { rtol: p.rtol, max_step: p.max_step, amplitude: p.amplitude, ..DhOptions::default() };
    let traj = integrate_with(p.t_start, p.t_end, &opts)?;
    let mut out = Outcome::new(r.subcommand);
    let worst = max_of(traj.step_residuals());
    out.checks.push(Check::le("dh_step_residual_max", worst, tol.dh_residual));
    let st = traj.state_at(p.t_start)?;
    let (_, _, c) = recover_abc(&st)?;
    let rt = 0.5 / p.t_start;
    let v = GhModel::new(-4).potential(&[0.0, 0.0, rt]);
    let oracle = 2.0 / v.sqrt();
    out.checks.push(Check::le("c_at_t_start_relative_error", (c - oracle).abs() / oracle, tol.c_asymptotic));
    out.note("steps", traj.n_steps());
    out.note("switch_time", traj.switch_time());
    out.note("bolt_tail_xi", traj.bolt_tail());
    out.note("c_oracle", oracle);
    let profile = MetricProfile::from_trajectory(traj, XiAnchor::BoltTail)?;
    let mut t = Table::new("metric_profile", &["t", "xi", "w1", "w2", "w3", "a", "b", "c", "rtilde"]);
    for s in &profile.samples {
        t.push(vec![s.t, s.xi, s.w[0], s.w[1], s.w[2], s.a, s.b, s.c, s.rtilde]);
    }
    let col = |k: usize| profile.samples.iter().map(|s| (s.xi, [s.a, s.b, s.c][k])).collect::<Vec<_>>();
    out.plots.push(
        Plot::new("metric_profile", "Coefficients along the flow", "xi", "coefficient", false, true)
            .with_series("a", col(0))
            .with_series("b", col(1))
            .with_series("c", col(2)),
    );
    out.tables.push(t);
    Ok(out)
}

// ------------------------------------------------------------------- gh-verify

fn random_point(rng: &mut ChaCha8Rng, r_min: f64, r_max: f64) -> ([f64; 3], f64) {
    let r = rng.gen_range(r_min..r_max);
    let z: f64 = rng.gen_range(-1.0..1.0);
    let ph: f64 = rng.gen_range(0.0..TAU);
    let s = (1.0 - z * z).sqrt();
    ([r * s * ph.cos(), r * s * ph.sin(), r * z], rng.gen_range(0.0..TAU))
}

fn run_gh_verify(r: &Resolved) -> Result<Outcome> {
    let p = &r.config.gh;
    let tol = &r.config.tolerances;
    let model = GhModel::new(p.k);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut out = Outcome::new(r.subcommand);
    let mut t = Table::new(
        "gh_points",
        &["index", "u1", "u2", "u3", "psi", "d_alpha_rel_err", "d_alpha_rel_err_2h", "d_omega_rel", "quaternion_defect", "star_dtheta_defect"],
    );
    let (mut e1, mut e2) = (0.0, 0.0);
    let (mut worst_alpha, mut worst_omega, mut worst_q, mut worst_theta): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for idx in 0..p.points {
        let (u, psi) = random_point(&mut rng, p.r_min, p.r_max);
        let chart = if u[2] >= 0.0 { Chart::North } else { Chart::South };
        let pt = GHPoint::with_chart(u, psi, chart);
        let data = model.data_at(&pt)?;
        let x = [u[0], u[1], u[2], psi];
        let (mut ra, mut ra2, mut ro): (f64, f64, f64) = (0.0, 0.0, 0.0);
        for i in 0..3 {
            let alpha = |y: [f64; 4]| -> Result<Vector4<f64>> {
                Ok(model.data_at(&GHPoint::with_chart([y[0], y[1], y[2]], y[3], chart))?.alpha_coords(i))
            };
            let exact = data.omega_coords(i);
            let scale = exact.amax();
            let a1 = (fd_exterior_derivative(alpha, x, p.h)? - exact).amax();
            let a2 = (fd_exterior_derivative(alpha, x, 2.0 * p.h)? - exact).amax();
            e1 += a1;
            e2 += a2;
            ra = ra.max(a1 / scale);
            ra2 = ra2.max(a2 / scale);
            let omega = |y: [f64; 4]| -> Result<nalgebra::Matrix4<f64>> {
                Ok(model.data_at(&GHPoint::with_chart([y[0], y[1], y[2]], y[3], chart))?.omega_coords(i))
            };
            let (d, sc) = fd_exterior_derivative_2form(omega, x, p.h)?;
            ro = ro.max(d.iter().fold(0.0f64, |m, v| m.max(v.abs())) / sc);
        }
        let q = data.quaternion_defect();
        let th = star_d_theta_defect(&model, &pt, p.h)?;
        worst_alpha = worst_alpha.max(ra);
        worst_omega = worst_omega.max(ro);
        worst_q = worst_q.max(q);
        worst_theta = worst_theta.max(th);
        t.push(vec![idx as f64, u[0], u[1], u[2], psi, ra, ra2, ro, q, th]);
    }
    out.checks.push(Check::le("d_alpha_equals_omega_rel_err", worst_alpha, tol.gh_relative));
    out.checks.push(Check::ge("d_alpha_fd_order", (e2 / e1).log2(), tol.fd_order));
    out.checks.push(Check::le("d_omega_rel", worst_omega, tol.gh_relative));
    out.checks.push(Check::le("quaternion_relations", worst_q, tol.quaternion));
    out.checks.push(Check::le("star_dtheta_plus_dv", worst_theta, tol.gh_relative));
    out.tables.push(t);

    let mut th = Table::new("hessian_points", &["index", "u1", "u2", "u3", "err_quadratic", "err_capped", "asymmetry"]);
    let mut worst_h: f64 = 0.0;
    let lo = p.hessian_regime + 1.0;
    for idx in 0..p.hessian_points {
        let (u, psi) = random_point(&mut rng, lo, p.r_max.max(lo + 1.0));
        let pt = GHPoint::new(u, psi);
        let mut errs = [0.0; 2];
        let mut asym: f64 = 0.0;
        for (k, f) in [RadialFunction::Quadratic, RadialFunction::SmoothCapped { cap: p.capped_scale }].iter().enumerate() {
            let a = hessian_radial(&model, f, &pt, p.hessian_regime)?;
            let b = fd_hessian(&model, f, &pt, p.h)?;
            errs[k] = (a.frame - b.frame).amax();
            asym = asym.max(b.asymmetry());
        }
        worst_h = worst_h.max(errs[0]).max(errs[1]);
        th.push(vec![idx as f64, u[0], u[1], u[2], errs[0], errs[1], asym]);
    }
    out.checks.push(Check::le("hessian_formula_vs_fd", worst_h, tol.hessian));
    out.tables.push(th);

    let ra = p.alpha_sum_radius;
    let d = model.data_at(&GHPoint::new([0.0, 0.0, ra], 0.0))?;
    let ratio = d.alpha_norm2_sum() / (1.5 * ra * ra);
    out.note("alpha_norm2_sum", d.alpha_norm2_sum());
    out.note("alpha_norm2_sum_over_leading", ratio);
    if let Some(band) = tol.alpha_sum {
        out.checks.push(Check::within("alpha_norm2_sum_over_leading", ratio, 1.0, band));
    }
    let mut ta = Table::new("alpha_sum", &["rtilde", "alpha_norm2_sum", "ratio_to_leading"]);
    for k in 0..=8 {
        let rr = 10.0 * 2f64.powf(k as f64 / 2.0);
        let dd = model.data_at(&GHPoint::new([0.0, 0.0, rr], 0.0))?;
        ta.push(vec![rr, dd.alpha_norm2_sum(), dd.alpha_norm2_sum() / (1.5 * rr * rr)]);
    }
    out.plots.push(
        Plot::new("alpha_sum", "Squared moment-map norms over the leading term", "rtilde", "ratio", true, false)
            .with_series("ratio", ta.rows.iter().map(|r| (r[0], r[2])).collect()),
    );
    out.tables.push(ta);
    Ok(out)
}

// --------------------------------------------------------------------- variety

fn random_c(rng: &mut ChaCha8Rng, r: f64) -> C64 {
    C64::new(rng.gen_range(-r..r), rng.gen_range(-r..r))
}

fn run_variety(r: &Resolved) -> Result<Outcome> {
    let p = &r.config.variety;
    let tol = &r.config.tolerances;
    let mut out = Outcome::new(r.subcommand);
    let cut = RadialCutoff::new(p.cutoff_r0);
    let default_cut = RadialCutoff::default();
    let mut t = Table::new("projection_band", &["s", "third_component", "deviation", "deviation_default_cutoff"]);
    for s in p.s_min..=p.s_max {
        let s = s as f64;
        let m = MonopoleRep::real(1.0, s.exp(), 0.0);
        let x = project_pi(&m, &cut);
        let xd = project_pi(&m, &default_cut);
        t.push(vec![s, x.x[2].abs(), (x.x[2].abs() - s).abs(), (xd.x[2].abs() - s).abs()]);
    }
    let band = max_of(t.column("deviation").unwrap_or_default());
    out.checks.push(Check::le("projection_band_c", band, tol.projection_band));
    out.note("projection_band_c_default_cutoff", max_of(t.column("deviation_default_cutoff").unwrap_or_default()));
    out.tables.push(t);

    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let (mut pf_err, mut slice_err, mut quot_err, mut act_err): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..p.samples {
        let a1 = random_c(&mut rng, 3.0);
        let b0 = random_c(&mut rng, 10.0);
        let a0 = (1.0 - b0 * a1 * a1).sqrt();
        let m = MonopoleRep::new(a0, a1, b0);
        slice_err = slice_err.max(m.slice_residual());
        if let Some(pf) = PartialFractions::of(&m) {
            for _ in 0..4 {
                let zeta = random_c(&mut rng, 5.0);
                if (zeta - pf.beta).norm() < 0.1 || (zeta + pf.beta).norm() < 0.1 {
                    continue;
                }
                let exact = m.eval(zeta);
                pf_err = pf_err.max((pf.eval(zeta) - exact).norm() / exact.norm().max(1e-300));
            }
        }
        let lam = C64::from_polar(1.0, rng.gen_range(0.0..TAU));
        let acted = u1_act(lam, &m)?;
        slice_err = slice_err.max(acted.slice_residual());
        let q = to_quotient(&m)?;
        let (r1, r2) = q.residuals();
        quot_err = quot_err.max(r1 / (1.0 + q.z2.norm_sqr())).max(r2 / (1.0 + (q.z3 * q.z4).norm()));
        let qa = to_quotient(&acted)?;
        let qb = u1_act_quotient(lam, &q);
        let d = [(qa.z1 - qb.z1), (qa.z2 - qb.z2), (qa.z3 - qb.z3), (qa.z4 - qb.z4)];
        let sc = 1.0 + q.z1.norm() + q.z2.norm() + q.z3.norm() + q.z4.norm();
        act_err = act_err.max(d.iter().map(|x| x.norm()).fold(0.0, f64::max) / sc);
    }
    // exact two-pole oracle: 1 / (zeta^2 + R^2) has its poles at +-iR
    let rr = 4f64.exp();
    let m = MonopoleRep::real(1.0, 0.0, rr * rr);
    let pf = PartialFractions::of(&m).ok_or_else(|| Error::Degenerate("two-pole oracle".into()))?;
    let k = 1.0 / C64::new(0.0, 2.0 * rr);
    let oracle = ((pf.beta - C64::new(0.0, rr)).norm() / rr)
        .max((pf.a_plus - k).norm() / k.norm())
        .max((pf.a_minus + k).norm() / k.norm())
        .max((project_pi(&m, &default_cut).norm() - rr).abs() / rr);
    out.checks.push(Check::le("partial_fractions_vs_rational_map", pf_err, tol.partial_fraction));
    out.checks.push(Check::le("two_pole_oracle", oracle, tol.partial_fraction));
    out.checks.push(Check::le("slice_preserved", slice_err, crate::rational_maps::SLICE_TOL));
    out.checks.push(Check::le("quotient_relations", quot_err, 1e-12));
    out.checks.push(Check::le("u1_action_equivariance", act_err, 1e-12));
    let mut tm = Table::new("moduli_dimensions", &["genus", "cover_double", "real_dimension", "components"]);
    for g in 0..=4 {
        for (ci, c) in [Cover::AH, Cover::Double].into_iter().enumerate() {
            let d = moduli_dimension(g, c);
            tm.push(vec![g as f64, ci as f64, d.real_dimension as f64, d.components as f64]);
        }
    }
    out.tables.push(tm);
    Ok(out)
}

// ---------------------------------------------------------------------- family

fn run_family(r: &Resolved) -> Result<Outcome> {
    let (geom, fam) = geometry(r)?;
    let tol = &r.config.tolerances;
    let mut out = Outcome::new(r.subcommand);
    if geom.surface == Surface::RoundSphere {
        out.checks.push(Check::le("sphere_area_error", (geom.area() - 4.0 * PI).abs(), 1e-6));
    }
    let mut t = Table::new("family_norms", &["scale", "log_scale", "sup_norm", "sup_minus_log_scale"]);
    for &sc in &r.scales {
        let f = fam.with_scale(sc);
        let n = sup_norm(&f, geom)?;
        t.push(vec![sc, sc.ln(), n, n - sc.ln()]);
    }
    if fam.kind == FamilyKind::Vertical {
        let worst = max_of(t.column("sup_minus_log_scale").unwrap_or_default().into_iter().map(f64::abs));
        out.checks.push(Check::le("sup_norm_log_band", worst, tol.sup_band));
    }
    out.tables.push(t);
    let last = fam.with_scale(*r.scales.last().expect("nonempty ladder"));
    let field = projection_field(&last, geom)?;
    let mut tf = Table::new("family_field", &["chart", "x", "y", "v1", "v2", "v3", "magnitude", "weight"]);
    for (ci, c) in field.charts.iter().enumerate() {
        for j in 0..c.n {
            for i in 0..c.n {
                let idx = j * c.n + i;
                let z = c.centre(i, j);
                let v = c.values[idx];
                tf.push(vec![ci as f64, z.re, z.im, v[0], v[1], v[2], crate::gibbons_hawking::norm3(&v), c.weight[idx]]);
            }
        }
    }
    out.tables.push(tf);
    let chart = if geom.surface == Surface::RoundSphere { ChartId::North } else { field.charts[0].domain.id };
    let half = match geom.surface {
        Surface::Disc { radius } => radius,
        Surface::FlatTorus { periods } => 0.5 * periods[0].min(periods[1]),
        Surface::RoundSphere => 1.0,
    };
    let grid = diag::family_chart_field(&last, geom, chart, half, geom.lattice)?;
    let mut bytes = Vec::new();
    write_grid(&mut bytes, &grid).map_err(|e| Error::Argument(e.to_string()))?;
    out.blobs.push(("family_field.flgrid".into(), bytes));
    out.note("nodes_last_scale", diag::quadrature_node_count(&last, geom));
    Ok(out)
}

// ------------------------------------------------------------------- lipschitz

fn scan_chart(geom: &ProductGeometry) -> ChartId {
    match geom.surface {
        Surface::RoundSphere => ChartId::North,
        Surface::Disc { .. } => ChartId::Disc,
        Surface::FlatTorus { .. } => ChartId::Torus,
    }
}

fn run_lipschitz(r: &Resolved) -> Result<Outcome> {
    let (geom, fam) = geometry(r)?;
    let p = &r.config.lipschitz;
    let tol = &r.config.tolerances;
    let mut out = Outcome::new(r.subcommand);
    let chart = scan_chart(geom);
    let scale = p.scale.unwrap_or(*r.scales.last().expect("nonempty ladder"));
    let f = fam.with_scale(scale);
    let norm = sup_norm(&f, geom)?;
    let field = diag::family_chart_field(&f, geom, chart, p.half_width, p.cells)?;
    let lambdas: Vec<f64> = (0..=p.lambda_max_log2).map(|k| 2f64.powi(k as i32)).collect();
    let scan = diag::lipschitz_scan(&field, norm, &lambdas)?;
    let mut t = Table::new("lipschitz_scan", &["lambda", "bad_measure", "measure_ratio", "lip", "lip_over_lambda"]);
    for row in &scan.rows {
        t.push(vec![row.lambda, row.bad_measure, row.measure_ratio, row.lip, row.lip_over_lambda]);
    }
    out.checks.push(Check::le("bad_set_constant", scan.c_measure, tol.lipschitz_constant_max));
    out.checks.push(Check::le("lipschitz_constant", scan.c_lip, tol.lipschitz_constant_max));
    out.note("norm", norm);
    out.note("energy", scan.energy);
    out.plots.push(
        Plot::new("lipschitz_scan", "Bad-set measure against lambda", "lambda", "|E| lambda^2 (energy / norm^2)^-1", true, false)
            .with_series("ratio", scan.rows.iter().map(|r| (r.lambda, r.measure_ratio)).collect()),
    );
    out.tables.push(t);
    let rows = diag::holder_ladder(fam, geom, chart, p.half_width, p.cells, &r.scales, p.gamma, p.q)?;
    let mut th = Table::new("holder_ladder", &["scale", "norm", "lambda", "holder", "campanato", "sup"]);
    for h in &rows {
        th.push(vec![h.scale, h.norm, h.lambda, h.holder, h.campanato, h.sup]);
    }
    let hs: Vec<f64> = rows.iter().map(|h| h.holder).collect();
    let ratio = max_of(hs.iter().cloned()) / min_of(hs.iter().cloned());
    out.checks.push(Check::le("holder_max_over_min", ratio, tol.holder_ratio));
    out.tables.push(th);
    Ok(out)
}

// --------------------------------------------------------------------- z2model

fn run_z2model(r: &Resolved) -> Result<Outcome> {
    let h = r.spacing.expect("resolved spacing");
    let p = &r.config.z2model;
    let tol = &r.config.tolerances;
    let mut out = Outcome::new(r.subcommand);
    let branch = Z2HarmonicModel::branch(1.0);
    let slab = |hh: f64| {
        let n = (1.0 / hh).round() as usize;
        branch.sample([2 * n, 2 * n, 4], hh, [-1.0, -1.0, 0.0])
    };
    let mut t = Table::new("z2_residuals", &["h", "fixed_region_residual", "margin_residual", "cells"]);
    let mut hs = Vec::new();
    for m in &p.ladder {
        let hh = h * m;
        let f = slab(hh);
        let keep = p.fixed_region_x1;
        let reg = region_from(&f, |x| x[0] >= keep);
        let res = harmonic_residual(&f, &reg)?;
        // margin region with a slit along the negative x1 axis so that lifts exist
        let slit = region_from(&f, |x| x[0].hypot(x[1]) >= 3.0 * hh && !(x[0] < 0.0 && x[1].abs() < 3.0 * hh));
        let margin = harmonic_residual(&f, &slit)?;
        t.push(vec![hh, res.d_residual.max(res.dstar_residual), margin.d_residual.max(margin.dstar_residual), res.cells as f64]);
        hs.push(hh);
    }
    let res = t.column("fixed_region_residual").unwrap_or_default();
    let k = res.len();
    let order = if k >= 2 { (res[k - 2] / res[k - 1]).ln() / (hs[k - 2] / hs[k - 1]).ln() } else { f64::NAN };
    let fit = diag::loglog_fit(&hs, &res);
    out.checks.push(Check::ge("residual_order_finest_pair", order, tol.residual_order));
    out.note("residual_order_fit", fit.slope);
    out.note("margin_residuals", t.column("margin_residual"));
    out.plots.push(
        Plot::new("z2_residuals", "Harmonic residuals of the branch form", "h", "max residual", true, true)
            .with_series("fixed region", hs.iter().cloned().zip(res.iter().cloned()).collect())
            .with_series("3h margin", hs.iter().cloned().zip(t.column("margin_residual").unwrap_or_default()).collect()),
    );
    out.tables.push(t);

    let f = slab(h);
    let hf = holder_exponent_fit(&f, [0.0, 0.0, 2.0 * h], p.holder_k_min, p.holder_k_max)?;
    out.checks.push(Check::within("holder_exponent", hf.exponent, tol.holder_exponent, tol.holder_tolerance));
    out.note("holder_r2", hf.r2);

    let hc = p.content_spacing;
    let n = (1.0 / hc).round() as usize;
    let fc = branch.sample([2 * n, 2 * n, n], hc, [-1.0, -1.0, 0.0]);
    let radii: Vec<f64> = p.content_radii_cells.iter().map(|c| c * hc).collect();
    let z = zero_locus(&fc, default_eps(&fc), &radii);
    let length = 1.0;
    let mut tc = Table::new("zero_locus_content", &["r", "content", "ratio_to_length"]);
    for &(rr, c) in &z.content_curve {
        tc.push(vec![rr, c, c / length]);
    }
    let ratios = tc.column("ratio_to_length").unwrap_or_default();
    out.checks.push(Check::range("content_ratio_max", max_of(ratios.iter().cloned()), 1.0 / tol.content_factor, tol.content_factor));
    out.checks.push(Check::range("content_ratio_min", min_of(ratios.iter().cloned()), 1.0 / tol.content_factor, tol.content_factor));
    out.note("zero_locus_eps", z.eps);
    out.note("zero_locus_cells", z.cells.len());
    out.tables.push(tc);

    // single-valued controls: exact for the linear saddle gradient and the constant form
    for (name, m) in [("saddle", Z2HarmonicModel::saddle(1.0)), ("constant", Z2HarmonicModel::constant_dt(1.0))] {
        let n = (0.25 / h).round().max(8.0) as usize;
        let f = m.sample([n, n, 4], h, [0.1, 0.1, 0.0]);
        let reg = vec![true; f.len()];
        let res = harmonic_residual(&f, &reg)?;
        out.checks.push(Check::le(&format!("{name}_residual"), res.d_residual.max(res.dstar_residual), 1e-9));
    }
    Ok(out)
}

// ---------------------------------------------------------------------- energy

fn run_energy(r: &Resolved) -> Result<Outcome> {
    let (geom, fam) = geometry(r)?;
    let p = &r.config.energy;
    let tol = &r.config.tolerances;
    let model = r.energy_model;
    let mut out = Outcome::new(r.subcommand);
    let mut coarse = *geom;
    coarse.lattice = p.resolution_lattice.unwrap_or((geom.lattice / 2).max(8));
    let mut t = Table::new("power_law", &["scale", "norm", "max_ratio", "max_ratio_resolution_check"]);
    let mut tp = Table::new("sublevel_energy", &["scale", "t", "ratio"]);
    let mut monotone = true;
    for &sc in &r.scales {
        let f = fam.with_scale(sc);
        let a = diag::power_law_ratios(&model, &f, geom, p.p, p.thresholds)?;
        let b = diag::power_law_ratios(&model, &f, &coarse, p.p, p.thresholds)?;
        let prof = diag::sublevel_energy(&model, &f, geom, &a.ts)?;
        monotone &= prof.es.windows(2).all(|w| w[1] >= w[0]) && prof.es.last().is_none_or(|e| *e <= prof.total * (1.0 + 1e-12));
        for (tt, rr) in a.ts.iter().zip(&a.ratios) {
            tp.push(vec![sc, *tt, *rr]);
        }
        t.push(vec![sc, a.norm, a.max_ratio, b.max_ratio]);
    }
    let fine = max_of(t.column("max_ratio").unwrap_or_default());
    let crs = max_of(t.column("max_ratio_resolution_check").unwrap_or_default());
    out.checks.push(Check::flag("power_law_ratio_finite", fine.is_finite() && fine > 0.0));
    out.checks.push(Check::le("power_law_resolution_change", (fine - crs).abs() / fine, tol.power_law_stability));
    out.checks.push(Check::flag("energy_profile_monotone", monotone));
    out.note("power_law_max", fine);
    out.note("power_law_max_resolution_check", crs);
    out.note("resolution_lattice", coarse.lattice);
    out.plots.push(Plot::new("sublevel_energy", "Normalised sublevel energies", "t", "ratio", true, false).with_series(
        "all scales",
        tp.rows.iter().map(|r| (r[1], r[2])).collect(),
    ));
    out.tables.push(t);
    out.tables.push(tp);

    let ah = diag::almost_harmonic_scaling(fam, geom, &r.scales)?;
    let mut ta = Table::new("almost_harmonic", &["scale", "norm", "d2", "dstar2", "total", "lattice_total", "lattice_excluded"]);
    for row in &ah.rows {
        ta.push(vec![row.scale, row.norm, row.d2, row.dstar2, row.total(), row.lattice_total, row.excluded_measure]);
    }
    if r.scales.len() >= 2 {
        out.checks.push(Check::le("almost_harmonic_slope", ah.slope, tol.almost_harmonic_slope));
    }
    out.note("almost_harmonic_lattice_slope", ah.lattice_slope);
    out.plots.push(
        Plot::new("almost_harmonic", "Defect integrals against the norm", "norm", "int |dv|^2 + |d*v|^2", true, true)
            .with_series("quadrature", ah.rows.iter().map(|r| (r.norm, r.total())).collect()),
    );
    out.tables.push(ta);

    let chart = scan_chart(geom);
    let centre = SurfacePoint { chart, z: C64::new(p.ball_centre[0], p.ball_centre[1]) };
    let h_guard = geom.spacing(&geom.charts()[0]);
    let mut tb = Table::new("ball_energy", &["scale", "r", "integral"]);
    let mut td = Table::new("energy_decay", &["scale", "norm", "monotonicity_c", "excluded_radii", "gamma", "envelope_constant", "crossover"]);
    for &sc in &r.scales {
        let f = fam.with_scale(sc);
        let norm = sup_norm(&f, geom)?;
        let ints = diag::ball_integrals(&f, geom, centre, &p.ball_radii, |s| crate::fueter_families::energy_density(&model, &f, s).0)?;
        for (rr, v) in p.ball_radii.iter().zip(&ints) {
            tb.push(vec![sc, *rr, *v]);
        }
        let mono = diag::energy_monotonicity_check(&p.ball_radii, &ints, h_guard);
        let decay = diag::macroscopic_energy_decay(&p.ball_radii, &ints, norm, p.p);
        td.push(vec![sc, norm, mono.c_min, mono.excluded.len() as f64, decay.gamma, decay.constant, decay.crossover]);
    }
    out.checks.push(Check::flag("monotonicity_constant_finite", td.rows.iter().all(|r| r[2].is_finite())));
    out.tables.push(tb);
    out.tables.push(td);
    Ok(out)
}

// ------------------------------------------------------------------- frequency

fn run_frequency(r: &Resolved) -> Result<Outcome> {
    let h = r.spacing.expect("resolved spacing");
    let p = &r.config.frequency;
    let tol = &r.config.tolerances;
    let mut out = Outcome::new(r.subcommand);
    let models = [
        ("constant", Z2HarmonicModel::constant_dt(1.0)),
        ("branch", Z2HarmonicModel::branch(1.0)),
        ("saddle", Z2HarmonicModel::saddle(1.0)),
    ];
    let mut t = Table::new("frequency_models", &["model", "degree", "r", "h_value", "d_value", "frequency"]);
    let mut plot = Plot::new("frequency_models", "Frequency of model forms", "r", "I(r)", true, false);
    for (mi, (name, m)) in models.iter().enumerate() {
        let triples: Vec<diag::FrequencyTriple> =
            p.radii_cells.iter().map(|c| diag::frequency(m, [0.0; 3], c * h, h)).collect::<Result<_>>()?;
        for tr in &triples {
            t.push(vec![mi as f64, m.degree(), tr.r, tr.h, tr.d, tr.i]);
        }
        let is: Vec<f64> = triples.iter().map(|x| x.i).collect();
        if *name == "constant" {
            out.checks.push(Check::le("constant_frequency_abs", max_of(is.iter().map(|x| x.abs())), 0.0));
        } else {
            let worst = max_of(is.iter().map(|x| (x - m.degree()).abs()));
            out.checks.push(Check::le(&format!("{name}_frequency_deviation"), worst, tol.frequency_limit));
            let scan = diag::frequency_monotonicity_scan(&triples, h, None);
            out.checks.push(Check::le(&format!("{name}_monotonicity_c"), scan.c_model, tol.frequency_c_max));
        }
        plot = plot.with_series(name, triples.iter().map(|x| (x.r, x.i)).collect());
    }
    out.plots.push(plot);
    out.tables.push(t);

    let id = diag::frequency_derivative_identity(&QuadraticMass, [0.0; 3], p.identity_radius, p.identity_spacing)?;
    let (name, value) = match p.identity {
        IdentityForm::Literal => ("derivative_identity_literal", id.literal_residual),
        IdentityForm::Corrected => ("derivative_identity_corrected", id.corrected_residual),
    };
    out.checks.push(Check::le(name, value, tol.identity));
    out.note("derivative_identity", id);

    if let (Some(geom), Some(fam)) = (&r.geometry, &r.family) {
        let centre = SurfacePoint { chart: scan_chart(geom), z: C64::new(p.family_centre[0], p.family_centre[1]) };
        let mut tf = Table::new("frequency_family", &["scale", "norm", "r", "h_value", "d_value", "frequency"]);
        let mut worst_c: f64 = 0.0;
        for &sc in &r.scales {
            let f = fam.with_scale(sc);
            let norm = sup_norm(&f, geom)?;
            let tr = diag::family_frequency(&r.energy_model, &f, geom, centre, &p.family_radii, p.family_energy)?;
            for x in &tr {
                tf.push(vec![sc, norm, x.r, x.h, x.d, x.i]);
            }
            let scan = diag::frequency_monotonicity_scan(&tr, geom.spacing(&geom.charts()[0]) / 8.0, Some((norm, p.p)));
            worst_c = worst_c.max(scan.c_family.unwrap_or(0.0));
        }
        let imax = max_of(tf.column("frequency").unwrap_or_default());
        out.checks.push(Check::le("family_frequency_max", imax, tol.family_frequency_max));
        out.note("family_differential_inequality_c", worst_c);
        out.tables.push(tf);
    }
    Ok(out)
}

// -------------------------------------------------------------------- converge

fn run_converge(r: &Resolved) -> Result<Outcome> {
    let (geom, fam) = geometry(r)?;
    let tol = &r.config.tolerances;
    let mut out = Outcome::new(r.subcommand);
    let limit = diag::limit_model(fam.kind);
    let rep = diag::convergence_experiment(fam, geom, &r.scales, &limit)?;
    let mut t = Table::new(
        "convergence",
        &[
            "scale", "log_scale", "norm", "l2_distance", "sup_distance", "grad_p2", "grad_p2_5", "grad_p3", "dirichlet",
            "limit_dirichlet", "w12", "w13", "energy_loss",
        ],
    );
    for row in &rep.rows {
        t.push(vec![
            row.scale, row.log_scale, row.norm, row.l2_distance, row.sup_distance, row.grad_p[0], row.grad_p[1], row.grad_p[2],
            row.dirichlet, row.limit_dirichlet, row.w12, row.w13, row.energy_loss,
        ]);
    }
    let last = rep.rows.last().expect("nonempty ladder");
    out.checks.push(Check::le("w12_max_over_min", rep.w12_max_over_min, tol.w12_ratio));
    out.checks.push(Check::le("energy_loss_last", last.energy_loss, tol.energy_loss));
    if fam.kind == FamilyKind::Vertical {
        if rep.rows.len() >= 2 {
            out.checks.push(Check::flag("w13_increasing", rep.w13_increasing));
        }
        let lo = min_of(rep.l2_ratios.iter().cloned());
        let hi = max_of(rep.l2_ratios.iter().cloned());
        out.checks.push(Check::range("l2_fit_ratio_min", lo, 1.0 / tol.l2_fit_factor, tol.l2_fit_factor));
        out.checks.push(Check::range("l2_fit_ratio_max", hi, 1.0 / tol.l2_fit_factor, tol.l2_fit_factor));
        out.checks.push(Check::ge("sup_distance_min", min_of(rep.rows.iter().map(|r| r.sup_distance)), tol.sup_distance_min));
        if rep.rows.len() >= 2 {
            out.checks.push(Check::within("grad3_growth_exponent", rep.compensated_growth, tol.growth_exponent, tol.growth_tolerance));
        }
    }
    out.note("l2_c", rep.l2_c);
    out.note("l2_ratios", &rep.l2_ratios);
    out.note("grad3_growth_raw", rep.raw_growth);
    out.note("grad3_growth_log_compensated", rep.compensated_growth);
    let pts = |f: &dyn Fn(&diag::ConvergenceRow) -> f64| rep.rows.iter().map(|r| (r.scale, f(r))).collect::<Vec<_>>();
    out.plots.push(
        Plot::new("convergence", "Convergence ladder", "scale", "value", true, true)
            .with_series("L2 distance", pts(&|r| r.l2_distance))
            .with_series("W12 norm", pts(&|r| r.w12))
            .with_series("W13 norm", pts(&|r| r.w13))
            .with_series("energy loss", pts(&|r| r.energy_loss)),
    );
    out.tables.push(t);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_spacing_names_the_field() {
        let cfg = parse_config("schema_version = 1\n[grid]\n").unwrap();
        let e = resolve(cfg, Subcommand::Z2model).unwrap_err();
        assert_eq!(e.path, "grid.spacing");
        let e = parse_config("schema_version = 1\n[grid]\nspacing = \"x\"\n").unwrap_err();
        assert_eq!(e.path, "grid.spacing");
        let e = parse_config("schema_version = 1\n[geometry]\nlatice = 3\n").unwrap_err();
        assert!(e.path.starts_with("geometry"), "{e}");
        let e = parse_config("schema_version = 2\n").unwrap_err();
        assert_eq!(e.path, "schema_version");
    }

    #[test]
    fn subcommand_mismatch_is_rejected() {
        let cfg = parse_config("schema_version = 1\nsubcommand = \"metric\"\n").unwrap();
        assert_eq!(resolve(cfg, Subcommand::Variety).unwrap_err().path, "subcommand");
    }

    #[test]
    fn resolved_config_round_trips() {
        let text = "schema_version = 1\n[geometry]\nsurface = \"round_sphere\"\nlattice = 16\n[family]\nkind = \"vertical\"\nlog_ladder = [5.0, 10.0]\n";
        let r = resolve(parse_config(text).unwrap(), Subcommand::Converge).unwrap();
        assert_eq!(r.scales.len(), 2);
        let back = toml::to_string(&r.config).unwrap();
        let again = resolve(parse_config(&back).unwrap(), Subcommand::Converge).unwrap();
        assert_eq!(again.config, r.config);
    }

    #[test]
    fn csv_is_plain() {
        let mut t = Table::new("x", &["a", "b"]);
        t.push(vec![1.0, 0.1]);
        assert_eq!(String::from_utf8(t.to_csv().unwrap()).unwrap(), "a,b\n1,0.1\n");
    }
}
