//! End-to-end experiments: phantom, forward solve, boundary traces, inversion and reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::basis::{BasisError, BasisSet};
use crate::eikonal::{monotonicity_check, solve_sources, EikonalError, FmmOptions, TravelTimeTable};
use crate::geometry::{CartGrid, CylGrid, CylinderSpec, GeometryError};
use crate::inversion::lift::min_interior_u;
use crate::inversion::probes::{carleman_check, convexity_probe};
use crate::inversion::reference::{project_u, sample_u, truncation_ratio};
use crate::inversion::{
    minimize, reconstruct_n, FeasibleSetParams, Functional, History, InversionError, ReconstructionReport,
    SemiDiscreteField,
};
use crate::io::{self, DumpError};
use crate::observations::{
    add_noise, extract_boundary_data, smooth_and_differentiate, source_quadrature, BoundaryData, DataError,
};
use crate::phantom::{build_phantom, InclusionSpec, PhantomError, RefractiveField};
use crate::quadrature::{uniform_nodes, Quadrature};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Dump(#[from] DumpError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl ExperimentError {
    /// Process exit code: 2 for configuration errors, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Numerical(_) => 3,
            _ => 1,
        }
    }
}

impl From<GeometryError> for ExperimentError {
    fn from(e: GeometryError) -> Self {
        ExperimentError::Config(e.to_string())
    }
}

impl From<PhantomError> for ExperimentError {
    fn from(e: PhantomError) -> Self {
        ExperimentError::Config(e.to_string())
    }
}

impl From<BasisError> for ExperimentError {
    fn from(e: BasisError) -> Self {
        ExperimentError::Config(e.to_string())
    }
}

impl From<EikonalError> for ExperimentError {
    fn from(e: EikonalError) -> Self {
        ExperimentError::Numerical(e.to_string())
    }
}

impl From<DataError> for ExperimentError {
    fn from(e: DataError) -> Self {
        ExperimentError::Numerical(e.to_string())
    }
}

impl From<InversionError> for ExperimentError {
    fn from(e: InversionError) -> Self {
        match e {
            InversionError::Geometry(g) => ExperimentError::Config(g.to_string()),
            other => ExperimentError::Numerical(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> ExperimentError {
    ExperimentError::Io(format!("{}: {e}", path.display()))
}

/// Full description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub cylinder: CylinderSpec,
    /// Spacing of the Cartesian forward grid.
    pub forward_h: f64,
    /// Radial and axial spacing of the inverse grid.
    pub inverse_h: f64,
    /// Number of φ-intervals of the inverse grid.
    pub n_phi: usize,
    /// Number of basis functions.
    #[serde(rename = "N")]
    pub n_basis: usize,
    pub lambda: f64,
    /// Inclusion of the phantom; `None` gives the homogeneous medium.
    pub inclusion: Option<InclusionSpec>,
    /// Relative noise level of the boundary traces.
    pub delta: f64,
    pub seed: u64,
    pub gamma: f64,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub output_dir: Option<PathBuf>,
    /// Write a checkpoint every this many iterations (0 disables).
    pub checkpoint_every: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            cylinder: CylinderSpec::default(),
            forward_h: 1.0 / 40.0,
            inverse_h: 1.0 / 20.0,
            n_phi: 32,
            n_basis: 4,
            lambda: 3.0,
            inclusion: Some(InclusionSpec::letter_b_vertical(1.5)),
            delta: 0.0,
            seed: 0,
            gamma: 0.1,
            grad_tol: 1e-2,
            max_iters: 1000,
            output_dir: None,
            checkpoint_every: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let c = &self.cylinder;
        CylinderSpec::new(c.r, c.eps, c.b)?;
        let bad = |msg: &str| Err(ExperimentError::Config(msg.to_string()));
        if !(self.forward_h > 0.0 && self.forward_h < c.r.min(c.b)) {
            return bad("forward_h must be positive and smaller than the cylinder");
        }
        if !(self.inverse_h > 0.0 && self.inverse_h <= c.r.min(c.b) / 4.0) {
            return bad("inverse_h must give at least four intervals in r and z");
        }
        if self.n_phi < 4 {
            return bad("n_phi must be at least 4");
        }
        if self.n_basis == 0 {
            return bad("N must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and non-negative");
        }
        if !(self.delta >= 0.0 && self.delta < 1.0) {
            return bad("delta must lie in [0, 1)");
        }
        if let Some(inc) = &self.inclusion {
            inc.check_placement(c)?;
        }
        self.params().validate().map_err(|e| ExperimentError::Config(e.to_string()))
    }

    /// Descent parameters implied by the configuration.
    pub fn params(&self) -> FeasibleSetParams {
        FeasibleSetParams {
            c: self.cylinder.monotonicity_constant(),
            lambda: self.lambda,
            gamma: self.gamma,
            grad_tol: self.grad_tol,
            max_iters: self.max_iters,
            ..FeasibleSetParams::default()
        }
    }

    pub fn cart_grid(&self) -> Result<CartGrid, ExperimentError> {
        Ok(CartGrid::for_cylinder(&self.cylinder, self.forward_h)?)
    }

    pub fn cyl_grid(&self) -> Result<CylGrid, ExperimentError> {
        Ok(CylGrid::with_spacing(self.cylinder, self.inverse_h, self.n_phi)?)
    }

    /// Index inside the inclusion, 1 for the homogeneous medium.
    pub fn correct_contrast(&self) -> f64 {
        self.inclusion.map_or(1.0, |i| i.contrast)
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serialises")
    }
}

/// Data produced by the forward stage.
#[derive(Debug, Clone)]
pub struct ForwardData {
    pub cart: CartGrid,
    pub grid: CylGrid,
    pub truth: RefractiveField,
    pub tables: Vec<TravelTimeTable>,
    /// Noiseless traces.
    pub data: BoundaryData,
    /// Reference `u = tau_r^2` from the tables, as `(z0s, u)`.
    pub u_ref: (Vec<f64>, Vec<f64>),
}

/// Builds the phantom, solves one eikonal problem per z-plane source and extracts the traces.
pub fn forward(config: &ExperimentConfig) -> Result<ForwardData, ExperimentError> {
    config.validate()?;
    let cart = config.cart_grid()?;
    let grid = config.cyl_grid()?;
    let truth = match &config.inclusion {
        Some(inc) => build_phantom(inc, &config.cylinder, &cart)?,
        None => RefractiveField::constant(cart.clone(), 1.0),
    };
    let tables = solve_sources(&truth, &grid.z_nodes(), &FmmOptions::default())?;
    let data = extract_boundary_data(&tables, &grid)?;
    let u_ref = sample_u(&tables, &grid)?;
    Ok(ForwardData { cart, grid, truth, tables, data, u_ref })
}

/// Metrics written to `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub config: ExperimentConfig,
    pub contrast_correct: f64,
    pub contrast_computed: f64,
    pub rel_l2_error: Option<f64>,
    pub truncation_ratio: Option<f64>,
    pub iterations: usize,
    pub final_grad_norm: f64,
    /// Elapsed time; the only field that differs between identical runs.
    pub wall_time_s: f64,
    pub converged: bool,
    pub background_linf: Option<f64>,
    pub clipped_nodes: usize,
}

impl Metrics {
    /// Metrics without the wall time, byte-identical for identical configurations.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("metrics serialise");
        v.as_object_mut().expect("object").remove("wall_time_s");
        serde_json::to_string_pretty(&v).expect("metrics serialise")
    }
}

/// Result of one inversion.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: ReconstructionReport,
    pub metrics: Metrics,
    pub coefficients: SemiDiscreteField,
    pub history: History,
}

/// Inputs of the inverse stage.
#[derive(Debug, Clone, Copy)]
pub struct InverseInput<'a> {
    /// Noiseless traces; noise is added according to the configuration.
    pub data: &'a BoundaryData,
    pub cart: &'a CartGrid,
    pub truth: Option<&'a RefractiveField>,
    pub u_ref: Option<&'a (Vec<f64>, Vec<f64>)>,
}

/// Adds noise, builds the functional, minimises from zero (or from `resume`) and evaluates the result.
pub fn invert(
    config: &ExperimentConfig,
    input: InverseInput<'_>,
    resume: Option<(SemiDiscreteField, History)>,
) -> Result<ExperimentOutcome, ExperimentError> {
    let start = Instant::now();
    config.validate()?;
    let noisy = add_noise(input.data, config.delta, config.seed);
    let grid = noisy.grid.clone();
    let basis = BasisSet::build(config.n_basis, config.cylinder.b)?;
    let derived = smooth_and_differentiate(&noisy, &basis)?;
    let params = config.params();
    let functional = Functional::new(&derived, &basis, config.lambda, params.u_floor())?;
    let trunc = match input.u_ref {
        Some((z0s, u)) => Some(truncation_ratio(&grid, &basis, z0s, u)?),
        None => None,
    };
    let (v0, history) = match resume {
        Some((v, h)) => (v, Some(h)),
        None => (SemiDiscreteField::zeros(&grid, config.n_basis), None),
    };
    let config_json = config.to_json();
    let mut checkpoint_error = None;
    let minimum = {
        let mut observer = |it: usize, v: &SemiDiscreteField, h: &History| {
            if let Some(dir) = &config.output_dir {
                if config.checkpoint_every > 0
                    && it.is_multiple_of(config.checkpoint_every)
                    && checkpoint_error.is_none()
                {
                    if let Err(e) = io::write_checkpoint(&dir.join("checkpoint"), v, h, config_json.clone()) {
                        checkpoint_error = Some(e);
                    }
                }
            }
        };
        minimize(&functional, &v0, &params, history, Some(&mut observer))?
    };
    if let Some(e) = checkpoint_error {
        return Err(e.into());
    }
    let report = reconstruct_n(&functional, &minimum, input.cart, input.truth, config.correct_contrast(), trunc);
    let metrics = Metrics {
        config: config.clone(),
        contrast_correct: report.correct_contrast,
        contrast_computed: report.computed_contrast,
        rel_l2_error: report.relative_l2_error,
        truncation_ratio: report.truncation_ratio,
        iterations: report.iterations,
        final_grad_norm: report.final_grad_norm,
        wall_time_s: start.elapsed().as_secs_f64(),
        converged: report.converged,
        background_linf: report.background_linf,
        clipped_nodes: report.clipped_nodes,
    };
    let outcome = ExperimentOutcome { report, metrics, coefficients: minimum.v, history: minimum.history };
    if let Some(dir) = &config.output_dir {
        write_artifacts(dir, config, &outcome, &noisy, input.truth)?;
    }
    Ok(outcome)
}

/// Runs the forward and inverse stages and writes artifacts when `output_dir` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    let start = Instant::now();
    let fwd = forward(config)?;
    let mut outcome = invert(
        config,
        InverseInput { data: &fwd.data, cart: &fwd.cart, truth: Some(&fwd.truth), u_ref: Some(&fwd.u_ref) },
        None,
    )?;
    outcome.metrics.wall_time_s = start.elapsed().as_secs_f64();
    if let Some(dir) = &config.output_dir {
        write_json(&dir.join("metrics.json"), &outcome.metrics)?;
    }
    Ok(outcome)
}

/// Writes forward-stage artifacts: the phantom, the noiseless traces and one table per source.
pub fn write_forward(dir: &Path, config: &ExperimentConfig, fwd: &ForwardData) -> Result<(), ExperimentError> {
    let cfg = json!({ "config": config.to_json() });
    io::write_refractive(&dir.join("n_true"), "refractive_index_true", &fwd.truth, cfg.clone())?;
    io::write_boundary(&dir.join("boundary_data"), &fwd.data)?;
    let seed_radius = FmmOptions::default().seed_radius;
    for (l, t) in fwd.tables.iter().enumerate() {
        io::write_table(&dir.join("tables").join(format!("source_{l:03}")), t, seed_radius)?;
    }
    write_json(&dir.join("config.json"), config)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| ExperimentError::Io(e.to_string()))?;
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), ExperimentError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_artifacts(
    dir: &Path,
    config: &ExperimentConfig,
    outcome: &ExperimentOutcome,
    noisy: &BoundaryData,
    truth: Option<&RefractiveField>,
) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let cfg = json!({ "config": config.to_json() });
    write_json(&dir.join("config.json"), config)?;
    write_json(&dir.join("metrics.json"), &outcome.metrics)?;
    io::write_refractive(&dir.join("n_computed"), "refractive_index_computed", &outcome.report.n_comp, cfg.clone())?;
    if let Some(t) = truth {
        io::write_refractive(&dir.join("n_true"), "refractive_index_true", t, cfg.clone())?;
    }
    io::write_semidiscrete(&dir.join("coefficients"), "basis_coefficients", &outcome.coefficients, cfg.clone())?;
    io::write_boundary(&dir.join("boundary_data"), noisy)?;
    let header = format!("# config: {}\n", serde_json::to_string(&config.to_json()).expect("config serialises"));
    write_text(&dir.join("history.csv"), &(header.clone() + &history_csv(&outcome.history)))?;
    let (axial, transverse) = slices_csv(&outcome.report.n_comp, truth, config.cylinder.b);
    write_text(&dir.join("slice_axial.csv"), &(header.clone() + &axial))?;
    write_text(&dir.join("slice_transverse.csv"), &(header + &transverse))
}

/// One row per iterate: `iteration,j,grad_norm,step,clamped_fraction`.
pub fn history_csv(h: &History) -> String {
    let mut s = String::from("iteration,j,grad_norm,step,clamped_fraction\n");
    for k in 0..h.j.len() {
        let _ = writeln!(s, "{k},{:e},{:e},{:e},{}", h.j[k], h.grad_norm[k], h.step[k], h.clamped_fraction[k]);
    }
    s
}

fn nearest(grid: &CartGrid, axis: usize, target: f64) -> usize {
    let dims = grid.dims();
    (0..dims[axis])
        .min_by(|&a, &b| {
            let pa = point_axis(grid, axis, a);
            let pb = point_axis(grid, axis, b);
            (pa - target).abs().total_cmp(&(pb - target).abs())
        })
        .unwrap_or(0)
}

fn point_axis(grid: &CartGrid, axis: usize, k: usize) -> f64 {
    let mut idx = [0; 3];
    idx[axis] = k;
    let p = grid.point(idx[0], idx[1], idx[2]);
    [p.0, p.1, p.2][axis]
}

/// Axial cut `y = 0` and transverse cut `z = B/2` as `coordinate, coordinate, n_true, n_computed` rows.
pub fn slices_csv(computed: &RefractiveField, truth: Option<&RefractiveField>, b: f64) -> (String, String) {
    let g = &computed.grid;
    let [mx, my, mz] = g.dims();
    let iy0 = nearest(g, 1, 0.0);
    let iz0 = nearest(g, 2, 0.5 * b);
    let value = |k: usize| truth.map_or(f64::NAN, |t| t.values[k]);
    let mut axial = String::from("x,z,n_true,n_computed\n");
    for ix in 0..mx {
        for iz in 0..mz {
            let (x, _, z) = g.point(ix, iy0, iz);
            let k = g.index(ix, iy0, iz);
            let _ = writeln!(axial, "{x},{z},{},{}", value(k), computed.values[k]);
        }
    }
    let mut transverse = String::from("x,y,n_true,n_computed\n");
    for ix in 0..mx {
        for iy in 0..my {
            let (x, y, _) = g.point(ix, iy, iz0);
            let k = g.index(ix, iy, iz0);
            let _ = writeln!(transverse, "{x},{y},{},{}", value(k), computed.values[k]);
        }
    }
    (axial, transverse)
}

/// Parameter varied by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Lambda,
    #[serde(rename = "N")]
    N,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::Lambda => "lambda",
            SweepParameter::N => "N",
        }
    }

    fn apply(&self, config: &ExperimentConfig, value: f64) -> Result<ExperimentConfig, ExperimentError> {
        let mut c = config.clone();
        match self {
            SweepParameter::Lambda => c.lambda = value,
            SweepParameter::N => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(ExperimentError::Config(format!("N must be a positive integer, got {value}")));
                }
                c.n_basis = value as usize;
            }
        }
        c.output_dir = config.output_dir.as_ref().map(|d| d.join(format!("{}_{value}", self.name())));
        Ok(c)
    }
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub relative_l2_error: Option<f64>,
    pub contrast: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_grad_norm: f64,
}

/// Runs one inversion per value on shared forward data; writes `sweep_<param>.csv` when `output_dir` is set.
pub fn sweep(
    config: &ExperimentConfig,
    parameter: SweepParameter,
    values: &[f64],
) -> Result<Vec<SweepRow>, ExperimentError> {
    if values.is_empty() {
        return Err(ExperimentError::Config("sweep needs at least one value".into()));
    }
    let configs = values.iter().map(|&v| parameter.apply(config, v)).collect::<Result<Vec<_>, _>>()?;
    let fwd = forward(config)?;
    let rows = configs
        .par_iter()
        .zip(values)
        .map(|(c, &value)| {
            let input =
                InverseInput { data: &fwd.data, cart: &fwd.cart, truth: Some(&fwd.truth), u_ref: Some(&fwd.u_ref) };
            let out = invert(c, input, None)?;
            Ok(SweepRow {
                value,
                relative_l2_error: out.metrics.rel_l2_error,
                contrast: out.metrics.contrast_computed,
                iterations: out.metrics.iterations,
                converged: out.metrics.converged,
                final_grad_norm: out.metrics.final_grad_norm,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    if let Some(dir) = &config.output_dir {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        write_text(&dir.join(format!("sweep_{}.csv", parameter.name())), &sweep_csv(config, parameter, &rows))?;
    }
    Ok(rows)
}

/// Comparison table with the config as a leading comment line.
pub fn sweep_csv(config: &ExperimentConfig, parameter: SweepParameter, rows: &[SweepRow]) -> String {
    let mut s = format!("# config: {}\n", serde_json::to_string(&config.to_json()).expect("config serialises"));
    let _ = writeln!(s, "{},relative_l2_error,contrast,iterations,converged,final_grad_norm", parameter.name());
    for r in rows {
        let err = r.relative_l2_error.map_or("".to_string(), |e| format!("{e}"));
        let _ =
            writeln!(s, "{},{err},{},{},{},{:e}", r.value, r.contrast, r.iterations, r.converged, r.final_grad_norm);
    }
    s
}

/// One property check with its measured values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub property: String,
    pub passed: bool,
    pub measured: Value,
}

/// Machine-readable results of [`verify`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub config: ExperimentConfig,
    pub checks: Vec<Check>,
}

impl Diagnostics {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Runs the property suites: basis orthonormality and triangularity, the weighted
/// Volterra estimate, radial monotonicity of travel times, the adjoint gradient
/// against finite differences, and the convexity probe. Failures are data.
pub fn verify(config: &ExperimentConfig) -> Diagnostics {
    let mut checks = Vec::new();
    let b = config.cylinder.b;
    let mut push = |property: &str, result: Result<(bool, Value), String>| {
        let (passed, measured) = result.unwrap_or_else(|e| (false, json!({ "error": e })));
        checks.push(Check { property: property.into(), passed, measured });
    };
    push("basis_orthonormality_n8", basis_orthonormality(8, b));
    push("basis_triangularity_n8", basis_triangularity(8, b));
    push("carleman_estimate", carleman_suite(config));
    let small = small_problem(config);
    match small {
        Ok((functional, basis, tables, grid, z0s, u)) => {
            let mono = monotonicity_check(&tables, &grid, 2.0 * config.forward_h)
                .map(|r| (r.holds, json!(r)))
                .map_err(|e| e.to_string());
            push("monotonicity_homogeneous", mono);
            push("gradient_finite_difference", gradient_check(&functional, &basis, &z0s, &u));
            push("convexity_probe", convexity_suite(&functional, &basis, &z0s, &u));
        }
        Err(e) => {
            for p in ["monotonicity_homogeneous", "gradient_finite_difference", "convexity_probe"] {
                push(p, Err(e.to_string()));
            }
        }
    }
    Diagnostics { config: config.clone(), checks }
}

fn basis_orthonormality(n: usize, b: f64) -> Result<(bool, Value), String> {
    let basis = BasisSet::build(n, b).map_err(|e| e.to_string())?;
    let nodes = uniform_nodes(0.0, b, 40_001);
    let quad = Quadrature::simpson(&nodes);
    let vals: Vec<Vec<f64>> = nodes.iter().map(|&z| basis.values_at(z)).collect();
    let mut err = 0.0f64;
    for a in 0..n {
        for c in 0..n {
            let f: Vec<f64> = vals.iter().map(|v| v[a] * v[c]).collect();
            let target = if a == c { 1.0 } else { 0.0 };
            err = err.max((quad.integrate(&f) - target).abs());
        }
    }
    Ok((err <= 1e-10, json!({ "max_gram_error": err })))
}

fn basis_triangularity(n: usize, b: f64) -> Result<(bool, Value), String> {
    let basis = BasisSet::build(n, b).map_err(|e| e.to_string())?;
    let (mut lower, mut diag) = (0.0f64, 0.0f64);
    for m in 0..n {
        for k in 0..n {
            if m > k {
                lower = lower.max(basis.a(m, k).abs());
            } else if m == k {
                diag = diag.max((basis.a(m, k) - 1.0).abs());
            }
        }
    }
    let det = basis.det_a();
    let passed = lower <= 1e-10 && diag <= 1e-10 && (det - 1.0).abs() <= 1e-8;
    Ok((passed, json!({ "max_below_diagonal": lower, "max_diagonal_error": diag, "det": det })))
}

fn carleman_suite(config: &ExperimentConfig) -> Result<(bool, Value), String> {
    let (eps, r) = (config.cylinder.eps, config.cylinder.r);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut failures = 0;
    let mut worst = 0.0f64;
    for lambda in 1..=10 {
        let mut fs = vec![vec![1.0; 21]];
        for _ in 0..10 {
            fs.push((0..21).map(|_| rng.gen_range(-1.0..1.0)).collect());
        }
        for f in &fs {
            let c = carleman_check(f, lambda as f64, eps, r);
            if !c.holds {
                failures += 1;
            }
            if c.rhs > 0.0 {
                worst = worst.max(c.lhs / c.rhs);
            }
        }
    }
    Ok((
        failures == 0,
        json!({ "lambdas": (1..=10).collect::<Vec<_>>(), "failures": failures, "max_lhs_over_rhs": worst }),
    ))
}

type SmallProblem = (Functional, BasisSet, Vec<TravelTimeTable>, CylGrid, Vec<f64>, Vec<f64>);

/// Homogeneous medium on a coarse inverse grid, used by the gradient and convexity checks.
fn small_problem(config: &ExperimentConfig) -> Result<SmallProblem, ExperimentError> {
    let cart = config.cart_grid()?;
    let grid = CylGrid::new(config.cylinder, 6, 8, 10)?;
    let truth = RefractiveField::constant(cart, 1.0);
    let tables = solve_sources(&truth, &grid.z_nodes(), &FmmOptions::default())?;
    let data = extract_boundary_data(&tables, &grid)?;
    let basis = BasisSet::build(4, config.cylinder.b)?;
    let derived = smooth_and_differentiate(&data, &basis)?;
    let params = FeasibleSetParams { c: config.cylinder.monotonicity_constant(), ..FeasibleSetParams::default() };
    let functional = Functional::new(&derived, &basis, 3.0, params.u_floor())?;
    let (z0s, u) = sample_u(&tables, &grid)?;
    Ok((functional, basis, tables, grid, z0s, u))
}

/// Coefficients of the constant function 1 in the basis.
pub fn constant_coefficients(basis: &BasisSet, z0s: &[f64]) -> Vec<f64> {
    basis.project(&source_quadrature(z0s), &vec![1.0; z0s.len()]).expect("quadrature matches nodes")
}

/// Feasible point near the reference coefficients with every interior `u` sample at least 0.05.
///
/// Adds `scale`-sized noise, then a constant shift large enough that no sample
/// sits on the floor, so `J` is smooth in a neighbourhood of the point.
pub fn random_feasible_point(
    functional: &Functional,
    basis: &BasisSet,
    z0s: &[f64],
    u: &[f64],
    rng: &mut ChaCha8Rng,
    scale: f64,
) -> Result<SemiDiscreteField, ExperimentError> {
    let mut v = project_u(&functional.grid, basis, z0s, u)?;
    for x in v.values.iter_mut() {
        *x += scale * rng.gen_range(-1.0..1.0);
    }
    functional.pin(&mut v);
    let shift = constant_coefficients(basis, z0s);
    // The truncated constant reconstructs to about 1, so this lifts every sample above 0.05.
    let a = (0.1 - min_interior_u(functional, &v)).max(0.0) + rng.gen_range(0.0..0.3);
    let g = &functional.grid;
    for m in 0..g.nr() {
        for i in 0..g.n_phi {
            for j in 1..g.n_z {
                for (x, c) in v.node_mut(m, i, j).iter_mut().zip(&shift) {
                    *x += a * c;
                }
            }
        }
    }
    if min_interior_u(functional, &v) < 0.05 {
        return Err(ExperimentError::Numerical("constant shift failed to clear the floor".into()));
    }
    Ok(v)
}

/// Random direction vanishing on the pinned end planes.
pub fn random_direction(functional: &Functional, rng: &mut ChaCha8Rng) -> SemiDiscreteField {
    let g = &functional.grid;
    let mut d = SemiDiscreteField::zeros(g, functional.n());
    for m in 0..g.nr() {
        for i in 0..g.n_phi {
            for j in 1..g.n_z {
                for x in d.node_mut(m, i, j) {
                    *x = rng.gen_range(-1.0..1.0);
                }
            }
        }
    }
    d
}

fn gradient_check(functional: &Functional, basis: &BasisSet, z0s: &[f64], u: &[f64]) -> Result<(bool, Value), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let v = random_feasible_point(functional, basis, z0s, u, &mut rng, 0.01).map_err(|e| e.to_string())?;
    let (_, grad) = functional.value_and_gradient(&v);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let d = random_direction(functional, &mut rng);
        let h = 1e-6;
        let fd = (functional.value(&v.axpy(h, &d)).j - functional.value(&v.axpy(-h, &d)).j) / (2.0 * h);
        let an = grad.dot(&d);
        worst = worst.max((fd - an).abs() / an.abs().max(1e-12));
    }
    Ok((worst < 1e-5, json!({ "directions": 5, "max_relative_error": worst })))
}

fn convexity_suite(functional: &Functional, basis: &BasisSet, z0s: &[f64], u: &[f64]) -> Result<(bool, Value), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut min_gap = f64::INFINITY;
    for _ in 0..10 {
        let v1 = random_feasible_point(functional, basis, z0s, u, &mut rng, 0.02).map_err(|e| e.to_string())?;
        let v2 = random_feasible_point(functional, basis, z0s, u, &mut rng, 0.02).map_err(|e| e.to_string())?;
        min_gap = min_gap.min(convexity_probe(functional, &v1, &v2));
    }
    Ok((min_gap >= 0.0, json!({ "pairs": 10, "min_bregman_gap": min_gap })))
}
