//! Command-line surface: run configuration, the construct → stretch → verify
//! pipeline, and small wrappers around the closed-form modules.
//!
//! Exit codes: 0 ok/pass, 1 input error, 2 solver non-convergence,
//! 3 verification failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::ellipsoid_potential::EllipsoidPose;
use crate::elliptic::EllipsoidAxes;
use crate::fbsolver::{
    assemble_stiffness, extract_coincidence_set, read_vtk_points, solve_free_space, solve_obstacle_qp, write_vtk_mask,
    FreeSpaceOptions, FreeSpaceReport, Grid, ScalarField, SolveStats, SolverOptions,
};
use crate::geometry::{connected_components, read_csv, stretch_region, write_csv, DiagonalStretch, VoxelRegion};
use crate::greens_ti::{green_ti, ti_constants, TIGreenConstants};
use crate::materials::{
    check_construction_constraints, scale_factors, validate_elastic_tensor, ElasticTensor, ScaleFactors,
};
use crate::obstacle::{eval_obstacle, obstacle_radius, ObstacleSpec};
use crate::verify::{
    certify_polynomial_conservation, ellipsoid_potential_closed_form, non_ellipsoidality_score, strain_map,
    CertificationReport, CertifyOptions, DensityPolynomial, EigenstrainSpec, NonEllipsoidalityReport,
};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NONCONVERGENCE: i32 = 2;
pub const EXIT_VERIFY_FAIL: i32 = 3;

/// Smallest grid the CLI accepts; coarser grids cannot resolve the sets.
pub const MIN_GRID_NODES: usize = 16;

const OMEGA1: &str = include_str!("../presets/omega1.json");
const OMEGA2: &str = include_str!("../presets/omega2.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// V = 0 on the faces of the computational cube.
    #[default]
    DirichletZero,
    /// Face values from the Newtonian potential of the contact charge, so
    /// the solution approximates the whole-space problem.
    FreeSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub tol: f64,
    pub omega: f64,
    pub max_iters: Option<usize>,
    pub boundary: BoundaryMode,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: 64,
            l: 1.2,
            tol: 1e-8,
            omega: 1.5,
            max_iters: None,
            boundary: BoundaryMode::DirichletZero,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub material: ElasticTensor,
    pub obstacle: ObstacleSpec,
    #[serde(default)]
    pub grid: GridConfig,
    /// Per-axis factors d mapping the coincidence set to the inclusion
    /// (x = x′/d). Derived from the material when absent.
    #[serde(default)]
    pub stretch: Option<[f64; 3]>,
    #[serde(default)]
    pub eigenstrain: Option<EigenstrainSpec>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    /// Parses and validates; errors name the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Parse(format!("config field '{}': {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "omega1" => Self::from_json(OMEGA1),
            "omega2" => Self::from_json(OMEGA2),
            other => Err(Error::Parse(format!("unknown preset '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let field = |path: &str, e: Error| Error::Domain(format!("config field '{path}': {e}"));
        let validity = validate_elastic_tensor(&self.material);
        if !validity.pass {
            return Err(Error::Domain(format!(
                "config field 'material': not positive definite ({})",
                validity.violated.join("; ")
            )));
        }
        self.obstacle.validate().map_err(|e| field("obstacle", e))?;
        let g = &self.grid;
        if g.n < MIN_GRID_NODES {
            return Err(Error::Domain(format!(
                "config field 'grid.n': need at least {MIN_GRID_NODES}, got {}",
                g.n
            )));
        }
        Grid::new(g.n, g.l).map_err(|e| field("grid.L", e))?;
        if !(g.omega > 0.0 && g.omega < 2.0) {
            return Err(Error::Domain(format!(
                "config field 'grid.omega': must lie in (0, 2), got {}",
                g.omega
            )));
        }
        if !(g.tol.is_finite() && g.tol > 0.0) {
            return Err(Error::Domain(format!(
                "config field 'grid.tol': must be positive, got {}",
                g.tol
            )));
        }
        if let Some(d) = self.stretch {
            DiagonalStretch::new(d[0], d[1], d[2]).map_err(|e| field("stretch", e))?;
        }
        if let Some(eig) = &self.eigenstrain {
            eig.validate().map_err(|e| field("eigenstrain", e))?;
            strain_map(eig.case, &self.material, &eig.p).map_err(|e| field("eigenstrain.case", e))?;
        }
        Ok(())
    }

    pub fn stretch(&self) -> Result<DiagonalStretch> {
        let d = match self.stretch {
            Some(d) => d,
            None => default_stretch(&self.material)?,
        };
        DiagonalStretch::new(d[0], d[1], d[2])
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            omega: self.grid.omega,
            tol: self.grid.tol,
            max_iters: self.grid.max_iters,
            record_energy: false,
        }
    }
}

/// Stretch implied by the material's construction scenario.
pub fn default_stretch(c: &ElasticTensor) -> Result<[f64; 3]> {
    Ok(match scale_factors(c)? {
        ScaleFactors::Isotropic => [1.0, 1.0, 1.0],
        ScaleFactors::CubicT { t } => [1.0, 1.0, t],
        ScaleFactors::TransisoV { v, .. } => [1.0, 1.0, v],
        ScaleFactors::TransisoS { s } => [1.0, 1.0, s],
        ScaleFactors::OrthoS1S2 { s1, s2 } => [s1, s2, 1.0],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstructSummary {
    pub obstacle: ObstacleSpec,
    pub grid: GridConfig,
    pub h: f64,
    pub eps_coincidence: f64,
    pub iterations: usize,
    pub converged: bool,
    pub last_update: f64,
    pub complementarity_residual: f64,
    pub contact_nodes: usize,
    pub free_space: Option<FreeSpaceReport>,
    pub voxel_count: usize,
    pub volume: f64,
    pub components: usize,
    pub component_sizes: Vec<usize>,
    pub max_radius: f64,
    /// Obstacle radius plus two grid spacings.
    pub containment_radius: f64,
    pub contained: bool,
    pub stretch: [f64; 3],
    pub inclusion_volume: f64,
    pub note: Option<String>,
}

pub struct Construction {
    pub phi: ScalarField,
    pub v: ScalarField,
    pub stats: SolveStats,
    pub region: VoxelRegion,
    pub inclusion: VoxelRegion,
    pub summary: ConstructSummary,
}

/// Obstacle → solver → extraction → stretch.
pub fn construct(cfg: &RunConfig, eps: f64) -> Result<Construction> {
    cfg.validate()?;
    let grid = Grid::new(cfg.grid.n, cfg.grid.l)?;
    let k = assemble_stiffness(grid);
    let phi = ScalarField::from_fn(grid, |x| eval_obstacle(&cfg.obstacle, x));
    let opts = cfg.solver_options();
    let (v, stats, free_space) = match cfg.grid.boundary {
        BoundaryMode::DirichletZero => {
            let (v, s) = solve_obstacle_qp(&k, &phi, &opts)?;
            (v, s, None)
        }
        BoundaryMode::FreeSpace => {
            let (v, s, r) = solve_free_space(&k, &phi, &opts, &FreeSpaceOptions::default())?;
            (v, s, Some(r))
        }
    };
    let region = extract_coincidence_set(&v, &phi, eps)?;
    let stretch = cfg.stretch()?;
    let inclusion = stretch_region(&region, &stretch);
    let cc = connected_components(&region);
    let max_radius = region.centers().iter().map(|c| c.norm()).fold(0.0, f64::max);
    let containment_radius = obstacle_radius(&cfg.obstacle) + 2.0 * grid.h;
    let note = region.is_empty().then(|| "empty coincidence set".to_string());
    let summary = ConstructSummary {
        obstacle: cfg.obstacle.clone(),
        grid: cfg.grid,
        h: grid.h,
        eps_coincidence: eps,
        iterations: stats.iterations,
        converged: stats.converged && free_space.as_ref().is_none_or(|r| r.converged),
        last_update: stats.last_update,
        complementarity_residual: stats.complementarity_residual,
        contact_nodes: stats.contact_nodes,
        free_space,
        voxel_count: region.count(),
        volume: region.count() as f64 * region.voxel_volume(),
        components: cc.count,
        component_sizes: cc.sizes.clone(),
        max_radius,
        containment_radius,
        contained: max_radius <= containment_radius,
        stretch: stretch.d,
        inclusion_volume: inclusion.count() as f64 * inclusion.voxel_volume(),
        note,
    };
    Ok(Construction {
        phi,
        v,
        stats,
        region,
        inclusion,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyOutcome {
    pub certification: CertificationReport,
    /// Absent for regions too thin or too small for a fit.
    pub non_ellipsoidality: Option<NonEllipsoidalityReport>,
    pub pass: bool,
}

/// Certification of `inclusion` under the config's eigenstrain, plus the
/// ellipsoid-fit score under a unit constant density.
pub fn verify_region(cfg: &RunConfig, inclusion: &VoxelRegion) -> Result<VerifyOutcome> {
    let eig = cfg
        .eigenstrain
        .as_ref()
        .ok_or_else(|| Error::Domain("config field 'eigenstrain': required for verification".into()))?;
    let certification = certify_polynomial_conservation(inclusion, &cfg.material, eig, &CertifyOptions::default())?;
    let non_ellipsoidality = non_ellipsoidality_score(inclusion, &DensityPolynomial::Constant { c0: 1.0 }).ok();
    let pass = certification.pass;
    Ok(VerifyOutcome {
        certification,
        non_ellipsoidality,
        pass,
    })
}

/// 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Parser)]
#[command(
    name = "eshelby",
    version,
    about = "Construct and verify non-ellipsoidal inclusions with polynomial strain"
)]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Case {
    Omega1,
    Omega2,
    Custom,
}

#[derive(Debug, clap::Args)]
pub struct ConfigArgs {
    /// Bundled preset, or `custom` with --config.
    #[arg(long, value_enum)]
    pub case: Option<Case>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DensityArg {
    Constant,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Vtk,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the obstacle problem and write fields, regions and a summary.
    Construct {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-4)]
        eps_coincidence: f64,
    },
    /// Certify polynomial conservation for a region file (inclusion frame).
    Verify {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        region: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form Newtonian potential of a centred ellipsoid.
    Ellipsoid {
        #[arg(long, value_delimiter = ',', required = true)]
        axes: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        point: Vec<f64>,
        #[arg(long, value_enum, default_value = "quadratic")]
        density: DensityArg,
    },
    /// Validity, construction constraints and stretch factors of a material.
    Material {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Green function of a transversely isotropic material at a point.
    Green {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        point: Vec<f64>,
    },
    /// Convert a region CSV or a structured-points file.
    Export {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        format: ExportFormat,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self {
            code: EXIT_INPUT,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: EXIT_INPUT,
            message: e.to_string(),
        }
    }
}

fn input_err(msg: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_INPUT,
        message: msg.into(),
    }
}

fn read_file(path: &Path) -> std::result::Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| input_err(format!("{}: {e}", path.display())))
}

fn load_config(args: &ConfigArgs) -> std::result::Result<RunConfig, CliError> {
    match (args.case, &args.config) {
        (Some(Case::Omega1), None) => Ok(RunConfig::preset("omega1")?),
        (Some(Case::Omega2), None) => Ok(RunConfig::preset("omega2")?),
        (Some(Case::Custom) | None, Some(p)) => Ok(RunConfig::from_json(&read_file(p)?)?),
        (Some(Case::Custom) | None, None) => Err(input_err("--config is required unless --case names a preset")),
        (Some(_), Some(_)) => Err(input_err("--config can only be combined with --case custom")),
    }
}

/// A material either alone or as the `material` section of a run config.
fn load_material(args: &ConfigArgs) -> std::result::Result<ElasticTensor, CliError> {
    if let (None | Some(Case::Custom), Some(p)) = (args.case, &args.config) {
        let text = read_file(p)?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| input_err(format!("{}: {e}", p.display())))?;
        if value.get("material").is_some() {
            return Ok(RunConfig::from_json(&text)?.material);
        }
        return serde_json::from_value(value).map_err(|e| input_err(format!("material: {e}")));
    }
    Ok(load_config(args)?.material)
}

fn out_dir(out: &Option<PathBuf>, cfg: Option<&RunConfig>) -> std::result::Result<PathBuf, CliError> {
    let dir = out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.clone()))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| input_err(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_json(path: &Path, value: &impl Serialize) -> std::result::Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| input_err(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn create(path: &Path) -> std::result::Result<std::io::BufWriter<fs::File>, CliError> {
    Ok(std::io::BufWriter::new(fs::File::create(path)?))
}

fn point3(v: &[f64]) -> std::result::Result<Vector3<f64>, CliError> {
    match v {
        [a, b, c] => Ok(Vector3::new(*a, *b, *c)),
        _ => Err(input_err("expected three comma-separated numbers")),
    }
}

fn cmd_construct(
    cfg: &RunConfig,
    out: &Option<PathBuf>,
    eps: f64,
    w: &mut dyn Write,
) -> std::result::Result<i32, CliError> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(input_err(format!("--eps-coincidence must be non-negative, got {eps}")));
    }
    let dir = out_dir(out, Some(cfg))?;
    let c = construct(cfg, eps)?;
    c.v.write_vtk("V", create(&dir.join("v.vtk"))?)?;
    c.phi.write_vtk("phi", create(&dir.join("phi.vtk"))?)?;
    write_vtk_mask(&c.region, create(&dir.join("mask.vtk"))?)?;
    write_csv(&c.region, create(&dir.join("region.csv"))?)?;
    write_csv(&c.inclusion, create(&dir.join("inclusion.csv"))?)?;
    write_json(&dir.join("summary.json"), &c.summary)?;
    let s = &c.summary;
    writeln!(
        w,
        "iterations={} converged={} residual={}",
        s.iterations,
        s.converged,
        fmt17(s.last_update)
    )?;
    writeln!(
        w,
        "voxels={} components={} max_radius={} contained={}",
        s.voxel_count,
        s.components,
        fmt17(s.max_radius),
        s.contained
    )?;
    if let Some(note) = &s.note {
        writeln!(w, "note: {note}")?;
    }
    if !s.converged {
        return Ok(EXIT_NONCONVERGENCE);
    }
    Ok(EXIT_OK)
}

fn cmd_verify(
    cfg: &RunConfig,
    region: &Path,
    out: &Option<PathBuf>,
    w: &mut dyn Write,
) -> std::result::Result<i32, CliError> {
    let text = read_file(region)?;
    let inclusion = read_csv(&text, None)?;
    let dir = out_dir(out, Some(cfg))?;
    let outcome = verify_region(cfg, &inclusion)?;
    write_json(&dir.join("certification.json"), &outcome.certification)?;
    if let Some(ne) = &outcome.non_ellipsoidality {
        write_json(&dir.join("non_ellipsoidality.json"), ne)?;
    }
    let c = &outcome.certification;
    writeln!(
        w,
        "degree={} samples={} residual={} increment={} tol={}",
        c.degree,
        c.samples,
        fmt17(c.residual_degree_n),
        fmt17(c.incremental_energy),
        c.tol
    )?;
    if let Some(ne) = &outcome.non_ellipsoidality {
        writeln!(w, "non_ellipsoidality={}", fmt17(ne.score))?;
    }
    writeln!(w, "{}", if outcome.pass { "PASS" } else { "FAIL" })?;
    Ok(if outcome.pass { EXIT_OK } else { EXIT_VERIFY_FAIL })
}

fn cmd_ellipsoid(
    axes: &[f64],
    point: &[f64],
    density: DensityArg,
    w: &mut dyn Write,
) -> std::result::Result<i32, CliError> {
    let a = point3(axes)?;
    let x = point3(point)?;
    let pose = EllipsoidPose::centered(EllipsoidAxes::new(a[0], a[1], a[2])?);
    let rho = match density {
        DensityArg::Constant => DensityPolynomial::Constant { c0: 1.0 },
        DensityArg::Quadratic => DensityPolynomial::unit_quadratic(),
    };
    let f = ellipsoid_potential_closed_form(&pose, &rho)?;
    writeln!(w, "{}", fmt17(f(&x)))?;
    Ok(EXIT_OK)
}

fn cmd_material(c: &ElasticTensor, w: &mut dyn Write) -> std::result::Result<i32, CliError> {
    let validity = validate_elastic_tensor(c);
    writeln!(w, "class={}", c.class())?;
    writeln!(w, "positive_definite={}", validity.pass)?;
    if !validity.pass {
        writeln!(w, "violated={}", validity.violated.join("; "))?;
        return Ok(EXIT_INPUT);
    }
    let report = check_construction_constraints(c)?;
    for k in &report.checks {
        writeln!(
            w,
            "check {}: value={} satisfied={}",
            k.name,
            fmt17(k.value),
            k.satisfied
        )?;
    }
    writeln!(w, "construction_constraints={}", report.satisfied)?;
    match scale_factors(c) {
        Ok(sf) => writeln!(
            w,
            "scale_factors={}",
            serde_json::to_string(&sf).map_err(|e| input_err(e.to_string()))?
        )?,
        Err(e) => writeln!(w, "scale_factors=unavailable ({e})")?,
    }
    if let Ok(k) = ti_constants(c) {
        match k {
            TIGreenConstants::Degenerate { v, v3, .. } => {
                writeln!(w, "branch=degenerate")?;
                writeln!(w, "v={}", fmt17(v))?;
                writeln!(w, "v3={}", fmt17(v3))?;
            }
            TIGreenConstants::NonDegenerate { v, v3, .. } => {
                writeln!(w, "branch=non_degenerate")?;
                writeln!(w, "v1={}", fmt17(v[0]))?;
                writeln!(w, "v2={}", fmt17(v[1]))?;
                writeln!(w, "v3={}", fmt17(v3))?;
            }
        }
    }
    Ok(EXIT_OK)
}

fn cmd_green(c: &ElasticTensor, point: &[f64], w: &mut dyn Write) -> std::result::Result<i32, CliError> {
    let x = point3(point)?;
    let g = green_ti(c, &x)?;
    for i in 0..3 {
        writeln!(w, "{} {} {}", fmt17(g[(i, 0)]), fmt17(g[(i, 1)]), fmt17(g[(i, 2)]))?;
    }
    Ok(EXIT_OK)
}

fn cmd_export(input: &Path, format: ExportFormat, out: &Path, w: &mut dyn Write) -> std::result::Result<i32, CliError> {
    let text = read_file(input)?;
    fs::create_dir_all(out)?;
    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("export")
        .to_string();
    if text.starts_with("# vtk") {
        let vtk = read_vtk_points(&text)?;
        let region = VoxelRegion::from_fn(vtk.spacing, vtk.origin, vtk.dims, |_| false)?;
        let mut region = region;
        let [nx, ny, _] = vtk.dims;
        for (l, v) in vtk.values.iter().enumerate() {
            if *v != 0.0 {
                region.set(l % nx, (l / nx) % ny, l / (nx * ny), true);
            }
        }
        match format {
            ExportFormat::Csv => {
                let path = out.join(format!("{stem}.csv"));
                write_csv(&region, create(&path)?)?;
                writeln!(w, "wrote {} ({} voxels)", path.display(), region.count())?;
            }
            ExportFormat::Vtk => {
                let path = out.join(format!("{stem}.vtk"));
                crate::fbsolver::write_vtk_points(
                    create(&path)?,
                    &vtk.name,
                    vtk.dims,
                    vtk.origin,
                    vtk.spacing,
                    |i, j, k| vtk.values[i + nx * (j + ny * k)],
                )?;
                writeln!(w, "wrote {}", path.display())?;
            }
        }
    } else {
        let region = read_csv(&text, None)?;
        let path = match format {
            ExportFormat::Csv => {
                let p = out.join(format!("{stem}.csv"));
                write_csv(&region, create(&p)?)?;
                p
            }
            ExportFormat::Vtk => {
                let p = out.join(format!("{stem}.vtk"));
                write_vtk_mask(&region, create(&p)?)?;
                p
            }
        };
        writeln!(w, "wrote {} ({} voxels)", path.display(), region.count())?;
    }
    Ok(EXIT_OK)
}

fn dispatch(cli: &Cli, w: &mut dyn Write) -> std::result::Result<i32, CliError> {
    match &cli.command {
        Command::Construct {
            cfg,
            out,
            eps_coincidence,
        } => cmd_construct(&load_config(cfg)?, out, *eps_coincidence, w),
        Command::Verify { cfg, region, out } => cmd_verify(&load_config(cfg)?, region, out, w),
        Command::Ellipsoid { axes, point, density } => cmd_ellipsoid(axes, point, *density, w),
        Command::Material { cfg } => cmd_material(&load_material(cfg)?, w),
        Command::Green { cfg, point } => cmd_green(&load_material(cfg)?, point, w),
        Command::Export { input, format, out } => cmd_export(input, *format, out, w),
    }
}

/// Parses `args` (including the program name), runs the command, writes
/// results to `out` and diagnostics to `err`, and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = if code == EXIT_OK {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            let _ = writeln!(err, "error: --threads must be positive");
            return EXIT_INPUT;
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("eshelby").chain(args.iter().copied()), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn presets_parse_and_validate() {
        for name in ["omega1", "omega2"] {
            let cfg = RunConfig::preset(name).unwrap();
            assert_eq!(cfg.grid.n, 64);
            assert_eq!(cfg.grid.boundary, BoundaryMode::FreeSpace);
            assert!(cfg.eigenstrain.is_some());
        }
        let c1 = RunConfig::preset("omega1").unwrap();
        assert_eq!(default_stretch(&c1.material).unwrap(), [1.0, 1.0, 0.5]);
        let c2 = RunConfig::preset("omega2").unwrap();
        let d = default_stretch(&c2.material).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-15 && (d[1] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn config_errors_name_the_field() {
        let bad = OMEGA1.replace("\"n\": 64", "\"n\": \"many\"");
        let e = RunConfig::from_json(&bad).unwrap_err().to_string();
        assert!(e.contains("grid.n"), "{e}");
        let small = OMEGA1.replace("\"n\": 64", "\"n\": 8");
        let e = RunConfig::from_json(&small).unwrap_err().to_string();
        assert!(e.contains("grid.n"), "{e}");
        let omega = OMEGA1.replace("\"omega\": 1.5", "\"omega\": 2.5");
        assert!(RunConfig::from_json(&omega)
            .unwrap_err()
            .to_string()
            .contains("grid.omega"));
    }

    #[test]
    fn ellipsoid_sphere_centre() {
        let (code, out, _) = run_capture(&[
            "ellipsoid",
            "--axes",
            "1,1,1",
            "--point",
            "0,0,0",
            "--density",
            "quadratic",
        ]);
        assert_eq!(code, 0);
        assert!((out.trim().parse::<f64>().unwrap() - 0.25).abs() < 1e-14, "{out}");
    }

    #[test]
    fn green_at_origin_is_input_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ti.json");
        fs::write(&p, include_str!("../presets/ti_degenerate.json")).unwrap();
        let (code, _, err) = run_capture(&["green", "--config", p.to_str().unwrap(), "--point", "0,0,0"]);
        assert_eq!(code, EXIT_INPUT, "{err}");
        let (code, out, _) = run_capture(&["green", "--config", p.to_str().unwrap(), "--point", "0.3,-0.5,0.8"]);
        assert_eq!(code, 0);
        assert_eq!(out.lines().count(), 3);
    }

    #[test]
    fn material_reports_degenerate_branch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ti.json");
        fs::write(&p, include_str!("../presets/ti_degenerate.json")).unwrap();
        let (code, out, _) = run_capture(&["material", "--config", p.to_str().unwrap()]);
        assert_eq!(code, 0);
        assert!(out.contains("branch=degenerate"), "{out}");
        let v: f64 = out.lines().find_map(|l| l.strip_prefix("v=")).unwrap().parse().unwrap();
        assert!((v - 2.0).abs() < 1e-15);
    }

    #[test]
    fn conflicting_or_missing_config() {
        assert_eq!(run_capture(&["construct"]).0, EXIT_INPUT);
        assert_eq!(
            run_capture(&["construct", "--case", "omega1", "--config", "x.json"]).0,
            EXIT_INPUT
        );
        assert_eq!(
            run_capture(&["construct", "--config", "/nonexistent/x.json"]).0,
            EXIT_INPUT
        );
        assert_eq!(run_capture(&["bogus"]).0, EXIT_INPUT);
    }

    #[test]
    fn flat_obstacle_gives_empty_region() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = r#"{
            "material": { "symmetry_class": "isotropic", "lambda": 1.0, "mu": 1.0 },
            "obstacle": { "family": "constant", "value": -1.0 },
            "grid": { "n": 16, "L": 1.0 }
        }"#;
        let p = dir.path().join("flat.json");
        fs::write(&p, cfg).unwrap();
        let out = dir.path().join("out");
        let (code, text, err) = run_capture(&[
            "construct",
            "--config",
            p.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{err}");
        assert!(text.contains("empty coincidence set"));
        for f in [
            "v.vtk",
            "phi.vtk",
            "mask.vtk",
            "region.csv",
            "inclusion.csv",
            "summary.json",
        ] {
            assert!(out.join(f).exists(), "{f}");
        }
    }

    #[test]
    fn verify_missing_region_file() {
        let (code, _, err) = run_capture(&["verify", "--case", "omega1", "--region", "/nonexistent/r.csv"]);
        assert_eq!(code, EXIT_INPUT, "{err}");
    }

    #[test]
    fn nonconvergence_exit_code() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = r#"{
            "material": { "symmetry_class": "isotropic", "lambda": 1.0, "mu": 1.0 },
            "obstacle": { "family": "quartic", "C": 0.027777777777777776 },
            "grid": { "n": 16, "L": 1.2, "max_iters": 2 }
        }"#;
        let p = dir.path().join("q.json");
        fs::write(&p, cfg).unwrap();
        let out = dir.path().join("out");
        let (code, _, _) = run_capture(&[
            "construct",
            "--config",
            p.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_NONCONVERGENCE);
    }
}
