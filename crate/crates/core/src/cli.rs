//! The `ctgrad` command-line front end.
//!
//! Every subcommand reads the same TOML pipeline config (`--config`).
//! Exit codes: 0 on success, 1 on I/O failure, 2 on invalid input.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Deserialize;

use crate::artifacts::{
    add_detector_jitter, add_gantry_motion_blur, add_gaussian_noise, add_poisson_noise,
    add_ring_artifact, DetectorAxis, PoissonMode, RingMode,
};
use crate::error::{Error, Result};
use crate::filters::{fbp, fbp_backproject_stage, fbp_filter_stage, FilterKind};
use crate::geometry::{
    circular_trajectory_2d, circular_trajectory_3d, load_projection_matrices,
    save_projection_matrices, Geometry, GeometryCone3D, GeometryFan2D, GeometryParallel2D,
};
use crate::grids::{read_sinogram, read_volume, write_sinogram, write_volume, Sinogram, VolumeGeometry};
use crate::phantoms::{shepp_logan_2d, shepp_logan_3d};
use crate::projectors::{forward_project, SamplingConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Parallel2d,
    Fan2d,
    Cone3d,
}

fn default_step_scale() -> f64 {
    0.5
}

fn default_filter() -> FilterKind {
    FilterKind::Ramp
}

/// Declarative pipeline description; key names follow the usual Python
/// parameter dictionary (`volume_shape`, `sdd`, ...).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub geometry_kind: GeometryKind,
    pub volume_shape: Vec<usize>,
    pub volume_spacing: Vec<f64>,
    /// `[width]` for 2D geometries, `[rows, cols]` for cone beam
    pub detector_shape: Vec<usize>,
    pub detector_spacing: Vec<f64>,
    pub number_of_projections: usize,
    pub angular_range: f64,
    pub sdd: Option<f64>,
    pub sid: Option<f64>,
    #[serde(default = "default_filter")]
    pub filter_kind: FilterKind,
    #[serde(default = "default_step_scale")]
    pub step_scale: f64,
    /// projection-matrix JSON, relative to the config file
    pub matrices_path: Option<PathBuf>,
    #[serde(default)]
    pub artifacts: Vec<ArtifactSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RingKind {
    Zero,
    Scale,
}

/// One step of the `simulate` chain.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArtifactSpec {
    Jitter {
        max_shift_px: usize,
        #[serde(default = "default_axis")]
        axis: DetectorAxis,
        seed: u64,
    },
    Poisson {
        i0: f64,
        #[serde(default = "default_poisson_mode")]
        mode: PoissonMode,
        seed: u64,
    },
    Gaussian {
        #[serde(default)]
        mean: f64,
        std: f64,
        seed: u64,
    },
    Ring {
        columns: Vec<usize>,
        projection_start: usize,
        projection_end: usize,
        mode: RingKind,
        factor: Option<f64>,
    },
    GantryBlur {
        kernel_len_px: usize,
    },
}

fn default_axis() -> DetectorAxis {
    DetectorAxis::U
}

fn default_poisson_mode() -> PoissonMode {
    PoissonMode::Transmission
}

impl ArtifactSpec {
    pub fn apply(&self, sino: &Sinogram, geom: &Geometry) -> Result<Sinogram> {
        match self {
            Self::Jitter {
                max_shift_px,
                axis,
                seed,
            } => add_detector_jitter(sino, *max_shift_px, *axis, *seed),
            Self::Poisson { i0, mode, seed } => add_poisson_noise(sino, *i0, *mode, *seed),
            Self::Gaussian { mean, std, seed } => add_gaussian_noise(sino, *mean, *std, *seed),
            Self::Ring {
                columns,
                projection_start,
                projection_end,
                mode,
                factor,
            } => {
                let mode = match (mode, factor) {
                    (RingKind::Zero, _) => RingMode::Zero,
                    (RingKind::Scale, Some(f)) => RingMode::Scale(*f),
                    (RingKind::Scale, None) => {
                        return Err(Error::invalid("artifacts.ring: mode \"scale\" needs `factor`"))
                    }
                };
                add_ring_artifact(sino, columns, *projection_start..*projection_end, mode)
            }
            Self::GantryBlur { kernel_len_px } => add_gantry_motion_blur(sino, geom, *kernel_len_px),
        }
    }
}

fn field<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::InvalidArgument(m) | Error::DegenerateGeometry(m) => {
            Error::InvalidArgument(format!("{name}: {m}"))
        }
        other => other,
    })
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config: {}", e.message())))
    }

    /// Reads a config file; relative `matrices_path` values are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(m) = &cfg.matrices_path {
            if m.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.matrices_path = Some(base.join(m));
            }
        }
        Ok(cfg)
    }

    pub fn sampling(&self) -> Result<SamplingConfig> {
        field("step_scale", SamplingConfig::new(self.step_scale))
    }

    pub fn volume_geometry(&self) -> Result<VolumeGeometry> {
        let want = if self.geometry_kind == GeometryKind::Cone3d { 3 } else { 2 };
        if self.volume_shape.len() != want {
            return Err(Error::invalid(format!(
                "volume_shape: {:?} needs {want} entries for {:?}",
                self.volume_shape, self.geometry_kind
            )));
        }
        field(
            "volume_shape/volume_spacing",
            VolumeGeometry::new(self.volume_shape.clone(), self.volume_spacing.clone()),
        )
    }

    fn distances(&self) -> Result<(f64, f64)> {
        match (self.sdd, self.sid) {
            (Some(sdd), Some(sid)) => Ok((sdd, sid)),
            (None, _) => Err(Error::invalid("sdd: required for divergent-beam geometries")),
            (_, None) => Err(Error::invalid("sid: required for divergent-beam geometries")),
        }
    }

    fn detector_1d(&self) -> Result<(usize, f64)> {
        match (self.detector_shape.as_slice(), self.detector_spacing.as_slice()) {
            ([w], [s]) => Ok((*w, *s)),
            _ => Err(Error::invalid(format!(
                "detector_shape/detector_spacing: 2D geometries need one entry each, got {:?} / {:?}",
                self.detector_shape, self.detector_spacing
            ))),
        }
    }

    fn detector_2d(&self) -> Result<([usize; 2], [f64; 2])> {
        match (self.detector_shape.as_slice(), self.detector_spacing.as_slice()) {
            ([r, c], [dv, du]) => Ok(([*r, *c], [*dv, *du])),
            _ => Err(Error::invalid(format!(
                "detector_shape/detector_spacing: cone3d needs [rows, cols] each, got {:?} / {:?}",
                self.detector_shape, self.detector_spacing
            ))),
        }
    }

    fn angles(&self) -> Result<Vec<f64>> {
        if !(self.angular_range > 0.0 && self.angular_range.is_finite()) {
            return Err(Error::invalid("angular_range: must be positive"));
        }
        field(
            "number_of_projections",
            circular_trajectory_2d(self.number_of_projections, self.angular_range),
        )
    }

    pub fn geometry(&self) -> Result<Geometry> {
        let vol = self.volume_geometry()?;
        match self.geometry_kind {
            GeometryKind::Parallel2d => {
                let (w, s) = self.detector_1d()?;
                field(
                    "detector_shape/detector_spacing",
                    GeometryParallel2D::new(vol, w, s, self.angles()?),
                )
                .map(Into::into)
            }
            GeometryKind::Fan2d => {
                let (w, s) = self.detector_1d()?;
                let (sdd, sid) = self.distances()?;
                field("sdd/sid", GeometryFan2D::new(vol, w, s, self.angles()?, sdd, sid))
                    .map(Into::into)
            }
            GeometryKind::Cone3d => {
                let (shape, spacing) = self.detector_2d()?;
                let (sdd, sid) = self.distances()?;
                let matrices = match &self.matrices_path {
                    Some(p) => {
                        let m = load_projection_matrices(p)?;
                        if m.len() != self.number_of_projections {
                            return Err(Error::invalid(format!(
                                "number_of_projections: {} but {} holds {} matrices",
                                self.number_of_projections,
                                p.display(),
                                m.len()
                            )));
                        }
                        m
                    }
                    None => field(
                        "sdd/sid",
                        circular_trajectory_3d(
                            self.number_of_projections,
                            self.angular_range,
                            sdd,
                            sid,
                            shape,
                            spacing,
                        ),
                    )?,
                };
                field(
                    "geometry",
                    GeometryCone3D::new(vol, shape, spacing, matrices, sdd, sid),
                )
                .map(Into::into)
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ctgrad", version, about = "CT projection, reconstruction and artifact simulation")]
struct Cli {
    /// pipeline config (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the Shepp-Logan phantom of the configured volume
    Phantom { out: PathBuf },
    /// Forward-project a volume
    Project { volume: PathBuf, out: PathBuf },
    /// Pre-weight and filter a sinogram (first FBP stage)
    Filter { sinogram: PathBuf, out: PathBuf },
    /// Weighted, scaled backprojection of a filtered sinogram (second FBP stage)
    Backproject { sinogram: PathBuf, out: PathBuf },
    /// Full FBP / FDK reconstruction
    Fbp { sinogram: PathBuf, out: PathBuf },
    /// Apply the configured artifact chain
    Simulate { sinogram: PathBuf, out: PathBuf },
    /// Export projection matrices as JSON
    Trajectory { out: PathBuf },
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } | Error::MissingFile(_) => EXIT_IO,
        _ => EXIT_INVALID,
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code; errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    if cli.verbose {
        let _ = env_logger::Builder::new()
            .filter_level(log::LevelFilter::Debug)
            .try_init();
    }
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return EXIT_INVALID;
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::invalid("--config is required"))?;
    let cfg = PipelineConfig::load(path)?;
    log::debug!("config {}: {:?}", path.display(), cfg);
    // every command needs a complete, consistent configuration
    cfg.geometry()?;
    match &cli.command {
        Command::Phantom { out } => cmd_phantom(&cfg, out),
        Command::Project { volume, out } => cmd_project(&cfg, volume, out),
        Command::Filter { sinogram, out } => cmd_filter(&cfg, sinogram, out),
        Command::Backproject { sinogram, out } => cmd_backproject(&cfg, sinogram, out),
        Command::Fbp { sinogram, out } => cmd_fbp(&cfg, sinogram, out),
        Command::Simulate { sinogram, out } => cmd_simulate(&cfg, sinogram, out),
        Command::Trajectory { out } => cmd_trajectory(&cfg, out),
    }
}

pub fn cmd_phantom(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let vg = cfg.volume_geometry()?;
    let vol = field(
        "volume_shape",
        if vg.ndim() == 3 {
            shepp_logan_3d(&vg)
        } else {
            shepp_logan_2d(&vg)
        },
    )?;
    log::info!("phantom {:?} -> {}", vg.shape, out.display());
    write_volume(&vol, out)
}

pub fn cmd_project(cfg: &PipelineConfig, volume: &Path, out: &Path) -> Result<()> {
    let geom = cfg.geometry()?;
    let sampling = cfg.sampling()?;
    let vol = read_volume(volume)?;
    geom.check_volume(&vol)?;
    let t = std::time::Instant::now();
    let sino = forward_project(&vol, &geom, &sampling)?;
    log::info!("forward projection took {:.2?}", t.elapsed());
    write_sinogram(&sino, out)
}

fn load_checked_sinogram(geom: &Geometry, path: &Path) -> Result<Sinogram> {
    let sino = read_sinogram(path)?;
    geom.check_sinogram(&sino)?;
    Ok(sino)
}

pub fn cmd_filter(cfg: &PipelineConfig, sinogram: &Path, out: &Path) -> Result<()> {
    let geom = cfg.geometry()?;
    let sino = load_checked_sinogram(&geom, sinogram)?;
    write_sinogram(&fbp_filter_stage(&sino, &geom, cfg.filter_kind)?, out)
}

pub fn cmd_backproject(cfg: &PipelineConfig, sinogram: &Path, out: &Path) -> Result<()> {
    let geom = cfg.geometry()?;
    let sino = load_checked_sinogram(&geom, sinogram)?;
    write_volume(&fbp_backproject_stage(&sino, &geom)?, out)
}

pub fn cmd_fbp(cfg: &PipelineConfig, sinogram: &Path, out: &Path) -> Result<()> {
    let geom = cfg.geometry()?;
    let sino = load_checked_sinogram(&geom, sinogram)?;
    let t = std::time::Instant::now();
    let vol = fbp(&sino, &geom, cfg.filter_kind)?;
    log::info!("reconstruction took {:.2?}", t.elapsed());
    write_volume(&vol, out)
}

pub fn cmd_simulate(cfg: &PipelineConfig, sinogram: &Path, out: &Path) -> Result<()> {
    let geom = cfg.geometry()?;
    let mut sino = load_checked_sinogram(&geom, sinogram)?;
    for (i, a) in cfg.artifacts.iter().enumerate() {
        log::info!("artifact {i}: {a:?}");
        sino = a
            .apply(&sino, &geom)
            .map_err(|e| match e {
                Error::InvalidArgument(m) => Error::InvalidArgument(format!("artifacts[{i}]: {m}")),
                other => other,
            })?;
    }
    write_sinogram(&sino, out)
}

pub fn cmd_trajectory(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    match cfg.geometry()? {
        Geometry::Cone3D(g) => save_projection_matrices(out, g.matrices()),
        _ => Err(Error::invalid(
            "geometry_kind: projection matrices exist only for cone3d",
        )),
    }
}
