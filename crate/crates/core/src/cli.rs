//! The `snowfold` command line: generate, fold, project, verify, pullback.
//!
//! Every command is a library function taking a [`RunConfig`]; the clap layer
//! only merges flags over an optional TOML config file and maps errors to
//! exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | verification failed, or any other error |
//! | 2 | scale-window / configuration error |
//! | 3 | space and map sizes differ |
//! | 4 | input file missing |
//! | 5 | exact pullback requested above the size cap |

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::covers::{build_hierarchy, CoverHierarchy, CoverStrategy, HierarchyParams};
use crate::embedding::{build_folding_map, select_scale_ratio, FoldingMap, PointMap};
use crate::error::{Error, Result};
use crate::io;
use crate::lightness::{lipschitz_light_report, LightnessReport, ProbeSettings};
use crate::metric::{validate_metric, FiniteMetricSpace, Metric};
use crate::pullback::{
    distortion_profile, factorization_check, pullback_metric, DistortionProfile, FactorizationReport,
    ProfileMode, ProfileSettings, PullbackMetric, PullbackMode,
};
use crate::spaces::{generate, SpaceKind, SpaceRecipe};
use crate::ARTIFACT_VERSION;

/// Default output directory when neither a flag, `SNOWFOLD_OUT` nor the
/// config file names one.
pub const DEFAULT_OUT_DIR: &str = "out";

/// Everything that determines a run. Serialized into every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub recipe: Option<SpaceRecipe>,
    pub space_path: Option<PathBuf>,
    pub epsilon: f64,
    /// Scale ratio; selected from `epsilon` and the cover constant when absent.
    pub r: Option<f64>,
    /// Cover constant used for scale-ratio selection; defaults to the
    /// strategy's guaranteed constant.
    pub c: Option<f64>,
    /// Cover builder; absent means interval covers for one-dimensional
    /// coordinates and greedy covers otherwise.
    pub strategy: Option<CoverStrategy>,
    pub base_point: usize,
    pub tail_tol: f64,
    pub probe: ProbeSettings,
    pub ceiling: Option<f64>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub emit_plots: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            recipe: None,
            space_path: None,
            epsilon: 0.5,
            r: None,
            c: None,
            strategy: None,
            base_point: 0,
            tail_tol: 1e-3,
            probe: ProbeSettings::default(),
            ceiling: None,
            out_dir: PathBuf::from(DEFAULT_OUT_DIR),
            seed: 0,
            emit_plots: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parameter(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// The space named by `space_path`, or else generated from `recipe`.
    pub fn load_space(&self) -> Result<(FiniteMetricSpace, Option<SpaceRecipe>)> {
        match (&self.space_path, &self.recipe) {
            (Some(path), _) => io::load_space(path),
            (None, Some(recipe)) => Ok((generate(recipe)?, Some(recipe.clone()))),
            (None, None) => Err(Error::parameter("no input space: pass a space file or set a recipe in the config")),
        }
    }

    fn resolved_strategy(&self, space: &FiniteMetricSpace) -> CoverStrategy {
        self.strategy.unwrap_or_else(|| {
            let one_dim = space.coords().is_some_and(|c| c.iter().all(|row| row.len() == 1));
            if one_dim {
                CoverStrategy::Interval
            } else {
                CoverStrategy::Greedy
            }
        })
    }
}

/// Maps an error to its documented exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Configuration(_) => 2,
        Error::Mismatch(_) => 3,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 4,
        Error::SizeCap(_) => 5,
        _ => 1,
    }
}

fn file_stem(label: &str) -> String {
    let stem: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    if stem.is_empty() {
        "space".into()
    } else {
        stem
    }
}

fn stem_of(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("space");
    let name = name.strip_suffix(".json").unwrap_or(name);
    let name = name.strip_suffix(".map").unwrap_or(name);
    file_stem(name)
}

/// Writes the generated space to `out` (default `<out_dir>/<label>.json`).
pub fn cmd_generate(recipe: &SpaceRecipe, out: Option<&Path>, out_dir: &Path) -> Result<PathBuf> {
    let space = generate(recipe)?;
    let path = out.map_or_else(|| out_dir.join(format!("{}.json", file_stem(space.label()))), Path::to_path_buf);
    io::save_space(&path, &space, Some(recipe.clone()))?;
    Ok(path)
}

/// The map stored in a map file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapKind {
    Folding(FoldingMap),
    Projection { axis: usize, values: PointMap },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapFile {
    pub artifact_version: String,
    pub config: RunConfig,
    pub space_label: String,
    /// Snowflake exponent of the domain the map is measured on.
    pub epsilon: f64,
    pub map: MapKind,
}

impl MapFile {
    pub fn values(&self) -> &PointMap {
        match &self.map {
            MapKind::Folding(f) => &f.values,
            MapKind::Projection { values, .. } => values,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyFile {
    pub artifact_version: String,
    pub config: RunConfig,
    pub space_label: String,
    pub hierarchy: CoverHierarchy,
}

#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub map_path: PathBuf,
    pub csv_path: PathBuf,
    pub hierarchy_path: PathBuf,
    pub map: FoldingMap,
    pub strategy: CoverStrategy,
}

impl fmt::Display for FoldOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.map;
        let window = match m.window {
            Some([lo, hi]) => format!("[{lo}, {hi}]"),
            None => "empty".into(),
        };
        writeln!(f, "cover strategy        {:?}", self.strategy)?;
        writeln!(f, "scale ratio r         {}", m.r)?;
        writeln!(f, "scale window          {window}")?;
        writeln!(f, "achieved c            {:.6}", m.global_c)?;
        writeln!(f, "colors K              {}", m.global_k)?;
        writeln!(f, "target dimension      {}", m.target_dim)?;
        writeln!(f, "tail bound            {:.3e}", m.tail_bound)?;
        writeln!(f, "certified Lipschitz   {:.6}", m.certified_lip_bound)?;
        writeln!(f, "map                   {}", self.map_path.display())?;
        writeln!(f, "csv                   {}", self.csv_path.display())?;
        write!(f, "hierarchy             {}", self.hierarchy_path.display())
    }
}

/// Builds the cover hierarchy and folding map and writes map JSON, map CSV
/// and hierarchy JSON into the output directory.
pub fn cmd_fold(config: &RunConfig) -> Result<FoldOutcome> {
    let eps = config.epsilon;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::parameter(format!(
            "folding needs a proper snowflake exponent 0 < epsilon < 1, got {eps}"
        )));
    }
    let (space, _) = config.load_space()?;
    let strategy = config.resolved_strategy(&space);
    let c = config.c.unwrap_or(strategy.guaranteed_c());
    let r = match config.r {
        Some(r) => r,
        None => select_scale_ratio(eps, c)?,
    };
    let hierarchy = build_hierarchy(
        &space,
        HierarchyParams { r, epsilon: eps, tail_tol: config.tail_tol, strategy },
    )?;
    let map = build_folding_map(&space, &hierarchy, config.base_point)?;

    let stem = config.space_path.as_deref().map_or_else(|| file_stem(space.label()), stem_of);
    let map_path = config.out_dir.join(format!("{stem}.map.json"));
    let csv_path = config.out_dir.join(format!("{stem}.map.csv"));
    let hierarchy_path = config.out_dir.join(format!("{stem}.hierarchy.json"));
    io::write_text(&csv_path, &io::map_csv(&map.values))?;
    io::write_json(
        &hierarchy_path,
        &HierarchyFile {
            artifact_version: ARTIFACT_VERSION.into(),
            config: config.clone(),
            space_label: space.label().into(),
            hierarchy,
        },
    )?;
    io::write_json(
        &map_path,
        &MapFile {
            artifact_version: ARTIFACT_VERSION.into(),
            config: config.clone(),
            space_label: space.label().into(),
            epsilon: eps,
            map: MapKind::Folding(map.clone()),
        },
    )?;
    Ok(FoldOutcome { map_path, csv_path, hierarchy_path, map, strategy })
}

/// Writes the projection of the space's coordinates onto `axis` as a map
/// file, for use as a control in `verify`.
pub fn cmd_project(config: &RunConfig, axis: usize) -> Result<PathBuf> {
    let (space, _) = config.load_space()?;
    let values = PointMap::projection(&space, axis)?;
    let stem = config.space_path.as_deref().map_or_else(|| file_stem(space.label()), stem_of);
    let path = config.out_dir.join(format!("{stem}.projection{axis}.map.json"));
    io::write_json(
        &path,
        &MapFile {
            artifact_version: ARTIFACT_VERSION.into(),
            config: config.clone(),
            space_label: space.label().into(),
            epsilon: config.epsilon,
            map: MapKind::Projection { axis, values },
        },
    )?;
    Ok(path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub artifact_version: String,
    pub config: RunConfig,
    pub space_label: String,
    pub points: usize,
    pub epsilon: f64,
    pub certified_lip_bound: Option<f64>,
    pub lightness: LightnessReport,
}

#[derive(Clone, Debug)]
pub struct VerifyOutcome {
    pub report_path: PathBuf,
    pub plot_path: Option<PathBuf>,
    pub report: VerifyReport,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.report.lightness.pass
    }
}

impl fmt::Display for VerifyOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = &self.report.lightness;
        let pair = l.lip_witness.map_or("-".into(), |[x, y]| format!("({x}, {y})"));
        let light = l.light_witness.as_ref().map_or("-".into(), |w| {
            format!("r = {:.6}, centre {}, {} points", w.radius, w.center, w.component.len())
        });
        writeln!(f, "{:<22}{:>14}  witness", "constant", "value")?;
        writeln!(f, "{:<22}{:>14.6}  {pair}", "Lipschitz", l.lip_constant)?;
        if let Some(bound) = self.report.certified_lip_bound {
            writeln!(f, "{:<22}{:>14.6}", "  certified bound", bound)?;
        }
        writeln!(f, "{:<22}{:>14.6}  {light}", "lightness (probes)", l.light_constant)?;
        writeln!(
            f,
            "{:<22}  [{:.6}, {:.6}]",
            "  true constant in", l.light_true_bounds[0], l.light_true_bounds[1]
        )?;
        writeln!(f, "{:<22}{:>14}", "probe radii", l.probe_radii.len())?;
        let ceiling = l.ceiling.map_or("none".into(), |c| format!("{c}"));
        writeln!(f, "{:<22}{:>14}  {}", "ceiling", ceiling, if l.pass { "PASS" } else { "FAIL" })?;
        write!(f, "report                {}", self.report_path.display())
    }
}

fn load_pair(space_path: &Path, map_path: &Path) -> Result<(FiniteMetricSpace, MapFile)> {
    let (space, _) = io::load_space(space_path)?;
    let map: MapFile = io::read_json(map_path)?;
    if map.values().len() != space.len() {
        return Err(Error::Mismatch(format!(
            "{} has {} points but {} maps {} points",
            space_path.display(),
            space.len(),
            map_path.display(),
            map.values().len()
        )));
    }
    Ok((space, map))
}

/// Measures the Lipschitz and lightness constants of a stored map on the
/// snowflaked space, writes the report (and an SVG scatter when requested and
/// the target has dimension at most two).
pub fn cmd_verify(space_path: &Path, map_path: &Path, config: &RunConfig) -> Result<VerifyOutcome> {
    let (space, map) = load_pair(space_path, map_path)?;
    let domain = space.snowflake(map.epsilon)?;
    let values = map.values();
    let lightness = lipschitz_light_report(values, &domain, &config.probe, config.ceiling)?;
    let certified_lip_bound = match &map.map {
        MapKind::Folding(f) => Some(f.certified_lip_bound),
        MapKind::Projection { .. } => None,
    };
    let stem = stem_of(map_path);
    let report_path = config.out_dir.join(format!("{stem}.verify.json"));
    let report = VerifyReport {
        artifact_version: ARTIFACT_VERSION.into(),
        config: config.clone(),
        space_label: space.label().into(),
        points: space.len(),
        epsilon: map.epsilon,
        certified_lip_bound,
        lightness,
    };
    io::write_json(&report_path, &report)?;
    let plot_path = if config.emit_plots && values.dim <= 2 {
        let path = config.out_dir.join(format!("{stem}.svg"));
        io::write_text(&path, &io::svg_scatter(values, space.label())?)?;
        Some(path)
    } else {
        None
    };
    Ok(VerifyOutcome { report_path, plot_path, report })
}

/// What the identity `(X, d)` is compared against in the distortion profile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProfileTarget {
    /// `(X, d_f)`.
    #[default]
    Pullback,
    /// The image distances `|f(x) - f(y)|`.
    Values,
    /// `(X, d^eps)` with the map file's exponent.
    Snowflake,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PullbackOptions {
    pub bounds: bool,
    pub mode: ProfileMode,
    pub target: ProfileTarget,
    pub max_samples: usize,
}

impl Default for PullbackOptions {
    fn default() -> Self {
        Self {
            bounds: false,
            mode: ProfileMode::Qs,
            target: ProfileTarget::Pullback,
            max_samples: ProfileSettings::default().max_samples,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PullbackReport {
    pub artifact_version: String,
    pub config: RunConfig,
    pub options: PullbackOptions,
    pub space_label: String,
    pub metric_valid: bool,
    pub factorization: Option<FactorizationReport>,
    pub pullback: PullbackMetric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub artifact_version: String,
    pub config: RunConfig,
    pub options: PullbackOptions,
    pub space_label: String,
    pub profile: DistortionProfile,
}

#[derive(Clone, Debug)]
pub struct PullbackOutcome {
    pub pullback_path: PathBuf,
    pub csv_path: PathBuf,
    pub profile_path: PathBuf,
    pub report: PullbackReport,
    pub profile: DistortionProfile,
}

impl fmt::Display for PullbackOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.report;
        writeln!(f, "mode                  {:?}", r.pullback.mode)?;
        writeln!(f, "metric valid          {}", r.metric_valid)?;
        if let Some(fc) = &r.factorization {
            writeln!(f, "connected sets        {}", fc.connected_sets)?;
            writeln!(f, "max diameter gap      {:.3e}", fc.max_diameter_gap)?;
            writeln!(f, "turning constant      {:.6}", fc.turning_constant)?;
            writeln!(f, "factorization         {}", if fc.passed() { "holds" } else { "FAILS" })?;
        }
        writeln!(
            f,
            "profile               {:?}, {} samples, {} degenerate skipped",
            self.profile.mode, self.profile.samples, self.profile.skipped_degenerate
        )?;
        writeln!(f, "pullback              {}", self.pullback_path.display())?;
        writeln!(f, "matrix                {}", self.csv_path.display())?;
        write!(f, "profile report        {}", self.profile_path.display())
    }
}

/// Computes the pullback metric of a stored map (exact, or bounds with
/// `options.bounds`), checks the factorization in exact mode and writes the
/// distortion profile of the identity against the chosen target.
pub fn cmd_pullback(
    space_path: &Path,
    map_path: &Path,
    config: &RunConfig,
    options: &PullbackOptions,
) -> Result<PullbackOutcome> {
    let (space, map) = load_pair(space_path, map_path)?;
    let values = map.values();
    let pullback = pullback_metric(&space, values, options.bounds)?;
    let factorization = match pullback.mode {
        PullbackMode::Exact => Some(factorization_check(&space, values)?),
        PullbackMode::Bounds => None,
    };
    let settings = ProfileSettings { max_samples: options.max_samples, seed: config.seed };
    let connected = Some(&space);
    let profile = match options.target {
        ProfileTarget::Pullback => distortion_profile(&space, &pullback, options.mode, connected, &settings)?,
        ProfileTarget::Values => distortion_profile(&space, values, options.mode, connected, &settings)?,
        ProfileTarget::Snowflake => {
            let snow = space.snowflake(map.epsilon)?;
            distortion_profile(&space, &snow, options.mode, connected, &settings)?
        }
    };

    let stem = stem_of(map_path);
    let pullback_path = config.out_dir.join(format!("{stem}.pullback.json"));
    let csv_path = config.out_dir.join(format!("{stem}.pullback.csv"));
    let profile_path = config.out_dir.join(format!("{stem}.profile.json"));
    let report = PullbackReport {
        artifact_version: ARTIFACT_VERSION.into(),
        config: config.clone(),
        options: options.clone(),
        space_label: space.label().into(),
        metric_valid: validate_metric(&pullback).is_valid(),
        factorization,
        pullback,
    };
    io::write_json(&pullback_path, &report)?;
    io::write_text(&csv_path, &io::matrix_csv(&report.pullback.distances))?;
    io::write_json(
        &profile_path,
        &ProfileReport {
            artifact_version: ARTIFACT_VERSION.into(),
            config: config.clone(),
            options: options.clone(),
            space_label: space.label().into(),
            profile: profile.clone(),
        },
    )?;
    Ok(PullbackOutcome { pullback_path, csv_path, profile_path, report, profile })
}

#[derive(Parser, Debug)]
#[command(name = "snowfold", version, about = "Snowflake-and-fold maps on finite metric spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a benchmark space file.
    Generate(GenerateArgs),
    /// Build covers and the folding map for a space.
    Fold(FoldArgs),
    /// Write a coordinate projection as a map file.
    Project(ProjectArgs),
    /// Measure Lipschitz and lightness constants of a map.
    Verify(VerifyArgs),
    /// Compute the pullback metric and distortion profile of a map.
    Pullback(PullbackArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum KindArg {
    Interval,
    #[value(alias = "grid")]
    Grid2d,
    Cantor,
    #[value(alias = "star", alias = "star_tree")]
    StarTree,
    #[value(alias = "heisenberg", alias = "heisenberg_ball")]
    HeisenbergBall,
    #[value(alias = "cloud", alias = "random_cloud")]
    RandomCloud,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    kind: KindArg,
    #[arg(long, default_value_t = 64)]
    points: usize,
    /// Interval length (default: unit spacing).
    #[arg(long)]
    length: Option<f64>,
    #[arg(long, default_value_t = 8)]
    side: usize,
    #[arg(long, default_value_t = 4)]
    level: u32,
    #[arg(long, default_value_t = 3)]
    arms: usize,
    #[arg(long, default_value_t = 5)]
    depth: usize,
    #[arg(long, default_value_t = 2)]
    radius: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (default: `<out-dir>/<label>.json`).
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long, env = "SNOWFOLD_OUT")]
    out_dir: Option<PathBuf>,
}

impl GenerateArgs {
    fn recipe(&self) -> SpaceRecipe {
        SpaceRecipe::new(match self.kind {
            KindArg::Interval => SpaceKind::Interval { points: self.points, length: self.length },
            KindArg::Grid2d => SpaceKind::Grid2d { side: self.side },
            KindArg::Cantor => SpaceKind::Cantor { level: self.level },
            KindArg::StarTree => SpaceKind::StarTree { arms: self.arms, depth: self.depth },
            KindArg::HeisenbergBall => SpaceKind::HeisenbergBall { radius: self.radius },
            KindArg::RandomCloud => SpaceKind::RandomCloud { points: self.points, seed: self.seed },
        })
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum StrategyArg {
    Auto,
    Greedy,
    Interval,
}

/// Flags shared by the pipeline commands; each overrides the config file.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "SNOWFOLD_OUT")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write an SVG scatter of the image (target dimension <= 2).
    #[arg(long)]
    emit_plots: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(dir) = &self.out_dir {
            config.out_dir = dir.clone();
        }
        if let Some(eps) = self.epsilon {
            config.epsilon = eps;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.emit_plots |= self.emit_plots;
        Ok(config)
    }
}

#[derive(Args, Debug)]
struct FoldArgs {
    /// Space file; optional when the config file has a recipe.
    space: Option<PathBuf>,
    #[command(flatten)]
    common: ConfigArgs,
    /// Scale ratio r (default: smallest admissible integer).
    #[arg(long)]
    scale_ratio: Option<f64>,
    /// Cover constant c used to select r.
    #[arg(long)]
    cover_constant: Option<f64>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    #[arg(long)]
    base_point: Option<usize>,
    #[arg(long)]
    tail_tol: Option<f64>,
}

#[derive(Args, Debug)]
struct ProjectArgs {
    space: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    axis: usize,
    #[command(flatten)]
    common: ConfigArgs,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    space: PathBuf,
    map: PathBuf,
    #[command(flatten)]
    common: ConfigArgs,
    /// Fail when either constant exceeds this value.
    #[arg(long)]
    ceiling: Option<f64>,
    /// Probe only the realised distances, without midpoints.
    #[arg(long)]
    no_midpoints: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Qs,
    Branched,
}

#[derive(Args, Debug)]
struct PullbackArgs {
    space: PathBuf,
    map: PathBuf,
    #[command(flatten)]
    common: ConfigArgs,
    /// Report `[lower, upper]` bounds instead of exact values.
    #[arg(long)]
    bounds: bool,
    #[arg(long, value_enum, default_value = "qs")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "pullback")]
    profile_target: ProfileTarget,
    #[arg(long, default_value_t = 200_000)]
    samples: usize,
}

fn run_command(command: Command) -> Result<i32> {
    match command {
        Command::Generate(args) => {
            let out_dir = args.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
            let path = cmd_generate(&args.recipe(), args.out.as_deref(), &out_dir)?;
            println!("{}", path.display());
            Ok(0)
        }
        Command::Fold(args) => {
            let mut config = args.common.resolve()?;
            if args.space.is_some() {
                config.space_path = args.space.clone();
            }
            if args.scale_ratio.is_some() {
                config.r = args.scale_ratio;
            }
            if args.cover_constant.is_some() {
                config.c = args.cover_constant;
            }
            match args.strategy {
                Some(StrategyArg::Auto) => config.strategy = None,
                Some(StrategyArg::Greedy) => config.strategy = Some(CoverStrategy::Greedy),
                Some(StrategyArg::Interval) => config.strategy = Some(CoverStrategy::Interval),
                None => {}
            }
            if let Some(b) = args.base_point {
                config.base_point = b;
            }
            if let Some(t) = args.tail_tol {
                config.tail_tol = t;
            }
            println!("{}", cmd_fold(&config)?);
            Ok(0)
        }
        Command::Project(args) => {
            let mut config = args.common.resolve()?;
            if args.space.is_some() {
                config.space_path = args.space.clone();
            }
            println!("{}", cmd_project(&config, args.axis)?.display());
            Ok(0)
        }
        Command::Verify(args) => {
            let mut config = args.common.resolve()?;
            if args.ceiling.is_some() {
                config.ceiling = args.ceiling;
            }
            if args.no_midpoints {
                config.probe.midpoints = false;
            }
            let outcome = cmd_verify(&args.space, &args.map, &config)?;
            println!("{outcome}");
            Ok(if outcome.passed() { 0 } else { 1 })
        }
        Command::Pullback(args) => {
            let config = args.common.resolve()?;
            let options = PullbackOptions {
                bounds: args.bounds,
                mode: match args.mode {
                    ModeArg::Qs => ProfileMode::Qs,
                    ModeArg::Branched => ProfileMode::Branched,
                },
                target: args.profile_target,
                max_samples: args.samples,
            };
            println!("{}", cmd_pullback(&args.space, &args.map, &config, &options)?);
            Ok(0)
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_command(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            if let Error::Configuration(_) = err {
                eprintln!("hint: raise --scale-ratio or --tail-tol so that the window fits in 64 scales");
            }
            exit_code(&err)
        }
    }
}
