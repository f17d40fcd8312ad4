//! Benchmark and solve configuration, read from an INI file.
//!
//! Every section is optional. With an empty file the run uses the spherical
//! phantom (642-vertex icosphere at 70 mm, 64 analytic sensors at 95 mm), all
//! seven methods with a discrepancy β, Gaussian noise over the seven-point
//! SNR grid, and 20 random 50 mm patches per condition.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use esi_core::basis::MspWeightMode;
use esi_core::formats::MatrixFormat;
use esi_core::forward::DEFAULT_CONDUCTIVITY;
use esi_core::inverse::{BetaRule, Method, DEFAULT_EPSILON_FRAC};
use esi_core::metrics::DEFAULT_THRESHOLD_FRAC;
use esi_core::simulate::CovarianceNormalization;

use crate::error::{CliError, CliResult};
use crate::ini::{Entry, Ini};

/// Environment variable naming the fallback directory for relative paths.
pub const DATA_DIR_ENV: &str = "ESI_DATA_DIR";

pub const DEFAULT_SNR_GRID: [f64; 7] = [-20.0, -10.0, -5.0, 0.0, 5.0, 10.0, 20.0];

const KEYS: &[(&str, &[&str])] = &[
    ("mesh", &["path", "hemispheres", "icosphere", "radius_mm"]),
    (
        "leadfield",
        &[
            "path",
            "sensors",
            "n_sensors",
            "sensor_radius_mm",
            "upper_only",
            "conductivity",
        ],
    ),
    (
        "methods",
        &[
            "list",
            "beta",
            "whiten",
            "epsilon_frac",
            "eloreta_tol",
            "eloreta_max_iter",
            "noise_cov",
        ],
    ),
    (
        "basis",
        &[
            "gbf_count",
            "gbf_per_hemisphere",
            "harmonic_degree",
            "harmonic_joint",
            "msp_count",
            "msp_weights",
        ],
    ),
    (
        "source",
        &[
            "kind",
            "centers",
            "random_count",
            "fwhm_mm",
            "amplitude",
            "paths",
        ],
    ),
    (
        "noise",
        &[
            "kinds",
            "snr_db",
            "covariance",
            "kernel_rho_mm",
            "normalization",
        ],
    ),
    (
        "benchmark",
        &[
            "trials",
            "seed",
            "threshold_frac",
            "sample_maps",
            "record_wall_time",
        ],
    ),
    ("output", &["dir", "format"]),
];

#[derive(Clone, Debug, PartialEq)]
pub enum MeshSource {
    File {
        path: PathBuf,
        hemispheres: Option<PathBuf>,
    },
    Icosphere {
        subdivisions: u32,
        radius_mm: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum LeadfieldSource {
    File {
        path: PathBuf,
        sensors: PathBuf,
    },
    Analytic {
        n_sensors: usize,
        sensor_radius_mm: f64,
        upper_only: bool,
        conductivity: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodSettings {
    pub methods: Vec<Method>,
    pub beta: BetaRule<f64>,
    pub whiten: bool,
    pub epsilon_frac: f64,
    pub eloreta_tol: f64,
    pub eloreta_max_iter: usize,
    pub noise_cov: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasisSettings {
    pub gbf_count: usize,
    pub gbf_per_hemisphere: bool,
    pub harmonic_degree: usize,
    pub harmonic_joint: bool,
    pub msp_count: usize,
    pub msp_weights: MspWeightMode,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PatchCenters {
    Fixed(Vec<usize>),
    /// This many distinct random vertices, cycled over trials.
    Random(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub enum SourceSpec {
    Patch {
        centers: PatchCenters,
        fwhm_mm: f64,
        amplitude: f64,
    },
    Import {
        paths: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKindName {
    Gaussian,
    Realistic,
}

impl NoiseKindName {
    pub fn label(self) -> &'static str {
        match self {
            NoiseKindName::Gaussian => "gaussian",
            NoiseKindName::Realistic => "realistic",
        }
    }
}

impl FromStr for NoiseKindName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Self::Gaussian),
            "realistic" => Ok(Self::Realistic),
            other => Err(format!(
                "unknown noise kind `{other}` (gaussian, realistic)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSettings {
    pub kinds: Vec<NoiseKindName>,
    pub snr_db: Vec<f64>,
    /// Sensor covariance for realistic noise; a Gaussian kernel over sensor
    /// positions when absent.
    pub covariance: Option<PathBuf>,
    pub kernel_rho_mm: f64,
    pub normalization: CovarianceNormalization,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkSettings {
    pub trials: usize,
    pub seed: u64,
    pub threshold_frac: f64,
    /// Trials per condition whose per-vertex maps are written out.
    pub sample_maps: usize,
    pub record_wall_time: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSettings {
    pub dir: PathBuf,
    pub format: MatrixFormat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkConfig {
    pub mesh: MeshSource,
    pub leadfield: LeadfieldSource,
    pub methods: MethodSettings,
    pub basis: BasisSettings,
    pub source: SourceSpec,
    pub noise: NoiseSettings,
    pub benchmark: BenchmarkSettings,
    pub output: OutputSettings,
}

/// Typed access to one section, carrying line numbers into errors.
struct Section<'a> {
    ini: &'a Ini,
    name: &'static str,
}

impl<'a> Section<'a> {
    fn entry(&self, key: &str) -> Option<&'a Entry> {
        self.ini.get(self.name, key)
    }

    fn parsed<V, E: std::fmt::Display>(
        &self,
        key: &str,
        parse: impl FnOnce(&str) -> Result<V, E>,
    ) -> CliResult<Option<V>> {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => parse(&e.value)
                .map(Some)
                .map_err(|err| CliError::config(e.line, format!("[{}] {key}: {err}", self.name))),
        }
    }

    fn num<V: FromStr>(&self, key: &str) -> CliResult<Option<V>>
    where
        V::Err: std::fmt::Display,
    {
        self.parsed(key, |s| s.parse::<V>())
    }

    fn flag(&self, key: &str) -> CliResult<Option<bool>> {
        self.parsed(key, parse_bool)
    }

    fn text(&self, key: &str) -> Option<&'a str> {
        self.entry(key).map(|e| e.value.as_str())
    }

    fn list<V>(
        &self,
        key: &str,
        parse: impl Fn(&str) -> Result<V, String>,
    ) -> CliResult<Option<Vec<V>>> {
        self.parsed(key, |s| {
            let items: Vec<&str> = split_list(s);
            if items.is_empty() {
                return Err("empty list".to_string());
            }
            items
                .into_iter()
                .map(&parse)
                .collect::<Result<Vec<V>, String>>()
        })
    }

    fn line(&self, key: &str) -> usize {
        self.entry(key).map_or(0, |e| e.line)
    }
}

fn split_list(s: &str) -> Vec<&str> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .collect()
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(format!("expected true or false, found `{other}`")),
    }
}

/// `discrepancy`, `relative:<x>` or a plain positive number.
pub fn parse_beta(s: &str) -> Result<BetaRule<f64>, String> {
    let s = s.trim();
    let positive = |t: &str| -> Result<f64, String> {
        let v: f64 = t
            .trim()
            .parse()
            .map_err(|_| format!("invalid number `{t}`"))?;
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(format!("β must be positive and finite, got {v}"))
        }
    };
    if s.eq_ignore_ascii_case("discrepancy") {
        Ok(BetaRule::Discrepancy)
    } else if let Some(rest) = s.strip_prefix("relative:") {
        Ok(BetaRule::Relative(positive(rest)?))
    } else {
        positive(s)
            .map(BetaRule::Fixed)
            .map_err(|e| format!("{e} (expected `discrepancy`, `relative:<x>` or a number)"))
    }
}

pub fn parse_methods(s: &str) -> Result<Vec<Method>, String> {
    let mut out = Vec::new();
    for tok in split_list(s) {
        let m: Method = tok.parse().map_err(|e: esi_core::Error| e.to_string())?;
        if out.contains(&m) {
            return Err(format!("method {m} listed twice"));
        }
        out.push(m);
    }
    if out.is_empty() {
        return Err("no methods listed".into());
    }
    Ok(out)
}

/// Resolves `raw` against `base`, then against `$ESI_DATA_DIR`. The first
/// existing candidate wins; when none exists the error names all of them.
pub fn resolve_path(raw: &str, base: &Path) -> Result<PathBuf, String> {
    let p = Path::new(raw);
    let mut tried = Vec::new();
    let mut candidates = vec![if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }];
    if !p.is_absolute() {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            candidates.push(Path::new(&dir).join(p));
        }
    }
    for c in candidates {
        if c.exists() {
            return Ok(c);
        }
        tried.push(c.display().to_string());
    }
    Err(format!(
        "file `{raw}` not found (tried {})",
        tried.join(", ")
    ))
}

impl BenchmarkConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    /// Parses and validates; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> CliResult<Self> {
        let ini = Ini::parse(text)?;
        ini.check_keys(KEYS)?;
        let sec = |name: &'static str| Section { ini: &ini, name };
        let file = |s: &Section, key: &str| -> CliResult<Option<PathBuf>> {
            s.parsed(key, |v| resolve_path(v, base))
        };

        let m = sec("mesh");
        let mesh = match (m.text("path"), m.entry("icosphere")) {
            (Some(_), Some(e)) => {
                return Err(CliError::config(
                    e.line,
                    "[mesh] takes either `path` or `icosphere`, not both",
                ))
            }
            (Some(_), None) => MeshSource::File {
                path: file(&m, "path")?.expect("checked above"),
                hemispheres: file(&m, "hemispheres")?,
            },
            (None, _) => {
                if let Some(e) = m.entry("hemispheres") {
                    return Err(CliError::config(
                        e.line,
                        "`hemispheres` only applies to a mesh file",
                    ));
                }
                MeshSource::Icosphere {
                    subdivisions: m.num("icosphere")?.unwrap_or(3),
                    radius_mm: positive(&m, "radius_mm", 70.0)?,
                }
            }
        };

        let l = sec("leadfield");
        let leadfield = match l.text("path") {
            Some(_) => {
                for key in [
                    "n_sensors",
                    "sensor_radius_mm",
                    "upper_only",
                    "conductivity",
                ] {
                    if let Some(e) = l.entry(key) {
                        return Err(CliError::config(
                            e.line,
                            format!("`{key}` only applies to the analytic lead field"),
                        ));
                    }
                }
                let sensors = file(&l, "sensors")?.ok_or_else(|| {
                    CliError::config(l.line("path"), "a lead field file needs `sensors` metadata")
                })?;
                LeadfieldSource::File {
                    path: file(&l, "path")?.expect("checked above"),
                    sensors,
                }
            }
            None => {
                if let Some(e) = l.entry("sensors") {
                    return Err(CliError::config(
                        e.line,
                        "`sensors` needs a lead field `path`",
                    ));
                }
                let n_sensors = l.num("n_sensors")?.unwrap_or(64);
                if n_sensors == 0 {
                    return Err(CliError::config(
                        l.line("n_sensors"),
                        "n_sensors must be at least 1",
                    ));
                }
                LeadfieldSource::Analytic {
                    n_sensors,
                    sensor_radius_mm: positive(&l, "sensor_radius_mm", 95.0)?,
                    upper_only: l.flag("upper_only")?.unwrap_or(false),
                    conductivity: positive(&l, "conductivity", DEFAULT_CONDUCTIVITY)?,
                }
            }
        };

        let me = sec("methods");
        let methods = MethodSettings {
            methods: me
                .parsed("list", parse_methods)?
                .unwrap_or_else(|| Method::ALL.to_vec()),
            beta: me
                .parsed("beta", parse_beta)?
                .unwrap_or(BetaRule::Discrepancy),
            whiten: me.flag("whiten")?.unwrap_or(false),
            epsilon_frac: non_negative(&me, "epsilon_frac", DEFAULT_EPSILON_FRAC)?,
            eloreta_tol: positive(&me, "eloreta_tol", 1e-8)?,
            eloreta_max_iter: me.num("eloreta_max_iter")?.unwrap_or(100),
            noise_cov: file(&me, "noise_cov")?,
        };

        let b = sec("basis");
        let basis = BasisSettings {
            gbf_count: b.num("gbf_count")?.unwrap_or(50),
            gbf_per_hemisphere: b.flag("gbf_per_hemisphere")?.unwrap_or(true),
            harmonic_degree: b.num("harmonic_degree")?.unwrap_or(6),
            harmonic_joint: b.flag("harmonic_joint")?.unwrap_or(false),
            msp_count: b.num("msp_count")?.unwrap_or(32),
            msp_weights: b
                .parsed("msp_weights", |s| s.parse::<MspWeightMode>())?
                .unwrap_or_default(),
        };
        for key in ["gbf_count", "msp_count"] {
            if b.num::<usize>(key)? == Some(0) {
                return Err(CliError::config(
                    b.line(key),
                    format!("{key} must be at least 1"),
                ));
            }
        }

        let be = sec("benchmark");
        let trials = be.num("trials")?.unwrap_or(20);
        if trials == 0 {
            return Err(CliError::config(
                be.line("trials"),
                "trials must be at least 1",
            ));
        }
        let threshold_frac = be.num("threshold_frac")?.unwrap_or(DEFAULT_THRESHOLD_FRAC);
        if !(threshold_frac > 0.0 && threshold_frac <= 1.0) {
            return Err(CliError::config(
                be.line("threshold_frac"),
                "threshold_frac must lie in (0, 1]",
            ));
        }
        let benchmark = BenchmarkSettings {
            trials,
            seed: be.num("seed")?.unwrap_or(0),
            threshold_frac,
            sample_maps: be.num("sample_maps")?.unwrap_or(0),
            record_wall_time: be.flag("record_wall_time")?.unwrap_or(false),
        };

        let s = sec("source");
        let kind = s.text("kind").unwrap_or("patch").to_ascii_lowercase();
        let source = match kind.as_str() {
            "patch" => {
                if let Some(e) = s.entry("paths") {
                    return Err(CliError::config(
                        e.line,
                        "`paths` only applies to kind = import",
                    ));
                }
                let centers = match (s.entry("centers"), s.entry("random_count")) {
                    (Some(_), Some(e)) => {
                        return Err(CliError::config(
                            e.line,
                            "give either `centers` or `random_count`, not both",
                        ))
                    }
                    (Some(_), None) => PatchCenters::Fixed(
                        s.list("centers", |t| {
                            t.parse::<usize>()
                                .map_err(|_| format!("invalid vertex index `{t}`"))
                        })?
                        .expect("checked above"),
                    ),
                    (None, _) => {
                        let count = s.num("random_count")?.unwrap_or(trials);
                        if count == 0 {
                            return Err(CliError::config(
                                s.line("random_count"),
                                "random_count must be at least 1",
                            ));
                        }
                        PatchCenters::Random(count)
                    }
                };
                SourceSpec::Patch {
                    centers,
                    fwhm_mm: positive(&s, "fwhm_mm", 50.0)?,
                    amplitude: positive(&s, "amplitude", 1.0)?,
                }
            }
            "import" => {
                for key in ["centers", "random_count", "fwhm_mm", "amplitude"] {
                    if let Some(e) = s.entry(key) {
                        return Err(CliError::config(
                            e.line,
                            format!("`{key}` only applies to kind = patch"),
                        ));
                    }
                }
                let paths = s.list("paths", |t| resolve_path(t, base))?.ok_or_else(|| {
                    CliError::config(s.line("kind"), "kind = import needs `paths`")
                })?;
                SourceSpec::Import { paths }
            }
            other => {
                return Err(CliError::config(
                    s.line("kind"),
                    format!("unknown source kind `{other}` (patch, import)"),
                ))
            }
        };

        let n = sec("noise");
        let snr_db = n
            .list("snr_db", |t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| format!("invalid SNR `{t}`"))
            })?
            .unwrap_or_else(|| DEFAULT_SNR_GRID.to_vec());
        let noise = NoiseSettings {
            kinds: n
                .list("kinds", |t| t.parse::<NoiseKindName>())?
                .unwrap_or_else(|| vec![NoiseKindName::Gaussian]),
            snr_db,
            covariance: file(&n, "covariance")?,
            kernel_rho_mm: positive(&n, "kernel_rho_mm", 40.0)?,
            normalization: n
                .parsed("normalization", |s| s.parse::<CovarianceNormalization>())?
                .unwrap_or_default(),
        };
        for (i, kind) in noise.kinds.iter().enumerate() {
            if noise.kinds[..i].contains(kind) {
                return Err(CliError::config(
                    n.line("kinds"),
                    format!("noise kind {} listed twice", kind.label()),
                ));
            }
        }

        let o = sec("output");
        let output = OutputSettings {
            dir: o
                .text("dir")
                .map_or_else(|| base.join("results"), |d| base.join(d)),
            format: o
                .parsed("format", |s| s.parse::<MatrixFormat>())?
                .unwrap_or(MatrixFormat::Csv),
        };

        Ok(Self {
            mesh,
            leadfield,
            methods,
            basis,
            source,
            noise,
            benchmark,
            output,
        })
    }

    pub fn default_phantom() -> Self {
        Self::parse("", Path::new(".")).expect("empty config is valid")
    }
}

fn positive(s: &Section, key: &str, default: f64) -> CliResult<f64> {
    let v = s.num::<f64>(key)?.unwrap_or(default);
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::config(
            s.line(key),
            format!("[{}] {key} must be positive, got {v}", s.name),
        ))
    }
}

fn non_negative(s: &Section, key: &str, default: f64) -> CliResult<f64> {
    let v = s.num::<f64>(key)?.unwrap_or(default);
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(CliError::config(
            s.line(key),
            format!("[{}] {key} must be non-negative, got {v}", s.name),
        ))
    }
}
