//! Flat INI-style run configuration.
//!
//! Keys carry their unit in the name (`Tend_time`, `halfwidth_length`,
//! `points_count`). Blank lines and lines starting with `#` or `;` are
//! ignored. Optional values accept the literal `auto`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use critex::certificate::Cutoffs;
use critex::evolve::SolveConfig;
use critex::{make_bump, BumpKind, Field, Grid, Params};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    pub fn general(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self {
                line: Some(l),
                message,
            } => write!(f, "line {l}: {message}"),
            Self { line: None, message } => f.write_str(message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
    used: bool,
}

/// Raw `section -> key -> value` map with source lines.
#[derive(Debug, Clone, Default)]
pub struct Ini {
    sections: BTreeMap<String, (usize, BTreeMap<String, Entry>)>,
}

const SECTIONS: &[&str] = &[
    "params",
    "grid",
    "data",
    "simulate",
    "picard",
    "certificate",
    "sweep",
    "manifest",
];

impl Ini {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut ini = Ini::default();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(line_no, "unterminated section header"))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(ConfigError::at(line_no, format!("unknown section [{name}]")));
                }
                if ini.sections.contains_key(name) {
                    return Err(ConfigError::at(line_no, format!("duplicate section [{name}]")));
                }
                ini.sections.insert(name.to_string(), (line_no, BTreeMap::new()));
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::at(line_no, format!("expected key = value, found {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::at(line_no, "empty key"));
            }
            let section = current
                .as_ref()
                .ok_or_else(|| ConfigError::at(line_no, "key outside of any section"))?;
            let entries = &mut ini.sections.get_mut(section).expect("section exists").1;
            if entries.contains_key(key) {
                return Err(ConfigError::at(line_no, format!("duplicate key {key:?}")));
            }
            entries.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    line: line_no,
                    used: false,
                },
            );
        }
        Ok(ini)
    }

    fn take(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        let e = self.sections.get_mut(section)?.1.get_mut(key)?;
        e.used = true;
        Some((e.value.clone(), e.line))
    }

    /// Key/value pairs of a section, without marking them as consumed.
    pub fn section(&self, name: &str) -> BTreeMap<String, String> {
        self.sections
            .get(name)
            .map(|(_, m)| m.iter().map(|(k, e)| (k.clone(), e.value.clone())).collect())
            .unwrap_or_default()
    }

    fn reject_unused(&self) -> Result<(), ConfigError> {
        for (name, (_, entries)) in &self.sections {
            if name == "manifest" {
                continue;
            }
            if let Some((k, e)) = entries.iter().find(|(_, e)| !e.used) {
                return Err(ConfigError::at(e.line, format!("unknown key {k:?} in [{name}]")));
            }
        }
        Ok(())
    }

    fn parsed<T: std::str::FromStr>(&mut self, section: &str, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.take(section, key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| ConfigError::at(line, format!("{key}: cannot parse {v:?}: {e}"))),
        }
    }

    fn or<T: std::str::FromStr>(&mut self, section: &str, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.parsed(section, key)?.unwrap_or(default))
    }

    fn required<T: std::str::FromStr>(&mut self, section: &str, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.parsed(section, key)?
            .ok_or_else(|| ConfigError::general(format!("missing required key {key} in [{section}]")))
    }

    fn auto(&mut self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.take(section, key) {
            None => Ok(None),
            Some((v, _)) if v == "auto" => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|e| ConfigError::at(line, format!("{key}: cannot parse {v:?}: {e}"))),
        }
    }

    fn list(&mut self, section: &str, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        match self.take(section, key) {
            None => Ok(default.to_vec()),
            Some((v, _)) if v.is_empty() => Ok(Vec::new()),
            Some((v, line)) => v
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|e| ConfigError::at(line, format!("{key}: cannot parse {t:?}: {e}")))
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileSpec {
    Zero,
    Constant(f64),
    Bump {
        kind: BumpKind,
        amplitude: f64,
        width: f64,
        /// Empty means the origin.
        center: Vec<f64>,
    },
    File {
        path: PathBuf,
        amplitude: f64,
    },
}

impl ProfileSpec {
    fn read(ini: &mut Ini, prefix: &str) -> Result<Self, ConfigError> {
        let kind = ini.or("data", &format!("{prefix}_kind"), "gaussian".to_string())?;
        let amp_key = format!("{prefix}_amplitude_value");
        Ok(match kind.as_str() {
            "zero" => ProfileSpec::Zero,
            "constant" => ProfileSpec::Constant(ini.or("data", &amp_key, 1.0)?),
            "gaussian" | "compact" => ProfileSpec::Bump {
                kind: if kind == "gaussian" {
                    BumpKind::Gaussian
                } else {
                    BumpKind::CompactBump
                },
                amplitude: ini.or("data", &amp_key, 1.0)?,
                width: ini.or("data", &format!("{prefix}_width_length"), 2.0)?,
                center: ini.list("data", &format!("{prefix}_center_length"), &[])?,
            },
            "file" => ProfileSpec::File {
                path: PathBuf::from(ini.required::<String>("data", &format!("{prefix}_file_path"))?),
                amplitude: ini.or("data", &amp_key, 1.0)?,
            },
            other => {
                return Err(ConfigError::general(format!(
                    "{prefix}_kind must be zero, constant, gaussian, compact or file (found {other:?})"
                )))
            }
        })
    }

    fn write(&self, out: &mut String, prefix: &str) {
        let _ = match self {
            ProfileSpec::Zero => writeln!(out, "{prefix}_kind = zero"),
            ProfileSpec::Constant(v) => {
                writeln!(out, "{prefix}_kind = constant\n{prefix}_amplitude_value = {v}")
            }
            ProfileSpec::Bump {
                kind,
                amplitude,
                width,
                center,
            } => {
                let name = match kind {
                    BumpKind::Gaussian => "gaussian",
                    BumpKind::CompactBump => "compact",
                };
                let _ = writeln!(
                    out,
                    "{prefix}_kind = {name}\n{prefix}_amplitude_value = {amplitude}\n{prefix}_width_length = {width}"
                );
                if center.is_empty() {
                    Ok(())
                } else {
                    writeln!(out, "{prefix}_center_length = {}", join(center))
                }
            }
            ProfileSpec::File { path, amplitude } => writeln!(
                out,
                "{prefix}_kind = file\n{prefix}_file_path = {}\n{prefix}_amplitude_value = {amplitude}",
                path.display()
            ),
        };
    }

    /// Samples the profile; relative file paths resolve against `base`.
    pub fn build(&self, grid: &Grid, base: &Path) -> Result<Field, String> {
        let err = |e: critex::Error| e.to_string();
        match self {
            ProfileSpec::Zero => Ok(Field::zeros(*grid)),
            ProfileSpec::Constant(v) => Ok(Field::constant(*grid, *v)),
            ProfileSpec::Bump {
                kind,
                amplitude,
                width,
                center,
            } => {
                let c = if center.is_empty() {
                    vec![0.0; grid.dim()]
                } else {
                    center.clone()
                };
                make_bump(grid, *kind, &c, *width, *amplitude).map_err(err)
            }
            ProfileSpec::File { path, amplitude } => {
                let full = base.join(path);
                let file = File::open(&full).map_err(|e| format!("{}: {e}", full.display()))?;
                let f = Field::read_snapshot(BufReader::new(file)).map_err(err)?;
                f.grid().check_same(grid).map_err(err)?;
                f.scaled(*amplitude).map_err(err)
            }
        }
    }

    pub fn amplitude(&self) -> f64 {
        match self {
            ProfileSpec::Zero => 0.0,
            ProfileSpec::Constant(v) => *v,
            ProfileSpec::Bump { amplitude, .. } | ProfileSpec::File { amplitude, .. } => *amplitude,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutoffChoice {
    Standard,
    Steep,
}

impl CutoffChoice {
    pub fn cutoffs(&self) -> Cutoffs {
        match self {
            CutoffChoice::Standard => Cutoffs::standard(),
            CutoffChoice::Steep => Cutoffs::steep(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSection {
    pub t_end: f64,
    pub dt0: f64,
    pub dt_min: f64,
    pub u_max: f64,
    pub tol_step: f64,
    pub snapshot_every: usize,
    pub output_times: Vec<f64>,
    pub norm_q: Option<f64>,
    pub nonlinearity: bool,
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardSection {
    pub t_cap: f64,
    pub rungs: usize,
    pub q: Option<f64>,
    pub delta: Option<f64>,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateSection {
    pub t_ladder: Vec<f64>,
    pub cutoffs: CutoffChoice,
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    pub p_values: Vec<f64>,
    pub sigma_values: Vec<f64>,
    pub data_scales: Vec<f64>,
    pub tail_q: f64,
    pub t_end: f64,
    pub t_end_max: f64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dim: u32,
    pub p: f64,
    pub sigma: f64,
    pub half_width: f64,
    pub points: usize,
    pub u0: ProfileSpec,
    pub w: ProfileSpec,
    pub simulate: SimulateSection,
    pub picard: PicardSection,
    pub certificate: CertificateSection,
    pub sweep: SweepSection,
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "auto".to_string(), |v| v.to_string())
}

impl RunConfig {
    /// Parses a configuration; the `[manifest]` section, if present, is
    /// returned separately.
    pub fn parse(text: &str) -> Result<(Self, BTreeMap<String, String>), ConfigError> {
        let mut ini = Ini::parse(text)?;
        let defaults = SolveConfig::new(Params::new(2, 2.0, -0.5).expect("valid"), 100.0);
        let cfg = RunConfig {
            dim: ini.required("params", "N_dim")?,
            p: ini.required("params", "p_exponent")?,
            sigma: ini.required("params", "sigma_exponent")?,
            half_width: ini.or("grid", "halfwidth_length", 32.0)?,
            points: ini.or("grid", "points_count", 64)?,
            u0: ProfileSpec::read(&mut ini, "u0")?,
            w: ProfileSpec::read(&mut ini, "w")?,
            simulate: SimulateSection {
                t_end: ini.or("simulate", "Tend_time", 100.0)?,
                dt0: ini.or("simulate", "dt0_time", defaults.dt0)?,
                dt_min: ini.or("simulate", "dtmin_time", defaults.dt_min)?,
                u_max: ini.or("simulate", "umax_value", defaults.u_max)?,
                tol_step: ini.or("simulate", "tolstep_ratio", defaults.tol_step)?,
                snapshot_every: ini.or("simulate", "snapshotevery_steps", 0)?,
                output_times: ini.list("simulate", "outputs_time", &[])?,
                norm_q: ini.auto("simulate", "normq_exponent")?,
                nonlinearity: ini.or("simulate", "nonlinearity_flag", true)?,
                max_steps: ini.or("simulate", "maxsteps_count", defaults.max_steps)?,
            },
            picard: PicardSection {
                t_cap: ini.or("picard", "Tcap_time", critex::picard::DEFAULT_T_CAP)?,
                rungs: ini.or("picard", "rungs_count", critex::picard::DEFAULT_RUNGS)?,
                q: ini.auto("picard", "q_exponent")?,
                delta: ini.auto("picard", "delta_value")?,
                max_iter: ini.or("picard", "maxiter_count", 200)?,
            },
            certificate: CertificateSection {
                t_ladder: ini.list("certificate", "Tladder_time", &[64.0, 128.0, 256.0, 512.0])?,
                cutoffs: match ini
                    .or("certificate", "cutoffs_name", "standard".to_string())?
                    .as_str()
                {
                    "standard" => CutoffChoice::Standard,
                    "steep" => CutoffChoice::Steep,
                    other => {
                        return Err(ConfigError::general(format!(
                            "cutoffs_name must be standard or steep (found {other:?})"
                        )))
                    }
                },
                radius: ini.auto("certificate", "radius_length")?,
            },
            sweep: SweepSection {
                p_values: ini.list("sweep", "pvalues_exponent", &[])?,
                sigma_values: ini.list("sweep", "sigmavalues_exponent", &[])?,
                data_scales: ini.list("sweep", "scales_value", &[1.0])?,
                tail_q: ini.or("sweep", "tailq_exponent", 2.0)?,
                t_end: ini.or("sweep", "Tend_time", 100.0)?,
                t_end_max: ini.or("sweep", "TendMax_time", 1e4)?,
                workers: ini.or("sweep", "workers_count", 1)?,
            },
        };
        ini.reject_unused()?;
        let manifest = ini.section("manifest");
        Ok((cfg, manifest))
    }

    pub fn load(path: &Path) -> Result<(Self, BTreeMap<String, String>), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::general(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError {
            line: e.line,
            message: format!("{}: {}", path.display(), e.message),
        })
    }

    /// The full record in the format accepted by [`RunConfig::parse`].
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "[params]\nN_dim = {}\np_exponent = {}\nsigma_exponent = {}\n",
            self.dim, self.p, self.sigma
        );
        let _ = writeln!(
            s,
            "[grid]\nhalfwidth_length = {}\npoints_count = {}\n",
            self.half_width, self.points
        );
        s.push_str("[data]\n");
        self.u0.write(&mut s, "u0");
        self.w.write(&mut s, "w");
        let m = &self.simulate;
        let _ = writeln!(
            s,
            "\n[simulate]\nTend_time = {}\ndt0_time = {}\ndtmin_time = {}\numax_value = {}\ntolstep_ratio = {}\nsnapshotevery_steps = {}\noutputs_time = {}\nnormq_exponent = {}\nnonlinearity_flag = {}\nmaxsteps_count = {}\n",
            m.t_end,
            m.dt0,
            m.dt_min,
            m.u_max,
            m.tol_step,
            m.snapshot_every,
            join(&m.output_times),
            opt(m.norm_q),
            m.nonlinearity,
            m.max_steps
        );
        let pc = &self.picard;
        let _ = writeln!(
            s,
            "[picard]\nTcap_time = {}\nrungs_count = {}\nq_exponent = {}\ndelta_value = {}\nmaxiter_count = {}\n",
            pc.t_cap,
            pc.rungs,
            opt(pc.q),
            opt(pc.delta),
            pc.max_iter
        );
        let c = &self.certificate;
        let _ = writeln!(
            s,
            "[certificate]\nTladder_time = {}\ncutoffs_name = {}\nradius_length = {}\n",
            join(&c.t_ladder),
            match c.cutoffs {
                CutoffChoice::Standard => "standard",
                CutoffChoice::Steep => "steep",
            },
            opt(c.radius)
        );
        let w = &self.sweep;
        let _ = writeln!(
            s,
            "[sweep]\npvalues_exponent = {}\nsigmavalues_exponent = {}\nscales_value = {}\ntailq_exponent = {}\nTend_time = {}\nTendMax_time = {}\nworkers_count = {}",
            join(&w.p_values),
            join(&w.sigma_values),
            join(&w.data_scales),
            w.tail_q,
            w.t_end,
            w.t_end_max,
            w.workers
        );
        s
    }

    pub fn params(&self) -> Result<Params, critex::Error> {
        Params::new(self.dim, self.p, self.sigma)
    }

    pub fn grid(&self) -> Result<Grid, critex::Error> {
        Grid::new(self.dim as usize, self.half_width, self.points)
    }

    pub fn solve_config(&self) -> Result<SolveConfig, critex::Error> {
        let m = &self.simulate;
        let mut cfg = SolveConfig::new(self.params()?, m.t_end);
        cfg.dt0 = m.dt0;
        cfg.dt_min = m.dt_min;
        cfg.u_max = m.u_max;
        cfg.tol_step = m.tol_step;
        cfg.snapshot_every = m.snapshot_every;
        cfg.output_times = m.output_times.clone();
        cfg.norm_q = m.norm_q;
        cfg.nonlinearity = m.nonlinearity;
        cfg.max_steps = m.max_steps;
        Ok(cfg)
    }
}
