//! Flat `key = value` configuration files.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Keys may appear once. Every key must be consumed by the target config,
//! so typos are reported instead of silently ignored.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::str::FromStr;

use num_complex::Complex64;
use thiserror::Error;
use vheat_core::bgk::BgkConfig;
use vheat_core::cns::CnsConfig;
use vheat_core::dsmc::DsmcConfig;
use vheat_core::kinetic::{SpatialGrid1D, VelocityGrid2D};
use vheat_core::steady_ns::{FourierVectorField, SteadyNsConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected 'key = value', found '{text}'")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key '{key}' (first set on line {first})")]
    Duplicate { line: usize, key: String, first: usize },
    #[error("unknown key '{key}' on line {line}")]
    Unknown { key: String, line: usize },
    #[error("missing required key '{0}'")]
    Missing(String),
    #[error("line {line}: key '{key}': cannot parse '{value}' ({reason})")]
    Value {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
    #[error("{0}")]
    Range(String),
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KvFile {
    entries: Vec<Entry>,
    used: BTreeSet<String>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<Entry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                text: raw.trim().to_string(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.trim().to_string(),
                });
            }
            if let Some(first) = entries.iter().find(|e| e.key == key) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                    first: first.line,
                });
            }
            entries.push(Entry {
                key: key.to_string(),
                value: value.to_string(),
                line,
            });
        }
        Ok(Self {
            entries,
            used: BTreeSet::new(),
        })
    }

    fn entry(&mut self, key: &str) -> Option<Entry> {
        self.used.insert(key.to_string());
        self.entries.iter().find(|e| e.key == key).cloned()
    }

    fn convert<T: FromStr>(e: &Entry) -> Result<T, ConfigError>
    where
        T::Err: Display,
    {
        e.value.parse::<T>().map_err(|err| ConfigError::Value {
            line: e.line,
            key: e.key.clone(),
            value: e.value.clone(),
            reason: err.to_string(),
        })
    }

    pub fn optional<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: Display,
    {
        self.entry(key).map(|e| Self::convert(&e)).transpose()
    }

    pub fn required<T: FromStr>(&mut self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: Display,
    {
        self.optional(key)?
            .ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    pub fn or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: Display,
    {
        Ok(self.optional(key)?.unwrap_or(default))
    }

    /// Comma-separated list of numbers; empty value is an empty list.
    pub fn list_or(&mut self, key: &str, default: Vec<f64>) -> Result<Vec<f64>, ConfigError> {
        let Some(e) = self.entry(key) else {
            return Ok(default);
        };
        e.value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>().map_err(|err| ConfigError::Value {
                    line: e.line,
                    key: e.key.clone(),
                    value: e.value.clone(),
                    reason: err.to_string(),
                })
            })
            .collect()
    }

    fn raw(&mut self, key: &str) -> Option<Entry> {
        self.entry(key)
    }

    /// Rejects keys that no accessor asked for.
    pub fn finish(self) -> Result<(), ConfigError> {
        match self.entries.iter().find(|e| !self.used.contains(&e.key)) {
            Some(e) => Err(ConfigError::Unknown {
                key: e.key.clone(),
                line: e.line,
            }),
            None => Ok(()),
        }
    }
}

fn range<E: Display>(r: Result<(), E>) -> Result<(), ConfigError> {
    r.map_err(|e| ConfigError::Range(e.to_string()))
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::Range(format!("{key} = {v} (must be > 0)")))
    }
}

pub fn bgk_config(text: &str) -> Result<BgkConfig, ConfigError> {
    let mut kv = KvFile::parse(text)?;
    let kn: f64 = kv.required("kn")?;
    let f0: f64 = kv.required("f0")?;
    positive("kn", kn)?;
    let mut c = BgkConfig::new(kn, f0);
    let n_cells = kv.or("n_cells", c.grid.n_cells)?;
    let n_v1 = kv.or("n_v1", c.vgrid.n_v1)?;
    let n_v2 = kv.or("n_v2", c.vgrid.n_v2)?;
    let v_max = kv.or("v_max", c.vgrid.v_max)?;
    c.grid = SpatialGrid1D::new(n_cells).map_err(|e| ConfigError::Range(format!("n_cells: {e}")))?;
    c.vgrid = VelocityGrid2D::new(n_v1, n_v2, v_max)
        .map_err(|e| ConfigError::Range(format!("velocity grid: {e}")))?;
    c.dt_cfl = kv.or("dt_cfl", c.dt_cfl)?;
    c.t_end = kv.or("t_end", c.t_end)?;
    c.sample_interval = kv.or("sample_interval", c.sample_interval)?;
    c.remap_trigger = kv.or("remap_trigger", c.remap_trigger)?;
    c.snapshot_times = kv.list_or("snapshot_times", c.snapshot_times)?;
    kv.finish()?;
    range(c.validate())?;
    Ok(c)
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

pub fn render_bgk(c: &BgkConfig) -> String {
    format!(
        "kn = {}\nf0 = {}\nn_cells = {}\nn_v1 = {}\nn_v2 = {}\nv_max = {}\ndt_cfl = {}\nt_end = {}\nsample_interval = {}\nremap_trigger = {}\nsnapshot_times = {}\n",
        c.kn,
        c.f0,
        c.grid.n_cells,
        c.vgrid.n_v1,
        c.vgrid.n_v2,
        c.vgrid.v_max,
        c.dt_cfl,
        c.t_end,
        c.sample_interval,
        c.remap_trigger,
        list(&c.snapshot_times)
    )
}

pub fn dsmc_config(text: &str) -> Result<DsmcConfig, ConfigError> {
    let mut kv = KvFile::parse(text)?;
    let kn: f64 = kv.required("kn")?;
    let f0: f64 = kv.required("f0")?;
    positive("kn", kn)?;
    let mut c = DsmcConfig::new(kn, f0);
    c.n_cells = kv.or("n_cells", c.n_cells)?;
    c.particles_per_cell = kv.or("particles_per_cell", c.particles_per_cell)?;
    c.dt = kv.or("dt", c.dt)?;
    c.t_end = kv.or("t_end", c.t_end)?;
    c.n_ensemble = kv.or("n_ensemble", c.n_ensemble)?;
    c.sample_interval = kv.or("sample_interval", c.sample_interval)?;
    c.time_avg_window = kv.or("time_avg_window", c.time_avg_window)?;
    c.rng_seed = kv.or("rng_seed", c.rng_seed)?;
    kv.finish()?;
    range(c.validate())?;
    Ok(c)
}

pub fn render_dsmc(c: &DsmcConfig) -> String {
    format!(
        "kn = {}\nf0 = {}\nn_cells = {}\nparticles_per_cell = {}\ndt = {}\nt_end = {}\nn_ensemble = {}\nsample_interval = {}\ntime_avg_window = {}\nrng_seed = {}\n",
        c.kn,
        c.f0,
        c.n_cells,
        c.particles_per_cell,
        c.dt,
        c.t_end,
        c.n_ensemble,
        c.sample_interval,
        c.time_avg_window,
        c.rng_seed
    )
}

pub fn cns_config(text: &str) -> Result<CnsConfig, ConfigError> {
    let mut kv = KvFile::parse(text)?;
    let g0 = kv.required("g0")?;
    let delta = kv.required("delta")?;
    let mut c = CnsConfig::new(g0, delta);
    c.c_mu = kv.or("c_mu", c.c_mu)?;
    c.c_kappa = kv.or("c_kappa", c.c_kappa)?;
    c.rho0 = kv.or("rho0", c.rho0)?;
    c.n_cells = kv.or("n_cells", c.n_cells)?;
    c.dt = kv.or("dt", c.dt)?;
    c.t_end = kv.or("t_end", c.t_end)?;
    c.samples_per_decade = kv.or("samples_per_decade", c.samples_per_decade)?;
    kv.finish()?;
    range(c.validate())?;
    Ok(c)
}

pub fn render_cns(c: &CnsConfig) -> String {
    format!(
        "g0 = {}\ndelta = {}\nc_mu = {}\nc_kappa = {}\nrho0 = {}\nn_cells = {}\ndt = {}\nt_end = {}\nsamples_per_decade = {}\n",
        c.g0, c.delta, c.c_mu, c.c_kappa, c.rho0, c.n_cells, c.dt, c.t_end, c.samples_per_decade
    )
}

/// Steady solve settings plus the conductivity used by the temperature check.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyRun {
    pub config: SteadyNsConfig,
    pub kappa: f64,
}

/// Force modes as `kx ky kz re1 im1 re2 im2 re3 im3` groups separated by
/// `;`. The conjugate mode is implied.
fn parse_modes(e: &Entry, n: usize) -> Result<FourierVectorField, ConfigError> {
    let err = |reason: String| ConfigError::Value {
        line: e.line,
        key: e.key.clone(),
        value: e.value.clone(),
        reason,
    };
    let mut f = FourierVectorField::zeros(n);
    let mut seen: Vec<[i64; 3]> = Vec::new();
    for group in e.value.split(';').map(str::trim).filter(|g| !g.is_empty()) {
        let parts: Vec<&str> = group.split_whitespace().collect();
        if parts.len() != 9 {
            return Err(err(format!("mode '{group}' needs 9 numbers, found {}", parts.len())));
        }
        let mut k = [0i64; 3];
        for d in 0..3 {
            k[d] = parts[d]
                .parse()
                .map_err(|x| err(format!("wavenumber '{}': {x}", parts[d])))?;
        }
        let mut vals = [0.0; 6];
        for d in 0..6 {
            vals[d] = parts[3 + d]
                .parse()
                .map_err(|x| err(format!("coefficient '{}': {x}", parts[3 + d])))?;
        }
        let neg = [-k[0], -k[1], -k[2]];
        if seen.contains(&k) || seen.contains(&neg) {
            return Err(err(format!("mode {k:?} given twice (conjugates are implied)")));
        }
        seen.push(k);
        let c = [
            Complex64::new(vals[0], vals[1]),
            Complex64::new(vals[2], vals[3]),
            Complex64::new(vals[4], vals[5]),
        ];
        f.set_mode(k, c).map_err(|x| err(x.to_string()))?;
    }
    Ok(f)
}

pub fn steady_config(text: &str) -> Result<SteadyRun, ConfigError> {
    let mut kv = KvFile::parse(text)?;
    let nu: f64 = kv.required("nu")?;
    let n: usize = kv.required("truncation")?;
    if n == 0 {
        return Err(ConfigError::Range("truncation = 0 (must be >= 1)".into()));
    }
    let force = match kv.raw("force") {
        Some(e) => parse_modes(&e, n)?,
        None => FourierVectorField::zeros(n),
    };
    let mut c = SteadyNsConfig::new(nu, force);
    c.damping = kv.or("damping", c.damping)?;
    c.max_iter = kv.or("max_iter", c.max_iter)?;
    c.residual_tol = kv.or("residual_tol", c.residual_tol)?;
    c.sobolev_c = kv.or("sobolev_c", c.sobolev_c)?;
    let kappa = kv.or("kappa", 1.0)?;
    kv.finish()?;
    positive("kappa", kappa)?;
    range(c.validate())?;
    Ok(SteadyRun { config: c, kappa })
}

pub fn render_steady(r: &SteadyRun) -> String {
    let f = &r.config.force;
    let mut modes = Vec::new();
    for (idx, c) in f.coeffs.iter().enumerate() {
        let k = f.wavevector(idx);
        if (k[0], k[1], k[2]) <= (-k[0], -k[1], -k[2]) || c.iter().all(|z| z.norm() == 0.0) {
            continue;
        }
        modes.push(format!(
            "{} {} {} {} {} {} {} {} {}",
            k[0], k[1], k[2], c[0].re, c[0].im, c[1].re, c[1].im, c[2].re, c[2].im
        ));
    }
    format!(
        "nu = {}\ntruncation = {}\nforce = {}\ndamping = {}\nmax_iter = {}\nresidual_tol = {}\nsobolev_c = {}\nkappa = {}\n",
        r.config.nu,
        f.n,
        modes.join("; "),
        r.config.damping,
        r.config.max_iter,
        r.config.residual_tol,
        r.config.sobolev_c,
        r.kappa
    )
}
