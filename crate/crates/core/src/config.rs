//! Run configuration: method selection and parameters with their defaults,
//! parsed from flat `key = value` text.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::baselines::Domain;
use crate::error::{invalid, DwfsError, Result};
use crate::fourier::{FourierKind, FourierOptions, LinearOptions, ModulationSpec, NopeOptions, ShapeKind, Start};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Sh,
    P4Linear,
    P4Nope,
    Fourier(FourierKind),
    Columnwise,
    Mrp,
    Pe,
}

impl FromStr for Method {
    type Err = DwfsError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sh" => Method::Sh,
            "p4_linear" => Method::P4Linear,
            "p4_nope" => Method::P4Nope,
            "columnwise" => Method::Columnwise,
            "mrp" => Method::Mrp,
            "pe" => Method::Pe,
            _ => match s.strip_prefix("fourier:") {
                Some(k) => Method::Fourier(k.parse()?),
                None => return invalid(format!("unknown method '{s}'")),
            },
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Sh => f.write_str("sh"),
            Method::P4Linear => f.write_str("p4_linear"),
            Method::P4Nope => f.write_str("p4_nope"),
            Method::Fourier(k) => write!(f, "fourier:{k}"),
            Method::Columnwise => f.write_str("columnwise"),
            Method::Mrp => f.write_str("mrp"),
            Method::Pe => f.write_str("pe"),
        }
    }
}

/// All tunables of a run. `Default` is the single source of the documented
/// defaults; the CLI layers its flags on top.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    /// Subapertures per axis; `None` means N / 8.
    pub n_sub: Option<usize>,
    pub c: f64,
    pub s: f64,
    /// `None`: linear for p4_nope, zero for other Fourier kinds.
    pub start: Option<Start>,
    pub mod_radius: f64,
    pub mod_steps: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub memory: usize,
    pub padding: usize,
    pub gain_compensation: bool,
    pub domain: Domain,
    pub seed: u64,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub png: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let nope = NopeOptions::default();
        let fo = FourierOptions::default();
        Self {
            method: Method::P4Nope,
            n_sub: None,
            c: fo.c,
            s: nope.s,
            start: None,
            mod_radius: 0.0,
            mod_steps: ModulationSpec::default().steps,
            max_iters: nope.max_iters,
            tol: nope.grad_tol,
            memory: nope.memory,
            padding: fo.padding,
            gain_compensation: LinearOptions::default().gain_compensation,
            domain: Domain::Grid,
            seed: 0,
            input: None,
            output: None,
            truth: None,
            png: None,
        }
    }
}

pub const KEYS: [&str; 18] = [
    "method", "n_sub", "c", "s", "start", "mod_radius", "mod_steps", "max_iters", "tol", "memory", "padding", "gain_compensation", "domain", "seed", "input",
    "output", "truth", "png",
];

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| DwfsError::Validation(format!("bad value '{v}' for key '{key}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => invalid(format!("bad value '{v}' for key '{key}'")),
    }
}

pub fn parse_start(v: &str) -> Result<Start> {
    match v {
        "zero" => Ok(Start::Zero),
        "linear" => Ok(Start::Linear),
        _ => invalid(format!("bad value '{v}' for key 'start' (zero|linear)")),
    }
}

impl RunConfig {
    /// Apply one `key = value` setting; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "method" => self.method = v.parse()?,
            "n_sub" => self.n_sub = Some(parse_num(key, v)?),
            "c" => self.c = parse_num(key, v)?,
            "s" => self.s = parse_num(key, v)?,
            "start" => self.start = Some(parse_start(v)?),
            "mod_radius" => self.mod_radius = parse_num(key, v)?,
            "mod_steps" => self.mod_steps = parse_num(key, v)?,
            "max_iters" => self.max_iters = parse_num(key, v)?,
            "tol" => self.tol = parse_num(key, v)?,
            "memory" => self.memory = parse_num(key, v)?,
            "padding" => self.padding = parse_num(key, v)?,
            "gain_compensation" => self.gain_compensation = parse_bool(key, v)?,
            "domain" => {
                self.domain = match v {
                    "grid" => Domain::Grid,
                    "mask" => Domain::Mask,
                    _ => return invalid(format!("bad value '{v}' for key 'domain' (grid|mask)")),
                }
            }
            "seed" => self.seed = parse_num(key, v)?,
            "input" => self.input = Some(v.into()),
            "output" => self.output = Some(v.into()),
            "truth" => self.truth = Some(v.into()),
            "png" => self.png = Some(v.into()),
            other => return invalid(format!("unknown config key '{other}'")),
        }
        Ok(())
    }

    /// Parse `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return invalid(format!("line {}: expected key = value", ln + 1));
            };
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Serialise every key (paths only when set).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        kv("method", self.method.to_string());
        if let Some(n) = self.n_sub {
            kv("n_sub", n.to_string());
        }
        kv("c", self.c.to_string());
        kv("s", self.s.to_string());
        if let Some(s) = self.start {
            kv("start", if s == Start::Zero { "zero".into() } else { "linear".into() });
        }
        kv("mod_radius", self.mod_radius.to_string());
        kv("mod_steps", self.mod_steps.to_string());
        kv("max_iters", self.max_iters.to_string());
        kv("tol", self.tol.to_string());
        kv("memory", self.memory.to_string());
        kv("padding", self.padding.to_string());
        kv("gain_compensation", self.gain_compensation.to_string());
        kv("domain", if self.domain == Domain::Grid { "grid".into() } else { "mask".into() });
        kv("seed", self.seed.to_string());
        for (k, p) in [("input", &self.input), ("output", &self.output), ("truth", &self.truth), ("png", &self.png)] {
            if let Some(p) = p {
                kv(k, p.display().to_string());
            }
        }
        out
    }

    /// Parameter checks that do not depend on the input grid.
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return invalid("c must be > 0");
        }
        if !(self.s > 0.0) {
            return invalid("s must be > 0");
        }
        if self.max_iters < 1 {
            return invalid("max_iters must be >= 1");
        }
        if self.mod_steps < 1 {
            return invalid("mod_steps must be >= 1");
        }
        if !(self.mod_radius >= 0.0) {
            return invalid("mod_radius must be >= 0");
        }
        if self.padding < 1 {
            return invalid("padding must be >= 1");
        }
        if !(self.tol >= 0.0) {
            return invalid("tol must be >= 0");
        }
        if let (Method::Fourier(k), Some(Start::Linear)) = (self.method, self.start) {
            if k != FourierKind::Shape(ShapeKind::Pyramid4) {
                return invalid(format!("start = linear requires pyramid4, got fourier:{k}"));
            }
        }
        Ok(())
    }

    /// Parameter checks that depend on the grid size.
    pub fn check_grid(&self, n: usize) -> Result<()> {
        if self.method == Method::Sh {
            let n_sub = self.n_sub.unwrap_or(n / 8);
            if n_sub < 2 || n % n_sub != 0 {
                return invalid(format!("n_sub = {n_sub} must be >= 2 and divide N = {n}"));
            }
        }
        Ok(())
    }

    pub fn fourier_options(&self) -> FourierOptions {
        let start = self.start.unwrap_or(match self.method {
            Method::P4Nope => Start::Linear,
            _ => Start::Zero,
        });
        FourierOptions {
            c: self.c,
            padding: self.padding,
            modulation: (self.mod_radius > 0.0).then_some(ModulationSpec { radius: self.mod_radius, steps: self.mod_steps }),
            nope: NopeOptions { s: self.s, start, max_iters: self.max_iters, grad_tol: self.tol, memory: self.memory, ..NopeOptions::default() },
            linear: LinearOptions { gain_compensation: self.gain_compensation },
        }
    }
}
