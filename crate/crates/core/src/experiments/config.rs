use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::control::{check_admissible, MatrixControlField, SpectralBounds, Sym2};
use crate::error::{Error, Result};
use crate::fem::{FeSpace, MAX_LEVEL};
use crate::obstacle::PdasConfig;
use crate::optimizer::{ObjectiveConfig, OptOptions};
use crate::penalty::PenaltyConfig;
use crate::problem;

/// Target of the Tikhonov term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DesiredControl {
    /// `diag(1 + x², 1)`.
    Reference,
    Zero,
}

/// Parameters of one experiment run.
///
/// Read from a flat `key = value` file (`#` starts a comment) and then
/// patched by `key=value` overrides. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub level: u32,
    pub alpha: f64,
    pub beta: f64,
    /// Penalty parameters, strictly increasing.
    pub gamma: Vec<f64>,
    pub psi: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub c: f64,
    pub q_init: Sym2,
    pub desired_control: DesiredControl,
    pub opt_tol: f64,
    pub max_iters: usize,
    pub newton_tol: f64,
    pub linear_tol: f64,
    pub pdas_max_iters: usize,
    /// Levels of the convergence study.
    pub levels: Vec<u32>,
    /// Keep the obstacle in the convergence study.
    pub convergence_obstacle: bool,
    pub gradcheck_level: u32,
    pub gradcheck_gamma: f64,
    pub gradcheck_controls: usize,
    pub gradcheck_directions: usize,
    pub gradcheck_tol: f64,
    pub fd_step: f64,
    pub sensitivity_steps: Vec<f64>,
    pub sensitivity_directions: usize,
    /// Entry bound of random perturbation directions.
    pub direction_scale: f64,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            level: 5,
            alpha: problem::ALPHA,
            beta: problem::BETA,
            gamma: vec![1e0, 1e3, 1e6, 1e9, 1e12],
            psi: problem::OBSTACLE,
            q_min: problem::Q_MIN,
            q_max: problem::Q_MAX,
            c: problem::COMPLEMENTARITY_C,
            q_init: problem::INITIAL_CONTROL,
            desired_control: DesiredControl::Reference,
            opt_tol: 1e-8,
            max_iters: 5000,
            newton_tol: 1e-11,
            linear_tol: crate::linalg::DEFAULT_TOL,
            pdas_max_iters: 200,
            levels: vec![3, 4, 5],
            convergence_obstacle: false,
            gradcheck_level: 3,
            gradcheck_gamma: 1e3,
            gradcheck_controls: 3,
            gradcheck_directions: 5,
            gradcheck_tol: 1e-4,
            fd_step: 1e-4,
            sensitivity_steps: vec![1e-2, 1e-3, 1e-4],
            sensitivity_directions: 3,
            direction_scale: 0.2,
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{v}` as a number")))
}

fn parse_int<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{v}` as an integer")))
}

fn parse_list<T>(key: &str, v: &str, item: impl Fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    v.split(',').map(|s| item(key, s)).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::Config(format!("{key}: expected true or false, got `{other}`"))),
    }
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn join_exp(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Set one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        match key {
            "level" => self.level = parse_int(key, value)?,
            "alpha" => self.alpha = parse_f64(key, value)?,
            "beta" => self.beta = parse_f64(key, value)?,
            "gamma" | "gamma_list" => self.gamma = parse_list(key, value, parse_f64)?,
            "psi" => self.psi = parse_f64(key, value)?,
            "q_min" => self.q_min = parse_f64(key, value)?,
            "q_max" => self.q_max = parse_f64(key, value)?,
            "c" => self.c = parse_f64(key, value)?,
            "q_init" => {
                let v = parse_list(key, value, parse_f64)?;
                let [a11, a22, a12] = v[..] else {
                    return Err(Error::Config("q_init: expected `q11,q22,q12`".into()));
                };
                self.q_init = Sym2::new(a11, a22, a12);
            }
            "desired_control" => {
                self.desired_control = match value.trim() {
                    "reference" => DesiredControl::Reference,
                    "zero" => DesiredControl::Zero,
                    other => {
                        return Err(Error::Config(format!(
                            "desired_control: expected `reference` or `zero`, got `{other}`"
                        )))
                    }
                }
            }
            "opt_tol" => self.opt_tol = parse_f64(key, value)?,
            "max_iters" => self.max_iters = parse_int(key, value)?,
            "newton_tol" => self.newton_tol = parse_f64(key, value)?,
            "linear_tol" => self.linear_tol = parse_f64(key, value)?,
            "pdas_max_iters" => self.pdas_max_iters = parse_int(key, value)?,
            "levels" => self.levels = parse_list(key, value, parse_int)?,
            "convergence_obstacle" => self.convergence_obstacle = parse_bool(key, value)?,
            "gradcheck_level" => self.gradcheck_level = parse_int(key, value)?,
            "gradcheck_gamma" => self.gradcheck_gamma = parse_f64(key, value)?,
            "gradcheck_controls" => self.gradcheck_controls = parse_int(key, value)?,
            "gradcheck_directions" => self.gradcheck_directions = parse_int(key, value)?,
            "gradcheck_tol" => self.gradcheck_tol = parse_f64(key, value)?,
            "fd_step" => self.fd_step = parse_f64(key, value)?,
            "sensitivity_steps" => self.sensitivity_steps = parse_list(key, value, parse_f64)?,
            "sensitivity_directions" => self.sensitivity_directions = parse_int(key, value)?,
            "direction_scale" => self.direction_scale = parse_f64(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value.trim()),
            "seed" => self.seed = parse_int(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Apply `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {}", no + 1, strip(e))))?;
        }
        Ok(())
    }

    /// Apply a single `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{kv}` is not of the form key=value")))?;
        self.set(k, v)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults, then the optional file, then the overrides, then validation.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            cfg.apply_text(&text)?;
        }
        for kv in overrides {
            cfg.apply_override(kv)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.level > MAX_LEVEL || self.gradcheck_level > MAX_LEVEL || self.levels.iter().any(|&l| l > MAX_LEVEL) {
            return bad(format!("levels must not exceed {MAX_LEVEL}"));
        }
        if self.level < 1 || self.gradcheck_level < 1 || self.levels.iter().any(|&l| l < 1) {
            return bad("levels must be at least 1".into());
        }
        let positive = [
            ("alpha", self.alpha),
            ("c", self.c),
            ("opt_tol", self.opt_tol),
            ("newton_tol", self.newton_tol),
            ("linear_tol", self.linear_tol),
            ("gradcheck_gamma", self.gradcheck_gamma),
            ("gradcheck_tol", self.gradcheck_tol),
            ("fd_step", self.fd_step),
            ("direction_scale", self.direction_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive and finite (got {v})"));
            }
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return bad(format!("beta must be non-negative (got {})", self.beta));
        }
        if self.psi.is_nan() {
            return bad("psi must be a number".into());
        }
        if !(self.q_min > 0.0 && self.q_max > self.q_min && self.q_max.is_finite()) {
            return bad(format!("need 0 < q_min < q_max (got {}, {})", self.q_min, self.q_max));
        }
        if self.gamma.is_empty() || self.gamma.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return bad("gamma must be a nonempty list of positive numbers".into());
        }
        if self.gamma.windows(2).any(|w| w[0] >= w[1]) {
            return bad("gamma must be strictly increasing".into());
        }
        if self.levels.is_empty() || self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return bad("levels must be a nonempty strictly increasing list".into());
        }
        if self.sensitivity_steps.is_empty() || self.sensitivity_steps.iter().any(|&t| !(t > 0.0)) {
            return bad("sensitivity_steps must be positive".into());
        }
        if self.max_iters == 0 || self.pdas_max_iters == 0 {
            return bad("iteration limits must be positive".into());
        }
        let q0 = MatrixControlField::constant(1, self.q_init);
        if !check_admissible(&q0, self.bounds()).admissible {
            return bad("q_init violates the spectral bounds".into());
        }
        Ok(())
    }

    pub fn bounds(&self) -> SpectralBounds {
        SpectralBounds::new(self.q_min, self.q_max)
    }

    pub fn pdas(&self) -> PdasConfig {
        PdasConfig {
            c: self.c,
            max_iters: self.pdas_max_iters,
            linear_tol: self.linear_tol,
            ..PdasConfig::default()
        }
    }

    pub fn penalty(&self, gamma: f64) -> PenaltyConfig {
        PenaltyConfig {
            newton_tol: self.newton_tol,
            linear_tol: self.linear_tol,
            ..PenaltyConfig::new(gamma, self.psi)
        }
    }

    pub fn optimizer(&self) -> OptOptions {
        OptOptions {
            max_iters: self.max_iters,
            tol: self.opt_tol,
            ..OptOptions::default()
        }
    }

    pub fn initial_control(&self, fe: &FeSpace) -> MatrixControlField {
        MatrixControlField::constant(fe.num_nodes(), self.q_init)
    }

    pub fn objective(&self, fe: &FeSpace) -> ObjectiveConfig {
        let q_d = match self.desired_control {
            DesiredControl::Reference => problem::desired_control_field(fe.mesh()),
            DesiredControl::Zero => MatrixControlField::zeros(fe.num_nodes()),
        };
        ObjectiveConfig {
            alpha: self.alpha,
            beta: self.beta,
            u_d: fe.interpolate(problem::desired_state),
            q_d,
            bounds: self.bounds(),
            f_load: fe.assemble_load(problem::source),
        }
    }

    /// Canonical `key = value` rendering; parsing it gives back `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let q = self.q_init;
        let dc = match self.desired_control {
            DesiredControl::Reference => "reference",
            DesiredControl::Zero => "zero",
        };
        let lines: Vec<(&str, String)> = vec![
            ("level", self.level.to_string()),
            ("alpha", format!("{:e}", self.alpha)),
            ("beta", format!("{:e}", self.beta)),
            ("gamma", join_exp(&self.gamma)),
            ("psi", format!("{:e}", self.psi)),
            ("q_min", format!("{:e}", self.q_min)),
            ("q_max", format!("{:e}", self.q_max)),
            ("c", format!("{:e}", self.c)),
            ("q_init", join_exp(&[q.a11, q.a22, q.a12])),
            ("desired_control", dc.to_string()),
            ("opt_tol", format!("{:e}", self.opt_tol)),
            ("max_iters", self.max_iters.to_string()),
            ("newton_tol", format!("{:e}", self.newton_tol)),
            ("linear_tol", format!("{:e}", self.linear_tol)),
            ("pdas_max_iters", self.pdas_max_iters.to_string()),
            ("levels", join(&self.levels)),
            ("convergence_obstacle", self.convergence_obstacle.to_string()),
            ("gradcheck_level", self.gradcheck_level.to_string()),
            ("gradcheck_gamma", format!("{:e}", self.gradcheck_gamma)),
            ("gradcheck_controls", self.gradcheck_controls.to_string()),
            ("gradcheck_directions", self.gradcheck_directions.to_string()),
            ("gradcheck_tol", format!("{:e}", self.gradcheck_tol)),
            ("fd_step", format!("{:e}", self.fd_step)),
            ("sensitivity_steps", join_exp(&self.sensitivity_steps)),
            ("sensitivity_directions", self.sensitivity_directions.to_string()),
            ("direction_scale", format!("{:e}", self.direction_scale)),
            ("output_dir", self.output_dir.display().to_string()),
            ("seed", self.seed.to_string()),
        ];
        for (k, v) in lines {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}
