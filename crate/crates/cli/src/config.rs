//! Plain-text `key = value` configuration with documented keys, environment
//! overrides (`NELSONLAB_<KEY>`) and range validation.

use anyhow::{anyhow, bail, Result};
use std::collections::BTreeMap;
use std::path::Path;

/// All scenario parameters with their defaults.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ScenarioConfig {
    // grid
    pub d: usize,
    pub box_l: f64,
    pub m: usize,
    // flow
    pub theta: f64,
    /// `f64::INFINITY` encodes the grid-max cutoff.
    pub lambda: f64,
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_stride: usize,
    // oracle
    pub n_particles: usize,
    pub m_b: usize,
    pub m_a: usize,
    pub n_max: usize,
    pub k_dress: f64,
    // run control
    pub seed: u64,
    pub threads: usize,
    pub write_snapshots: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            d: 1,
            box_l: 16.0 * std::f64::consts::PI,
            m: 256,
            theta: 1.0,
            lambda: f64::INFINITY,
            dt: 1e-3,
            t_final: 1.0,
            snapshot_stride: 50,
            n_particles: 4,
            m_b: 4,
            m_a: 3,
            n_max: 4,
            k_dress: f64::INFINITY,
            seed: 7,
            threads: 0,
            write_snapshots: false,
        }
    }
}

pub const KNOWN_KEYS: &[&str] = &[
    "d",
    "box_l",
    "m",
    "theta",
    "lambda",
    "dt",
    "t_final",
    "snapshot_stride",
    "n_particles",
    "m_b",
    "m_a",
    "n_max",
    "k_dress",
    "seed",
    "threads",
    "write_snapshots",
];

impl ScenarioConfig {
    /// Parse a `key = value` file ('#' starts a comment); unknown keys are
    /// rejected with their names, parse errors with line numbers.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow!("cannot read config {}: {e}", path.display()))?;
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("config line {}: expected `key = value`", lineno + 1);
            };
            let key = k.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!("config line {}: unknown key `{key}`", lineno + 1);
            }
            map.insert(key, (v.trim().to_string(), lineno + 1));
        }
        let mut cfg = Self::default();
        cfg.apply(&map)?;
        cfg.apply_env()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_defaults_and_env() -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_env()?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, map: &BTreeMap<String, (String, usize)>) -> Result<()> {
        for (key, (val, line)) in map {
            self.set(key, val)
                .map_err(|e| anyhow!("config line {line}: {e}"))?;
        }
        Ok(())
    }

    fn apply_env(&mut self) -> Result<()> {
        for key in KNOWN_KEYS {
            let env_key = format!("NELSONLAB_{}", key.to_uppercase());
            if let Ok(val) = std::env::var(&env_key) {
                self.set(key, &val)
                    .map_err(|e| anyhow!("env {env_key}: {e}"))?;
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, val: &str) -> Result<()> {
        fn f(v: &str) -> Result<f64> {
            if v == "max" || v == "inf" {
                return Ok(f64::INFINITY);
            }
            v.parse::<f64>().map_err(|e| anyhow!("bad number `{v}`: {e}"))
        }
        fn u(v: &str) -> Result<usize> {
            v.parse::<usize>().map_err(|e| anyhow!("bad integer `{v}`: {e}"))
        }
        match key {
            "d" => self.d = u(val)?,
            "box_l" => self.box_l = f(val)?,
            "m" => self.m = u(val)?,
            "theta" => self.theta = f(val)?,
            "lambda" => self.lambda = f(val)?,
            "dt" => self.dt = f(val)?,
            "t_final" => self.t_final = f(val)?,
            "snapshot_stride" => self.snapshot_stride = u(val)?,
            "n_particles" => self.n_particles = u(val)?,
            "m_b" => self.m_b = u(val)?,
            "m_a" => self.m_a = u(val)?,
            "n_max" => self.n_max = u(val)?,
            "k_dress" => self.k_dress = f(val)?,
            "seed" => self.seed = val.parse()?,
            "threads" => self.threads = u(val)?,
            "write_snapshots" => self.write_snapshots = val.parse()?,
            other => bail!("unknown key `{other}`"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.d) {
            bail!("d must be 1, 2 or 3");
        }
        if self.m % 2 != 0 || self.m < 4 {
            bail!("M must be even and >= 4, got {}", self.m);
        }
        if self.box_l <= 0.0 {
            bail!("box_l must be positive");
        }
        if !(0.0..=1.0).contains(&self.theta) {
            bail!("theta must lie in [0, 1]");
        }
        if self.dt <= 0.0 || self.t_final < 0.0 {
            bail!("dt must be positive and t_final nonnegative");
        }
        if self.n_particles < 1 || self.m_b < 1 || self.m_a < 1 || self.n_max < 1 {
            bail!("oracle sizes must be at least 1");
        }
        Ok(())
    }

    pub fn cutoff(&self) -> nelsonlab_core::Cutoff<f64> {
        if self.lambda.is_infinite() {
            nelsonlab_core::Cutoff::GridMax
        } else {
            nelsonlab_core::Cutoff::Finite(self.lambda)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults_and_rejections() {
        let dir = std::env::temp_dir().join("nelsonlab_cfg_test");
        std::fs::create_dir_all(&dir).unwrap();

        // empty file: all defaults
        let p = dir.join("empty.cfg");
        std::fs::write(&p, "").unwrap();
        let cfg = ScenarioConfig::from_file(&p).unwrap();
        assert_eq!(cfg.d, 1);
        assert_eq!(cfg.m, 256);
        assert!((cfg.box_l - 16.0 * std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(cfg.dt, 1e-3);
        assert_eq!(cfg.theta, 1.0);
        assert!(cfg.lambda.is_infinite());

        // odd M rejected with the reason
        let p = dir.join("oddm.cfg");
        std::fs::write(&p, "m = 255\n").unwrap();
        let err = ScenarioConfig::from_file(&p).unwrap_err().to_string();
        assert!(err.contains("M must be even"), "{err}");

        // unknown key rejected by name
        let p = dir.join("unknown.cfg");
        let mut f = std::fs::File::create(&p).unwrap();
        writeln!(f, "m = 64").unwrap();
        writeln!(f, "wavelength = 3").unwrap();
        let err = ScenarioConfig::from_file(&p).unwrap_err().to_string();
        assert!(err.contains("wavelength"), "{err}");

        // comments and lambda = max accepted
        let p = dir.join("ok.cfg");
        std::fs::write(&p, "# comment\nlambda = max\nm = 64 # inline\n").unwrap();
        let cfg = ScenarioConfig::from_file(&p).unwrap();
        assert!(cfg.lambda.is_infinite());
        assert_eq!(cfg.m, 64);
    }
}
