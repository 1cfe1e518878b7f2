//! Pipeline configuration: flat `key = value` text, overridable per key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{builtin_cs1, builtin_cs2_with, parse_network, LatticeDomain, ReactionNetwork, VolumeScaling};
use crate::pipeline::{DiscoveryParams, TruthKind, DEFAULT_EPS, DEFAULT_RHO};
use crate::spectral::{DEFAULT_MAX_ITERS, DEFAULT_TOL};

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "SLOWVAR_OUT";

/// Default CMA sweep.
pub const DEFAULT_LCS: [usize; 6] = [100, 500, 2_000, 5_000, 10_000, 20_000];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemChoice {
    Cs1,
    Cs2,
    File(PathBuf),
}

impl std::str::FromStr for SystemChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "cs1" | "CS-I" => SystemChoice::Cs1,
            "cs2" | "CS-II" => SystemChoice::Cs2,
            "" => return Err(Error::Config("empty system".into())),
            path => SystemChoice::File(PathBuf::from(path)),
        })
    }
}

impl std::fmt::Display for SystemChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SystemChoice::Cs1 => f.write_str("cs1"),
            SystemChoice::Cs2 => f.write_str("cs2"),
            SystemChoice::File(p) => write!(f, "{}", p.display()),
        }
    }
}

/// A loaded system: network, domain and which ground truth applies.
#[derive(Debug, Clone)]
pub struct System {
    pub name: String,
    pub network: ReactionNetwork,
    pub domain: LatticeDomain,
    pub truth: TruthKind,
    /// Initial state for trajectory output.
    pub x0: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub system: SystemChoice,
    pub convention: VolumeScaling,
    pub eps: f64,
    pub rho: f64,
    pub dt: Option<f64>,
    pub k: Option<usize>,
    pub band: Option<usize>,
    pub tol: f64,
    pub max_iters: usize,
    pub n_eigs: usize,
    /// Length of the emitted `1 − λ` spectrum; zero skips it.
    pub spectrum_k: usize,
    pub seed: u64,
    pub lcs: Vec<usize>,
    /// Independent CMA repetitions with consecutive seeds.
    pub cma_seeds: usize,
    /// Horizon of the emitted trajectories.
    pub t_end: f64,
    /// CLE step of the emitted trajectory.
    pub cle_dt: f64,
    pub out_dir: PathBuf,
    /// `None` uses all available cores.
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            system: SystemChoice::Cs1,
            convention: VolumeScaling::Stated,
            eps: DEFAULT_EPS,
            rho: DEFAULT_RHO,
            dt: None,
            k: None,
            band: None,
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
            n_eigs: 2,
            spectrum_k: 100,
            seed: 1,
            lcs: DEFAULT_LCS.to_vec(),
            cma_seeds: 1,
            t_end: 0.5,
            cle_dt: 1e-4,
            out_dir: PathBuf::from("out"),
            workers: None,
        }
    }
}

fn auto<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse `{value}` for `{key}`")))
}

impl PipelineConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "system" => self.system = value.parse()?,
            "convention" => self.convention = value.parse()?,
            "eps" => self.eps = parse(key, value)?,
            "rho" => self.rho = parse(key, value)?,
            "dt" => self.dt = auto(key, value)?,
            "k" => self.k = auto(key, value)?,
            "band" => self.band = auto(key, value)?,
            "tol" => self.tol = parse(key, value)?,
            "max_iters" => self.max_iters = parse(key, value)?,
            "n_eigs" => self.n_eigs = parse(key, value)?,
            "spectrum_k" => self.spectrum_k = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "lc" | "lcs" => {
                self.lcs = value
                    .split(',')
                    .map(|v| parse(key, v.trim()))
                    .collect::<Result<_>>()?
            }
            "cma_seeds" => self.cma_seeds = parse(key, value)?,
            "t_end" => self.t_end = parse(key, value)?,
            "cle_dt" => self.cle_dt = parse(key, value)?,
            "out_dir" | "out" => self.out_dir = PathBuf::from(value),
            "workers" => self.workers = auto(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies every setting in a key–value text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected `key = value`", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Rendering that [`apply_text`](Self::apply_text) reads back.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "auto".into());
        let lcs: Vec<String> = self.lcs.iter().map(ToString::to_string).collect();
        [
            format!("system = {}", self.system),
            format!("convention = {}", self.convention),
            format!("eps = {}", self.eps),
            format!("rho = {}", self.rho),
            format!("dt = {}", opt(self.dt.map(|v| v.to_string()))),
            format!("k = {}", opt(self.k.map(|v| v.to_string()))),
            format!("band = {}", opt(self.band.map(|v| v.to_string()))),
            format!("tol = {}", self.tol),
            format!("max_iters = {}", self.max_iters),
            format!("n_eigs = {}", self.n_eigs),
            format!("spectrum_k = {}", self.spectrum_k),
            format!("seed = {}", self.seed),
            format!("lcs = {}", lcs.join(",")),
            format!("cma_seeds = {}", self.cma_seeds),
            format!("t_end = {}", self.t_end),
            format!("cle_dt = {}", self.cle_dt),
            format!("out_dir = {}", self.out_dir.display()),
            format!("workers = {}", opt(self.workers.map(|v| v.to_string()))),
        ]
        .join("\n")
            + "\n"
    }

    pub fn discovery(&self) -> DiscoveryParams {
        DiscoveryParams {
            eps: self.eps,
            rho: self.rho,
            dt: self.dt,
            k: self.k,
            band: self.band,
            tol: self.tol,
            max_iters: self.max_iters,
            n_eigs: self.n_eigs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.discovery().validate()?;
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.t_end) || !positive(self.cle_dt) {
            return Err(Error::Config("t_end and cle_dt must be positive".into()));
        }
        if self.lcs.is_empty() || self.lcs.contains(&0) {
            return Err(Error::Config("lcs must list positive values".into()));
        }
        if self.cma_seeds == 0 || self.workers == Some(0) {
            return Err(Error::Config("cma_seeds and workers must be at least one".into()));
        }
        Ok(())
    }

    pub fn load_system(&self) -> Result<System> {
        match &self.system {
            SystemChoice::Cs1 => {
                let (network, domain) = builtin_cs1();
                Ok(System { name: "cs1".into(), network, domain, truth: TruthKind::Poisson, x0: vec![100, 100] })
            }
            SystemChoice::Cs2 => {
                let (network, domain) = builtin_cs2_with(self.convention);
                Ok(System { name: "cs2".into(), network, domain, truth: TruthKind::FullCme, x0: vec![20, 20] })
            }
            SystemChoice::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read network {}: {e}", path.display())))?;
                let file = parse_network(&text)?;
                let domain = file
                    .domain
                    .ok_or_else(|| Error::Config(format!("{} declares no domain", path.display())))?;
                let x0 = domain.lo().iter().zip(domain.hi()).map(|(l, h)| (l + h) / 2).collect();
                let name = path.file_stem().map_or("custom".into(), |s| s.to_string_lossy().into_owned());
                Ok(System { name, network: file.network, domain, truth: TruthKind::FullCme, x0 })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text("system = cs2  # comment\nk = 314\nlcs = 100, 500\nworkers = 3\n").unwrap();
        assert_eq!(cfg.system, SystemChoice::Cs2);
        assert_eq!(cfg.k, Some(314));
        assert_eq!(cfg.lcs, vec![100, 500]);
        let mut back = PipelineConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        let mut cfg = PipelineConfig::default();
        assert!(matches!(cfg.set("colour", "red"), Err(Error::Config(_))));
        assert!(matches!(cfg.set("eps", "x"), Err(Error::Config(_))));
        cfg.set("eps", "-1").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig { lcs: vec![], ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
