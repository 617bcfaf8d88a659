//! Resolution of command-line flags against an optional key=value file and
//! fixture defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use affine_lpv::dataset::{generate_trajectories, natural_count, parse_generator_spec};
use affine_lpv::geometry::MveeOptions;
use affine_lpv::{
    fixture, parse_system, Classify, EmbedOptions, Fixture, OrderChoice, PipelineError, RegionOptions, RegionStrategy,
    StdConvention, SystemDescription, TrajectoryDataset, DEFAULT_EPS_SIGMA,
};

use crate::{Source, Tuning};

const KEYS: [&str; 15] = [
    "fixture", "system", "data", "generate", "period", "samples", "order", "energy", "region", "std", "eps-sigma",
    "tol-mvee", "box-eps", "seed", "out",
];

pub fn config_error(msg: impl std::fmt::Display) -> PipelineError {
    PipelineError::config("config", msg)
}

/// `key = value` lines; `#` starts a comment. Keys are the long flag names.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, PipelineError> {
    let mut out = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config_error(format!("line {}: expected `key = value`", ln + 1)))?;
        let key = k.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(config_error(format!("line {}: unknown key `{key}`", ln + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

/// Flags merged with the config file.
pub struct Settings {
    file: BTreeMap<String, String>,
    source: Source,
    tuning: Tuning,
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T, PipelineError>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| config_error(format!("{key}: cannot parse `{v}`: {e}")))
}

impl Settings {
    pub fn new(source: &Source, tuning: &Tuning) -> Result<Self, PipelineError> {
        let file = match &source.config {
            Some(p) => parse_config(&read(p)?)?,
            None => BTreeMap::new(),
        };
        Ok(Self {
            file,
            source: source.clone(),
            tuning: tuning.clone(),
        })
    }

    fn get<T: FromStr + Clone>(&self, key: &str, flag: &Option<T>) -> Result<Option<T>, PipelineError>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v.clone())),
            None => self.file.get(key).map(|v| parse_value(key, v)).transpose(),
        }
    }

    pub fn out(&self) -> Option<String> {
        self.file.get("out").cloned()
    }

    pub fn fixture(&self) -> Result<Option<Fixture>, PipelineError> {
        let name = self.get("fixture", &self.source.fixture)?;
        let system = self.get("system", &self.source.system)?;
        match (name, system) {
            (Some(_), Some(_)) if self.source.fixture.is_none() || self.source.system.is_none() => {
                // One from the file, one from the flags: the flag wins.
                match &self.source.fixture {
                    Some(n) => fixture(n).map(Some).map_err(config_error),
                    None => Ok(None),
                }
            }
            (Some(_), Some(_)) => Err(config_error("give either a fixture or a system file, not both")),
            (Some(n), None) => fixture(&n).map(Some).map_err(config_error),
            (None, _) => Ok(None),
        }
    }

    pub fn system(&self, fx: Option<&Fixture>) -> Result<SystemDescription, PipelineError> {
        if let Some(f) = fx {
            return Ok(f.system.clone());
        }
        let path: std::path::PathBuf = self
            .get("system", &self.source.system)?
            .ok_or_else(|| config_error("no system: pass --fixture or --system"))?;
        parse_system(&read(&path)?).map_err(|e| PipelineError::config("parse_system", format!("{}: {e}", path.display())))
    }

    pub fn dataset(&self, fx: Option<&Fixture>) -> Result<TrajectoryDataset, PipelineError> {
        let data: Option<std::path::PathBuf> = self.get("data", &self.source.data)?;
        let gen: Option<String> = self.get("generate", &self.source.generate)?;
        match (data, gen) {
            (Some(_), Some(_)) => Err(config_error("give either --data or --generate, not both")),
            (Some(p), None) => TrajectoryDataset::load_csv(&p).map_err(|e| e.at("load_trajectories")),
            (None, Some(g)) => {
                let text = match g.strip_prefix('@') {
                    Some(path) => read(Path::new(path))?,
                    None => g,
                };
                let spec = parse_generator_spec(&text).map_err(|e| e.at("generate_trajectories"))?;
                let period = self
                    .get("period", &self.source.period)?
                    .or(fx.map(|f| f.period))
                    .ok_or_else(|| config_error("--generate needs --period"))?;
                let n = self
                    .get("samples", &self.source.samples)?
                    .or(natural_count(&spec))
                    .or(fx.map(|f| f.samples))
                    .ok_or_else(|| config_error("--generate needs --samples for unbounded generators"))?;
                generate_trajectories(&spec, period, n).map_err(|e| e.at("generate_trajectories"))
            }
            (None, None) => match fx {
                Some(f) => f.dataset().map_err(|e| e.at("generate_trajectories")),
                None => Err(config_error("no data: pass --data or --generate")),
            },
        }
    }

    pub fn embed_options(&self, fx: Option<&Fixture>) -> Result<EmbedOptions, PipelineError> {
        let mut o = fx.map(EmbedOptions::for_fixture).unwrap_or_default();
        let order = self.get("order", &self.tuning.order)?;
        let energy = self.get("energy", &self.tuning.energy)?;
        match (order, energy) {
            (Some(_), Some(_)) if self.tuning.order.is_some() && self.tuning.energy.is_some() => {
                return Err(config_error("give either --order or --energy"))
            }
            (Some(n), e) if self.tuning.order.is_some() || self.tuning.energy.is_none() || e.is_none() => {
                if n == 0 {
                    return Err(config_error("order must be at least 1"));
                }
                o.order = OrderChoice::Fixed(n);
            }
            (_, Some(f)) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(config_error(format!("energy must lie in (0, 1], got {f}")));
                }
                o.order = OrderChoice::Energy(f);
            }
            _ => {}
        }
        if let Some(r) = self.get::<String>("region", &self.tuning.region)? {
            o.region = r.parse::<RegionStrategy>().map_err(config_error)?;
        }
        if let Some(s) = self.get::<String>("std", &self.tuning.std)? {
            o.std_convention = s.parse::<StdConvention>().map_err(config_error)?;
        }
        o.eps_sigma = self.get("eps-sigma", &self.tuning.eps_sigma)?.unwrap_or(DEFAULT_EPS_SIGMA);
        if !(o.eps_sigma >= 0.0) {
            return Err(config_error("eps-sigma must be non-negative"));
        }
        let defaults = RegionOptions::default();
        let tol = self.get("tol-mvee", &self.tuning.tol_mvee)?.unwrap_or(defaults.mvee.tolerance);
        let box_eps = self.get("box-eps", &self.tuning.box_eps)?.unwrap_or(defaults.box_eps);
        if !(tol > 0.0) {
            return Err(config_error("tol-mvee must be positive"));
        }
        if !(box_eps > 0.0 && box_eps <= 0.5) {
            return Err(config_error("box-eps must lie in (0, 0.5]"));
        }
        o.region_options = RegionOptions {
            mvee: MveeOptions {
                tolerance: tol,
                ..defaults.mvee
            },
            box_eps,
            seed: self.get("seed", &self.tuning.seed)?.unwrap_or(defaults.seed),
        };
        Ok(o)
    }
}

pub fn read(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

pub fn parse_list(what: &str, s: &str) -> Result<Vec<f64>, PipelineError> {
    s.split(',')
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| parse_value(what, t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_lines() {
        let c = parse_config("# settings\nfixture = example1\norder=2\nbox_eps = 0.05 # finer\n").unwrap();
        assert_eq!(c["fixture"], "example1");
        assert_eq!(c["box-eps"], "0.05");
        assert!(parse_config("colour = red\n").is_err());
        assert!(parse_config("order 2\n").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        std::fs::write(&p, "fixture = example2\norder = 1\nregion = ellipsoid\n").unwrap();
        let source = Source {
            config: Some(p),
            ..Source::default()
        };
        let tuning = Tuning {
            order: Some(2),
            ..Tuning::default()
        };
        let s = Settings::new(&source, &tuning).unwrap();
        let fx = s.fixture().unwrap();
        assert_eq!(fx.as_ref().unwrap().name, "example2");
        let o = s.embed_options(fx.as_ref()).unwrap();
        assert_eq!(o.order, OrderChoice::Fixed(2));
        assert_eq!(o.region, RegionStrategy::Ellipsoid);
        assert_eq!(o.std_convention, StdConvention::Sample);
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list("x0", "1, -0.5").unwrap(), vec![1.0, -0.5]);
        assert!(parse_list("x0", "1,a").is_err());
    }
}
