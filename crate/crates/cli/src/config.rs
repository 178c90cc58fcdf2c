//! Loading run configurations from TOML or JSON.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use seld_forge::Error;

/// Fields shared by every subcommand's configuration.
pub trait RunConfig: Serialize + DeserializeOwned {
    fn seed_slot(&mut self) -> &mut Option<u64>;
    fn output_slot(&mut self) -> &mut Option<PathBuf>;
}

pub fn load<C: DeserializeOwned>(path: &Path) -> Result<C, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let describe = |p: String, msg: String| {
        let at = if p.is_empty() || p == "." { String::new() } else { format!(" at `{p}`") };
        Error::Config(format!("{}{at}: {msg}", path.display()))
    };
    if is_json {
        let mut de = serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(&mut de).map_err(|e| describe(e.path().to_string(), e.into_inner().to_string()))
    } else {
        let de = toml::Deserializer::parse(&text).map_err(|e| describe(String::new(), e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| describe(e.path().to_string(), e.into_inner().message().to_string()))
    }
}

/// Fills seed and output directory from the command line, which takes
/// precedence over the file. Both must end up present.
pub fn resolve<C: RunConfig>(cfg: &mut C, seed: Option<u64>, out: Option<PathBuf>) -> Result<(u64, PathBuf), Error> {
    if seed.is_some() {
        *cfg.seed_slot() = seed;
    }
    if out.is_some() {
        *cfg.output_slot() = out;
    }
    let seed = cfg.seed_slot().ok_or_else(|| Error::Config("missing required key `seed` (set it in the config or pass --seed)".into()))?;
    let out = cfg
        .output_slot()
        .clone()
        .ok_or_else(|| Error::Config("missing required key `output_dir` (set it in the config or pass --out)".into()))?;
    Ok((seed, out))
}

pub fn write_resolved<C: Serialize>(cfg: &C, out: &Path) -> Result<(), Error> {
    let text = toml::to_string(cfg).map_err(|e| Error::Config(format!("cannot serialize resolved config: {e}")))?;
    let path = out.join("resolved_config.toml");
    std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })
}

macro_rules! run_config {
    ($t:ty) => {
        impl $crate::config::RunConfig for $t {
            fn seed_slot(&mut self) -> &mut Option<u64> {
                &mut self.seed
            }
            fn output_slot(&mut self) -> &mut Option<std::path::PathBuf> {
                &mut self.output_dir
            }
        }
    };
}
pub(crate) use run_config;
