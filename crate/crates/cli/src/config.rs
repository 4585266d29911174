use std::path::Path;

use selfgrasp::orchestrator::RunConfig;
use selfgrasp::{Error, Result};

pub const CONFIG_ECHO: &str = "config.toml";

/// Parse a run config from TOML, or JSON when the extension says so.
/// Unknown keys are rejected at every level.
pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn to_toml(cfg: &RunConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
}

/// Write the effective config into a run directory.
pub fn echo(cfg: &RunConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(CONFIG_ECHO), to_toml(cfg)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&to_toml(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_nested_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seed = 3\n[detector]\nbogus = 1\n").unwrap();
        assert!(matches!(load(&p), Err(Error::Config(_))));
        std::fs::write(&p, "seed = 3\n[detector]\nconf_min = 0.2\n").unwrap();
        let cfg = load(&p).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.detector.conf_min, 0.2);
    }

    #[test]
    fn json_configs_are_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"seed": 9, "mode": "baseline"}"#).unwrap();
        let cfg = load(&p).unwrap();
        assert_eq!(cfg.seed, 9);
        std::fs::write(&p, r#"{"sede": 9}"#).unwrap();
        assert!(load(&p).is_err());
    }
}
