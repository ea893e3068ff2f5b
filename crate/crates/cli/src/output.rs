//! Files written into the output directory.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use polyharm::format::json_f64;
use serde_json::{Map, Value};

use crate::config::{Format, RunConfig};
use crate::{CliError, Command};

pub const MANIFEST: &str = "manifest.json";

fn path(cfg: &RunConfig, name: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&cfg.output.directory)?;
    Ok(cfg.output.directory.join(name))
}

/// Rewrites every non-integer number with the fixed 17-digit form.
pub fn normalize(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n.as_f64().map(json_f64).unwrap_or(Value::Null),
        Value::Array(a) => Value::Array(a.into_iter().map(normalize).collect()),
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, v)| (k, normalize(v))).collect()),
        v => v,
    }
}

fn write_value(cfg: &RunConfig, name: &str, v: &Value) -> Result<PathBuf, CliError> {
    let p = path(cfg, name)?;
    let mut text = serde_json::to_string_pretty(v).map_err(std::io::Error::from)?;
    text.push('\n');
    fs::write(&p, text)?;
    Ok(p)
}

pub fn write_manifest(cfg: &RunConfig, cmd: Command) -> Result<(), CliError> {
    let config = serde_json::to_value(cfg).map_err(std::io::Error::from)?;
    let mut m = Map::new();
    m.insert("command".into(), Value::from(cmd.name()));
    m.insert("config".into(), normalize(config));
    m.insert("version".into(), Value::from(env!("CARGO_PKG_VERSION")));
    write_value(cfg, MANIFEST, &Value::Object(m))?;
    Ok(())
}

/// Writes `name` when JSON output is enabled.
pub fn json(cfg: &RunConfig, name: &str, v: &Value) -> Result<(), CliError> {
    if cfg.emits(Format::Json) {
        let p = write_value(cfg, name, &normalize(v.clone()))?;
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

/// Writes `name` through `fill` when CSV output is enabled.
pub fn csv<F>(cfg: &RunConfig, name: &str, fill: F) -> Result<(), CliError>
where
    F: FnOnce(&mut Vec<u8>) -> Result<(), CliError>,
{
    if cfg.emits(Format::Csv) {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        let p = path(cfg, name)?;
        fs::File::create(&p)?.write_all(&buf)?;
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

/// `key=value` lines on stdout, in insertion order.
#[derive(Debug, Default)]
pub struct Report(Vec<(String, String)>);

impl Report {
    pub fn add(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.0.push((key.to_string(), value.to_string()));
        self
    }

    pub fn print(&self) {
        for (k, v) in &self.0 {
            println!("{k}={v}");
        }
    }
}
