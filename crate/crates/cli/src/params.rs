//! `--params` parsing: inline `key=value` lists, TOML files, or JSON reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use clap::ValueEnum;
use pv_sdm::io::read_report;
use pv_sdm::{DoubleDiodeParams, ModelParams, SingleDiodeParams};

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Single,
    Double,
}

impl ModelKind {
    fn keys(self) -> &'static [&'static str] {
        match self {
            ModelKind::Single => &["i_ph", "i_s", "n", "r_s", "r_sh"],
            ModelKind::Double => &["i_ph", "i_s1", "i_s2", "n1", "n2", "r_s", "r_sh"],
        }
    }

    fn name(self) -> &'static str {
        match self {
            ModelKind::Single => "single",
            ModelKind::Double => "double",
        }
    }
}

/// Resolve `--params`. An existing path is read as a file (`.json` reports
/// contribute their validated or selected parameters, anything else is TOML);
/// otherwise the argument is an inline list such as
/// `i_ph=0.76,i_s=3.2e-7,n=1.48,r_s=0.036,r_sh=53.7`.
pub fn load_params(arg: &str, model: Option<ModelKind>) -> Result<ModelParams> {
    let path = Path::new(arg);
    let params = if path.is_file() {
        if path.extension().is_some_and(|e| e == "json") {
            from_report(path, model)?
        } else {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            from_toml(&text, model).with_context(|| format!("{}", path.display()))?
        }
    } else if arg.contains('=') {
        let map = parse_inline(arg).map_err(|e| anyhow!(UsageError(format!("--params: {e}"))))?;
        build(map, model.unwrap_or(ModelKind::Single))
            .map_err(|e| anyhow!(UsageError(format!("--params: {e}"))))?
    } else {
        bail!(UsageError(format!(
            "--params '{arg}' is neither a file nor a key=value list"
        )));
    };
    params.validate()?;
    Ok(params)
}

fn parse_inline(arg: &str) -> Result<BTreeMap<String, f64>> {
    let mut map = BTreeMap::new();
    for item in arg.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| anyhow!("'{item}' is not key=value"))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| anyhow!("'{}' is not a number", value.trim()))?;
        if map.insert(key.trim().to_string(), value).is_some() {
            bail!("duplicate key {}", key.trim());
        }
    }
    Ok(map)
}

fn from_toml(text: &str, model: Option<ModelKind>) -> Result<ModelParams> {
    let table: toml::Table = toml::from_str(text)?;
    let mut map = BTreeMap::new();
    let mut declared = None;
    for (key, value) in table {
        match (key.as_str(), value) {
            ("model", toml::Value::String(s)) => {
                declared = Some(
                    ModelKind::from_str(&s, false).map_err(|_| anyhow!("unknown model '{s}'"))?,
                );
            }
            (_, toml::Value::Float(x)) => {
                map.insert(key, x);
            }
            (_, toml::Value::Integer(x)) => {
                map.insert(key, x as f64);
            }
            (_, other) => bail!("key {key} must be a number, got {}", other.type_str()),
        }
    }
    let kind = match (declared, model) {
        (Some(a), Some(b)) if a != b => bail!(
            "file declares model '{}' but --model is '{}'",
            a.name(),
            b.name()
        ),
        (Some(k), _) | (None, Some(k)) => k,
        (None, None) => ModelKind::Single,
    };
    build(map, kind)
}

fn from_report(path: &Path, model: Option<ModelKind>) -> Result<ModelParams> {
    let report = read_report(path)?;
    let params = report
        .validation
        .map(|v| v.params)
        .or_else(|| {
            report
                .extractions
                .iter()
                .find_map(|x| x.selected.as_ref())
                .map(|r| ModelParams::Single(r.params))
        })
        .ok_or_else(|| anyhow!("{}: report holds no parameter set", path.display()))?;
    if let Some(kind) = model {
        if params.kind() != kind.name() {
            bail!(
                "{}: report holds a {} model, --model is '{}'",
                path.display(),
                params.kind(),
                kind.name()
            );
        }
    }
    Ok(params)
}

fn build(mut map: BTreeMap<String, f64>, kind: ModelKind) -> Result<ModelParams> {
    let mut take = |key: &str| {
        map.remove(key)
            .ok_or_else(|| anyhow!("missing key {key} for the {} model", kind.name()))
    };
    let params = match kind {
        ModelKind::Single => ModelParams::Single(SingleDiodeParams {
            i_ph: take("i_ph")?,
            i_s: take("i_s")?,
            n: take("n")?,
            r_s: take("r_s")?,
            r_sh: take("r_sh")?,
        }),
        ModelKind::Double => ModelParams::Double(DoubleDiodeParams {
            i_ph: take("i_ph")?,
            i_s1: take("i_s1")?,
            i_s2: take("i_s2")?,
            n1: take("n1")?,
            n2: take("n2")?,
            r_s: take("r_s")?,
            r_sh: take("r_sh")?,
        }),
    };
    if let Some(extra) = map.keys().next() {
        bail!("unknown key {extra} (expected {})", kind.keys().join(", "));
    }
    Ok(params)
}
