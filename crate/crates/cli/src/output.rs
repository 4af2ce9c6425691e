use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Format, RunConfig};
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// What a command produced: a JSON result, a flat CSV table with summary
/// lines, and the reason when there is no answer.
pub struct Artifact {
    pub result: Value,
    pub summary: Vec<(String, String)>,
    pub csv: String,
    pub missing: Option<String>,
}

impl Artifact {
    pub fn new(result: impl Serialize) -> Result<Self, CliError> {
        Ok(Artifact {
            result: serde_json::to_value(result).map_err(|e| CliError::NoResult(e.to_string()))?,
            summary: Vec::new(),
            csv: String::new(),
            missing: None,
        })
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.summary.push((key.to_string(), value.to_string()));
        self
    }
}

/// CSV text from serializable rows.
pub fn table<R: Serialize>(rows: &[R]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::NoResult(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::NoResult(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::NoResult(e.to_string()))
}

pub fn render(command: &str, cfg: &RunConfig, a: &Artifact) -> Result<String, CliError> {
    let config = serde_json::to_value(cfg).map_err(|e| CliError::NoResult(e.to_string()))?;
    Ok(match cfg.format.unwrap_or_default() {
        Format::Json => {
            let summary: serde_json::Map<String, Value> =
                a.summary.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
            let doc = json!({
                "tool": "psho",
                "version": VERSION,
                "command": command,
                "config": config,
                "summary": summary,
                "result": a.result,
            });
            let mut s = serde_json::to_string_pretty(&doc).map_err(|e| CliError::NoResult(e.to_string()))?;
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut s = format!("# psho {VERSION} {command}\n# config {config}\n");
            for (k, v) in &a.summary {
                s.push_str(&format!("# {k}={v}\n"));
            }
            s.push_str(&a.csv);
            s
        }
    })
}

pub fn emit(command: &str, cfg: &RunConfig, a: &Artifact) -> Result<(), CliError> {
    let text = render(command, cfg, a)?;
    match &cfg.out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Input(e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        n: usize,
        e: Option<f64>,
    }

    #[test]
    fn csv_rows() {
        let s = table(&[Row { n: 1, e: Some(-1.5) }, Row { n: 2, e: None }]).unwrap();
        assert_eq!(s, "n,e\n1,-1.5\n2,\n");
    }

    #[test]
    fn csv_embeds_config_and_version() {
        let cfg = RunConfig { format: Some(Format::Csv), tau: Some(0.5), ..Default::default() };
        let a = Artifact::new(1).unwrap().with("energy", -1.0);
        let s = render("moments", &cfg, &a).unwrap();
        assert!(s.starts_with(&format!("# psho {VERSION} moments\n# config {{")));
        assert!(s.contains("\"tau\":0.5"));
        assert!(s.contains("# energy=-1\n"));
    }

    #[test]
    fn json_embeds_config_and_version() {
        let cfg = RunConfig { seed: Some(7), ..Default::default() };
        let s = render("direct", &cfg, &Artifact::new(vec![1, 2]).unwrap()).unwrap();
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["version"], VERSION);
        assert_eq!(v["config"]["seed"], 7);
        assert_eq!(v["result"], json!([1, 2]));
    }
}
