//! Scenario runners behind the `catgeom` command. Each subcommand reads one
//! JSON config, writes CSV/JSON artifacts and a manifest into its output
//! directory.

pub mod output;
pub mod scenarios;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use catgeom::digest::{json_digest, sha256_hex};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

pub use output::{Cell, FileDigest, Manifest, RunOutput};

pub const SUBCOMMANDS: [&str; 9] =
    ["gauss1d", "pdc2d", "fcat-field", "fcode-field", "train2d", "continuum", "mi-validate", "allocate", "biasvar"];

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Machine-readable failure of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { kind: "Config".into(), message: message.into(), exit_code: EXIT_CONFIG }
    }

    pub fn record(&self) -> Value {
        json!({ "error": self.kind, "message": self.message, "exit_code": self.exit_code })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<catgeom::Error> for CliError {
    fn from(e: catgeom::Error) -> Self {
        let exit_code = if e.is_config_error() { EXIT_CONFIG } else { EXIT_NUMERICAL };
        CliError { kind: e.kind().into(), message: e.to_string(), exit_code }
    }
}

/// A subcommand's configuration and the work it does.
pub trait Scenario: Serialize + DeserializeOwned + Default {
    fn seed(&self) -> u64;
    fn set_seed(&mut self, seed: u64);
    /// Files read by the run, recorded with their digests.
    fn inputs(&self) -> Vec<PathBuf> {
        Vec::new()
    }
    /// Writes artifacts and returns the summary.
    fn run(&self, out: &mut RunOutput) -> catgeom::Result<Value>;
}

#[derive(Debug, Clone)]
pub struct Request {
    pub subcommand: String,
    /// Parsed config; `None` means all defaults.
    pub config: Option<Value>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub manifest: Manifest,
    pub summary: Value,
}

pub fn read_config(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Overlays `patch` on `base`. Objects merge key by key; anything else, and
/// objects whose `kind` tags differ, is replaced.
pub fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) if b.get("kind") == p.get("kind") || p.get("kind").is_none() => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

fn parse<S: Scenario>(raw: Option<&Value>, seed: Option<u64>) -> Result<S, CliError> {
    let mut full = serde_json::to_value(S::default()).map_err(|e| CliError::config(e.to_string()))?;
    if let Some(r) = raw {
        if !r.is_object() {
            return Err(CliError::config("config must be a JSON object"));
        }
        merge(&mut full, r);
    }
    let mut cfg: S = serde_json::from_value(full).map_err(|e| CliError::config(e.to_string()))?;
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    Ok(cfg)
}

/// Fully resolved config of a subcommand, defaults filled in.
pub fn resolve(subcommand: &str, raw: Option<&Value>, seed: Option<u64>) -> Result<Value, CliError> {
    fn go<S: Scenario>(raw: Option<&Value>, seed: Option<u64>) -> Result<Value, CliError> {
        let cfg: S = parse(raw, seed)?;
        serde_json::to_value(&cfg).map_err(|e| CliError::config(e.to_string()))
    }
    use scenarios::*;
    match subcommand {
        "gauss1d" => go::<Gauss1d>(raw, seed),
        "pdc2d" => go::<Pdc2d>(raw, seed),
        "fcat-field" => go::<FcatField>(raw, seed),
        "fcode-field" => go::<FcodeField>(raw, seed),
        "train2d" => go::<Train2d>(raw, seed),
        "continuum" => go::<Continuum>(raw, seed),
        "mi-validate" => go::<MiValidate>(raw, seed),
        "allocate" => go::<Allocate>(raw, seed),
        "biasvar" => go::<Biasvar>(raw, seed),
        other => Err(CliError::config(format!("unknown subcommand {other}"))),
    }
}

pub fn run(req: &Request) -> Result<Report, CliError> {
    use scenarios::*;
    let raw = req.config.as_ref();
    let go = |out: &mut RunOutput| -> Result<(Value, Value, u64, Vec<PathBuf>), CliError> {
        match req.subcommand.as_str() {
            "gauss1d" => execute::<Gauss1d>(raw, req.seed, out),
            "pdc2d" => execute::<Pdc2d>(raw, req.seed, out),
            "fcat-field" => execute::<FcatField>(raw, req.seed, out),
            "fcode-field" => execute::<FcodeField>(raw, req.seed, out),
            "train2d" => execute::<Train2d>(raw, req.seed, out),
            "continuum" => execute::<Continuum>(raw, req.seed, out),
            "mi-validate" => execute::<MiValidate>(raw, req.seed, out),
            "allocate" => execute::<Allocate>(raw, req.seed, out),
            "biasvar" => execute::<Biasvar>(raw, req.seed, out),
            other => Err(CliError::config(format!("unknown subcommand {other}"))),
        }
    };
    if !SUBCOMMANDS.contains(&req.subcommand.as_str()) {
        return Err(CliError::config(format!("unknown subcommand {}", req.subcommand)));
    }
    let mut out = RunOutput::new(&req.out)?;
    let _ = std::fs::remove_file(req.out.join("error.json"));
    let (config, summary, seed, inputs) = match req.threads {
        Some(0) => return Err(CliError::config("--threads must be positive")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::config(e.to_string()))?
            .install(|| go(&mut out))?,
        None => go(&mut out)?,
    };
    out.json("summary.json", &summary)?;

    let inputs = inputs
        .iter()
        .map(|p| output::file_digest(p, &p.display().to_string()))
        .collect::<catgeom::Result<Vec<_>>>()?;
    let config_digest = json_digest(&config);
    let mut combined = config_digest.clone();
    for i in &inputs {
        combined.push_str(&i.sha256);
    }
    let manifest = Manifest {
        subcommand: req.subcommand.clone(),
        cli_version: env!("CARGO_PKG_VERSION").into(),
        core_version: catgeom::VERSION.into(),
        seed,
        config,
        config_digest,
        inputs,
        input_digest: sha256_hex(combined.as_bytes()),
        artifacts: out.digests()?,
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    out.json("manifest.json", &manifest)?;
    Ok(Report { manifest, summary })
}

fn execute<S: Scenario>(
    raw: Option<&Value>,
    seed: Option<u64>,
    out: &mut RunOutput,
) -> Result<(Value, Value, u64, Vec<PathBuf>), CliError> {
    let cfg: S = parse(raw, seed)?;
    for p in cfg.inputs() {
        if !p.is_file() {
            return Err(CliError::config(format!("input file {} does not exist", p.display())));
        }
    }
    let resolved = serde_json::to_value(&cfg).map_err(|e| CliError::config(e.to_string()))?;
    let summary = cfg.run(out)?;
    Ok((resolved, summary, cfg.seed(), cfg.inputs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_keeps_unpatched_defaults() {
        let mut base = json!({ "a": 1, "train": { "epochs": 300, "momentum": 0.9 }, "list": [1, 2] });
        merge(&mut base, &json!({ "train": { "epochs": 20 }, "list": [3] }));
        assert_eq!(base, json!({ "a": 1, "train": { "epochs": 20, "momentum": 0.9 }, "list": [3] }));
    }

    #[test]
    fn merge_replaces_objects_with_another_kind() {
        let mut base = json!({ "source": { "kind": "train", "config": { "runs": 10 } } });
        merge(&mut base, &json!({ "source": { "kind": "checkpoint", "path": "net.json" } }));
        assert_eq!(base, json!({ "source": { "kind": "checkpoint", "path": "net.json" } }));
    }

    #[test]
    fn nested_override_keeps_scenario_defaults() {
        let cfg: scenarios::Train2d = parse(Some(&json!({ "train": { "epochs": 5 } })), Some(9)).unwrap();
        assert_eq!(cfg.train.epochs, 5);
        assert_eq!(cfg.train.momentum, 0.9);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn unknown_fields_and_subcommands_are_config_errors() {
        let e = resolve("gauss1d", Some(&json!({ "nodez": 3 })), None).unwrap_err();
        assert_eq!(e.exit_code, EXIT_CONFIG);
        assert_eq!(resolve("nope", None, None).unwrap_err().exit_code, EXIT_CONFIG);
        assert_eq!(resolve("gauss1d", Some(&json!([1])), None).unwrap_err().exit_code, EXIT_CONFIG);
    }

    #[test]
    fn numerical_errors_exit_with_three() {
        let e: CliError = catgeom::Error::Diverged(4).into();
        assert_eq!(e.exit_code, EXIT_NUMERICAL);
        assert_eq!(e.record()["error"], "Diverged");
    }

    #[test]
    fn every_subcommand_resolves_its_defaults() {
        for s in SUBCOMMANDS {
            let v = resolve(s, None, Some(5)).unwrap();
            assert_eq!(v["seed"], 5, "{s}");
        }
    }
}
