use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::builtins::{baird_star, random_setup, twostate, RandomSpec};
use crate::mdp::{EvaluationSetup, ProblemFile};

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSource {
    File(PathBuf),
    Builtin(String),
}

/// A resolved, validated problem plus a content hash of its canonical form.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub source: ProblemSource,
    pub resolved: EvaluationSetup,
    pub hash: String,
}

impl ProblemSpec {
    pub fn from_setup(
        name: impl Into<String>,
        source: ProblemSource,
        setup: EvaluationSetup,
    ) -> Self {
        let hash = content_hash(&setup);
        Self {
            name: name.into(),
            source,
            resolved: setup,
            hash,
        }
    }
}

/// SHA-256 over the canonical JSON of the resolved problem.
pub fn content_hash(setup: &EvaluationSetup) -> String {
    let canonical = serde_json::to_vec(&setup.to_problem_file()).expect("problem serialises");
    hex::encode(Sha256::digest(&canonical))
}

pub fn is_builtin(id: &str) -> bool {
    matches!(id, "twostate" | "baird-star") || id.starts_with("random-k")
}

pub fn resolve_builtin(id: &str) -> Result<EvaluationSetup> {
    match id {
        "twostate" => Ok(twostate()),
        "baird-star" => Ok(baird_star()),
        _ if id.starts_with("random-k") => random_setup(&RandomSpec::parse(id)?),
        _ => Err(Error::config(format!("unknown builtin problem '{id}'"))),
    }
}

/// Parses and validates a problem JSON document.
pub fn parse_problem_json(text: &str) -> Result<EvaluationSetup> {
    let file: ProblemFile = serde_json::from_str(text)?;
    file.resolve()
}

/// Loads a builtin id (`twostate`, `baird-star`, `random-k?…`) or a JSON
/// problem file.
pub fn load_problem(source: &str) -> Result<ProblemSpec> {
    if is_builtin(source) {
        let setup = resolve_builtin(source)?;
        return Ok(ProblemSpec::from_setup(
            source,
            ProblemSource::Builtin(source.to_string()),
            setup,
        ));
    }
    let path = Path::new(source);
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read problem file {source}: {e}")))?;
    let setup = parse_problem_json(&text)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| source.to_string());
    Ok(ProblemSpec::from_setup(
        name,
        ProblemSource::File(path.to_path_buf()),
        setup,
    ))
}
