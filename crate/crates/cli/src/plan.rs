//! Ordered stage lists run as one pipeline.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::stages::{run_stage, Stage, StageIo};

pub const NAMED_PLANS: [(&str, &str); 3] = [
    (
        "pretraining",
        include_str!("../fixtures/plans/pretraining.toml"),
    ),
    (
        "instruction",
        include_str!("../fixtures/plans/instruction.toml"),
    ),
    ("rlhf", include_str!("../fixtures/plans/rlhf.toml")),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanStage {
    pub stage: String,
    /// Explicit input; when absent the previous stage's output is used.
    #[serde(default)]
    pub input: Option<String>,
    #[serde(default)]
    pub answers: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plan {
    pub name: String,
    pub stages: Vec<PlanStage>,
}

impl Plan {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid plan: {e}")))
    }

    pub fn named(name: &str) -> Option<Self> {
        NAMED_PLANS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| Self::parse(t).expect("shipped plans parse"))
    }

    /// Resolve stage names and check that each implicit input has the kind
    /// the previous stage produces.
    pub fn check(&self) -> Result<Vec<Stage>, CliError> {
        if self.stages.is_empty() {
            return Err(CliError::Usage(format!(
                "plan `{}` has no stages",
                self.name
            )));
        }
        let mut stages = Vec::new();
        let mut prev: Option<Stage> = None;
        for (i, s) in self.stages.iter().enumerate() {
            let stage: Stage = s.stage.parse()?;
            if s.input.is_none() {
                match prev {
                    None => {
                        return Err(CliError::Usage(format!(
                            "stage {} ({stage}) needs an input",
                            i + 1
                        )))
                    }
                    Some(p) if p.output_kind() != stage.input_kind() => {
                        return Err(CliError::Usage(format!(
                            "stage {} ({stage}) reads {:?} but {p} produces {:?}",
                            i + 1,
                            stage.input_kind(),
                            p.output_kind()
                        )))
                    }
                    Some(_) => {}
                }
            }
            if stage == Stage::Eval && s.answers.is_none() {
                return Err(CliError::Usage(format!(
                    "stage {} (eval) needs `answers`",
                    i + 1
                )));
            }
            prev = Some(stage);
            stages.push(stage);
        }
        Ok(stages)
    }
}

/// A pipeline stopped part-way; manifests of the completed stages are kept.
#[derive(Debug, thiserror::Error)]
#[error("stage {} failed: {error}", completed.len() + 1)]
pub struct PipelineError {
    pub completed: Vec<RunManifest>,
    pub error: CliError,
}

/// Output path of stage `index` (0-based) in `workdir`.
pub fn stage_output(workdir: &Path, index: usize, stage: Stage) -> PathBuf {
    workdir.join(format!(
        "{:02}-{}.{}",
        index + 1,
        stage,
        stage.output_extension()
    ))
}

/// Run every stage in order, failing fast. Explicit inputs are resolved
/// against `base`; outputs and the run log go to `workdir`. Completed stages
/// whose inputs and config are unchanged are skipped, so rerunning after a
/// failure resumes where it stopped.
pub fn run_pipeline(
    plan: &Plan,
    cfg: &Config,
    base: &Path,
    workdir: &Path,
) -> Result<Vec<RunManifest>, PipelineError> {
    let fail = |completed: Vec<RunManifest>, error| PipelineError { completed, error };
    let stages = plan.check().map_err(|e| fail(Vec::new(), e))?;
    let run_log = workdir.join("run_log.jsonl");
    let mut manifests = Vec::new();
    let mut prev_output: Option<PathBuf> = None;
    for (i, (spec, stage)) in plan.stages.iter().zip(stages).enumerate() {
        let input = match &spec.input {
            Some(p) => base.join(p),
            None => prev_output.clone().expect("checked plan"),
        };
        let output = stage_output(workdir, i, stage);
        let io = StageIo {
            input,
            output: output.clone(),
            answers: spec.answers.as_ref().map(|a| base.join(a)),
            run_log: run_log.clone(),
        };
        match run_stage(stage, cfg, &io) {
            Ok(m) => manifests.push(m),
            Err(e) => return Err(fail(manifests, e)),
        }
        prev_output = Some(output);
    }
    Ok(manifests)
}
