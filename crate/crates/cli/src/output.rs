use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use schauder_core::fields::GridField;
use schauder_core::Verdict;

use crate::config::ExperimentConfig;
use crate::CliError;

pub const REPORT_FILE: &str = "report.toml";

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub verdict: Verdict,
    pub detail: String,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            verdict: Verdict::from_bool(ok),
            detail: detail.into(),
        }
    }
}

/// What a subcommand hands back for the report.
pub struct CommandOutput {
    pub checks: Vec<CheckResult>,
    pub result: toml::Value,
}

impl CommandOutput {
    pub fn new(checks: Vec<CheckResult>, result: &impl Serialize) -> Result<Self, CliError> {
        let result = toml::Value::try_from(result)
            .map_err(|e| CliError::Run(format!("report encoding: {e}")))?;
        Ok(CommandOutput { checks, result })
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.verdict.is_pass())
    }
}

#[derive(Serialize)]
struct Report<'a> {
    subcommand: &'a str,
    status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
    artifacts: &'a [String],
    checks: &'a [CheckResult],
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<&'a toml::Value>,
    config: &'a ExperimentConfig,
}

/// Output directory plus the list of files written so far.
pub struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Resolves `rel` against the output directory; absolute paths pass through.
    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn create_file(&mut self, name: &str) -> Result<fs::File, CliError> {
        let path = self.resolve(name);
        let file = fs::File::create(&path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(file)
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let file = self.create_file(name)?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        for row in rows {
            w.serialize(row)
                .map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        }
        w.flush().map_err(|e| CliError::Io(format!("{name}: {e}")))
    }

    pub fn write_field(&mut self, name: &str, field: &GridField) -> Result<(), CliError> {
        let file = self.create_file(name)?;
        field
            .write_to(BufWriter::new(file))
            .map_err(|e| CliError::Io(format!("{name}: {e}")))
    }

    pub fn write_report(
        &mut self,
        subcommand: &str,
        config: &ExperimentConfig,
        outcome: Result<&CommandOutput, &CliError>,
    ) -> Result<(), CliError> {
        let mut artifacts = self.written.clone();
        artifacts.push(REPORT_FILE.to_string());
        let (status, error, checks, result) = match outcome {
            Ok(out) => (
                if out.passed() { "pass" } else { "fail" },
                None,
                &out.checks[..],
                Some(&out.result),
            ),
            Err(e) => ("error", Some(e.to_string()), &[][..], None),
        };
        let report = Report {
            subcommand,
            status,
            error: error.as_deref(),
            artifacts: &artifacts,
            checks,
            result,
            config,
        };
        let text =
            toml::to_string(&report).map_err(|e| CliError::Io(format!("report encoding: {e}")))?;
        let path = self.resolve(REPORT_FILE);
        fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.written.push(REPORT_FILE.to_string());
        Ok(())
    }
}
