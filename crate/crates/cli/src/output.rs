//! Report envelopes, CSV writing and pass/fail checks.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Map, Value};

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Default)]
pub struct Checks(pub Vec<Check>);

impl Checks {
    pub fn add(&mut self, name: impl Into<String>, passed: bool, detail: impl Display) {
        self.0.push(Check { name: name.into(), passed, detail: detail.to_string() });
    }

    pub fn all_passed(&self) -> bool {
        self.0.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<String> {
        self.0.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect()
    }
}

/// Where a subcommand writes, and what every file is stamped with.
pub struct Output {
    pub command: &'static str,
    pub dir: PathBuf,
    pub hash: String,
    pub seed: Value,
    pub started: Option<Instant>,
    files: Vec<String>,
}

impl Output {
    pub fn new(command: &'static str, dir: PathBuf, hash: String, seed: Value, timing: bool) -> std::io::Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Output { command, dir, hash, seed, started: timing.then(Instant::now), files: Vec::new() })
    }

    /// Writes `name` with a `# config_hash=... seed=...` line before the header.
    pub fn csv<I: IntoIterator<Item = String>>(&mut self, name: &str, header: &str, rows: I) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(fs::File::create(self.dir.join(name))?);
        writeln!(f, "# config_hash={} seed={}", self.hash, self.seed)?;
        writeln!(f, "{header}")?;
        for row in rows {
            writeln!(f, "{row}")?;
        }
        f.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Writes `<command>.json` and returns the document.
    pub fn finish(mut self, body: Value, checks: &Checks) -> std::io::Result<Value> {
        let name = format!("{}.json", self.command);
        self.files.push(name.clone());
        let mut doc = Map::new();
        doc.insert("command".into(), json!(self.command));
        doc.insert("config_hash".into(), json!(self.hash));
        doc.insert("seed".into(), self.seed.clone());
        doc.insert(
            "wall_time_ms".into(),
            self.started.map_or(Value::Null, |t| json!(t.elapsed().as_millis() as u64)),
        );
        if let Value::Object(fields) = body {
            doc.extend(fields);
        } else {
            doc.insert("report".into(), body);
        }
        doc.insert("checks".into(), json!(checks.0));
        doc.insert("passed".into(), json!(checks.all_passed()));
        doc.insert("files".into(), json!(self.files));
        let doc = Value::Object(doc);
        let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
        text.push('\n');
        fs::write(self.dir.join(name), text)?;
        Ok(doc)
    }
}
