//! Plain-text run configuration.
//!
//! Grammar: `[section]` headers, `key = value` lines, and `#` comments
//! (whole-line or trailing; values cannot contain `#`). A key may also be
//! written in dotted form `section.key = value` anywhere in the file.
//! Sections: grid, potential, f, g, solver, maxwell, output. Unknown
//! sections or keys are errors; every omitted optional key gets an explicit
//! default that is echoed back in the emitted reports.

use serde::Serialize;

use curlvar_core::{Gamma, Metric, NonlinearitySpec, PotentialSpec};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct GridConfig {
    pub n_r: usize,
    pub n_z: usize,
    pub r_max: f64,
    pub z_len: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct PotentialConfig {
    /// "constant" or "benchmark".
    pub kind: String,
    /// Level of the constant potential; absent for benchmark.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FocusingConfig {
    pub p: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DefocusingConfig {
    /// "zero" or "power".
    pub kind: String,
    pub q: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iters: usize,
    /// "q" or "l2".
    pub metric: String,
    /// Independent seeded starts for multi-start solves.
    pub seeds: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxwellConfig {
    pub n_theta: usize,
    pub refinements: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputConfig {
    pub directory: String,
    /// Subset of {"json", "csv"}.
    pub formats: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub potential: PotentialConfig,
    pub f: FocusingConfig,
    pub g: DefocusingConfig,
    pub solver: SolverConfig,
    pub maxwell: MaxwellConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn potential_spec(&self) -> PotentialSpec {
        match self.potential.kind.as_str() {
            "benchmark" => PotentialSpec::Benchmark,
            _ => PotentialSpec::Constant(self.potential.value.unwrap_or(1.0)),
        }
    }

    pub fn nonlinearity_spec(&self) -> Result<NonlinearitySpec, CliError> {
        let spec = if self.g.kind == "zero" {
            NonlinearitySpec::pure_power(self.f.p)?
        } else {
            NonlinearitySpec::competing_powers(
                self.f.p,
                self.g.q.expect("validated power kind has q"),
                Gamma::Constant(self.g.gamma.unwrap_or(1.0)),
            )?
        };
        Ok(spec)
    }

    pub fn metric(&self) -> Metric {
        match self.solver.metric.as_str() {
            "l2" => Metric::L2,
            _ => Metric::Q,
        }
    }

    pub fn wants(&self, format: &str) -> bool {
        self.output.formats.iter().any(|f| f == format)
    }
}

/// One `key = value` occurrence attributed to a section.
struct Entry {
    section: String,
    key: String,
    value: String,
    line: usize,
}

const SECTIONS: [&str; 7] = ["grid", "potential", "f", "g", "solver", "maxwell", "output"];

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn lex(text: &str) -> Result<Vec<Entry>, CliError> {
    let mut entries = Vec::new();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[') {
            let Some(name) = inner.strip_suffix(']') else {
                return Err(CliError::Config(format!(
                    "line {lineno}: unterminated section header `{line}`"
                )));
            };
            let name = name.trim().to_ascii_lowercase();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(CliError::Config(format!(
                    "line {lineno}: unknown section [{name}]"
                )));
            }
            section = Some(name);
            continue;
        }
        let Some((lhs, rhs)) = line.split_once('=') else {
            return Err(CliError::Config(format!(
                "line {lineno}: expected `key = value`, got `{line}`"
            )));
        };
        let key_path = lhs.trim().to_ascii_lowercase();
        let value = rhs.trim().to_string();
        let (target, key) = match key_path.split_once('.') {
            Some((sec, key)) => {
                let sec = sec.trim().to_string();
                if !SECTIONS.contains(&sec.as_str()) {
                    return Err(CliError::Config(format!(
                        "line {lineno}: unknown section `{sec}` in dotted key `{key_path}`"
                    )));
                }
                (sec, key.trim().to_string())
            }
            None => match &section {
                Some(sec) => (sec.clone(), key_path),
                None => {
                    return Err(CliError::Config(format!(
                        "line {lineno}: key `{key_path}` appears before any [section]"
                    )));
                }
            },
        };
        if key.is_empty() {
            return Err(CliError::Config(format!("line {lineno}: empty key")));
        }
        if entries
            .iter()
            .any(|e: &Entry| e.section == target && e.key == key)
        {
            return Err(CliError::Config(format!(
                "line {lineno}: duplicate key `{key}` in section [{target}]"
            )));
        }
        entries.push(Entry {
            section: target,
            key,
            value,
            line: lineno,
        });
    }
    Ok(entries)
}

/// Keys of one section, consumed as they are read so leftovers can be
/// reported as unknown.
struct Block<'a> {
    name: &'static str,
    entries: Vec<&'a Entry>,
}

impl<'a> Block<'a> {
    fn take(&mut self, key: &str) -> Option<&'a Entry> {
        self.entries
            .iter()
            .position(|e| e.key == key)
            .map(|pos| self.entries.remove(pos))
    }

    fn finish(self) -> Result<(), CliError> {
        if let Some(e) = self.entries.first() {
            return Err(CliError::Config(format!(
                "line {}: unknown key `{}` in section [{}]",
                e.line, e.key, self.name
            )));
        }
        Ok(())
    }
}

fn block<'a>(entries: &'a [Entry], name: &'static str) -> Block<'a> {
    Block {
        name,
        entries: entries.iter().filter(|e| e.section == name).collect(),
    }
}

fn parse_f64(e: &Entry) -> Result<f64, CliError> {
    e.value.parse::<f64>().map_err(|_| {
        CliError::Config(format!(
            "line {}: `{}` must be a number, got `{}`",
            e.line, e.key, e.value
        ))
    })
}

fn parse_count(e: &Entry) -> Result<usize, CliError> {
    e.value.parse::<usize>().map_err(|_| {
        CliError::Config(format!(
            "line {}: `{}` must be a nonnegative integer, got `{}`",
            e.line, e.key, e.value
        ))
    })
}

fn require<'a>(block: &mut Block<'a>, key: &str) -> Result<&'a Entry, CliError> {
    block.take(key).ok_or_else(|| {
        CliError::Config(format!(
            "section [{}] is missing required key `{key}`",
            block.name
        ))
    })
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let entries = lex(text)?;

    let mut b = block(&entries, "grid");
    let n_r = parse_count(require(&mut b, "n_r")?)?;
    let n_z = parse_count(require(&mut b, "n_z")?)?;
    let r_max = parse_f64(require(&mut b, "r_max")?)?;
    let z_entry = require(&mut b, "z_len")?;
    let z_raw = parse_f64(z_entry)?;
    // The potential and the sought fields are periodic with unit period in
    // the axial direction, so the computational cell must hold a whole
    // number of periods.
    if !(z_raw.is_finite() && z_raw > 0.0 && z_raw.fract() == 0.0 && z_raw <= u32::MAX as f64) {
        return Err(CliError::Config(format!(
            "line {}: z_len violates (V): the axial extent must be a positive whole number of unit periods, got {}",
            z_entry.line, z_entry.value
        )));
    }
    b.finish()?;
    let grid = GridConfig {
        n_r,
        n_z,
        r_max,
        z_len: z_raw as u32,
    };

    let mut b = block(&entries, "potential");
    let kind_entry = require(&mut b, "kind")?;
    let kind = kind_entry.value.to_ascii_lowercase();
    let value_entry = b.take("value");
    let value = match kind.as_str() {
        "constant" => Some(match value_entry {
            Some(e) => parse_f64(e)?,
            None => 1.0,
        }),
        "benchmark" => {
            if let Some(e) = value_entry {
                return Err(CliError::Config(format!(
                    "line {}: `value` applies only to kind = constant",
                    e.line
                )));
            }
            None
        }
        other => {
            return Err(CliError::Config(format!(
                "line {}: unknown potential kind `{other}` (expected constant or benchmark)",
                kind_entry.line
            )));
        }
    };
    b.finish()?;
    let potential = PotentialConfig { kind, value };

    let mut b = block(&entries, "f");
    let p_entry = require(&mut b, "p")?;
    let p = parse_f64(p_entry)?;
    if !(p > 2.0 && p < 6.0) {
        return Err(CliError::Config(format!(
            "line {}: p = {} violates (F1): 2 < p < 6",
            p_entry.line, p_entry.value
        )));
    }
    b.finish()?;

    let mut b = block(&entries, "g");
    let kind = match b.take("kind") {
        Some(e) => {
            let k = e.value.to_ascii_lowercase();
            if k != "zero" && k != "power" {
                return Err(CliError::Config(format!(
                    "line {}: unknown g kind `{}` (expected zero or power)",
                    e.line, e.value
                )));
            }
            Some(k)
        }
        None => None,
    };
    let q_entry = b.take("q");
    let gamma_entry = b.take("gamma");
    let g = match kind.as_deref() {
        Some("zero") => {
            if let Some(e) = q_entry.or(gamma_entry) {
                return Err(CliError::Config(format!(
                    "line {}: `{}` conflicts with g kind = zero",
                    e.line, e.key
                )));
            }
            DefocusingConfig {
                kind: "zero".into(),
                q: None,
                gamma: None,
            }
        }
        Some("power") | None if q_entry.is_some() => {
            let qe = q_entry.expect("checked above");
            let q = parse_f64(qe)?;
            if !(q > 2.0 && q < p) {
                return Err(CliError::Config(format!(
                    "line {}: q = {} violates (G1): 2 < q < p",
                    qe.line, qe.value
                )));
            }
            let gamma = match gamma_entry {
                Some(e) => {
                    let g = parse_f64(e)?;
                    if !(g.is_finite() && g >= 0.0) {
                        return Err(CliError::Config(format!(
                            "line {}: gamma must be nonnegative, got {}",
                            e.line, e.value
                        )));
                    }
                    Some(g)
                }
                None => Some(1.0),
            };
            DefocusingConfig {
                kind: "power".into(),
                q: Some(q),
                gamma,
            }
        }
        Some("power") => {
            return Err(CliError::Config(
                "section [g] with kind = power is missing required key `q`".into(),
            ));
        }
        None => {
            if let Some(e) = gamma_entry {
                return Err(CliError::Config(format!(
                    "line {}: `gamma` requires `q`",
                    e.line
                )));
            }
            DefocusingConfig {
                kind: "zero".into(),
                q: None,
                gamma: None,
            }
        }
        Some(_) => unreachable!("kind vetted above"),
    };
    b.finish()?;

    let mut b = block(&entries, "solver");
    let tol = match b.take("tol") {
        Some(e) => {
            let t = parse_f64(e)?;
            if !(t.is_finite() && t > 0.0) {
                return Err(CliError::Config(format!(
                    "line {}: tol must be positive, got {}",
                    e.line, e.value
                )));
            }
            t
        }
        None => 1e-6,
    };
    let max_iters = match b.take("max_iters") {
        Some(e) => {
            let n = parse_count(e)?;
            if n == 0 {
                return Err(CliError::Config(format!(
                    "line {}: max_iters must be at least 1",
                    e.line
                )));
            }
            n
        }
        None => 2000,
    };
    let metric = match b.take("metric") {
        Some(e) => {
            let m = e.value.to_ascii_lowercase();
            if m != "q" && m != "l2" {
                return Err(CliError::Config(format!(
                    "line {}: unknown metric `{}` (expected q or l2)",
                    e.line, e.value
                )));
            }
            m
        }
        None => "q".into(),
    };
    let seeds = match b.take("seeds") {
        Some(e) => {
            let n = parse_count(e)?;
            if n == 0 {
                return Err(CliError::Config(format!(
                    "line {}: seeds must be at least 1",
                    e.line
                )));
            }
            n
        }
        None => 1,
    };
    b.finish()?;
    let solver = SolverConfig {
        tol,
        max_iters,
        metric,
        seeds,
    };

    let mut b = block(&entries, "maxwell");
    let n_theta = match b.take("n_theta") {
        Some(e) => {
            let n = parse_count(e)?;
            if n < 8 {
                return Err(CliError::Config(format!(
                    "line {}: n_theta must be at least 8, got {n}",
                    e.line
                )));
            }
            n
        }
        None => 32,
    };
    let refinements = match b.take("refinements") {
        Some(e) => {
            let n = parse_count(e)?;
            if n > 6 {
                return Err(CliError::Config(format!(
                    "line {}: refinements capped at 6, got {n}",
                    e.line
                )));
            }
            n
        }
        None => 2,
    };
    b.finish()?;
    let maxwell = MaxwellConfig {
        n_theta,
        refinements,
    };

    let mut b = block(&entries, "output");
    let directory = match b.take("directory") {
        Some(e) => e.value.clone(),
        None => "out".into(),
    };
    let formats = match b.take("formats") {
        Some(e) => {
            let mut fs = Vec::new();
            for part in e.value.split(',') {
                let f = part.trim().to_ascii_lowercase();
                if f != "json" && f != "csv" {
                    return Err(CliError::Config(format!(
                        "line {}: unknown output format `{part}` (expected json or csv)",
                        e.line
                    )));
                }
                if !fs.contains(&f) {
                    fs.push(f);
                }
            }
            if fs.is_empty() {
                return Err(CliError::Config(format!(
                    "line {}: formats must name at least one of json, csv",
                    e.line
                )));
            }
            fs
        }
        None => vec!["json".into(), "csv".into()],
    };
    b.finish()?;
    let output = OutputConfig { directory, formats };

    Ok(RunConfig {
        grid,
        potential,
        f: FocusingConfig { p },
        g,
        solver,
        maxwell,
        output,
    })
}
