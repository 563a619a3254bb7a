use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::Value;

use crate::output::{MANIFEST, SUMMARY};

/// CSV columns holding text rather than numbers.
const TEXT_COLUMNS: [&str; 2] = ["family", "mode"];

#[derive(Debug, Clone, PartialEq)]
struct ReportRow {
    run: String,
    command: String,
    payoff: String,
    families: String,
    theta_hat: String,
    eta_chosen: String,
    slopes: String,
    h2_lower_bound: String,
    flags: String,
}

const HEADER: [&str; 9] = [
    "run",
    "command",
    "payoff",
    "families",
    "theta_hat",
    "eta_chosen",
    "slopes",
    "h2_lower_bound",
    "flags",
];

impl ReportRow {
    fn cells(&self) -> [&str; 9] {
        [
            &self.run,
            &self.command,
            &self.payoff,
            &self.families,
            &self.theta_hat,
            &self.eta_chosen,
            &self.slopes,
            &self.h2_lower_bound,
            &self.flags,
        ]
    }
}

fn find_manifests(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .with_context(|| format!("reading directory {}", dir.display()))?
        .collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        if e.file_type()?.is_dir() {
            find_manifests(&path, out)?;
        } else if e.file_name() == MANIFEST {
            out.push(path);
        }
    }
    Ok(())
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("missing file {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("corrupted JSON in {}", path.display()))
}

/// Checks that `path` is a rectangular CSV whose non-text columns are numeric.
fn check_csv(path: &Path) -> Result<()> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("missing file {}", path.display()))?;
    let header = reader
        .headers()
        .with_context(|| format!("corrupted CSV {}", path.display()))?
        .clone();
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("corrupted CSV {}", path.display()))?;
        for (name, field) in header.iter().zip(record.iter()) {
            if !TEXT_COLUMNS.contains(&name) && field.parse::<f64>().is_err() {
                bail!(
                    "corrupted CSV {}: row {}, column {name}: {field:?} is not a number",
                    path.display(),
                    i + 1
                );
            }
        }
    }
    Ok(())
}

fn fmt_value(v: Option<&Value>) -> String {
    match v {
        Some(Value::Number(x)) => match x.as_f64() {
            Some(f) => format!("{f:.4}"),
            None => x.to_string(),
        },
        Some(Value::String(s)) => s.clone(),
        _ => "-".into(),
    }
}

fn row_for(root: &Path, manifest_path: &Path) -> Result<ReportRow> {
    let manifest = read_json(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let files = manifest["files"]
        .as_array()
        .with_context(|| format!("{} lists no files", manifest_path.display()))?;
    for f in files {
        let name = f
            .as_str()
            .with_context(|| format!("bad file entry in {}", manifest_path.display()))?;
        let path = dir.join(name);
        if !path.is_file() {
            bail!(
                "missing file {} (listed in {})",
                path.display(),
                manifest_path.display()
            );
        }
        if name.ends_with(".csv") {
            check_csv(&path)?;
        }
    }
    let summary = read_json(&dir.join(SUMMARY))?;
    let command = manifest["command"].as_str().unwrap_or("-").to_string();

    let mut families = Vec::new();
    let mut slopes = Vec::new();
    if let Some(list) = summary["families"].as_array() {
        for f in list {
            let name = fmt_value(f.get("family"));
            slopes.push(format!("{name}={}", fmt_value(f.get("slope"))));
            families.push(name);
        }
    }
    if families.is_empty() {
        if let Some(fam) = manifest["config"]["nets"]["families"].as_array() {
            families.extend(fam.iter().filter_map(Value::as_str).map(String::from));
        }
    }

    let mut flags = Vec::new();
    if summary["theta_hat"].as_f64().is_some_and(|t| t >= 1.0) {
        flags.push("theta>=1");
    }
    let h2 = summary.get("h2_lower_bound");
    if h2.and_then(Value::as_f64).is_some_and(|b| b <= 0.0) {
        flags.push("h2_inf<=0");
    }

    let run = dir.strip_prefix(root).unwrap_or(dir).display().to_string();
    Ok(ReportRow {
        run: if run.is_empty() { ".".into() } else { run },
        command,
        payoff: summary["payoff"].as_str().unwrap_or("-").to_string(),
        families: if families.is_empty() {
            "-".into()
        } else {
            families.join(";")
        },
        theta_hat: fmt_value(summary.get("theta_hat")),
        eta_chosen: fmt_value(summary.get("eta_chosen")),
        slopes: if slopes.is_empty() {
            "-".into()
        } else {
            slopes.join(";")
        },
        h2_lower_bound: fmt_value(h2),
        flags: if flags.is_empty() {
            "-".into()
        } else {
            flags.join(";")
        },
    })
}

fn text_table(rows: &[ReportRow]) -> String {
    let mut widths = HEADER.map(str::len);
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r.cells()) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: [&str; 9]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        format!("{}\n", parts.join("  ").trim_end())
    };
    let mut out = line(HEADER);
    for r in rows {
        out.push_str(&line(r.cells()));
    }
    out
}

/// Aggregates every run below `dir` into `report.txt` and `report.csv`.
pub fn cmd_report(dir: &Path) -> Result<()> {
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let mut manifests = Vec::new();
    find_manifests(dir, &mut manifests)?;
    if manifests.is_empty() {
        bail!("no {MANIFEST} found under {}", dir.display());
    }
    let rows = manifests
        .iter()
        .map(|m| row_for(dir, m))
        .collect::<Result<Vec<_>>>()?;

    let table = text_table(&rows);
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(HEADER)?;
    for r in &rows {
        csv.write_record(r.cells())?;
    }
    let csv = csv.into_inner().context("flushing the report CSV")?;
    std::fs::write(dir.join("report.txt"), &table).context("writing report.txt")?;
    std::fs::write(dir.join("report.csv"), csv).context("writing report.csv")?;
    print!("{table}");
    let flagged = rows.iter().filter(|r| r.flags != "-").count();
    if flagged > 0 {
        log::warn!("{flagged} run(s) flag assumption violations");
    }
    Ok(())
}
