use super::{input_err, read_file, write_file, Layout, Manifest, PipelineError};
use std::fmt::Write as _;
use std::path::PathBuf;

const SECTIONS: [(&str, &str, &str); 14] = [
    ("Exclusions", "exclusions.csv", "exclusions"),
    ("Arm contrasts", "contrasts.csv", "main_effects"),
    ("Adjusted saving rates", "saving_rates.csv", "main_effects"),
    ("Cumulative trajectories", "trajectories.csv", "trajectories"),
    ("Engagement", "engagement.csv", "engagement"),
    ("Engagement survival", "survival.csv", "engagement"),
    ("Robustness checks", "robustness.csv", "robustness"),
    ("Most responsive quartile", "hte_quartile.csv", "hte"),
    ("Archetype shares (percent)", "archetype_shares.csv", "archetypes"),
    ("Message content", "content_summary.csv", "text"),
    ("Feature importance", "importance.csv", "predictors"),
    ("Model selection", "model_selection.csv", "predictors"),
    ("Electricity archetypes", "archetypes_electricity.csv", "archetypes"),
    ("Hot water archetypes", "archetypes_hot_water.csv", "archetypes"),
];

/// Long per-participant tables are summarized by row count only.
const DETAIL_ONLY: [&str; 2] = ["archetypes_electricity.csv", "archetypes_hot_water.csv"];

fn markdown_table(bytes: &[u8]) -> Result<String, csv::Error> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut out = format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len()));
    for rec in rdr.records() {
        let rec = rec?;
        let cells: Vec<String> = rec.iter().map(|c| c.replace('|', "\\|")).collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
    Ok(out)
}

/// Render `report.md` from the analysis tables.
pub fn cmd_report(layout: &Layout) -> Result<PathBuf, PipelineError> {
    let manifest_path = layout.manifest();
    let manifest: Option<Manifest> = if manifest_path.is_file() {
        Some(serde_json::from_slice(&read_file(&manifest_path)?).map_err(|e| input_err(&manifest_path, e))?)
    } else {
        None
    };
    let analyze = manifest.as_ref().and_then(|m| m.stages.get("analyze"));
    let Some(analyze) = analyze else {
        return Err(PipelineError::Dependency { path: layout.analysis_dir(), stage: "analyze".into() });
    };

    let mut md = String::from("# Trial report\n\n");
    if let Some(m) = &manifest {
        let _ = writeln!(md, "Seed `{}`, version {}.\n", m.seed, m.version);
        let stages: Vec<&str> = m.stages.keys().map(String::as_str).collect();
        let _ = writeln!(md, "Stages run: {}.\n", stages.join(", "));
    }
    md.push_str("## Analysis status\n\n| analysis | status |\n|---|---|\n");
    for (k, v) in &analyze.status {
        let _ = writeln!(md, "| {k} | {} |", v.replace('|', "\\|"));
    }
    md.push('\n');

    for (title, file, step) in SECTIONS {
        let _ = writeln!(md, "## {title}\n");
        let path = layout.analysis(file);
        if !path.is_file() {
            let why = analyze.status.get(step).map(String::as_str).unwrap_or("not run");
            let _ = writeln!(md, "Not available ({why}).\n");
            continue;
        }
        let bytes = read_file(&path)?;
        if DETAIL_ONLY.contains(&file) {
            let rows = bytes.iter().filter(|b| **b == b'\n').count().saturating_sub(1);
            let _ = writeln!(md, "{rows} participants; see `analysis/{file}`.\n");
            continue;
        }
        md.push_str(&markdown_table(&bytes).map_err(|e| input_err(&path, e))?);
        md.push('\n');
    }
    let exclusions = layout.exclusions();
    if exclusions.is_file() {
        let text = String::from_utf8_lossy(&read_file(&exclusions)?).into_owned();
        let _ = writeln!(md, "## Cleaning log\n\n```\n{}\n```", text.trim_end());
    }
    let path = layout.report();
    write_file(&path, md.as_bytes())?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rendering_escapes_pipes() {
        let t = markdown_table(b"a,b\n1,x|y\n").unwrap();
        assert_eq!(t, "| a | b |\n|---|---|\n| 1 | x\\|y |\n");
    }
}
