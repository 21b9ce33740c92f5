//! Post-hoc L1 accuracy of every snapshot against the run's final policy.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mpg_core::l1_accuracy;

use crate::artifacts::{read_snapshots, write_accuracy, AccuracyRow, OutDir};

fn split_stem(stem: &str) -> Option<(&str, usize)> {
    let (alg, id) = stem.rsplit_once('_')?;
    Some((alg, id.parse().ok()?))
}

fn sorted_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    v.retain(|p| p.extension().is_some_and(|e| e == ext));
    v.sort();
    Ok(v)
}

/// Accuracy rows for one snapshot file.
pub fn accuracy_rows(snapshot: &Path) -> Result<Vec<AccuracyRow>> {
    let stem = snapshot.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let (algorithm, run_id) = split_stem(stem).with_context(|| format!("cannot parse run name `{stem}`"))?;
    let snaps = read_snapshots(snapshot)?;
    let Some((_, last)) = snaps.policies.last() else {
        bail!("{} holds no policies", snapshot.display());
    };
    snaps
        .policies
        .iter()
        .map(|(iteration, p)| {
            Ok(AccuracyRow {
                run_id,
                algorithm: algorithm.to_owned(),
                iteration: *iteration,
                l1_accuracy: l1_accuracy(p, last)?,
            })
        })
        .collect()
}

/// Writes `accuracy/<run>.csv` for every run under `trace_dir`; returns the files.
pub fn cmd_accuracy(trace_dir: &Path) -> Result<Vec<PathBuf>> {
    let out = OutDir::new(trace_dir);
    let traces = sorted_with_ext(&out.runs(), "csv")?;
    if traces.is_empty() {
        bail!("no run traces under {}", out.runs().display());
    }
    std::fs::create_dir_all(out.accuracy())?;
    let mut written = Vec::new();
    for trace in traces {
        let snap = trace.with_extension("snap");
        if !snap.is_file() {
            bail!("missing policy snapshots for {}", trace.display());
        }
        let rows = accuracy_rows(&snap)?;
        let dest = out.accuracy().join(trace.file_name().unwrap());
        write_accuracy(&dest, &rows)?;
        written.push(dest);
    }
    Ok(written)
}

/// Expands directories into their `.csv` files; plain files pass through.
pub fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            out.extend(sorted_with_ext(p, "csv")?);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_names() {
        assert_eq!(split_stem("inpg_003"), Some(("inpg", 3)));
        assert_eq!(split_stem("inpg"), None);
    }
}
