use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fwlstm::{CellKind, TaskKind};

use crate::manifest::{RunManifest, RunStatus, MANIFEST_FILE};

/// Every `manifest.json` under `root`, in sorted path order.
pub fn find_manifests(root: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))?;
        for entry in entries {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == MANIFEST_FILE) {
                found.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}

fn column_name(task: TaskKind, k: usize) -> String {
    format!("{task}_k{k}")
}

/// Test accuracy (percent) per (cell, hidden) row and task×K column. When
/// several completed runs share a cell, the one with the best validation
/// accuracy wins; earlier paths win ties.
pub fn summarize(manifests: &[RunManifest]) -> String {
    let mut columns = BTreeSet::new();
    let mut cells: BTreeMap<(usize, usize), BTreeMap<String, (f64, f64)>> = BTreeMap::new();
    for m in manifests.iter().filter(|m| m.status == RunStatus::Completed) {
        let Some(r) = &m.results else { continue };
        let col = column_name(m.dataset.task, m.dataset.k);
        columns.insert((m.dataset.task.as_str(), m.dataset.k, col.clone()));
        let kind_rank = CellKind::ALL.iter().position(|k| *k == m.config.cell_kind).unwrap_or(0);
        let row = cells.entry((m.config.hidden, kind_rank)).or_default();
        let better = row.get(&col).is_none_or(|(val, _)| r.best_val_acc > *val);
        if better {
            row.insert(col, (r.best_val_acc, r.test_accuracy));
        }
    }

    let mut out = String::from("model,hidden");
    for (_, _, col) in &columns {
        out.push(',');
        out.push_str(col);
    }
    out.push('\n');
    for ((hidden, kind_rank), row) in &cells {
        out.push_str(&format!("{},{hidden}", CellKind::ALL[*kind_rank].label()));
        for (_, _, col) in &columns {
            out.push(',');
            if let Some((_, acc)) = row.get(col) {
                out.push_str(&format!("{:.1}", acc * 100.0));
            }
        }
        out.push('\n');
    }
    out
}

pub fn report(root: &Path) -> Result<String> {
    let manifests = find_manifests(root)?
        .iter()
        .map(|p| RunManifest::read(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(&manifests))
}
