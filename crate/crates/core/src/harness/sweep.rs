use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use toml::Value;

use super::{run_to_writer, RunConfig, RunSummary};
use crate::error::{Error, Result};

/// A base run config and axes of dotted keys to vary, e.g.
/// `"optimizer.beta" = [0.1, 0.5, 0.9]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default)]
    pub base: toml::Table,
    #[serde(default)]
    pub axes: BTreeMap<String, Vec<Value>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Diverged,
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub index: usize,
    pub assignments: Vec<(String, Value)>,
    pub status: CellStatus,
    pub summary: Option<RunSummary>,
}

impl SweepGrid {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config {
            key: "grid".into(),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            key: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    /// Cartesian product over the axes in key order, last key fastest.
    /// A grid without axes has no cells.
    pub fn cells(&self) -> Vec<Vec<(String, Value)>> {
        if self.axes.is_empty() {
            return Vec::new();
        }
        let mut cells = vec![Vec::new()];
        for (key, values) in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|cell: Vec<(String, Value)>| {
                    values.iter().map(move |v| {
                        let mut c = cell.clone();
                        c.push((key.clone(), v.clone()));
                        c
                    })
                })
                .collect();
        }
        cells
    }

    /// The run config of one cell.
    pub fn config_for(&self, cell: &[(String, Value)]) -> Result<RunConfig> {
        let mut root = Value::Table(self.base.clone());
        for (key, value) in cell {
            set_dotted(&mut root, key, value.clone())?;
        }
        RunConfig::from_value(root)
    }
}

fn set_dotted(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        let table = node.as_table_mut().ok_or_else(|| Error::Config {
            key: key.into(),
            message: format!("`{part}` is not a table"),
        })?;
        node = table
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(toml::Table::new()));
    }
    let table = node.as_table_mut().ok_or_else(|| Error::Config {
        key: key.into(),
        message: "parent is not a table".into(),
    })?;
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn run_cell(grid: &SweepGrid, index: usize, cell: Vec<(String, Value)>, out_dir: &Path) -> CellResult {
    let attempt = || -> Result<RunSummary> {
        let cfg = grid.config_for(&cell)?;
        let mut w = BufWriter::new(File::create(out_dir.join(format!("cell_{index:04}.csv")))?);
        run_to_writer(&cfg, cfg.seed, &mut w)
    };
    let (status, summary) = match attempt() {
        Ok(s) => (CellStatus::Ok, Some(s)),
        Err(Error::Diverged { .. }) => (CellStatus::Diverged, None),
        Err(e) => (CellStatus::Failed(e.to_string()), None),
    };
    CellResult {
        index,
        assignments: cell,
        status,
        summary,
    }
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Run every cell (concurrently where threads are available), one CSV per
/// cell plus `summary.csv`. Failing cells are recorded and the sweep goes on.
pub fn sweep(grid: &SweepGrid, out_dir: &Path, threads: usize) -> Result<Vec<CellResult>> {
    std::fs::create_dir_all(out_dir)?;
    let cells = grid.cells();
    let slots: Mutex<Vec<Option<CellResult>>> = Mutex::new(vec![None; cells.len()]);
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        if i >= cells.len() {
            break;
        }
        let result = run_cell(grid, i, cells[i].clone(), out_dir);
        slots.lock().expect("no worker panics while holding the lock")[i] = Some(result);
    };
    let threads = threads.clamp(1, cells.len().max(1));
    if threads == 1 || cfg!(target_arch = "wasm32") {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(work);
            }
        });
    }
    let results: Vec<CellResult> = slots.into_inner().expect("lock").into_iter().flatten().collect();
    let mut w = BufWriter::new(File::create(out_dir.join("summary.csv"))?);
    let axes: Vec<String> = grid.axes.keys().map(|k| csv_field(k)).collect();
    let mut header = vec!["cell".to_string()];
    header.extend(axes);
    header.extend(["status", "final_loss", "final_grad_norm_sq", "comm_bytes", "aux_bytes"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for r in &results {
        let mut row = vec![r.index.to_string()];
        row.extend(r.assignments.iter().map(|(_, v)| csv_field(&value_text(v))));
        let status = match &r.status {
            CellStatus::Ok => "ok".to_string(),
            CellStatus::Diverged => "diverged".to_string(),
            CellStatus::Failed(msg) => csv_field(&format!("failed: {msg}")),
        };
        row.push(status);
        match &r.summary {
            Some(s) => row.extend([
                format!("{:?}", s.last.train_loss),
                format!("{:?}", s.last.grad_norm_sq),
                s.comm.bytes.to_string(),
                s.last.aux_bytes.to_string(),
            ]),
            None => row.extend(std::iter::repeat(String::new()).take(4)),
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(results)
}
