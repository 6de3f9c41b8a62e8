//! Parameter grids over controller weights and filter parameters.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::RunConfig;
use super::run::{simulate, write_outputs};
use crate::error::{Error, Result};
use crate::feature::FeatureModel;
use crate::mfac::ControllerWeights;

/// One grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub index: usize,
    pub weights: ControllerWeights,
    pub c0: f64,
    pub c1: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: SweepCell,
    pub log_path: PathBuf,
    pub steps_taken: usize,
    pub final_t1: f64,
    pub converged: bool,
}

fn or_base<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

/// Cartesian product of the sweep lists, weights varying slowest.
pub fn grid(config: &RunConfig) -> Vec<SweepCell> {
    let s = &config.sweep;
    let weights = or_base(&s.weights, config.control.weights);
    let c0s = or_base(&s.c0, config.akf.c0);
    let c1s = or_base(&s.c1, config.akf.c1);
    let bs = or_base(&s.b, config.akf.b);
    let mut cells = Vec::new();
    for w in &weights {
        for &c0 in &c0s {
            for &c1 in &c1s {
                for &b in &bs {
                    cells.push(SweepCell {
                        index: cells.len(),
                        weights: *w,
                        c0,
                        c1,
                        b,
                    });
                }
            }
        }
    }
    cells
}

pub fn cell_config(base: &RunConfig, cell: &SweepCell, out_dir: &Path) -> RunConfig {
    let mut c = base.clone();
    c.control.weights = cell.weights;
    c.akf.c0 = cell.c0;
    c.akf.c1 = cell.c1;
    c.akf.b = cell.b;
    c.run.log_path = out_dir.join(format!("cell_{:03}.csv", cell.index));
    c
}

/// Runs every cell in parallel and writes one log per cell plus `sweep_index.csv`.
pub fn run_sweep(base: &RunConfig, model: &FeatureModel, out_dir: &Path, dump_shapes: bool) -> Result<Vec<CellResult>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let cells = grid(base);
    for cell in &cells {
        cell_config(base, cell, out_dir).validate()?;
    }
    let results = cells
        .par_iter()
        .map(|cell| {
            let config = cell_config(base, cell, out_dir);
            let outcome = simulate(&config, model)?;
            write_outputs(&outcome, &config.run.log_path, dump_shapes)?;
            Ok(CellResult {
                cell: cell.clone(),
                log_path: config.run.log_path,
                steps_taken: outcome.summary.steps_taken,
                final_t1: outcome.summary.final_t1,
                converged: outcome.summary.converged,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut index = String::from("cell,w1,w2,w3,w4,w5,w6,w7,c0,c1,b,steps_taken,final_t1,converged,log\n");
    for r in &results {
        write!(index, "{}", r.cell.index).unwrap();
        for w in r.cell.weights.as_array() {
            write!(index, ",{w:.16e}").unwrap();
        }
        let name = r.log_path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
        writeln!(
            index,
            ",{:.16e},{:.16e},{:.16e},{},{:.16e},{},{}",
            r.cell.c0, r.cell.c1, r.cell.b, r.steps_taken, r.final_t1, r.converged as u8, name
        )
        .unwrap();
    }
    let index_path = out_dir.join("sweep_index.csv");
    fs::write(&index_path, index).map_err(|e| Error::io(&index_path, e))?;
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_lists_keep_base_values() {
        let c = RunConfig::default();
        let g = grid(&c);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].c0, c.akf.c0);
    }

    #[test]
    fn grid_is_cartesian() {
        let c = RunConfig::from_toml_str("sweep.c0 = [1.1, 1.3]\nsweep.b = [0.9, 0.95, 0.99]").unwrap();
        let g = grid(&c);
        assert_eq!(g.len(), 6);
        assert_eq!(g.iter().map(|c| c.index).collect::<Vec<_>>(), (0..6).collect::<Vec<_>>());
        let names: std::collections::BTreeSet<_> = g
            .iter()
            .map(|cell| cell_config(&c, cell, Path::new("o")).run.log_path)
            .collect();
        assert_eq!(names.len(), 6);
    }
}
