use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_csv};
use crate::precond::{POperator, WOperator};
use crate::rsvd::{assemble_dense, rsvd, SketchableOperator};

use super::{seeded_stream, Experiment, ExperimentConfig, TwinData};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    /// `L⁻¹ − I`.
    P,
    /// `L⁻¹D^{1/2} − D^{1/2}`.
    W,
}

impl FromStr for Which {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "P" | "p" => Ok(Which::P),
            "W" | "w" => Ok(Which::W),
            _ => Err(Error::Config(format!("unknown operator '{s}', expected P or W"))),
        }
    }
}

impl fmt::Display for Which {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Which::P => "P",
            Which::W => "W",
        })
    }
}

/// Leading singular values: the dense reference (when computed) and one
/// randomised approximation per requested rank.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularValueTable {
    pub which: Which,
    pub dense: Option<Vec<f64>>,
    pub approximations: Vec<(usize, Vec<f64>)>,
}

impl SingularValueTable {
    /// CSV with header `index,dense,k30,...`; the `dense` column is omitted
    /// when no dense reference was computed, and cells past a rank are empty.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut header = vec!["index".to_string()];
        if self.dense.is_some() {
            header.push("dense".into());
        }
        header.extend(self.approximations.iter().map(|(k, _)| format!("k{k}")));
        let rows_n = self.approximations.iter().map(|(k, _)| *k).max().unwrap_or(0);
        let cell = |v: Option<&f64>| v.map(|x| fmt_f64(*x)).unwrap_or_default();
        let rows = (0..rows_n).map(|i| {
            let mut row = vec![(i + 1).to_string()];
            if let Some(d) = &self.dense {
                row.push(cell(d.get(i)));
            }
            row.extend(self.approximations.iter().map(|(_, s)| cell(s.get(i))));
            row
        });
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_csv(w, &header, rows)
    }
}

fn singular_values_of<A: SketchableOperator>(
    op: &A,
    ranks: &[usize],
    oversampling: usize,
    seed: u64,
    dense: bool,
) -> Result<SingularValueTable> {
    let s = op.dim();
    let dense = if dense {
        let mut sv: Vec<f64> = assemble_dense(op).singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        Some(sv)
    } else {
        None
    };
    let mut approximations = Vec::with_capacity(ranks.len());
    for &k in ranks {
        if k == 0 {
            approximations.push((0, Vec::new()));
            continue;
        }
        // Same seed for every rank, so all sketches share their leading columns.
        let l = oversampling.min(s.saturating_sub(k));
        let f = rsvd(op, k, l, &mut seeded_stream(seed, 0))?;
        approximations.push((k, f.sigma.iter().copied().collect()));
    }
    Ok(SingularValueTable { which: Which::P, dense, approximations })
}

/// Singular values of `P` or `W` linearised around the background trajectory.
pub fn dump_singular_values(
    cfg: &ExperimentConfig,
    twin: &TwinData,
    which: Which,
    ranks: &[usize],
    seed: u64,
    dense: bool,
) -> Result<SingularValueTable> {
    let experiment = Experiment::new(cfg, twin)?;
    let lin = experiment.problem().linearization();
    let mut table = match which {
        Which::P => singular_values_of(&POperator(lin), ranks, cfg.oversampling, seed, dense)?,
        Which::W => singular_values_of(&WOperator(lin), ranks, cfg.oversampling, seed, dense)?,
    };
    table.which = which;
    Ok(table)
}
