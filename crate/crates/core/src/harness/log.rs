//! CSV convergence logs. Floats use Rust's shortest round-trip formatting,
//! so parsing a log reproduces the logged values exactly. Missing optional
//! values are empty fields.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::algorithm::{IterationLog, Residuals};
use crate::error::{Error, Result};

pub const HEADER: &str = "k,t_sec,c,relerr,J_exact,J_inexact,res_pde,res_adj,res_x,res_y";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn format_row(log: &IterationLog) -> String {
    let r = log.residuals;
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        log.k,
        log.wall_clock_seconds,
        log.c_value,
        opt(log.rel_error),
        opt(log.j_exact),
        opt(log.j_inexact),
        opt(r.map(|r| r.pde)),
        opt(r.map(|r| r.adjoint)),
        opt(r.map(|r| r.control)),
        opt(r.map(|r| r.dual)),
    )
}

/// Appends rows and flushes after each, so an aborted run keeps its log.
pub struct CsvLog {
    out: BufWriter<File>,
}

impl CsvLog {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{HEADER}")?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn write(&mut self, log: &IterationLog) -> Result<()> {
        writeln!(self.out, "{}", format_row(log))?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn parse_log(text: &str) -> std::result::Result<Vec<IterationLog>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == HEADER => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(row, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(format!("row {row}: expected 10 fields, found {}", f.len()));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| format!("row {row}: bad number {s:?}"));
            let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
            let res = [opt(f[6])?, opt(f[7])?, opt(f[8])?, opt(f[9])?];
            let residuals = match res {
                [Some(pde), Some(adjoint), Some(control), Some(dual)] => Some(Residuals {
                    pde,
                    adjoint,
                    control,
                    dual,
                }),
                [None, None, None, None] => None,
                _ => return Err(format!("row {row}: partial residual columns")),
            };
            Ok(IterationLog {
                k: f[0].parse().map_err(|_| format!("row {row}: bad k"))?,
                wall_clock_seconds: num(f[1])?,
                c_value: num(f[2])?,
                rel_error: opt(f[3])?,
                j_exact: opt(f[4])?,
                j_inexact: opt(f[5])?,
                residuals,
            })
        })
        .collect()
}

pub fn read_log(path: &Path) -> Result<Vec<IterationLog>> {
    let text = std::fs::read_to_string(path)?;
    parse_log(&text).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        message,
    })
}
