//! Fixed-format CSV tables.
//!
//! Floats are written like C's `%.16e` (`-1.2345678901234567e-05`), which
//! round-trips every finite double. Integer columns are written as integers.
//! A missing cell is empty.

use std::fmt::Write as _;

use crate::error::{HarnessError, Result};
use crate::study::{ConvergenceRow, ConvergenceTable, LimitPanel, LimitRow, SpeedupReport};

/// `%.16e` formatting with a signed, at least two-digit exponent.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.16e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

pub fn format_optional(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

pub fn parse_float(cell: &str, line: usize) -> Result<f64> {
    cell.trim().parse().map_err(|_| HarnessError::Csv {
        line,
        message: format!("not a number: {cell:?}"),
    })
}

pub fn parse_optional(cell: &str, line: usize) -> Result<Option<f64>> {
    if cell.trim().is_empty() {
        Ok(None)
    } else {
        parse_float(cell, line).map(Some)
    }
}

fn parse_int(cell: &str, line: usize) -> Result<u64> {
    cell.trim().parse().map_err(|_| HarnessError::Csv {
        line,
        message: format!("not an integer: {cell:?}"),
    })
}

pub fn convergence_header(kmax: usize, workers: usize) -> String {
    let mut cols = vec!["N".to_string()];
    cols.extend((0..=kmax).map(|k| format!("err_k{k}")));
    cols.push("wallclock_s".into());
    cols.extend((0..workers).map(|w| format!("newton_w{w}")));
    cols.join(",")
}

pub fn convergence_line(row: &ConvergenceRow) -> String {
    let mut s = row.n.to_string();
    for e in &row.err {
        write!(s, ",{}", format_float(*e)).unwrap();
    }
    write!(s, ",{}", format_float(row.wallclock_s)).unwrap();
    for n in &row.newton {
        write!(s, ",{n}").unwrap();
    }
    s
}

pub fn write_convergence(table: &ConvergenceTable) -> String {
    let mut out = convergence_header(table.kmax, table.workers);
    out.push('\n');
    for row in &table.rows {
        out.push_str(&convergence_line(row));
        out.push('\n');
    }
    out
}

pub fn parse_convergence(text: &str) -> Result<ConvergenceTable> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(HarnessError::Csv {
        line: 1,
        message: "empty input".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    let n_err = cols.iter().filter(|c| c.starts_with("err_k")).count();
    let workers = cols.iter().filter(|c| c.starts_with("newton_w")).count();
    if n_err == 0 || cols.first() != Some(&"N") || cols.len() != 2 + n_err + workers {
        return Err(HarnessError::Csv {
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let kmax = n_err - 1;
    if header != convergence_header(kmax, workers) {
        return Err(HarnessError::Csv {
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols.len() {
            return Err(HarnessError::Csv {
                line: line_no,
                message: format!("expected {} cells, got {}", cols.len(), cells.len()),
            });
        }
        let n = parse_int(cells[0], line_no)? as usize;
        let err = cells[1..=n_err]
            .iter()
            .map(|c| parse_float(c, line_no))
            .collect::<Result<Vec<_>>>()?;
        let wallclock_s = parse_float(cells[n_err + 1], line_no)?;
        let newton = cells[n_err + 2..]
            .iter()
            .map(|c| parse_int(c, line_no))
            .collect::<Result<Vec<_>>>()?;
        rows.push(ConvergenceRow {
            n,
            err,
            wallclock_s,
            newton,
        });
    }
    Ok(ConvergenceTable { kmax, workers, rows })
}

/// Reference file: header `N,w_0,…,w_{d−1}` and one row with the fine step
/// count and the end-time state.
pub fn write_reference(fine_steps: usize, w: &[f64]) -> String {
    let mut out = String::from("N");
    for i in 0..w.len() {
        write!(out, ",w_{i}").unwrap();
    }
    write!(out, "\n{fine_steps}").unwrap();
    for x in w {
        write!(out, ",{}", format_float(*x)).unwrap();
    }
    out.push('\n');
    out
}

pub fn parse_reference(text: &str) -> Result<(usize, Vec<f64>)> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let row = lines.next().ok_or(HarnessError::Csv {
        line: 2,
        message: "missing data row".into(),
    })?;
    let cells: Vec<&str> = row.split(',').collect();
    if header.split(',').count() != cells.len() || cells.len() < 2 {
        return Err(HarnessError::Csv {
            line: 2,
            message: "cell count does not match header".into(),
        });
    }
    let n = parse_int(cells[0], 2)? as usize;
    let w = cells[1..].iter().map(|c| parse_float(c, 2)).collect::<Result<Vec<_>>>()?;
    Ok((n, w))
}

pub const LIMIT_HEADER: &str = "problem,N,kmax_adaptive,err_adaptive,err_limit,rel_diff";

pub fn write_limit(panels: &[LimitPanel]) -> String {
    let mut out = format!("{LIMIT_HEADER}\n");
    for panel in panels {
        for row in &panel.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                panel.problem,
                row.n,
                row.adaptive_kmax.map(|k| k.to_string()).unwrap_or_default(),
                format_optional(row.adaptive_err),
                format_optional(row.limit_err),
                format_optional(row.rel_diff()),
            )
            .unwrap();
        }
    }
    out
}

/// Rows of a limit table with their problem labels.
pub fn parse_limit(text: &str) -> Result<Vec<(String, LimitRow)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == LIMIT_HEADER => {}
        _ => {
            return Err(HarnessError::Csv {
                line: 1,
                message: "unexpected header".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 6 {
            return Err(HarnessError::Csv {
                line: line_no,
                message: format!("expected 6 cells, got {}", cells.len()),
            });
        }
        let adaptive_kmax = if cells[2].is_empty() {
            None
        } else {
            Some(parse_int(cells[2], line_no)? as usize)
        };
        rows.push((
            cells[0].to_string(),
            LimitRow {
                n: parse_int(cells[1], line_no)? as usize,
                adaptive_kmax,
                adaptive_err: parse_optional(cells[3], line_no)?,
                limit_err: parse_optional(cells[4], line_no)?,
            },
        ));
    }
    Ok(rows)
}

pub fn write_speedup(reports: &[SpeedupReport]) -> String {
    let mut out = String::from("N,workers,serial_s,parallel_s,speedup,theoretical\n");
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.n,
            r.workers,
            format_float(r.serial_s),
            format_float(r.parallel_s),
            format_float(r.speedup),
            format_float(r.theoretical)
        )
        .unwrap();
    }
    out
}

/// `(N, serial cycles, pipelined cycles)` rows.
pub fn write_schedule(rows: &[(usize, usize, usize)]) -> String {
    let mut out = String::from("N,serial_cycles,pipelined_cycles,speedup_bound\n");
    for &(n, serial, pipelined) in rows {
        writeln!(out, "{n},{serial},{pipelined},{}", format_float(serial as f64 / pipelined as f64)).unwrap();
    }
    out
}
