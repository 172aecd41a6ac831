//! Plain-text LPV table files.
//!
//! Layout, one record per line, numbers separated by spaces:
//!
//! ```text
//! table <t_set_c> <tau_s> <m1> <m2> <t_amb_c> <t_c_in_c> <points>
//! entry <index> <current_a> <t_stack> <t_sep> <t_c> <u_star> <saturated_low 0|1> <residual> <iterations>
//! ad <row 0 of A_d>
//! ad <row 1 of A_d>
//! ad <row 2 of A_d>
//! bd <B_d>
//! ed <E_d>
//! e <offset>
//! ```
//!
//! The `entry` block repeats once per grid point. Lines starting with `#`
//! are comments. Numbers are written in shortest round-trip form, so a
//! table survives export and import bit for bit.

use std::fmt::Write as _;

use alkatherm_core::equilibrium::SteadyState;
use alkatherm_core::linalg::Matrix;
use alkatherm_core::lpv::{split_delay, LpvEntry, LpvTable};
use alkatherm_core::params::Ambient;
use alkatherm_core::plant::PlantState;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LpvIoError {
    #[error("line {line}: {what}")]
    Syntax { line: usize, what: String },
    #[error("table declares {declared} entries but holds {found}")]
    Count { declared: usize, found: usize },
}

pub fn export(table: &LpvTable) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# LPV table: header, then one block per grid point");
    let _ = writeln!(
        s,
        "table {} {} {} {} {} {} {}",
        table.t_set,
        table.tau_s,
        table.m1,
        table.m2,
        table.ambient.t_amb_c,
        table.ambient.t_c_in_c,
        table.entries.len()
    );
    for e in &table.entries {
        let x = e.steady.state;
        let _ = writeln!(
            s,
            "entry {} {} {} {} {} {} {} {} {}",
            e.index,
            e.current_a,
            x.t_stack,
            x.t_sep,
            x.t_c,
            e.steady.opening,
            u8::from(e.steady.saturated_low),
            e.steady.residual,
            e.steady.iterations
        );
        for i in 0..3 {
            let _ = writeln!(s, "ad {}", join(e.ad.row(i)));
        }
        let _ = writeln!(s, "bd {}", join(e.bd.as_slice()));
        let _ = writeln!(s, "ed {}", join(e.ed.as_slice()));
        let _ = writeln!(s, "e {}", join(&e.offset));
    }
    s
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, what: impl Into<String>) -> LpvIoError {
        LpvIoError::Syntax {
            line: self.line,
            what: what.into(),
        }
    }

    /// Next non-comment record with the given tag, as its fields.
    fn record(&mut self, tag: &str) -> Result<Vec<&'a str>, LpvIoError> {
        for (k, raw) in self.inner.by_ref() {
            self.line = k + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let mut parts = t.split_whitespace();
            let head = parts.next().unwrap_or_default();
            if head != tag {
                return Err(self.err(format!("expected `{tag}`, found `{head}`")));
            }
            return Ok(parts.collect());
        }
        Err(self.err(format!("missing `{tag}` record")))
    }

    fn numbers(&mut self, tag: &str, n: usize) -> Result<Vec<f64>, LpvIoError> {
        let fields = self.record(tag)?;
        if fields.len() != n {
            return Err(self.err(format!("`{tag}` needs {n} numbers, found {}", fields.len())));
        }
        fields
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| self.err(format!("bad number `{f}`")))
            })
            .collect()
    }
}

fn count(v: f64, lines: &Lines<'_>) -> Result<usize, LpvIoError> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(lines.err(format!("expected a count, found {v}")))
    }
}

pub fn import(text: &str) -> Result<LpvTable, LpvIoError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let h = lines.numbers("table", 7)?;
    let (m1, m2, points) = (
        count(h[2], &lines)?,
        count(h[3], &lines)?,
        count(h[6], &lines)?,
    );
    let ambient = Ambient {
        t_amb_c: h[4],
        t_c_in_c: h[5],
    };
    let mut entries = Vec::with_capacity(points);
    for _ in 0..points {
        let v = lines.numbers("entry", 9)?;
        let mut ad = Matrix::zeros(3, 3);
        for i in 0..3 {
            let row = lines.numbers("ad", 3)?;
            for (j, a) in row.into_iter().enumerate() {
                ad[(i, j)] = a;
            }
        }
        let bd = Matrix::column(&lines.numbers("bd", 3)?);
        let ed = Matrix::column(&lines.numbers("ed", 3)?);
        let e = lines.numbers("e", 3)?;
        let (ad1, ad2) = split_delay(&ad);
        let steady = SteadyState {
            state: PlantState {
                t_stack: v[2],
                t_sep: v[3],
                t_c: v[4],
            },
            opening: v[5],
            current_a: v[1],
            ambient,
            saturated_low: v[6] != 0.0,
            residual: v[7],
            iterations: count(v[8], &lines)?,
        };
        entries.push(LpvEntry {
            index: count(v[0], &lines)?,
            current_a: v[1],
            steady,
            ad,
            ad1,
            ad2,
            bd,
            ed,
            offset: [e[0], e[1], e[2]],
        });
    }
    let extra = text.lines().skip(lines.line).any(|l| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('#')
    });
    if extra {
        return Err(LpvIoError::Count {
            declared: points,
            found: points + 1,
        });
    }
    Ok(LpvTable {
        entries,
        tau_s: h[1],
        m1,
        m2,
        t_set: h[0],
        ambient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alkatherm_core::lpv::build_table;
    use alkatherm_core::params::{Preset, SystemParameters};

    #[test]
    fn round_trip_is_exact() {
        let p = SystemParameters::lab_5nm3();
        let t = build_table(&p, 70.0, 4, 120.0, Preset::Lab5Nm3.ambient()).unwrap();
        let back = import(&export(&t)).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn malformed_files_report_the_line() {
        assert!(matches!(import(""), Err(LpvIoError::Syntax { .. })));
        let bad = "table 70 120 3 2 10 23 1\nentry 0 144 1 2 3 0 0 0 1\nad 1 2\n";
        assert_eq!(
            import(bad),
            Err(LpvIoError::Syntax {
                line: 3,
                what: "`ad` needs 3 numbers, found 2".into()
            })
        );
        let p = SystemParameters::lab_5nm3();
        let t = build_table(&p, 70.0, 2, 120.0, Preset::Lab5Nm3.ambient()).unwrap();
        let text = export(&t).replacen(" 2\n", " 1\n", 1);
        assert!(matches!(import(&text), Err(LpvIoError::Count { .. })));
    }
}
