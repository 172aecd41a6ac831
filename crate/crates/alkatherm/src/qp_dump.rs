//! Plain-text dump of a failed QP, for offline inspection.

use std::fmt::Write as _;

use alkatherm_core::control::FailedSolve;

pub fn dump(failed: &FailedSolve, time_s: f64) -> String {
    let qp = &failed.qp;
    let n = qp.dim();
    let mut s = String::new();
    let _ = writeln!(s, "# box QP that failed at t = {time_s} s");
    let _ = writeln!(s, "n {n}");
    match failed.kkt_residual {
        Some(r) => {
            let _ = writeln!(s, "kkt_residual {r}");
        }
        None => {
            let _ = writeln!(s, "kkt_residual none");
        }
    }
    let _ = writeln!(s, "H");
    for i in 0..n {
        let _ = writeln!(s, "{}", line(qp.h.row(i)));
    }
    let _ = writeln!(s, "f {}", line(&qp.f));
    let _ = writeln!(s, "lower {}", line(&qp.lower));
    let _ = writeln!(s, "upper {}", line(&qp.upper));
    match &failed.x {
        Some(x) => {
            let _ = writeln!(s, "x {}", line(x));
        }
        None => {
            let _ = writeln!(s, "x none");
        }
    }
    s
}

fn line(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}
