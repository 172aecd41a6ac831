//! CSV trajectories and plain-text run summaries.

use std::fmt::Write as _;
use std::io::Write;

use alkatherm_core::scenario::{LogRow, ScenarioResult};

pub fn write_rows<W: Write>(w: W, rows: &[LogRow]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(LogRow::COLUMNS)?;
    for row in rows {
        out.write_record(row.values().iter().map(|v| v.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_rows<R: std::io::Read>(r: R) -> csv::Result<Vec<[f64; 13]>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut v = [0.0; 13];
        for (slot, field) in v.iter_mut().zip(rec.iter()) {
            *slot = field.parse().unwrap_or(f64::NAN);
        }
        rows.push(v);
    }
    Ok(rows)
}

fn minutes(s: Option<f64>) -> String {
    s.map_or_else(|| "-".to_string(), |v| format!("{:.1} min", v / 60.0))
}

pub fn summary(r: &ScenarioResult) -> String {
    let m = &r.metrics;
    let mut s = String::new();
    let _ = writeln!(s, "controller       {}", r.controller.name());
    let _ = writeln!(s, "set point        {:.2} degC", r.t_set_c);
    let _ = writeln!(
        s,
        "peak T_stack     {:.3} degC at {:.1} min",
        m.peak_t_stack_c,
        m.peak_time_s / 60.0
    );
    let _ = writeln!(s, "overshoot        {:.3} K", m.overshoot_k);
    let _ = writeln!(s, "valve lead       {}", minutes(m.lead_time_s));
    let _ = writeln!(s, "settling         {}", minutes(m.settling_time_s));
    let eff: Vec<String> = m
        .mean_efficiency
        .iter()
        .map(|e| format!("{:.4}", e))
        .collect();
    let _ = writeln!(s, "mean efficiency  {}", eff.join(" "));
    let _ = writeln!(
        s,
        "command range    [{:.4}, {:.4}]",
        m.min_command, m.max_command
    );
    if r.held_commands > 0 {
        let _ = writeln!(s, "held commands    {}", r.held_commands);
    }
    s
}

/// One line per controller: overshoot, peak, lead, settling and the mean
/// efficiency of every load segment.
pub fn write_comparison<W: Write>(w: W, results: &[ScenarioResult]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let segments = results
        .first()
        .map_or(0, |r| r.metrics.mean_efficiency.len());
    let mut header: Vec<String> = [
        "controller",
        "t_set_c",
        "overshoot_k",
        "peak_t_stack_c",
        "lead_time_s",
        "settling_time_s",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..segments).map(|k| format!("efficiency_seg{k}")));
    out.write_record(&header)?;
    for r in results {
        let m = &r.metrics;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        let mut rec = vec![
            r.controller.name().to_string(),
            r.t_set_c.to_string(),
            m.overshoot_k.to_string(),
            m.peak_t_stack_c.to_string(),
            opt(m.lead_time_s),
            opt(m.settling_time_s),
        ];
        rec.extend(m.mean_efficiency.iter().map(|e| e.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
