//! Trajectory tables as CSV or JSON.

use routh::calculus::Trajectory;
use serde_json::{json, Value};

pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Columns: t, coordinates, velocities (`<coord>_dot`), then `E_L`, `J_L`
/// and any remaining diagnostics in name order. Vector channels expand to
/// `<name>_1`, `<name>_2`, ...
pub fn table(tr: &Trajectory) -> Table {
    let names = &tr.chart.coord_names;
    let mut columns = vec!["t".to_string()];
    columns.extend(names.iter().cloned());
    columns.extend(names.iter().map(|c| format!("{c}_dot")));
    let mut channels: Vec<&String> = tr.diagnostics.keys().collect();
    channels.sort_by_key(|k| (k.as_str() != "E_L", k.as_str() != "J_L", k.as_str()));
    for ch in &channels {
        let width = tr.diagnostics[*ch].first().map_or(0, |x| x.len());
        if width == 1 {
            columns.push((*ch).clone());
        } else {
            columns.extend((1..=width).map(|i| format!("{ch}_{i}")));
        }
    }
    let rows = (0..tr.len())
        .map(|i| {
            let s = &tr.states[i];
            let mut row = vec![tr.times[i]];
            row.extend(s.q.iter());
            row.extend(s.v.iter());
            for ch in &channels {
                row.extend(tr.diagnostics[*ch][i].iter());
            }
            row
        })
        .collect();
    Table { columns, rows }
}

/// 17 significant digits, so values round-trip exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn to_csv(t: &Table) -> String {
    let mut out = t.columns.join(",");
    out.push('\n');
    for row in &t.rows {
        out.push_str(&row.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

pub fn to_json(t: &Table) -> Value {
    json!({ "columns": t.columns, "rows": t.rows })
}
