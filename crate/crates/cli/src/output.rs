//! Deterministic artifact writers: trajectory CSV and JSON summaries.
//!
//! Floats are written with 17 significant digits in a fixed column order,
//! so identical configs reproduce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use hybrid_nss::engine::HybridArc;
use hybrid_nss::momentum::StateLayout;

/// 17 significant digits: one leading digit plus 16 fractional.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        }
    } else {
        format!("{v:.16e}")
    }
}

/// Column layout of a trajectory CSV for a given dynamics variant.
pub struct CsvSchema {
    pub header: Vec<String>,
}

pub fn csv_schema(variant: &str, n: usize) -> CsvSchema {
    let mut header = vec!["t".to_string(), "j".to_string()];
    let mut push_group = |prefix: &str, count: usize| {
        for i in 1..=count {
            header.push(format!("{prefix}_{i}"));
        }
    };
    match variant {
        "psg_flow" => push_group("q", n),
        "baseline_ode" => {
            push_group("q", n);
            push_group("p", n);
            header.push("tau".to_string());
        }
        "h1" => {
            push_group("q", n);
            push_group("p", n);
            push_group("tau", n);
        }
        "h2" => {
            push_group("q", n);
            push_group("p", n);
            push_group("tau", n);
            push_group("qhat", n * n - n);
        }
        "h3" => {
            push_group("q", n);
            push_group("p", n);
            push_group("tau", n);
            push_group("mu", 2 * n);
        }
        "h4" => {
            push_group("q", n);
            push_group("p", n);
            push_group("tau", n);
            push_group("qhat", n * n - n);
            push_group("mu", 2 * n);
        }
        _ => unreachable!("csv schema covers every variant"),
    }
    header.push("dist_to_ne".to_string());
    header.push("V_total".to_string());
    CsvSchema { header }
}

/// Reorders one raw state vector into the CSV column order (estimates
/// before oscillators for the consensus model-free variant).
pub fn state_to_columns(variant: &str, layout: StateLayout, x: &[f64]) -> Vec<f64> {
    match variant {
        "h4" => {
            let mut cols = Vec::with_capacity(x.len());
            cols.extend_from_slice(&x[..3 * layout.n]);
            cols.extend_from_slice(layout.qhat(x));
            cols.extend_from_slice(layout.mu(x));
            cols
        }
        _ => x.to_vec(),
    }
}

/// Writes the trajectory CSV; `dist` and `v_total` align with
/// `arc.samples` (use NaN when a quantity is unavailable).
pub fn write_trajectory_csv(
    path: &Path,
    variant: &str,
    layout: StateLayout,
    arc: &HybridArc,
    dist: &[f64],
    v_total: &[f64],
) -> std::io::Result<()> {
    let schema = csv_schema(variant, layout.n);
    let mut out = String::new();
    out.push_str(&schema.header.join(","));
    out.push('\n');
    for (k, s) in arc.samples.iter().enumerate() {
        write!(out, "{},{}", fmt_f64(s.time.t), s.time.j).unwrap();
        for v in state_to_columns(variant, layout, s.x.as_slice()) {
            out.push(',');
            out.push_str(&fmt_f64(v));
        }
        out.push(',');
        out.push_str(&fmt_f64(dist[k]));
        out.push(',');
        out.push_str(&fmt_f64(v_total[k]));
        out.push('\n');
    }
    fs::write(path, out)
}

/// Parses a trajectory CSV back into an arc (state columns only), for the
/// `compare` subcommand.
pub fn read_trajectory_csv(path: &Path) -> Result<HybridArc, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty csv")?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[0] != "t" || cols[1] != "j" {
        return Err("csv: expected header starting with t,j".into());
    }
    let dist_idx = cols
        .iter()
        .position(|c| *c == "dist_to_ne")
        .ok_or("csv: missing dist_to_ne column")?;
    let mut arc = HybridArc::default();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(format!("csv line {}: wrong field count", lineno + 2));
        }
        let t: f64 = fields[0]
            .parse()
            .map_err(|e| format!("csv line {}: {e}", lineno + 2))?;
        let j: u32 = fields[1]
            .parse()
            .map_err(|e| format!("csv line {}: {e}", lineno + 2))?;
        let state: Result<Vec<f64>, _> = fields[2..dist_idx]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect();
        let state = state.map_err(|e| format!("csv line {}: {e}", lineno + 2))?;
        arc.samples.push(hybrid_nss::engine::Sample {
            time: hybrid_nss::engine::HybridTime { t, j },
            x: nalgebra::DVector::from_vec(state),
        });
    }
    if arc.samples.is_empty() {
        return Err("csv: no samples".into());
    }
    Ok(arc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_is_fixed_width_scientific() {
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_f64(-0.5), "-5.0000000000000000e-1");
        assert_eq!(fmt_f64(f64::NAN), "nan");
    }

    #[test]
    fn schema_column_order() {
        let s = csv_schema("h4", 2);
        assert_eq!(
            s.header,
            vec![
                "t",
                "j",
                "q_1",
                "q_2",
                "p_1",
                "p_2",
                "tau_1",
                "tau_2",
                "qhat_1",
                "qhat_2",
                "mu_1",
                "mu_2",
                "mu_3",
                "mu_4",
                "dist_to_ne",
                "V_total"
            ]
        );
    }
}
