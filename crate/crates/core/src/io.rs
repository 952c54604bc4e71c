//! Plain-text artifacts: `key=value` configs, CSV tables and SVG snapshots.
//!
//! Floats are written with 17 significant digits (`{:.16e}`) so every value
//! round-trips exactly; identical inputs give byte-identical files.

use std::collections::BTreeMap;

use crate::geometry::Vec2;
use crate::lab::FlowTrace;
use crate::linops::{ModeReport, SignReport};
use crate::perturbation::ArcGrid;
use crate::{Error, Result};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parse `key = value` lines; `#` starts a comment, blank lines are skipped.
/// A repeated key keeps its last value.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Domain(format!("line {}: expected key=value, got {line:?}", no + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Domain(format!("line {}: empty key", no + 1)));
        }
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

pub fn key_values_text<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> String {
    pairs.iter().map(|(k, v)| format!("{}={}\n", k.as_ref(), v.as_ref())).collect()
}

fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for r in rows {
        w.write_record(&r).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

pub fn trace_csv(trace: &FlowTrace) -> String {
    table(
        &["t", "length", "a1", "a2", "max_g", "compat", "dist_to_eq"],
        trace.rows.iter().map(|r| {
            [r.t, r.length, r.a1, r.a2, r.max_g, r.compat, r.dist_to_eq].iter().map(|v| fmt_f64(*v)).collect()
        }),
    )
}

pub fn modes_csv(report: &ModeReport) -> String {
    table(
        &["index", "re", "im", "is_null", "c1", "c2", "c3"],
        report.modes.iter().enumerate().map(|(k, m)| {
            vec![
                (k + 1).to_string(),
                fmt_f64(m.lambda.re),
                fmt_f64(m.lambda.im),
                m.is_null.to_string(),
                fmt_f64(m.c[0]),
                fmt_f64(m.c[1]),
                fmt_f64(m.c[2]),
            ]
        }),
    )
}

pub fn signs_csv(report: &SignReport) -> String {
    table(
        &["gamma", "assertion_id", "value", "pass"],
        report.rows.iter().map(|r| vec![fmt_f64(r.gamma), r.id.to_string(), fmt_f64(r.value), r.pass.to_string()]),
    )
}

/// One row per node: arc (1-based), x, v1..v5.
pub fn null_basis_csv(grid: &ArcGrid, basis: &[Vec<f64>; 5]) -> String {
    let cols = basis.each_ref().map(|v| grid.unflatten(v));
    table(
        &["arc", "x", "v1", "v2", "v3", "v4", "v5"],
        (0..3).flat_map(|i| {
            let cols = &cols;
            grid.x[i].iter().enumerate().map(move |(k, x)| {
                let mut row = vec![(i + 1).to_string(), fmt_f64(*x)];
                row.extend(cols.iter().map(|c| fmt_f64(c[i][k])));
                row
            })
        }),
    )
}

pub type Snapshot = (usize, [Vec<Vec2>; 3]);

/// Long format: step, arc (1-based), x, y.
pub fn snapshots_csv(snapshots: &[Snapshot]) -> String {
    table(
        &["step", "arc", "x", "y"],
        snapshots.iter().flat_map(|(step, curves)| {
            curves.iter().enumerate().flat_map(move |(i, c)| {
                c.iter().map(move |p| vec![step.to_string(), (i + 1).to_string(), fmt_f64(p.x), fmt_f64(p.y)])
            })
        }),
    )
}

pub fn read_snapshots_csv(text: &str) -> Result<Vec<Snapshot>> {
    let bad = |e: String| Error::Domain(format!("snapshot table: {e}"));
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let mut out: Vec<Snapshot> = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 4 {
            return Err(bad(format!("expected 4 columns, got {}", rec.len())));
        }
        let step: usize = rec[0].parse().map_err(|_| bad(format!("bad step {:?}", &rec[0])))?;
        let arc: usize = rec[1].parse().map_err(|_| bad(format!("bad arc {:?}", &rec[1])))?;
        if !(1..=3).contains(&arc) {
            return Err(bad(format!("arc must be 1..=3, got {arc}")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad coordinate {s:?}")));
        let p = Vec2::new(num(&rec[2])?, num(&rec[3])?);
        if out.last().map(|s| s.0) != Some(step) {
            out.push((step, Default::default()));
        }
        out.last_mut().expect("pushed above").1[arc - 1].push(p);
    }
    Ok(out)
}

const ARC_COLOURS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

/// SVG 1.1 drawing with one polyline path per arc; the viewport fits the
/// curves with a 5% margin and y points up.
pub fn curves_svg(curves: &[Vec<Vec2>; 3]) -> String {
    let pts = curves.iter().flatten();
    let (mut lo, mut hi) = (Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for p in pts {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    if !(lo.x.is_finite() && hi.x.is_finite()) {
        lo = Vec2::new(-1.0, -1.0);
        hi = Vec2::new(1.0, 1.0);
    }
    let span = (hi - lo).max().max(1e-12);
    let pad = 0.05 * span;
    let (x0, y0) = (lo.x - pad, -(hi.y + pad));
    let (w, h) = (hi.x - lo.x + 2.0 * pad, hi.y - lo.y + 2.0 * pad);
    let stroke = 0.004 * span;
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str("<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" ");
    s.push_str(&format!("width=\"{:.0}\" height=\"{:.0}\" ", 600.0, 600.0 * h / w));
    s.push_str(&format!("viewBox=\"{x0:.9} {y0:.9} {w:.9} {h:.9}\">\n"));
    for (i, c) in curves.iter().enumerate() {
        let d: Vec<String> = c
            .iter()
            .enumerate()
            .map(|(k, p)| format!("{}{:.9} {:.9}", if k == 0 { "M" } else { "L" }, p.x, -p.y))
            .collect();
        s.push_str(&format!(
            "  <path id=\"arc{}\" d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{stroke:.9}\"/>\n",
            i + 1,
            d.join(" "),
            ARC_COLOURS[i]
        ));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_values_skip_comments_and_blank_lines() {
        let kv = parse_key_values("# header\n grid.n = 64  # per arc\n\nflow.dt=1e-3\n").unwrap();
        assert_eq!(kv.len(), 2);
        assert_eq!(kv["grid.n"], "64");
        assert_eq!(kv["flow.dt"], "1e-3");
        assert!(matches!(parse_key_values("oops"), Err(Error::Domain(m)) if m.contains("line 1")));
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn snapshots_round_trip() {
        let curves = |s: f64| -> [Vec<Vec2>; 3] {
            std::array::from_fn(|i| (0..4).map(|k| Vec2::new(s * k as f64, i as f64 - 0.1 * k as f64)).collect())
        };
        let snaps = vec![(0, curves(1.0)), (10, curves(0.5))];
        let back = read_snapshots_csv(&snapshots_csv(&snaps)).unwrap();
        assert_eq!(back, snaps);
    }

    #[test]
    fn svg_has_one_path_per_arc() {
        let curves: [Vec<Vec2>; 3] = std::array::from_fn(|i| vec![Vec2::new(0.0, i as f64), Vec2::new(1.0, i as f64)]);
        let svg = curves_svg(&curves);
        assert_eq!(svg.matches("<path").count(), 3);
        assert!(svg.contains("version=\"1.1\""));
    }
}
