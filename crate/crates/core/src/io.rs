//! File formats: telemetry and feature CSV, JSON reports, static SVG charts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::envsim::{BatteryState, EnvSample, PvOutput, SystemSample};
use crate::error::{Error, Result};
use crate::faults::FaultClass;

pub const TELEMETRY_HEADER: [&str; 10] = [
    "time_s", "irr_w_m2", "temp_c", "pv_v", "pv_i", "bus_v", "load_i_a", "soc", "cell_v", "fault_class",
];

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        k => Error::format(path, line, format!("{k:?}")),
    }
}

pub fn telemetry_csv(samples: &[SystemSample]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TELEMETRY_HEADER).expect("in-memory write");
    for s in samples {
        w.write_record([
            s.time_s.to_string(),
            s.env.irradiance.to_string(),
            s.env.temperature.to_string(),
            s.pv.voltage.to_string(),
            s.pv.current.to_string(),
            s.bus_voltage.to_string(),
            s.load_current.to_string(),
            s.battery.soc.to_string(),
            s.battery.cell_voltage.to_string(),
            s.fault.token().to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn write_telemetry(path: &Path, samples: &[SystemSample]) -> Result<()> {
    write_text(path, &telemetry_csv(samples))
}

/// Battery current and saturation are not part of the file and read back as 0/false.
pub fn read_telemetry(path: &Path) -> Result<Vec<SystemSample>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(TELEMETRY_HEADER.iter().copied()) {
        return Err(Error::format(path, 1, format!("expected header `{}`", TELEMETRY_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let num = |i: usize| -> Result<f64> {
            let v: f64 = rec[i]
                .trim()
                .parse()
                .map_err(|_| Error::format(path, line, format!("column `{}`: bad number `{}`", TELEMETRY_HEADER[i], &rec[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::format(path, line, format!("column `{}` is not finite", TELEMETRY_HEADER[i])))
            }
        };
        let fault: FaultClass = rec[9]
            .trim()
            .parse()
            .map_err(|e: Error| Error::format(path, line, e.to_string()))?;
        out.push(SystemSample {
            time_s: num(0)?,
            env: EnvSample {
                irradiance: num(1)?,
                temperature: num(2)?,
            },
            pv: PvOutput {
                voltage: num(3)?,
                current: num(4)?,
            },
            bus_voltage: num(5)?,
            load_current: num(6)?,
            battery: BatteryState {
                soc: num(7)?,
                cell_voltage: num(8)?,
                current: 0.0,
                saturated: false,
            },
            fault,
        });
    }
    if out.is_empty() {
        return Err(Error::format(path, 2, "no data rows"));
    }
    Ok(out)
}

/// `sample_id,kind,f0..f{k-1},label`
pub fn features_csv(kind: &str, rows: &[Vec<f64>], labels: &[FaultClass]) -> Result<String> {
    crate::error::shape(rows.len(), labels.len())?;
    let k = rows.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["sample_id".to_string(), "kind".to_string()];
    header.extend((0..k).map(|i| format!("f{i}")));
    header.push("label".into());
    w.write_record(&header).expect("in-memory write");
    for (i, (row, l)) in rows.iter().zip(labels).enumerate() {
        crate::error::shape(k, row.len())?;
        let mut rec = vec![i.to_string(), kind.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        rec.push(l.token().to_string());
        w.write_record(&rec).expect("in-memory write");
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output"))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value))
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Vertical bars on a fixed [0, 1] axis.
pub fn bar_chart_svg(title: &str, bars: &[(String, f64)]) -> String {
    let (w, h, pad) = (120 + 90 * bars.len(), 320, 40);
    let plot_h = (h - 2 * pad - 20) as f64;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, w / 2, esc(title));
    let base = (h - pad - 20) as f64;
    let _ = writeln!(s, r#"<line x1="{pad}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#, w - pad / 2);
    for t in [0.0, 0.5, 1.0] {
        let y = base - t * plot_h;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{t:.1}</text>"#, pad - 4, y + 4.0);
    }
    for (i, (label, v)) in bars.iter().enumerate() {
        let v = v.clamp(0.0, 1.0);
        let x = pad + 20 + 90 * i;
        let bh = v * plot_h;
        let _ = writeln!(
            s,
            r##"<rect x="{x}" y="{:.1}" width="60" height="{bh:.1}" fill="#4a7ab5"/>"##,
            base - bh
        );
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="middle">{:.4}</text>"#, x + 30, base - bh - 4.0, v);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="middle">{}</text>"#, x + 30, base + 16.0, esc(label));
    }
    s.push_str("</svg>\n");
    s
}

/// Polylines sharing one x axis; y is scaled to the data maximum.
pub fn line_chart_svg(title: &str, x: &[f64], series: &[(String, Vec<f64>)]) -> String {
    let (w, h, pad) = (480.0, 320.0, 40.0);
    let colors = ["#4a7ab5", "#c0504d", "#9bbb59", "#8064a2"];
    let (x0, x1) = (
        x.iter().copied().fold(f64::INFINITY, f64::min),
        x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let ymax = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let sx = |v: f64| pad + if x1 > x0 { (v - x0) / (x1 - x0) } else { 0.5 } * (w - 2.0 * pad);
    let sy = |v: f64| h - pad - v / ymax * (h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, w / 2.0, esc(title));
    let _ = writeln!(s, r#"<line x1="{pad}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - pad, w - pad, h - pad);
    let _ = writeln!(s, r#"<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{}" stroke="black"/>"#, h - pad);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#, pad - 4.0, pad + 4.0, ymax);
    for (i, (name, ys)) in series.iter().enumerate() {
        let c = colors[i % colors.len()];
        let pts: Vec<String> = x.iter().zip(ys).map(|(&a, &b)| format!("{:.1},{:.1}", sx(a), sy(b))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{c}" points="{}"/>"#, pts.join(" "));
        let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{c}">{}</text>"#, w - pad - 120.0, pad + 16.0 * i as f64, esc(name));
    }
    s.push_str("</svg>\n");
    s
}
