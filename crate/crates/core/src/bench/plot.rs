//! Standalone SVG chart of RMSE against SNR, log-scaled RMSE axis.

use std::fmt::Write as _;

use super::config::EstimatorKind;
use super::sweep::SweepRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: [f64; 4] = [60.0, 20.0, 30.0, 50.0]; // left, right, top, bottom
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn color(kind: EstimatorKind) -> &'static str {
    match kind {
        EstimatorKind::OracleMfp => COLORS[0],
        EstimatorKind::Sbl => COLORS[1],
        EstimatorKind::GccPhat => COLORS[2],
        EstimatorKind::Cnn => COLORS[3],
    }
}

pub fn render_svg(rows: &[SweepRow]) -> String {
    let finite: Vec<&SweepRow> = rows.iter().filter(|r| r.rmse_m.is_finite() && r.rmse_m > 0.0).collect();
    let (mut x0, mut x1) = bounds(finite.iter().map(|r| r.snr_db));
    if x0 == x1 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    let (lo, hi) = bounds(finite.iter().map(|r| r.rmse_m.log10()));
    let (y0, y1) = (lo.floor(), hi.ceil().max(lo.floor() + 1.0));
    let [ml, mr, mt, mb] = MARGIN;
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * (WIDTH - ml - mr);
    let py = |y: f64| HEIGHT - mb - (y - y0) / (y1 - y0) * (HEIGHT - mt - mb);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{ml}" y="{mt}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - ml - mr,
        HEIGHT - mt - mb
    );
    let mut decade = y0;
    while decade <= y1 + 1e-9 {
        let y = py(decade);
        let _ = writeln!(
            s,
            r##"<line x1="{ml}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            WIDTH - mr,
            ml - 6.0,
            y + 4.0,
            fmt_decade(decade)
        );
        decade += 1.0;
    }
    let mut ticks: Vec<f64> = finite.iter().map(|r| r.snr_db).collect();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for t in ticks {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{t}</text>"#,
            px(t),
            HEIGHT - mb + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">SNR [dB]</text>"#,
        ml + (WIDTH - ml - mr) / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.1}" text-anchor="middle" transform="rotate(-90 15 {:.1})">RMSE [m]</text>"#,
        mt + (HEIGHT - mt - mb) / 2.0,
        mt + (HEIGHT - mt - mb) / 2.0
    );

    let mut kinds: Vec<EstimatorKind> = Vec::new();
    for r in &finite {
        if !kinds.contains(&r.estimator) {
            kinds.push(r.estimator);
        }
    }
    for (i, kind) in kinds.iter().enumerate() {
        let mut pts: Vec<(f64, f64)> = finite
            .iter()
            .filter(|r| r.estimator == *kind)
            .map(|r| (px(r.snr_db), py(r.rmse_m.log10())))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
        let c = color(*kind);
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for (x, y) in &pts {
            let _ = writeln!(s, r#"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="{c}"/>"#);
        }
        let ly = mt + 16.0 + 16.0 * i as f64;
        let lx = WIDTH - mr - 110.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.1}" y2="{ly}" stroke="{c}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{kind}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

fn fmt_decade(d: f64) -> String {
    let v = 10f64.powf(d);
    if v >= 1.0 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}
