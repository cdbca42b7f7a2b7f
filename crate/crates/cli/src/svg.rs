//! Minimal SVG scatter plot of a sweep table.

use std::fmt::Write;

use qtomo::montecarlo::{StateClass, SweepAxis, SweepTable};

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD_L: f64 = 70.0;
const PAD_R: f64 = 130.0;
const PAD_T: f64 = 20.0;
const PAD_B: f64 = 50.0;

fn colour(class: StateClass) -> &'static str {
    match class {
        StateClass::Pure => "#1f77b4",
        StateClass::Mixed => "#2ca02c",
        StateClass::Thermal => "#d62728",
        StateClass::AlignedY => "#9467bd",
        StateClass::Stretched => "#ff7f0e",
    }
}

fn log_axis(axis: SweepAxis) -> bool {
    matches!(axis, SweepAxis::Snr | SweepAxis::Kappa2)
}

pub fn render(table: &SweepTable) -> String {
    let log = log_axis(table.axis) && table.rows.iter().all(|r| r.axis_value > 0.0);
    let tx = |v: f64| if log { v.log10() } else { v };
    let xs: Vec<f64> = table.rows.iter().map(|r| tx(r.axis_value)).collect();
    let (mut x0, mut x1) = xs.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let span = x1 - x0;
    let (x0, x1) = (x0 - 0.05 * span, x1 + 0.05 * span);
    let lows = table.rows.iter().map(|r| r.mean_fidelity() - r.var_fidelity().sqrt());
    let mut y0 = lows.fold(1.0f64, f64::min).clamp(0.0, 1.0);
    y0 = (y0 * 100.0).floor() / 100.0;
    if y0 > 0.99 {
        y0 = 0.99;
    }
    let y1 = 1.0;
    let px = |x: f64| PAD_L + (x - x0) / (x1 - x0) * (W - PAD_L - PAD_R);
    let py = |y: f64| H - PAD_B - (y - y0) / (y1 - y0) * (H - PAD_T - PAD_B);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let (bx0, bx1, by0, by1) = (PAD_L, W - PAD_R, PAD_T, H - PAD_B);
    let _ = writeln!(s, r#"<rect x="{bx0}" y="{by0}" width="{}" height="{}" fill="none" stroke="black"/>"#, bx1 - bx0, by1 - by0);
    for k in 0..=4 {
        let y = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{y:.3}</text>"#, PAD_L - 6.0, py(y) + 4.0);
    }
    let mut ticks: Vec<f64> = table.rows.iter().map(|r| r.axis_value).collect();
    ticks.dedup();
    for v in ticks {
        let x = px(tx(v));
        let _ = writeln!(s, r#"<line x1="{x:.1}" y1="{by1}" x2="{x:.1}" y2="{}" stroke="black"/>"#, by1 + 4.0);
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{v}</text>"#, by1 + 18.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (bx0 + bx1) / 2.0, H - 10.0, table.axis.name());
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">fidelity</text>"#,
        (by0 + by1) / 2.0,
        (by0 + by1) / 2.0
    );
    let mut classes: Vec<StateClass> = Vec::new();
    for r in &table.rows {
        if !classes.contains(&r.state_class) {
            classes.push(r.state_class);
        }
    }
    for (i, &c) in classes.iter().enumerate() {
        let col = colour(c);
        for r in table.rows.iter().filter(|r| r.state_class == c) {
            let (x, m, sd) = (px(tx(r.axis_value)), r.mean_fidelity(), r.var_fidelity().sqrt());
            let (ylo, yhi) = (py((m - sd).max(y0)), py((m + sd).min(y1)));
            let _ = writeln!(s, r#"<line x1="{x:.1}" y1="{ylo:.1}" x2="{x:.1}" y2="{yhi:.1}" stroke="{col}"/>"#);
            let _ = writeln!(s, r#"<circle cx="{x:.1}" cy="{:.1}" r="4" fill="{col}"/>"#, py(m));
        }
        let ly = PAD_T + 16.0 + 18.0 * i as f64;
        let _ = writeln!(s, r#"<circle cx="{}" cy="{ly}" r="4" fill="{col}"/>"#, W - PAD_R + 16.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, W - PAD_R + 26.0, ly + 4.0, c.name());
    }
    s.push_str("</svg>\n");
    s
}
