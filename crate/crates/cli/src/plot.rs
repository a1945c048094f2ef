//! Scatter export of a study: CSV rows or a standalone SVG.

use std::fmt::Write as _;

use hwnas_core::search::{rank_and_crowding, trial_value, ObjectiveSpec};
use hwnas_core::store::{TrialRecord, TrialState};

/// One plotted trial.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontPoint {
    pub trial_id: u64,
    pub x: f64,
    pub y: f64,
    /// Nondomination rank under all study objectives (0 = Pareto front).
    pub rank: usize,
}

/// Every COMPLETE trial with its rank and the two requested values.
pub fn front_points(records: &[TrialRecord], specs: &[ObjectiveSpec], x: &str, y: &str) -> Vec<FrontPoint> {
    let complete: Vec<&TrialRecord> = records.iter().filter(|r| r.state == TrialState::Complete).collect();
    let objs: Vec<Vec<f64>> = complete.iter().map(|r| r.objectives.clone().unwrap_or_default()).collect();
    let (rank, _) = rank_and_crowding(&objs, specs);
    complete
        .iter()
        .zip(rank)
        .map(|(r, rank)| FrontPoint { trial_id: r.trial_id, x: trial_value(r, specs, x), y: trial_value(r, specs, y), rank })
        .collect()
}

pub fn to_csv(points: &[FrontPoint], x: &str, y: &str) -> String {
    let mut out = format!("trial_id,{x},{y},rank\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{}", p.trial_id, p.x, p.y, p.rank);
    }
    out
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Rank-0 points are drawn as filled red circles, others as grey rings.
pub fn to_svg(points: &[FrontPoint], x: &str, y: &str) -> String {
    let (x0, x1) = bounds(points.iter().map(|p| p.x));
    let (y0, y1) = bounds(points.iter().map(|p| p.y));
    let sx = |v: f64| MARGIN + (v - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |v: f64| H - MARGIN - (v - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{m} {t} L{m} {b} L{r} {b}" stroke="black" fill="none"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, H - 15.0, escape(x));
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" font-size="14" transform="rotate(-90 15 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y)
    );
    for (v, px) in [(x0, sx(x0)), (x1, sx(x1))] {
        let _ = writeln!(s, r#"<text x="{px:.1}" y="{}" text-anchor="middle" font-size="10">{v:.4}</text>"#, H - MARGIN + 15.0);
    }
    for (v, py) in [(y0, sy(y0)), (y1, sy(y1))] {
        let _ = writeln!(s, r#"<text x="{}" y="{py:.1}" text-anchor="end" font-size="10">{v:.4}</text>"#, MARGIN - 5.0);
    }
    if points.is_empty() {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">no completed trials</text>"#, W / 2.0, H / 2.0);
    }
    let mut ordered: Vec<&FrontPoint> = points.iter().filter(|p| p.x.is_finite() && p.y.is_finite()).collect();
    ordered.sort_by_key(|p| std::cmp::Reverse(p.rank));
    for p in ordered {
        let (cls, style) = if p.rank == 0 {
            ("front", r##"r="5" fill="#d62728" stroke="black""##)
        } else {
            ("dominated", r##"r="4" fill="none" stroke="#7f7f7f""##)
        };
        let _ = writeln!(
            s,
            r#"<circle class="{cls}" data-trial="{}" data-rank="{}" cx="{:.2}" cy="{:.2}" {style}/>"#,
            p.trial_id,
            p.rank,
            sx(p.x),
            sy(p.y)
        );
    }
    s.push_str("</svg>\n");
    s
}
