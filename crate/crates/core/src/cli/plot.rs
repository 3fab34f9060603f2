//! Value heat map and greedy-action arrows for grid-world controllers.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::eval::{optimal_state_values, ValueTable};
use crate::fsc::Fsc;
use crate::pomdp::grid::MOVES;
use crate::pomdp::{GridWorldSpec, Pomdp};

pub const PLOT_FORMAT: &str = "riskfsc-plot";
pub const PLOT_FORMAT_VERSION: u32 = 1;

const CELL: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellKind {
    Free,
    Obstacle,
    Goal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellView {
    pub row: usize,
    pub col: usize,
    pub kind: CellKind,
    pub value: f64,
    /// Most probable action at the initial node; `None` on goal and obstacles.
    pub action: Option<usize>,
}

/// Node the controller starts in: the mode of `κ`, lowest index on ties.
pub fn initial_node(f: &Fsc) -> usize {
    let mut best = 0;
    for (g, p) in f.initial().iter().enumerate() {
        if *p > f.initial()[best] {
            best = g;
        }
    }
    best
}

pub fn cell_views(spec: &GridWorldSpec, m: &Pomdp, f: &Fsc, v: &ValueTable) -> Result<Vec<CellView>> {
    f.check_compatible(m)?;
    if v.num_states != m.num_states() || v.num_nodes != f.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "value table is {}x{}, model and controller need {}x{}",
            v.num_states,
            v.num_nodes,
            m.num_states(),
            f.num_nodes()
        )));
    }
    let (best, _) = optimal_state_values(v);
    let g0 = initial_node(f);
    let mut out = Vec::with_capacity(spec.rows * spec.cols);
    for row in 0..spec.rows {
        for col in 0..spec.cols {
            let s = spec.cell_index((row, col));
            let kind = if (row, col) == spec.goal {
                CellKind::Goal
            } else if spec.obstacles.contains(&(row, col)) {
                CellKind::Obstacle
            } else {
                CellKind::Free
            };
            let action = (kind == CellKind::Free).then(|| {
                let marginal = f.action_marginal(m, g0, s);
                let mut a_best = 0;
                for (a, p) in marginal.iter().enumerate() {
                    if *p > marginal[a_best] {
                        a_best = a;
                    }
                }
                a_best
            });
            out.push(CellView { row, col, kind, value: best[s], action });
        }
    }
    Ok(out)
}

pub fn render_csv(cells: &[CellView], g0: usize) -> Result<String> {
    let mut buf = format!("# format: {PLOT_FORMAT} {PLOT_FORMAT_VERSION}\n# arrows: initial node {g0}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["row", "col", "value", "best_action"])?;
        for c in cells {
            let action = c.action.map_or(String::new(), |a| MOVES[a].0.to_string());
            w.write_record([c.row.to_string(), c.col.to_string(), c.value.to_string(), action])?;
        }
        w.flush()?;
    }
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}

/// White (low cost) to dark red (high cost).
fn shade(t: f64) -> (u8, u8, u8) {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    (lerp(255.0, 140.0), lerp(250.0, 20.0), lerp(235.0, 20.0))
}

pub fn render_svg(spec: &GridWorldSpec, cells: &[CellView], g0: usize) -> String {
    let (w, h) = (spec.cols * CELL, spec.rows * CELL);
    let free: Vec<f64> = cells.iter().filter(|c| c.kind == CellKind::Free).map(|c| c.value).collect();
    let lo = free.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = free.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, "<!-- format: {PLOT_FORMAT} {PLOT_FORMAT_VERSION}; arrows: initial node {g0} -->");
    let _ = writeln!(
        s,
        r##"<defs><marker id="head" markerWidth="6" markerHeight="6" refX="5" refY="3" orient="auto"><path d="M0,0 L6,3 L0,6 z" style="fill:#1b3a6b"/></marker></defs>"##
    );
    for c in cells {
        let (x, y) = (c.col * CELL, c.row * CELL);
        let fill = match c.kind {
            CellKind::Obstacle => "#222222".to_string(),
            CellKind::Goal => "#2e8b57".to_string(),
            CellKind::Free => {
                let (r, g, b) = shade((c.value - lo) / span);
                format!("#{r:02x}{g:02x}{b:02x}")
            }
        };
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" style="fill:{fill};stroke:#888888;stroke-width:1"><title>({}, {}) {:.4}</title></rect>"#,
            c.row, c.col, c.value
        );
        let (cx, cy) = (x as f64 + CELL as f64 / 2.0, y as f64 + CELL as f64 / 2.0);
        match (c.kind, c.action) {
            (CellKind::Goal, _) => {
                let _ = writeln!(
                    s,
                    r#"<text x="{cx:.1}" y="{:.1}" style="font-family:sans-serif;font-size:20px;fill:#ffffff;text-anchor:middle">G</text>"#,
                    cy + 7.0
                );
            }
            (CellKind::Free, Some(a)) => {
                let (_, dr, dc) = MOVES[a];
                let len = 0.35 * CELL as f64 / ((dr * dr + dc * dc) as f64).sqrt();
                let (x1, y1) = (cx - dc as f64 * len * 0.5, cy - dr as f64 * len * 0.5);
                let (x2, y2) = (cx + dc as f64 * len * 0.5, cy + dr as f64 * len * 0.5);
                let _ = writeln!(
                    s,
                    r#"<line x1="{x1:.1}" y1="{y1:.1}" x2="{x2:.1}" y2="{y2:.1}" marker-end="url(#head)" style="stroke:#1b3a6b;stroke-width:2"/>"#
                );
            }
            _ => {}
        }
    }
    s.push_str("</svg>\n");
    s
}
