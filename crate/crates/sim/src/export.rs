//! CSV tables and SVG snapshots of trials.

use serde::Serialize;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use zonowalk::zono::{Vec2, Zonotope2};

use crate::trial::{StepLog, TrialLog, TrialMetrics};

/// Deterministic per-trial row (no wall-clock fields).
#[derive(Serialize)]
struct MetricsRow {
    seed: u64,
    n_peds: usize,
    success: bool,
    steps_to_goal: Option<usize>,
    steps_taken: usize,
    mean_velocity: f64,
    min_ped_distance: f64,
    infeasible_count: usize,
}

pub const METRICS_HEADER: [&str; 8] = [
    "seed",
    "n_peds",
    "success",
    "steps_to_goal",
    "steps_taken",
    "mean_velocity",
    "min_ped_distance",
    "infeasible_count",
];

pub const STEPS_HEADER: [&str; 11] = [
    "step",
    "x",
    "y",
    "theta",
    "v_loc",
    "u_f",
    "u_dtheta",
    "feasible",
    "objective",
    "n_observed",
    "min_ped_distance",
];

fn writer_with_header<W: Write>(w: W, header: &[&str]) -> anyhow::Result<csv::Writer<W>> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(header)?;
    Ok(out)
}

pub fn write_metrics_csv<W: Write>(w: W, metrics: &[TrialMetrics]) -> anyhow::Result<()> {
    let mut out = writer_with_header(w, &METRICS_HEADER)?;
    for m in metrics {
        out.serialize(MetricsRow {
            seed: m.seed,
            n_peds: m.n_peds,
            success: m.success,
            steps_to_goal: m.steps_to_goal,
            steps_taken: m.steps_taken,
            mean_velocity: m.mean_velocity,
            min_ped_distance: m.min_ped_distance,
            infeasible_count: m.infeasible_count,
        })?;
    }
    out.flush()?;
    Ok(())
}

/// Solve rates, kept apart from the metrics because they vary run to run.
pub fn write_timing_csv<W: Write>(w: W, metrics: &[TrialMetrics]) -> anyhow::Result<()> {
    let mut out = writer_with_header(w, &["seed", "n_peds", "median_solve_hz"])?;
    for m in metrics {
        out.write_record([m.seed.to_string(), m.n_peds.to_string(), m.median_solve_hz.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct StepRow {
    step: usize,
    x: f64,
    y: f64,
    theta: f64,
    v_loc: f64,
    u_f: Option<f64>,
    u_dtheta: Option<f64>,
    feasible: bool,
    objective: f64,
    n_observed: usize,
    min_ped_distance: f64,
}

/// One row per state, the initial one included.
pub fn write_steps_csv<W: Write>(w: W, log: &TrialLog) -> anyhow::Result<()> {
    let mut out = writer_with_header(w, &STEPS_HEADER)?;
    for s in &log.steps {
        let p = s.ego.position();
        out.serialize(StepRow {
            step: s.step,
            x: s.ego.x,
            y: s.ego.y,
            theta: s.ego.theta,
            v_loc: s.ego.v_loc,
            u_f: s.control.map(|u| u.u_f),
            u_dtheta: s.control.map(|u| u.u_dtheta),
            feasible: s.feasible,
            objective: s.objective,
            n_observed: s.observed.len(),
            min_ped_distance: s.peds.iter().map(|(_, q)| (q - p).norm()).fold(f64::INFINITY, f64::min),
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn trial_stem(seed: u64, n_peds: usize) -> String {
    format!("trial_seed{seed}_peds{n_peds}")
}

const PX_PER_M: f64 = 40.0;
const MARGIN_M: f64 = 1.0;

struct Canvas {
    field: f64,
    body: String,
}

impl Canvas {
    fn px(&self, p: Vec2) -> (f64, f64) {
        ((p.x + MARGIN_M) * PX_PER_M, (self.field + MARGIN_M - p.y) * PX_PER_M)
    }

    fn polygon(&mut self, pts: &[Vec2], style: &str) {
        let coords: Vec<String> = pts
            .iter()
            .map(|&p| {
                let (x, y) = self.px(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(self.body, r#"<polygon points="{}" {style}/>"#, coords.join(" "));
    }

    fn zonotope(&mut self, z: &Zonotope2, class: &str, style: &str) {
        let mut v = z.vertices();
        if v.len() == 1 {
            // a point zonotope still gets its own (tiny) polygon
            let c = v[0];
            let e = 0.01;
            v = vec![c + Vec2::new(-e, -e), c + Vec2::new(e, -e), c + Vec2::new(e, e), c + Vec2::new(-e, e)];
        }
        self.polygon(&v, &format!(r#"class="{class}" {style}"#));
    }

    fn circle(&mut self, c: Vec2, r: f64, style: &str) {
        let (x, y) = self.px(c);
        let _ = writeln!(self.body, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{:.2}" {style}/>"#, r * PX_PER_M);
    }

    fn star(&mut self, c: Vec2, r: f64) {
        let pts: Vec<Vec2> = (0..10)
            .map(|i| {
                let a = std::f64::consts::FRAC_PI_2 + i as f64 * std::f64::consts::PI / 5.0;
                let rr = if i % 2 == 0 { r } else { 0.4 * r };
                c + Vec2::new(rr * a.cos(), rr * a.sin())
            })
            .collect();
        self.polygon(&pts, r##"class="goal" fill="#f2c230" stroke="#8a6d00""##);
    }
}

/// Snapshot of one walking step: field, pedestrians, ego, sensory circle,
/// goal and every predicted zonotope as its own polygon.
pub fn render_svg(log: &TrialLog, step: &StepLog, sensory_radius: f64) -> String {
    let field = log.scenario.field;
    let mut c = Canvas {
        field,
        body: String::new(),
    };
    let side = (field + 2.0 * MARGIN_M) * PX_PER_M;
    c.polygon(
        &[Vec2::zeros(), Vec2::new(field, 0.0), Vec2::new(field, field), Vec2::new(0.0, field)],
        r##"class="field" fill="#fafafa" stroke="#444""##,
    );
    for zs in &step.ped_zonotopes {
        for z in zs {
            c.zonotope(z, "ped-zono", r##"fill="#e06666" fill-opacity="0.15" stroke="#c00" stroke-width="0.5""##);
        }
    }
    for z in &step.ego_zonotopes {
        c.zonotope(z, "ego-zono", r##"fill="#6fa8dc" fill-opacity="0.2" stroke="#1c4587" stroke-width="0.5""##);
    }
    let trail: Vec<String> = log.steps[..=step.step.min(log.steps.len() - 1)]
        .iter()
        .map(|s| {
            let (x, y) = c.px(s.ego.position());
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(c.body, r##"<polyline class="trail" points="{}" fill="none" stroke="#1c4587"/>"##, trail.join(" "));
    for (id, p) in &step.peds {
        let fill = if step.observed.contains(id) { "#c00" } else { "#999" };
        c.circle(*p, 0.2, &format!(r#"class="ped" fill="{fill}""#));
    }
    let ego = step.ego.position();
    c.circle(ego, sensory_radius, r##"class="sensory" fill="none" stroke="#1c4587" stroke-dasharray="4 3""##);
    c.circle(ego, 0.25, r##"class="ego" fill="#1c4587""##);
    let h = ego + 0.5 * Vec2::new(step.ego.theta.cos(), step.ego.theta.sin());
    let (x1, y1) = c.px(ego);
    let (x2, y2) = c.px(h);
    let _ = writeln!(c.body, r##"<line class="heading" x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="#1c4587" stroke-width="2"/>"##);
    c.star(log.scenario.goal, 0.4);
    format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{side:.0}" height="{side:.0}" viewBox="0 0 {side:.0} {side:.0}">
<title>seed {} peds {} step {}</title>
{}</svg>
"#,
        log.scenario.seed, log.scenario.n_peds, step.step, c.body
    )
}

/// Writes snapshots every `every` steps plus the final one; returns the paths.
pub fn write_snapshots(dir: &Path, log: &TrialLog, sensory_radius: f64, every: usize) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let stem = trial_stem(log.scenario.seed, log.scenario.n_peds);
    let last = log.steps.len() - 1;
    let mut paths = Vec::new();
    for s in &log.steps {
        if s.step % every.max(1) != 0 && s.step != last {
            continue;
        }
        let p = dir.join(format!("{stem}_step{:03}.svg", s.step));
        std::fs::write(&p, render_svg(log, s, sensory_radius))?;
        paths.push(p);
    }
    Ok(paths)
}
