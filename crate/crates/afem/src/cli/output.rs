//! Artifact writers: the streaming run log, constants/solution/estimator
//! files, the study table, and a dependency-free log-log SVG plot.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::adapt::{fit_rate, AdaptRecord, RateFit, RunOutcome};
use crate::estimator::EstimateReport;
use crate::fem::FeFunction;

use super::{stop_reason_name, RunConfig};

/// Append-only run.csv writer: one row per record, flushed immediately, so
/// an interrupted run leaves a parseable prefix.
pub struct RunLog {
    out: BufWriter<File>,
    error: Option<io::Error>,
}

pub const RUN_CSV_HEADER: &str =
    "iteration,elements,marked,eta,osc,energy,h1_error,newton_iters,cg_iters,residual_sup";

impl RunLog {
    pub fn create(path: &Path) -> io::Result<RunLog> {
        let file = File::create(path)?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{RUN_CSV_HEADER}")?;
        out.flush()?;
        Ok(RunLog { out, error: None })
    }

    /// Writes and flushes one row; IO errors are deferred to `finish` so
    /// this can run inside the loop observer.
    pub fn append(&mut self, r: &AdaptRecord) {
        if self.error.is_some() {
            return;
        }
        let row = format_record_row(r);
        let result = writeln!(self.out, "{row}").and_then(|_| self.out.flush());
        if let Err(e) = result {
            self.error = Some(e);
        }
    }

    pub fn finish(mut self) -> io::Result<()> {
        match self.error.take() {
            Some(e) => Err(e),
            None => self.out.flush(),
        }
    }
}

fn format_record_row(r: &AdaptRecord) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.iteration,
        r.num_elements,
        r.num_marked,
        r.eta,
        r.osc,
        r.energy,
        opt(r.h1_error),
        r.newton_iters,
        r.total_cg_iters,
        r.final_residual_norm,
    )
}

fn opt_line(key: &str, v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{key} = {x}\n"),
        None => format!("{key} = none\n"),
    }
}

/// constants.txt: the `key = value` summary of a finished run.
pub fn constants_text(cfg: &RunConfig, outcome: &RunOutcome) -> String {
    let c = &outcome.constants;
    let last = outcome.records.last().expect("at least one record");
    let mut s = String::new();
    let _ = write!(
        s,
        "problem = {}\nrun_id = {}\nmode = {}\ntheta = {}\nn_bisect = {}\nseed = {}\n",
        c.problem, c.run_id, cfg.mode, cfg.theta, cfg.n_bisect, cfg.seed
    );
    let _ = write!(
        s,
        "stop = {}\niterations = {}\nelements_final = {}\neta_final = {}\nosc_final = {}\nenergy_final = {}\n",
        stop_reason_name(outcome.stop),
        last.iteration,
        last.num_elements,
        last.eta,
        last.osc,
        last.energy,
    );
    s.push_str(&opt_line("h1_error_final", last.h1_error));
    let _ = write!(s, "c_e = {}\nc_lu = {}\nc_s = {}\n", c.c_e, c.c_lu, c.c_s);
    s.push_str(&opt_line("c_u", c.c_u));
    s.push_str(&opt_line("c_l", c.c_l));
    s.push_str(&opt_line("theta0", c.theta0()));
    s.push_str(&opt_line("nu", c.nu(cfg.theta)));
    s.push_str(&opt_line("mu", c.mu));
    s.push_str(&opt_line("rho", c.rho));
    match &outcome.f_ref {
        Some(r) => {
            let _ = write!(s, "f_ref = {}\nf_ref_method = {}\n", r.value, r.method);
        }
        None => s.push_str("f_ref = none\nf_ref_method = none\n"),
    }
    let _ = write!(
        s,
        "eta_strictly_decreasing = {}\nmax_energy_drift = {}\n",
        outcome.eta_strictly_decreasing, outcome.max_energy_drift
    );
    s
}

/// solution.txt: interior-dof coefficients plus the mesh file reference.
pub fn solution_text(solution: &FeFunction) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "# P1 solution; coefficients indexed by interior dof\nmesh = mesh.txt\ndofs = {}\n",
        solution.space().num_dofs()
    );
    for (i, v) in solution.coeffs().iter().enumerate() {
        let _ = writeln!(s, "dof {i} {v}");
    }
    s
}

/// estimator.csv: per-element squared indicator and oscillation.
pub fn estimator_text(report: &EstimateReport) -> String {
    let mut s = String::from("element,eta_sq,osc_sq\n");
    for (t, (e, o)) in report.eta_sq.iter().zip(&report.osc_sq).enumerate() {
        let _ = writeln!(s, "{t},{e},{o}");
    }
    s
}

/// Writes mesh.txt, solution.txt, estimator.csv, constants.txt after a run.
pub fn write_run_artifacts(
    dir: &Path,
    cfg: &RunConfig,
    outcome: &RunOutcome,
) -> Result<(), String> {
    outcome
        .space
        .mesh()
        .write_file(&dir.join("mesh.txt"))
        .map_err(|e| format!("cannot write mesh.txt: {e}"))?;
    let write = |name: &str, text: String| -> Result<(), String> {
        std::fs::write(dir.join(name), text).map_err(|e| format!("cannot write {name}: {e}"))
    };
    write("solution.txt", solution_text(&outcome.solution))?;
    write("estimator.csv", estimator_text(&outcome.estimate))?;
    write("constants.txt", constants_text(cfg, outcome))?;
    Ok(())
}

/// One plotted curve; points must be positive in both coordinates to appear
/// on the log-log axes.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const SVG_COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Renders a self-contained log-log SVG plot: one `<polyline>` per series,
/// framed axes with decade tick labels, and a legend.
pub fn svg_loglog(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (width, height) = (720.0, 540.0);
    let (left, right, top, bottom) = (80.0, 30.0, 50.0, 70.0);
    let (px, py) = (width - left - right, height - top - bottom);

    let mut lx_min = f64::INFINITY;
    let mut lx_max = f64::NEG_INFINITY;
    let mut ly_min = f64::INFINITY;
    let mut ly_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            if x > 0.0 && y > 0.0 {
                lx_min = lx_min.min(x.log10());
                lx_max = lx_max.max(x.log10());
                ly_min = ly_min.min(y.log10());
                ly_max = ly_max.max(y.log10());
            }
        }
    }
    if !lx_min.is_finite() {
        lx_min = 0.0;
        lx_max = 1.0;
        ly_min = 0.0;
        ly_max = 1.0;
    }
    if lx_max - lx_min < 1e-9 {
        lx_max = lx_min + 1.0;
    }
    if ly_max - ly_min < 1e-9 {
        ly_max = ly_min + 1.0;
    }
    let pad_x = 0.04 * (lx_max - lx_min);
    let pad_y = 0.06 * (ly_max - ly_min);
    lx_min -= pad_x;
    lx_max += pad_x;
    ly_min -= pad_y;
    ly_max += pad_y;
    let map_x = |x: f64| left + (x.log10() - lx_min) / (lx_max - lx_min) * px;
    let map_y = |y: f64| top + (ly_max - y.log10()) / (ly_max - ly_min) * py;

    let mut s = String::new();
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"monospace\" font-size=\"13\">\n"
    );
    let _ = write!(s, "<title>{title}</title>\n");
    let _ = write!(
        s,
        "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    );
    let _ = write!(
        s,
        "<rect x=\"{left}\" y=\"{top}\" width=\"{px}\" height=\"{py}\" fill=\"none\" stroke=\"black\"/>\n"
    );
    let _ = write!(
        s,
        "<text x=\"{}\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">{title}</text>\n",
        left + px / 2.0
    );

    // Decade grid lines and tick labels.
    for d in (lx_min.ceil() as i64)..=(lx_max.floor() as i64) {
        let x = left + (d as f64 - lx_min) / (lx_max - lx_min) * px;
        let _ = write!(
            s,
            "<line x1=\"{x}\" y1=\"{top}\" x2=\"{x}\" y2=\"{}\" stroke=\"#dddddd\"/>\n",
            top + py
        );
        let _ = write!(
            s,
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">1e{d}</text>\n",
            top + py + 20.0
        );
    }
    for d in (ly_min.ceil() as i64)..=(ly_max.floor() as i64) {
        let y = top + (ly_max - d as f64) / (ly_max - ly_min) * py;
        let _ = write!(
            s,
            "<line x1=\"{left}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#dddddd\"/>\n",
            left + px
        );
        let _ = write!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">1e{d}</text>\n",
            left - 8.0,
            y + 4.0
        );
    }
    let _ = write!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n",
        left + px / 2.0,
        height - 18.0
    );
    let _ = write!(
        s,
        "<text x=\"20\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {})\">{y_label}</text>\n",
        top + py / 2.0,
        top + py / 2.0
    );

    for (i, sr) in series.iter().enumerate() {
        let color = SVG_COLORS[i % SVG_COLORS.len()];
        let mut pts = String::new();
        for &(x, y) in &sr.points {
            if x > 0.0 && y > 0.0 {
                let _ = write!(pts, "{},{} ", map_x(x), map_y(y));
            }
        }
        let _ = write!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.trim_end()
        );
        let ly = top + 18.0 + 18.0 * i as f64;
        let _ = write!(
            s,
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            left + px - 170.0,
            left + px - 140.0
        );
        let _ = write!(
            s,
            "<text x=\"{}\" y=\"{}\">{}</text>\n",
            left + px - 132.0,
            ly + 4.0,
            sr.label
        );
    }
    s.push_str("</svg>\n");
    s
}

const STUDY_CSV_HEADER: &str = "series,iteration,elements,growth,eta,osc,h1_error,energy";

fn study_rows(series: &str, outcome: &RunOutcome, s: &mut String) {
    let base = outcome.records[0].num_elements;
    for r in &outcome.records {
        let _ = writeln!(
            s,
            "{series},{},{},{},{},{},{},{}",
            r.iteration,
            r.num_elements,
            r.num_elements.saturating_sub(base),
            r.eta,
            r.osc,
            r.h1_error.map(|v| v.to_string()).unwrap_or_default(),
            r.energy,
        );
    }
}

fn slope_block(series: &str, outcome: &RunOutcome, text: &mut String) {
    let mut line = |quantity: &str, fit: Result<RateFit, crate::adapt::AdaptError>| match fit {
        Ok(f) => {
            let _ = writeln!(
                text,
                "{series}.{quantity}.s_hat = {}\n{series}.{quantity}.r_sq = {}\n{series}.{quantity}.points = {}",
                f.s_hat, f.r_sq, f.points
            );
        }
        Err(e) => {
            let _ = writeln!(text, "{series}.{quantity}.s_hat = unavailable ({e})");
        }
    };
    line("eta", fit_rate(&outcome.records, |r| r.eta, 8));
    if outcome.records.iter().all(|r| r.h1_error.is_some()) {
        line("h1_error", fit_rate(&outcome.records, |r| r.h1_error.unwrap(), 8));
    }
}

/// Writes study.csv, study.txt, study.svg; returns the stdout summary.
pub fn write_study_artifacts(
    dir: &Path,
    cfg_a: &RunConfig,
    outcome_a: &RunOutcome,
    cfg_b: &RunConfig,
    outcome_b: &RunOutcome,
) -> Result<String, String> {
    let mut csv = String::from(STUDY_CSV_HEADER);
    csv.push('\n');
    study_rows("a", outcome_a, &mut csv);
    study_rows("b", outcome_b, &mut csv);

    let mut txt = String::new();
    let _ = writeln!(txt, "problem = {}", outcome_a.constants.problem);
    let _ = writeln!(txt, "a.mode = {}\na.theta = {}", cfg_a.mode, cfg_a.theta);
    let _ = writeln!(txt, "b.mode = {}\nb.theta = {}", cfg_b.mode, cfg_b.theta);
    slope_block("a", outcome_a, &mut txt);
    slope_block("b", outcome_b, &mut txt);

    let series = study_series(cfg_a, outcome_a, cfg_b, outcome_b);
    let svg = svg_loglog(
        &format!("{}: estimator and error decay", outcome_a.constants.problem),
        "elements added",
        "eta / error",
        &series,
    );

    let write = |name: &str, text: &str| -> Result<(), String> {
        std::fs::write(dir.join(name), text).map_err(|e| format!("cannot write {name}: {e}"))
    };
    write("study.csv", &csv)?;
    write("study.txt", &txt)?;
    write("study.svg", &svg)?;
    Ok(txt)
}

fn study_series(
    cfg_a: &RunConfig,
    outcome_a: &RunOutcome,
    cfg_b: &RunConfig,
    outcome_b: &RunOutcome,
) -> Vec<Series> {
    let mut series = Vec::new();
    let mut push = |label: String, pts: Vec<(f64, f64)>| {
        if pts.len() >= 2 {
            series.push(Series { label, points: pts });
        }
    };
    let growth_pts = |o: &RunOutcome, f: &dyn Fn(&AdaptRecord) -> Option<f64>| {
        let base = o.records[0].num_elements;
        o.records
            .iter()
            .filter_map(|r| {
                let x = r.num_elements.saturating_sub(base) as f64;
                f(r).map(|y| (x, y))
            })
            .collect::<Vec<_>>()
    };
    push(format!("a:eta ({})", cfg_a.mode), growth_pts(outcome_a, &|r| Some(r.eta)));
    push(format!("b:eta ({})", cfg_b.mode), growth_pts(outcome_b, &|r| Some(r.eta)));
    push(format!("a:error ({})", cfg_a.mode), growth_pts(outcome_a, &|r| r.h1_error));
    push(format!("b:error ({})", cfg_b.mode), growth_pts(outcome_b, &|r| r.h1_error));
    series
}
