//! SVG figures and CSV tables built from the artifacts of a run directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::artifacts::load_latents;
use super::rundir::{ensure_dir, read_json, write_text};
use crate::error::{Error, Result};
use crate::infer::{average_jerk, EvalReport};
use crate::train::{LossHistory, SweepRow};

pub const EVAL_REPORT: &str = "eval_report.json";
pub const LATENTS_DIR: &str = "latents";
pub const STAGE1_HISTORY: &str = "stage1_history.json";
pub const SWEEP_TABLE: &str = "sweep.json";
pub const PLOTS_DIR: &str = "plots";

/// The four inputs, relative to the run directory, in figure order.
pub fn expected_inputs() -> [PathBuf; 4] {
    [
        PathBuf::from(EVAL_REPORT),
        Path::new(LATENTS_DIR).join(crate::datastore::MANIFEST),
        PathBuf::from(STAGE1_HISTORY),
        PathBuf::from(SWEEP_TABLE),
    ]
}

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Plot(e.to_string())
}

const PALETTE: [RGBColor; 8] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
    RGBColor(227, 119, 194),
    RGBColor(127, 127, 127),
];

fn color(i: usize) -> RGBColor {
    PALETTE[i % PALETTE.len()]
}

fn range_of(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-12);
    (lo - pad, hi + pad)
}

fn positive_range(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite() && *v > 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (1e-3, 1.0);
    }
    (lo / 1.5, hi * 1.5)
}

/// Relative RMSE over time with the training and extrapolation windows shaded.
pub fn rmse_curve(report: &EvalReport, out: &Path) -> Result<Vec<PathBuf>> {
    let svg = out.join("rmse_curve.svg");
    let t = &report.times;
    let split = report.train_len.min(t.len()).max(1) - 1;
    {
        let root = SVGBackend::new(&svg, (800, 480)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let (x0, x1) = (t.first().copied().unwrap_or(0.0), t.last().copied().unwrap_or(1.0).max(1e-9));
        let (_, y1) = range_of(report.rel_rmse_curve.iter().copied().chain([0.0]));
        let mut chart = ChartBuilder::on(&root)
            .caption("Forecast error over time", ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(70)
            .build_cartesian_2d(x0..x1, 0.0..y1)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("time")
            .y_desc("relative RMSE")
            .draw()
            .map_err(plot_err)?;
        let ts = t.get(split).copied().unwrap_or(x1);
        chart
            .draw_series([Rectangle::new([(x0, 0.0), (ts, y1)], BLUE.mix(0.08).filled())])
            .map_err(plot_err)?
            .label("training window")
            .legend(|(x, y)| Rectangle::new([(x, y - 5), (x + 15, y + 5)], BLUE.mix(0.2).filled()));
        chart
            .draw_series([Rectangle::new([(ts, 0.0), (x1, y1)], RED.mix(0.08).filled())])
            .map_err(plot_err)?
            .label("extrapolation window")
            .legend(|(x, y)| Rectangle::new([(x, y - 5), (x + 15, y + 5)], RED.mix(0.2).filled()));
        chart
            .draw_series(LineSeries::new(
                t.iter().copied().zip(report.rel_rmse_curve.iter().copied()),
                BLACK.stroke_width(2),
            ))
            .map_err(plot_err)?
            .label("mean over test trajectories")
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 15, y)], BLACK.stroke_width(2)));
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.85))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    let csv_path = out.join("rmse_curve.csv");
    let mut csv = String::from("time,rel_rmse,window\n");
    for (i, (t, r)) in t.iter().zip(&report.rel_rmse_curve).enumerate() {
        let w = if i < report.train_len { "train" } else { "extrapolation" };
        writeln!(csv, "{t},{r},{w}").unwrap();
    }
    write_text(&csv_path, &csv)?;
    Ok(vec![svg, csv_path])
}

/// Every latent coordinate of one trajectory over time, annotated with its
/// average jerk. Prefers the first held-out trajectory.
pub fn latent_series(latents_dir: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let (lats, _) = load_latents(latents_dir)?;
    let lat = lats
        .iter()
        .find(|l| l.test)
        .or(lats.first())
        .ok_or_else(|| Error::MissingInputs(vec![latents_dir.display().to_string()]))?;
    let jerk = average_jerk(lat).ok();
    let svg = out.join("latents.svg");
    {
        let root = SVGBackend::new(&svg, (800, 480)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let (x0, x1) = range_of(lat.times.iter().copied());
        let (y0, y1) = range_of(lat.values.iter().copied());
        let caption = match jerk {
            Some(j) => format!("Latent trajectory {} (average jerk {j:.3e})", lat.source),
            None => format!("Latent trajectory {}", lat.source),
        };
        let mut chart = ChartBuilder::on(&root)
            .caption(caption, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(70)
            .build_cartesian_2d(x0..x1, y0..y1)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("time")
            .y_desc("latent value")
            .draw()
            .map_err(plot_err)?;
        for c in 0..lat.d_z {
            let col = color(c);
            chart
                .draw_series(LineSeries::new(
                    (0..lat.len()).map(|i| (lat.times[i], lat.state(i)[c])),
                    col.stroke_width(2),
                ))
                .map_err(plot_err)?
                .label(format!("z{c}"))
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 15, y)], col.stroke_width(2)));
        }
        if lat.d_z <= 16 {
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.85))
                .border_style(BLACK)
                .draw()
                .map_err(plot_err)?;
        }
        root.present().map_err(plot_err)?;
    }
    let csv_path = out.join("latents.csv");
    let mut csv = String::from("source,time");
    for c in 0..lat.d_z {
        write!(csv, ",z{c}").unwrap();
    }
    csv.push('\n');
    for i in 0..lat.len() {
        write!(csv, "{},{}", lat.source, lat.times[i]).unwrap();
        for v in lat.state(i) {
            write!(csv, ",{v}").unwrap();
        }
        csv.push('\n');
    }
    write_text(&csv_path, &csv)?;
    Ok(vec![svg, csv_path])
}

/// Stage-I training losses per iteration and held-out losses per epoch.
pub fn loss_curves(history: &LossHistory, out: &Path) -> Result<Vec<PathBuf>> {
    let svg = out.join("losses.svg");
    let its = &history.iterations;
    {
        let root = SVGBackend::new(&svg, (800, 480)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let x1 = its.last().map_or(1, |r| r.iter.max(1)) as f64;
        let (y0, y1) = positive_range(
            its.iter()
                .flat_map(|r| [r.total, r.recon, r.jerk])
                .chain(history.epochs.iter().flat_map(|e| [e.test_recon, e.test_jerk])),
        );
        let mut chart = ChartBuilder::on(&root)
            .caption("Stage I training", ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(70)
            .build_cartesian_2d(0.0..x1, (y0..y1).log_scale())
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("iteration")
            .y_desc("loss")
            .y_label_formatter(&|v| format!("{v:.0e}"))
            .draw()
            .map_err(plot_err)?;
        let series: [(&str, fn(&crate::train::IterRecord) -> f64); 3] =
            [("train total", |r| r.total), ("train recon", |r| r.recon), ("train jerk", |r| r.jerk)];
        for (k, (name, get)) in series.into_iter().enumerate() {
            let col = color(k);
            chart
                .draw_series(LineSeries::new(
                    its.iter().map(|r| (r.iter as f64, get(r))).filter(|p| p.1 > 0.0),
                    col,
                ))
                .map_err(plot_err)?
                .label(name)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 15, y)], col));
        }
        for (k, (name, test)) in [("test recon", true), ("test jerk", false)].into_iter().enumerate() {
            let col = color(3 + k);
            let pts: Vec<(f64, f64)> = history
                .epochs
                .iter()
                .map(|e| (e.iter as f64, if test { e.test_recon } else { e.test_jerk }))
                .filter(|p| p.1 > 0.0)
                .collect();
            chart
                .draw_series(LineSeries::new(pts.clone(), col.stroke_width(2)))
                .map_err(plot_err)?
                .label(name)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 15, y)], col.stroke_width(2)));
            chart
                .draw_series(pts.into_iter().map(|p| Circle::new(p, 4, col.filled())))
                .map_err(plot_err)?;
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.85))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    let csv_path = out.join("losses.csv");
    let mut csv = String::from("iter,epoch,lr,total,recon,jerk\n");
    for r in its {
        writeln!(csv, "{},{},{},{},{},{}", r.iter, r.epoch, r.lr, r.total, r.recon, r.jerk).unwrap();
    }
    write_text(&csv_path, &csv)?;
    let test_path = out.join("test_losses.csv");
    let mut csv = String::from("epoch,iter,test_recon,test_jerk\n");
    for e in &history.epochs {
        writeln!(csv, "{},{},{},{}", e.epoch, e.iter, e.test_recon, e.test_jerk).unwrap();
    }
    write_text(&test_path, &csv)?;
    Ok(vec![svg, csv_path, test_path])
}

/// Index of the smallest finite test reconstruction error.
pub fn sweep_minimum(rows: &[SweepRow]) -> Option<usize> {
    rows.iter()
        .enumerate()
        .filter(|(_, r)| r.test_recon_mse.is_finite())
        .min_by(|a, b| a.1.test_recon_mse.total_cmp(&b.1.test_recon_mse))
        .map(|(i, _)| i)
}

/// Test reconstruction error and jerk per jerk coefficient, minimum marked.
pub fn sweep_chart(rows: &[SweepRow], out: &Path) -> Result<Vec<PathBuf>> {
    let svg = out.join("sweep.svg");
    let best = sweep_minimum(rows);
    {
        let root = SVGBackend::new(&svg, (800, 640)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let panels = root.split_evenly((2, 1));
        let n = rows.len().max(1) as f64;
        let labels: Vec<String> = rows.iter().map(|r| format!("{}", r.lambda)).collect();
        let metrics: [(&str, fn(&SweepRow) -> f64); 2] = [
            ("test reconstruction MSE", |r| r.test_recon_mse),
            ("test jerk", |r| r.test_jerk),
        ];
        for (panel, (name, get)) in panels.iter().zip(metrics) {
            let (_, y1) = range_of(rows.iter().map(get).chain([0.0]));
            let mut chart = ChartBuilder::on(panel)
                .caption(format!("{name} vs jerk coefficient"), ("sans-serif", 18))
                .margin(10)
                .x_label_area_size(35)
                .y_label_area_size(70)
                .build_cartesian_2d(-0.5..n - 0.5, 0.0..y1 * 1.15)
                .map_err(plot_err)?;
            chart
                .configure_mesh()
                .disable_x_mesh()
                .x_labels(rows.len().max(2))
                .x_label_formatter(&|x| {
                    let i = x.round();
                    if (x - i).abs() < 1e-6 && i >= 0.0 {
                        labels.get(i as usize).cloned().unwrap_or_default()
                    } else {
                        String::new()
                    }
                })
                .x_desc("lambda")
                .y_desc(name)
                .draw()
                .map_err(plot_err)?;
            chart
                .draw_series(rows.iter().enumerate().filter(|(_, r)| get(r).is_finite()).map(|(i, r)| {
                    let col = if Some(i) == best { RED } else { color(0) };
                    Rectangle::new([(i as f64 - 0.35, 0.0), (i as f64 + 0.35, get(r))], col.filled())
                }))
                .map_err(plot_err)?;
            if let (Some(b), true) = (best, name.contains("MSE")) {
                let y = get(&rows[b]);
                chart
                    .draw_series([
                        EmptyElement::at((b as f64, y))
                            + TriangleMarker::new((0, -8), 7, BLACK.filled())
                            + Text::new("minimum", (-24, -26), ("sans-serif", 14)),
                    ])
                    .map_err(plot_err)?;
            }
        }
        root.present().map_err(plot_err)?;
    }
    let csv_path = out.join("sweep.csv");
    let mut csv = String::from("lambda,test_recon_mse,test_jerk,minimum,error\n");
    for (i, r) in rows.iter().enumerate() {
        writeln!(
            csv,
            "{},{},{},{},{}",
            r.lambda,
            r.test_recon_mse,
            r.test_jerk,
            Some(i) == best,
            r.error.as_deref().unwrap_or("").replace(',', ";")
        )
        .unwrap();
    }
    write_text(&csv_path, &csv)?;
    Ok(vec![svg, csv_path])
}

/// Renders every figure whose input exists under `run_dir` into
/// `run_dir/plots`. Missing inputs are an error listing all absent files,
/// unless `allow_partial` is set and at least one input exists.
pub fn export_plots(run_dir: &Path, allow_partial: bool) -> Result<(Vec<PathBuf>, Vec<PathBuf>)> {
    let inputs = expected_inputs();
    let missing: Vec<PathBuf> = inputs
        .iter()
        .map(|p| run_dir.join(p))
        .filter(|p| !p.exists())
        .collect();
    if !missing.is_empty() && (!allow_partial || missing.len() == inputs.len()) {
        return Err(Error::MissingInputs(
            missing.iter().map(|p| p.display().to_string()).collect(),
        ));
    }
    let out = run_dir.join(PLOTS_DIR);
    ensure_dir(&out)?;
    let mut written = Vec::new();
    let present = |rel: &PathBuf| run_dir.join(rel).exists();
    if present(&inputs[0]) {
        written.extend(rmse_curve(&read_json(&run_dir.join(EVAL_REPORT))?, &out)?);
    }
    if present(&inputs[1]) {
        written.extend(latent_series(&run_dir.join(LATENTS_DIR), &out)?);
    }
    if present(&inputs[2]) {
        written.extend(loss_curves(&read_json(&run_dir.join(STAGE1_HISTORY))?, &out)?);
    }
    if present(&inputs[3]) {
        let rows: Vec<SweepRow> = read_json(&run_dir.join(SWEEP_TABLE))?;
        written.extend(sweep_chart(&rows, &out)?);
    }
    Ok((written, missing))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_run_dir_lists_all_inputs() {
        let dir = tempfile::tempdir().unwrap();
        match export_plots(dir.path(), true) {
            Err(Error::MissingInputs(list)) => {
                assert_eq!(list.len(), 4);
                for name in ["eval_report.json", "manifest.toml", "stage1_history.json", "sweep.json"] {
                    assert!(list.iter().any(|p| p.ends_with(name)), "{list:?}");
                }
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sweep_chart_marks_minimum() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<SweepRow> = [(0.0, 3.0), (0.1, 1.0), (0.5, 2.0)]
            .iter()
            .map(|&(lambda, m)| SweepRow {
                lambda,
                test_recon_mse: m,
                test_jerk: 1.0 / (1.0 + lambda),
                error: None,
            })
            .collect();
        assert_eq!(sweep_minimum(&rows), Some(1));
        sweep_chart(&rows, dir.path()).unwrap();
        let svg = std::fs::read_to_string(dir.path().join("sweep.svg")).unwrap();
        assert!(svg.contains("minimum"));
        let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert!(csv.lines().nth(2).unwrap().contains("true"));
    }

    #[test]
    fn rmse_plot_shades_both_windows() {
        let dir = tempfile::tempdir().unwrap();
        let report = EvalReport {
            times: (0..6).map(|i| i as f64).collect(),
            rel_rmse_curve: vec![0.0, 0.1, 0.15, 0.2, 0.3, 0.45],
            train_len: 4,
            interp: Default::default(),
            extrap: Default::default(),
            recon_mse: 0.0,
            avg_jerk: vec![],
            mean_avg_jerk: 0.0,
            active_threshold: 1e-4,
            active_coords: 0,
            latent_variances: vec![],
        };
        rmse_curve(&report, dir.path()).unwrap();
        let svg = std::fs::read_to_string(dir.path().join("rmse_curve.svg")).unwrap();
        assert!(svg.contains("training window") && svg.contains("extrapolation window"));
        let csv = std::fs::read_to_string(dir.path().join("rmse_curve.csv")).unwrap();
        assert_eq!(csv.lines().filter(|l| l.ends_with("extrapolation")).count(), 2);
    }
}
