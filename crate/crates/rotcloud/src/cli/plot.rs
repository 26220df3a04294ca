//! Deterministic SVG line plots for the three curve kinds the pipeline
//! emits: PCK curves, label-efficiency sweeps, and accuracy-vs-K tables.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    Pck,
    Sweep,
    Table1,
}

impl PlotKind {
    pub fn parse(s: &str) -> Result<PlotKind> {
        match s {
            "pck" => Ok(PlotKind::Pck),
            "sweep" => Ok(PlotKind::Sweep),
            "table1" => Ok(PlotKind::Table1),
            other => Err(Error::InvalidInput(format!(
                "unknown plot kind {other:?} (expected pck, sweep or table1)"
            ))),
        }
    }

    fn columns(&self) -> (&'static str, &'static str) {
        match self {
            PlotKind::Pck => ("threshold", "value"),
            PlotKind::Sweep => ("fraction", "accuracy"),
            PlotKind::Table1 => ("k", "accuracy"),
        }
    }

    fn title(&self) -> &'static str {
        match self {
            PlotKind::Pck => "PCK",
            PlotKind::Sweep => "Label efficiency",
            PlotKind::Table1 => "Rotation accuracy vs K",
        }
    }
}

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

fn read_series(path: &Path, kind: PlotKind) -> Result<Series> {
    let (x_col, y_col) = kind.columns();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 0, "empty curve file"))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let xi = names.iter().position(|n| *n == x_col).ok_or_else(|| {
        Error::parse(path, 1, format!("missing column {x_col:?} for this plot kind"))
    })?;
    let yi = names.iter().position(|n| *n == y_col).ok_or_else(|| {
        Error::parse(path, 1, format!("missing column {y_col:?} for this plot kind"))
    })?;

    let mut points = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() <= xi.max(yi) {
            return Err(Error::parse(path, idx + 1, "short row"));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(path, idx + 1, format!("non-numeric value {s:?}")))
        };
        points.push((parse(fields[xi])?, parse(fields[yi])?));
    }
    if points.is_empty() {
        return Err(Error::parse(path, 0, "curve file has no data rows"));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(Series { name, points })
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

/// Render one SVG with a line per input CSV; legend entries are file stems.
pub fn render_plot(inputs: &[PathBuf], kind: PlotKind) -> Result<String> {
    if inputs.is_empty() {
        return Err(Error::InvalidInput("plot needs at least one input CSV".into()));
    }
    let series: Result<Vec<Series>> = inputs.iter().map(|p| read_series(p, kind)).collect();
    let series = series?;

    let xs: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .collect();
    let x_min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let x_max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let x_span = if (x_max - x_min).abs() < 1e-12 {
        1.0
    } else {
        x_max - x_min
    };
    // Curves of accuracies and fractions live in [0, 1].
    let (y_min, y_max) = (0.0, 1.0);

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_min) / x_span * plot_w;
    let sy = |y: f64| MARGIN_TOP + (y_max - y) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        kind.title()
    ));

    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(MARGIN_LEFT),
        fmt(MARGIN_TOP + plot_h),
        fmt(MARGIN_LEFT + plot_w),
        fmt(MARGIN_TOP + plot_h)
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(MARGIN_LEFT),
        fmt(MARGIN_TOP),
        fmt(MARGIN_LEFT),
        fmt(MARGIN_TOP + plot_h)
    ));

    // Ticks: five per axis.
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let x = x_min + t * x_span;
        let y = y_min + t * (y_max - y_min);
        svg.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n",
            fmt(sx(x)),
            fmt(MARGIN_TOP + plot_h),
            fmt(MARGIN_TOP + plot_h + 5.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            fmt(sx(x)),
            fmt(MARGIN_TOP + plot_h + 18.0),
            fmt(x)
        ));
        svg.push_str(&format!(
            "<line x1=\"{1}\" y1=\"{0}\" x2=\"{2}\" y2=\"{0}\" stroke=\"black\"/>\n",
            fmt(sy(y)),
            fmt(MARGIN_LEFT - 5.0),
            fmt(MARGIN_LEFT)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            fmt(MARGIN_LEFT - 8.0),
            fmt(sy(y) + 4.0),
            fmt(y)
        ));
    }

    // Axis labels.
    let (x_col, y_col) = kind.columns();
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
        fmt(MARGIN_LEFT + plot_w / 2.0),
        fmt(HEIGHT - 12.0),
        x_col
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        fmt(MARGIN_TOP + plot_h / 2.0),
        fmt(MARGIN_TOP + plot_h / 2.0),
        y_col
    ));

    // Series polylines and legend.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts = s.points.clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let coords: Vec<String> = pts
            .iter()
            .map(|(x, y)| format!("{},{}", fmt(sx(*x)), fmt(sy(y.clamp(y_min, y_max)))))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            coords.join(" ")
        ));
        let ly = MARGIN_TOP + 14.0 + 16.0 * i as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            fmt(MARGIN_LEFT + plot_w - 150.0),
            fmt(ly - 4.0),
            fmt(MARGIN_LEFT + plot_w - 130.0),
            fmt(ly - 4.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            fmt(MARGIN_LEFT + plot_w - 124.0),
            fmt(ly),
            s.name
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str, content: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("rotcloud-plot-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        std::fs::write(&path, content).unwrap();
        path
    }

    #[test]
    fn single_pck_csv_yields_one_polyline() {
        let path = tmp("one.csv", "threshold,value\n0,0\n0.1,0.5\n0.2,1\n");
        let svg = render_plot(&[path], PlotKind::Pck).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("</svg>"));
    }

    #[test]
    fn two_sweeps_get_two_series_with_stem_legends() {
        let a = tmp("pretrained.csv", "fraction,accuracy\n0.1,0.6\n1,0.9\n");
        let b = tmp("random.csv", "fraction,accuracy\n0.1,0.4\n1,0.7\n");
        let svg = render_plot(&[a, b], PlotKind::Sweep).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">pretrained<"));
        assert!(svg.contains(">random<"));
    }

    #[test]
    fn identical_invocations_are_byte_identical() {
        let path = tmp("det.csv", "k,accuracy\n6,0.99\n18,0.9\n100,0.1\n");
        let a = render_plot(&[path.clone()], PlotKind::Table1).unwrap();
        let b = render_plot(&[path], PlotKind::Table1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn schema_mismatch_names_missing_column() {
        let path = tmp("bad.csv", "fraction,accuracy\n0.1,0.6\n");
        let err = render_plot(&[path], PlotKind::Pck).unwrap_err().to_string();
        assert!(err.contains("threshold"), "{err}");
    }
}
