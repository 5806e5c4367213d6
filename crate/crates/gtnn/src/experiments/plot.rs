//! Line plots of CSV columns as SVG.

use std::collections::BTreeMap;
use std::path::PathBuf;

use plotters::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct PlotConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub x: String,
    pub y: Vec<String>,
    /// One line per distinct value of this column (per `y` column).
    pub group: Option<String>,
    /// `column=value` row filters, all of which must hold.
    pub filters: Vec<String>,
    pub title: Option<String>,
    pub log_y: bool,
}

type Series = BTreeMap<String, Vec<(f64, f64)>>;

fn read_series(cfg: &PlotConfig) -> Result<Series> {
    let mut r = csv::Reader::from_path(&cfg.input)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("{} has no column {name}", cfg.input.display())))
    };
    let xi = col(&cfg.x)?;
    let yis = cfg.y.iter().map(|y| col(y)).collect::<Result<Vec<_>>>()?;
    let gi = cfg.group.as_deref().map(col).transpose()?;
    let filters = cfg
        .filters
        .iter()
        .map(|f| {
            let (c, v) = f.split_once('=').ok_or_else(|| Error::Config(format!("filter {f} is not column=value")))?;
            Ok((col(c)?, v.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut series = Series::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if filters.iter().any(|(c, v)| &rec[*c] != v) {
            continue;
        }
        let parse = |i: usize| -> Result<Option<f64>> {
            let s = &rec[i];
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| Error::Parse {
                path: cfg.input.display().to_string(),
                line: line + 2,
                message: format!("{} is not a number", s),
            })
        };
        let Some(x) = parse(xi)? else { continue };
        for (yn, &yi) in cfg.y.iter().zip(&yis) {
            let Some(y) = parse(yi)? else { continue };
            if cfg.log_y && y <= 0.0 {
                continue;
            }
            let name = match gi {
                Some(g) if cfg.y.len() > 1 => format!("{yn} {}={}", header[g], &rec[g]),
                Some(g) => format!("{}={}", header[g], &rec[g]),
                None => yn.clone(),
            };
            series.entry(name).or_default().push((x, y));
        }
    }
    if series.values().all(Vec::is_empty) {
        return Err(Error::Data(format!("no plottable rows in {}", cfg.input.display())));
    }
    Ok(series)
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn draw_err<E: std::fmt::Debug>(e: E) -> Error {
    Error::Data(format!("plot rendering failed: {e:?}"))
}

/// Renders the selected columns of a CSV file as an SVG line plot.
pub fn plot_csv(cfg: &PlotConfig) -> Result<()> {
    let series = read_series(cfg)?;
    let (x0, x1) = range(series.values().flatten().map(|p| p.0));
    let (y0, y1) = range(series.values().flatten().map(|p| p.1));
    let root = SVGBackend::new(&cfg.output, (800, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let title = cfg.title.clone().unwrap_or_else(|| cfg.input.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()));
    let mut builder = ChartBuilder::on(&root);
    builder.caption(title, ("sans-serif", 20)).margin(12).x_label_area_size(40).y_label_area_size(60);
    let colors = |i: usize| Palette99::pick(i).to_rgba();
    if cfg.log_y {
        let mut chart = builder.build_cartesian_2d(x0..x1, (y0..y1).log_scale()).map_err(draw_err)?;
        chart.configure_mesh().x_desc(cfg.x.as_str()).draw().map_err(draw_err)?;
        for (i, (name, pts)) in series.iter().enumerate() {
            let c = colors(i);
            chart
                .draw_series(LineSeries::new(pts.iter().copied(), c))
                .map_err(draw_err)?
                .label(name)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], c));
        }
        chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(draw_err)?;
    } else {
        let mut chart = builder.build_cartesian_2d(x0..x1, y0..y1).map_err(draw_err)?;
        chart.configure_mesh().x_desc(cfg.x.as_str()).draw().map_err(draw_err)?;
        for (i, (name, pts)) in series.iter().enumerate() {
            let c = colors(i);
            chart
                .draw_series(LineSeries::new(pts.iter().copied(), c))
                .map_err(draw_err)?
                .label(name)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], c));
        }
        chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(draw_err)?;
    }
    root.present().map_err(draw_err)?;
    Ok(())
}
