use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use super::descriptive::{describe, histogram, pearson, Histogram, Summary};
use super::stationarity::{stationarity, StationarityVerdict};
use crate::data::TimeSeriesFrame;
use crate::error::{Error, Result};

pub const DEFAULT_HISTOGRAM_BINS: usize = 30;

#[derive(Debug, Clone)]
pub struct Analysis {
    pub summaries: IndexMap<String, Summary>,
    /// Square matrix in column order; `None` where a column is constant.
    pub correlation: Vec<Vec<Option<f64>>>,
    pub stationarity: Vec<StationarityVerdict>,
    pub histograms: IndexMap<String, Histogram>,
}

/// Per-column stationarity over a fully observed frame.
pub fn stationarity_report(frame: &TimeSeriesFrame) -> Result<Vec<StationarityVerdict>> {
    frame
        .column_names()
        .map(|c| stationarity(c, &frame.dense_column(c)?))
        .collect()
}

pub fn analyze(frame: &TimeSeriesFrame, bins: usize) -> Result<Analysis> {
    let cols: IndexMap<String, Vec<f64>> = frame
        .column_names()
        .map(|c| Ok((c.to_string(), frame.dense_column(c)?)))
        .collect::<Result<_>>()?;
    let summaries = cols.iter().map(|(k, v)| Ok((k.clone(), describe(v)?))).collect::<Result<_>>()?;
    let values: Vec<&Vec<f64>> = cols.values().collect();
    let correlation = values
        .iter()
        .map(|a| values.iter().map(|b| pearson(a, b).ok()).collect())
        .collect();
    let stationarity = stationarity_report(frame)?;
    let histograms = cols.iter().map(|(k, v)| Ok((k.clone(), histogram(v, bins)?))).collect::<Result<_>>()?;
    Ok(Analysis {
        summaries,
        correlation,
        stationarity,
        histograms,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect()
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

/// Writes `stats.csv`, `correlation.csv`, `stationarity.csv` and one
/// `histogram_<column>.csv` per column. Returns the files written.
pub fn write_analysis(analysis: &Analysis, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let p = dir.join("stats.csv");
    let mut w = writer(&p)?;
    w.write_record(["column", "min", "max", "mean", "std"])?;
    for (c, s) in &analysis.summaries {
        w.write_record([c.clone(), format!("{:.6}", s.min), format!("{:.6}", s.max), format!("{:.6}", s.mean), format!("{:.6}", s.std)])?;
    }
    w.flush().map_err(|e| Error::io(&p, e))?;
    written.push(p);

    let p = dir.join("correlation.csv");
    let mut w = writer(&p)?;
    let names: Vec<String> = analysis.summaries.keys().cloned().collect();
    let mut header = vec!["column".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in names.iter().zip(&analysis.correlation) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| fmt_opt(*v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&p, e))?;
    written.push(p);

    let p = dir.join("stationarity.csv");
    let mut w = writer(&p)?;
    w.write_record(["column", "adf_stat", "kpss_stat", "verdict"])?;
    for v in &analysis.stationarity {
        w.write_record([
            v.column.clone(),
            format!("{:.6}", v.adf.statistic),
            format!("{:.6}", v.kpss.statistic),
            v.verdict.as_str().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&p, e))?;
    written.push(p);

    for (c, h) in &analysis.histograms {
        let p = dir.join(format!("histogram_{}.csv", sanitize(c)));
        let mut w = writer(&p)?;
        w.write_record(["bin_lo", "bin_hi", "count"])?;
        for (i, n) in h.counts.iter().enumerate() {
            w.write_record([format!("{:.6}", h.edges[i]), format!("{:.6}", h.edges[i + 1]), n.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(&p, e))?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::SeededRng;
    use chrono::NaiveDate;

    #[test]
    fn writes_all_outputs() {
        let mut r = SeededRng::new(5);
        let a: Vec<f64> = (0..200).map(|_| r.next_normal()).collect();
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v + 1.0).collect();
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let f = TimeSeriesFrame::from_dense(start, vec![("a", a), ("b", b), ("c", vec![1.0; 200])]).unwrap();
        // A constant column makes KPSS undefined.
        assert!(analyze(&f, 10).is_err());
        let f = f.select(&["a", "b"]).unwrap();
        let an = analyze(&f, 10).unwrap();
        assert!((an.correlation[0][1].unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(an.stationarity[0].verdict.as_str(), "fully-stationary");
        let dir = tempfile::tempdir().unwrap();
        let files = write_analysis(&an, dir.path()).unwrap();
        assert_eq!(files.len(), 5);
        let st = std::fs::read_to_string(dir.path().join("stationarity.csv")).unwrap();
        assert!(st.starts_with("column,adf_stat,kpss_stat,verdict\na,"));
    }
}
