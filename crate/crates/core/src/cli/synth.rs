//! Seeded synthetic hourly station data.
//!
//! PM2.5 is a daily cycle plus an annual cycle, a lagged wind-speed effect
//! and AR(1) noise with coefficient 0.9. O3 follows temperature and the
//! daytime cycle; NO2 moves against O3. Spikes and missing runs are
//! injected after the smooth processes are drawn.

use std::f64::consts::TAU;
use std::ops::Range;

use chrono::{NaiveDate, NaiveDateTime};
use indexmap::IndexMap;

use crate::data::{Schema, TimeSeriesFrame};
use crate::error::{Error, Result};
use crate::numcore::SeededRng;

pub const MIN_HOURS: usize = 200;

/// Ten times the default outlier threshold.
pub const SPIKE_HEIGHT: f64 = 50.0;

/// Rows kept clear of gaps on each side of a spike, and of the frame edges.
const SPIKE_MARGIN: usize = 15;

const SPIKED_COLUMNS: [&str; 6] = ["NO2", "SO2", "CO", "O3", "PM10", "PM2.5"];

#[derive(Debug, Clone)]
pub struct SynthData {
    pub frame: TimeSeriesFrame,
    /// `(column, row)` of every injected spike.
    pub spikes: Vec<(String, usize)>,
    /// Missing runs as `(column, rows)`; every column is blanked in a
    /// station outage.
    pub gaps: Vec<(String, Range<usize>)>,
}

pub fn synth_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date").and_hms_opt(0, 0, 0).expect("valid time")
}

struct Ar1 {
    rng: SeededRng,
    phi: f64,
    sigma: f64,
    state: f64,
}

impl Ar1 {
    fn new(rng: SeededRng, phi: f64, sigma: f64) -> Self {
        Self { rng, phi, sigma, state: 0.0 }
    }

    fn step(&mut self) -> f64 {
        self.state = self.phi * self.state + self.sigma * self.rng.next_normal();
        self.state
    }
}

fn daily(hour: usize, peak_hour: f64) -> f64 {
    (TAU * (hour as f64 - peak_hour + 6.0) / 24.0).sin()
}

pub fn synth_data(seed: u64, hours: usize) -> Result<SynthData> {
    if hours < MIN_HOURS {
        return Err(Error::invalid(format!("synthetic data needs at least {MIN_HOURS} hours, got {hours}")));
    }
    let root = SeededRng::new(seed);
    let noise = |id: u64, phi: f64, sigma: f64| Ar1::new(root.fork(id), phi, sigma);
    let (mut temp_n, mut wind_n, mut dir_n) = (noise(1, 0.97, 0.4), noise(2, 0.95, 0.25), noise(3, 0.98, 1.0));
    let (mut o3_n, mut no2_n, mut so2_n) = (noise(4, 0.95, 0.8), noise(5, 0.95, 0.8), noise(6, 0.95, 0.3));
    let (mut co_n, mut pm_n, mut pm10_n) = (noise(7, 0.95, 0.03), noise(8, 0.9, 0.9), noise(9, 0.95, 0.5));

    let names = Schema::air_quality().columns;
    let mut cols: IndexMap<String, Vec<f64>> = names.iter().map(|c| (c.clone(), Vec::with_capacity(hours))).collect();
    let mut prev_wind = 3.0;
    for t in 0..hours {
        let hod = t % 24;
        let annual = (TAU * t as f64 / 8760.0).cos();
        let temperature = 11.0 - 9.0 * annual + 4.0 * daily(hod, 15.0) + temp_n.step();
        let wind_speed = (3.0 + wind_n.step()).max(0.2);
        let wind_direction = (180.0 + 60.0 * (TAU * t as f64 / 500.0).sin() + dir_n.step()).clamp(0.0, 359.9);
        let o3 = 40.0 + 4.0 * daily(hod, 15.0) + 0.3 * (temperature - 11.0) + o3_n.step();
        let no2 = 32.0 - 0.6 * (o3 - 40.0) + no2_n.step();
        let so2 = 6.0 + 0.1 * (no2 - 32.0) + so2_n.step();
        let co = 0.6 + 0.01 * (no2 - 32.0) + co_n.step();
        let pm25 = 22.0 + 6.0 * daily(hod, 2.0) + 2.0 * annual - 2.5 * (prev_wind - 3.0) + pm_n.step();
        let pm10 = pm25 + 8.0 + pm10_n.step();
        prev_wind = wind_speed;
        for (name, v) in [
            ("NO2", no2),
            ("SO2", so2),
            ("CO", co),
            ("O3", o3),
            ("wind_direction", wind_direction),
            ("temperature", temperature),
            ("wind_speed", wind_speed),
            ("PM10", pm10),
            ("PM2.5", pm25),
        ] {
            cols[name].push(v);
        }
    }

    let mut rng = root.fork(100);
    let mut gaps = Vec::new();
    for _ in 0..(hours / 400).max(1) {
        let len = 2 + rng.below(11);
        let start = 20 + rng.below(hours - 40 - len);
        let rows = start..start + len;
        if rng.next_f64() < 0.5 {
            gaps.extend(names.iter().map(|c| (c.clone(), rows.clone())));
        } else {
            gaps.push((names[rng.below(names.len())].clone(), rows));
        }
    }

    let mut spikes: Vec<(String, usize)> = Vec::new();
    for column in SPIKED_COLUMNS {
        let wanted = (hours / 500).max(1);
        let mut placed = Vec::new();
        for _ in 0..wanted * 20 {
            if placed.len() == wanted {
                break;
            }
            let row = SPIKE_MARGIN + rng.below(hours - 2 * SPIKE_MARGIN);
            let clear_of_gaps = gaps
                .iter()
                .filter(|(c, _)| c == column)
                .all(|(_, r)| row + SPIKE_MARGIN < r.start || row >= r.end + SPIKE_MARGIN);
            let clear_of_spikes = placed.iter().all(|&p: &usize| p.abs_diff(row) > 2 * SPIKE_MARGIN);
            if clear_of_gaps && clear_of_spikes {
                placed.push(row);
            }
        }
        placed.sort_unstable();
        spikes.extend(placed.into_iter().map(|r| (column.to_string(), r)));
    }

    let mut observed: IndexMap<String, Vec<Option<f64>>> =
        cols.into_iter().map(|(k, v)| (k, v.into_iter().map(Some).collect())).collect();
    for (column, row) in &spikes {
        let cell = &mut observed[column.as_str()][*row];
        *cell = cell.map(|v| v + SPIKE_HEIGHT);
    }
    for (column, rows) in &gaps {
        for cell in &mut observed[column.as_str()][rows.clone()] {
            *cell = None;
        }
    }
    let start = synth_start();
    let timestamps = (0..hours).map(|i| start + chrono::Duration::hours(i as i64)).collect();
    Ok(SynthData {
        frame: TimeSeriesFrame::new(timestamps, observed)?,
        spikes,
        gaps,
    })
}
