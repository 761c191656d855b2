use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use log::warn;

use super::{FuelTable, IgnitionSpec, RosParams};
use crate::grids::{ArrivalGrid, Scene, WeatherSeries, UNBURNED};
use crate::preprocess::{elevation_to_gradients, ModelUnits};
use crate::{Error, Result};

const SQRT_5: f64 = 2.236_067_977_499_79;

/// One stencil move: row/column offset, length in pixels, and the cells the
/// segment passes through between its endpoints.
#[derive(Debug, Clone, Copy)]
pub struct Move {
    pub dr: i32,
    pub dc: i32,
    pub len: f64,
    /// Unit direction `(x, y)` = `(dc, dr) / len`.
    pub unit: [f64; 2],
    via: [(i32, i32); 2],
    n_via: usize,
}

const fn mv(dr: i32, dc: i32) -> Move {
    let (len, via, n_via) = match (dr.abs(), dc.abs()) {
        (0, 1) | (1, 0) => (1.0, [(0, 0); 2], 0),
        (1, 1) => (SQRT_2, [(dr, 0), (0, dc)], 2),
        (1, 2) => (SQRT_5, [(0, dc / 2), (dr, dc / 2)], 2),
        (2, 1) => (SQRT_5, [(dr / 2, 0), (dr / 2, dc)], 2),
        _ => panic!("not a stencil move"),
    };
    Move {
        dr,
        dc,
        len,
        unit: [dc as f64 / len, dr as f64 / len],
        via,
        n_via,
    }
}

/// Axis, diagonal and knight moves.
pub const STENCIL: [Move; 16] = [
    mv(0, 1),
    mv(1, 0),
    mv(0, -1),
    mv(-1, 0),
    mv(1, 1),
    mv(1, -1),
    mv(-1, 1),
    mv(-1, -1),
    mv(1, 2),
    mv(2, 1),
    mv(-1, 2),
    mv(-2, 1),
    mv(1, -2),
    mv(2, -1),
    mv(-1, -2),
    mv(-2, -1),
];

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    time: f64,
    cell: u32,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on time, ties broken by cell index
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Precomputed simulation inputs for one scene and weather series.
///
/// Time is measured in intervals; weather record `i` applies on `[i, i + 1)`.
/// Crossing edge `q → p` takes `len/2 · (1/R(q) + 1/R(p))`, with both rates
/// evaluated in the move direction under the weather at departure. Moves that
/// end on or pass through a nonburnable cell are blocked, so any 4-connected
/// nonburnable barrier is impassable.
#[derive(Debug, Clone)]
pub struct Simulator {
    rows: usize,
    cols: usize,
    base: Vec<f64>,
    gradient: Vec<[f64; 2]>,
    k_slope: f64,
    /// Per interval and move: `exp(k_wind · w·u) · temperature factor`.
    weather_factor: Vec<[f64; 16]>,
    interval_minutes: f32,
}

impl Simulator {
    pub fn new(
        scene: &Scene,
        weather: &WeatherSeries,
        params: &RosParams,
        table: &FuelTable,
    ) -> Result<Self> {
        params.validate()?;
        scene.landclass().validate(table.num_classes())?;
        let units = ModelUnits::new(scene.cell_size_m(), weather.interval_minutes())?;
        let base = scene
            .landclass()
            .classes()
            .iter()
            .map(|&c| table.base(c).map(f64::from))
            .collect::<Result<Vec<_>>>()?;
        let (gx, gy) = elevation_to_gradients(scene.elevation())?;
        let gradient = gx
            .values()
            .iter()
            .zip(gy.values())
            .map(|(&x, &y)| [x as f64, y as f64])
            .collect();
        let weather_factor = weather
            .records()
            .iter()
            .map(|rec| {
                let step = units.weather_step(rec);
                let w = [step.wind_x as f64, step.wind_y as f64];
                let tf = params.temperature_factor(rec.temperature_c as f64);
                let mut f = [0.0; 16];
                for (slot, m) in f.iter_mut().zip(STENCIL.iter()) {
                    *slot = (params.k_wind * (w[0] * m.unit[0] + w[1] * m.unit[1])).exp() * tf;
                }
                f
            })
            .collect();
        Ok(Simulator {
            rows: scene.rows(),
            cols: scene.cols(),
            base,
            gradient,
            k_slope: params.k_slope,
            weather_factor,
            interval_minutes: weather.interval_minutes(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of weather intervals; nothing burns after this time.
    pub fn horizon(&self) -> f64 {
        self.weather_factor.len() as f64
    }

    pub fn is_burnable(&self, row: usize, col: usize) -> bool {
        self.base[row * self.cols + col] > 0.0
    }

    #[inline]
    fn rate(&self, cell: usize, m: usize, factor: &[f64; 16]) -> f64 {
        let g = self.gradient[cell];
        let u = STENCIL[m].unit;
        self.base[cell] * factor[m] * (self.k_slope * (g[0] * u[0] + g[1] * u[1])).exp()
    }

    #[inline]
    fn offset(&self, row: usize, col: usize, dr: i32, dc: i32) -> Option<usize> {
        let r = row as i64 + dr as i64;
        let c = col as i64 + dc as i64;
        if r < 0 || c < 0 || r >= self.rows as i64 || c >= self.cols as i64 {
            None
        } else {
            Some(r as usize * self.cols + c as usize)
        }
    }

    /// Target cell of move `m` from `(row, col)` if the move is open.
    fn target(&self, row: usize, col: usize, m: usize) -> Option<usize> {
        let mv = &STENCIL[m];
        let p = self.offset(row, col, mv.dr, mv.dc)?;
        if self.base[p] <= 0.0 {
            return None;
        }
        for &(vr, vc) in &mv.via[..mv.n_via] {
            let v = self.offset(row, col, vr, vc)?;
            if self.base[v] <= 0.0 {
                return None;
            }
        }
        Some(p)
    }

    /// Travel time of move `m` departing `(row, col)` at `t_depart` (intervals),
    /// or `None` if the move is blocked or departs after the horizon.
    pub fn edge_time(&self, row: usize, col: usize, m: usize, t_depart: f64) -> Option<f64> {
        if !(t_depart >= 0.0) || t_depart >= self.horizon() {
            return None;
        }
        let q = row * self.cols + col;
        if self.base[q] <= 0.0 {
            return None;
        }
        let p = self.target(row, col, m)?;
        let factor = &self.weather_factor[t_depart as usize];
        let rq = self.rate(q, m, factor);
        let rp = self.rate(p, m, factor);
        Some(0.5 * STENCIL[m].len * (1.0 / rq + 1.0 / rp))
    }

    /// Arrival time in intervals per pixel; `f64::INFINITY` when the fire
    /// does not arrive within the horizon.
    pub fn run(&self, ignition: &IgnitionSpec) -> Result<Vec<f64>> {
        ignition.check_bounds(self.rows, self.cols)?;
        let horizon = self.horizon();
        let mut arrival = vec![f64::INFINITY; self.rows * self.cols];
        let mut heap = BinaryHeap::new();
        for p in ignition.points() {
            let cell = p.row * self.cols + p.col;
            if self.base[cell] <= 0.0 {
                warn!("ignition at ({}, {}) is nonburnable; skipped", p.row, p.col);
                continue;
            }
            if p.time > horizon {
                warn!("ignition at ({}, {}) starts after the horizon; skipped", p.row, p.col);
                continue;
            }
            if p.time < arrival[cell] {
                arrival[cell] = p.time;
                heap.push(Entry {
                    time: p.time,
                    cell: cell as u32,
                });
            }
        }
        if heap.is_empty() {
            return Err(Error::NoIgnition);
        }

        while let Some(Entry { time, cell }) = heap.pop() {
            let q = cell as usize;
            if time > arrival[q] || time >= horizon {
                continue;
            }
            let (row, col) = (q / self.cols, q % self.cols);
            let factor = &self.weather_factor[time as usize];
            for m in 0..STENCIL.len() {
                let Some(p) = self.target(row, col, m) else {
                    continue;
                };
                if arrival[p] <= time {
                    continue;
                }
                let dt = 0.5 * STENCIL[m].len * (1.0 / self.rate(q, m, factor) + 1.0 / self.rate(p, m, factor));
                let t = time + dt;
                if t <= horizon && t < arrival[p] {
                    arrival[p] = t;
                    heap.push(Entry { time: t, cell: p as u32 });
                }
            }
        }
        Ok(arrival)
    }

    /// Converts [`Simulator::run`] output to an arrival grid in minutes.
    pub fn to_arrival_grid(&self, intervals: &[f64]) -> Result<ArrivalGrid> {
        let minutes = intervals
            .iter()
            .map(|&t| {
                if t.is_finite() {
                    (t * self.interval_minutes as f64) as f32
                } else {
                    UNBURNED
                }
            })
            .collect();
        ArrivalGrid::new(self.rows, self.cols, minutes)
    }
}

/// Simulates fire arrival times (minutes) over the weather horizon.
pub fn simulate_arrival(
    scene: &Scene,
    weather: &WeatherSeries,
    ignition: &IgnitionSpec,
    params: &RosParams,
    table: &FuelTable,
) -> Result<ArrivalGrid> {
    let sim = Simulator::new(scene, weather, params, table)?;
    let t = sim.run(ignition)?;
    sim.to_arrival_grid(&t)
}
