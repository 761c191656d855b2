//! Turns scenes, weather and simulated arrival grids into model-ready samples.
//!
//! Distances are expressed in pixels and times in weather intervals. Fire
//! state is carried in a normalized *fire channel*: `0` for pixels burned at the
//! start of a window, `(t - t_start) / n` for pixels that ignite inside an
//! `n`-interval window, and [`UNBURNED_CODE`] for everything else.

use rand::Rng;

use crate::grids::{ArrivalGrid, Grid2D, LandClassGrid, Scene, WeatherRecord, WeatherSeries};
use crate::{Error, Result};

/// Fire-channel value of pixels not burned by the end of the window.
pub const UNBURNED_CODE: f32 = 1.5;

/// Midpoint between the latest normalized arrival (1.0) and [`UNBURNED_CODE`].
pub const BURN_THRESHOLD: f32 = 1.25;

/// Fixed network scaling of temperature (°C).
pub const TEMPERATURE_SCALE: f32 = 40.0;
/// Fixed network scaling of wind components (pixels per interval).
pub const WIND_SCALE: f32 = 600.0;

/// One spatial plane in model space (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl Channel {
    pub fn new(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != rows * cols || rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} channel",
                values.len()
            )));
        }
        Ok(Channel { rows, cols, values })
    }

    pub fn filled(rows: usize, cols: usize, v: f32) -> Self {
        Channel {
            rows,
            cols,
            values: vec![v; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.cols + col]
    }

    /// Window `[row0, row0 + rows) × [col0, col0 + cols)`; outside cells take `pad`.
    pub fn window(&self, row0: isize, col0: isize, rows: usize, cols: usize, pad: f32) -> Channel {
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows as isize {
            let sr = row0 + r;
            for c in 0..cols as isize {
                let sc = col0 + c;
                let inside = sr >= 0 && sc >= 0 && (sr as usize) < self.rows && (sc as usize) < self.cols;
                values.push(if inside {
                    self.values[sr as usize * self.cols + sc as usize]
                } else {
                    pad
                });
            }
        }
        Channel { rows, cols, values }
    }

    pub fn to_grid(&self, cell_size_m: f32) -> Result<Grid2D> {
        Grid2D::new(
            self.rows,
            self.cols,
            cell_size_m,
            crate::grids::DEFAULT_NODATA,
            self.values.clone(),
        )
    }
}

impl From<Grid2D> for Channel {
    fn from(g: Grid2D) -> Self {
        let (rows, cols) = (g.rows(), g.cols());
        Channel {
            rows,
            cols,
            values: g.into_values(),
        }
    }
}

/// Sobel gradients of an elevation raster, as rise per unit run.
///
/// Edges are handled by replicating the border row/column.
pub fn elevation_to_gradients(elevation: &Grid2D) -> Result<(Grid2D, Grid2D)> {
    let (rows, cols) = (elevation.rows(), elevation.cols());
    if rows < 3 || cols < 3 {
        return Err(Error::Invalid(format!(
            "Sobel needs at least 3x3, got {rows}x{cols}"
        )));
    }
    let z = |r: isize, c: isize| -> f64 {
        let r = r.clamp(0, rows as isize - 1) as usize;
        let c = c.clamp(0, cols as isize - 1) as usize;
        elevation.get(r, c) as f64
    };
    let norm = 8.0 * elevation.cell_size_m() as f64;
    let mut gx = Vec::with_capacity(rows * cols);
    let mut gy = Vec::with_capacity(rows * cols);
    for r in 0..rows as isize {
        for c in 0..cols as isize {
            let east = z(r - 1, c + 1) + 2.0 * z(r, c + 1) + z(r + 1, c + 1);
            let west = z(r - 1, c - 1) + 2.0 * z(r, c - 1) + z(r + 1, c - 1);
            let south = z(r + 1, c - 1) + 2.0 * z(r + 1, c) + z(r + 1, c + 1);
            let north = z(r - 1, c - 1) + 2.0 * z(r - 1, c) + z(r - 1, c + 1);
            gx.push(((east - west) / norm) as f32);
            gy.push(((south - north) / norm) as f32);
        }
    }
    let cell = elevation.cell_size_m();
    let nodata = elevation.nodata();
    Ok((
        Grid2D::new(rows, cols, cell, nodata, gx)?,
        Grid2D::new(rows, cols, cell, nodata, gy)?,
    ))
}

/// Flow vector of a meteorological wind in raster axes (`x` east, `y` south).
/// A northerly (0°) wind moves air toward +y.
pub fn wind_to_components(speed: f32, dir_deg: f32) -> (f32, f32) {
    let (s, d) = (speed as f64, (dir_deg as f64).to_radians());
    ((-s * d.sin()) as f32, (s * d.cos()) as f32)
}

/// Conversion between physical units and pixel/interval model units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelUnits {
    cell_size_m: f32,
    interval_minutes: f32,
}

impl ModelUnits {
    pub fn new(cell_size_m: f32, interval_minutes: f32) -> Result<Self> {
        if !(cell_size_m > 0.0) {
            return Err(Error::Invalid(format!("cell size {cell_size_m} must be > 0")));
        }
        if !(interval_minutes > 0.0) {
            return Err(Error::Invalid(format!(
                "interval {interval_minutes} min must be > 0"
            )));
        }
        Ok(ModelUnits {
            cell_size_m,
            interval_minutes,
        })
    }

    pub fn cell_size_m(&self) -> f32 {
        self.cell_size_m
    }

    pub fn interval_minutes(&self) -> f32 {
        self.interval_minutes
    }

    /// m/s to pixels per interval.
    pub fn speed_to_model(&self, ms: f32) -> f32 {
        (ms as f64 * self.interval_minutes as f64 * 60.0 / self.cell_size_m as f64) as f32
    }

    pub fn minutes_to_intervals(&self, minutes: f32) -> f32 {
        (minutes as f64 / self.interval_minutes as f64) as f32
    }

    pub fn intervals_to_minutes(&self, intervals: f64) -> f64 {
        intervals * self.interval_minutes as f64
    }

    pub fn weather_step(&self, rec: &WeatherRecord) -> WeatherStep {
        let (wx, wy) = wind_to_components(rec.wind_speed_ms, rec.wind_dir_deg);
        WeatherStep {
            temperature_c: rec.temperature_c,
            wind_x: self.speed_to_model(wx),
            wind_y: self.speed_to_model(wy),
        }
    }
}

/// One weather interval in model units: temperature in °C, wind components in
/// pixels per interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherStep {
    pub temperature_c: f32,
    pub wind_x: f32,
    pub wind_y: f32,
}

impl WeatherStep {
    /// Order-1 features fed to the network's multiplicative conditioning.
    pub fn features(&self) -> [f32; 3] {
        [
            self.temperature_c / TEMPERATURE_SCALE,
            self.wind_x / WIND_SCALE,
            self.wind_y / WIND_SCALE,
        ]
    }
}

/// Normalized fire channel of an `n`-interval window starting at `t_start`
/// (both in intervals).
pub fn encode_arrival(
    arrival: &ArrivalGrid,
    units: &ModelUnits,
    t_start: f32,
    n: usize,
) -> Result<Channel> {
    if n == 0 {
        return Err(Error::Invalid("horizon must be at least one interval".into()));
    }
    let (t0, n) = (t_start as f64, n as f64);
    let values = arrival
        .arrival()
        .iter()
        .map(|&a| {
            let t = units.minutes_to_intervals(a) as f64;
            if t <= t0 {
                0.0
            } else if t <= t0 + n {
                ((t - t0) / n) as f32
            } else {
                UNBURNED_CODE
            }
        })
        .collect();
    Channel::new(arrival.rows(), arrival.cols(), values)
}

/// Fire state at `t_start`: burned pixels 0, everything else unburned.
pub fn initial_fire_channel(arrival: &ArrivalGrid, units: &ModelUnits, t_start: f32) -> Channel {
    let values = arrival
        .arrival()
        .iter()
        .map(|&a| {
            if units.minutes_to_intervals(a) <= t_start {
                0.0
            } else {
                UNBURNED_CODE
            }
        })
        .collect();
    Channel {
        rows: arrival.rows(),
        cols: arrival.cols(),
        values,
    }
}

/// Burned pixels with at least one unburned 4-neighbour.
pub fn active_perimeter(fire: &Channel) -> Vec<(usize, usize)> {
    let (rows, cols) = fire.dims();
    let mut out = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if fire.get(r, c) >= UNBURNED_CODE {
                continue;
            }
            let unburned = |rr: usize, cc: usize| fire.get(rr, cc) == UNBURNED_CODE;
            if (r > 0 && unburned(r - 1, c))
                || (r + 1 < rows && unburned(r + 1, c))
                || (c > 0 && unburned(r, c - 1))
                || (c + 1 < cols && unburned(r, c + 1))
            {
                out.push((r, c));
            }
        }
    }
    out
}

/// How the land class enters the terrain channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FuelEncoding {
    /// One channel, `class / (num_classes - 1)`.
    Scaled { num_classes: usize },
    /// One channel per class.
    OneHot { num_classes: usize },
}

impl FuelEncoding {
    pub fn num_classes(&self) -> usize {
        match *self {
            FuelEncoding::Scaled { num_classes } | FuelEncoding::OneHot { num_classes } => num_classes,
        }
    }

    pub fn channel_count(&self) -> usize {
        match *self {
            FuelEncoding::Scaled { .. } => 1,
            FuelEncoding::OneHot { num_classes } => num_classes,
        }
    }

    fn encode(&self, landclass: &LandClassGrid) -> Result<Vec<Channel>> {
        let n = self.num_classes();
        if n < 2 {
            return Err(Error::Invalid(format!("need at least 2 fuel classes, got {n}")));
        }
        landclass.validate(n)?;
        let (rows, cols) = (landclass.rows(), landclass.cols());
        Ok(match *self {
            FuelEncoding::Scaled { .. } => {
                let scale = 1.0 / (n - 1) as f32;
                vec![Channel {
                    rows,
                    cols,
                    values: landclass.classes().iter().map(|&c| c as f32 * scale).collect(),
                }]
            }
            FuelEncoding::OneHot { .. } => (0..n)
                .map(|k| Channel {
                    rows,
                    cols,
                    values: landclass
                        .classes()
                        .iter()
                        .map(|&c| if c as usize == k { 1.0 } else { 0.0 })
                        .collect(),
                })
                .collect(),
        })
    }

    /// Value of fuel channel `index` for a nonburnable pixel.
    fn pad_value(&self, index: usize) -> f32 {
        match self {
            FuelEncoding::OneHot { .. } if index == 0 => 1.0,
            _ => 0.0,
        }
    }
}

impl Default for FuelEncoding {
    fn default() -> Self {
        FuelEncoding::Scaled { num_classes: 4 }
    }
}

/// Model-ready bundle of one fire window.
///
/// Terrain channels are `[grad_x, grad_y, fuel...]`. Weather steps are in
/// pixel/interval units; [`WeatherStep::features`] applies the network scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct FireSample {
    terrain: Vec<Channel>,
    initial_fire: Channel,
    target_fire: Channel,
    weather_seq: Vec<WeatherStep>,
    fuel_encoding: FuelEncoding,
}

impl FireSample {
    pub fn new(
        terrain: Vec<Channel>,
        initial_fire: Channel,
        target_fire: Channel,
        weather_seq: Vec<WeatherStep>,
        fuel_encoding: FuelEncoding,
    ) -> Result<Self> {
        if terrain.len() != 2 + fuel_encoding.channel_count() {
            return Err(Error::Shape(format!(
                "{} terrain channels, expected {}",
                terrain.len(),
                2 + fuel_encoding.channel_count()
            )));
        }
        let dims = initial_fire.dims();
        if terrain.iter().any(|c| c.dims() != dims) || target_fire.dims() != dims {
            return Err(Error::Shape("spatial channels disagree in size".into()));
        }
        Ok(FireSample {
            terrain,
            initial_fire,
            target_fire,
            weather_seq,
            fuel_encoding,
        })
    }

    pub fn rows(&self) -> usize {
        self.initial_fire.rows
    }

    pub fn cols(&self) -> usize {
        self.initial_fire.cols
    }

    pub fn terrain(&self) -> &[Channel] {
        &self.terrain
    }

    pub fn initial_fire(&self) -> &Channel {
        &self.initial_fire
    }

    pub fn target_fire(&self) -> &Channel {
        &self.target_fire
    }

    pub fn weather_seq(&self) -> &[WeatherStep] {
        &self.weather_seq
    }

    pub fn horizon_intervals(&self) -> usize {
        self.weather_seq.len()
    }

    pub fn fuel_encoding(&self) -> FuelEncoding {
        self.fuel_encoding
    }

    pub fn with_weather(&self, weather_seq: Vec<WeatherStep>) -> FireSample {
        FireSample {
            weather_seq,
            ..self.clone()
        }
    }

    pub fn with_target(&self, target_fire: Channel) -> Result<FireSample> {
        if target_fire.dims() != self.initial_fire.dims() {
            return Err(Error::Shape("target size differs from sample".into()));
        }
        Ok(FireSample {
            target_fire,
            ..self.clone()
        })
    }

    /// Model input planes in network order: fire first, then terrain.
    pub fn input_channels(&self) -> impl Iterator<Item = &Channel> {
        std::iter::once(&self.initial_fire).chain(self.terrain.iter())
    }

    fn terrain_pad(&self, index: usize) -> f32 {
        if index < 2 {
            0.0
        } else {
            self.fuel_encoding.pad_value(index - 2)
        }
    }

    /// Window of every spatial channel, padded as nonburnable and unburned.
    pub fn window(&self, row0: isize, col0: isize, rows: usize, cols: usize) -> FireSample {
        FireSample {
            terrain: self
                .terrain
                .iter()
                .enumerate()
                .map(|(i, ch)| ch.window(row0, col0, rows, cols, self.terrain_pad(i)))
                .collect(),
            initial_fire: self.initial_fire.window(row0, col0, rows, cols, UNBURNED_CODE),
            target_fire: self.target_fire.window(row0, col0, rows, cols, UNBURNED_CODE),
            weather_seq: self.weather_seq.clone(),
            fuel_encoding: self.fuel_encoding,
        }
    }
}

/// Builds the sample for window `[t_start, t_start + n)` (intervals) from a
/// simulated arrival grid. Weather records `t_start..t_start + n` drive it.
pub fn build_sample(
    scene: &Scene,
    weather: &WeatherSeries,
    arrival: &ArrivalGrid,
    t_start: usize,
    n: usize,
    fuel_encoding: FuelEncoding,
) -> Result<FireSample> {
    if arrival.rows() != scene.rows() || arrival.cols() != scene.cols() {
        return Err(Error::Shape("arrival grid and scene differ in size".into()));
    }
    let units = ModelUnits::new(scene.cell_size_m(), weather.interval_minutes())?;
    let window = weather.window(t_start, n)?;
    let (gx, gy) = elevation_to_gradients(scene.elevation())?;
    let mut terrain = vec![Channel::from(gx), Channel::from(gy)];
    terrain.extend(fuel_encoding.encode(scene.landclass())?);
    let initial = initial_fire_channel(arrival, &units, t_start as f32);
    let target = encode_arrival(arrival, &units, t_start as f32, n)?;
    let steps = window.records().iter().map(|r| units.weather_step(r)).collect();
    FireSample::new(terrain, initial, target, steps, fuel_encoding)
}

/// Square crop centred on a uniformly chosen active-perimeter pixel of the
/// initial fire, clamped to stay in bounds. Smaller sources are padded.
pub fn crop_sample<R: Rng + ?Sized>(sample: &FireSample, size: usize, rng: &mut R) -> Result<FireSample> {
    if size == 0 {
        return Err(Error::Invalid("crop size must be positive".into()));
    }
    let perimeter = active_perimeter(&sample.initial_fire);
    if perimeter.is_empty() {
        return Err(Error::InactiveSample);
    }
    let (pr, pc) = perimeter[rng.random_range(0..perimeter.len())];
    let origin = |p: usize, extent: usize| -> isize {
        if extent >= size {
            (p as isize - (size / 2) as isize).clamp(0, (extent - size) as isize)
        } else {
            -(((size - extent) / 2) as isize)
        }
    };
    Ok(sample.window(origin(pr, sample.rows()), origin(pc, sample.cols()), size, size))
}

/// One of the 8 symmetries of the square: an optional horizontal flip
/// (`x → -x`) followed by `rot_quarter_turns` quarter turns `(x, y) → (-y, x)`
/// in raster axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct DihedralTransform {
    pub rot_quarter_turns: u8,
    pub flip_horizontal: bool,
}

type Mat2 = [[i32; 2]; 2];

fn mat_mul(a: Mat2, b: Mat2) -> Mat2 {
    let mut m = [[0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            m[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    m
}

impl DihedralTransform {
    pub const IDENTITY: DihedralTransform = DihedralTransform {
        rot_quarter_turns: 0,
        flip_horizontal: false,
    };

    pub fn new(rot_quarter_turns: u8, flip_horizontal: bool) -> Self {
        DihedralTransform {
            rot_quarter_turns: rot_quarter_turns % 4,
            flip_horizontal,
        }
    }

    pub fn all() -> impl Iterator<Item = DihedralTransform> {
        (0..8).map(|i| DihedralTransform::new(i % 4, i >= 4))
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let i: u8 = rng.random_range(0..8);
        DihedralTransform::new(i % 4, i >= 4)
    }

    /// Integer matrix acting on `(x, y)` column vectors.
    pub fn matrix(&self) -> Mat2 {
        let mut m: Mat2 = if self.flip_horizontal {
            [[-1, 0], [0, 1]]
        } else {
            [[1, 0], [0, 1]]
        };
        for _ in 0..self.rot_quarter_turns % 4 {
            m = mat_mul([[0, -1], [1, 0]], m);
        }
        m
    }

    fn from_matrix(m: Mat2) -> Self {
        DihedralTransform::all()
            .find(|t| t.matrix() == m)
            .expect("orthogonal integer matrix is a dihedral element")
    }

    /// Apply `self`, then `next`.
    pub fn then(&self, next: DihedralTransform) -> DihedralTransform {
        Self::from_matrix(mat_mul(next.matrix(), self.matrix()))
    }

    pub fn inverse(&self) -> DihedralTransform {
        let m = self.matrix();
        Self::from_matrix([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    pub fn swaps_axes(&self) -> bool {
        self.rot_quarter_turns % 2 == 1
    }

    pub fn apply_vector(&self, x: f32, y: f32) -> (f32, f32) {
        let m = self.matrix();
        let comp = |row: [i32; 2]| -> f32 {
            // entries are 0/±1 with exactly one nonzero per row, so this is exact
            match (row[0], row[1]) {
                (1, 0) => x,
                (-1, 0) => -x,
                (0, 1) => y,
                (0, -1) => -y,
                _ => unreachable!(),
            }
        };
        (comp(m[0]), comp(m[1]))
    }

    /// Output raster dimensions for an input of `rows × cols`.
    pub fn output_dims(&self, rows: usize, cols: usize) -> (usize, usize) {
        if self.swaps_axes() {
            (cols, rows)
        } else {
            (rows, cols)
        }
    }

    /// Where input pixel `(row, col)` lands.
    pub fn map_pixel(&self, rows: usize, cols: usize, row: usize, col: usize) -> (usize, usize) {
        let m = self.matrix();
        let x = 2 * col as i64 - (cols as i64 - 1);
        let y = 2 * row as i64 - (rows as i64 - 1);
        let xo = m[0][0] as i64 * x + m[0][1] as i64 * y;
        let yo = m[1][0] as i64 * x + m[1][1] as i64 * y;
        let (orows, ocols) = self.output_dims(rows, cols);
        (
            ((yo + orows as i64 - 1) / 2) as usize,
            ((xo + ocols as i64 - 1) / 2) as usize,
        )
    }

    /// Permutes a row-major raster. Odd rotations need a square input.
    pub fn apply_raster<T: Copy>(&self, rows: usize, cols: usize, values: &[T]) -> Result<Vec<T>> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!("{} values for {rows}x{cols}", values.len())));
        }
        if self.swaps_axes() && rows != cols {
            return Err(Error::Invalid(format!(
                "quarter-turn rotation of a non-square {rows}x{cols} raster"
            )));
        }
        let (orows, ocols) = self.output_dims(rows, cols);
        let mut out = vec![values[0]; orows * ocols];
        for r in 0..rows {
            for c in 0..cols {
                let (ro, co) = self.map_pixel(rows, cols, r, c);
                out[ro * ocols + co] = values[r * cols + c];
            }
        }
        Ok(out)
    }

    pub fn apply_channel(&self, ch: &Channel) -> Result<Channel> {
        let (rows, cols) = self.output_dims(ch.rows, ch.cols);
        Ok(Channel {
            rows,
            cols,
            values: self.apply_raster(ch.rows, ch.cols, &ch.values)?,
        })
    }

    pub fn apply_grid(&self, g: &Grid2D) -> Result<Grid2D> {
        let (rows, cols) = self.output_dims(g.rows(), g.cols());
        Grid2D::new(
            rows,
            cols,
            g.cell_size_m(),
            g.nodata(),
            self.apply_raster(g.rows(), g.cols(), g.values())?,
        )
    }

    pub fn apply_scene(&self, scene: &Scene) -> Result<Scene> {
        let lc = scene.landclass();
        let (rows, cols) = self.output_dims(lc.rows(), lc.cols());
        Scene::new(
            self.apply_grid(scene.elevation())?,
            LandClassGrid::new(rows, cols, self.apply_raster(lc.rows(), lc.cols(), lc.classes())?)?,
        )
    }

    pub fn apply_arrival(&self, a: &ArrivalGrid) -> Result<ArrivalGrid> {
        let (rows, cols) = self.output_dims(a.rows(), a.cols());
        ArrivalGrid::new(rows, cols, self.apply_raster(a.rows(), a.cols(), a.arrival())?)
    }

    /// Meteorological direction of the co-transformed wind. A flip mirrors the
    /// bearing, each quarter turn adds 90°.
    pub fn apply_wind_direction(&self, dir_deg: f32) -> f32 {
        let d = if self.flip_horizontal { 360.0 - dir_deg } else { dir_deg };
        let d = (d + 90.0 * self.rot_quarter_turns as f32).rem_euclid(360.0);
        if d >= 360.0 {
            0.0
        } else {
            d
        }
    }

    pub fn apply_weather(&self, series: &WeatherSeries) -> Result<WeatherSeries> {
        let records = series
            .records()
            .iter()
            .map(|r| WeatherRecord {
                wind_dir_deg: self.apply_wind_direction(r.wind_dir_deg),
                ..*r
            })
            .collect();
        WeatherSeries::new(series.interval_minutes(), records)
    }
}

/// Applies `t` to every spatial channel and co-rotates the gradient and wind
/// vectors.
pub fn apply_dihedral(sample: &FireSample, t: DihedralTransform) -> Result<FireSample> {
    let mut terrain = Vec::with_capacity(sample.terrain.len());
    for ch in &sample.terrain {
        terrain.push(t.apply_channel(ch)?);
    }
    let (gx, gy) = (&terrain[0].values, &terrain[1].values);
    let (mut ngx, mut ngy) = (Vec::with_capacity(gx.len()), Vec::with_capacity(gy.len()));
    for (&x, &y) in gx.iter().zip(gy) {
        let (a, b) = t.apply_vector(x, y);
        ngx.push(a);
        ngy.push(b);
    }
    terrain[0].values = ngx;
    terrain[1].values = ngy;
    let weather_seq = sample
        .weather_seq
        .iter()
        .map(|s| {
            let (wind_x, wind_y) = t.apply_vector(s.wind_x, s.wind_y);
            WeatherStep {
                temperature_c: s.temperature_c,
                wind_x,
                wind_y,
            }
        })
        .collect();
    Ok(FireSample {
        terrain,
        initial_fire: t.apply_channel(&sample.initial_fire)?,
        target_fire: t.apply_channel(&sample.target_fire)?,
        weather_seq,
        fuel_encoding: sample.fuel_encoding,
    })
}
