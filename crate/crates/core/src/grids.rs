//! Raster and weather containers with their on-disk formats.
//!
//! Rasters are row-major with row 0 northernmost; `x` is the column index
//! (east) and `y` the row index (south). Grids are written as plain-text ESRI
//! ASCII grids, weather series as a small CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::{Error, Result};

pub const DEFAULT_CELL_SIZE_M: f32 = 30.0;
pub const DEFAULT_NODATA: f32 = -9999.0;
pub const DEFAULT_INTERVAL_MINUTES: f32 = 30.0;

/// Arrival time of a pixel the fire never reaches.
pub const UNBURNED: f32 = f32::INFINITY;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    rows: usize,
    cols: usize,
    cell_size_m: f32,
    nodata: f32,
    values: Vec<f32>,
}

impl Grid2D {
    pub fn new(
        rows: usize,
        cols: usize,
        cell_size_m: f32,
        nodata: f32,
        values: Vec<f32>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Invalid(format!("empty grid {rows}x{cols}")));
        }
        if !(cell_size_m > 0.0 && cell_size_m.is_finite()) {
            return Err(Error::Invalid(format!("cell size {cell_size_m} must be > 0")));
        }
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} grid",
                values.len()
            )));
        }
        Ok(Grid2D {
            rows,
            cols,
            cell_size_m,
            nodata,
            values,
        })
    }

    /// Grid at the default 30 m resolution and nodata sentinel.
    pub fn from_values(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        Self::new(rows, cols, DEFAULT_CELL_SIZE_M, DEFAULT_NODATA, values)
    }

    pub fn filled(rows: usize, cols: usize, value: f32) -> Result<Self> {
        Self::from_values(rows, cols, vec![value; rows * cols])
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                values.push(f(r, c));
            }
        }
        Self::from_values(rows, cols, values)
    }

    pub fn with_cell_size(mut self, cell_size_m: f32) -> Result<Self> {
        if !(cell_size_m > 0.0 && cell_size_m.is_finite()) {
            return Err(Error::Invalid(format!("cell size {cell_size_m} must be > 0")));
        }
        self.cell_size_m = cell_size_m;
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_size_m(&self) -> f32 {
        self.cell_size_m
    }

    pub fn nodata(&self) -> f32 {
        self.nodata
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f32) {
        self.values[row * self.cols + col] = v;
    }

    pub fn is_nodata(&self, v: f32) -> bool {
        v == self.nodata || (v.is_nan() && self.nodata.is_nan())
    }
}

/// Per-pixel fuel class ids; class 0 is nonburnable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LandClassGrid {
    rows: usize,
    cols: usize,
    classes: Vec<u8>,
}

impl LandClassGrid {
    pub fn new(rows: usize, cols: usize, classes: Vec<u8>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Invalid(format!("empty grid {rows}x{cols}")));
        }
        if classes.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} classes for a {rows}x{cols} grid",
                classes.len()
            )));
        }
        Ok(LandClassGrid {
            rows,
            cols,
            classes,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn classes(&self) -> &[u8] {
        &self.classes
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.classes[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, class: u8) {
        self.classes[row * self.cols + col] = class;
    }

    /// Checks every id against a table with `num_classes` entries.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        match self.classes.iter().find(|&&c| c as usize >= num_classes) {
            Some(&c) => Err(Error::UnknownClass(c)),
            None => Ok(()),
        }
    }

    pub fn to_grid(&self, cell_size_m: f32) -> Result<Grid2D> {
        Grid2D::new(
            self.rows,
            self.cols,
            cell_size_m,
            DEFAULT_NODATA,
            self.classes.iter().map(|&c| c as f32).collect(),
        )
    }

    /// Rounds grid values to class ids; nodata cells become class 0.
    pub fn from_grid(grid: &Grid2D) -> Result<Self> {
        let mut classes = Vec::with_capacity(grid.values.len());
        for &v in &grid.values {
            if grid.is_nodata(v) {
                classes.push(0);
                continue;
            }
            if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
                return Err(Error::Invalid(format!("land class value {v} is not a u8 id")));
            }
            classes.push(v as u8);
        }
        Self::new(grid.rows, grid.cols, classes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherRecord {
    pub temperature_c: f32,
    pub wind_speed_ms: f32,
    /// Meteorological direction the wind blows FROM, clockwise from north.
    pub wind_dir_deg: f32,
}

impl WeatherRecord {
    pub fn new(temperature_c: f32, wind_speed_ms: f32, wind_dir_deg: f32) -> Result<Self> {
        let rec = WeatherRecord {
            temperature_c,
            wind_speed_ms,
            wind_dir_deg,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.temperature_c.is_finite() {
            return Err(Error::Invalid("temperature must be finite".into()));
        }
        if !(self.wind_speed_ms >= 0.0 && self.wind_speed_ms.is_finite()) {
            return Err(Error::Invalid(format!(
                "negative wind speed {}",
                self.wind_speed_ms
            )));
        }
        if !(0.0..360.0).contains(&self.wind_dir_deg) {
            return Err(Error::Invalid(format!(
                "wind direction {} outside [0, 360)",
                self.wind_dir_deg
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    interval_minutes: f32,
    records: Vec<WeatherRecord>,
}

impl WeatherSeries {
    pub fn new(interval_minutes: f32, records: Vec<WeatherRecord>) -> Result<Self> {
        if !(interval_minutes > 0.0 && interval_minutes.is_finite()) {
            return Err(Error::Invalid(format!(
                "interval {interval_minutes} min must be > 0"
            )));
        }
        if records.is_empty() {
            return Err(Error::Invalid("weather series is empty".into()));
        }
        for r in &records {
            r.validate()?;
        }
        Ok(WeatherSeries {
            interval_minutes,
            records,
        })
    }

    pub fn interval_minutes(&self) -> f32 {
        self.interval_minutes
    }

    pub fn records(&self) -> &[WeatherRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn horizon_minutes(&self) -> f32 {
        self.records.len() as f32 * self.interval_minutes
    }

    /// Records `start..start + len` as a new series.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        let end = start + len;
        if len == 0 || end > self.records.len() {
            return Err(Error::Invalid(format!(
                "window {start}..{end} outside series of length {}",
                self.records.len()
            )));
        }
        Self::new(self.interval_minutes, self.records[start..end].to_vec())
    }
}

/// Co-registered elevation and land class rasters.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    elevation: Grid2D,
    landclass: LandClassGrid,
}

impl Scene {
    pub fn new(elevation: Grid2D, landclass: LandClassGrid) -> Result<Self> {
        if elevation.rows() != landclass.rows() || elevation.cols() != landclass.cols() {
            return Err(Error::Shape(format!(
                "elevation {}x{} vs land class {}x{}",
                elevation.rows(),
                elevation.cols(),
                landclass.rows(),
                landclass.cols()
            )));
        }
        Ok(Scene {
            elevation,
            landclass,
        })
    }

    pub fn elevation(&self) -> &Grid2D {
        &self.elevation
    }

    pub fn landclass(&self) -> &LandClassGrid {
        &self.landclass
    }

    pub fn rows(&self) -> usize {
        self.elevation.rows()
    }

    pub fn cols(&self) -> usize {
        self.elevation.cols()
    }

    pub fn cell_size_m(&self) -> f32 {
        self.elevation.cell_size_m()
    }
}

/// Fire arrival time per pixel in minutes since scenario start;
/// [`UNBURNED`] (+inf) where the fire never arrives.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalGrid {
    rows: usize,
    cols: usize,
    arrival: Vec<f32>,
}

impl ArrivalGrid {
    pub fn new(rows: usize, cols: usize, arrival: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Invalid(format!("empty grid {rows}x{cols}")));
        }
        if arrival.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} arrivals for a {rows}x{cols} grid",
                arrival.len()
            )));
        }
        if let Some(t) = arrival.iter().find(|t| t.is_nan() || **t < 0.0) {
            return Err(Error::Invalid(format!("arrival time {t} must be >= 0")));
        }
        Ok(ArrivalGrid {
            rows,
            cols,
            arrival,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn arrival(&self) -> &[f32] {
        &self.arrival
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.arrival[row * self.cols + col]
    }

    pub fn burned_count(&self) -> usize {
        self.arrival.iter().filter(|t| t.is_finite()).count()
    }

    /// Disk form: UNBURNED becomes the nodata sentinel.
    pub fn to_grid(&self, cell_size_m: f32) -> Result<Grid2D> {
        let values = self
            .arrival
            .iter()
            .map(|&t| if t.is_finite() { t } else { DEFAULT_NODATA })
            .collect();
        Grid2D::new(self.rows, self.cols, cell_size_m, DEFAULT_NODATA, values)
    }

    pub fn from_grid(grid: &Grid2D) -> Result<Self> {
        let arrival = grid
            .values()
            .iter()
            .map(|&v| if grid.is_nodata(v) { UNBURNED } else { v })
            .collect();
        Self::new(grid.rows(), grid.cols(), arrival)
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_ascii_grid(path: impl AsRef<Path>) -> Result<Grid2D> {
    let path = path.as_ref();
    parse_ascii_grid(&read_text(path)?, &path.display().to_string())
}

/// Parses ESRI ASCII grid text. Header keys are case-insensitive; `ncols`,
/// `nrows`, `cellsize` and `NODATA_value` are required, corner keys are accepted
/// and ignored. The body may wrap lines freely but must hold exactly
/// `nrows × ncols` numbers.
pub fn parse_ascii_grid(text: &str, origin: &str) -> Result<Grid2D> {
    let mut ncols: Option<usize> = None;
    let mut nrows: Option<usize> = None;
    let mut cellsize: Option<f32> = None;
    let mut nodata: Option<f32> = None;
    let mut lines = text.lines().enumerate().peekable();

    while let Some(&(i, line)) = lines.peek() {
        let line_no = i + 1;
        let mut toks = line.split_whitespace();
        let Some(key) = toks.next() else {
            lines.next();
            continue;
        };
        if key.parse::<f64>().is_ok() {
            break;
        }
        let value = toks
            .next()
            .ok_or_else(|| Error::parse(origin, line_no, format!("malformed header: {key} has no value")))?;
        if toks.next().is_some() {
            return Err(Error::parse(origin, line_no, "malformed header: trailing tokens"));
        }
        let bad = || Error::parse(origin, line_no, format!("malformed header: bad value for {key}"));
        match key.to_ascii_lowercase().as_str() {
            "ncols" => ncols = Some(value.parse().map_err(|_| bad())?),
            "nrows" => nrows = Some(value.parse().map_err(|_| bad())?),
            "cellsize" => cellsize = Some(value.parse().map_err(|_| bad())?),
            "nodata_value" => nodata = Some(value.parse().map_err(|_| bad())?),
            "xllcorner" | "yllcorner" | "xllcenter" | "yllcenter" => {
                value.parse::<f64>().map_err(|_| bad())?;
            }
            _ => {
                return Err(Error::parse(
                    origin,
                    line_no,
                    format!("malformed header: unknown key {key}"),
                ))
            }
        }
        lines.next();
    }

    let header_line = lines.peek().map(|(i, _)| *i + 1).unwrap_or(text.lines().count());
    let missing = |k: &str| Error::parse(origin, header_line, format!("malformed header: missing {k}"));
    let ncols = ncols.ok_or_else(|| missing("ncols"))?;
    let nrows = nrows.ok_or_else(|| missing("nrows"))?;
    let cellsize = cellsize.ok_or_else(|| missing("cellsize"))?;
    let nodata = nodata.ok_or_else(|| missing("NODATA_value"))?;
    let expected = nrows * ncols;
    if expected == 0 {
        return Err(Error::parse(origin, header_line, "malformed header: zero-sized grid"));
    }

    let mut values = Vec::with_capacity(expected);
    let mut last_line = header_line;
    for (i, line) in lines {
        let line_no = i + 1;
        for tok in line.split_whitespace() {
            last_line = line_no;
            if values.len() == expected {
                return Err(Error::parse(
                    origin,
                    line_no,
                    format!("token count mismatch: more than {expected} values"),
                ));
            }
            let v: f32 = tok
                .parse()
                .map_err(|_| Error::parse(origin, line_no, format!("non-numeric token {tok:?}")))?;
            values.push(v);
        }
    }
    if values.len() != expected {
        return Err(Error::parse(
            origin,
            last_line,
            format!("token count mismatch: {} values, expected {expected}", values.len()),
        ));
    }
    Grid2D::new(nrows, ncols, cellsize, nodata, values)
        .map_err(|e| Error::parse(origin, header_line, e.to_string()))
}

/// Renders a grid as ASCII grid text. Values use the shortest representation
/// that parses back to the identical `f32`.
pub fn format_ascii_grid(grid: &Grid2D) -> String {
    let mut s = String::with_capacity(grid.values.len() * 8 + 128);
    let _ = writeln!(s, "ncols {}", grid.cols);
    let _ = writeln!(s, "nrows {}", grid.rows);
    let _ = writeln!(s, "xllcorner 0");
    let _ = writeln!(s, "yllcorner 0");
    let _ = writeln!(s, "cellsize {}", grid.cell_size_m);
    let _ = writeln!(s, "NODATA_value {}", grid.nodata);
    for row in grid.values.chunks(grid.cols) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let v = if grid.is_nodata(*v) { grid.nodata } else { *v };
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

pub fn write_ascii_grid(grid: &Grid2D, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_ascii_grid(grid))
}

pub fn read_weather_csv(path: impl AsRef<Path>) -> Result<WeatherSeries> {
    let path = path.as_ref();
    parse_weather_csv(&read_text(path)?, &path.display().to_string())
}

const WEATHER_COLUMNS: [&str; 4] = ["t_index", "temperature_c", "wind_speed_ms", "wind_dir_deg"];

/// Parses the weather CSV. A `# interval_minutes=N` comment overrides the
/// default 30 minute interval; other `#` lines are ignored.
pub fn parse_weather_csv(text: &str, origin: &str) -> Result<WeatherSeries> {
    let mut interval = DEFAULT_INTERVAL_MINUTES;
    let mut columns: Option<[usize; 4]> = None;
    let mut ncols = 0;
    let mut records = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once('=') {
                if k.trim() == "interval_minutes" {
                    interval = v.trim().parse().map_err(|_| {
                        Error::parse(origin, line_no, format!("bad interval_minutes {:?}", v.trim()))
                    })?;
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let Some(idx) = columns else {
            let mut idx = [0usize; 4];
            for (slot, name) in idx.iter_mut().zip(WEATHER_COLUMNS) {
                *slot = fields
                    .iter()
                    .position(|f| *f == name)
                    .ok_or_else(|| Error::parse(origin, line_no, format!("missing column {name}")))?;
            }
            columns = Some(idx);
            ncols = fields.len();
            continue;
        };
        if fields.len() != ncols {
            return Err(Error::parse(
                origin,
                line_no,
                format!("expected {ncols} fields, found {}", fields.len()),
            ));
        }
        let num = |j: usize| -> Result<f64> {
            fields[idx[j]].parse::<f64>().map_err(|_| {
                Error::parse(
                    origin,
                    line_no,
                    format!("non-numeric {}: {:?}", WEATHER_COLUMNS[j], fields[idx[j]]),
                )
            })
        };
        let t = num(0)?;
        if t != records.len() as f64 {
            return Err(Error::parse(
                origin,
                line_no,
                format!("gap in t_index: expected {}, found {t}", records.len()),
            ));
        }
        let (temp, speed, dir) = (num(1)?, num(2)?, num(3)?);
        if speed < 0.0 {
            return Err(Error::parse(origin, line_no, format!("negative speed {speed}")));
        }
        if !(0.0..360.0).contains(&dir) {
            return Err(Error::parse(
                origin,
                line_no,
                format!("direction {dir} outside [0,360)"),
            ));
        }
        records.push(
            WeatherRecord::new(temp as f32, speed as f32, dir as f32)
                .map_err(|e| Error::parse(origin, line_no, e.to_string()))?,
        );
    }
    if columns.is_none() {
        return Err(Error::parse(origin, 1, "missing column t_index"));
    }
    WeatherSeries::new(interval, records).map_err(|e| Error::parse(origin, 0, e.to_string()))
}

pub fn format_weather_csv(series: &WeatherSeries) -> String {
    let mut s = String::new();
    if series.interval_minutes != DEFAULT_INTERVAL_MINUTES {
        let _ = writeln!(s, "# interval_minutes={}", series.interval_minutes);
    }
    let _ = writeln!(s, "{}", WEATHER_COLUMNS.join(","));
    for (t, r) in series.records.iter().enumerate() {
        let _ = writeln!(
            s,
            "{t},{},{},{}",
            r.temperature_c, r.wind_speed_ms, r.wind_dir_deg
        );
    }
    s
}

pub fn write_weather_csv(series: &WeatherSeries, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_weather_csv(series))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER_2X2: &str = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 30\nNODATA_value -9999\n";

    #[test]
    fn reads_two_by_two() {
        let g = parse_ascii_grid(&format!("{HEADER_2X2}1 2\n3 4\n"), "t").unwrap();
        assert_eq!((g.rows(), g.cols()), (2, 2));
        assert_eq!(g.values(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(g.cell_size_m(), 30.0);
    }

    #[test]
    fn header_is_case_insensitive() {
        let text = "NCOLS 1\nNROWS 1\nCELLSIZE 10\nnodata_value -1\n5\n";
        let g = parse_ascii_grid(text, "t").unwrap();
        assert_eq!(g.values(), &[5.0]);
        assert_eq!(g.nodata(), -1.0);
    }

    #[test]
    fn token_count_mismatch_reports_line() {
        let err = parse_ascii_grid(&format!("{HEADER_2X2}1 2\n3\n"), "t").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("token count mismatch"), "{msg}");
        assert!(msg.contains("line 8"), "{msg}");
        let err = parse_ascii_grid(&format!("{HEADER_2X2}1 2\n3 4 5\n"), "t").unwrap_err();
        assert!(err.to_string().contains("token count mismatch"));
    }

    #[test]
    fn non_numeric_and_missing_header() {
        let err = parse_ascii_grid(&format!("{HEADER_2X2}1 x\n3 4\n"), "t").unwrap_err();
        assert!(err.to_string().contains("line 7"), "{err}");
        assert!(err.to_string().contains("non-numeric"), "{err}");
        let err = parse_ascii_grid("ncols 2\nnrows 2\ncellsize 30\n1 2\n3 4\n", "t").unwrap_err();
        assert!(err.to_string().contains("missing NODATA_value"), "{err}");
        let err = parse_ascii_grid("ncols 2\nnrows\n", "t").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn writes_single_zero_token() {
        let g = Grid2D::filled(1, 1, 0.0).unwrap();
        let text = format_ascii_grid(&g);
        assert_eq!(text.lines().last(), Some("0"));
    }

    #[test]
    fn nodata_written_as_declared_sentinel() {
        let g = Grid2D::from_values(1, 2, vec![DEFAULT_NODATA, 1.5]).unwrap();
        let text = format_ascii_grid(&g);
        assert_eq!(text.lines().last(), Some("-9999 1.5"));
        let back = parse_ascii_grid(&text, "t").unwrap();
        assert!(back.is_nodata(back.get(0, 0)));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.asc");
        let g = Grid2D::from_fn(3, 4, |r, c| (r * 10 + c) as f32 * 0.1 - 0.7).unwrap();
        write_ascii_grid(&g, &path).unwrap();
        assert_eq!(read_ascii_grid(&path).unwrap(), g);
        let err = write_ascii_grid(&g, dir.path().join("missing/g.asc")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn arrival_grid_nodata_mapping() {
        let a = ArrivalGrid::new(1, 3, vec![0.0, 45.0, UNBURNED]).unwrap();
        let g = a.to_grid(30.0).unwrap();
        assert_eq!(g.values(), &[0.0, 45.0, DEFAULT_NODATA]);
        assert_eq!(ArrivalGrid::from_grid(&g).unwrap(), a);
        assert!(ArrivalGrid::new(1, 1, vec![-1.0]).is_err());
    }

    #[test]
    fn landclass_validation() {
        let lc = LandClassGrid::new(1, 3, vec![0, 2, 5]).unwrap();
        assert!(matches!(lc.validate(4), Err(Error::UnknownClass(5))));
        assert!(lc.validate(6).is_ok());
        let back = LandClassGrid::from_grid(&lc.to_grid(30.0).unwrap()).unwrap();
        assert_eq!(back, lc);
    }

    #[test]
    fn scene_dimension_agreement() {
        let e = Grid2D::filled(2, 3, 0.0).unwrap();
        let l = LandClassGrid::new(3, 2, vec![1; 6]).unwrap();
        assert!(matches!(Scene::new(e, l), Err(Error::Shape(_))));
    }

    #[test]
    fn weather_single_row() {
        let s = parse_weather_csv("t_index,temperature_c,wind_speed_ms,wind_dir_deg\n0,25,10,0\n", "w").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.records()[0], WeatherRecord::new(25.0, 10.0, 0.0).unwrap());
        assert_eq!(s.interval_minutes(), 30.0);
    }

    #[test]
    fn weather_errors() {
        let h = "t_index,temperature_c,wind_speed_ms,wind_dir_deg\n";
        let gap = parse_weather_csv(&format!("{h}0,25,10,0\n2,25,10,0\n"), "w").unwrap_err();
        assert!(gap.to_string().contains("gap in t_index"), "{gap}");
        assert!(gap.to_string().contains("line 3"), "{gap}");
        let neg = parse_weather_csv(&format!("{h}0,25,-1,0\n"), "w").unwrap_err();
        assert!(neg.to_string().contains("negative speed"));
        let dir = parse_weather_csv(&format!("{h}0,25,1,360\n"), "w").unwrap_err();
        assert!(dir.to_string().contains("outside [0,360)"));
        let col = parse_weather_csv("t_index,temperature_c,wind_speed_ms\n0,1,2\n", "w").unwrap_err();
        assert!(col.to_string().contains("missing column wind_dir_deg"));
    }

    #[test]
    fn weather_interval_override_and_horizon() {
        let mut text = String::from("# interval_minutes=10\nt_index,temperature_c,wind_speed_ms,wind_dir_deg\n");
        for t in 0..48 {
            text.push_str(&format!("{t},20,5,90\n"));
        }
        let s = parse_weather_csv(&text, "w").unwrap();
        assert_eq!(s.interval_minutes(), 10.0);
        assert_eq!(s.len(), 48);
        let s30 = WeatherSeries::new(30.0, s.records().to_vec()).unwrap();
        // 48 × 30 min = 24 h
        assert_eq!(s30.horizon_minutes(), 24.0 * 60.0);
        let back = parse_weather_csv(&format_weather_csv(&s), "w").unwrap();
        assert_eq!(back, s);
    }
}
