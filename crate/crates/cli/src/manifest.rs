//! Dataset manifest: a `key=value` header followed by one `[sample]` block per
//! simulated fire. Paths are relative to the manifest's directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use firemu::kv::{parse_blocks, KeyValues};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const SIM_CONFIG_FILE: &str = "sim.cfg";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split {s:?}")),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// One fire: input files, its arrival grid and the window its sample covers.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleEntry {
    pub id: String,
    pub elevation: PathBuf,
    pub landclass: PathBuf,
    pub weather: PathBuf,
    pub ignition: PathBuf,
    /// Written by `simulate`.
    pub arrival: PathBuf,
    pub split: Split,
    /// First interval of the sample window.
    pub t_start: usize,
    /// Intervals rolled out from `t_start`.
    pub rollout: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    /// Directory holding the manifest; entry paths are relative to it.
    pub root: PathBuf,
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub intervals: usize,
    pub test_split: f64,
    pub samples: Vec<SampleEntry>,
}

impl RunManifest {
    pub fn path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn sim_config_path(&self) -> PathBuf {
        self.root.join(SIM_CONFIG_FILE)
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    pub fn sample(&self, id: &str) -> Result<&SampleEntry> {
        self.samples.iter().find(|s| s.id == id).with_context(|| format!("no sample {id:?} in manifest"))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleEntry> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# firemu run manifest\n");
        let mut head = KeyValues::new("manifest");
        head.insert("seed", self.seed);
        head.insert("rows", self.rows);
        head.insert("cols", self.cols);
        head.insert("intervals", self.intervals);
        head.insert("test_split", self.test_split);
        head.insert("count", self.samples.len());
        head.write_to(&mut s);
        for e in &self.samples {
            let _ = writeln!(s, "\n[sample]");
            let _ = writeln!(s, "id={}", e.id);
            for (k, p) in [
                ("elevation", &e.elevation),
                ("landclass", &e.landclass),
                ("weather", &e.weather),
                ("ignition", &e.ignition),
                ("arrival", &e.arrival),
            ] {
                let _ = writeln!(s, "{k}={}", p.display());
            }
            let _ = writeln!(s, "split={}", e.split);
            let _ = writeln!(s, "t_start={}", e.t_start);
            let _ = writeln!(s, "rollout={}", e.rollout);
        }
        s
    }

    pub fn parse(text: &str, root: &Path, origin: &str) -> Result<Self> {
        let (head, blocks) = parse_blocks(text, origin, Some("sample"))?;
        let count: usize = head.require("count")?;
        ensure!(count == blocks.len(), "{origin}: header count {count} but {} sample blocks", blocks.len());
        let samples = blocks.iter().map(entry_from_kv).collect::<Result<Vec<_>>>()?;
        let m = RunManifest {
            root: root.to_path_buf(),
            seed: head.require("seed")?,
            rows: head.require("rows")?,
            cols: head.require("cols")?,
            intervals: head.require("intervals")?,
            test_split: head.require("test_split")?,
            samples,
        };
        m.validate().with_context(|| origin.to_string())?;
        Ok(m)
    }

    /// Structural checks: unique ids, windows inside the horizon.
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.samples.is_empty(), "manifest lists no samples");
        ensure!(self.test_split > 0.0 && self.test_split < 1.0, "test_split {} outside (0, 1)", self.test_split);
        let mut ids: Vec<&str> = self.samples.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            bail!("duplicate sample id {}", w[0]);
        }
        for e in &self.samples {
            ensure!(
                e.rollout >= 1 && e.t_start + e.rollout <= self.intervals,
                "sample {}: window {}+{} exceeds {} intervals",
                e.id,
                e.t_start,
                e.rollout,
                self.intervals
            );
        }
        Ok(())
    }

    /// Reads `path` (a manifest file or the directory holding one) and checks
    /// that every input file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Self::parse(&text, &root, &file.display().to_string())?;
        for e in &m.samples {
            for p in [&e.elevation, &e.landclass, &e.weather, &e.ignition] {
                let full = m.resolve(p);
                ensure!(full.is_file(), "sample {}: missing {}", e.id, full.display());
            }
        }
        Ok(m)
    }

    /// Fails unless every arrival grid has been written.
    pub fn require_arrivals(&self) -> Result<()> {
        for e in &self.samples {
            let full = self.resolve(&e.arrival);
            ensure!(full.is_file(), "sample {}: no arrival grid at {} (run simulate first)", e.id, full.display());
        }
        Ok(())
    }

    /// Fails if the recorded split fraction differs from `test_split`.
    pub fn check_split(&self, test_split: f64) -> Result<()> {
        ensure!(
            (self.test_split - test_split).abs() < 1e-12,
            "manifest was split with test_split={}, training asked for {test_split}",
            self.test_split
        );
        Ok(())
    }

    pub fn write(&self) -> Result<PathBuf> {
        let p = self.path();
        std::fs::write(&p, self.to_text()).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }
}

fn entry_from_kv(kv: &KeyValues) -> Result<SampleEntry> {
    let path = |k: &str| -> Result<PathBuf> { Ok(PathBuf::from(kv.require::<String>(k)?)) };
    let split: String = kv.require("split")?;
    Ok(SampleEntry {
        id: kv.require("id")?,
        elevation: path("elevation")?,
        landclass: path("landclass")?,
        weather: path("weather")?,
        ignition: path("ignition")?,
        arrival: path("arrival")?,
        split: split.parse().map_err(anyhow::Error::msg)?,
        t_start: kv.require("t_start")?,
        rollout: kv.require("rollout")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> RunManifest {
        let entry = |i: usize, split| SampleEntry {
            id: format!("fire_{i:03}"),
            elevation: format!("fire_{i:03}/elevation.asc").into(),
            landclass: format!("fire_{i:03}/landclass.asc").into(),
            weather: format!("fire_{i:03}/weather.csv").into(),
            ignition: format!("fire_{i:03}/ignition.txt").into(),
            arrival: format!("fire_{i:03}/arrival.asc").into(),
            split,
            t_start: 2,
            rollout: 2,
        };
        RunManifest {
            root: "/data".into(),
            seed: 5,
            rows: 64,
            cols: 48,
            intervals: 8,
            test_split: 0.25,
            samples: vec![entry(0, Split::Train), entry(1, Split::Test)],
        }
    }

    #[test]
    fn text_round_trip() {
        let m = manifest();
        assert_eq!(RunManifest::parse(&m.to_text(), Path::new("/data"), "m").unwrap(), m);
    }

    #[test]
    fn rejects_bad_windows_and_duplicates() {
        let mut m = manifest();
        m.samples[0].t_start = 7;
        assert!(m.validate().is_err());
        let mut m = manifest();
        m.samples[1].id = m.samples[0].id.clone();
        assert!(m.validate().is_err());
        let text = manifest().to_text().replace("count=2", "count=3");
        assert!(RunManifest::parse(&text, Path::new("/"), "m").is_err());
        assert!(manifest().check_split(0.2).is_err());
        assert!(manifest().check_split(0.25).is_ok());
    }
}
