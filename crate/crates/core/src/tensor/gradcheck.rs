use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, ParamStore, Var};
use crate::{Result, Scalar};

/// A scalar computation that can be recorded at any precision, so the same
/// loss can be trained in `f32` and verified in `f64`.
pub trait Differentiable {
    fn build<T: Scalar>(&self, g: &mut Graph<'_, T>) -> Result<Var>;
}

/// Which parameter coordinates to perturb.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordSelection {
    All,
    /// Up to this many random coordinates from every segment.
    PerSegment(usize),
    /// This many random coordinates overall.
    Random(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub tolerance: f64,
    /// Denominator floor for the relative error, so gradients that are zero up
    /// to rounding compare absolutely.
    pub abs_floor: f64,
    pub coords: CoordSelection,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            epsilon: 1e-4,
            tolerance: 1e-5,
            abs_floor: 1e-6,
            coords: CoordSelection::All,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Coordinates whose perturbation flipped some relu, so the central
    /// difference straddles a kink.
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    pub worst_coord: Option<usize>,
    pub tolerance: f64,
    pub segments: Vec<SegmentCheck>,
    pub passed: bool,
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "grad check {}: {} coords, {} skipped at kinks, max rel error {:.3e} (tol {:.1e})",
            if self.passed { "passed" } else { "FAILED" },
            self.checked,
            self.skipped_kinks,
            self.max_rel_error,
            self.tolerance
        )?;
        for s in &self.segments {
            writeln!(f, "  {:<16} {:>6} coords  max {:.3e}", s.name, s.checked, s.max_rel_error)?;
        }
        Ok(())
    }
}

fn select(params: &ParamStore<f64>, sel: CoordSelection, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.total_count();
    let mut out = match sel {
        CoordSelection::All => (0..n).collect(),
        CoordSelection::Random(k) if k >= n => (0..n).collect(),
        CoordSelection::Random(k) => sample(&mut rng, n, k).into_vec(),
        CoordSelection::PerSegment(k) => {
            let mut v = Vec::new();
            for s in params.segments() {
                if k >= s.len {
                    v.extend(s.offset..s.offset + s.len);
                } else {
                    v.extend(sample(&mut rng, s.len, k).into_iter().map(|i| s.offset + i));
                }
            }
            v
        }
    };
    out.sort_unstable();
    out
}

fn evaluate<C: Differentiable + ?Sized>(comp: &C, params: &ParamStore<f64>) -> Result<(f64, Vec<bool>)> {
    let mut g = Graph::new(params);
    let out = comp.build(&mut g)?;
    let v = g.value(out).item().unwrap_or(f64::NAN);
    Ok((v, g.relu_pattern()))
}

/// Checks `comp`'s reverse-mode gradient in `f64` against central differences.
pub fn grad_check<C: Differentiable + ?Sized>(
    comp: &C,
    params: &ParamStore<f64>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let mut g = Graph::new(params);
    let out = comp.build(&mut g)?;
    let (_, analytic) = g.backward(out)?;
    grad_check_against(comp, params, &analytic, cfg)
}

/// Checks a supplied gradient (for example one computed in `f32`, or a
/// deliberately corrupted one) against `f64` central differences of `comp`.
pub fn grad_check_against<C: Differentiable + ?Sized>(
    comp: &C,
    params: &ParamStore<f64>,
    analytic: &[f64],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let (_, base_pattern) = evaluate(comp, params)?;
    let mut work = params.clone();
    let mut segments: Vec<SegmentCheck> = params
        .segments()
        .iter()
        .map(|s| SegmentCheck { name: s.name.clone(), checked: 0, max_rel_error: 0.0 })
        .collect();
    let (mut checked, mut skipped, mut max_rel, mut worst) = (0, 0, 0.0f64, None);
    for i in select(params, cfg.coords, cfg.seed) {
        let orig = params.values()[i];
        work.values_mut()[i] = orig + cfg.epsilon;
        let (fp, pp) = evaluate(comp, &work)?;
        work.values_mut()[i] = orig - cfg.epsilon;
        let (fm, pm) = evaluate(comp, &work)?;
        work.values_mut()[i] = orig;
        if pp != base_pattern || pm != base_pattern {
            skipped += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * cfg.epsilon);
        let a = analytic.get(i).copied().unwrap_or(f64::NAN);
        let denom = a.abs().max(numeric.abs()).max(cfg.abs_floor);
        let rel = (a - numeric).abs() / denom;
        let rel = if rel.is_nan() { f64::INFINITY } else { rel };
        checked += 1;
        let seg = params
            .segments()
            .iter()
            .position(|s| i >= s.offset && i < s.offset + s.len)
            .expect("coordinate inside a segment");
        segments[seg].checked += 1;
        segments[seg].max_rel_error = segments[seg].max_rel_error.max(rel);
        if rel > max_rel || worst.is_none() {
            max_rel = max_rel.max(rel);
            worst = Some(i);
        }
    }
    segments.retain(|s| s.checked > 0);
    Ok(GradCheckReport {
        checked,
        skipped_kinks: skipped,
        max_rel_error: max_rel,
        worst_coord: worst,
        tolerance: cfg.tolerance,
        segments,
        passed: checked > 0 && max_rel < cfg.tolerance,
    })
}
