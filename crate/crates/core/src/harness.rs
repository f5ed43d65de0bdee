//! Monte Carlo experiments: empirical coverage of the homogeneity tests under
//! the null trend model, and the size of the Bahadur remainder.
//!
//! Every replicate draws from a stream keyed by its coordinates, and results
//! are collected in coordinate order, so tables do not depend on the number
//! of worker threads.

use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homtest::{run_prepared, HomogeneityConfig, Method, PreparedDesign, SurrogateChoice, TestResult};
use crate::quantreg::{fit_quantile_regression, DesignContext, SolverConfig};
use crate::rng;
use crate::simgen::{analytic_tau_mm_frechet, bahadur_linear_form, trend_dataset, MMProcessSpec, TrendModelSpec};
use crate::tailstats::TaperSpec;

const DATA_TAG: u64 = 0x6461_7461;
const CALIB_TAG: u64 = 0x0063_616c_6962;
const GAP_TAG: u64 = 0x0067_6170;

/// Retries allowed for a failed replicate before it is skipped.
pub const MAX_REDRAWS: usize = 3;
/// Cells with a larger skipped fraction are flagged.
pub const MAX_SKIP_FRACTION: f64 = 0.1;
/// Smallest replicate count for a cell to be reported as a coverage estimate.
pub const MIN_REPORTED_REPS: usize = 100;

fn default_surrogate() -> SurrogateChoice {
    SurrogateChoice::FrechetHill
}

fn default_nominal() -> Vec<f64> {
    vec![0.90, 0.95, 0.99]
}

/// A coverage experiment over the null trend model with two-term exponential
/// moving-maximum noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub n_values: Vec<usize>,
    pub p_values: Vec<usize>,
    pub a_values: Vec<f64>,
    /// Quantile levels `(1 − α₁, 1 − α₂)`, e.g. `(0.95, 0.99)`.
    pub level_pairs: Vec<(f64, f64)>,
    pub methods: Vec<Method>,
    #[serde(default = "default_nominal")]
    pub nominal_levels: Vec<f64>,
    pub reps: usize,
    /// Surrogate replicates for the generative method.
    #[serde(rename = "B", alias = "b")]
    pub b: usize,
    pub master_seed: u64,
    #[serde(default = "default_surrogate")]
    pub surrogate: SurrogateChoice,
    #[serde(default)]
    pub taper: Option<TaperSpec>,
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("n_values", self.n_values.is_empty()),
            ("p_values", self.p_values.is_empty()),
            ("a_values", self.a_values.is_empty()),
            ("level_pairs", self.level_pairs.is_empty()),
            ("methods", self.methods.is_empty()),
            ("nominal_levels", self.nominal_levels.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::Config(format!("grid field '{name}' is empty")));
        }
        if self.reps == 0 {
            return Err(Error::Config("reps must be positive".into()));
        }
        if self.methods.contains(&Method::Generative) && self.b < 50 {
            return Err(Error::Config(format!("B = {} is below the minimum of 50", self.b)));
        }
        for &(l1, l2) in &self.level_pairs {
            if !(l1 > 0.0 && l1 < 1.0 && l2 > 0.0 && l2 < 1.0) || l1 > l2 {
                return Err(Error::Config(format!(
                    "level pair ({l1}, {l2}) must satisfy 0 < level1 <= level2 < 1"
                )));
            }
        }
        if let Some(v) = self.nominal_levels.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::Config(format!("nominal level {v} outside (0, 1)")));
        }
        if let Some(p) = self.p_values.iter().find(|p| **p < 2) {
            return Err(Error::Config(format!("p = {p} leaves nothing to test")));
        }
        Ok(())
    }

    /// Reads a grid from a `.toml` or `.json` file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let grid: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)?,
            _ => toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?,
        };
        grid.validate()?;
        Ok(grid)
    }

    fn data_cells(&self) -> Vec<DataCell> {
        let mut cells = Vec::new();
        for &n in &self.n_values {
            for &p in &self.p_values {
                for &a in &self.a_values {
                    for &(l1, l2) in &self.level_pairs {
                        cells.push(DataCell { n, p, a, l1, l2 });
                    }
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, Copy)]
struct DataCell {
    n: usize,
    p: usize,
    a: f64,
    l1: f64,
    l2: f64,
}

impl DataCell {
    fn id(&self) -> u64 {
        rng::derive_id(&[
            self.n as u64,
            self.p as u64,
            self.a.to_bits(),
            self.l1.to_bits(),
            self.l2.to_bits(),
        ])
    }

    fn alphas(&self) -> (f64, f64) {
        (1.0 - self.l1, 1.0 - self.l2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NominalCoverage {
    pub nominal: f64,
    pub coverage: f64,
}

/// Coverage of one method in one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub n: usize,
    pub p: usize,
    pub a: f64,
    pub level1: f64,
    pub level2: f64,
    pub method: Method,
    pub coverage: Vec<NominalCoverage>,
    /// Replicates that produced a decision.
    pub reps: usize,
    pub skipped: usize,
    pub seed: u64,
    /// More than 10% of replicates were skipped, or too few replicates ran.
    pub flagged: bool,
}

impl CoverageCell {
    pub fn coverage_at(&self, nominal: f64) -> Option<f64> {
        self.coverage
            .iter()
            .find(|c| (c.nominal - nominal).abs() < 1e-9)
            .map(|c| c.coverage)
    }
}

/// Runs one observed analysis per replicate and scores every method on it.
fn run_replicate(
    cell: &DataCell,
    spec: &TrendModelSpec,
    prepared: &PreparedDesign,
    grid: &ExperimentGrid,
    rep: usize,
) -> Option<Vec<TestResult>> {
    let (alpha1, alpha2) = cell.alphas();
    let significance: Vec<f64> = grid.nominal_levels.iter().map(|v| 1.0 - v).collect();
    for attempt in 0..=MAX_REDRAWS {
        let coords = [cell.id(), rep as u64, attempt as u64];
        let mut stream = rng::stream(grid.master_seed, rng::derive_id(&[DATA_TAG, coords[0], coords[1], coords[2]]));
        let Ok(data) = trend_dataset(spec, 0, &mut stream) else {
            continue;
        };
        let config = HomogeneityConfig {
            significance: significance.clone(),
            replicates: grid.b,
            seed: rng::derive_id(&[CALIB_TAG, grid.master_seed, coords[0], coords[1], coords[2]]),
            surrogate: grid.surrogate,
            taper: grid.taper,
            ..HomogeneityConfig::default()
        };
        if let Ok(results) = run_prepared(prepared, &data.y, alpha1, alpha2, &grid.methods, &config) {
            return Some(results);
        }
    }
    None
}

/// Runs the grid on a pool with `jobs` threads (all cores when `None`).
pub fn run_coverage_experiment(grid: &ExperimentGrid, jobs: Option<usize>) -> Result<Vec<CoverageCell>> {
    grid.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| run_grid(grid))
}

fn run_grid(grid: &ExperimentGrid) -> Result<Vec<CoverageCell>> {
    let base = HomogeneityConfig {
        taper: grid.taper,
        ..HomogeneityConfig::default()
    };
    let mut cells = Vec::new();
    for cell in grid.data_cells() {
        let (alpha1, alpha2) = cell.alphas();
        let spec = TrendModelSpec::exponential_null(cell.n, cell.p, cell.a, &[alpha1, alpha2])?;
        let prepared = PreparedDesign::new(DesignContext::polynomial(cell.n, cell.p)?, &base)?;
        let outcomes: Vec<Option<Vec<TestResult>>> = (0..grid.reps)
            .into_par_iter()
            .map(|rep| run_replicate(&cell, &spec, &prepared, grid, rep))
            .collect();
        let done: Vec<&Vec<TestResult>> = outcomes.iter().flatten().collect();
        let skipped = grid.reps - done.len();
        let flagged = skipped as f64 > MAX_SKIP_FRACTION * grid.reps as f64 || done.len() < MIN_REPORTED_REPS;
        for (mi, &method) in grid.methods.iter().enumerate() {
            let coverage = grid
                .nominal_levels
                .iter()
                .map(|&nominal| {
                    let a = 1.0 - nominal;
                    let kept = done
                        .iter()
                        .filter(|res| res[mi].decision(a).is_some_and(|d| !d.reject))
                        .count();
                    NominalCoverage {
                        nominal,
                        coverage: if done.is_empty() { f64::NAN } else { kept as f64 / done.len() as f64 },
                    }
                })
                .collect();
            cells.push(CoverageCell {
                n: cell.n,
                p: cell.p,
                a: cell.a,
                level1: cell.l1,
                level2: cell.l2,
                method,
                coverage,
                reps: done.len(),
                skipped,
                seed: grid.master_seed,
                flagged,
            });
        }
    }
    sort_cells(&mut cells);
    Ok(cells)
}

fn sort_cells(cells: &mut [CoverageCell]) {
    cells.sort_by(|x, y| {
        (x.n, x.p)
            .cmp(&(y.n, y.p))
            .then(x.a.total_cmp(&y.a))
            .then(x.method.as_str().cmp(y.method.as_str()))
            .then(x.level1.total_cmp(&y.level1))
            .then(x.level2.total_cmp(&y.level2))
    });
}

/// One line of the coverage CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub n: usize,
    pub p: usize,
    pub a: f64,
    pub level1: f64,
    pub level2: f64,
    pub method: Method,
    pub nominal: f64,
    pub coverage: f64,
    pub reps: usize,
    pub skipped: usize,
    pub seed: u64,
}

pub const CSV_HEADER: [&str; 11] = [
    "n", "p", "a", "level1", "level2", "method", "nominal", "coverage", "reps", "skipped", "seed",
];

/// Flattens cells into rows ordered by `(n, p, a, method)`, then levels and
/// nominal coverage.
pub fn summarize(cells: &[CoverageCell]) -> Vec<CoverageRow> {
    let mut sorted = cells.to_vec();
    sort_cells(&mut sorted);
    sorted
        .iter()
        .flat_map(|c| {
            c.coverage.iter().map(move |nc| CoverageRow {
                n: c.n,
                p: c.p,
                a: c.a,
                level1: c.level1,
                level2: c.level2,
                method: c.method,
                nominal: nc.nominal,
                coverage: nc.coverage,
                reps: c.reps,
                skipped: c.skipped,
                seed: c.seed,
            })
        })
        .collect()
}

pub fn write_csv<W: std::io::Write>(rows: &[CoverageRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<CoverageRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_json<W: std::io::Write>(rows: &[CoverageRow], out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, rows)?;
    Ok(())
}

/// Writes `<stem>.csv` and `<stem>.json` side by side.
pub fn write_summary(cells: &[CoverageCell], stem: &Path) -> Result<()> {
    let rows = summarize(cells);
    write_csv(&rows, std::fs::File::create(stem.with_extension("csv"))?)?;
    let mut f = std::fs::File::create(stem.with_extension("json"))?;
    write_json(&rows, &mut f)?;
    std::io::Write::write_all(&mut f, b"\n")?;
    Ok(())
}

/// `‖τ Σ̃ Σₙ^{1/2}(β̂ − β) − (nα)^{-1/2} Σ ψ_{1−α}(eᵢ) zᵢ‖` with `Σ̃ = I`, `γ ≡ 1`.
pub fn bahadur_gap(
    ctx: &DesignContext,
    beta_hat: &[f64],
    beta: &[f64],
    e: &[f64],
    tau: f64,
    alpha: f64,
) -> Result<f64> {
    let p = ctx.p();
    for (what, len) in [("beta_hat", beta_hat.len()), ("beta", beta.len())] {
        if len != p {
            return Err(Error::DimensionMismatch {
                what,
                expected: p,
                found: len,
            });
        }
    }
    let diff = DVector::from_iterator(p, beta_hat.iter().zip(beta).map(|(u, v)| u - v));
    let sqrt_sigma = crate::linalg::jacobi_eigen(ctx.sigma()).reconstruct_with(|l| l.max(0.0).sqrt());
    let phi_err = sqrt_sigma * diff * tau;
    let linear = bahadur_linear_form(e, &vec![1.0; ctx.n()], ctx, alpha)?;
    Ok((phi_err - linear).norm())
}

/// Median Bahadur gap at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub n: usize,
    pub tau: f64,
    pub median_gap: f64,
    pub gaps: Vec<f64>,
}

/// Intercept-only Fréchet moving maximum, analytic `τₙ`.
pub fn run_bahadur_gap_experiment(
    n_values: &[usize],
    model: &MMProcessSpec,
    reps: usize,
    master_seed: u64,
) -> Result<Vec<GapSummary>> {
    let crate::simgen::MMFamily::FrechetMm { a, kappa } = &model.family else {
        return Err(Error::InvalidParameter(
            "the Bahadur-gap experiment needs a Fréchet moving maximum (analytic tau)".into(),
        ));
    };
    if reps == 0 {
        return Err(Error::InvalidParameter("reps must be positive".into()));
    }
    let alpha = model.alpha;
    n_values
        .iter()
        .map(|&n| {
            let tau = analytic_tau_mm_frechet(n, alpha, *kappa, a)?;
            let ctx = DesignContext::polynomial(n, 1)?;
            let gaps = (0..reps)
                .into_par_iter()
                .map(|rep| {
                    let mut s = rng::stream(master_seed, rng::derive_id(&[GAP_TAG, n as u64, rep as u64]));
                    let e = model.simulate(n, &mut s);
                    let fit = fit_quantile_regression(&ctx, &e, 1.0 - alpha, &SolverConfig::default())?;
                    bahadur_gap(&ctx, &fit.beta_hat, &[0.0], &e, tau, alpha)
                })
                .collect::<Result<Vec<f64>>>()?;
            let mut sorted = gaps.clone();
            sorted.sort_by(|x, y| x.total_cmp(y));
            let m = sorted.len();
            let median = if m % 2 == 1 {
                sorted[m / 2]
            } else {
                0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
            };
            Ok(GapSummary {
                n,
                tau,
                median_gap: median,
                gaps,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_grid() -> ExperimentGrid {
        ExperimentGrid {
            n_values: vec![300],
            p_values: vec![2],
            a_values: vec![0.0],
            level_pairs: vec![(0.9, 0.95)],
            methods: vec![Method::ChisqSameRate, Method::ChisqDiffRate],
            nominal_levels: vec![0.90, 0.95, 0.99],
            reps: 20,
            b: 50,
            master_seed: 9,
            surrogate: SurrogateChoice::FrechetHill,
            taper: None,
        }
    }

    #[test]
    fn grid_validation() {
        let mut g = tiny_grid();
        assert!(g.validate().is_ok());
        g.methods.clear();
        assert!(g.validate().is_err());
        let mut g = tiny_grid();
        g.level_pairs = vec![(0.99, 0.95)];
        assert!(g.validate().is_err());
    }

    #[test]
    fn coverage_is_nested_and_deterministic() {
        let g = tiny_grid();
        let one = run_coverage_experiment(&g, Some(1)).unwrap();
        let two = run_coverage_experiment(&g, Some(2)).unwrap();
        assert_eq!(one, two);
        for c in &one {
            let v: Vec<f64> = c.coverage.iter().map(|x| x.coverage).collect();
            assert!(v.windows(2).all(|w| w[0] <= w[1]), "{v:?}");
            assert!(c.flagged, "20 reps is below the reporting minimum");
        }
    }

    #[test]
    fn csv_round_trip_and_ordering() {
        let cells = run_coverage_experiment(&tiny_grid(), Some(1)).unwrap();
        let rows = summarize(&cells);
        assert_eq!(rows[0].method, Method::ChisqDiffRate);
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);

        let mut empty = Vec::new();
        write_csv(&[], &mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap().trim(), CSV_HEADER.join(","));
    }

    #[test]
    fn grid_parses_from_toml() {
        let text = r#"
            n_values = [1000]
            p_values = [2, 4]
            a_values = [0.0, 1.0]
            level_pairs = [[0.95, 0.99]]
            methods = ["generative", "chisq_same_rate"]
            reps = 200
            B = 100
            master_seed = 1
        "#;
        let g: ExperimentGrid = toml::from_str(text).unwrap();
        assert_eq!(g.nominal_levels, vec![0.90, 0.95, 0.99]);
        assert_eq!(g.b, 100);
        g.validate().unwrap();
    }

    #[test]
    fn gap_is_zero_for_an_exact_linear_case() {
        // Intercept design, half the values exceed zero: with α = 0.5 the
        // linear form is ((1−α)m − α(n−m))/√(nα) = 0, and β̂ = β.
        let ctx = DesignContext::polynomial(20, 1).unwrap();
        let e: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(bahadur_gap(&ctx, &[0.0], &[0.0], &e, 3.0, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn gap_values_do_not_depend_on_rep_count() {
        let model = MMProcessSpec::frechet(vec![1.0, 0.5], 2.0, 0.05).unwrap();
        let short = run_bahadur_gap_experiment(&[500], &model, 4, 3).unwrap();
        let long = run_bahadur_gap_experiment(&[500], &model, 8, 3).unwrap();
        assert_eq!(short[0].gaps[..], long[0].gaps[..4]);
    }
}
