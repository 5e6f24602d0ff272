//! Three-run benchmark protocol, grid orchestration and CSV aggregation.
//!
//! Each instance is solved three ways: (A) exactly, (B) by an LP-driven
//! sparsifier followed by an exact solve of the queried items, and (C)
//! exactly under a wall-clock budget equal to B's end-to-end time.

use std::io::{Read, Write};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gen::{generate, GridPoint};
use crate::instance::GapInstance;
use crate::solvers::{gap_exact_with, Budget, ExactOptions, SolveStatus, TieBreak};
use crate::sparsifier::{lp_driven_params, sparsify_gap};
use crate::stats::{mean, median, quantile_sorted};

pub const SCHEMA_VERSION: u32 = 1;

/// Columns that depend on wall-clock time and differ between runs.
pub const TIME_COLUMNS: [&str; 5] = ["t_full_s", "t_sparse_s", "opt_full_cut", "speedup", "etr"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Optimal,
    /// Method A or B ran out of budget; excluded from aggregates.
    Incomplete,
    Error,
}

/// One CSV row. Field order is the column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub schema_version: u32,
    pub instance_id: String,
    pub n: usize,
    pub m: usize,
    pub rho: f64,
    pub redundancy_target: f64,
    pub value_marginal: String,
    pub weight_marginal: String,
    pub seed: u64,
    pub opt_full: f64,
    pub t_full_s: f64,
    pub opt_sparse: f64,
    pub t_sparse_s: f64,
    pub opt_full_cut: f64,
    pub approx_ratio: f64,
    pub speedup: f64,
    /// `inf` when method C found nothing.
    pub etr: f64,
    pub redundancy_realized: f64,
    pub query_size: usize,
    pub lp_degree_bound: f64,
    pub status: RowStatus,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchConfig {
    /// Limit for methods A and B. A node limit keeps rows reproducible.
    pub budget: Budget,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            budget: Budget::nodes(50_000_000),
        }
    }
}

/// Raw outcome of the three runs on one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ThreeRuns {
    pub opt_full: f64,
    pub full_items: usize,
    pub full_status: SolveStatus,
    pub t_full: Duration,
    pub opt_sparse: f64,
    pub sparse_status: SolveStatus,
    pub t_sparse: Duration,
    pub opt_full_cut: f64,
    pub query_size: usize,
    pub lp_degree_bound: f64,
}

const FIRST_FOUND: ExactOptions = ExactOptions {
    tie_break: TieBreak::FirstFound,
};

pub fn run_three(inst: &GapInstance, cfg: &BenchConfig) -> Result<ThreeRuns> {
    let start = Instant::now();
    let full = gap_exact_with(inst, &cfg.budget, FIRST_FOUND);
    let t_full = start.elapsed();

    let start = Instant::now();
    let params = lp_driven_params(inst)?;
    let query = sparsify_gap(inst, &params)?;
    let (sub, _) = inst.restrict(&query.query);
    let sparse = gap_exact_with(&sub, &cfg.budget, FIRST_FOUND);
    let t_sparse = start.elapsed();

    let cut = gap_exact_with(inst, &Budget::time(t_sparse), FIRST_FOUND);

    Ok(ThreeRuns {
        opt_full: full.value,
        full_items: full.assignment.len(),
        full_status: full.status,
        t_full,
        opt_sparse: sparse.value,
        sparse_status: sparse.status,
        t_sparse,
        opt_full_cut: cut.value,
        query_size: query.query.len(),
        lp_degree_bound: query.lp_degree_bound,
    })
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        a / b
    }
}

impl ExperimentRecord {
    fn echo(point: &GridPoint) -> Self {
        let p = &point.params;
        ExperimentRecord {
            schema_version: SCHEMA_VERSION,
            instance_id: point.instance_id.clone(),
            n: p.n,
            m: p.m,
            rho: p.rho,
            redundancy_target: p.redundancy_target,
            value_marginal: p.value_marginal.to_string(),
            weight_marginal: p.weight_marginal.to_string(),
            seed: p.seed,
            opt_full: f64::NAN,
            t_full_s: f64::NAN,
            opt_sparse: f64::NAN,
            t_sparse_s: f64::NAN,
            opt_full_cut: f64::NAN,
            approx_ratio: f64::NAN,
            speedup: f64::NAN,
            etr: f64::NAN,
            redundancy_realized: f64::NAN,
            query_size: 0,
            lp_degree_bound: f64::NAN,
            status: RowStatus::Error,
        }
    }

    pub fn from_runs(point: &GridPoint, runs: &ThreeRuns) -> Self {
        let complete =
            runs.full_status != SolveStatus::BudgetExceeded && runs.sparse_status != SolveStatus::BudgetExceeded;
        let t_full = runs.t_full.as_secs_f64();
        let t_sparse = runs.t_sparse.as_secs_f64();
        ExperimentRecord {
            opt_full: runs.opt_full,
            t_full_s: t_full,
            opt_sparse: runs.opt_sparse,
            t_sparse_s: t_sparse,
            opt_full_cut: runs.opt_full_cut,
            approx_ratio: ratio(runs.opt_sparse, runs.opt_full),
            speedup: t_full / t_sparse.max(1e-9),
            etr: if runs.opt_full_cut == 0.0 {
                f64::INFINITY
            } else {
                runs.opt_sparse / runs.opt_full_cut
            },
            redundancy_realized: ratio(point.params.n as f64, runs.full_items as f64),
            query_size: runs.query_size,
            lp_degree_bound: runs.lp_degree_bound,
            status: if complete {
                RowStatus::Optimal
            } else {
                RowStatus::Incomplete
            },
            ..Self::echo(point)
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == RowStatus::Optimal
    }
}

/// Generates and benchmarks one grid point. Failures become `error` rows.
pub fn run_point(point: &GridPoint, cfg: &BenchConfig) -> ExperimentRecord {
    let outcome = generate(&point.params).and_then(|inst| run_three(&inst, cfg));
    match outcome {
        Ok(runs) => ExperimentRecord::from_runs(point, &runs),
        Err(e) => {
            log::warn!("{}: {e}", point.instance_id);
            ExperimentRecord::echo(point)
        }
    }
}

/// Runs every point on the current rayon pool and writes rows in grid order.
pub fn run_grid<W: Write>(points: &[GridPoint], cfg: &BenchConfig, out: W) -> Result<Vec<ExperimentRecord>> {
    let records: Vec<ExperimentRecord> = points
        .par_iter()
        .map(|p| {
            let r = run_point(p, cfg);
            log::info!("{} {:?}", p.instance_id, r.status);
            r
        })
        .collect();
    write_records(out, &records)?;
    Ok(records)
}

pub fn write_records<W: Write>(out: W, records: &[ExperimentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<ExperimentRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for r in rd.deserialize() {
        out.push(r?);
    }
    Ok(out)
}

/// Blanks the time-dependent columns of a CSV so two runs can be compared.
pub fn strip_time_columns(csv_text: &str) -> Result<String> {
    let mut rd = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = rd.headers()?.clone();
    let drop: Vec<bool> = headers.iter().map(|h| TIME_COLUMNS.contains(&h)).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&headers)?;
    for rec in rd.records() {
        let rec = rec?;
        w.write_record(rec.iter().zip(&drop).map(|(f, &d)| if d { "" } else { f }))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub label: String,
    pub rows: usize,
    pub mean_approx_ratio: f64,
    pub mean_speedup: f64,
    pub median_speedup: f64,
    /// Mean over rows with a finite ETR.
    pub mean_etr: f64,
    pub etr_infinite: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RollingPoint {
    pub redundancy: f64,
    pub speedup: f64,
    pub rolling_median: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtrBin {
    pub log10_lower: f64,
    pub log10_upper: f64,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: usize,
    /// Rows left out because they are not `optimal`.
    pub excluded: usize,
    pub overall: AggregateRow,
    pub slice: AggregateRow,
    pub rolling: Vec<RollingPoint>,
    pub etr_bins: Vec<EtrBin>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggregateOptions {
    /// Rolling median window; `None` uses `min(501, rows)`.
    pub window: Option<usize>,
    pub etr_bins: usize,
    /// Largest redundancy shown in the ETR summary.
    pub etr_max_redundancy: f64,
}

impl Default for AggregateOptions {
    fn default() -> Self {
        AggregateOptions {
            window: None,
            etr_bins: 10,
            etr_max_redundancy: 50.0,
        }
    }
}

/// Rows of the headline slice: realized redundancy above 4, several
/// knapsacks, more than 1000 items.
pub fn in_headline_slice(r: &ExperimentRecord) -> bool {
    r.redundancy_realized > 4.0 && r.m > 1 && r.n > 1000
}

pub fn aggregate_rows(label: &str, rows: &[&ExperimentRecord]) -> AggregateRow {
    let ratios: Vec<f64> = rows.iter().map(|r| r.approx_ratio).collect();
    let speedups: Vec<f64> = rows.iter().map(|r| r.speedup).collect();
    let etrs: Vec<f64> = rows.iter().map(|r| r.etr).filter(|e| e.is_finite()).collect();
    let or_nan = |v: &[f64], f: fn(&[f64]) -> f64| if v.is_empty() { f64::NAN } else { f(v) };
    AggregateRow {
        label: label.to_owned(),
        rows: rows.len(),
        mean_approx_ratio: or_nan(&ratios, mean),
        mean_speedup: or_nan(&speedups, mean),
        median_speedup: or_nan(&speedups, median),
        mean_etr: or_nan(&etrs, mean),
        etr_infinite: rows.iter().filter(|r| r.etr.is_infinite()).count(),
    }
}

/// Median speedup over optimal rows matching `filter`.
pub fn median_speedup(records: &[ExperimentRecord], filter: impl Fn(&ExperimentRecord) -> bool) -> Option<f64> {
    let v: Vec<f64> = records
        .iter()
        .filter(|r| r.is_optimal() && filter(r))
        .map(|r| r.speedup)
        .collect();
    (!v.is_empty()).then(|| median(&v))
}

/// Centered rolling median of `ys`; the window shrinks at the ends.
pub fn rolling_median(ys: &[f64], window: usize) -> Vec<f64> {
    let half = window.max(1) / 2;
    (0..ys.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(ys.len());
            median(&ys[lo..hi])
        })
        .collect()
}

/// Summaries of ETR in equal-width bins of log10(redundancy).
pub fn etr_bins(points: &[(f64, f64)], bins: usize) -> Vec<EtrBin> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(r, e)| *r > 0.0 && r.is_finite() && e.is_finite())
        .map(|&(r, e)| (r.log10(), e))
        .collect();
    if pts.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut groups = vec![Vec::new(); bins];
    for &(x, e) in &pts {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        groups[b].push(e);
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(b, mut g)| {
            g.sort_by(f64::total_cmp);
            let stat = |q: f64| if g.is_empty() { f64::NAN } else { quantile_sorted(&g, q) };
            EtrBin {
                log10_lower: lo + b as f64 * width,
                log10_upper: lo + (b + 1) as f64 * width,
                count: g.len(),
                mean: if g.is_empty() { f64::NAN } else { mean(&g) },
                median: stat(0.5),
                q1: stat(0.25),
                q3: stat(0.75),
            }
        })
        .collect()
}

pub fn aggregate(records: &[ExperimentRecord], opts: &AggregateOptions) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::InvalidInstance("benchmark CSV has no rows".into()));
    }
    let ok: Vec<&ExperimentRecord> = records.iter().filter(|r| r.is_optimal()).collect();
    let slice: Vec<&ExperimentRecord> = ok.iter().copied().filter(|r| in_headline_slice(r)).collect();

    let mut by_r: Vec<&ExperimentRecord> = ok.iter().copied().filter(|r| r.speedup.is_finite()).collect();
    by_r.sort_by(|a, b| a.redundancy_realized.total_cmp(&b.redundancy_realized));
    let window = opts.window.unwrap_or(501).min(by_r.len()).max(1);
    let speeds: Vec<f64> = by_r.iter().map(|r| r.speedup).collect();
    let rolling = rolling_median(&speeds, window)
        .into_iter()
        .zip(&by_r)
        .map(|(med, r)| RollingPoint {
            redundancy: r.redundancy_realized,
            speedup: r.speedup,
            rolling_median: med,
        })
        .collect();

    let etr_points: Vec<(f64, f64)> = ok
        .iter()
        .filter(|r| r.redundancy_realized <= opts.etr_max_redundancy)
        .map(|r| (r.redundancy_realized, r.etr))
        .collect();

    Ok(Summary {
        rows: records.len(),
        excluded: records.len() - ok.len(),
        overall: aggregate_rows("all", &ok),
        slice: aggregate_rows("r>4,m>1,n>1000", &slice),
        rolling,
        etr_bins: etr_bins(&etr_points, opts.etr_bins),
    })
}

pub fn write_rolling_csv<W: Write>(out: W, points: &[RollingPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_etr_bins_csv<W: Write>(out: W, bins: &[EtrBin]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for b in bins {
        w.serialize(b)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::GenParams;

    fn record(id: usize, n: usize, m: usize, r: f64, speedup: f64, etr: f64) -> ExperimentRecord {
        let point = GridPoint {
            instance_id: format!("row{id}"),
            params: GenParams::new(n, m, 0.0, r, id as u64),
        };
        ExperimentRecord {
            opt_full: 10.0,
            opt_sparse: 9.9,
            opt_full_cut: 9.0,
            approx_ratio: 0.99,
            speedup,
            etr,
            redundancy_realized: r,
            t_full_s: speedup,
            t_sparse_s: 1.0,
            query_size: n / 2,
            lp_degree_bound: 1.0,
            status: RowStatus::Optimal,
            ..ExperimentRecord::echo(&point)
        }
    }

    #[test]
    fn header_has_the_fixed_column_order() {
        let mut buf = Vec::new();
        write_records(&mut buf, &[record(0, 10, 1, 2.0, 1.0, 1.0)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "schema_version,instance_id,n,m,rho,redundancy_target,value_marginal,weight_marginal,seed,opt_full,t_full_s,opt_sparse,t_sparse_s,opt_full_cut,approx_ratio,speedup,etr,redundancy_realized,query_size,lp_degree_bound,status"
        );
    }

    #[test]
    fn csv_round_trip_keeps_inf_and_nan() {
        let mut a = record(0, 10, 1, 2.0, 1.5, f64::INFINITY);
        a.status = RowStatus::Incomplete;
        let b = ExperimentRecord::echo(&GridPoint {
            instance_id: "bad".into(),
            params: GenParams::new(5, 1, 0.0, 2.0, 1),
        });
        let mut buf = Vec::new();
        write_records(&mut buf, &[a.clone(), b]).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().contains(",inf,"));
        let back = read_records(buf.as_slice()).unwrap();
        assert_eq!(back[0], a);
        assert!(back[1].opt_full.is_nan());
        assert_eq!(back[1].status, RowStatus::Error);
    }

    #[test]
    fn constant_speedup_has_constant_rolling_median() {
        let rows: Vec<ExperimentRecord> = (0..40).map(|i| record(i, 100, 1, 1.0 + i as f64, 2.5, 1.0)).collect();
        let s = aggregate(&rows, &AggregateOptions::default()).unwrap();
        assert_eq!(s.rolling.len(), 40);
        assert!(s.rolling.iter().all(|p| p.rolling_median == 2.5));
    }

    #[test]
    fn rolling_median_window() {
        let ys = [1.0, 5.0, 2.0, 8.0, 3.0];
        assert_eq!(rolling_median(&ys, 3), vec![3.0, 2.0, 5.0, 3.0, 5.5]);
        assert_eq!(rolling_median(&ys, 1), ys.to_vec());
    }

    #[test]
    fn two_bins_match_hand_medians() {
        // Redundancy 1..=5 lands in the low bin, 10..=50 in the high one
        // (log10 range [0, 1.699], split at 0.849).
        let pts = [
            (1.0, 1.0),
            (2.0, 3.0),
            (3.0, 2.0),
            (4.0, 5.0),
            (5.0, 4.0),
            (10.0, 10.0),
            (20.0, 30.0),
            (30.0, 20.0),
            (40.0, 40.0),
            (50.0, 60.0),
        ];
        let bins = etr_bins(&pts, 2);
        assert_eq!(bins.len(), 2);
        assert_eq!((bins[0].count, bins[0].median, bins[0].mean), (5, 3.0, 3.0));
        assert_eq!((bins[0].q1, bins[0].q3), (2.0, 4.0));
        assert_eq!((bins[1].count, bins[1].median, bins[1].mean), (5, 30.0, 32.0));
    }

    #[test]
    fn slice_filter_and_infinite_etr() {
        let mut rows = vec![
            record(0, 2000, 2, 5.0, 4.0, 2.0),
            record(1, 2000, 5, 8.0, 6.0, f64::INFINITY),
            record(2, 5000, 2, 4.5, 8.0, 4.0),
            record(3, 1000, 2, 8.0, 1.0, 1.0),
            record(4, 2000, 1, 8.0, 1.0, 1.0),
            record(5, 2000, 2, 4.0, 1.0, 1.0),
        ];
        rows.push(ExperimentRecord {
            status: RowStatus::Incomplete,
            ..record(6, 2000, 2, 9.0, 100.0, 1.0)
        });
        let s = aggregate(&rows, &AggregateOptions::default()).unwrap();
        assert_eq!(s.excluded, 1);
        assert_eq!(s.slice.rows, 3);
        assert_eq!(s.slice.mean_speedup, 6.0);
        assert_eq!(s.slice.mean_etr, 3.0);
        assert_eq!(s.slice.etr_infinite, 1);
        assert_eq!(s.overall.rows, 6);
        assert!(aggregate(&[], &AggregateOptions::default()).is_err());
    }

    #[test]
    fn strip_blanks_only_time_columns() {
        let mut a = Vec::new();
        write_records(&mut a, &[record(0, 10, 1, 2.0, 1.0, 1.0)]).unwrap();
        let mut b = Vec::new();
        write_records(&mut b, &[record(0, 10, 1, 2.0, 7.0, 3.0)]).unwrap();
        assert_ne!(a, b);
        let sa = strip_time_columns(std::str::from_utf8(&a).unwrap()).unwrap();
        let sb = strip_time_columns(std::str::from_utf8(&b).unwrap()).unwrap();
        assert_eq!(sa, sb);
    }

    #[test]
    fn small_grid_runs_end_to_end() {
        let grid = crate::gen::GridSpec {
            ns: vec![30],
            ms: vec![1, 2],
            rhos: vec![0.0],
            redundancy_targets: vec![4.0],
            marginals: vec![(crate::gen::VALUE_UNIFORM, crate::gen::WEIGHT_UNIFORM)],
            replicates: 2,
        };
        let points = grid.expand(9);
        let mut buf = Vec::new();
        let rows = run_grid(&points, &BenchConfig::default(), &mut buf).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert_eq!(r.status, RowStatus::Optimal, "{r:?}");
            assert!(r.approx_ratio <= 1.0 + 1e-12);
            assert!(r.opt_full_cut <= r.opt_full + 1e-9);
            assert!(r.redundancy_realized >= 1.0);
        }
        assert_eq!(read_records(buf.as_slice()).unwrap().len(), 4);
    }
}
