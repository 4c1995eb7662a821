//! Benchmark sweeps over configurations and phantoms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::{dice, seed_counts, SeedCounts};
use crate::eval::phantom::Phantom;
use crate::pipeline::{parse_config, segment, ConfigOverrides, PipelineConfig, StageTimings};
use crate::rng::RNG_ALGORITHM;

pub const REPORT_SCHEMA: u32 = 1;

/// A configuration as written in the config list, possibly unparseable.
#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub label: String,
    pub config: std::result::Result<PipelineConfig, String>,
}

impl BenchConfig {
    pub fn parse(line: &str, overrides: &ConfigOverrides) -> Self {
        BenchConfig {
            label: line.trim().to_string(),
            config: parse_config(line, overrides)
                .and_then(|c| c.validate().map(|_| c))
                .map_err(|e| e.to_string()),
        }
    }
}

/// One pipeline string per line; blank lines and `#` comments are skipped.
/// Bad lines are kept so that they show up as error rows.
pub fn parse_config_list(text: &str, overrides: &ConfigOverrides) -> Vec<BenchConfig> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| BenchConfig::parse(l, overrides))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub config: String,
    pub phantom_index: usize,
    pub phantom: String,
    pub dice: Option<f64>,
    pub fg_seed_error_rate: Option<f64>,
    pub seeds: Option<SeedCounts>,
    pub timings: Option<StageTimings>,
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        };
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        Some(Summary {
            median,
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub config: String,
    pub runs: usize,
    pub failures: usize,
    pub dice: Option<Summary>,
    pub fg_seed_error_rate: Option<Summary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema: u32,
    pub rng: String,
    pub rows: Vec<BenchRow>,
    pub aggregates: Vec<Aggregate>,
}

fn run_row(cfg: &BenchConfig, index: usize, phantom: &Phantom) -> BenchRow {
    let mut row = BenchRow {
        config: cfg.label.clone(),
        phantom_index: index,
        phantom: phantom.descriptor.to_string(),
        dice: None,
        fg_seed_error_rate: None,
        seeds: None,
        timings: None,
        error: None,
    };
    let config = match &cfg.config {
        Ok(c) => c,
        Err(e) => {
            row.error = Some(format!("config: {e}"));
            return row;
        }
    };
    let out = match segment(config, &phantom.grid) {
        Ok(o) => o,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    let scored =
        dice(out.labels.mask(), &phantom.truth).and_then(|d| Ok((d, seed_counts(&out.seeds, &phantom.truth)?)));
    match scored {
        Ok((d, counts)) => {
            row.dice = Some(d);
            row.fg_seed_error_rate = Some(counts.fg_seeds_on_background as f64 / counts.fg_seeds.max(1) as f64);
            row.seeds = Some(counts);
            row.timings = Some(out.timings);
        }
        Err(e) => row.error = Some(format!("metrics: {e}")),
    }
    row
}

fn run_rows(jobs: &[(usize, usize)], configs: &[BenchConfig], phantoms: &[Phantom]) -> Vec<BenchRow> {
    let job = |&(c, p): &(usize, usize)| run_row(&configs[c], p, &phantoms[p]);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        // collect on an indexed iterator keeps job order
        jobs.par_iter().map(job).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        jobs.iter().map(job).collect()
    }
}

/// Runs every config on every phantom. Rows are ordered config-major, then
/// by phantom, whatever the execution order. Failures become error rows.
pub fn run_benchmark(configs: &[BenchConfig], phantoms: &[Phantom]) -> Result<BenchReport> {
    if configs.is_empty() || phantoms.is_empty() {
        return Err(Error::param("benchmark needs at least one config and one phantom"));
    }
    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..phantoms.len()).map(move |p| (c, p)))
        .collect();
    let rows = run_rows(&jobs, configs, phantoms);
    let aggregates = rows
        .chunks(phantoms.len())
        .zip(configs)
        .map(|(group, cfg)| {
            let ok: Vec<&BenchRow> = group.iter().filter(|r| r.error.is_none()).collect();
            let dices: Vec<f64> = ok.iter().filter_map(|r| r.dice).collect();
            let errs: Vec<f64> = ok.iter().filter_map(|r| r.fg_seed_error_rate).collect();
            Aggregate {
                config: cfg.label.clone(),
                runs: group.len(),
                failures: group.len() - ok.len(),
                dice: Summary::of(&dices),
                fg_seed_error_rate: Summary::of(&errs),
            }
        })
        .collect();
    Ok(BenchReport {
        schema: REPORT_SCHEMA,
        rng: RNG_ALGORITHM.to_string(),
        rows,
        aggregates,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Run rows followed by one aggregate row per config, in a single table.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = [
            "kind",
            "config",
            "phantom_index",
            "phantom",
            "dice",
            "fg_seed_error_rate",
            "fg_seeds",
            "fg_seeds_on_background",
            "bg_seeds",
            "bg_seeds_on_object",
            "runtime_ms",
            "dice_median",
            "dice_mean",
            "dice_std",
            "seed_error_median",
            "seed_error_mean",
            "seed_error_std",
            "failures",
            "error",
        ];
        w.write_record(header).expect("in-memory csv");
        for r in &self.rows {
            let s = r.seeds.as_ref();
            let runtime = r
                .timings
                .as_ref()
                .map(|t| t.preprocess_ms + t.seeding_ms + t.refine_ms + t.segmentation_ms);
            let rec = [
                "run".to_string(),
                r.config.clone(),
                r.phantom_index.to_string(),
                r.phantom.clone(),
                opt(r.dice),
                opt(r.fg_seed_error_rate),
                s.map(|c| c.fg_seeds.to_string()).unwrap_or_default(),
                s.map(|c| c.fg_seeds_on_background.to_string()).unwrap_or_default(),
                s.map(|c| c.bg_seeds.to_string()).unwrap_or_default(),
                s.map(|c| c.bg_seeds_on_object.to_string()).unwrap_or_default(),
                opt(runtime),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                r.error.clone().unwrap_or_default(),
            ];
            w.write_record(&rec).expect("in-memory csv");
        }
        for a in &self.aggregates {
            let mut rec = vec!["aggregate".to_string(), a.config.clone()];
            rec.extend(std::iter::repeat_n(String::new(), 9));
            for s in [a.dice, a.fg_seed_error_rate] {
                rec.push(opt(s.map(|s| s.median)));
                rec.push(opt(s.map(|s| s.mean)));
                rec.push(opt(s.map(|s| s.std)));
            }
            rec.push(a.failures.to_string());
            rec.push(String::new());
            w.write_record(&rec).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
    }
}
