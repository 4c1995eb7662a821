use std::fs;
use std::path::Path;

use seedforge_core::eval::{make_phantom, parse_config_list, parse_phantom_list, run_benchmark};
use seedforge_core::ConfigOverrides;

use crate::{exit, Failure};

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new(exit::IO, format!("{}: {e}", path.display())))
}

/// Writes CSV for a `.csv` path, JSON for `.json`, and both (with those
/// extensions added) otherwise.
pub fn bench(
    configs: &Path,
    phantoms: &Path,
    out: Option<&Path>,
    overrides: &ConfigOverrides,
    verbose: bool,
) -> Result<(), Failure> {
    let out = out.ok_or_else(|| Failure::new(exit::USAGE, "bench needs --out <report.csv|report.json>"))?;
    let configs = parse_config_list(&read(configs)?, overrides);
    let descriptors = parse_phantom_list(&read(phantoms)?).map_err(|e| Failure::new(exit::USAGE, e.to_string()))?;
    let phantoms = descriptors
        .iter()
        .map(make_phantom)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::new(exit::USAGE, e.to_string()))?;
    let report = run_benchmark(&configs, &phantoms).map_err(|e| Failure::new(exit::USAGE, e.to_string()))?;

    let targets: Vec<(std::path::PathBuf, String)> = match out.extension().and_then(|e| e.to_str()) {
        Some("csv") => vec![(out.to_path_buf(), report.to_csv())],
        Some("json") => vec![(out.to_path_buf(), report.to_json())],
        _ => vec![
            (out.with_extension("csv"), report.to_csv()),
            (out.with_extension("json"), report.to_json()),
        ],
    };
    for (path, text) in targets {
        fs::write(&path, text).map_err(|e| Failure::new(exit::IO, format!("{}: {e}", path.display())))?;
    }
    if verbose {
        for a in &report.aggregates {
            let med =
                |s: Option<seedforge_core::eval::Summary>| s.map_or("-".to_string(), |s| format!("{:.4}", s.median));
            eprintln!(
                "{:<20} runs {:>3}  failures {:>3}  dice median {}  seed error median {}",
                a.config,
                a.runs,
                a.failures,
                med(a.dice),
                med(a.fg_seed_error_rate)
            );
        }
    }
    Ok(())
}
