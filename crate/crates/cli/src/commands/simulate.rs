//! `cidx simulate`: synthetic group-size trend experiment.

use std::path::Path;

use cidx_core::simulate::{run_simulation, SimulationConfig, TrendReport};
use serde_json::json;

use crate::files::{self, sha256_hex, write_atomic};
use crate::manifest::{InputRecord, OutputRecord, RunManifest};
use crate::{manifest_file_name, write_manifest, CliError, GlobalArgs, Runtime};

pub const TREND_CSV: &str = "trend.csv";
pub const TREND_SUMMARY_TXT: &str = "trend-summary.txt";
pub const TREND_SUMMARY_JSON: &str = "trend-summary.json";

pub fn cmd_simulate(g: &GlobalArgs, config_path: Option<&Path>, rt: &mut Runtime<'_>) -> Result<TrendReport, CliError> {
    let started = crate::manifest::now_rfc3339();
    let (mut config, config_record) = match config_path {
        Some(path) => {
            let text = files::read_to_string(path)?;
            let config = SimulationConfig::parse(&text)?;
            let rec = InputRecord { path: path.display().to_string(), sha256: sha256_hex(text.as_bytes()) };
            (config, Some(rec))
        }
        None => (SimulationConfig::default(), None),
    };
    if let Some(seed) = g.seed {
        config.base_seed = seed;
    }
    if !g.k.is_empty() {
        config.k_values = g.ks();
    }
    config.validate()?;

    let report = run_simulation(&config)?;
    let summary = json!({
        "config": config,
        "hit_rank_assumption": report.hit_rank_assumption,
        "summary": report.summary,
        "monotone": report.monotone,
        "manifest": manifest_file_name("simulate"),
    });
    let mut summary_json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    summary_json.push('\n');
    let outputs = [
        (TREND_CSV, report.to_csv().into_bytes()),
        (TREND_SUMMARY_TXT, report.summary_text().into_bytes()),
        (TREND_SUMMARY_JSON, summary_json.into_bytes()),
    ];

    let mut manifest = RunManifest::new("simulate", started);
    manifest.config = config_record;
    manifest.seeds = report.seeds();
    manifest.k = config.k_values.iter().map(|k| k.get() as u32).collect();
    manifest.settings.insert("effective_config".into(), config.to_toml().into());
    for (name, bytes) in &outputs {
        write_atomic(&g.out_dir.join(name), bytes)?;
        manifest.outputs.push(OutputRecord { path: name.to_string(), sha256: sha256_hex(bytes) });
    }
    write_manifest(manifest, &g.out_dir, "simulate")?;
    rt.say(report.summary_text())?;
    Ok(report)
}
