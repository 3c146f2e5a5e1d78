//! The validate / run / sweep subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use trustflood::ids::NodeId;
use trustflood::simnet::{SimConfig, World};
use trustflood::trust::{
    overrides_from_text, overrides_to_text, ratings_from_text, ratings_to_text, RatingLedger,
};

use crate::manifest::LoadedManifest;

/// Outcome of the validation pass: one line per check plus a verdict.
pub struct ValidationReport {
    pub lines: Vec<String>,
    pub failures: usize,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.failures == 0
    }
}

/// Loads and cross-checks every fixture the manifest names. Never aborts on
/// the first problem; the report lists each check.
pub fn validate(loaded: &LoadedManifest) -> ValidationReport {
    let mut lines = Vec::new();
    let mut failures = 0;
    let mut check = |name: &str, result: Result<String>| match result {
        Ok(detail) => lines.push(format!("ok: {name}: {detail}")),
        Err(e) => {
            failures += 1;
            lines.push(format!("FAIL: {name}: {e:#}"));
        }
    };

    let taxonomy = loaded.load_taxonomy();
    check(
        "taxonomy",
        taxonomy
            .as_ref()
            .map(|h| format!("{} concepts", h.len()))
            .map_err(|e| anyhow::anyhow!("{e:#}")),
    );
    let meronomy = loaded.load_meronomy();
    check(
        "meronomy",
        meronomy
            .as_ref()
            .map(|h| format!("{} activities", h.len()))
            .map_err(|e| anyhow::anyhow!("{e:#}")),
    );

    check(
        "params",
        (|| {
            let p = &loaded.manifest.params;
            p.similarity.validate().map_err(anyhow::Error::from)?;
            p.trust.validate().map_err(anyhow::Error::from)?;
            p.flood.validate().map_err(anyhow::Error::from)?;
            Ok("similarity, trust and flood parameters in range".to_string())
        })(),
    );

    // World construction validates the graph plus every trust/rating seed.
    let world = (|| -> Result<World> {
        let assets = loaded.load_assets()?;
        Ok(assets.build_world()?)
    })();
    check(
        "graph",
        world
            .as_ref()
            .map(|w| {
                format!(
                    "{} nodes, {} edges",
                    w.graph().node_count(),
                    w.graph().edge_count()
                )
            })
            .map_err(|e| anyhow::anyhow!("{e:#}")),
    );

    check(
        "scenario",
        (|| {
            let scenario = loaded.load_scenario()?;
            let world = world
                .as_ref()
                .map_err(|e| anyhow::anyhow!("graph failed: {e:#}"))?;
            scenario.validate(world.graph(), world.taxonomy(), world.meronomy())?;
            Ok(format!("{} steps", scenario.steps.len()))
        })(),
    );

    if let Some(dir) = &loaded.manifest.ledger_dir {
        check(
            "ledgers",
            (|| {
                let world = world
                    .as_ref()
                    .map_err(|e| anyhow::anyhow!("graph failed: {e:#}"))?;
                let count = read_ledger_dir(&loaded.resolve(dir), world)?.len();
                Ok(format!("{count} persisted ledger files"))
            })(),
        );
    }

    if loaded.manifest.sweep.is_some() {
        check(
            "sweep grid",
            loaded.sweep_grid().map(|(points, dropped)| {
                if dropped > 0 {
                    format!("{} points ({dropped} duplicates dropped)", points.len())
                } else {
                    format!("{} points", points.len())
                }
            }),
        );
    }

    ValidationReport { lines, failures }
}

/// Ratings and overrides parsed from `<node>.ratings` / `<node>.overrides`
/// files in a ledger directory.
fn read_ledger_dir(dir: &Path, world: &World) -> Result<Vec<(NodeId, RatingLedger)>> {
    let mut out = Vec::new();
    if !dir.exists() {
        return Ok(out);
    }
    for node in world.graph().nodes() {
        let ratings_path = dir.join(format!("{node}.ratings"));
        let overrides_path = dir.join(format!("{node}.overrides"));
        if !ratings_path.exists() && !overrides_path.exists() {
            continue;
        }
        let mut ledger = RatingLedger::new(node.clone());
        if ratings_path.exists() {
            let text = fs::read_to_string(&ratings_path)
                .with_context(|| format!("reading {}", ratings_path.display()))?;
            for rating in ratings_from_text(&text, world.taxonomy(), world.meronomy())
                .with_context(|| format!("parsing {}", ratings_path.display()))?
            {
                ledger.insert_shared(rating);
            }
        }
        if overrides_path.exists() {
            let text = fs::read_to_string(&overrides_path)
                .with_context(|| format!("reading {}", overrides_path.display()))?;
            for (counterpart, key, value) in overrides_from_text(&text)
                .with_context(|| format!("parsing {}", overrides_path.display()))?
            {
                ledger.set_override(counterpart, key, value)?;
            }
        }
        out.push((node.clone(), ledger));
    }
    Ok(out)
}

fn write_ledgers(dir: &Path, world: &World) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (node, ledger) in world.ledgers() {
        let ratings = ratings_to_text(ledger, world.taxonomy(), world.meronomy())?;
        fs::write(dir.join(format!("{node}.ratings")), ratings)?;
        let overrides = overrides_to_text(ledger)?;
        fs::write(dir.join(format!("{node}.overrides")), overrides)?;
    }
    Ok(())
}

pub struct RunOptions {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub quiet: bool,
}

fn build_config(loaded: &LoadedManifest, seed: Option<u64>) -> Result<SimConfig> {
    let scenario = loaded.load_scenario()?;
    let mut config = SimConfig::from_scenario(seed.unwrap_or(loaded.manifest.seed), &scenario);
    config.clock_start = trustflood::ids::Timestamp(loaded.manifest.clock_start);
    config.delay = loaded.manifest.delay.clone();
    config.tau_override = loaded.manifest.tau;
    config.hops_override = loaded.manifest.hops;
    Ok(config)
}

fn out_dir(loaded: &LoadedManifest, options: &RunOptions) -> PathBuf {
    options
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(&loaded.manifest.out_dir))
}

/// Executes the scenario and writes trace, metrics (both encodings) and the
/// updated ledgers under the output directory.
pub fn run(loaded: &LoadedManifest, options: &RunOptions) -> Result<Vec<String>> {
    let assets = loaded.load_assets()?;
    let mut world = assets.build_world()?;
    if let Some(dir) = &loaded.manifest.ledger_dir {
        for (node, ledger) in read_ledger_dir(&loaded.resolve(dir), &world)? {
            world.ledgers_mut().insert(node, ledger);
        }
    }

    let config = build_config(loaded, options.seed)?;
    let output = world.run(&config)?;

    let dir = out_dir(loaded, options);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("trace.log"), output.trace_text())?;
    fs::write(dir.join("metrics.tsv"), output.metrics.to_tsv())?;
    fs::write(dir.join("metrics.jsonl"), output.metrics.to_jsonl())?;
    write_ledgers(&dir.join("ledgers"), &world)?;

    let mut summary = Vec::new();
    if output.horizon_exceeded {
        summary.push("warning: horizon exceeded with events still queued".to_string());
    }
    summary.push(format!(
        "delivered: {} HELP, {} NOTNEEDED, {} CANCELLED",
        output.metrics.help_delivered,
        output.metrics.notneeded_delivered,
        output.metrics.cancelled_delivered
    ));
    summary.push(format!(
        "reached {} nodes, {} volunteers, {} re-floods",
        output.metrics.nodes_reached,
        output.metrics.volunteers_count,
        output.metrics.re_flood_events
    ));
    for (state, count) in &output.metrics.terminal_state_census {
        summary.push(format!("final {state}: {count}"));
    }
    summary.push(format!("outputs in {}", dir.display()));
    Ok(summary)
}

const SWEEP_TSV_HEADER: &str = "tau\thops\tsigma\ttnorm";

/// Runs the scenario once per sweep grid point and writes the metrics table.
pub fn sweep(loaded: &LoadedManifest, options: &RunOptions) -> Result<Vec<String>> {
    let (grid, dropped) = loaded.sweep_grid()?;
    let assets = loaded.load_assets()?;
    let base = build_config(loaded, options.seed)?;
    let rows = trustflood::simnet::sweep(&assets, &base, &grid)?;

    let dir = out_dir(loaded, options);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let mut tsv = format!(
        "{SWEEP_TSV_HEADER}\t{}\n",
        trustflood::simnet::Metrics::TSV_HEADER
    );
    let mut jsonl = String::new();
    for (point, metrics) in &rows {
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            point.tau,
            point.hops,
            point.sigma,
            point.tnorm,
            metrics.tsv_row()
        ));
        let record = serde_json::json!({
            "tau": point.tau,
            "hops": point.hops,
            "sigma": point.sigma,
            "tnorm": point.tnorm,
            "metrics": metrics,
        });
        jsonl.push_str(&serde_json::to_string(&record)?);
        jsonl.push('\n');
    }
    fs::write(dir.join("sweep.tsv"), &tsv)?;
    fs::write(dir.join("sweep.jsonl"), &jsonl)?;

    let mut summary = Vec::new();
    if dropped > 0 {
        summary.push(format!("warning: {dropped} duplicate grid points dropped"));
    }
    summary.push(format!(
        "{} sweep rows written to {}",
        rows.len(),
        dir.display()
    ));
    Ok(summary)
}
