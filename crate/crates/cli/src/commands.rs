use std::fs;
use std::path::{Path, PathBuf};

use beacon_rewards::aggregate::{
    run_aggregate, AggregateOptions, ExternalSorter, CATEGORY_TOTALS_FILE, DAILY_TABLE,
    EPOCH_TABLE, LIFETIME_FILE,
};
use beacon_rewards::beacon_client::{
    run_collection, BeaconClient, CollectionJob, CollectionSummary, FixtureSource, HttpSource,
    Stream,
};
use beacon_rewards::metrics::{run_metrics, Category, ClampMode, MetricsOptions};
use beacon_rewards::simulator::{simulate_to_dir, SimConfig, WriteOptions};
use beacon_rewards::table::TableError;
use beacon_rewards::validate::{
    crosscheck_daily_totals, crosscheck_validators, load_daily_reference, load_income_reference,
    write_report, RawIncomeIndex,
};
use beacon_rewards::{table, Ether};
use clap::Args;
use serde::Serialize;

use crate::config::{PipelineConfig, UnitRange};
use crate::error::CliError;

pub const SIMULATION_MANIFEST: &str = "simulation.json";

#[derive(Debug, Args)]
pub struct CollectArgs {
    /// Stream to collect; every stream with a configured range when omitted.
    #[arg(long)]
    pub stream: Option<Stream>,
    /// Inclusive slot range `A..B` (proposer and sync_committee streams).
    #[arg(long, value_name = "A..B", conflicts_with = "epochs")]
    pub slots: Option<UnitRange>,
    /// Inclusive epoch range `A..B` (attestation stream).
    #[arg(long, value_name = "A..B")]
    pub epochs: Option<UnitRange>,
    /// Replay responses from `<DIR>/<stream>/<unit>.json` instead of a node.
    #[arg(long, value_name = "DIR", conflicts_with = "endpoint")]
    pub fixtures: Option<PathBuf>,
    /// Node base URL; overrides the config file and BEACON_REWARDS_ENDPOINT.
    #[arg(long, value_name = "URL")]
    pub endpoint: Option<String>,
    /// Output directory for raw CSVs [default: dirs.raw or ./raw].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Units fetched concurrently [default: collect.max_parallel or 4].
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    pub max_parallel: Option<u64>,
    /// Stop after this many units; rerun to resume from the checkpoint.
    #[arg(long, value_name = "N")]
    pub unit_limit: Option<u64>,
    /// Discard any checkpoint and start the range over.
    #[arg(long)]
    pub fresh: bool,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// Directory holding proposer.csv, attestation.csv and sync_committee.csv.
    #[arg(long, value_name = "DIR")]
    pub raw: Option<PathBuf>,
    /// Output directory for tables and manifest.
    #[arg(long, value_name = "DIR")]
    pub tables: Option<PathBuf>,
    /// Records held in memory per sorted run before spilling to disk.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    pub sort_chunk_records: Option<u64>,
    /// Directory for spilled sort runs [default: system temp dir].
    #[arg(long, value_name = "DIR")]
    pub temp_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Aggregated tables directory.
    #[arg(long, value_name = "DIR")]
    pub tables: Option<PathBuf>,
    /// Output directory for indices_daily.csv and plot tables.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// How negative rewards enter the indices: uniform or gini-only.
    #[arg(long, value_name = "MODE")]
    pub clamp: Option<ClampMode>,
    /// Restrict to these categories (repeatable) [default: all].
    #[arg(long = "category", value_name = "NAME")]
    pub categories: Vec<Category>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulator config (TOML or JSON) [default: simulator.config].
    #[arg(long, value_name = "FILE")]
    pub sim_config: Option<PathBuf>,
    /// Output directory [default: dirs.fixtures or ./fixtures].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Initial number of active validators.
    #[arg(long, value_name = "N")]
    pub validators: Option<u64>,
    #[arg(long, value_name = "N")]
    pub added_per_epoch: Option<u64>,
    #[arg(long, value_name = "N")]
    pub epochs: Option<u64>,
    /// Skip the per-unit JSON response bodies.
    #[arg(long)]
    pub no_fixtures: bool,
    /// Skip the raw CSV streams.
    #[arg(long)]
    pub no_raw: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Raw stream directory (per-validator checks).
    #[arg(long, value_name = "DIR")]
    pub raw: Option<PathBuf>,
    /// Aggregated tables directory (daily checks).
    #[arg(long, value_name = "DIR")]
    pub tables: Option<PathBuf>,
    /// Income-detail reference: API-shaped JSON or CSV.
    #[arg(long = "ref", value_name = "FILE")]
    pub income_ref: Option<PathBuf>,
    /// Daily total income reference: CSV or JSON with date,total_income_ether.
    #[arg(long, value_name = "FILE")]
    pub daily_ref: Option<PathBuf>,
    /// Allowed absolute difference per income field.
    #[arg(
        long,
        value_name = "GWEI",
        default_value_t = 0,
        allow_negative_numbers = false
    )]
    pub tolerance_gwei: i64,
    /// Allowed relative difference of daily totals.
    #[arg(long, value_name = "FRACTION", default_value_t = 0.01)]
    pub rel_tolerance: f64,
    /// Where reports are written [default: dirs.reports or ./reports].
    #[arg(long, value_name = "DIR")]
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// epoch_rewards, daily_rewards, daily_category_totals or
    /// validator_lifetime_totals.
    #[arg(long, value_name = "NAME")]
    pub table: String,
    #[arg(long, value_name = "DIR")]
    pub tables: Option<PathBuf>,
    /// Output CSV file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

fn stream_range(config: &PipelineConfig, stream: Stream) -> Option<UnitRange> {
    match stream {
        Stream::Proposer => config.collect.proposer,
        Stream::Attestation => config.collect.attestation,
        Stream::SyncCommittee => config.collect.sync_committee,
    }
}

fn client(config: &PipelineConfig, args: &CollectArgs) -> Result<BeaconClient, CliError> {
    if let Some(dir) = &args.fixtures {
        return Ok(BeaconClient::new(FixtureSource::new(dir), config.chain));
    }
    if let Some(url) = args.endpoint.clone().or_else(|| config.endpoint()) {
        return Ok(BeaconClient::new(
            HttpSource::new(&url, PipelineConfig::token()),
            config.chain,
        ));
    }
    if let Some(dir) = &config.dirs.fixtures {
        return Ok(BeaconClient::new(FixtureSource::new(dir), config.chain));
    }
    Err(CliError::Config(
        "no data source: pass --fixtures or --endpoint, set BEACON_REWARDS_ENDPOINT, or configure endpoint.base_url"
            .into(),
    ))
}

pub fn collect(config: &PipelineConfig, args: CollectArgs) -> Result<(), CliError> {
    let mut jobs: Vec<(Stream, UnitRange)> = Vec::new();
    match args.stream {
        Some(stream) => {
            let flag = match stream {
                Stream::Attestation => {
                    if args.slots.is_some() {
                        return Err(CliError::Config(
                            "the attestation stream is indexed by epoch; use --epochs".into(),
                        ));
                    }
                    args.epochs
                }
                _ => {
                    if args.epochs.is_some() {
                        return Err(CliError::Config(format!(
                            "the {stream} stream is indexed by slot; use --slots"
                        )));
                    }
                    args.slots
                }
            };
            let range = flag.or_else(|| stream_range(config, stream)).ok_or_else(|| {
                CliError::Config(format!("no range given for {stream}: pass --slots/--epochs or set collect.{stream}"))
            })?;
            jobs.push((stream, range));
        }
        None => {
            if args.slots.is_some() || args.epochs.is_some() {
                return Err(CliError::Config("--slots/--epochs need --stream".into()));
            }
            jobs.extend(
                Stream::ALL
                    .into_iter()
                    .filter_map(|s| stream_range(config, s).map(|r| (s, r))),
            );
            if jobs.is_empty() {
                return Err(CliError::Config(
                    "nothing to collect: pass --stream or configure collect ranges".into(),
                ));
            }
        }
    }

    let client = client(config, &args)?;
    let out = args.out.clone().unwrap_or_else(|| config.raw_dir());
    let max_parallel = args
        .max_parallel
        .map(|n| n as usize)
        .or(config.collect.max_parallel)
        .unwrap_or(4);
    let mut errors = 0;
    for (stream, range) in jobs {
        let mut job = CollectionJob::new(stream, range.start, range.end, &out);
        job.max_parallel = max_parallel;
        job.unit_limit = args.unit_limit;
        if args.fresh && job.checkpoint_path.exists() {
            fs::remove_file(&job.checkpoint_path)
                .map_err(|e| CliError::Io(format!("{}: {e}", job.checkpoint_path.display())))?;
        }
        let s: CollectionSummary = run_collection(&client, &job)?;
        log::info!(
            "{stream} {range}: {} units ok, {} missed, {} error, {} records, {} warnings ({} of {} units done)",
            s.units_ok,
            s.units_missed,
            s.units_error,
            s.records_written,
            s.warnings,
            s.units_total(),
            range.len()
        );
        errors += s.units_error;
    }
    if errors > 0 {
        return Err(CliError::Data(format!(
            "{errors} units failed; see the missed_<stream>.csv sidecars"
        )));
    }
    Ok(())
}

pub fn aggregate(config: &PipelineConfig, args: AggregateArgs) -> Result<(), CliError> {
    let raw = args.raw.unwrap_or_else(|| config.raw_dir());
    let tables = args.tables.unwrap_or_else(|| config.tables_dir());
    let mut sorter = match args.sort_chunk_records {
        Some(n) => ExternalSorter::with_chunk_records(n as usize),
        None => ExternalSorter::default(),
    };
    sorter.temp_dir = args.temp_dir;
    let report = run_aggregate(&raw, &tables, &config.chain, &AggregateOptions { sorter })?;
    let v = &report.manifest.violations;
    log::info!(
        "{} raw records -> {} epoch rows, {} daily rows over {} dates; {} Gwei conserved",
        report.manifest.raw_records,
        report.epoch_rows,
        report.daily_rows,
        report.dates.len(),
        report.manifest.sums.raw
    );
    if v.proposer + v.attestation + v.sync_committee > 0 {
        log::warn!(
            "records breaking a schema rule: proposer {}, attestation {}, sync_committee {}",
            v.proposer,
            v.attestation,
            v.sync_committee
        );
    }
    Ok(())
}

pub fn metrics(config: &PipelineConfig, args: MetricsArgs) -> Result<(), CliError> {
    let tables = args.tables.unwrap_or_else(|| config.tables_dir());
    let out = args.out.unwrap_or_else(|| config.indices_dir());
    let mut options = MetricsOptions {
        clamp: args.clamp.or(config.metrics.clamp).unwrap_or_default(),
        ..MetricsOptions::default()
    };
    if !args.categories.is_empty() {
        let mut cats = args.categories;
        cats.sort();
        cats.dedup();
        options.categories = cats;
    }
    let report = run_metrics(&tables, &out, &options)?;
    log::info!(
        "{} index points ({} clamp) written to {}",
        report.points.len(),
        options.clamp.as_str(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SimulationManifest<'a> {
    config: &'a SimConfig,
    slots: String,
    epochs: String,
    proposer_records: u64,
    attestation_records: u64,
    sync_committee_records: u64,
    ledger_rows: u64,
    ledger_total_gwei: String,
    warnings: &'a [String],
}

pub fn simulate(config: &PipelineConfig, args: SimulateArgs) -> Result<(), CliError> {
    let file = args.sim_config.or_else(|| config.simulator.config.clone());
    let mut sim = match &file {
        Some(path) => {
            let sim = SimConfig::load(path)?;
            if sim.spec != config.chain {
                log::warn!(
                    "{} uses a different chain spec than the pipeline config",
                    path.display()
                );
            }
            sim
        }
        None => SimConfig {
            spec: config.chain,
            ..SimConfig::default()
        },
    };
    if let Some(v) = args.seed {
        sim.rng_seed = v;
    }
    if let Some(v) = args.validators {
        sim.initial_validators = v;
    }
    if let Some(v) = args.added_per_epoch {
        sim.validators_added_per_epoch = v;
    }
    if let Some(v) = args.epochs {
        sim.epochs = v;
    }
    sim.validate()?;
    let out = args.out.unwrap_or_else(|| config.fixtures_dir());
    let options = WriteOptions {
        raw: !args.no_raw,
        fixtures: !args.no_fixtures,
    };
    let summary = simulate_to_dir(&sim, &out, options)?;
    let last_slot = sim.epochs * sim.spec.slots_per_epoch - 1;
    let manifest = SimulationManifest {
        config: &sim,
        slots: format!("0..{last_slot}"),
        epochs: format!("0..{}", sim.epochs - 1),
        proposer_records: summary.proposer_records,
        attestation_records: summary.attestation_records,
        sync_committee_records: summary.sync_committee_records,
        ledger_rows: summary.ledger_rows,
        ledger_total_gwei: summary.ledger_total.to_string(),
        warnings: &summary.warnings,
    };
    let path = out.join(SIMULATION_MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    log::info!(
        "simulated {} epochs (slots 0..{last_slot}) into {}: {} attestation, {} sync, {} proposer records",
        sim.epochs,
        out.display(),
        summary.attestation_records,
        summary.sync_committee_records,
        summary.proposer_records
    );
    Ok(())
}

pub fn validate(config: &PipelineConfig, args: ValidateArgs) -> Result<(), CliError> {
    if args.income_ref.is_none() && args.daily_ref.is_none() {
        return Err(CliError::Config(
            "nothing to validate: pass --ref and/or --daily-ref".into(),
        ));
    }
    if args.tolerance_gwei < 0 {
        return Err(CliError::Config(
            "--tolerance-gwei must not be negative".into(),
        ));
    }
    if !(args.rel_tolerance.is_finite() && args.rel_tolerance >= 0.0) {
        return Err(CliError::Config(
            "--rel-tolerance must be a non-negative number".into(),
        ));
    }
    let reports = args.reports.unwrap_or_else(|| config.reports_dir());
    let mut ok = true;

    if let Some(path) = &args.income_ref {
        let raw = args.raw.clone().unwrap_or_else(|| config.raw_dir());
        let refs = load_income_reference(path)?;
        let keys = refs.iter().map(|r| (r.epoch, r.validator_index)).collect();
        let index = RawIncomeIndex::load(&raw, &keys)?;
        let report = crosscheck_validators(&index, &refs, args.tolerance_gwei);
        let text = report.to_text();
        write_report(&reports, "validator_income", &report, &text)?;
        eprint!("{text}");
        ok &= report.all_passed();
    }

    if let Some(path) = &args.daily_ref {
        let tables = args.tables.clone().unwrap_or_else(|| config.tables_dir());
        let refs = load_daily_reference(path)?;
        let ours = table::read_all(&tables.join(CATEGORY_TOTALS_FILE))?;
        let report = crosscheck_daily_totals(&ours, &refs, args.rel_tolerance)?;
        let text = report.to_text();
        write_report(&reports, "daily_totals", &report, &text)?;
        eprint!("{text}");
        ok &= report.all_passed();
    }

    if ok {
        Ok(())
    } else {
        Err(CliError::Data(format!(
            "crosscheck found differences; reports in {}",
            reports.display()
        )))
    }
}

/// Columns that hold identifiers or counts rather than Gwei amounts.
const NON_AMOUNT_COLUMNS: &[&str] = &[
    "validator_index",
    "epoch",
    "slot",
    "date",
    "active_validators",
];

fn export_file(
    path: &Path,
    writer: &mut csv::Writer<fs::File>,
    write_header: bool,
) -> Result<(), CliError> {
    let csv_err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => CliError::Io(format!("{}: {e}", path.display())),
        _ => CliError::Data(format!("{}: {e}", path.display())),
    })?;
    let header = reader.headers().map_err(csv_err)?.clone();
    let amount: Vec<bool> = header
        .iter()
        .map(|h| !NON_AMOUNT_COLUMNS.contains(&h))
        .collect();
    if write_header {
        writer.write_record(&header).map_err(csv_err)?;
    }
    for row in reader.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map_or(0, |p| p.line());
        let mut out = Vec::with_capacity(row.len());
        for (field, is_amount) in row.iter().zip(&amount) {
            if *is_amount {
                let g: i64 = field.parse().map_err(|e| {
                    CliError::Data(format!("{}:{line}: amount {field:?}: {e}", path.display()))
                })?;
                out.push(Ether(g).to_string());
            } else {
                out.push(field.to_string());
            }
        }
        writer.write_record(&out).map_err(csv_err)?;
    }
    Ok(())
}

pub fn export(config: &PipelineConfig, args: ExportArgs) -> Result<(), CliError> {
    let tables = args.tables.unwrap_or_else(|| config.tables_dir());
    let inputs: Vec<PathBuf> = match args.table.as_str() {
        EPOCH_TABLE | DAILY_TABLE => {
            let dir = tables.join(&args.table);
            let mut files: Vec<PathBuf> = fs::read_dir(&dir)
                .map_err(|e| CliError::from(TableError::io(&dir, e)))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            files.sort();
            files
        }
        "daily_category_totals" => vec![tables.join(CATEGORY_TOTALS_FILE)],
        "validator_lifetime_totals" => vec![tables.join(LIFETIME_FILE)],
        other => {
            return Err(CliError::Config(format!(
                "unknown table {other:?} (expected {EPOCH_TABLE}, {DAILY_TABLE}, daily_category_totals or validator_lifetime_totals)"
            )))
        }
    };
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
    }
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(&args.out)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.out.display())))?;
    for (i, path) in inputs.iter().enumerate() {
        export_file(path, &mut writer, i == 0)?;
    }
    writer
        .flush()
        .map_err(|e| CliError::Io(format!("{}: {e}", args.out.display())))?;
    log::info!("{} exported in Ether to {}", args.table, args.out.display());
    Ok(())
}
