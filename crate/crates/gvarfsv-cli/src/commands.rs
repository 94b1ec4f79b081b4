//! The five subcommands, each deterministic given (config, seed).

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use gvarfsv::data::{
    build_weights, default_column_ids, load_panel, read_flow_cube_csv, read_series_csv,
    write_series_csv, Month, WeightKind,
};
use gvarfsv::exec::with_workers;
use gvarfsv::gibbs::{
    read_draw_store, write_draw_store, Chain, DrawManifest, RetainedDraw,
};
use gvarfsv::ident::{identify_covariances, IdentifiedDraw, RestrictionTable};
use gvarfsv::irf::{
    irf_for_draws, rescale_to_units, summarize, write_irf_csv, write_irf_meta, IrfMeta,
};
use gvarfsv::model::WeightMatrix;
use gvarfsv::rng::{derive_rng, Stream};
use gvarfsv::sim::{simulate_panel, synthetic_truth, TruthParams};

use crate::config::{DataSection, RunConfig};
use crate::errors::CliError;

fn hex32(digest: &[u8; 32]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(format!("cannot encode {}: {e}", path.display())))?;
    std::fs::write(path, body.as_bytes())
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

/// Builds the weight matrix from the configured flow files.
pub fn load_weights(data: &DataSection) -> Result<WeightMatrix, CliError> {
    let (_, _, gdp) = read_series_csv(&data.gdp_flows)?;
    let gdp_rows: Vec<DMatrix<f64>> = (0..gdp.nrows())
        .map(|r| gdp.rows(r, 1).into_owned())
        .collect();
    let agg_row = build_weights(WeightKind::GdpShare, &gdp_rows)?;
    let trade = read_flow_cube_csv(&data.trade_flows)?;
    let country = build_weights(WeightKind::ExportShare, &trade)?;
    WeightMatrix::assemble(&agg_row, &country)
        .map_err(|e| CliError::Config(format!("weight files do not assemble: {e}")))
}

/// Writes a single-period flow cube in the layout `read_flow_cube_csv` expects.
fn write_flow_cube_csv(
    path: &Path,
    month: Month,
    labels: &[String],
    matrix: &DMatrix<f64>,
) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Data(format!("cannot write {}: {e}", path.display()));
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err)?;
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    write!(f, "period,origin").map_err(io_err)?;
    for l in labels {
        write!(f, ",{l}").map_err(io_err)?;
    }
    writeln!(f).map_err(io_err)?;
    for r in 0..matrix.nrows() {
        write!(f, "{month},{}", labels[r]).map_err(io_err)?;
        for c in 0..matrix.ncols() {
            write!(f, ",{}", matrix[(r, c)]).map_err(io_err)?;
        }
        writeln!(f).map_err(io_err)?;
    }
    Ok(())
}

fn write_block_csv(
    path: &Path,
    months: &[Month],
    ids: &[String],
    values: &DMatrix<f64>,
    first_col: usize,
    n_cols: usize,
) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", parent.display())))?;
    }
    let block = values.columns(first_col, n_cols).into_owned();
    let names = ids[first_col..first_col + n_cols].to_vec();
    write_series_csv(path, months, &names, &block)?;
    Ok(())
}

/// Simulates a synthetic panel and writes every input file the other
/// subcommands need: data CSVs, weight flow files, and the truth record.
pub fn simulate(
    config: &RunConfig,
    periods: usize,
    start: &str,
    radius: f64,
    truth_path: Option<&Path>,
) -> Result<(), CliError> {
    let spec = &config.spec;
    let seed = config.chain.seed;
    let start: Month = start
        .parse()
        .map_err(|e| CliError::Config(format!("--start: {e}")))?;

    let truth: TruthParams = match truth_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => {
            let mut rng = derive_rng(seed, Stream::Init, &[200]);
            synthetic_truth(spec, radius, &mut rng)?
        }
    };

    let values = simulate_panel(spec, &truth, periods, seed)?;
    let months = start.span(periods);
    let ids = default_column_ids(spec);
    let m2 = spec.n_surprise_rows();
    let l = spec.block_len_aggregate();
    let k = spec.k_country;

    write_block_csv(&config.data.surprises, &months, &ids, &values, 0, m2)?;
    write_block_csv(
        &config.data.aggregate,
        &months,
        &ids,
        &values,
        m2,
        spec.k_aggregate_low_freq,
    )?;
    for (j, path) in config.data.countries.iter().enumerate() {
        write_block_csv(path, &months, &ids, &values, l + j * k, k)?;
    }

    let labels: Vec<String> = (1..=spec.n_countries).map(|j| format!("c{j:02}")).collect();
    let w = truth.weights.as_matrix();
    let agg_row = w.rows(0, 1).into_owned();
    let country = w.rows(1, spec.n_countries).into_owned();
    if let Some(parent) = config.data.gdp_flows.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", parent.display())))?;
    }
    write_series_csv(&config.data.gdp_flows, &months[..1], &labels, &agg_row)?;
    write_flow_cube_csv(&config.data.trade_flows, months[0], &labels, &country)?;

    ensure_dir(&config.output_dir)?;
    write_json(&config.output_dir.join("truth.json"), &truth)?;

    println!(
        "simulated {periods} periods of a {}-variable system (seed {seed})",
        spec.system_size()
    );
    println!("truth record: {}", config.output_dir.join("truth.json").display());
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct RunReport {
    seed: u64,
    sweeps: u64,
    burn_in: u64,
    thin: u64,
    retained: usize,
    wall_seconds: f64,
    btau_acceptance: f64,
    input_digest: String,
}

/// Runs the Gibbs sampler over the configured data and persists the retained
/// draws plus a run manifest.
pub fn estimate(config: &RunConfig) -> Result<(), CliError> {
    config.require_data_files()?;
    let panel = load_panel(&config.spec, &config.panel_paths(), &config.data.transforms)?;
    let weights = load_weights(&config.data)?;
    ensure_dir(&config.output_dir)?;

    let started = Instant::now();
    let mut chain = Chain::new(&config.spec, &panel, &weights, config.chain)?;
    with_workers(config.workers, || chain.run())?;
    let wall_seconds = started.elapsed().as_secs_f64();

    let store = config.store_dir();
    write_draw_store(&store, &chain)?;
    let report = RunReport {
        seed: config.chain.seed,
        sweeps: config.chain.sweeps,
        burn_in: config.chain.burn_in,
        thin: config.chain.thin,
        retained: chain.draws.len(),
        wall_seconds,
        btau_acceptance: chain.btau_acceptance(),
        input_digest: hex32(chain.input_digest()),
    };
    write_json(&config.output_dir.join("run.json"), &report)?;

    println!(
        "retained {} draws from {} sweeps in {:.1}s",
        report.retained, report.sweeps, wall_seconds
    );
    println!("draw store: {}", store.display());
    Ok(())
}

fn load_store(config: &RunConfig) -> Result<(DrawManifest, Vec<RetainedDraw>), CliError> {
    let store = config.store_dir();
    let (manifest, draws) = read_draw_store(&store)?;
    if manifest.spec != config.spec {
        return Err(CliError::Config(format!(
            "the store at {} was estimated under a different model spec",
            store.display()
        )));
    }
    if draws.is_empty() {
        return Err(CliError::Config(format!(
            "the store at {} holds no retained draws",
            store.display()
        )));
    }
    Ok((manifest, draws))
}

fn build_table(config: &RunConfig) -> Result<RestrictionTable, CliError> {
    let table = match &config.identification.table {
        Some(path) => RestrictionTable::from_json_file(path)?,
        None => RestrictionTable::paper_default(&config.spec, config.identification.anchors.as_ref())?,
    };
    table.validate()?;
    if table.k_system != config.spec.system_size() || table.m != config.spec.m_surprise {
        return Err(CliError::Config(format!(
            "restriction table is for K={}, m={} but the spec has K={}, m={}",
            table.k_system,
            table.m,
            config.spec.system_size(),
            config.spec.m_surprise
        )));
    }
    Ok(table)
}

#[derive(Serialize, Deserialize)]
struct DrawOutcome {
    accepted: bool,
    attempts: u64,
}

#[derive(Serialize, Deserialize)]
struct IdentReport {
    total: usize,
    accepted: usize,
    acceptance_rate: f64,
    mean_attempts: f64,
    zero_tol: f64,
    max_attempts: u64,
    seed: u64,
    input_digest: String,
    per_draw: Vec<DrawOutcome>,
}

fn run_identification(
    config: &RunConfig,
    manifest: &DrawManifest,
    draws: &[RetainedDraw],
) -> Result<(RestrictionTable, Vec<Option<IdentifiedDraw>>, IdentReport), CliError> {
    let table = build_table(config)?;
    let covariances: Vec<DMatrix<f64>> = draws.iter().map(|d| d.xi_bar()).collect();
    let seed = config.identification.seed.unwrap_or(config.chain.seed);
    let settings = config.identification.settings;
    let outcomes = with_workers(config.workers, || {
        identify_covariances(&covariances, &table, &settings, seed, config.chain.mode)
    })?;

    let per_draw: Vec<DrawOutcome> = outcomes
        .iter()
        .map(|o| DrawOutcome {
            accepted: o.is_some(),
            attempts: o.as_ref().map_or(settings.max_attempts, |d| d.attempts),
        })
        .collect();
    let accepted = per_draw.iter().filter(|d| d.accepted).count();
    if accepted == 0 {
        return Err(CliError::Exhausted(format!(
            "no draw satisfied the restriction table within {} attempts; \
             raise identification.max_attempts or loosen identification.zero_tol",
            settings.max_attempts
        )));
    }
    let mean_attempts = per_draw
        .iter()
        .filter(|d| d.accepted)
        .map(|d| d.attempts as f64)
        .sum::<f64>()
        / accepted as f64;
    let report = IdentReport {
        total: draws.len(),
        accepted,
        acceptance_rate: accepted as f64 / draws.len() as f64,
        mean_attempts,
        zero_tol: settings.zero_tol,
        max_attempts: settings.max_attempts,
        seed,
        input_digest: manifest.input_digest.clone(),
        per_draw,
    };
    Ok((table, outcomes, report))
}

/// Rotation-search identification over the stored draws; writes acceptance
/// statistics without computing responses.
pub fn identify(config: &RunConfig) -> Result<(), CliError> {
    let (manifest, draws) = load_store(config)?;
    let (_, _, report) = run_identification(config, &manifest, &draws)?;
    write_json(&config.output_dir.join("identified.json"), &report)?;
    println!(
        "identified {} of {} draws (mean attempts {:.1})",
        report.accepted, report.total, report.mean_attempts
    );
    Ok(())
}

/// Identification plus impulse responses: writes the summary CSV, its
/// metadata sidecar, and the identification statistics.
pub fn irf(config: &RunConfig) -> Result<(), CliError> {
    config.require_data_files()?;
    let (manifest, draws) = load_store(config)?;
    let (table, outcomes, report) = run_identification(config, &manifest, &draws)?;
    let panel = load_panel(&config.spec, &config.panel_paths(), &config.data.transforms)?;

    let tensor = with_workers(config.workers, || {
        irf_for_draws(
            &config.spec,
            &manifest.weights,
            &draws,
            &outcomes,
            config.irf.horizon,
            config.chain.mode,
        )
    })?;
    let scaled = rescale_to_units(&tensor, &panel.columns)?;
    let summary = summarize(&scaled, &config.irf.quantiles)?;

    let variables: Vec<String> = panel.columns.iter().map(|c| c.id.clone()).collect();
    let shocks: Vec<String> = (0..config.spec.system_size())
        .map(|c| table.shock_label(c))
        .collect();
    let csv_path = config.output_dir.join("irf.csv");
    write_irf_csv(&csv_path, &summary, &variables, &shocks)?;
    let meta = IrfMeta {
        n_draws: summary.n_draws,
        excluded_nonfinite: summary.excluded_nonfinite,
        skipped_unidentified: summary.skipped_unidentified,
        horizon: summary.horizon,
        quantiles: summary.quantiles.clone(),
        shocks,
        variables,
        input_digest: manifest.input_digest.clone(),
    };
    write_irf_meta(&config.output_dir.join("irf_meta.json"), &meta)?;
    write_json(&config.output_dir.join("identified.json"), &report)?;

    println!(
        "responses over {} draws ({} unidentified, {} non-finite) at horizons 0..{}",
        summary.n_draws,
        summary.skipped_unidentified,
        summary.excluded_nonfinite,
        summary.horizon
    );
    println!("summary: {}", csv_path.display());
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct DicEntry {
    factors: usize,
    dic: f64,
    mean_deviance: f64,
    deviance_at_mean: f64,
    effective_params: f64,
}

#[derive(Serialize, Deserialize)]
struct DicFile {
    grid: Vec<DicEntry>,
    selected: usize,
}

/// Estimates the model once per factor count and reports the deviance
/// information criterion over the grid.
pub fn dic(config: &RunConfig, factors: &[usize]) -> Result<(), CliError> {
    if factors.is_empty() {
        return Err(CliError::Config("--factors needs at least one value".into()));
    }
    config.require_data_files()?;
    let panel = load_panel(&config.spec, &config.panel_paths(), &config.data.transforms)?;
    let weights = load_weights(&config.data)?;
    ensure_dir(&config.output_dir)?;

    let mut grid = Vec::with_capacity(factors.len());
    for &f in factors {
        let mut spec = config.spec.clone();
        spec.n_factors = f;
        let mut chain_config = config.chain;
        chain_config.compute_deviance = true;
        let mut chain = Chain::new(&spec, &panel, &weights, chain_config)?;
        with_workers(config.workers, || chain.run())?;
        let report = chain.compute_dic()?;
        println!(
            "F={f}: DIC {:.2} (mean deviance {:.2}, effective parameters {:.1})",
            report.dic, report.mean_deviance, report.effective_params
        );
        grid.push(DicEntry {
            factors: f,
            dic: report.dic,
            mean_deviance: report.mean_deviance,
            deviance_at_mean: report.deviance_at_mean,
            effective_params: report.effective_params,
        });
    }
    let selected = grid
        .iter()
        .min_by(|a, b| a.dic.partial_cmp(&b.dic).expect("finite DIC"))
        .map(|e| e.factors)
        .expect("non-empty grid");
    write_json(&config.output_dir.join("dic.json"), &DicFile { grid, selected })?;
    println!("selected F={selected}");
    Ok(())
}
