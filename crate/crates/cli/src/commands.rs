//! One function per subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;
use ulam_escape::cache::{Cache, CachedProvider};
use ulam_escape::certify::{self, CertificationConfig};
use ulam_escape::escape::{self, AsymptoticConfig, AsymptoticRatioExperiment, DensitySource, EscapeEstimate};
use ulam_escape::kl::{self, KlConstants, LyConstants, LyMode};
use ulam_escape::maps::{bundled, sha256_hex};
use ulam_escape::reproduce::{self, Report, RunManifest, TableReproduction};
use ulam_escape::spectral::{self, ResolventBound, SnapshotOptions, SpectralData};
use ulam_escape::{PiecewiseMap, UlamMatrix};

use crate::{format, CacheAction, Cli, Command, Failure};

struct LoadedMap {
    map: PiecewiseMap,
    origin: String,
    hash: String,
}

/// A config file path, or the name of a bundled map.
fn load_map(arg: &str) -> anyhow::Result<LoadedMap> {
    let path = Path::new(arg);
    let (text, origin) = if path.exists() {
        let text = fs::read_to_string(path).with_context(|| format!("reading map config {arg}"))?;
        (text, arg.to_string())
    } else if let Some(text) = bundled::source(arg) {
        (text.to_string(), format!("bundled:{arg}"))
    } else {
        bail!(
            "map {arg:?} is neither a file nor a bundled map ({})",
            bundled::names().collect::<Vec<_>>().join(", ")
        );
    };
    let map = PiecewiseMap::from_toml_str(&text).with_context(|| format!("parsing map config {arg}"))?;
    Ok(LoadedMap {
        map,
        origin,
        hash: sha256_hex(text.as_bytes()),
    })
}

fn manifest(subcommand: &str, map: Option<&LoadedMap>) -> RunManifest {
    let mut m = RunManifest::new(subcommand);
    if let Some(map) = map {
        m.map_path = Some(map.origin.clone());
        m.map_hash = Some(map.hash.clone());
        m.map_fingerprint = Some(map.map.fingerprint().to_string());
    }
    m
}

fn open_cache(cli: &Cli) -> anyhow::Result<Cache> {
    match &cli.cache_dir {
        Some(dir) if !dir.as_os_str().is_empty() => Ok(Cache::open(dir)?),
        _ => Ok(Cache::disabled()),
    }
}

fn write_json(path: &Path, json: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, format!("{json}\n")).with_context(|| format!("writing {}", path.display()))
}

fn emit<T: Serialize>(cli: &Cli, out: Option<&PathBuf>, report: &Report<T>, table: &str) -> anyhow::Result<()> {
    let json = report.to_json()?;
    if let Some(path) = out {
        write_json(path, &json)?;
    }
    if cli.json {
        println!("{json}");
    } else {
        print!("{table}");
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::UlamMatrix { map, bins, hole, out } => {
            let loaded = load_map(map)?;
            let mut cache = open_cache(cli)?;
            let mut m = manifest("ulam-matrix", Some(&loaded));
            m.parameter("bins", bins);
            if let Some(h) = hole {
                let (a, b) = h.endpoints();
                m.parameter("hole", format!("{a},{b}"));
            }
            let matrix = m.time("assembly", || cache.matrix(&loaded.map, *bins, hole.as_ref()))?;
            m.time("write", || matrix.save(out))?;
            m.cache = cache.stats();
            let summary = MatrixSummary {
                path: out.display().to_string(),
                n_bins: matrix.n_bins(),
                nnz: matrix.entries().nnz(),
                closed: matrix.is_closed(),
            };
            let table = format!(
                "wrote {} ({} bins, {} nonzeros, {})\n",
                summary.path,
                summary.n_bins,
                summary.nnz,
                if summary.closed { "closed" } else { "open" }
            );
            emit(cli, None, &Report { manifest: m, result: summary }, &table)?;
        }
        Command::Spectral {
            matrix,
            r,
            delta,
            truncation,
            alpha0,
            b0,
            norm,
            output,
        } => {
            let mut m = manifest("spectral", None);
            m.parameter("matrix", matrix.display())
                .parameter("r", r)
                .parameter("delta", delta)
                .parameter("N", truncation)
                .parameter("norm", norm.as_str());
            if let (Some(a), Some(b)) = (alpha0, b0) {
                m.parameter("alpha0", a).parameter("b0", b);
            }
            let loaded = m.time("load", || UlamMatrix::load(matrix, None))?;
            for w in &loaded.warnings {
                log::warn!("{w}");
            }
            let matrix = loaded.matrix;
            if !matrix.is_closed() {
                return Err(anyhow::anyhow!("spectral analysis needs a closed matrix").into());
            }
            let options = SnapshotOptions {
                convention: *norm,
                max_power: truncation + 1,
                ..Default::default()
            };
            let snapshot = m.time("eigen", || spectral::spectral_snapshot(&matrix, &options))?;
            let (data, _) = m.time("powers", || {
                spectral::level_with_extension(&snapshot, &matrix, r.to_f64(), *truncation)
            })?;
            let bound = match (alpha0, b0) {
                (Some(a), Some(b)) => Some(spectral::h_star(&data, delta.to_f64(), a.to_f64(), b.to_f64())?),
                _ => None,
            };
            let table = format::spectral_table(&data, bound.as_ref());
            let result = SpectralResult {
                complete_above: snapshot.complete_above,
                density_residual: snapshot.density_residual,
                data,
                resolvent: bound,
            };
            emit(cli, output.out.as_ref(), &Report { manifest: m, result }, &table)?;
        }
        Command::KlConstants {
            alpha0,
            b0,
            r,
            delta,
            h,
            closed_only,
            output,
        } => {
            let mut m = manifest("kl-constants", None);
            m.parameter("alpha0", alpha0)
                .parameter("B0", b0)
                .parameter("r", r)
                .parameter("delta", delta)
                .parameter("H", h)
                .parameter("closed_only", closed_only);
            let mode = if *closed_only { LyMode::ClosedOnly } else { LyMode::HoleUniform };
            let ly = kl::ly_constants(*alpha0, *b0, mode)?;
            let constants = kl::kl_constants(&ly, r.to_f64(), delta.to_f64(), *h)?;
            let table = format::kl_table(&ly, &constants);
            let result = KlResult { ly, kl: constants };
            emit(cli, output.out.as_ref(), &Report { manifest: m, result }, &table)?;
        }
        Command::Certify {
            map,
            ell,
            delta_init,
            bins_init,
            max_inner,
            max_outer,
            max_bins,
            dense_limit,
            norm,
            no_bootstrap,
            output,
        } => {
            let loaded = load_map(map)?;
            let mut m = manifest("certify", Some(&loaded));
            m.parameter("ell", ell)
                .parameter("bins_init", bins_init)
                .parameter("max_inner", max_inner)
                .parameter("max_outer", max_outer)
                .parameter("max_bins", max_bins)
                .parameter("dense_limit", dense_limit)
                .parameter("norm", norm.as_str())
                .parameter("bootstrap", !no_bootstrap);
            if let Some(d) = delta_init {
                m.parameter("delta_init", d);
            }
            let config = CertificationConfig {
                delta_init: *delta_init,
                bins_init: *bins_init,
                max_inner: *max_inner,
                max_outer: *max_outer,
                max_bins: *max_bins,
                dense_limit: *dense_limit,
                convention: *norm,
                bootstrap: !no_bootstrap,
                ..CertificationConfig::new(*ell)
            };
            let mut provider = CachedProvider::new(open_cache(cli)?);
            let report = m.time("certification", || {
                certify::run_certification(&loaded.map, &config, &mut provider)
            })?;
            m.cache = provider.stats();
            let table = report.table();
            let certified = report.is_certified();
            let reason = match &report.status {
                certify::CertificationStatus::Failed { reason } => reason.clone(),
                certify::CertificationStatus::Certified => String::new(),
            };
            emit(cli, output.out.as_ref(), &Report { manifest: m, result: report }, &table)?;
            if !certified {
                return Err(Failure::Rejected(reason));
            }
        }
        Command::Escape { map, bins, hole, output } => {
            let loaded = load_map(map)?;
            let mut cache = open_cache(cli)?;
            let mut m = manifest("escape", Some(&loaded));
            let (a, b) = hole.endpoints();
            m.parameter("bins", bins).parameter("hole", format!("{a},{b}"));
            let open = m.time("assembly", || cache.matrix(&loaded.map, *bins, Some(hole)))?;
            let estimate = m.time("power iteration", || escape::escape_from_open_matrix(&open, hole))?;
            m.cache = cache.stats();
            let table = format::escape_table(&estimate);
            emit(cli, output.out.as_ref(), &Report::<EscapeEstimate> { manifest: m, result: estimate }, &table)?;
        }
        Command::HoleAsymptotics {
            map,
            point,
            widths,
            bins_per_hole,
            max_period,
            density,
            output,
        } => {
            let loaded = load_map(map)?;
            let mut m = manifest("hole-asymptotics", Some(&loaded));
            let listed: Vec<String> = widths.iter().map(|w| w.to_string()).collect();
            m.parameter("point", point)
                .parameter("widths", listed.join(","))
                .parameter("bins_per_hole", bins_per_hole)
                .parameter("max_period", max_period)
                .parameter("density", density);
            let config = AsymptoticConfig {
                max_period: *max_period,
                density: match density.as_str() {
                    "analytic" => DensitySource::Analytic,
                    "ulam" => DensitySource::Ulam,
                    _ => DensitySource::Auto,
                },
                ..AsymptoticConfig::new(widths.clone(), *bins_per_hole)
            };
            let experiment = m.time("escape", || escape::asymptotic_ratio(&loaded.map, *point, &config))?;
            let table = format::asymptotics_table(&experiment);
            emit(
                cli,
                output.out.as_ref(),
                &Report::<AsymptoticRatioExperiment> { manifest: m, result: experiment },
                &table,
            )?;
        }
        Command::ReproduceTables { map, out_dir } => {
            let loaded = load_map(map)?;
            let mut provider = CachedProvider::new(open_cache(cli)?);
            let runs = reproduce::reproduce_tables(&loaded.map, &mut provider)?;
            let stats = provider.stats();
            let mut failures = Vec::new();
            let mut text = String::new();
            for (name, ell, table) in [
                ("table1", reproduce::table1_ell(), &runs.table1),
                ("table2", reproduce::table2_ell(), &runs.table2),
            ] {
                let mut m = manifest("reproduce-tables", Some(&loaded));
                let config = reproduce::table_config(ell);
                m.parameter("ell", ell)
                    .parameter("bins_init", config.bins_init)
                    .parameter("norm", config.convention.as_str());
                m.timings.insert("certification".into(), runs.timings[name]);
                m.cache = stats;
                let report = Report::<TableReproduction> {
                    manifest: m,
                    result: table.clone(),
                };
                if let Some(dir) = out_dir {
                    write_json(&dir.join(format!("{name}.json")), &report.to_json()?)?;
                }
                text.push_str(&table.report.table());
                text.push_str(&table.diff_table());
                text.push('\n');
                failures.extend(table.failures().map(|c| format!("{name} col {} {}", c.column, c.cell)));
            }
            if cli.json {
                let both = serde_json::json!({ "table1": runs.table1, "table2": runs.table2 });
                println!("{}", serde_json::to_string_pretty(&both)?);
            } else {
                print!("{text}");
            }
            if !failures.is_empty() {
                return Err(Failure::Rejected(format!("cells outside tolerance: {}", failures.join(", "))));
            }
        }
        Command::Cache { action } => {
            let cache = open_cache(cli)?;
            if cache.dir().is_none() && !matches!(action, CacheAction::List) {
                return Err(anyhow::anyhow!("no cache directory: set --cache-dir or {}", ulam_escape::cache::CACHE_ENV).into());
            }
            match action {
                CacheAction::List => {
                    let entries = cache.list()?;
                    if cli.json {
                        println!("{}", serde_json::to_string_pretty(&entries)?);
                    } else if entries.is_empty() {
                        println!("cache is empty");
                    } else {
                        for e in entries {
                            println!("{:<10} {:>12}  {}", format!("{:?}", e.kind).to_lowercase(), e.bytes, e.name);
                        }
                    }
                }
                CacheAction::Purge => {
                    let n = cache.purge()?;
                    println!("removed {n} entries");
                }
                CacheAction::Inspect { name } => {
                    let value = cache.inspect(name)?;
                    println!("{}", serde_json::to_string_pretty(&value)?);
                }
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct MatrixSummary {
    path: String,
    n_bins: usize,
    nnz: usize,
    closed: bool,
}

#[derive(Serialize)]
struct SpectralResult {
    complete_above: f64,
    density_residual: f64,
    data: SpectralData,
    resolvent: Option<ResolventBound>,
}

#[derive(Serialize)]
struct KlResult {
    ly: LyConstants,
    kl: KlConstants,
}
