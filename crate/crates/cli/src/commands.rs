use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hetraffic::association::{LayoutFile, NetworkLayout};
use hetraffic::calibration::{self, CalibrationSet, CalibrationTable};
use hetraffic::io::{self, Header};
use hetraffic::measures::{self, Tessellation};
use hetraffic::netsim::{self, SweepRow};
use hetraffic::rng::RandomStream;
use hetraffic::traffic::{self, Bias, Initial, Method, Tgip};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::{CliError, InitialChoice, MeasureChoice, SweepMode, TrafficArgs};

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Prints to stdout; a closed pipe (`| head`) is not an error.
fn print_json(value: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(hetraffic::Error::from)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn announce(path: &Path) {
    eprintln!("wrote {}", path.display());
}

pub fn calibrate(
    mut cfg: ExperimentConfig,
    resolution: Option<usize>,
    initial: InitialChoice,
    method: Option<Method>,
) -> Result<(), CliError> {
    if let Some(r) = resolution {
        cfg.calibration.resolution = r;
    }
    if let Some(m) = method {
        cfg.calibration.method = m;
    }
    let initials = match initial {
        InitialChoice::Ppp => vec![Initial::Ppp],
        InitialChoice::Lattice => vec![Initial::Lattice],
        InitialChoice::Both => vec![Initial::Ppp, Initial::Lattice],
    };
    let configs = initials
        .into_iter()
        .map(|i| cfg.calibration_config(i))
        .collect::<Result<Vec<_>, _>>()?;
    for c in &configs {
        c.validate()?;
    }
    let dir = out_dir(&cfg)?;
    for c in configs {
        let table = calibration::build_calibration(&cfg.layout, &c, &cfg.channel.geometry())?;
        let path = dir.join(format!("calibration_{}.json", c.initial));
        io::write_json(&path, &table)?;
        announce(&path);
    }
    Ok(())
}

fn load_tables(cfg: &ExperimentConfig, paths: &[PathBuf]) -> Result<CalibrationSet, CliError> {
    if paths.is_empty() {
        eprintln!("no calibration tables given; building them");
        let geometry = cfg.channel.geometry();
        let tables = [Initial::Ppp, Initial::Lattice]
            .into_iter()
            .map(|i| Ok(calibration::build_calibration(&cfg.layout, &cfg.calibration_config(i)?, &geometry)?))
            .collect::<Result<Vec<_>, CliError>>()?;
        return Ok(CalibrationSet::new(tables)?);
    }
    let tables = paths
        .iter()
        .map(|p| io::read_json::<CalibrationTable>(p))
        .collect::<hetraffic::Result<Vec<_>>>()?;
    Ok(CalibrationSet::new(tables)?)
}

/// TGIP file contents; every field may be overridden by flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct TgipFile {
    alpha: Option<f64>,
    mu_beta: Option<f64>,
    method: Option<Method>,
    bias: Option<Bias>,
    initial: Option<Initial>,
    mean_ues: Option<f64>,
    seed: Option<u64>,
}

/// Resolved traffic setting of `generate` and `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize)]
struct TrafficSetting {
    tgip: Tgip,
    mean_ues: f64,
    target: Option<(f64, f64)>,
}

fn resolve_traffic(cfg: &mut ExperimentConfig, args: &TrafficArgs) -> Result<TrafficSetting, CliError> {
    let file: TgipFile = match &args.tgip {
        Some(p) => io::read_json(p)?,
        None => TgipFile::default(),
    };
    if cfg.seed.is_none() {
        cfg.seed = file.seed;
    }
    let mean_ues = args.mean_ues.or(file.mean_ues).unwrap_or(cfg.mean_ues);
    let alpha = args.alpha.or(file.alpha);
    let mu_beta = args.beta.or(file.mu_beta);
    let bias = args.bias.or(file.bias).unwrap_or(Bias::Center);

    let (tgip, target) = match (args.target_c, args.target_rho) {
        (Some(c), Some(rho)) => {
            if alpha.is_some() || mu_beta.is_some() {
                return Err(CliError::Usage("give either --alpha/--beta or --target-c/--target-rho".into()));
            }
            if args.tables.is_empty() {
                return Err(CliError::Usage("--target-c/--target-rho need --tables".into()));
            }
            let set = load_tables(cfg, &args.tables)?;
            (set.invert(c, rho)?, Some((c, rho)))
        }
        (None, None) => {
            let (Some(alpha), Some(mu_beta)) = (alpha, mu_beta) else {
                return Err(CliError::Usage(
                    "traffic parameters missing: give --alpha and --beta, a --tgip file, or --target-c and --target-rho"
                        .into(),
                ));
            };
            let tgip = Tgip {
                alpha,
                mu_beta,
                method: args.method.or(file.method).unwrap_or(Method::Enhanced),
                bias,
                initial: args.initial.or(file.initial).unwrap_or(Initial::Ppp),
            };
            tgip.validate()?;
            (tgip, None)
        }
        _ => return Err(CliError::Usage("--target-c and --target-rho go together".into())),
    };
    Ok(TrafficSetting { tgip, mean_ues, target })
}

pub fn generate(mut cfg: ExperimentConfig, layout: Option<&Path>, args: &TrafficArgs) -> Result<(), CliError> {
    let setting = resolve_traffic(&mut cfg, args)?;
    let seed = cfg.seed()?;
    let fixed_layout: Option<LayoutFile> = layout.map(io::read_json).transpose()?;
    let hash = cfg.hash_with(&("generate", &setting, &fixed_layout))?;
    let header = Header { config_hash: hash.clone(), seed };
    let geometry = cfg.channel.geometry();
    let stream = RandomStream::new(seed);
    let t = match fixed_layout {
        Some(f) => {
            let base = NetworkLayout::try_from(f)?;
            traffic::generate_traffic(&base, &setting.tgip, setting.mean_ues, &geometry, &stream)?
        }
        None => traffic::generate_drop(&cfg.layout, &setting.tgip, setting.mean_ues, &geometry, &stream)?,
    };
    let stats = traffic::measure_traffic(&t.layout, &t.ues, cfg.calibration.measure, &geometry)?;

    let dir = out_dir(&cfg)?;
    let ues_path = dir.join("ues.csv");
    io::write_pattern(&ues_path, &t.ues, Some(&header))?;
    announce(&ues_path);
    let layout_path = dir.join("layout.json");
    io::write_json(&layout_path, &LayoutFile::from(&t.layout))?;
    announce(&layout_path);
    let stats_json = json!({
        "config_hash": hash,
        "seed": seed,
        "C": stats.c,
        "rho": stats.rho,
        "measure": cfg.calibration.measure,
        "alpha": setting.tgip.alpha,
        "mu_beta": setting.tgip.mu_beta,
        "method": setting.tgip.method,
        "bias": setting.tgip.bias,
        "initial": setting.tgip.initial,
        "mean_ues": setting.mean_ues,
        "n_ues": t.ues.len(),
        "clamped_betas": t.clamped_betas,
        "target": setting.target.map(|(c, rho)| json!({"C": c, "rho": rho})),
    });
    let stats_path = dir.join("stats.json");
    io::write_json(&stats_path, &stats_json)?;
    announce(&stats_path);
    print_json(&stats_json)
}

pub fn measure(
    cfg: ExperimentConfig,
    pattern: &Path,
    choice: MeasureChoice,
    window: Option<&Path>,
    include_boundary: bool,
    layout: Option<&Path>,
) -> Result<(), CliError> {
    let window = window.map(io::read_json).transpose()?;
    let pattern_set = io::read_pattern(pattern, window)?;
    let tess = Tessellation::new(&pattern_set)?;
    let mut reports = Vec::new();
    for m in choice.measures() {
        let stats = tess.stats(m, !include_boundary)?;
        reports.push(json!({
            "measure": m,
            "mean": stats.mean,
            "variance": stats.variance,
            "cov": stats.cov,
            "normalized_cov": stats.cov / measures::PPP_2D.cov_divisor(m),
            "n": stats.count,
        }));
    }
    let rho = match layout {
        Some(p) => {
            let l = NetworkLayout::try_from(io::read_json::<LayoutFile>(p)?)?;
            Some(l.cells(&cfg.channel.geometry()).correlation_coefficient(&pattern_set)?)
        }
        None => None,
    };
    let params = (
        "measure",
        pattern.display().to_string(),
        include_boundary,
        layout.map(|p| p.display().to_string()),
    );
    let result = json!({
        "config_hash": cfg.hash_with(&params)?,
        "seed": cfg.seed,
        "points": pattern_set.len(),
        "intensity": pattern_set.intensity(),
        "boundary_excluded": !include_boundary,
        "measures": reports,
        "rho": rho,
    });
    if cfg.out.is_some() {
        let path = out_dir(&cfg)?.join("measure.json");
        io::write_json(&path, &result)?;
        announce(&path);
    }
    print_json(&result)
}

#[derive(Debug, Serialize)]
struct DropRow {
    drop: usize,
    mean_rate_bps: f64,
    coverage_prob: f64,
    #[serde(rename = "C")]
    c: f64,
    rho: f64,
}

pub fn simulate(mut cfg: ExperimentConfig, args: &TrafficArgs, threshold: Option<f64>) -> Result<(), CliError> {
    let setting = resolve_traffic(&mut cfg, args)?;
    let seed = cfg.seed()?;
    let threshold = threshold.unwrap_or(cfg.sinr_threshold_db);
    let header = Header { config_hash: cfg.hash_with(&("simulate", &setting, threshold))?, seed };
    let kpis = netsim::run_drops(
        &cfg.layout,
        &setting.tgip,
        setting.mean_ues,
        &cfg.channel,
        threshold,
        cfg.drops,
        seed,
    )?;
    let target = setting.target.unwrap_or((f64::NAN, f64::NAN));
    let summary = SweepRow::from_drops(target, &kpis, seed);
    let dir = out_dir(&cfg)?;
    let tg = setting.tgip;
    let note = format!(
        "alpha={} mu_beta={} method={} bias={} initial={} threshold_db={threshold}",
        tg.alpha, tg.mu_beta, tg.method, tg.bias, tg.initial
    );
    let path = dir.join("simulate.csv");
    io::write_csv(&path, &header, std::slice::from_ref(&note), &[summary])?;
    announce(&path);
    let rows: Vec<DropRow> = kpis
        .iter()
        .enumerate()
        .map(|(drop, k)| DropRow {
            drop,
            mean_rate_bps: k.mean_rate,
            coverage_prob: k.coverage_prob,
            c: k.stats.c,
            rho: k.stats.rho,
        })
        .collect();
    let path = dir.join("simulate_drops.csv");
    io::write_csv(&path, &header, &[note], &rows)?;
    announce(&path);
    Ok(())
}

#[derive(Debug, Serialize)]
struct SurfaceRow {
    initial: Initial,
    alpha: f64,
    mu_beta: f64,
    #[serde(rename = "C")]
    c: f64,
    rho: f64,
    #[serde(rename = "C_raw")]
    c_raw: f64,
    rho_raw: f64,
    #[serde(rename = "se_C")]
    se_c: f64,
    se_rho: f64,
}

#[derive(Debug, Serialize)]
struct BoundaryRow {
    rho: f64,
    #[serde(rename = "C_min")]
    c_min: f64,
    #[serde(rename = "C_max")]
    c_max: f64,
}

/// Fractions of the attainable `rho` range and of each `C` interval used
/// for roundtrip targets.
const ROUNDTRIP_RHO_FRACTIONS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
const ROUNDTRIP_C_FRACTIONS: [f64; 3] = [0.2, 0.5, 0.8];

/// Grid of `(C, rho)` targets for KPI surfaces.
fn kpi_targets() -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for r in 0..10 {
        for c in 1..=14 {
            out.push((0.5 * c as f64, 0.1 * r as f64));
        }
    }
    out
}

pub fn sweep(cfg: ExperimentConfig, mode: SweepMode, tables: &[PathBuf], threshold: Option<f64>) -> Result<(), CliError> {
    let seed = cfg.seed()?;
    let threshold = threshold.unwrap_or(cfg.sinr_threshold_db);
    let table_hashes: Vec<String> = tables
        .iter()
        .map(|p| Ok(io::content_hash(&fs::read_to_string(p)?)?))
        .collect::<Result<_, CliError>>()?;
    let mode_name = format!("{mode:?}").to_lowercase();
    let header = Header { config_hash: cfg.hash_with(&("sweep", &mode_name, &table_hashes, threshold))?, seed };
    let geometry = cfg.channel.geometry();
    let dir = out_dir(&cfg)?;
    let path = match mode {
        SweepMode::Fig7 => {
            let n = cfg.calibration.resolution;
            if n < 2 {
                return Err(CliError::Usage("resolution must be at least 2".into()));
            }
            let rows = traffic::cov_profile(
                &cfg.layout,
                0.0,
                &calibration::unit_grid(n),
                Method::Basic,
                cfg.mean_ues,
                &geometry,
                cfg.drops,
                seed,
            )?;
            let path = dir.join("fig7.csv");
            io::write_csv(&path, &header, &["alpha = 0; basic method (fixed beta); boundary cells excluded".into()], &rows)?;
            path
        }
        SweepMode::Fig9_10 => {
            let set = load_tables(&cfg, tables)?;
            let mut rows = Vec::new();
            for t in set.tables() {
                for (i, &alpha) in t.grid_alpha.iter().enumerate() {
                    for (j, &mu_beta) in t.grid_beta.iter().enumerate() {
                        rows.push(SurfaceRow {
                            initial: t.meta.initial,
                            alpha,
                            mu_beta,
                            c: t.c[i][j],
                            rho: t.rho[i][j],
                            c_raw: t.c_raw[i][j],
                            rho_raw: t.rho_raw[i][j],
                            se_c: t.se_c[i][j],
                            se_rho: t.se_rho[i][j],
                        });
                    }
                }
            }
            let path = dir.join("fig9_10.csv");
            io::write_csv(&path, &header, &[], &rows)?;
            path
        }
        SweepMode::Fig11 => {
            let set = load_tables(&cfg, tables)?;
            let rows: Vec<BoundaryRow> = set
                .feasible()
                .boundary()
                .into_iter()
                .map(|(rho, c_min, c_max)| BoundaryRow { rho, c_min, c_max })
                .collect();
            let path = dir.join("fig11.csv");
            io::write_csv(&path, &header, &[], &rows)?;
            path
        }
        SweepMode::Fig12_13 => {
            let set = load_tables(&cfg, tables)?;
            let targets = set.feasible().spread_targets(&ROUNDTRIP_RHO_FRACTIONS, &ROUNDTRIP_C_FRACTIONS);
            let results = calibration::roundtrip(
                &set,
                &targets,
                &cfg.layout,
                cfg.calibration.measure,
                cfg.mean_ues,
                &geometry,
                cfg.drops,
                seed.wrapping_add(1),
            )?;
            let mut rows = Vec::new();
            let mut notes = vec!["validation drops use seed + 1".to_string()];
            for r in results {
                match r {
                    Ok(row) => rows.push(row),
                    Err(e) => {
                        eprintln!("warning: {e}");
                        notes.push(format!("warning: {e}"));
                    }
                }
            }
            let path = dir.join("fig12_13.csv");
            io::write_csv(&path, &header, &notes, &rows)?;
            path
        }
        SweepMode::Fig14_15 => {
            let set = load_tables(&cfg, tables)?;
            let points = netsim::sweep(
                &cfg.layout,
                &cfg.channel,
                &set,
                &kpi_targets(),
                cfg.mean_ues,
                threshold,
                cfg.drops,
                seed.wrapping_add(1),
            )?;
            let mut notes = vec![format!("threshold_db={threshold}; network drops use seed + 1")];
            for p in &points {
                if let Some(w) = &p.warning {
                    eprintln!("warning: {w}");
                    notes.push(format!("warning: {w}"));
                }
            }
            let rows: Vec<&SweepRow> = points.iter().map(|p| &p.row).collect();
            let path = dir.join("fig14_15.csv");
            io::write_csv(&path, &header, &notes, &rows)?;
            path
        }
    };
    announce(&path);
    Ok(())
}
