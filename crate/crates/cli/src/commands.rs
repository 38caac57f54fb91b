//! The four pipeline stages: project, rates, evolve, analyze.

use std::fmt;
use std::path::{Path, PathBuf};

use spinphonon::analysis::{detrend_series, dominant_period, ObservableSeries, ThermalReference};
use spinphonon::dynamics::{
    propagate, HamiltonianOptions, LindbladModel, PropagationOptions, Trajectory, POSITIVITY_TOL,
};
use spinphonon::projection::{project, svd_coupling, RawVibrationalModel};
use spinphonon::quantum::{mutual_information_within, DensityMatrix, HilbertLayout, QOperator};
use spinphonon::rates::rate_temperature_scan;

use crate::archive::StateArchive;
use crate::config::{BroadeningConfig, ResolvedConfig};
use crate::error::{CliError, CliResult};
use crate::formats::{
    fmt_fixed, fmt_value, parse_coupling, parse_frequencies, parse_json, provenance_line, read_text, write_bytes,
    InputHash, ProjectionDoc, TOOL_NAME, TOOL_VERSION,
};
use crate::plot::{gnuplot_script, rates_script, PlotContent};

/// Decimals in the analysis CSV.
pub const ANALYSIS_DECIMALS: usize = 12;

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn stem_path(path: &Path) -> String {
    path.with_extension("").display().to_string()
}

// ---------------------------------------------------------------- project

#[derive(Debug, Clone)]
pub struct ProjectArgs {
    pub frequencies: PathBuf,
    pub coupling: PathBuf,
    pub rank_tol: f64,
    pub reference_field_t: f64,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct ProjectSummary {
    pub doc: ProjectionDoc,
    pub singular_values_cm1: [f64; 3],
}

impl fmt::Display for ProjectSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = &self.doc;
        writeln!(f, "primary modes: {}", d.primary_freqs_cm1.len())?;
        let s: Vec<String> = self.singular_values_cm1.iter().map(|v| format!("{v:.6}")).collect();
        writeln!(f, "singular values (cm^-1): {}", s.join(", "))?;
        let w: Vec<String> = d.primary_freqs_cm1.iter().map(|v| format!("{v:.4}")).collect();
        writeln!(f, "primary frequencies (cm^-1): {}", w.join(", "))?;
        write!(f, "residual modes: {}", d.residual_freqs_cm1.len())
    }
}

pub fn cmd_project(args: &ProjectArgs) -> CliResult<ProjectSummary> {
    let ftext = read_text(&args.frequencies)?;
    let ctext = read_text(&args.coupling)?;
    let freqs = parse_frequencies(&args.frequencies, &ftext)?;
    let coupling = parse_coupling(&args.coupling, &ctext)?;
    if coupling.ncols() != freqs.len() {
        return Err(CliError::validation(format!(
            "{} has {} columns but {} lists {} frequencies",
            args.coupling.display(),
            coupling.ncols(),
            args.frequencies.display(),
            freqs.len()
        )));
    }
    let model = RawVibrationalModel::new(freqs, coupling, args.reference_field_t)?;
    let result = project(&model, args.rank_tol)?;
    let svd = svd_coupling(&model.coupling_cm1)?;

    let mut hash = InputHash::new();
    hash.add("frequencies", ftext.as_bytes());
    hash.add("coupling", ctext.as_bytes());
    hash.add("rank_tol", &args.rank_tol.to_le_bytes());
    hash.add("reference_field_T", &args.reference_field_t.to_le_bytes());

    let mut doc = ProjectionDoc::from_result(&result, args.reference_field_t);
    doc.generator = Some(format!("{TOOL_NAME} {TOOL_VERSION}"));
    doc.config_sha256 = Some(hash.hex());
    doc.rank_tol = Some(args.rank_tol);
    doc.singular_values_cm1 = Some(svd.singular_values.to_vec());
    write_bytes(&args.out, doc.to_json().as_bytes())?;
    Ok(ProjectSummary { doc, singular_values_cm1: svd.singular_values })
}

// ------------------------------------------------------------------ rates

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Temperatures {
    Single(f64),
    /// Inclusive grid start, start + step, …, stop.
    Grid {
        start: f64,
        stop: f64,
        step: f64,
    },
}

impl Temperatures {
    /// `T` or `start:stop:step`.
    pub fn parse(s: &str) -> CliResult<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::validation(format!("cannot parse `{t}` in temperature spec `{s}`")))
        };
        match parts.as_slice() {
            [t] => Ok(Temperatures::Single(num(t)?)),
            [a, b, c] => Ok(Temperatures::Grid { start: num(a)?, stop: num(b)?, step: num(c)? }),
            _ => Err(CliError::validation(format!("temperature spec `{s}` is neither `T` nor `start:stop:step`"))),
        }
    }

    pub fn values(self) -> CliResult<Vec<f64>> {
        let ok = |t: f64| t >= 0.0 && t.is_finite();
        match self {
            Temperatures::Single(t) if ok(t) => Ok(vec![t]),
            Temperatures::Single(t) => Err(CliError::validation(format!("invalid temperature {t}"))),
            Temperatures::Grid { start, stop, step } => {
                if !(ok(start) && ok(stop) && stop >= start && step > 0.0 && step.is_finite()) {
                    return Err(CliError::validation(format!("invalid temperature grid {start}:{stop}:{step}")));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
                Ok((0..n).map(|i| start + i as f64 * step).collect())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RatesArgs {
    pub projection: PathBuf,
    pub temperatures: Temperatures,
    pub broadening: BroadeningConfig,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatesTable {
    pub temperatures_k: Vec<f64>,
    /// One row per temperature.
    pub rates_per_ps: Vec<Vec<f64>>,
}

pub fn cmd_rates(args: &RatesArgs) -> CliResult<RatesTable> {
    let temps = args.temperatures.values()?;
    if !(args.broadening.width_cm1 > 0.0 && args.broadening.width_cm1.is_finite()) {
        return Err(CliError::validation(format!(
            "broadening width must be positive, got {}",
            args.broadening.width_cm1
        )));
    }
    let text = read_text(&args.projection)?;
    let doc: ProjectionDoc = parse_json(&args.projection, &text)?;
    let projection = doc.to_result()?;
    let scan = rate_temperature_scan(&projection, args.broadening.to_core(), &temps)?;

    let mut hash = InputHash::new();
    hash.add("projection", text.as_bytes());
    hash.add("temperatures", format!("{temps:?}").as_bytes());
    hash.add("broadening", format!("{:?}", args.broadening).as_bytes());

    let p = projection.num_primary();
    let mut csv = provenance_line(&hash.hex());
    let mut header = vec!["temperature_K".to_string()];
    header.extend((1..=p).map(|k| format!("rate_{k}_per_ps")));
    header.extend((1..=p).map(|k| format!("lifetime_{k}_ps")));
    csv.push_str(&header.join(","));
    csv.push('\n');
    for (t, res) in &scan {
        let mut row = vec![fmt_value(*t)];
        row.extend(res.rates_per_ps.iter().map(|r| fmt_value(*r)));
        row.extend(res.lifetimes_ps.iter().map(|l| fmt_value(*l)));
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    write_bytes(&args.out, csv.as_bytes())?;
    write_bytes(&with_suffix(&args.out, ".gp"), rates_script(&args.out, &stem_path(&args.out), p).as_bytes())?;
    Ok(RatesTable {
        temperatures_k: scan.iter().map(|(t, _)| *t).collect(),
        rates_per_ps: scan.into_iter().map(|(_, r)| r.rates_per_ps).collect(),
    })
}

// ----------------------------------------------------------------- evolve

#[derive(Debug, Clone, Default)]
pub struct EvolveArgs {
    pub config: PathBuf,
    /// Trajectory CSV; overrides the configuration.
    pub out: Option<PathBuf>,
    pub store_states: bool,
    pub stride: Option<usize>,
    pub convergence_check: bool,
}

#[derive(Debug, Clone)]
pub struct EvolveOutcome {
    pub trajectory: Trajectory,
    pub trajectory_csv: PathBuf,
    pub archive: Option<PathBuf>,
    /// Largest change of any recorded observable when dt is halved.
    pub convergence_deviation: Option<f64>,
}

/// Model and propagation settings described by a configuration.
pub fn build_run(
    resolved: &ResolvedConfig,
    stride: Option<usize>,
    store_states: bool,
) -> CliResult<(LindbladModel, DensityMatrix, PropagationOptions)> {
    let cfg = &resolved.config;
    let model = LindbladModel::assemble(
        &resolved.spin,
        &resolved.projection,
        cfg.fock_levels,
        &resolved.rates_per_ps,
        cfg.temperature_K,
        &HamiltonianOptions::default(),
    )?;
    let rho0 = DensityMatrix::basis_state(model.layout(), &resolved.initial_levels())?;
    let stride = stride.unwrap_or(cfg.time.record_stride);
    if stride == 0 {
        return Err(CliError::validation("stride must be at least 1"));
    }
    let opts = PropagationOptions {
        t_max_ps: cfg.time.t_max_ps,
        dt_ps: cfg.time.dt_ps,
        stride,
        store_states,
        mutual_information_modes: if cfg.observables.mutual_information {
            (0..resolved.n_modes()).collect()
        } else {
            Vec::new()
        },
        ..Default::default()
    };
    Ok((model, rho0, opts))
}

/// Columns of the trajectory CSV, in order.
pub fn trajectory_columns(n_modes: usize, mi_modes: &[usize]) -> Vec<String> {
    let mut cols = vec!["t_ps".to_string(), "spin_rho11".to_string()];
    cols.extend((1..=n_modes).map(|k| format!("mode{k}_rho00")));
    cols.push("purity".into());
    cols.push("trace_err".into());
    cols.extend(mi_modes.iter().map(|k| format!("MI_spin_mode{}", k + 1)));
    cols
}

/// Recorded observables as rows aligned with [`trajectory_columns`].
pub fn trajectory_rows(traj: &Trajectory) -> Vec<Vec<f64>> {
    let n_modes = traj.layout.num_subsystems() - 1;
    traj.times_ps
        .iter()
        .zip(&traj.records)
        .map(|(t, r)| {
            let mut row = vec![*t, r.spin_excited()];
            row.extend((0..n_modes).map(|k| r.mode_ground(k)));
            row.push(r.purity);
            row.push(r.trace_error);
            row.extend(&r.mutual_information);
            row
        })
        .collect()
}

pub fn trajectory_csv(config_sha256: &str, traj: &Trajectory) -> String {
    let n_modes = traj.layout.num_subsystems() - 1;
    let mut csv = provenance_line(config_sha256);
    csv.push_str(&trajectory_columns(n_modes, &traj.mutual_information_modes).join(","));
    csv.push('\n');
    for row in trajectory_rows(traj) {
        let cells: Vec<String> = row.iter().map(|v| fmt_value(*v)).collect();
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    csv
}

/// Largest |Δ| over every recorded observable (time excluded) of two runs on
/// the same grid.
pub fn max_observable_deviation(a: &Trajectory, b: &Trajectory) -> CliResult<f64> {
    let (ra, rb) = (trajectory_rows(a), trajectory_rows(b));
    if ra.len() != rb.len() {
        return Err(CliError::validation(format!("grids differ: {} vs {} records", ra.len(), rb.len())));
    }
    let mut dev: f64 = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        if (x[0] - y[0]).abs() > 1e-9 * x[0].abs().max(1.0) {
            return Err(CliError::validation(format!("record times differ: {} vs {}", x[0], y[0])));
        }
        for (u, v) in x[1..].iter().zip(&y[1..]) {
            dev = dev.max((u - v).abs());
        }
    }
    Ok(dev)
}

pub fn cmd_evolve(args: &EvolveArgs) -> CliResult<EvolveOutcome> {
    let resolved = ResolvedConfig::load(&args.config)?;
    let cfg = &resolved.config;
    let store = args.store_states || cfg.observables.store_states;
    let (model, rho0, opts) = build_run(&resolved, args.stride, store)?;
    let traj = propagate(&model, &rho0, &opts)?;

    let csv_path = match (&args.out, &cfg.output.trajectory) {
        (Some(out), _) => out.clone(),
        (None, Some(p)) => resolved.resolve_path(p),
        (None, None) => with_suffix(&args.config, "_trajectory.csv"),
    };
    write_bytes(&csv_path, trajectory_csv(&resolved.config_sha256, &traj).as_bytes())?;

    let archive = if store {
        let path = match (&args.out, &cfg.output.states) {
            (None, Some(p)) => resolved.resolve_path(p),
            _ => csv_path.with_extension("spph"),
        };
        let states = traj.states.as_ref().expect("states were requested");
        let stride =
            u32::try_from(traj.stride).map_err(|_| CliError::validation("stride too large for the archive"))?;
        StateArchive {
            stride,
            times_ps: traj.times_ps.clone(),
            states: states.iter().map(|s| s.data().clone()).collect(),
        }
        .write(&path)?;
        Some(path)
    } else {
        None
    };

    let convergence_deviation = if args.convergence_check {
        let half = PropagationOptions { dt_ps: opts.dt_ps / 2.0, stride: opts.stride * 2, store_states: false, ..opts };
        let fine = propagate(&model, &rho0, &half)?;
        Some(max_observable_deviation(&traj, &fine)?)
    } else {
        None
    };
    Ok(EvolveOutcome { trajectory: traj, trajectory_csv: csv_path, archive, convergence_deviation })
}

// ---------------------------------------------------------------- analyze

/// A numeric CSV with one header row; `#` lines are comments.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn parse(path: &Path, text: &str) -> CliResult<Self> {
        let mut names: Option<Vec<String>> = None;
        let mut columns: Vec<Vec<f64>> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let Some(header) = &names else {
                let h: Vec<String> = t.split(',').map(|s| s.trim().to_string()).collect();
                columns = vec![Vec::new(); h.len()];
                names = Some(h);
                continue;
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != header.len() {
                return Err(CliError::parse(
                    path,
                    line_no,
                    1,
                    format!("{} fields, header has {}", fields.len(), header.len()),
                ));
            }
            let mut column = 1;
            for (c, field) in fields.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    CliError::parse(path, line_no, column, format!("cannot parse `{}` as a number", field.trim()))
                })?;
                columns[c].push(v);
                column += field.chars().count() + 1;
            }
        }
        let names = names.ok_or_else(|| CliError::parse(path, 1, 1, "no header row"))?;
        Ok(Self { names, columns })
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.columns[i].as_slice())
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Default)]
pub struct AnalyzeArgs {
    pub trajectory: PathBuf,
    pub states: Option<PathBuf>,
    /// Needed for thermal detrending.
    pub config: Option<PathBuf>,
    pub mutual_information: bool,
    /// Restrict period search to this range (ps).
    pub period_band: Option<(f64, f64)>,
    pub out: PathBuf,
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct AnalysisOutcome {
    pub series: Vec<ObservableSeries>,
    /// Dominant period (ps) of every input column and derived series.
    pub periods: Vec<(String, Option<f64>)>,
    pub periods_csv: PathBuf,
    pub plot_script: PathBuf,
}

impl fmt::Display for AnalysisOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dominant periods (ps):")?;
        for (name, p) in &self.periods {
            match p {
                Some(p) => writeln!(f, "  {name}: {p:.3}")?,
                None => writeln!(f, "  {name}: none")?,
            }
        }
        Ok(())
    }
}

fn mode_count(table: &Table) -> usize {
    (1..).take_while(|k| table.column(&format!("mode{k}_rho00")).is_some()).count()
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> CliResult<AnalysisOutcome> {
    if args.mutual_information && args.states.is_none() {
        return Err(CliError::validation("mutual information needs a state archive (--states)"));
    }
    let text = read_text(&args.trajectory)?;
    let table = Table::parse(&args.trajectory, &text)?;
    let times = table
        .column("t_ps")
        .ok_or_else(|| CliError::validation(format!("{} has no t_ps column", args.trajectory.display())))?
        .to_vec();
    let mut hash = InputHash::new();
    hash.add("trajectory", text.as_bytes());
    let n_modes = mode_count(&table);
    let mut derived: Vec<ObservableSeries> = Vec::new();

    let mut pops = Vec::new();
    if let Some(c) = table.column("spin_rho11") {
        pops.push(("spin_rho11".to_string(), c.to_vec()));
    }
    for k in 1..=n_modes {
        let name = format!("mode{k}_rho00");
        pops.push((name.clone(), table.column(&name).expect("counted").to_vec()));
    }
    for (name, values) in &pops {
        let first = values.first().copied().unwrap_or(0.0);
        let delta = values.iter().map(|v| v - first).collect();
        derived.push(ObservableSeries::new(times.clone(), delta, format!("delta_{name}"))?);
    }

    let mut detrended = false;
    if let Some(cfg_path) = &args.config {
        let resolved = ResolvedConfig::load(cfg_path)?;
        hash.add("config", resolved.config_sha256.as_bytes());
        if resolved.n_modes() != n_modes {
            return Err(CliError::validation(format!(
                "configuration has {} modes, trajectory has {n_modes}",
                resolved.n_modes()
            )));
        }
        let cfg = &resolved.config;
        let spacing = if times.len() > 1 { times[1] - times[0] } else { cfg.time.dt_ps };
        let stride = (spacing / cfg.time.dt_ps).round().max(1.0) as usize;
        let levels = resolved.initial_levels();
        let lifetimes = resolved.lifetimes_ps();
        let n_f = cfg.fock_levels;
        for k in 0..n_modes {
            if !lifetimes[k].is_finite() {
                continue;
            }
            let name = format!("mode{}_rho00", k + 1);
            let series = ObservableSeries::new(times.clone(), table.column(&name).expect("counted").to_vec(), name)?;
            let reference = ThermalReference {
                freq_cm1: resolved.projection.primary_freqs_cm1[k],
                temperature_k: cfg.temperature_K,
                lifetime_ps: lifetimes[k],
            };
            let rho0 = DensityMatrix::basis_state(&HilbertLayout::single(n_f)?, &[levels[k + 1]])?;
            let integrator = Default::default();
            derived.push(detrend_series(&series, &reference, &rho0, cfg.time.dt_ps, stride, integrator)?);
            detrended = true;
        }
    }

    if args.mutual_information {
        let path = args.states.as_ref().expect("checked above");
        let archive = StateArchive::read(path)?;
        let grid_ok = archive.times_ps.len() == times.len()
            && archive.times_ps.iter().zip(&times).all(|(a, b)| (a - b).abs() <= 1e-9 * b.abs().max(1.0));
        if !grid_ok {
            return Err(CliError::validation(format!(
                "{} holds {} states that do not match the {} trajectory times",
                path.display(),
                archive.times_ps.len(),
                times.len()
            )));
        }
        let layout = archive_layout(archive.dim(), n_modes)?;
        hash.add("states", &archive.to_bytes()?);
        for k in 1..=n_modes {
            let values = archive
                .states
                .iter()
                .map(|m| {
                    let rho = DensityMatrix::from_operator_unchecked(QOperator::new(layout.clone(), m.clone())?);
                    mutual_information_within(&rho.partial_trace(&[0, k])?, &[0], POSITIVITY_TOL)
                })
                .collect::<spinphonon::Result<Vec<f64>>>()?;
            derived.push(ObservableSeries::new(times.clone(), values, format!("MI_spin_mode{k}"))?);
        }
    }

    let mut periods = Vec::new();
    let named_inputs = table.names.iter().zip(&table.columns).filter(|(n, _)| n.as_str() != "t_ps");
    for (name, values) in named_inputs {
        let s = ObservableSeries::new(times.clone(), values.clone(), name.clone())?;
        periods.push((name.clone(), dominant_period(&s, args.period_band).ok()));
    }
    for s in &derived {
        periods.push((s.label.clone(), dominant_period(s, args.period_band).ok()));
    }

    let provenance = provenance_line(&hash.hex());
    let mut csv = provenance.clone();
    let mut header = vec!["t_ps".to_string()];
    header.extend(derived.iter().map(|s| s.label.clone()));
    csv.push_str(&header.join(","));
    csv.push('\n');
    for (i, t) in times.iter().enumerate() {
        let mut row = vec![fmt_value(*t)];
        row.extend(derived.iter().map(|s| fmt_fixed(s.values[i], ANALYSIS_DECIMALS)));
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    write_bytes(&args.out, csv.as_bytes())?;

    let mut report = provenance;
    report.push_str("series,dominant_period_ps\n");
    for (name, p) in &periods {
        report.push_str(&format!("{name},{}\n", p.map_or("none".to_string(), fmt_value)));
    }
    let periods_csv = with_suffix(&args.out, "_periods.csv");
    write_bytes(&periods_csv, report.as_bytes())?;

    let plot_script = args.plot.clone().unwrap_or_else(|| args.out.with_extension("gp"));
    let content = PlotContent { n_modes, detrended, mutual_information: args.mutual_information };
    let script = gnuplot_script(&args.trajectory, &args.out, &stem_path(&args.out), content);
    write_bytes(&plot_script, script.as_bytes())?;
    Ok(AnalysisOutcome { series: derived, periods, periods_csv, plot_script })
}

/// `[2, n_f, …]` from the archive dimension and the number of modes.
fn archive_layout(dim: usize, n_modes: usize) -> CliResult<HilbertLayout> {
    let bad = || CliError::validation(format!("archive dimension {dim} is not 2·n_f^{n_modes}"));
    if n_modes == 0 || !dim.is_multiple_of(2) {
        return Err(bad());
    }
    let per_mode = (((dim / 2) as f64).powf(1.0 / n_modes as f64)).round() as usize;
    if per_mode < 2 || per_mode.pow(n_modes as u32) * 2 != dim {
        return Err(bad());
    }
    Ok(HilbertLayout::spin_with_modes(n_modes, per_mode)?)
}
