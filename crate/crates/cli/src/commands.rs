//! Single-point commands. Each writes its artifacts into the configured
//! output directory plus a `<command>.meta` sidecar with the wall time.
//! Text artifacts start with `#` lines echoing the code version and the
//! full configuration, so any one of them suffices to re-run the point.

use std::path::Path;
use std::time::Instant;

use log::info;
use nsdi::config::RunConfig;
use nsdi::groundstate::{stationary_ground_state, RelaxOptions};
use nsdi::io::{
    read_wavefunction, write_field_text, write_real_field, write_series_text, write_sidecar,
    write_sweep_table, write_wavefunction, SweepRow, DENSITY_TAG,
};
use nsdi::momenta::{
    assemble_di_distribution, cep_average, gaussian_smooth, ion_momentum_projection, run_momenta,
    MomentumDistribution2D,
};
use nsdi::propagator::PropagationSetup;
use nsdi::rates::knee_curves;
use nsdi::yields::{find_f_max, find_f_sat, run_yields};
use nsdi::{Error, Grid2D, PulseParams, Representation, Result, Wavefunction};
use rayon::prelude::*;

use crate::{Failure, Target};

pub const CODE_VERSION: &str = concat!("nsdi ", env!("CARGO_PKG_VERSION"));

/// Reproducibility header lines, without the leading `#`. The output
/// directory and worker count stay in the sidecar so that tables do not
/// depend on them.
pub fn header(cfg: &RunConfig, command: &str) -> Vec<String> {
    let mut h = vec![format!("{CODE_VERSION} {command}")];
    h.extend(
        cfg.emit()
            .lines()
            .filter(|l| !l.starts_with("run.output") && !l.starts_with("run.workers"))
            .map(str::to_string),
    );
    h
}

fn header_text(lines: &[String]) -> String {
    lines
        .iter()
        .map(|l| format!("# {l}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Summary lines appended to the sidecar.
type Summary = Vec<(String, String)>;

pub fn run_target(target: Target, cfg: &RunConfig, ground: Option<&Path>) -> Result<(), Failure> {
    let start = Instant::now();
    match target {
        Target::Rates => cfg.validate_rates()?,
        Target::Momenta | Target::Ionmom => cfg.validate_momenta()?,
        _ => cfg.validate()?,
    }
    std::fs::create_dir_all(&cfg.output)?;
    let summary = match target {
        Target::Ground => ground_cmd(cfg, &cfg.make_grid()?)?,
        Target::Yields => yields_cmd(cfg, &cfg.make_grid()?, ground)?,
        Target::Momenta => momenta_cmd(cfg, &cfg.make_grid()?, ground, false)?,
        Target::Ionmom => momenta_cmd(cfg, &cfg.make_grid()?, ground, true)?,
        Target::Rates => rates_cmd(cfg)?,
    };
    let wall = start.elapsed().as_secs_f64();
    let mut entries: Vec<(&str, String)> = vec![
        ("code_version", CODE_VERSION.to_string()),
        ("command", target.name().to_string()),
        ("wall_time_s", format!("{wall:.3}")),
    ];
    entries.extend(summary.iter().map(|(k, v)| (k.as_str(), v.clone())));
    let config = cfg.entries();
    entries.extend(config.iter().map(|(k, v)| (k.as_str(), v.clone())));
    write_sidecar(
        &cfg.output.join(format!("{}.meta", target.name())),
        &entries,
    )?;
    info!("{} finished in {wall:.1} s", target.name());
    Ok(())
}

fn initial_state(cfg: &RunConfig, grid: &Grid2D, ground: Option<&Path>) -> Result<Wavefunction> {
    let Some(path) = ground else {
        info!("relaxing the ground state on {} points", grid.n_points());
        let gs = stationary_ground_state(grid, &cfg.soft_core(), &RelaxOptions::default(), cfg.dt)?;
        info!("E_g = {:.6}", gs.energy);
        return Ok(gs.psi);
    };
    let psi = read_wavefunction(path)?;
    let g = psi.grid();
    if g.n_points() != grid.n_points() || g.dx() != grid.dx() {
        return Err(Error::Validation(format!(
            "stored ground state has {} points at dx {}, configuration asks for {} at {}",
            g.n_points(),
            g.dx(),
            grid.n_points(),
            grid.dx()
        )));
    }
    if psi.representation() != Representation::Position {
        return Err(Error::Validation(
            "stored ground state is not in position space".into(),
        ));
    }
    Ok(psi)
}

fn ground_cmd(cfg: &RunConfig, grid: &Grid2D) -> Result<Summary> {
    let sc = cfg.soft_core();
    let gs = stationary_ground_state(grid, &sc, &RelaxOptions::default(), cfg.dt)?;
    info!(
        "E_g = {:.6} after {} imaginary steps",
        gs.energy,
        gs.history.len()
    );
    write_wavefunction(&cfg.output.join("ground.psi"), &gs.psi)?;
    Ok(vec![
        ("epsilon".into(), sc.epsilon.to_string()),
        ("dx".into(), grid.dx().to_string()),
        ("n_points".into(), grid.n_points().to_string()),
        ("E_g".into(), gs.energy.to_string()),
        ("kinetic".into(), gs.parts.kinetic.to_string()),
        ("imaginary_steps".into(), gs.history.len().to_string()),
    ])
}

fn mean_rows(f0: f64, rows: &[SweepRow]) -> SweepRow {
    let k = rows.len() as f64;
    let m = |g: fn(&SweepRow) -> f64| rows.iter().map(g).sum::<f64>() / k;
    SweepRow {
        f0,
        si: m(|r| r.si),
        di: m(|r| r.di),
        di_se: m(|r| r.di_se),
        di_ce: m(|r| r.di_ce),
        p_ion: m(|r| r.p_ion),
    }
}

/// `F_sat` and `F_max` of a scan, or the reason they are missing.
fn knee_summary(rows: &[SweepRow]) -> Summary {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| a.f0.total_cmp(&b.f0));
    let p_ion: Vec<(f64, f64)> = sorted.iter().map(|r| (r.f0, r.p_ion)).collect();
    let si: Vec<(f64, f64)> = sorted.iter().map(|r| (r.f0, r.si)).collect();
    let f_sat = match find_f_sat(&p_ion) {
        Ok(f) => f.to_string(),
        Err(e) => format!("none ({e})"),
    };
    let f_max = match find_f_max(&si) {
        Ok(m) if !m.on_boundary => m.f_max.to_string(),
        Ok(m) => format!("none (maximum at scan edge {})", m.f_max),
        Err(e) => format!("none ({e})"),
    };
    vec![("F_sat".into(), f_sat), ("F_max".into(), f_max)]
}

fn write_summary(path: &Path, head: &[String], summary: &Summary) -> Result<()> {
    let mut text = header_text(head);
    for (k, v) in summary {
        text.push_str(&format!("\n{k} = {v}"));
    }
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn yields_cmd(cfg: &RunConfig, grid: &Grid2D, ground: Option<&Path>) -> Result<Summary> {
    let psi0 = initial_state(cfg, grid, ground)?;
    let pulses = cfg.pulses()?;
    let absorber = cfg.absorber(grid);
    let records = pulses
        .par_iter()
        .map(|&pulse| {
            let setup = PropagationSetup {
                soft_core: cfg.soft_core(),
                pulse,
                gauge: cfg.gauge,
                scheme: cfg.scheme(),
                absorber: Some(absorber),
            };
            let r = run_yields(&psi0, &setup, &cfg.partition, &mut [])?;
            info!(
                "F0 = {} phi = {:.4}: SI = {:.4e} DI = {:.4e}",
                pulse.f0, pulse.phi, r.si, r.di
            );
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    let closure = records
        .iter()
        .map(|r| r.ledger.closure_max)
        .fold(0.0, f64::max);
    // amplitude-major: consecutive records share F0 and differ in phase
    let per_f0 = cfg.phases().len();
    let rows: Vec<SweepRow> = records
        .chunks(per_f0)
        .map(|c| {
            let rows: Vec<SweepRow> = c.iter().map(|r| r.sweep_row()).collect();
            mean_rows(c[0].f0, &rows)
        })
        .collect();
    let head = header(cfg, "yields");
    write_sweep_table(&cfg.output.join("yields.txt"), &head, &rows)?;
    let mut summary = knee_summary(&rows);
    summary.push(("ledger_closure_max".into(), format!("{closure:e}")));
    write_summary(&cfg.output.join("yields_summary.txt"), &head, &summary)?;
    Ok(summary)
}

fn rates_cmd(cfg: &RunConfig) -> Result<Summary> {
    let model = cfg.rate_model();
    let scan = &cfg.pulse.f0;
    let base = PulseParams::new(scan[0], cfg.pulse.omega, cfg.pulse.phi, cfg.pulse.n_cycles)?;
    let curves = knee_curves(&model, &base, scan, cfg.rates.tol)?;
    let rows: Vec<SweepRow> = curves.points.iter().map(|p| p.sweep_row()).collect();
    let head = header(cfg, "rates");
    write_sweep_table(&cfg.output.join("rates.txt"), &head, &rows)?;
    let fmt = |v: Option<f64>| v.map_or("none".to_string(), |f| f.to_string());
    let summary = vec![
        ("F_sat".to_string(), fmt(curves.f_sat)),
        ("F_max".to_string(), fmt(curves.f_max.map(|m| m.f_max))),
    ];
    write_summary(&cfg.output.join("rates_summary.txt"), &head, &summary)?;
    Ok(summary)
}

struct MomentaPoint {
    f0_index: usize,
    phi_index: usize,
    pulse: PulseParams,
    raw: MomentumDistribution2D,
    closure: f64,
}

fn distribution_lines(d: &MomentumDistribution2D, pulse: &PulseParams, phi: &str) -> Vec<String> {
    let mass = d.mass();
    let bound = pulse.drift_momentum_bound();
    let q = d.quadrant_masses();
    vec![
        format!("F0 = {} phi = {phi}", pulse.f0),
        format!("di_mass = {mass:e}"),
        format!(
            "fraction_within_2sqrtUp = {:e} (radius {bound})",
            d.mass_within(bound) / mass
        ),
        format!(
            "quadrants(++,-+,--,+-) = {:e} {:e} {:e} {:e}",
            q[0], q[1], q[2], q[3]
        ),
    ]
}

fn write_distribution(
    path: &Path,
    head: &[String],
    extra: &[String],
    d: &MomentumDistribution2D,
) -> Result<()> {
    let mut lines = head.to_vec();
    lines.extend_from_slice(extra);
    lines.push("p1 p2 density".into());
    write_field_text(
        path,
        &header_text(&lines),
        &d.momenta,
        &d.momenta,
        &d.density,
        1,
    )
}

fn momenta_cmd(
    cfg: &RunConfig,
    grid: &Grid2D,
    ground: Option<&Path>,
    project: bool,
) -> Result<Summary> {
    let psi0 = initial_state(cfg, grid, ground)?;
    let options = cfg.momenta_options(grid);
    let phases = cfg.phases();
    let mut jobs = Vec::new();
    for (i, &f0) in cfg.pulse.f0.iter().enumerate() {
        for (j, &phi) in phases.iter().enumerate() {
            jobs.push((
                i,
                j,
                PulseParams::new(f0, cfg.pulse.omega, phi, cfg.pulse.n_cycles)?,
            ));
        }
    }
    let points = jobs
        .par_iter()
        .map(|&(f0_index, phi_index, pulse)| {
            let run = run_momenta(&psi0, &cfg.soft_core(), pulse, &cfg.scheme(), &options)?;
            let raw = assemble_di_distribution(&run)?;
            info!(
                "F0 = {} phi = {:.4}: DI mass {:.4e}",
                pulse.f0,
                pulse.phi,
                raw.mass()
            );
            Ok(MomentaPoint {
                f0_index,
                phi_index,
                pulse,
                raw,
                closure: run.closure_max,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let command = if project { "ionmom" } else { "momenta" };
    let head = header(cfg, command);
    let sigma = cfg.momenta.sigma_p;
    let closure = points.iter().map(|p| p.closure).fold(0.0, f64::max);
    let mut summary: Summary = vec![("sector_closure_max".into(), format!("{closure:e}"))];
    if !project {
        for p in &points {
            let stem = format!("momenta_f{}_p{}", p.f0_index, p.phi_index);
            let smooth = gaussian_smooth(&p.raw, sigma)?;
            let mut extra = distribution_lines(&p.raw, &p.pulse, &p.pulse.phi.to_string());
            extra.push(format!("smoothed sigma_p = {sigma}"));
            write_distribution(
                &cfg.output.join(format!("{stem}.txt")),
                &head,
                &extra,
                &smooth,
            )?;
            write_real_field(
                &cfg.output.join(format!("{stem}.dat")),
                &p.raw.density,
                p.raw.dk,
                DENSITY_TAG,
            )?;
            summary.push((format!("{stem}.di_mass"), format!("{:e}", p.raw.mass())));
        }
        return Ok(summary);
    }
    for (i, chunk) in points.chunks(phases.len()).enumerate() {
        let raws: Vec<MomentumDistribution2D> = chunk.iter().map(|p| p.raw.clone()).collect();
        let avg = cep_average(&raws)?;
        let smooth = gaussian_smooth(&avg, sigma)?;
        let spectrum = ion_momentum_projection(&smooth, 2);
        let mean = spectrum.mean();
        let f0 = chunk[0].pulse.f0;
        let mut lines = head.clone();
        lines.extend(distribution_lines(&avg, &chunk[0].pulse, "averaged"));
        lines.push(format!("phases_averaged = {}", chunk.len()));
        lines.push(format!("mean_p_par = {mean:e}"));
        lines.push("p_par density".into());
        let path = cfg.output.join(format!("ionmom_f{i}.txt"));
        write_series_text(
            &path,
            &header_text(&lines),
            &spectrum.p_par,
            &spectrum.density,
        )?;
        let mut extra = distribution_lines(&avg, &chunk[0].pulse, "averaged");
        extra.push(format!(
            "averaged over {} phases, smoothed sigma_p = {sigma}",
            chunk.len()
        ));
        write_distribution(
            &cfg.output.join(format!("ionmom_f{i}_2d.txt")),
            &head,
            &extra,
            &smooth,
        )?;
        summary.push((format!("ionmom_f{i}.F0"), f0.to_string()));
        summary.push((format!("ionmom_f{i}.mean_p_par"), format!("{mean:e}")));
    }
    Ok(summary)
}
