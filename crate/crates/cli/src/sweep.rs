//! Fan-out of one command over a product grid of configuration values.
//!
//! Every point runs in its own `point-<hash>` directory, the hash taken
//! over the point's configuration. `status.txt` lists each point's outcome
//! and, for the yield-type commands, `sweep.txt` merges their tables.

use std::fmt::Write as _;
use std::path::Path;

use log::{info, warn};
use nsdi::config::RunConfig;
use nsdi::io::read_sweep_table;
use nsdi::{Error, Result};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::commands::{header, run_target};
use crate::{Failure, Target};

/// Point identifier: the first 12 hex digits of the SHA-256 of the
/// configuration, leaving out where it is written and by how many workers.
pub fn point_hash(cfg: &RunConfig) -> String {
    let mut h = Sha256::new();
    for (k, v) in cfg.entries() {
        if k != "run.output" && k != "run.workers" {
            h.update(format!("{k} = {v}\n").as_bytes());
        }
    }
    hex::encode(h.finalize())[..12].to_string()
}

fn parse_axes(vary: &[String], base: &RunConfig) -> Result<Vec<(String, Vec<String>)>> {
    let mut axes = Vec::new();
    for spec in vary {
        let Some((key, values)) = spec.split_once('=') else {
            return Err(Error::Validation(format!(
                "--vary expects KEY=V1,V2,..., got {spec:?}"
            )));
        };
        let key = key.trim().to_string();
        let values: Vec<String> = values
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        if values.is_empty() {
            return Err(Error::Validation(format!("--vary {key} lists no values")));
        }
        if key == "run.output" || key == "run.workers" {
            return Err(Error::Validation(format!("{key} cannot be swept")));
        }
        for v in &values {
            base.clone().set(&key, v)?;
        }
        axes.push((key, values));
    }
    Ok(axes)
}

/// All combinations, the last axis varying fastest.
fn product(axes: &[(String, Vec<String>)]) -> Vec<Vec<(String, String)>> {
    let mut points = vec![Vec::new()];
    for (key, values) in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    points
}

struct Outcome {
    hash: String,
    status: String,
    failed: bool,
}

fn run_point(
    target: Target,
    base: &RunConfig,
    assignment: &[(String, String)],
    ground: Option<&Path>,
) -> Outcome {
    let mut cfg = base.clone();
    for (k, v) in assignment {
        // values were checked in parse_axes
        cfg.set(k, v).expect("validated sweep value");
    }
    let hash = point_hash(&cfg);
    cfg.output = base.output.join(format!("point-{hash}"));
    match run_target(target, &cfg, ground) {
        Ok(()) => Outcome {
            hash,
            status: "ok".into(),
            failed: false,
        },
        Err(f) => {
            let (code, msg) = match &f {
                Failure::Sim(Error::Validation(m)) => (2, m.clone()),
                Failure::Sim(e) => (3, e.to_string()),
                Failure::Partial(..) => (4, "nested sweep".into()),
            };
            warn!("point {hash} failed: {msg}");
            Outcome {
                hash,
                status: format!("failed exit={code} {}", msg.replace('\n', " ")),
                failed: true,
            }
        }
    }
}

pub fn run_sweep(
    target: Target,
    base: &RunConfig,
    vary: &[String],
    ground: Option<&Path>,
) -> Result<(), Failure> {
    let axes = parse_axes(vary, base)?;
    let points = product(&axes);
    std::fs::create_dir_all(&base.output)?;
    info!("sweeping {} over {} points", target.name(), points.len());
    let outcomes: Vec<Outcome> = points
        .par_iter()
        .map(|a| run_point(target, base, a, ground))
        .collect();

    let keys: Vec<&str> = axes.iter().map(|(k, _)| k.as_str()).collect();
    let mut head = header(base, &format!("sweep {}", target.name()));
    head.extend(vary.iter().map(|v| format!("vary {v}")));
    let mut status = String::new();
    for line in &head {
        let _ = writeln!(status, "# {line}");
    }
    let _ = writeln!(status, "point {} status", keys.join(" "));
    for (a, o) in points.iter().zip(&outcomes) {
        let values: Vec<&str> = a.iter().map(|(_, v)| v.as_str()).collect();
        let _ = writeln!(status, "{} {} {}", o.hash, values.join(" "), o.status);
    }
    std::fs::write(base.output.join("status.txt"), status)?;

    let table = match target {
        Target::Yields => Some("yields.txt"),
        Target::Rates => Some("rates.txt"),
        _ => None,
    };
    if let Some(name) = table {
        let mut merged = String::new();
        for line in &head {
            let _ = writeln!(merged, "# {line}");
        }
        let _ = writeln!(
            merged,
            "point {} {}",
            keys.join(" "),
            nsdi::io::SWEEP_COLUMNS
        );
        for (a, o) in points.iter().zip(&outcomes) {
            if o.failed {
                continue;
            }
            let path = base.output.join(format!("point-{}", o.hash)).join(name);
            let (_, rows) = read_sweep_table(&path)?;
            let values: Vec<&str> = a.iter().map(|(_, v)| v.as_str()).collect();
            for r in rows {
                let _ = writeln!(
                    merged,
                    "{} {} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
                    o.hash,
                    values.join(" "),
                    r.f0,
                    r.si,
                    r.di,
                    r.di_se,
                    r.di_ce,
                    r.p_ion
                );
            }
        }
        std::fs::write(base.output.join("sweep.txt"), merged)?;
    }

    let failed = outcomes.iter().filter(|o| o.failed).count();
    if failed > 0 {
        return Err(Failure::Partial(failed, outcomes.len()));
    }
    Ok(())
}
