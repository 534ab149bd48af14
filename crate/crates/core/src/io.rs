//! Binary grid dumps, delimited-text exports, metadata sidecars and the
//! yield sweep table.
//!
//! Dump layout: the magic `TDSE2E01`, little-endian `i64` rank, `n₁`, `n₂`,
//! `f64` spacing, `i64` tag, then `re, im` pairs in row-major order. The tag
//! of a wavefunction is `4·gauge + representation`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{make_grid, Gauge, Representation, Wavefunction};

pub const MAGIC: &[u8; 8] = b"TDSE2E01";

/// Tag written for real-valued densities on a momentum lattice.
pub const DENSITY_TAG: i64 = 100;

/// Raw contents of a dump file.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDump {
    pub rank: i64,
    pub n1: usize,
    pub n2: usize,
    pub spacing: f64,
    pub tag: i64,
    pub data: Vec<Complex64>,
}

pub fn write_dump(path: &Path, dump: &GridDump) -> Result<()> {
    if dump.data.len() != dump.n1 * dump.n2 {
        return Err(Error::Format(format!(
            "dump payload has {} values, expected {}",
            dump.data.len(),
            dump.n1 * dump.n2
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&dump.rank.to_le_bytes())?;
    w.write_all(&(dump.n1 as i64).to_le_bytes())?;
    w.write_all(&(dump.n2 as i64).to_le_bytes())?;
    w.write_all(&dump.spacing.to_le_bytes())?;
    w.write_all(&dump.tag.to_le_bytes())?;
    for z in &dump.data {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dump(path: &Path) -> Result<GridDump> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("{}: bad magic", path.display())));
    }
    let mut word = [0u8; 8];
    let mut next = |r: &mut BufReader<File>| -> Result<[u8; 8]> {
        r.read_exact(&mut word)?;
        Ok(word)
    };
    let rank = i64::from_le_bytes(next(&mut r)?);
    let n1 = i64::from_le_bytes(next(&mut r)?);
    let n2 = i64::from_le_bytes(next(&mut r)?);
    let spacing = f64::from_le_bytes(next(&mut r)?);
    let tag = i64::from_le_bytes(next(&mut r)?);
    if !(1..=2).contains(&rank) || n1 < 1 || n2 < 1 || n1.saturating_mul(n2) > 1 << 32 {
        return Err(Error::Format(format!(
            "{}: implausible header rank={rank} n1={n1} n2={n2}",
            path.display()
        )));
    }
    let count = (n1 * n2) as usize;
    let mut bytes = vec![0u8; count * 16];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    Ok(GridDump {
        rank,
        n1: n1 as usize,
        n2: n2 as usize,
        spacing,
        tag,
        data,
    })
}

pub fn wavefunction_tag(psi: &Wavefunction) -> i64 {
    4 * psi.gauge.code() + psi.representation().code()
}

pub fn write_wavefunction(path: &Path, psi: &Wavefunction) -> Result<()> {
    let n = psi.grid().n_points();
    write_dump(
        path,
        &GridDump {
            rank: 2,
            n1: n,
            n2: n,
            spacing: psi.grid().dx(),
            tag: wavefunction_tag(psi),
            data: psi.as_slice().to_vec(),
        },
    )
}

pub fn read_wavefunction(path: &Path) -> Result<Wavefunction> {
    let d = read_dump(path)?;
    if d.rank != 2 || d.n1 != d.n2 {
        return Err(Error::Format(format!(
            "{}: not a square wavefunction dump",
            path.display()
        )));
    }
    let gauge = Gauge::from_code(d.tag.div_euclid(4));
    let rep = Representation::from_code(d.tag.rem_euclid(4));
    let (Some(gauge), Some(rep)) = (gauge, rep) else {
        return Err(Error::Format(format!(
            "{}: unknown tag {}",
            path.display(),
            d.tag
        )));
    };
    let grid = make_grid(d.n1, d.spacing)?;
    let a =
        Array2::from_shape_vec((d.n1, d.n2), d.data).map_err(|e| Error::Format(e.to_string()))?;
    Ok(Wavefunction::from_array(&grid, a, rep)?.with_gauge(gauge))
}

/// Writes a real `n × n` field as a dump with zero imaginary parts.
pub fn write_real_field(path: &Path, field: &Array2<f64>, spacing: f64, tag: i64) -> Result<()> {
    let (n1, n2) = field.dim();
    write_dump(
        path,
        &GridDump {
            rank: 2,
            n1,
            n2,
            spacing,
            tag,
            data: field.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        },
    )
}

/// One header line, then `x₁ x₂ value` rows, keeping every `stride`-th
/// sample along each axis.
pub fn write_field_text(
    path: &Path,
    header: &str,
    axis1: &[f64],
    axis2: &[f64],
    field: &Array2<f64>,
    stride: usize,
) -> Result<()> {
    let stride = stride.max(1);
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    for i in (0..axis1.len()).step_by(stride) {
        for j in (0..axis2.len()).step_by(stride) {
            writeln!(
                w,
                "{:.16e} {:.16e} {:.16e}",
                axis1[i],
                axis2[j],
                field[[i, j]]
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Two-column text: one header line, then `x value` rows.
pub fn write_series_text(path: &Path, header: &str, x: &[f64], y: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    for (a, b) in x.iter().zip(y) {
        writeln!(w, "{a:.16e} {b:.16e}")?;
    }
    w.flush()?;
    Ok(())
}

/// `key=value` metadata, one entry per line, in the given order.
pub fn write_sidecar(path: &Path, entries: &[(&str, String)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (k, v) in entries {
        writeln!(w, "{k}={v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Result<Vec<(String, String)>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Format(format!("sidecar line without '=': {line}")));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// One row of the yield sweep table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub f0: f64,
    pub si: f64,
    pub di: f64,
    pub di_se: f64,
    pub di_ce: f64,
    pub p_ion: f64,
}

pub const SWEEP_COLUMNS: &str = "F0 SI DI DI_SE DI_CE P_ion";

/// Metadata lines prefixed by `# `, the column header, then rows.
pub fn write_sweep_table(path: &Path, metadata: &[String], rows: &[SweepRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for m in metadata {
        writeln!(w, "# {m}")?;
    }
    writeln!(w, "{SWEEP_COLUMNS}")?;
    for r in rows {
        writeln!(
            w,
            "{:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
            r.f0, r.si, r.di, r.di_se, r.di_ce, r.p_ion
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_table(path: &Path) -> Result<(Vec<String>, Vec<SweepRow>)> {
    let r = BufReader::new(File::open(path)?);
    let mut meta = Vec::new();
    let mut rows = Vec::new();
    let mut seen_header = false;
    for line in r.lines() {
        let line = line?;
        if let Some(m) = line.strip_prefix("# ") {
            meta.push(m.to_string());
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !seen_header {
            if line.trim() != SWEEP_COLUMNS {
                return Err(Error::Format(format!("unexpected sweep header: {line}")));
            }
            seen_header = true;
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("bad sweep row '{line}': {e}")))?;
        if v.len() != 6 {
            return Err(Error::Format(format!("sweep row needs 6 columns: {line}")));
        }
        rows.push(SweepRow {
            f0: v[0],
            si: v[1],
            di: v[2],
            di_se: v[3],
            di_ce: v[4],
            p_ion: v[5],
        });
    }
    Ok((meta, rows))
}
