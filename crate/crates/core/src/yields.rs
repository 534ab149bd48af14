//! Ionization yields from a partition of configuration space and the
//! probability currents across the borders between its regions.
//!
//! Per axis a coordinate is *bound* (`|r| ≤ a`), *arm* (`a < |r| ≤ b`) or
//! *far* (`|r| > b`). The neutral atom is the cruciform union of bound×(bound
//! or arm) and its mirror; a singly charged ion has one far electron and one
//! bound electron; everything else is doubly ionized.

use std::ops::Range;

use crate::error::{invalid, Error, Result};
use crate::grid::{AxisId, Gauge, Grid2D, Representation, Wavefunction};
use crate::potentials::FIELD_FACTOR;
use crate::propagator::{propagate, Observer, PropagationSetup, RegionMap, StepRecord};
use crate::pulse::PulseParams;

pub const NEUTRAL: usize = 0;
pub const SINGLE1: usize = 1;
pub const SINGLE2: usize = 2;
pub const DOUBLE: usize = 3;
pub const REGION_NAMES: [&str; 4] = ["neutral", "single1", "single2", "double"];

const BOUND: u8 = 0;
const ARM: u8 = 1;
const FAR: u8 = 2;

/// Border positions of the partition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionPartition {
    pub a: f64,
    pub b: f64,
}

impl Default for RegionPartition {
    fn default() -> Self {
        Self { a: 6.0, b: 12.0 }
    }
}

impl RegionPartition {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > self.a) {
            invalid!(
                "region borders need 0 < a < b, got a={} b={}",
                self.a,
                self.b
            );
        }
        Ok(())
    }

    fn label(&self, r: f64) -> u8 {
        let r = r.abs();
        if r <= self.a {
            BOUND
        } else if r <= self.b {
            ARM
        } else {
            FAR
        }
    }

    /// Region of the point `(r₁, r₂)`.
    pub fn classify(&self, r1: f64, r2: f64) -> usize {
        region_of(self.label(r1), self.label(r2))
    }

    pub fn region_map(&self, grid: &Grid2D) -> RegionMap {
        let mut table = vec![0; 9];
        for l1 in 0..3u8 {
            for l2 in 0..3u8 {
                table[l1 as usize * 3 + l2 as usize] = region_of(l1, l2);
            }
        }
        RegionMap {
            labels: grid.positions().iter().map(|&r| self.label(r)).collect(),
            table,
            n_labels: 3,
            n_regions: 4,
        }
    }

    /// Every run of adjacent cell faces that separates two different
    /// regions, grouped so that each segment has one region on either side.
    pub fn segments(&self, grid: &Grid2D) -> Vec<Segment> {
        let map = self.region_map(grid);
        let n = grid.n_points();
        let mut out = Vec::new();
        for axis in [AxisId::First, AxisId::Second] {
            for face in 0..n - 1 {
                let mut start = 0;
                let mut current: Option<(usize, usize)> = None;
                for s in 0..=n {
                    let pair = (s < n).then(|| {
                        let (lo, hi) = match axis {
                            AxisId::First => (map.region(face, s), map.region(face + 1, s)),
                            AxisId::Second => (map.region(s, face), map.region(s, face + 1)),
                        };
                        (lo, hi)
                    });
                    let pair = pair.filter(|(lo, hi)| lo != hi);
                    if pair != current {
                        if let Some((from, to)) = current {
                            out.push(Segment {
                                axis,
                                face,
                                span: start..s,
                                from,
                                to,
                            });
                        }
                        current = pair;
                        start = s;
                    }
                }
            }
        }
        out
    }
}

fn region_of(l1: u8, l2: u8) -> usize {
    match (l1, l2) {
        (BOUND, BOUND) | (BOUND, ARM) | (ARM, BOUND) => NEUTRAL,
        (FAR, BOUND) => SINGLE1,
        (BOUND, FAR) => SINGLE2,
        _ => DOUBLE,
    }
}

/// Straight run of cell faces normal to `axis`, between index `face` and
/// `face + 1`, covering `span` along the other axis. Positive current flows
/// from `from` (lower index side) to `to`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub axis: AxisId,
    pub face: usize,
    pub span: Range<usize>,
    pub from: usize,
    pub to: usize,
}

/// Net probability per unit time crossing `segment` from `from` to `to`.
/// Length gauge only.
pub fn boundary_flux(psi: &Wavefunction, segment: &Segment) -> Result<f64> {
    if psi.gauge != Gauge::Length {
        invalid!("boundary_flux expects a length-gauge state; use boundary_current");
    }
    boundary_current(psi, segment, 0.0)
}

/// Like [`boundary_flux`] with the canonical-to-kinetic shift `drift =
/// (√3/2)A(t)` of a velocity-gauge state.
///
/// The face current is `Im(ψᵢ*ψᵢ₊₁)/dx + drift·(|ψᵢ|²+|ψᵢ₊₁|²)/2`,
/// integrated over the segment with weight `dx`.
pub fn boundary_current(psi: &Wavefunction, segment: &Segment, drift: f64) -> Result<f64> {
    if psi.representation() != Representation::Position {
        invalid!("boundary currents need position representation");
    }
    let n = psi.grid().n_points();
    if segment.face + 1 >= n || segment.span.end > n || segment.span.is_empty() {
        invalid!("segment {segment:?} lies off the {n}-point grid");
    }
    let a = psi.as_slice();
    let dx = psi.grid().dx();
    let mut sum = 0.0;
    for s in segment.span.clone() {
        let (p, q) = match segment.axis {
            AxisId::First => (a[segment.face * n + s], a[(segment.face + 1) * n + s]),
            AxisId::Second => (a[s * n + segment.face], a[s * n + segment.face + 1]),
        };
        sum += (p.conj() * q).im / dx + 0.5 * drift * (p.norm_sqr() + q.norm_sqr());
    }
    Ok(sum * dx)
}

/// Time-integrated transfers between regions, accumulated step by step.
#[derive(Clone, Debug)]
pub struct FluxLedger {
    segments: Vec<Segment>,
    regions: RegionMap,
    gauge: Gauge,
    pulse: PulseParams,
    last_rates: Vec<f64>,
    /// `net[i][j]`: probability moved from region `i` to `j`; antisymmetric.
    pub net: [[f64; 4]; 4],
    /// Region populations after every step (plus the initial state).
    pub populations: Vec<[f64; 4]>,
    pub times: Vec<f64>,
    pub absorbed: [f64; 4],
    /// Largest `|Σ populations + Σ absorbed - 1|` seen.
    pub closure_max: f64,
    initial_norm: f64,
}

impl FluxLedger {
    pub fn new(
        grid: &Grid2D,
        partition: &RegionPartition,
        gauge: Gauge,
        pulse: PulseParams,
    ) -> Self {
        Self {
            segments: partition.segments(grid),
            regions: partition.region_map(grid),
            gauge,
            pulse,
            last_rates: Vec::new(),
            net: [[0.0; 4]; 4],
            populations: Vec::new(),
            times: Vec::new(),
            absorbed: [0.0; 4],
            closure_max: 0.0,
            initial_norm: 1.0,
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    fn rates(&self, psi: &Wavefunction, t: f64) -> Result<Vec<f64>> {
        let drift = match self.gauge {
            Gauge::Length => 0.0,
            Gauge::Velocity => FIELD_FACTOR * self.pulse.vector_potential_at(t),
        };
        self.segments
            .iter()
            .map(|s| boundary_current(psi, s, drift))
            .collect()
    }

    fn record_populations(&mut self, t: f64, psi: &Wavefunction, absorbed: &[f64]) {
        let p = self.regions.populations(psi);
        let pops = [p[0], p[1], p[2], p[3]];
        let total: f64 = pops.iter().sum::<f64>() + absorbed.iter().sum::<f64>();
        self.closure_max = self.closure_max.max((total - self.initial_norm).abs());
        self.populations.push(pops);
        self.times.push(t);
    }

    /// Net transfer from region `from` to region `to`.
    pub fn transfer(&self, from: usize, to: usize) -> f64 {
        self.net[from][to]
    }
}

impl Observer for FluxLedger {
    fn start(&mut self, t: f64, psi: &Wavefunction) -> Result<()> {
        self.initial_norm = psi.norm_sqr();
        self.last_rates = self.rates(psi, t)?;
        self.record_populations(t, psi, &[0.0; 4]);
        Ok(())
    }

    fn observe(&mut self, record: &StepRecord<'_>, psi: &Wavefunction) -> Result<()> {
        let rates = self.rates(psi, record.t)?;
        for ((seg, &r0), &r1) in self.segments.iter().zip(&self.last_rates).zip(&rates) {
            let moved = 0.5 * record.dt * (r0 + r1);
            self.net[seg.from][seg.to] += moved;
            self.net[seg.to][seg.from] -= moved;
        }
        self.last_rates = rates;
        for (acc, &a) in self.absorbed.iter_mut().zip(record.absorbed_cumulative) {
            *acc = a;
        }
        self.record_populations(record.t, psi, record.absorbed_cumulative);
        Ok(())
    }
}

/// Yields of one run, plus its ledger.
#[derive(Clone, Debug)]
pub struct YieldRecord {
    pub f0: f64,
    pub si: f64,
    pub di: f64,
    pub di_se: f64,
    pub di_ce: f64,
    pub p_ion: f64,
    pub final_populations: [f64; 4],
    pub ledger: FluxLedger,
}

impl YieldRecord {
    pub fn sweep_row(&self) -> crate::io::SweepRow {
        crate::io::SweepRow {
            f0: self.f0,
            si: self.si,
            di: self.di,
            di_se: self.di_se,
            di_ce: self.di_ce,
            p_ion: self.p_ion,
        }
    }
}

/// Propagates `psi0` over the pulse plus one cycle and reads off the yields.
pub fn run_yields(
    psi0: &Wavefunction,
    setup: &PropagationSetup,
    partition: &RegionPartition,
    extra: &mut [&mut dyn Observer],
) -> Result<YieldRecord> {
    partition.validate()?;
    let grid = psi0.grid();
    if let Some(abs) = &setup.absorber {
        if partition.b >= abs.x0 {
            invalid!(
                "region border b = {} must lie inside the absorber onset {:.3}",
                partition.b,
                abs.x0
            );
        }
    } else if partition.b >= grid.half_extent() {
        invalid!("region border b = {} lies outside the box", partition.b);
    }
    let mut ledger = FluxLedger::new(grid, partition, setup.gauge, setup.pulse);
    let regions = partition.region_map(grid);
    let out = {
        let mut observers: Vec<&mut dyn Observer> = vec![&mut ledger];
        for o in extra.iter_mut() {
            observers.push(&mut **o);
        }
        propagate(psi0, setup, &regions, &mut observers)?
    };
    let pops = *ledger
        .populations
        .last()
        .ok_or_else(|| Error::Numerical("propagation produced no steps".into()))?;
    let ab = ledger.absorbed;
    let si = pops[SINGLE1] + pops[SINGLE2] + ab[SINGLE1] + ab[SINGLE2];
    let di = pops[DOUBLE] + ab[DOUBLE];
    let di_se = ledger.transfer(NEUTRAL, DOUBLE);
    let di_ce = ledger.transfer(SINGLE1, DOUBLE) + ledger.transfer(SINGLE2, DOUBLE);
    log::debug!(
        "F0={} steps={} SI={si:e} DI={di:e} closure={:e}",
        setup.pulse.f0,
        out.steps,
        ledger.closure_max
    );
    Ok(YieldRecord {
        f0: setup.pulse.f0,
        si,
        di,
        di_se,
        di_ce,
        p_ion: si + di,
        final_populations: pops,
        ledger,
    })
}

/// Field at which the total yield first reaches `1 - 1/e`, by linear
/// interpolation between the bracketing samples of `(F₀, P_ion)`.
pub fn find_f_sat(curve: &[(f64, f64)]) -> Result<f64> {
    let target = 1.0 - (-1.0f64).exp();
    check_sorted(curve)?;
    if let Some(&(f, p)) = curve.first() {
        if p >= target {
            return Err(Error::OutOfRange(format!(
                "P_ion = {p} already exceeds 1-1/e at the first sample F0 = {f}"
            )));
        }
    }
    for w in curve.windows(2) {
        let ((f0, p0), (f1, p1)) = (w[0], w[1]);
        if p0 < target && p1 >= target {
            return Ok(f0 + (target - p0) * (f1 - f0) / (p1 - p0));
        }
    }
    Err(Error::OutOfRange(
        "total yield never reaches 1-1/e in the scanned range".into(),
    ))
}

/// Location of the single-ionization maximum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldMaximum {
    pub f_max: f64,
    pub value: f64,
    /// The largest sample is the first or last one.
    pub on_boundary: bool,
}

/// Maximum of `(F₀, SI)`, refined by the parabola through the discrete
/// argmax and its neighbours.
pub fn find_f_max(curve: &[(f64, f64)]) -> Result<FieldMaximum> {
    if curve.len() < 3 {
        invalid!(
            "need at least 3 samples to locate a maximum, got {}",
            curve.len()
        );
    }
    check_sorted(curve)?;
    let (k, &(fk, vk)) = curve
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("non-empty");
    if k == 0 || k == curve.len() - 1 {
        return Ok(FieldMaximum {
            f_max: fk,
            value: vk,
            on_boundary: true,
        });
    }
    let (x0, y0) = curve[k - 1];
    let (x1, y1) = curve[k];
    let (x2, y2) = curve[k + 1];
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curvature = (d12 - d01) / (x2 - x0);
    if curvature >= 0.0 {
        return Ok(FieldMaximum {
            f_max: x1,
            value: y1,
            on_boundary: false,
        });
    }
    // vertex of y = y1 + d01·(x-x1) + curvature·(x-x0)(x-x1)... in Newton form
    let xv = 0.5 * (x0 + x1) - d01 / (2.0 * curvature);
    let xv = xv.clamp(x0, x2);
    let yv = y0 + d01 * (xv - x0) + curvature * (xv - x0) * (xv - x1);
    Ok(FieldMaximum {
        f_max: xv,
        value: yv,
        on_boundary: false,
    })
}

fn check_sorted(curve: &[(f64, f64)]) -> Result<()> {
    if curve.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        invalid!("field samples must be strictly increasing");
    }
    Ok(())
}
