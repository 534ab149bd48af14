//! Run configuration as `section.key = value` lines.
//!
//! Blank lines and `#` comments are ignored. Lists are comma separated.
//! Floats are written in shortest round-trip form so that emitting and
//! re-parsing a configuration is lossless.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{invalid, Error, Result};
use crate::grid::{make_grid, Gauge, Grid2D};
use crate::momenta::MomentaOptions;
use crate::potentials::SoftCoreParams;
use crate::propagator::{AbsorberSpec, StepScheme};
use crate::pulse::{cep_phase, PulseParams};
use crate::rates::{DirectChannel, RateModel};
use crate::yields::RegionPartition;

#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig {
    pub n_points: usize,
    pub dx: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PulseConfig {
    pub f0: Vec<f64>,
    pub omega: f64,
    pub phi: f64,
    /// When non-zero, phases `2πj/phi_count` replace `phi`.
    pub phi_count: usize,
    pub n_cycles: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AbsorberConfig {
    pub fraction: f64,
    pub exponent: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentaConfig {
    pub r_cut: f64,
    pub w_cut: f64,
    pub sigma_p: f64,
    pub cut_mixed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatesConfig {
    pub eta: f64,
    pub ratio: f64,
    pub direct: DirectChannel,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub pulse: PulseConfig,
    pub epsilon: f64,
    pub absorber: AbsorberConfig,
    pub partition: RegionPartition,
    pub momenta: MomentaConfig,
    pub rates: RatesConfig,
    pub dt: f64,
    pub gauge: Gauge,
    pub output: PathBuf,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let rates = RateModel::default();
        Self {
            grid: GridConfig {
                n_points: 672,
                dx: 0.3,
            },
            pulse: PulseConfig {
                f0: vec![0.16],
                omega: 0.094,
                phi: 0.0,
                phi_count: 0,
                n_cycles: 2,
            },
            epsilon: SoftCoreParams::default().epsilon,
            absorber: AbsorberConfig {
                fraction: AbsorberSpec::DEFAULT_FRACTION,
                exponent: AbsorberSpec::DEFAULT_EXPONENT,
            },
            partition: RegionPartition::default(),
            momenta: MomentaConfig {
                r_cut: MomentaOptions::DEFAULT_R_CUT,
                w_cut: MomentaOptions::DEFAULT_W_CUT,
                sigma_p: 0.07,
                cut_mixed: true,
            },
            rates: RatesConfig {
                eta: rates.eta,
                ratio: rates.ratio,
                direct: rates.direct,
                tol: 1e-8,
            },
            dt: StepScheme::default().dt,
            gauge: Gauge::Length,
            output: PathBuf::from("out"),
            workers: 1,
        }
    }
}

fn gauge_name(g: Gauge) -> &'static str {
    match g {
        Gauge::Length => "length",
        Gauge::Velocity => "velocity",
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| Error::Validation(format!("{key}: cannot parse {v:?} as a number")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim().parse::<usize>().map_err(|_| {
        Error::Validation(format!(
            "{key}: cannot parse {v:?} as a non-negative integer"
        ))
    })
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => invalid!("{key}: cannot parse {v:?} as a boolean"),
    }
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Parses configuration text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                invalid!("line {}: expected key = value, got {raw:?}", lineno + 1);
            };
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "grid.n_points" => self.grid.n_points = parse_usize(key, v)?,
            "grid.dx" => self.grid.dx = parse_f64(key, v)?,
            "pulse.f0" => {
                self.pulse.f0 = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse_f64(key, s))
                    .collect::<Result<_>>()?
            }
            "pulse.omega" => self.pulse.omega = parse_f64(key, v)?,
            "pulse.phi" => self.pulse.phi = parse_f64(key, v)?,
            "pulse.phi_count" => self.pulse.phi_count = parse_usize(key, v)?,
            "pulse.n_cycles" => {
                self.pulse.n_cycles = u32::try_from(parse_usize(key, v)?)
                    .map_err(|_| Error::Validation(format!("{key}: {v} is too large")))?
            }
            "soft_core.epsilon" => self.epsilon = parse_f64(key, v)?,
            "absorber.fraction" => self.absorber.fraction = parse_f64(key, v)?,
            "absorber.exponent" => self.absorber.exponent = parse_f64(key, v)?,
            "partition.a" => self.partition.a = parse_f64(key, v)?,
            "partition.b" => self.partition.b = parse_f64(key, v)?,
            "momenta.r_cut" => self.momenta.r_cut = parse_f64(key, v)?,
            "momenta.w_cut" => self.momenta.w_cut = parse_f64(key, v)?,
            "momenta.sigma_p" => self.momenta.sigma_p = parse_f64(key, v)?,
            "momenta.cut_mixed" => self.momenta.cut_mixed = parse_bool(key, v)?,
            "rates.eta" => self.rates.eta = parse_f64(key, v)?,
            "rates.ratio" => self.rates.ratio = parse_f64(key, v)?,
            "rates.direct" => self.rates.direct = DirectChannel::from_name(v)?,
            "rates.tol" => self.rates.tol = parse_f64(key, v)?,
            "run.dt" => self.dt = parse_f64(key, v)?,
            "run.gauge" => {
                self.gauge = match v {
                    "length" => Gauge::Length,
                    "velocity" => Gauge::Velocity,
                    _ => invalid!("{key}: expected length or velocity, got {v:?}"),
                }
            }
            "run.output" => self.output = PathBuf::from(v),
            "run.workers" => self.workers = parse_usize(key, v)?,
            _ => invalid!("unknown configuration key {key:?}"),
        }
        Ok(())
    }

    /// Configuration text that [`Self::parse`] maps back to `self`.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("grid.n_points", self.grid.n_points.to_string());
        put("grid.dx", self.grid.dx.to_string());
        put("pulse.f0", join(&self.pulse.f0));
        put("pulse.omega", self.pulse.omega.to_string());
        put("pulse.phi", self.pulse.phi.to_string());
        put("pulse.phi_count", self.pulse.phi_count.to_string());
        put("pulse.n_cycles", self.pulse.n_cycles.to_string());
        put("soft_core.epsilon", self.epsilon.to_string());
        put("absorber.fraction", self.absorber.fraction.to_string());
        put("absorber.exponent", self.absorber.exponent.to_string());
        put("partition.a", self.partition.a.to_string());
        put("partition.b", self.partition.b.to_string());
        put("momenta.r_cut", self.momenta.r_cut.to_string());
        put("momenta.w_cut", self.momenta.w_cut.to_string());
        put("momenta.sigma_p", self.momenta.sigma_p.to_string());
        put("momenta.cut_mixed", self.momenta.cut_mixed.to_string());
        put("rates.eta", self.rates.eta.to_string());
        put("rates.ratio", self.rates.ratio.to_string());
        put("rates.direct", self.rates.direct.name().to_string());
        put("rates.tol", self.rates.tol.to_string());
        put("run.dt", self.dt.to_string());
        put("run.gauge", gauge_name(self.gauge).to_string());
        put("run.output", self.output.display().to_string());
        put("run.workers", self.workers.to_string());
        s
    }

    /// Flat key/value view, the same pairs as [`Self::emit`].
    pub fn entries(&self) -> BTreeMap<String, String> {
        self.emit()
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    pub fn make_grid(&self) -> Result<Grid2D> {
        make_grid(self.grid.n_points, self.grid.dx)
    }

    pub fn soft_core(&self) -> SoftCoreParams {
        SoftCoreParams {
            epsilon: self.epsilon,
            ..Default::default()
        }
    }

    pub fn scheme(&self) -> StepScheme {
        StepScheme { dt: self.dt }
    }

    pub fn absorber(&self, grid: &Grid2D) -> AbsorberSpec {
        AbsorberSpec::from_fraction(grid, self.absorber.fraction, self.absorber.exponent)
    }

    pub fn rate_model(&self) -> RateModel {
        RateModel {
            eta: self.rates.eta,
            ratio: self.rates.ratio,
            direct: self.rates.direct,
            ..Default::default()
        }
    }

    pub fn momenta_options(&self, grid: &Grid2D) -> MomentaOptions {
        let a = self.absorber(grid);
        MomentaOptions {
            x0: a.x0,
            exponent: a.exponent,
            w_cut: self.momenta.w_cut,
            r_cut: self.momenta.r_cut,
            cut_mixed: self.momenta.cut_mixed,
        }
    }

    /// Carrier-envelope phases of the run.
    pub fn phases(&self) -> Vec<f64> {
        if self.pulse.phi_count == 0 {
            vec![self.pulse.phi]
        } else {
            (0..self.pulse.phi_count)
                .map(|j| cep_phase(j, self.pulse.phi_count))
                .collect()
        }
    }

    /// One pulse per `(F₀, φ)` combination, amplitude-major.
    pub fn pulses(&self) -> Result<Vec<PulseParams>> {
        let mut out = Vec::new();
        for &f0 in &self.pulse.f0 {
            for phi in self.phases() {
                out.push(PulseParams::new(
                    f0,
                    self.pulse.omega,
                    phi,
                    self.pulse.n_cycles,
                )?);
            }
        }
        Ok(out)
    }

    /// Parameter checks for the rate model, which needs no grid.
    pub fn validate_rates(&self) -> Result<()> {
        if self.pulse.f0.is_empty() {
            invalid!("pulse.f0 lists no field amplitudes");
        }
        self.pulses()?;
        if !(self.rates.tol > 0.0) {
            invalid!("rates.tol must be positive, got {}", self.rates.tol);
        }
        if self.workers == 0 {
            invalid!("run.workers must be at least 1");
        }
        self.rate_model().validate()
    }

    /// Parameter checks that need no propagation.
    pub fn validate(&self) -> Result<()> {
        self.validate_rates()?;
        let grid = self.make_grid()?;
        self.soft_core().validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            invalid!("run.dt must be positive, got {}", self.dt);
        }
        let absorber = self.absorber(&grid);
        absorber.validate(&grid)?;
        self.partition.validate()?;
        if self.partition.b >= absorber.x0 {
            invalid!(
                "partition border b = {} must lie inside the absorber onset x0 = {:.3}",
                self.partition.b,
                absorber.x0
            );
        }
        for p in &self.pulses()? {
            absorber.check_quiver(&grid, p)?;
        }
        if !(self.momenta.sigma_p > 0.0) {
            invalid!(
                "momenta.sigma_p must be positive, got {}",
                self.momenta.sigma_p
            );
        }
        Ok(())
    }

    /// Additional checks for momentum runs.
    pub fn validate_momenta(&self) -> Result<()> {
        self.validate()?;
        let grid = self.make_grid()?;
        let opts = self.momenta_options(&grid);
        opts.validate(&grid)?;
        for p in self.pulses()? {
            opts.check_pulse(&grid, &p)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.emit()).unwrap(), c);
        c.validate().unwrap();
    }

    #[test]
    fn comments_and_overrides() {
        let c = RunConfig::parse(
            "# scan\n\
             pulse.f0 = 0.1, 0.2,0.3\n\
             pulse.phi_count = 20  # CEP average\n\
             run.gauge = velocity\n\
             momenta.cut_mixed = false\n",
        )
        .unwrap();
        assert_eq!(c.pulse.f0, vec![0.1, 0.2, 0.3]);
        assert_eq!(c.phases().len(), 20);
        assert_eq!(c.pulses().unwrap().len(), 60);
        assert_eq!(c.gauge, Gauge::Velocity);
        assert!(!c.momenta.cut_mixed);
    }

    #[test]
    fn rejects_malformed_text() {
        assert!(RunConfig::parse("grid.dx 0.3").is_err());
        assert!(RunConfig::parse("grid.colour = red").is_err());
        assert!(RunConfig::parse("grid.dx = fast").is_err());
        assert!(RunConfig::parse("run.gauge = coulomb").is_err());
    }

    #[test]
    fn validation_rules() {
        let mut c = RunConfig::default();
        c.pulse.f0 = vec![0.16, 0.6];
        c.pulse.omega = 0.05;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("minimum L"), "{msg}");

        let mut c = RunConfig::default();
        c.partition.b = 90.0;
        assert!(c.validate().is_err());

        let mut c = RunConfig::default();
        c.grid.n_points = 256;
        c.validate().unwrap();
        assert!(c.validate_momenta().is_err());
        c.grid.n_points = 512;
        c.validate_momenta().unwrap();
    }

    fn finite(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
        lo..hi
    }

    proptest! {
        #[test]
        fn emit_parse_round_trip(
            n in 2usize..4096,
            dx in finite(1e-3, 5.0),
            f0 in proptest::collection::vec(finite(0.0, 2.0), 1..6),
            omega in finite(1e-3, 1.0),
            phi in finite(-10.0, 10.0),
            phi_count in 0usize..40,
            nc in 1u32..20,
            eps in finite(0.01, 3.0),
            frac in finite(0.5, 0.99),
            expo in finite(0.01, 2.0),
            a in finite(0.1, 20.0),
            b in finite(0.1, 40.0),
            sig in finite(0.001, 1.0),
            cut in any::<bool>(),
            eta in finite(0.5, 1.0),
            ratio in finite(0.0, 0.2),
            zero in any::<bool>(),
            dt in finite(1e-4, 0.2),
            velocity in any::<bool>(),
            workers in 1usize..64,
        ) {
            let mut c = RunConfig::default();
            c.grid = GridConfig { n_points: n, dx };
            c.pulse = PulseConfig { f0, omega, phi, phi_count, n_cycles: nc };
            c.epsilon = eps;
            c.absorber = AbsorberConfig { fraction: frac, exponent: expo };
            c.partition = RegionPartition { a, b };
            c.momenta.sigma_p = sig;
            c.momenta.cut_mixed = cut;
            c.rates.eta = eta;
            c.rates.ratio = ratio;
            c.rates.direct = if zero { DirectChannel::Zero } else { DirectChannel::Ratio };
            c.dt = dt;
            c.gauge = if velocity { Gauge::Velocity } else { Gauge::Length };
            c.workers = workers;
            c.output = PathBuf::from(format!("runs/p{n}"));
            prop_assert_eq!(RunConfig::parse(&c.emit()).unwrap(), c);
        }
    }
}
