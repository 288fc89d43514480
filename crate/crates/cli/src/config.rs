//! Flat JSON run configuration. Keys carry their units; unknown keys are
//! rejected. Every key is optional and falls back to the shipped defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use mimo_core::antenna::{BoxRegion, FillScheme};
use mimo_core::asymptotics::{Environment, Regime, SweepSpec};
use mimo_core::capacity::{Route, SnrConfig};
use mimo_core::sphere::Direction;
use mimo_core::spread::SmoothSpread;
use mimo_core::C64;

use crate::CliError;

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "MIMO_OUT_DIR";

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub regime: Option<String>,
    pub tx_count: Option<usize>,
    pub rx_count: Option<usize>,
    pub counts: Option<Vec<usize>>,
    pub fixed_count: Option<usize>,
    pub ratio: Option<f64>,
    pub box_side_m: Option<f64>,
    pub box_center_m: Option<[f64; 3]>,
    pub tx_scheme: Option<String>,
    pub rx_scheme: Option<String>,
    pub polarization_component: Option<usize>,
    pub k_rad_per_m: Option<f64>,
    pub environment: Option<String>,
    pub rank: Option<usize>,
    pub mode_l_max: Option<usize>,
    pub mode_components: Option<Vec<usize>>,
    pub kappa: Option<f64>,
    pub amplitude_component: Option<[usize; 2]>,
    pub amplitude_re: Option<f64>,
    pub amplitude_im: Option<f64>,
    pub mu_r_theta_rad: Option<f64>,
    pub mu_r_phi_rad: Option<f64>,
    pub mu_t_theta_rad: Option<f64>,
    pub mu_t_phi_rad: Option<f64>,
    pub e_t_j: Option<f64>,
    pub n_0_j: Option<f64>,
    pub resolution: Option<usize>,
    pub seed: Option<u64>,
    pub routes: Option<Vec<String>>,
    pub epsilon: Option<f64>,
    pub smoothness_order: Option<u32>,
    pub out_dir: Option<PathBuf>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn core_usage(e: mimo_core::Error) -> CliError {
    usage(e.to_string())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| usage(format!("invalid config: {e}")))
    }

    /// `--out`, then `out_dir`, then `$MIMO_OUT_DIR`, then `./out`.
    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.out_dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    fn scheme(name: &Option<String>, default: FillScheme) -> Result<FillScheme, CliError> {
        match name.as_deref() {
            None => Ok(default),
            Some("lattice") => Ok(FillScheme::Lattice),
            Some("halton") => Ok(FillScheme::Halton),
            Some(other) => Err(usage(format!("unknown fill scheme {other:?} (lattice | halton)"))),
        }
    }

    pub fn regime(&self) -> Result<Regime, CliError> {
        let name = self.regime.as_deref().unwrap_or("tx_saturation");
        Regime::parse(name).ok_or_else(|| usage(format!("unknown regime {name:?}")))
    }

    fn region(&self, default: BoxRegion) -> Result<BoxRegion, CliError> {
        if self.box_side_m.is_none() && self.box_center_m.is_none() {
            return Ok(default);
        }
        let side = self.box_side_m.unwrap_or(default.sides()[0]);
        let c = self.box_center_m.unwrap_or(default.center());
        let h = side / 2.0;
        BoxRegion::new([c[0] - h, c[1] - h, c[2] - h], [c[0] + h, c[1] + h, c[2] + h]).map_err(core_usage)
    }

    fn snr(&self, default: SnrConfig) -> Result<SnrConfig, CliError> {
        SnrConfig::new(self.e_t_j.unwrap_or(default.e_t()), self.n_0_j.unwrap_or(default.n_0())).map_err(core_usage)
    }

    fn environment(&self, default: &Environment) -> Result<Environment, CliError> {
        let kind = match self.environment.as_deref() {
            Some(k) => k,
            None => match default {
                Environment::FiniteRank { .. } => "finite_rank",
                Environment::Smooth(_) => "smooth",
                Environment::Zero => "zero",
            },
        };
        match kind {
            "zero" => Ok(Environment::Zero),
            "finite_rank" => {
                let (rank, l_max, components) = match default {
                    Environment::FiniteRank { rank, l_max, components } => (*rank, *l_max, components.clone()),
                    _ => (2, 2, vec![0]),
                };
                Ok(Environment::FiniteRank {
                    rank: self.rank.unwrap_or(rank),
                    l_max: self.mode_l_max.unwrap_or(l_max),
                    components: self.mode_components.clone().unwrap_or(components),
                })
            }
            "smooth" => {
                let base = match default {
                    Environment::Smooth(s) => s.clone(),
                    _ => SmoothSpread::new(
                        5.0,
                        SmoothSpread::matrix_unit(0, 0, C64::new(1.0, 0.0)),
                        Direction::new(1.0, 0.5).map_err(core_usage)?,
                        Direction::new(2.0, 3.5).map_err(core_usage)?,
                    )
                    .map_err(core_usage)?,
                };
                let amplitude =
                    if self.amplitude_component.is_some() || self.amplitude_re.is_some() || self.amplitude_im.is_some()
                    {
                        let [i, j] = self.amplitude_component.unwrap_or([0, 0]);
                        if i >= 6 || j >= 6 {
                            return Err(usage("amplitude_component entries must be in 0..6"));
                        }
                        SmoothSpread::matrix_unit(
                            i,
                            j,
                            C64::new(self.amplitude_re.unwrap_or(1.0), self.amplitude_im.unwrap_or(0.0)),
                        )
                    } else {
                        base.amplitude
                    };
                let dir = |theta: Option<f64>, phi: Option<f64>, d: Direction| {
                    Direction::new(theta.unwrap_or(d.theta), phi.unwrap_or(d.phi)).map_err(core_usage)
                };
                let sp = SmoothSpread::new(
                    self.kappa.unwrap_or(base.kappa),
                    amplitude,
                    dir(self.mu_r_theta_rad, self.mu_r_phi_rad, base.mu_r)?,
                    dir(self.mu_t_theta_rad, self.mu_t_phi_rad, base.mu_t)?,
                )
                .map_err(core_usage)?;
                Ok(Environment::Smooth(sp))
            }
            other => Err(usage(format!("unknown environment {other:?} (finite_rank | smooth | zero)"))),
        }
    }

    /// Sweep spec: the regime's shipped defaults with config overrides.
    pub fn sweep_spec(&self, seed: Option<u64>, resolution: Option<usize>) -> Result<SweepSpec, CliError> {
        let regime = self.regime()?;
        let d = SweepSpec::default_for(regime);
        let spec = SweepSpec {
            regime,
            counts: self.counts.clone().unwrap_or(d.counts.clone()),
            fixed_count: self.fixed_count.unwrap_or(d.fixed_count),
            ratio: self.ratio.unwrap_or(d.ratio),
            environment: self.environment(&d.environment)?,
            region: self.region(d.region)?,
            tx_scheme: Self::scheme(&self.tx_scheme, d.tx_scheme)?,
            rx_scheme: Self::scheme(&self.rx_scheme, d.rx_scheme)?,
            polarization: self.polarization_component.unwrap_or(d.polarization),
            wavenumber: self.k_rad_per_m.unwrap_or(d.wavenumber),
            snr: self.snr(d.snr)?,
            resolution: resolution.or(self.resolution).unwrap_or(d.resolution),
            seed: seed.or(self.seed).unwrap_or(d.seed),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            order: self.smoothness_order.unwrap_or(d.order),
            tolerances: d.tolerances,
        };
        spec.validate().map_err(core_usage)?;
        Ok(spec)
    }

    /// Single-point capacity setup, reusing the saturation defaults for
    /// geometry and environment.
    pub fn capacity_setup(&self, seed: Option<u64>, resolution: Option<usize>) -> Result<CapacitySetup, CliError> {
        let d = SweepSpec::default_for(Regime::TxSaturation);
        let environment = self.environment(&d.environment)?;
        let routes = match &self.routes {
            Some(names) => names
                .iter()
                .map(|n| Route::parse(n).ok_or_else(|| usage(format!("unknown route {n:?}"))))
                .collect::<Result<Vec<_>, _>>()?,
            None if matches!(environment, Environment::FiniteRank { .. }) => Route::ALL.to_vec(),
            None => vec![Route::Direct, Route::Fredholm],
        };
        if routes.is_empty() {
            return Err(usage("at least one route is required"));
        }
        if routes.contains(&Route::FiniteRank) && !matches!(environment, Environment::FiniteRank { .. }) {
            return Err(usage("the finite_rank route needs environment = finite_rank"));
        }
        let spec = SweepSpec {
            // Validation only: the count list is irrelevant for one point.
            counts: vec![1, 2, 3, 4],
            fixed_count: 1,
            environment,
            region: self.region(d.region)?,
            tx_scheme: Self::scheme(&self.tx_scheme, d.tx_scheme)?,
            rx_scheme: Self::scheme(&self.rx_scheme, d.rx_scheme)?,
            polarization: self.polarization_component.unwrap_or(d.polarization),
            wavenumber: self.k_rad_per_m.unwrap_or(d.wavenumber),
            snr: self.snr(d.snr)?,
            resolution: resolution.or(self.resolution).unwrap_or(d.resolution),
            seed: seed.or(self.seed).unwrap_or(d.seed),
            ..d
        };
        spec.validate().map_err(core_usage)?;
        let tx_count = self.tx_count.unwrap_or(4);
        let rx_count = self.rx_count.unwrap_or(4);
        if tx_count == 0 || rx_count == 0 {
            return Err(usage("tx_count and rx_count must be positive"));
        }
        Ok(CapacitySetup { spec, tx_count, rx_count, routes })
    }

    pub fn resolution_or(&self, flag: Option<usize>, default: usize) -> usize {
        flag.or(self.resolution).unwrap_or(default)
    }

    pub fn seed_or(&self, flag: Option<u64>, default: u64) -> u64 {
        flag.or(self.seed).unwrap_or(default)
    }
}

#[derive(Debug, Clone)]
pub struct CapacitySetup {
    pub spec: SweepSpec,
    pub tx_count: usize,
    pub rx_count: usize,
    pub routes: Vec<Route>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::parse(r#"{"box_side": 1.0}"#), Err(CliError::Usage(_))));
        assert!(RunConfig::parse(r#"{"box_side_m": 1.0}"#).is_ok());
    }

    #[test]
    fn empty_config_gives_regime_defaults() {
        let cfg = RunConfig::parse("{}").unwrap();
        let spec = cfg.sweep_spec(None, None).unwrap();
        assert_eq!(spec, SweepSpec::default_for(Regime::TxSaturation));
    }

    #[test]
    fn overrides_apply() {
        let cfg = RunConfig::parse(
            r#"{"regime": "rx_log", "counts": [4, 8, 16, 32], "box_side_m": 0.25, "e_t_j": 2.0, "rx_scheme": "lattice"}"#,
        )
        .unwrap();
        let spec = cfg.sweep_spec(Some(9), Some(6)).unwrap();
        assert_eq!(spec.regime, Regime::RxLog);
        assert_eq!(spec.counts, vec![4, 8, 16, 32]);
        assert!((spec.region.sides()[0] - 0.25).abs() < 1e-15);
        assert_eq!((spec.seed, spec.resolution, spec.snr.e_t()), (9, 6, 2.0));
        assert_eq!(spec.rx_scheme, FillScheme::Lattice);
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        for text in [
            r#"{"regime": "sideways"}"#,
            r#"{"counts": [4, 8]}"#,
            r#"{"e_t_j": -1.0}"#,
            r#"{"tx_scheme": "random"}"#,
            r#"{"environment": "smooth", "routes": ["finite_rank"]}"#,
        ] {
            let cfg = RunConfig::parse(text).unwrap();
            let res = cfg.sweep_spec(None, None).map(|_| ()).and(cfg.capacity_setup(None, None).map(|_| ()));
            assert!(matches!(res, Err(CliError::Usage(_))), "{text}");
        }
    }

    #[test]
    fn capacity_routes_follow_environment() {
        let cfg = RunConfig::parse(r#"{"environment": "smooth"}"#).unwrap();
        assert_eq!(cfg.capacity_setup(None, None).unwrap().routes, vec![Route::Direct, Route::Fredholm]);
        let cfg = RunConfig::parse("{}").unwrap();
        assert_eq!(cfg.capacity_setup(None, None).unwrap().routes, Route::ALL.to_vec());
    }
}
