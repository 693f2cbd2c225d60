//! The four compared estimators and their default settings.

use std::fmt;
use std::str::FromStr;

use dskf_core::filter::{DEFAULT_DIAG_FLOOR, DEFAULT_EXPONENT, DEFAULT_THETA};
use dskf_core::io::MethodSettings;

/// Length of one filter step in the kinematic model. The model runs in step units so
/// the derivative blocks of `P` stay on the same scale as the activity block.
pub const MODEL_DT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Skf,
    Sskf,
    Dskf2,
    Dskf3,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Skf, Method::Sskf, Method::Dskf2, Method::Dskf3];

    pub fn name(self) -> &'static str {
        match self {
            Method::Skf => "skf",
            Method::Sskf => "sskf",
            Method::Dskf2 => "dskf2",
            Method::Dskf3 => "dskf3",
        }
    }

    /// Label used in tables and plots.
    pub fn display_name(self) -> &'static str {
        match self {
            Method::Skf => "SKF",
            Method::Sskf => "SSKF",
            Method::Dskf2 => "2-DSKF",
            Method::Dskf3 => "3-DSKF",
        }
    }

    /// Kinematic order `s`: random walk, constant velocity, constant acceleration.
    pub fn order(self) -> usize {
        match self {
            Method::Skf | Method::Sskf => 0,
            Method::Dskf2 => 1,
            Method::Dskf3 => 2,
        }
    }

    pub fn smoothed(self) -> bool {
        self == Method::Sskf
    }

    /// Process-noise scale picked by `dskf sweep` on the default scenario at 30 dB
    /// (half-decade grid from 1e-4 to 1e3).
    pub fn default_phi(self) -> f64 {
        match self {
            Method::Skf => 0.1,
            Method::Sskf => 10f64.powf(-3.5),
            Method::Dskf2 => 10f64.powf(-0.5),
            Method::Dskf3 => 10f64.powf(1.5),
        }
    }

    pub fn settings(self, phi: f64, p: f64, theta: f64, diag_floor: f64) -> MethodSettings {
        MethodSettings {
            name: self.name().to_string(),
            order: self.order(),
            smoothed: self.smoothed(),
            phi,
            p,
            theta,
            diag_floor,
            model_dt: MODEL_DT,
        }
    }

    pub fn default_settings(self) -> MethodSettings {
        self.settings(self.default_phi(), DEFAULT_EXPONENT, DEFAULT_THETA, DEFAULT_DIAG_FLOOR)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "skf" => Ok(Method::Skf),
            "sskf" => Ok(Method::Sskf),
            "dskf2" | "2-dskf" => Ok(Method::Dskf2),
            "dskf3" | "3-dskf" => Ok(Method::Dskf3),
            other => Err(format!("unknown method '{other}' (expected skf, sskf, dskf2 or dskf3)")),
        }
    }
}
