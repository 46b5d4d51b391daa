use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeFamily {
    Box,
    Cylinder,
    Sphere,
    #[serde(rename = "lbracket")]
    LBracket,
    Ring,
    Wedge,
    Cone,
    #[serde(rename = "tblock")]
    TBlock,
}

/// Colors objects of a family are drawn from. Palettes overlap across
/// families so that color alone does not identify the family.
const PALETTES: [[[f32; 3]; 4]; 8] = [
    [[0.85, 0.20, 0.15], [0.20, 0.45, 0.85], [0.95, 0.80, 0.20], [0.25, 0.70, 0.30]],
    [[0.90, 0.55, 0.10], [0.55, 0.25, 0.70], [0.20, 0.45, 0.85], [0.90, 0.90, 0.90]],
    [[0.25, 0.70, 0.30], [0.85, 0.20, 0.15], [0.10, 0.65, 0.70], [0.90, 0.40, 0.65]],
    [[0.15, 0.15, 0.20], [0.95, 0.80, 0.20], [0.55, 0.25, 0.70], [0.90, 0.55, 0.10]],
    [[0.10, 0.65, 0.70], [0.90, 0.40, 0.65], [0.85, 0.20, 0.15], [0.15, 0.15, 0.20]],
    [[0.20, 0.45, 0.85], [0.25, 0.70, 0.30], [0.90, 0.90, 0.90], [0.90, 0.55, 0.10]],
    [[0.95, 0.80, 0.20], [0.10, 0.65, 0.70], [0.15, 0.15, 0.20], [0.55, 0.25, 0.70]],
    [[0.90, 0.40, 0.65], [0.90, 0.90, 0.90], [0.25, 0.70, 0.30], [0.20, 0.45, 0.85]],
];

impl ShapeFamily {
    pub const ALL: [ShapeFamily; 8] = [
        ShapeFamily::Box,
        ShapeFamily::Cylinder,
        ShapeFamily::Sphere,
        ShapeFamily::LBracket,
        ShapeFamily::Ring,
        ShapeFamily::Wedge,
        ShapeFamily::Cone,
        ShapeFamily::TBlock,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeFamily::Box => "box",
            ShapeFamily::Cylinder => "cylinder",
            ShapeFamily::Sphere => "sphere",
            ShapeFamily::LBracket => "lbracket",
            ShapeFamily::Ring => "ring",
            ShapeFamily::Wedge => "wedge",
            ShapeFamily::Cone => "cone",
            ShapeFamily::TBlock => "tblock",
        }
    }

    pub fn palette(self) -> &'static [[f32; 3]; 4] {
        &PALETTES[self as usize]
    }

    /// Relative height in `(0, 1]` at local coordinates `(u, v)` (in units
    /// of the object radius, already rotated), `None` outside the footprint.
    /// `aspect ∈ [0.5, 1]` narrows elongated families.
    pub fn profile(self, u: f32, v: f32, aspect: f32) -> Option<f32> {
        let rho = (u * u + v * v).sqrt();
        let inside = |lo: f32, hi: f32, x: f32| (lo..=hi).contains(&x);
        match self {
            ShapeFamily::Box => (u.abs() <= 0.8 && v.abs() <= 0.8 * aspect).then_some(1.0),
            ShapeFamily::Cylinder => {
                let w = 0.35 + 0.25 * aspect;
                (u.abs() <= 0.9 && v.abs() <= w).then(|| 0.5 + 0.5 * (1.0 - (v / w).powi(2)).max(0.0).sqrt())
            }
            ShapeFamily::Sphere => (rho <= 1.0).then(|| 0.5 + 0.5 * (1.0 - rho * rho).max(0.0).sqrt()),
            ShapeFamily::LBracket => ((inside(-0.8, 0.8, u) && inside(-0.8, -0.3, v))
                || (inside(-0.8, -0.3, u) && inside(-0.8, 0.8, v)))
            .then_some(1.0),
            ShapeFamily::Ring => {
                let t = (rho - 0.775) / 0.225;
                (t.abs() <= 1.0).then(|| 0.4 + 0.6 * (1.0 - t * t).max(0.0).sqrt())
            }
            ShapeFamily::Wedge => {
                (u.abs() <= 0.8 && v.abs() <= 0.8 * aspect).then(|| 0.3 + 0.7 * (u + 0.8) / 1.6)
            }
            ShapeFamily::Cone => (rho <= 1.0).then(|| 0.2 + 0.8 * (1.0 - rho)),
            ShapeFamily::TBlock => ((inside(-0.8, 0.8, u) && inside(0.3, 0.8, v))
                || (inside(-0.25, 0.25, u) && inside(-0.8, 0.3, v)))
            .then_some(1.0),
        }
    }
}

impl fmt::Display for ShapeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        ShapeFamily::ALL
            .into_iter()
            .find(|f| f.name() == key)
            .ok_or_else(|| Error::UnknownClass(s.to_string()))
    }
}
