//! Scenario definitions: boundary data, initial speed, vehicle constants and
//! solver settings, stored as TOML.
//!
//! Boundary points take `r` (or altitude `h`), `gamma`, `chi`, and either
//! `lat`/`lon` in radians or `lat_arc`/`lon_arc` as arc lengths in meters,
//! converted by dividing by the planet radius.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6, FRAC_PI_8};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::continuation::ContinuationOpts;
use crate::error::{Error, Result};
use crate::simplified::SimplifiedState;
use crate::vehicle::{FullState, VehicleParams, CHART_TOLERANCE};

pub const BUNDLED: [&str; 3] = ["S1", "S2", "S3"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub y0: SimplifiedState,
    pub yf: SimplifiedState,
    /// Initial speed [m/s].
    pub v0: f64,
    pub vehicle: VehicleParams,
    pub solver: ContinuationOpts,
    /// Target the desired final point directly in the first step instead
    /// of the zero-control endpoint.
    pub shortcut_target: bool,
    /// Horizon [s] of the zero-control flight defining the first target;
    /// defaults to the initial range over `v0`.
    pub tf_guess: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lat_arc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lon_arc: Option<f64>,
    gamma: f64,
    chi: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    name: Option<String>,
    v0: f64,
    #[serde(default)]
    shortcut_target: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tf_guess: Option<f64>,
    y0: PointFile,
    yf: PointFile,
    #[serde(default)]
    vehicle: VehicleParams,
    #[serde(default)]
    solver: ContinuationOpts,
}

fn pick(field: &str, direct: Option<f64>, derived: Option<f64>) -> Result<f64> {
    match (direct, derived) {
        (Some(v), None) | (None, Some(v)) => Ok(v),
        (Some(_), Some(_)) => Err(Error::validation(
            field,
            "given twice (direct and derived form)",
        )),
        (None, None) => Err(Error::validation(field, "missing")),
    }
}

impl PointFile {
    fn resolve(&self, prefix: &str, rt: f64) -> Result<SimplifiedState> {
        let f = |name: &str| format!("{prefix}.{name}");
        Ok(SimplifiedState {
            r: pick(&f("r"), self.r, self.h.map(|h| rt + h))?,
            lat: pick(&f("lat"), self.lat, self.lat_arc.map(|a| a / rt))?,
            lon: pick(&f("lon"), self.lon, self.lon_arc.map(|a| a / rt))?,
            gamma: self.gamma,
            chi: self.chi,
        })
    }

    fn from_state(y: &SimplifiedState) -> Self {
        Self {
            r: Some(y.r),
            lat: Some(y.lat),
            lon: Some(y.lon),
            gamma: y.gamma,
            chi: y.chi,
            ..Default::default()
        }
    }
}

fn validate_point(prefix: &str, y: &SimplifiedState, p: &VehicleParams) -> Result<()> {
    let field = |name: &str| format!("{prefix}.{name}");
    for (name, v) in [
        ("r", y.r),
        ("lat", y.lat),
        ("lon", y.lon),
        ("gamma", y.gamma),
        ("chi", y.chi),
    ] {
        if !v.is_finite() {
            return Err(Error::validation(field(name), "must be finite"));
        }
    }
    if !(y.r > p.r_earth - p.hr) {
        return Err(Error::validation(
            field("r"),
            format!("must exceed r_earth - hr = {}", p.r_earth - p.hr),
        ));
    }
    if y.lat.cos().abs() < CHART_TOLERANCE || y.lat.abs() >= FRAC_PI_2 {
        return Err(Error::validation(field("lat"), "must satisfy |lat| < pi/2"));
    }
    if y.gamma.cos().abs() < CHART_TOLERANCE || y.gamma.abs() > std::f64::consts::PI {
        return Err(Error::validation(
            field("gamma"),
            "must satisfy |gamma| <= pi and cos(gamma) != 0",
        ));
    }
    Ok(())
}

impl Scenario {
    /// Bundled scenario by name (`S1`, `S2`, `S3`, case-insensitive).
    pub fn bundled(name: &str) -> Option<Scenario> {
        let vehicle = VehicleParams::default();
        let rt = vehicle.r_earth;
        let point = |h: f64, lat_arc: f64, lon_arc: f64, gamma: f64, chi: f64| SimplifiedState {
            r: rt + h,
            lat: lat_arc / rt,
            lon: lon_arc / rt,
            gamma,
            chi,
        };
        let start = |gamma: f64| point(3000.0, 5_454_661.0, 46_086.0, gamma, 0.0);
        let (y0, yf, shortcut) = match name.to_ascii_uppercase().as_str() {
            "S1" => (
                start(-FRAC_PI_6),
                point(12000.0, 5_475_000.0, 42_000.0, 0.0, FRAC_PI_8),
                true,
            ),
            "S2" => (
                start(FRAC_PI_4),
                point(12000.0, 5_485_000.0, 36_178.0, -FRAC_PI_4, -FRAC_PI_2),
                true,
            ),
            "S3" => (
                start(0.0),
                point(3000.0, 5_485_000.0, 46_086.0, 0.0, 0.0),
                false,
            ),
            _ => return None,
        };
        Some(Scenario {
            name: name.to_ascii_uppercase(),
            y0,
            yf,
            v0: 1000.0,
            vehicle,
            solver: ContinuationOpts::default(),
            shortcut_target: shortcut,
            tf_guess: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v0 > 0.0 && self.v0.is_finite()) {
            return Err(Error::validation(
                "v0",
                format!("must be positive, got {}", self.v0),
            ));
        }
        self.vehicle.validate()?;
        self.solver.validate()?;
        validate_point("y0", &self.y0, &self.vehicle)?;
        validate_point("yf", &self.yf, &self.vehicle)?;
        if self.y0 == self.yf {
            return Err(Error::validation("yf", "must differ from y0"));
        }
        if let Some(t) = self.tf_guess {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::validation("tf_guess", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Scenario> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let rt = file.vehicle.r_earth;
        let s = Scenario {
            name: file.name.unwrap_or_else(|| "custom".into()),
            y0: file.y0.resolve("y0", rt)?,
            yf: file.yf.resolve("yf", rt)?,
            v0: file.v0,
            vehicle: file.vehicle,
            solver: file.solver,
            shortcut_target: file.shortcut_target,
            tf_guess: file.tf_guess,
        };
        s.validate()?;
        Ok(s)
    }

    /// TOML with angles in radians, so loading it back is exact.
    pub fn to_toml(&self) -> Result<String> {
        let file = ScenarioFile {
            name: Some(self.name.clone()),
            v0: self.v0,
            shortcut_target: self.shortcut_target,
            tf_guess: self.tf_guess,
            y0: PointFile::from_state(&self.y0),
            yf: PointFile::from_state(&self.yf),
            vehicle: self.vehicle,
            solver: self.solver.clone(),
        };
        toml::to_string(&file).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Resolves a bundled name first, then a file path.
    pub fn load(name_or_path: &str) -> Result<Scenario> {
        if let Some(s) = Scenario::bundled(name_or_path) {
            return Ok(s);
        }
        if !Path::new(name_or_path).exists() {
            return Err(Error::validation(
                "scenario",
                format!(
                    "`{name_or_path}` is neither a bundled scenario ({}) nor a file",
                    BUNDLED.join(", ")
                ),
            ));
        }
        let text = std::fs::read_to_string(name_or_path)?;
        Scenario::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn x0(&self) -> FullState {
        FullState {
            r: self.y0.r,
            lat: self.y0.lat,
            lon: self.y0.lon,
            w: self.v0.ln(),
            gamma: self.y0.gamma,
            chi: self.y0.chi,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bundled_values() {
        let s1 = Scenario::bundled("S1").unwrap();
        let rt = 6378137.0;
        assert_eq!(s1.y0.r, rt + 3000.0);
        assert_relative_eq!(s1.y0.lat, 5454661.0 / rt);
        assert_relative_eq!(s1.y0.lon, 46086.0 / rt);
        assert_eq!(s1.y0.gamma, -FRAC_PI_6);
        assert_eq!(s1.yf.chi, FRAC_PI_8);
        let s3 = Scenario::bundled("s3").unwrap();
        assert_eq!((s3.y0.gamma, s3.y0.chi), (0.0, 0.0));
        assert_eq!(s3.yf.r, s3.y0.r);
        assert_eq!(s3.yf.lon, s3.y0.lon);
        assert!(s3.yf.lat > s3.y0.lat);
        assert!(!s3.shortcut_target);
        for name in BUNDLED {
            Scenario::bundled(name).unwrap().validate().unwrap();
        }
        assert!(Scenario::bundled("S4").is_none());
    }

    #[test]
    fn toml_round_trip_is_exact() {
        for name in BUNDLED {
            let s = Scenario::bundled(name).unwrap();
            let back = Scenario::from_toml(&s.to_toml().unwrap()).unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn arc_length_coordinates() {
        let text = r#"
            v0 = 900.0
            [y0]
            h = 3000.0
            lat_arc = 5454661.0
            lon_arc = 46086.0
            gamma = 0.0
            chi = 0.0
            [yf]
            h = 3000.0
            lat_arc = 5485000.0
            lon_arc = 46086.0
            gamma = 0.0
            chi = 0.0
            [vehicle]
            m0 = 2000.0
        "#;
        let s = Scenario::from_toml(text).unwrap();
        let s3 = Scenario::bundled("S3").unwrap();
        assert_eq!(s.y0, s3.y0);
        assert_eq!(s.yf, s3.yf);
        assert_eq!(s.vehicle.m0, 2000.0);
        assert_eq!(s.v0, 900.0);
    }

    #[test]
    fn validation_names_the_field() {
        let mut s = Scenario::bundled("S1").unwrap();
        s.v0 = 0.0;
        let text = s.to_toml().unwrap();
        match Scenario::from_toml(&text) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "v0"),
            other => panic!("unexpected {other:?}"),
        }
        let mut s = Scenario::bundled("S1").unwrap();
        s.yf = s.y0;
        assert!(matches!(s.validate(), Err(Error::Validation { field, .. }) if field == "yf"));
        let mut s = Scenario::bundled("S1").unwrap();
        s.y0.gamma = FRAC_PI_2;
        assert!(
            matches!(s.validate(), Err(Error::Validation { field, .. }) if field == "y0.gamma")
        );
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(Scenario::from_toml("v0 = "), Err(Error::Parse(_))));
        assert!(matches!(
            Scenario::from_toml("v0 = 1.0\nbogus = 2\n"),
            Err(Error::Parse(_))
        ));
        let twice = r#"
            v0 = 900.0
            [y0]
            r = 6381137.0
            h = 3000.0
            lat = 0.8
            lon = 0.0
            gamma = 0.0
            chi = 0.0
            [yf]
            r = 6381137.0
            lat = 0.81
            lon = 0.0
            gamma = 0.0
            chi = 0.0
        "#;
        assert!(
            matches!(Scenario::from_toml(twice), Err(Error::Validation { field, .. }) if field == "y0.r")
        );
    }
}
