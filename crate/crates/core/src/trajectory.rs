//! Sampled solutions and their CSV form.
//!
//! Columns, in order: `t` (or `s` for abscissa-domain trajectories), `r`,
//! `lat`, `lon`, `w`, `gamma`, `chi`, `pr`, `p_lat`, `p_lon`, `pw`,
//! `p_gamma`, `p_chi`, `u`, `beta`, `u1`, `u2`, `H`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::full_ocp::FullCostate;
use crate::vehicle::{ControlTB, FullState};

pub const CSV_COLUMNS: [&str; 17] = [
    "r", "lat", "lon", "w", "gamma", "chi", "pr", "p_lat", "p_lon", "pw", "p_gamma", "p_chi", "u",
    "beta", "u1", "u2", "H",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Independent variable is time [s].
    Time,
    /// Independent variable is the curvilinear abscissa [m].
    Abscissa,
}

impl Domain {
    pub fn column(self) -> &'static str {
        match self {
            Domain::Time => "t",
            Domain::Abscissa => "s",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub grid: f64,
    pub state: FullState,
    pub costate: FullCostate,
    pub control: ControlTB,
    pub hamiltonian: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub domain: Domain,
    samples: Vec<TrajectorySample>,
}

impl Trajectory {
    /// Fails unless the grid is strictly increasing.
    pub fn new(domain: Domain, samples: Vec<TrajectorySample>) -> Result<Self> {
        if samples.windows(2).any(|w| !(w[1].grid > w[0].grid)) {
            return Err(Error::validation(
                "trajectory.grid",
                "grid must be strictly increasing",
            ));
        }
        Ok(Self { domain, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn first(&self) -> Option<&TrajectorySample> {
        self.samples.first()
    }

    pub fn last(&self) -> Option<&TrajectorySample> {
        self.samples.last()
    }

    pub fn max_abs_u_components(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| {
                let (u1, u2) = s.control.components();
                u1.abs().max(u2.abs())
            })
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![self.domain.column()];
        header.extend(CSV_COLUMNS);
        w.write_record(&header).map_err(csv_error)?;
        for s in &self.samples {
            let (u1, u2) = s.control.components();
            let mut row = vec![s.grid];
            row.extend(s.state.to_array());
            row.extend(s.costate.to_array());
            row.extend([s.control.u, s.control.beta, u1, u2, s.hamiltonian]);
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads the CSV layout written by [`Trajectory::write_csv`]. The domain
    /// comes from the name of the first column.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(csv_error)?.clone();
        let domain = match header.get(0) {
            Some("t") => Domain::Time,
            Some("s") => Domain::Abscissa,
            other => {
                return Err(Error::Parse(format!(
                    "first column must be `t` or `s`, found {other:?}"
                )))
            }
        };
        let names: Vec<&str> = header.iter().skip(1).collect();
        if names != CSV_COLUMNS {
            return Err(Error::Parse(format!("unexpected columns {names:?}")));
        }
        let mut samples = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record.map_err(csv_error)?;
            let vals = record
                .iter()
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", line + 1)))?;
            if vals.len() != CSV_COLUMNS.len() + 1 {
                return Err(Error::Parse(format!("row {}: wrong field count", line + 1)));
            }
            samples.push(TrajectorySample {
                grid: vals[0],
                state: FullState::from_array(vals[1..7].try_into().unwrap()),
                costate: FullCostate::from_array(vals[7..13].try_into().unwrap()),
                control: ControlTB {
                    u: vals[13],
                    beta: vals[14],
                },
                hamiltonian: vals[17],
            });
        }
        Self::new(domain, samples)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(grid: f64) -> TrajectorySample {
        TrajectorySample {
            grid,
            state: FullState::from_array([6381137.0, 0.855, 0.0072, 6.9, -0.5, 0.1 + grid]),
            costate: FullCostate::from_array([1e-5, 321.5, -12.25, 0.0, 0.0123456789012345, -3e-9]),
            control: ControlTB { u: 0.3, beta: -2.9 },
            hamiltonian: 1.5e-13,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let traj = Trajectory::new(
            Domain::Time,
            (0..5).map(|i| sample(i as f64 * 0.1)).collect(),
        )
        .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,r,lat,lon,w,gamma,chi,pr,"));
        let back = Trajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, traj);
    }

    #[test]
    fn abscissa_domain_header() {
        let traj = Trajectory::new(Domain::Abscissa, vec![sample(0.0), sample(10.0)]).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"s,"));
        assert_eq!(
            Trajectory::read_csv(buf.as_slice()).unwrap().domain,
            Domain::Abscissa
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Trajectory::new(Domain::Time, vec![sample(1.0), sample(1.0)]).is_err());
        assert!(matches!(
            Trajectory::read_csv("x,r\n1,2\n".as_bytes()),
            Err(Error::Parse(_))
        ));
        let mut header = String::from("t,");
        header.push_str(&CSV_COLUMNS.join(","));
        let bad = format!("{header}\n0,1,2\n");
        assert!(Trajectory::read_csv(bad.as_bytes()).is_err());
    }

    proptest::proptest! {
        #[test]
        fn csv_round_trip_any_finite(
            vals in proptest::collection::vec(-1e12f64..1e12, 17),
            steps in proptest::collection::vec(1e-9f64..1e3, 1..6),
        ) {
            let mut grid = 0.0;
            let samples: Vec<TrajectorySample> = steps
                .iter()
                .map(|h| {
                    grid += h;
                    TrajectorySample {
                        grid,
                        state: FullState::from_array(vals[0..6].try_into().unwrap()),
                        costate: FullCostate::from_array(vals[6..12].try_into().unwrap()),
                        control: ControlTB { u: vals[12], beta: vals[13] },
                        hamiltonian: vals[16],
                    }
                })
                .collect();
            let traj = Trajectory::new(Domain::Time, samples).unwrap();
            let mut buf = Vec::new();
            traj.write_csv(&mut buf).unwrap();
            proptest::prop_assert_eq!(Trajectory::read_csv(buf.as_slice()).unwrap(), traj);
        }
    }
}
