use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SurfaceError;

/// Sea level over time, piecewise linear between breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hydrograph {
    times: Vec<f64>,
    levels: Vec<f64>,
}

impl Hydrograph {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, SurfaceError> {
        if points.is_empty() {
            return Err(SurfaceError::Hydrograph("no breakpoints".into()));
        }
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(SurfaceError::Hydrograph("times must be strictly increasing".into()));
        }
        if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(SurfaceError::Hydrograph("non-finite breakpoint".into()));
        }
        Ok(Hydrograph {
            times: points.iter().map(|p| p.0).collect(),
            levels: points.iter().map(|p| p.1).collect(),
        })
    }

    pub fn constant(level: f64, start: f64, end: f64) -> Self {
        Hydrograph::new(vec![(start, level), (end, level)]).expect("start < end")
    }

    /// Parses `t_seconds,level_m` records. A leading non-numeric header row
    /// and `#` comment lines are skipped.
    pub fn from_csv(text: &str) -> Result<Self, SurfaceError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut points = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| SurfaceError::Hydrograph(e.to_string()))?;
            if rec.len() < 2 {
                return Err(SurfaceError::Hydrograph(format!("record {}: expected 2 fields", i + 1)));
            }
            let (t, h) = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
            match (t, h) {
                (Ok(t), Ok(h)) => points.push((t, h)),
                _ if i == 0 => continue,
                _ => {
                    return Err(SurfaceError::Hydrograph(format!(
                        "record {}: non-numeric field in {:?}",
                        i + 1,
                        rec.iter().collect::<Vec<_>>()
                    )))
                }
            }
        }
        Hydrograph::new(points)
    }

    pub fn load(path: &Path) -> Result<Self, crate::Error> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        Ok(Hydrograph::from_csv(&text)?)
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn max_level(&self) -> f64 {
        self.levels.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.levels.iter().copied())
    }

    pub fn level_at(&self, t: f64) -> Result<f64, SurfaceError> {
        if t < self.start() || t > self.end() {
            return Err(SurfaceError::HydrographRange {
                t,
                start: self.start(),
                end: self.end(),
            });
        }
        let i = self.times.partition_point(|&x| x <= t);
        if i == self.times.len() {
            return Ok(*self.levels.last().unwrap());
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let (h0, h1) = (self.levels[i - 1], self.levels[i]);
        Ok(h0 + (h1 - h0) * (t - t0) / (t1 - t0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_and_rejects_out_of_range() {
        let h = Hydrograph::new(vec![(0.0, 1.0), (100.0, 2.0), (200.0, 1.0)]).unwrap();
        assert_eq!(h.level_at(50.0).unwrap(), 1.5);
        assert_eq!(h.level_at(200.0).unwrap(), 1.0);
        assert_eq!(h.level_at(100.0).unwrap(), 2.0);
        assert!(matches!(h.level_at(201.0), Err(SurfaceError::HydrographRange { .. })));
    }

    #[test]
    fn parses_csv_with_header() {
        let h = Hydrograph::from_csv("t_seconds,level_m\n0,1.0\n# mid\n3600, 1.8\n").unwrap();
        assert_eq!(h.points().collect::<Vec<_>>(), vec![(0.0, 1.0), (3600.0, 1.8)]);
        assert!(Hydrograph::from_csv("0,1\n10,x\n").is_err());
        assert!(Hydrograph::from_csv("0,1\n0,2\n").is_err());
    }
}
