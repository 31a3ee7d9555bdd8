//! Standalone solver instance files for testing the schedulers from the
//! command line.
//!
//! Format: two header lines then one row per request.
//!
//! ```text
//! robots,now_s,load_s,unload_s
//! 2,0,5,5
//! id,release_s,one_way_s,process_s,self_s,full_s,fill_sd_s,full_y_m
//! 1,30,30,70,,,,
//! ```
//!
//! The last four columns are optional and only needed by the scenario
//! solvers: `self_s` is the picker's round-trip self-transport time,
//! `full_s` the (mean) full-tray instant, `fill_sd_s` its standard
//! deviation for scenario sampling, and `full_y_m` the along-row
//! coordinate of the full-tray location (defaults to 10 m, i.e. away from
//! the row end).

use std::path::Path;

use crate::det::{SolverInstance, SolverJob};
use crate::error::{Error, Result};
use crate::field::Point;
use crate::msa::{Scenario, ScenarioRequest};

#[derive(Debug, Clone, Copy)]
pub struct InstanceRow {
    pub id: u64,
    pub release_s: f64,
    pub one_way_s: f64,
    pub process_s: f64,
    pub self_s: Option<f64>,
    pub full_s: Option<f64>,
    pub fill_sd_s: Option<f64>,
    pub full_y_m: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct InstanceFile {
    pub robots: usize,
    pub now_s: f64,
    pub load_s: f64,
    pub unload_s: f64,
    pub rows: Vec<InstanceRow>,
}

impl InstanceFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (line_no, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            reason: "empty instance file".into(),
        })?;
        if header != "robots,now_s,load_s,unload_s" {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("expected header `robots,now_s,load_s,unload_s`, got `{header}`"),
            });
        }
        let (line_no, values) = lines.next().ok_or(Error::Parse {
            line: line_no,
            reason: "missing instance header values".into(),
        })?;
        let parts: Vec<&str> = values.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("expected 4 header values, got {}", parts.len()),
            });
        }
        let num = |s: &str, what: &str, line: usize| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| Error::Parse {
                line,
                reason: format!("invalid {what}: `{s}`"),
            })
        };
        let robots = num(parts[0], "robots", line_no)? as usize;
        let now_s = num(parts[1], "now_s", line_no)?;
        let load_s = num(parts[2], "load_s", line_no)?;
        let unload_s = num(parts[3], "unload_s", line_no)?;

        let (line_no, columns) = lines.next().ok_or(Error::Parse {
            line: line_no,
            reason: "missing request column header".into(),
        })?;
        if !columns.starts_with("id,release_s,one_way_s,process_s") {
            return Err(Error::Parse {
                line: line_no,
                reason: format!(
                    "expected columns `id,release_s,one_way_s,process_s[,self_s,full_s,fill_sd_s,full_y_m]`, got `{columns}`"
                ),
            });
        }

        let mut rows = Vec::new();
        for (line, text) in lines {
            let parts: Vec<&str> = text.split(',').collect();
            if parts.len() < 4 {
                return Err(Error::Parse {
                    line,
                    reason: format!("expected at least 4 columns, got {}", parts.len()),
                });
            }
            let opt = |idx: usize, what: &str| -> Result<Option<f64>> {
                match parts.get(idx).map(|s| s.trim()) {
                    None | Some("") => Ok(None),
                    Some(s) => num(s, what, line).map(Some),
                }
            };
            rows.push(InstanceRow {
                id: num(parts[0], "id", line)? as u64,
                release_s: num(parts[1], "release_s", line)?,
                one_way_s: num(parts[2], "one_way_s", line)?,
                process_s: num(parts[3], "process_s", line)?,
                self_s: opt(4, "self_s")?,
                full_s: opt(5, "full_s")?,
                fill_sd_s: opt(6, "fill_sd_s")?,
                full_y_m: opt(7, "full_y_m")?,
            });
        }
        if rows.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                reason: "instance has no request rows".into(),
            });
        }
        Ok(Self {
            robots,
            now_s,
            load_s,
            unload_s,
            rows,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// View as a parallel-machine solver instance (robots idle at `now`).
    pub fn solver_instance(&self) -> SolverInstance {
        let jobs = self
            .rows
            .iter()
            .map(|r| SolverJob::new(r.id, self.now_s + r.release_s, r.process_s))
            .collect();
        SolverInstance::new(jobs, vec![self.now_s; self.robots], self.now_s)
    }

    /// View as one deterministic scenario for the rejection-aware solvers.
    /// Requires the `self_s` and `full_s` columns.
    pub fn scenario(&self) -> Result<Scenario> {
        let mut requests = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let self_s = row.self_s.ok_or(Error::Parse {
                line: 0,
                reason: format!("request {} lacks the self_s column", row.id),
            })?;
            let full_s = row.full_s.ok_or(Error::Parse {
                line: 0,
                reason: format!("request {} lacks the full_s column", row.id),
            })?;
            requests.push(ScenarioRequest {
                id: row.id,
                full_at: self.now_s + full_s,
                one_way_s: row.one_way_s,
                self_transport_s: self_s,
                full_location: Point::new(0.0, row.full_y_m.unwrap_or(10.0)),
            });
        }
        Ok(Scenario {
            requests,
            load_s: self.load_s,
            unload_s: self.unload_s,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const INSTANCE_A: &str = "\
robots,now_s,load_s,unload_s
2,0,5,5
id,release_s,one_way_s,process_s
1,30,30,70
2,0,40,90
3,80,20,50
";

    #[test]
    fn parses_deterministic_instance() {
        let inst = InstanceFile::parse(INSTANCE_A).unwrap();
        assert_eq!(inst.robots, 2);
        assert_eq!(inst.rows.len(), 3);
        let solver = inst.solver_instance();
        let brute = crate::det::brute_force_schedule(&solver).unwrap();
        assert_eq!(brute.objective, 330.0);
    }

    #[test]
    fn parses_scenario_columns() {
        let text = "\
robots,now_s,load_s,unload_s
1,0,5,5
id,release_s,one_way_s,process_s,self_s,full_s,fill_sd_s,full_y_m
1,0,30,70,185,0,0,40
2,0,35,80,145,10,0,45
";
        let inst = InstanceFile::parse(text).unwrap();
        let scn = inst.scenario().unwrap();
        assert_eq!(scn.requests.len(), 2);
        let sol =
            crate::msa::solve_scenario_exact(&scn, &[0.0], 0.0, 6, 1.0, true).unwrap();
        assert_eq!(sol.objective, 135.0);
    }

    #[test]
    fn reports_parse_errors_with_line_numbers() {
        let bad = "robots,now_s,load_s,unload_s\n2,0,5\n";
        match InstanceFile::parse(bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad_row = "\
robots,now_s,load_s,unload_s
1,0,5,5
id,release_s,one_way_s,process_s
1,abc,30,70
";
        assert!(matches!(
            InstanceFile::parse(bad_row),
            Err(Error::Parse { line: 4, .. })
        ));
    }

    #[test]
    fn missing_scenario_columns_is_an_error() {
        let inst = InstanceFile::parse(INSTANCE_A).unwrap();
        assert!(inst.scenario().is_err());
    }
}
