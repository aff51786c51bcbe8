//! Per-control-period trace and its CSV form.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// One DG at one control instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DgSample {
    pub v_od: f64,
    pub v_oq: f64,
    pub p: f64,
    pub q: f64,
    /// Droop input applied over the next control period.
    pub v_n: f64,
    pub s: f64,
    pub e1: f64,
    pub e2: f64,
    pub x_hat: [f64; 3],
    pub vdot_true: f64,
    pub xi_true: f64,
    pub saturated: bool,
    /// Breaker closed.
    pub connected: bool,
    /// Secondary law computing this DG's input.
    pub controlled: bool,
    pub p_diag: [f64; 3],
    pub innovation: f64,
}

impl DgSample {
    pub const COLUMNS: [&'static str; 20] = [
        "v_od", "v_oq", "P", "Q", "V_n", "s", "e1", "e2", "xhat1", "xhat2", "xhat3", "vdot_true", "xi_true",
        "saturated", "connected", "controlled", "P11", "P22", "P33", "innovation",
    ];

    fn values(&self) -> [f64; 20] {
        [
            self.v_od,
            self.v_oq,
            self.p,
            self.q,
            self.v_n,
            self.s,
            self.e1,
            self.e2,
            self.x_hat[0],
            self.x_hat[1],
            self.x_hat[2],
            self.vdot_true,
            self.xi_true,
            self.saturated as u8 as f64,
            self.connected as u8 as f64,
            self.controlled as u8 as f64,
            self.p_diag[0],
            self.p_diag[1],
            self.p_diag[2],
            self.innovation,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub dgs: Vec<DgSample>,
    /// `0.5 * sum s_i^2` over controlled DGs.
    pub lyapunov: f64,
    pub omega_com: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub dg_names: Vec<String>,
    /// Voltage droop gain of each DG, for reactive-sharing metrics.
    pub n_q: Vec<f64>,
    pub records: Vec<TraceRecord>,
}

fn fmt9(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.is_finite() {
        format!("{v:.8e}")
    } else {
        format!("{v}")
    }
}

impl Trace {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for name in &self.dg_names {
            h.extend(DgSample::COLUMNS.iter().map(|c| format!("{name}.{c}")));
        }
        h.push("lyapunov".into());
        h.push("omega_com".into());
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        let mut row = Vec::new();
        for r in &self.records {
            row.clear();
            row.push(fmt9(r.t));
            for d in &r.dgs {
                row.extend(d.values().iter().map(|&v| fmt9(v)));
            }
            row.push(fmt9(r.lyapunov));
            row.push(fmt9(r.omega_com));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn export_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Writes a subset of columns: `t` plus `field(sample)` for every DG.
    pub fn export_slice(
        &self,
        path: impl AsRef<Path>,
        columns: &[(&str, fn(&DgSample) -> f64)],
        extra: &[(&str, fn(&TraceRecord) -> f64)],
    ) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        let mut header = vec!["t".to_string()];
        for name in &self.dg_names {
            header.extend(columns.iter().map(|(c, _)| format!("{name}.{c}")));
        }
        header.extend(extra.iter().map(|(c, _)| c.to_string()));
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![fmt9(r.t)];
            for d in &r.dgs {
                row.extend(columns.iter().map(|(_, f)| fmt9(f(d))));
            }
            row.extend(extra.iter().map(|(_, f)| fmt9(f(r))));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Index of the first record at or after `t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.records.partition_point(|r| r.t < t - 1e-9)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_rows_line_up() {
        let trace = Trace {
            dg_names: vec!["A".into(), "B".into()],
            n_q: vec![1e-3, 1e-3],
            records: vec![TraceRecord {
                t: 0.5,
                dgs: vec![DgSample { v_od: 311.123456789, ..Default::default() }; 2],
                lyapunov: 0.0,
                omega_com: 314.159265358979,
            }],
        };
        let csv = trace.to_csv_string();
        let mut lines = csv.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(header.len(), row.len());
        assert_eq!(header.len(), 1 + 2 * 20 + 2);
        assert_eq!(header[1], "A.v_od");
        assert_eq!(row[1], "3.11123457e2");
        assert_eq!(*row.last().unwrap(), "3.14159265e2");
    }

    #[test]
    fn index_lookup() {
        let trace = Trace {
            dg_names: vec![],
            n_q: vec![],
            records: (0..10).map(|k| TraceRecord { t: k as f64 * 0.1, dgs: vec![], lyapunov: 0.0, omega_com: 0.0 }).collect(),
        };
        assert_eq!(trace.index_at(0.3), 3);
        assert_eq!(trace.index_at(0.35), 4);
        assert_eq!(trace.index_at(5.0), 10);
    }
}
