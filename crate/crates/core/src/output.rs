//! CSV and JSON artifacts with embedded provenance.
//!
//! Every file carries the SHA-256 of the resolved configuration (with
//! `output_dir` blanked, so relocating a run does not change it) and the
//! master seed. CSV files start with a `# config_sha256=... master_seed=...`
//! line; JSON files have top-level `config_sha256` and `master_seed` keys.
//! Floats are written with 17 significant digits.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub master_seed: u64,
}

impl Provenance {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        let mut c = cfg.clone();
        c.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("configuration serializes");
        Provenance { config_sha256: hex::encode(Sha256::digest(&bytes)), master_seed: cfg.master_seed }
    }

    fn header_line(&self) -> String {
        format!("# config_sha256={} master_seed={}", self.config_sha256, self.master_seed)
    }
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `header` and `rows` as CSV under the provenance comment line.
pub fn write_csv<I>(path: &Path, prov: &Provenance, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "{}", prov.header_line())?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Which particle system a trajectory row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Population {
    Discrete,
    Reference,
    Tracked,
}

impl Population {
    pub fn label(self) -> &'static str {
        match self {
            Population::Discrete => "discrete",
            Population::Reference => "reference",
            Population::Tracked => "tracked",
        }
    }
}

/// Snapshot CSV, one row per particle per snapshot:
/// `t, population, id, x0.., v0.., [theta]`. All snapshots must share the
/// dimension and model of the first.
pub fn write_trajectory(path: &Path, prov: &Provenance, groups: &[(Population, &[ParticleEnsemble])]) -> Result<()> {
    let Some(first) = groups.iter().flat_map(|(_, s)| s.iter()).next() else {
        return Err(Error::Contract("no snapshots to write".into()));
    };
    let (dim, forced) = (first.dim(), first.is_forced());
    if groups.iter().flat_map(|(_, s)| s.iter()).any(|s| s.dim() != dim || s.is_forced() != forced) {
        return Err(Error::Contract("snapshots differ in dimension or model".into()));
    }
    let mut header = vec!["t".to_string(), "population".to_string(), "id".to_string()];
    header.extend((0..dim).map(|k| format!("x{k}")));
    header.extend((0..dim).map(|k| format!("v{k}")));
    if forced {
        header.push("theta".into());
    }
    let rows = groups.iter().flat_map(|(pop, snaps)| {
        snaps.iter().flat_map(move |s| {
            (0..s.count()).map(move |i| {
                let mut r = vec![fmt_f64(s.time), pop.label().to_string(), i.to_string()];
                r.extend(s.position(i).iter().map(|x| fmt_f64(*x)));
                r.extend(s.velocity(i).iter().map(|x| fmt_f64(*x)));
                if let Some(th) = s.theta(i) {
                    r.push(fmt_f64(th));
                }
                r
            })
        })
    });
    write_csv(path, prov, &header, rows)
}

/// Pretty-printed JSON object: provenance keys followed by the fields of
/// `value` (which must serialize to an object).
pub fn write_json<T: Serialize>(path: &Path, prov: &Provenance, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut obj = Map::new();
    obj.insert("config_sha256".into(), Value::String(prov.config_sha256.clone()));
    obj.insert("master_seed".into(), Value::from(prov.master_seed));
    match serde_json::to_value(value).map_err(|e| Error::Config(e.to_string()))? {
        Value::Object(m) => obj.extend(m),
        other => {
            obj.insert("value".into(), other);
        }
    }
    let mut text = serde_json::to_string_pretty(&Value::Object(obj)).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Reads a point set: one point per line, comma- or whitespace-separated
/// coordinates, `#` comments and blank lines ignored.
pub fn read_points(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>().map_err(|_| {
                    Error::Config(format!("{}:{}: cannot parse {s:?} as a number", path.display(), lineno + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
        assert_eq!(fmt_f64(f64::NAN), "NaN");
    }

    #[test]
    fn csv_has_provenance_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        let prov = Provenance { config_sha256: "ab".into(), master_seed: 3 };
        write_csv(&p, &prov, &["t".into(), "x".into()], vec![vec!["0".into(), "1".into()]]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "# config_sha256=ab master_seed=3\nt,x\n0,1\n");
    }

    #[test]
    fn point_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "# pts\n0, 1\n2 3\n\n").unwrap();
        assert_eq!(read_points(&p).unwrap(), vec![vec![0.0, 1.0], vec![2.0, 3.0]]);
        fs::write(&p, "0,x\n").unwrap();
        assert!(read_points(&p).is_err());
    }

    #[test]
    fn trajectory_population_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("traj.csv");
        let prov = Provenance { config_sha256: "ab".into(), master_seed: 0 };
        let e = ParticleEnsemble::from_rows(&[vec![0.0], vec![1.0]], &[vec![0.5], vec![-0.5]], None).unwrap();
        let r = ParticleEnsemble::from_rows(&[vec![2.0]], &[vec![0.0]], None).unwrap();
        write_trajectory(&p, &prov, &[(Population::Discrete, &[e.clone()]), (Population::Reference, &[r])]).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "t,population,id,x0,v0");
        assert!(lines[2].contains(",discrete,0,"));
        assert!(lines[4].contains(",reference,0,"));
        assert_eq!(lines.len(), 5);
        let f = ParticleEnsemble::from_rows(&[vec![0.0]], &[vec![0.0]], Some(vec![1.0])).unwrap();
        assert!(write_trajectory(&p, &prov, &[(Population::Discrete, &[e, f])]).is_err());
    }
}
