//! Density, tensor and log files.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::IterationRecord;
use crate::field::DensityField;
use crate::homogenization::ElasticTensor;
use crate::{Error, Result};

/// Sidecar of a raw density file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RawMeta {
    pub resolution: [usize; 3],
    pub volume: f64,
    pub seed: u64,
    /// Always `f32le`.
    pub format: String,
    /// Always `x-fastest`.
    pub order: String,
}

impl RawMeta {
    pub fn new(resolution: [usize; 3], volume: f64, seed: u64) -> Self {
        Self {
            resolution,
            volume,
            seed,
            format: "f32le".into(),
            order: "x-fastest".into(),
        }
    }
}

/// Little-endian `f32` words in x-fastest order.
pub fn write_raw(field: &DensityField, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(4 * field.len());
    for &v in field.values() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_raw(path: &Path, res: [usize; 3]) -> Result<DensityField> {
    let bytes = fs::read(path)?;
    let n: usize = res.iter().product();
    if bytes.len() != 4 * n {
        return Err(Error::FieldSize {
            expected: n,
            got: bytes.len() / 4,
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    DensityField::new(res, data)
}

pub fn write_meta(meta: &RawMeta, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

pub fn read_meta(path: &Path) -> Result<RawMeta> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// VTK XML ImageData with one cell scalar array `density` on the unit cube.
pub fn write_vti(field: &DensityField, path: &Path) -> Result<()> {
    let [n0, n1, n2] = field.res();
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\"?>\n");
    s.push_str("<VTKFile type=\"ImageData\" version=\"0.1\" byte_order=\"LittleEndian\">\n");
    let extent = format!("0 {n0} 0 {n1} 0 {n2}");
    let spacing = format!("{} {} {}", 1.0 / n0 as f64, 1.0 / n1 as f64, 1.0 / n2 as f64);
    let _ = writeln!(s, "  <ImageData WholeExtent=\"{extent}\" Origin=\"0 0 0\" Spacing=\"{spacing}\">");
    let _ = writeln!(s, "    <Piece Extent=\"{extent}\">");
    s.push_str("      <CellData Scalars=\"density\">\n");
    s.push_str("        <DataArray type=\"Float32\" Name=\"density\" NumberOfComponents=\"1\" format=\"ascii\">\n");
    for row in field.values().chunks(n0) {
        s.push_str("          ");
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{}", *v as f32);
        }
        s.push('\n');
    }
    s.push_str("        </DataArray>\n      </CellData>\n    </Piece>\n  </ImageData>\n</VTKFile>\n");
    fs::write(path, s)?;
    Ok(())
}

/// Six lines of six space-separated numbers, shortest exact round-trip form.
pub fn format_tensor(c: &ElasticTensor) -> String {
    let mut s = String::new();
    for row in c.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn write_tensor(c: &ElasticTensor, path: &Path) -> Result<()> {
    fs::write(path, format_tensor(c))?;
    Ok(())
}

pub fn parse_tensor(text: &str) -> Result<ElasticTensor> {
    let bad = |msg: String| Error::Parse {
        what: "tensor".into(),
        msg,
    };
    let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if rows.len() != 6 {
        return Err(bad(format!("expected 6 rows, found {}", rows.len())));
    }
    let mut c = [[0.0; 6]; 6];
    for (i, line) in rows.iter().enumerate() {
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != 6 {
            return Err(bad(format!("row {i} has {} values", vals.len())));
        }
        for (j, v) in vals.iter().enumerate() {
            c[i][j] = v.parse().map_err(|e| bad(format!("row {i}, column {j}: {e}")))?;
        }
    }
    Ok(ElasticTensor(c))
}

pub fn read_tensor(path: &Path) -> Result<ElasticTensor> {
    parse_tensor(&fs::read_to_string(path)?)
}

pub const LOG_HEADER: &str = "iter,objective,volume,cycles,residual,ms";

pub fn write_log_csv(records: &[IterationRecord], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "{LOG_HEADER}")?;
    for r in records {
        writeln!(f, "{},{},{},{},{},{}", r.iter, r.objective, r.volume, r.cycles, r.residual, r.ms)?;
    }
    f.flush()?;
    Ok(())
}

/// Peak resident set size in MiB, when the platform reports it.
pub fn peak_rss_mib() -> Option<f64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb / 1024.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_constant_half_bit_pattern() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rho.raw");
        write_raw(&DensityField::constant([4; 3], 0.5), &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 256);
        for w in bytes.chunks(4) {
            assert_eq!(u32::from_le_bytes([w[0], w[1], w[2], w[3]]), 0x3F00_0000);
        }
    }

    #[test]
    fn raw_round_trip_is_exact_for_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rho.raw");
        let data: Vec<f64> = (0..60).map(|i| ((i as f32) * 0.013 + 0.001) as f64).collect();
        let f = DensityField::new([3, 4, 5], data).unwrap();
        write_raw(&f, &p).unwrap();
        assert_eq!(read_raw(&p, [3, 4, 5]).unwrap(), f);
        assert!(read_raw(&p, [4, 4, 4]).is_err());
    }

    #[test]
    fn vti_has_extent_and_all_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rho.vti");
        write_vti(&DensityField::constant([4, 2, 3], 0.25), &p).unwrap();
        let s = fs::read_to_string(&p).unwrap();
        assert!(s.contains("WholeExtent=\"0 4 0 2 0 3\""));
        assert!(s.contains("Name=\"density\""));
        let start = s.find("format=\"ascii\">").unwrap();
        let end = s.find("</DataArray>").unwrap();
        let body = &s[start + 15..end];
        let vals: Vec<f32> = body.split_whitespace().map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals.len(), 24);
        assert!(vals.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn tensor_text_round_trip() {
        let mut id = [[0.0; 6]; 6];
        for (i, row) in id.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let text = format_tensor(&ElasticTensor(id));
        assert!(text.starts_with("1 0 0 0 0 0\n0 1 0 0 0 0\n"));
        let c = ElasticTensor(crate::fem::BaseMaterial::new(1e6, 0.3).unwrap().tensor());
        let back = parse_tensor(&format_tensor(&c)).unwrap();
        assert_eq!(back, c);
        assert!(format_tensor(&c).starts_with("1346153.846153846"));
        assert!(parse_tensor("1 2 3\n").is_err());
    }

    #[test]
    fn meta_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rho.meta.json");
        let m = RawMeta::new([8, 8, 8], 0.3, 42);
        write_meta(&m, &p).unwrap();
        assert_eq!(read_meta(&p).unwrap(), m);
    }
}
