use std::path::{Path, PathBuf};

use serde::Serialize;

use super::atomic_write;
use super::manifest::ExperimentManifest;
use crate::error::{Error, Result};
use crate::field::{checkpoint, FieldNetwork};
use crate::image::Image;

/// Column holding the manifest hash in every CSV output.
pub const HASH_COLUMN: &str = "manifest_hash";
const PNM_PREFIX: &str = "# manifest ";
const TAG_PREFIX: &str = "manifest ";

/// Writes files into one run directory, stamping each with the manifest hash.
#[derive(Debug, Clone)]
pub struct RunWriter {
    pub dir: PathBuf,
    pub hash: String,
    pub written: Vec<PathBuf>,
}

impl RunWriter {
    /// Creates the directory and writes the canonical `manifest.toml`.
    pub fn create(dir: &Path, manifest: &ExperimentManifest) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut w = Self { dir: dir.to_path_buf(), hash: manifest.hash()?, written: Vec::new() };
        w.bytes("manifest.toml", manifest.canonical()?.as_bytes())?;
        Ok(w)
    }

    fn bytes(&mut self, name: &str, data: &[u8]) -> Result<PathBuf> {
        let p = self.dir.join(name);
        atomic_write(&p, data)?;
        self.written.push(p.clone());
        Ok(p)
    }

    /// CSV of `rows` with a trailing hash column.
    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<PathBuf> {
        let mut inner = csv::Writer::from_writer(Vec::new());
        for row in rows {
            inner.serialize(row).map_err(csv_err)?;
        }
        let plain = inner.into_inner().map_err(csv_err)?;
        let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(plain.as_slice());
        let mut records = reader.records().map(|r| r.map(|r| r.iter().map(String::from).collect::<Vec<_>>()));
        let header = records.next().transpose().map_err(csv_err)?.unwrap_or_default();
        let body = records.collect::<Result<Vec<_>, _>>().map_err(csv_err)?;
        self.table(name, &header, &body)
    }

    /// CSV with an explicit header and string cells, plus the hash column.
    pub fn table(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<PathBuf> {
        let mut out = csv::Writer::from_writer(Vec::new());
        let mut h = header.to_vec();
        h.push(HASH_COLUMN.into());
        out.write_record(&h).map_err(csv_err)?;
        for r in rows {
            let mut r = r.clone();
            r.push(self.hash.clone());
            out.write_record(&r).map_err(csv_err)?;
        }
        let bytes = out.into_inner().map_err(csv_err)?;
        self.bytes(name, &bytes)
    }

    /// Metrics CSV; its `config_hash` column carries the manifest hash.
    pub fn metrics(&mut self, name: &str, rows: &[crate::metrics::MetricsRow]) -> Result<PathBuf> {
        if rows.iter().any(|r| r.config_hash != self.hash) {
            return Err(Error::State("metrics rows carry a different config hash".into()));
        }
        let bytes = crate::metrics::metrics_csv(rows)?;
        self.bytes(name, &bytes)
    }

    pub fn ppm(&mut self, name: &str, img: &Image) -> Result<PathBuf> {
        let bytes = stamp_pnm(&img.to_ppm(), &self.hash);
        self.bytes(name, &bytes)
    }

    pub fn pgm16(&mut self, name: &str, img: &Image) -> Result<PathBuf> {
        let bytes = stamp_pnm(&img.to_pgm16(), &self.hash);
        self.bytes(name, &bytes)
    }

    pub fn checkpoint(&mut self, name: &str, net: &FieldNetwork) -> Result<PathBuf> {
        let bytes = checkpoint::encode_tagged(net, Some(&format!("{TAG_PREFIX}{}", self.hash)));
        self.bytes(name, &bytes)
    }

    /// TOML document with a top-level `manifest_hash` key.
    pub fn toml<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let body = toml::to_string(value).map_err(|e| Error::data(e.to_string()))?;
        let text = format!("{HASH_COLUMN} = \"{}\"\n{body}", self.hash);
        self.bytes(name, text.as_bytes())
    }
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::data(e.to_string())
}

/// Inserts a `# manifest <hash>` comment after the magic line of a PNM file.
pub fn stamp_pnm(bytes: &[u8], hash: &str) -> Vec<u8> {
    let cut = bytes.iter().position(|&b| b == b'\n').map_or(bytes.len(), |i| i + 1);
    let mut out = bytes[..cut].to_vec();
    out.extend_from_slice(format!("{PNM_PREFIX}{hash}\n").as_bytes());
    out.extend_from_slice(&bytes[cut..]);
    out
}

/// Manifest hash embedded in one output file, by extension.
pub fn embedded_hash(path: &Path) -> Result<Option<String>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default();
    Ok(match ext {
        "ppm" | "pgm" => {
            let head = String::from_utf8_lossy(&bytes[..bytes.len().min(256)]).into_owned();
            head.lines().find_map(|l| l.strip_prefix(PNM_PREFIX)).map(|h| h.trim().to_string())
        }
        "nfw" => checkpoint::decode_tagged(&bytes)?.1.and_then(|t| t.strip_prefix(TAG_PREFIX).map(String::from)),
        "csv" => {
            let mut r = csv::Reader::from_reader(bytes.as_slice());
            let headers = r.headers().map_err(|e| Error::data(e.to_string()))?.clone();
            let Some(col) = headers.iter().position(|h| h == HASH_COLUMN || h == "config_hash") else { return Ok(None) };
            let mut found: Option<String> = None;
            let mut rows = 0;
            for rec in r.records() {
                let rec = rec.map_err(|e| Error::data(e.to_string()))?;
                let v = rec.get(col).unwrap_or_default().to_string();
                if found.as_ref().is_some_and(|f| *f != v) {
                    return Ok(Some(format!("inconsistent:{v}")));
                }
                found = Some(v);
                rows += 1;
            }
            if rows == 0 {
                Some(String::new())
            } else {
                found
            }
        }
        "toml" => {
            let v: toml::Table = toml::from_str(&String::from_utf8_lossy(&bytes)).map_err(|e| Error::data(e.to_string()))?;
            v.get(HASH_COLUMN).and_then(|h| h.as_str()).map(String::from)
        }
        _ => None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub expected: String,
    pub checked: usize,
    /// Files whose stamp differs from the expected hash, with the stamp found.
    pub mismatched: Vec<(PathBuf, Option<String>)>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.mismatched.is_empty()
    }
}

/// Checks every file of a run directory against the hash of its
/// `manifest.toml` (or of `manifest`, when given).
pub fn verify(dir: &Path, manifest: Option<&ExperimentManifest>) -> Result<VerifyReport> {
    let expected = match manifest {
        Some(m) => m.hash()?,
        None => ExperimentManifest::load(&dir.join("manifest.toml"))?.hash()?,
    };
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    entries.sort();
    let mut report = VerifyReport { expected: expected.clone(), checked: 0, mismatched: Vec::new() };
    for p in entries {
        report.checked += 1;
        if p.file_name().is_some_and(|n| n == "manifest.toml") {
            let own = ExperimentManifest::load(&p)?.hash()?;
            if own != expected {
                report.mismatched.push((p, Some(own)));
            }
            continue;
        }
        let found = embedded_hash(&p)?;
        if found.as_deref() != Some(expected.as_str()) {
            report.mismatched.push((p, found));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::manifest::Task;

    #[derive(Serialize)]
    struct Row {
        seed: u64,
        value: f64,
    }

    #[test]
    fn stamped_outputs_verify_and_tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let m = ExperimentManifest::template(Task::MatmulBench);
        let mut w = RunWriter::create(dir.path(), &m).unwrap();
        w.csv("rows.csv", &[Row { seed: 1, value: 0.5 }, Row { seed: 2, value: 0.25 }]).unwrap();
        w.ppm("a.ppm", &Image::new(2, 2, 3)).unwrap();
        w.pgm16("b.pgm", &Image::new(2, 2, 1)).unwrap();
        let net = crate::field::identity_network(2);
        w.checkpoint("net.nfw", &net).unwrap();
        w.toml("report.toml", &[("x", 1)].into_iter().collect::<std::collections::BTreeMap<_, _>>()).unwrap();
        let report = verify(dir.path(), None).unwrap();
        assert!(report.ok(), "{report:?}");
        assert_eq!(report.checked, 6);
        assert_eq!(Image::load(&dir.path().join("b.pgm")).unwrap(), Image::new(2, 2, 1));
        assert_eq!(checkpoint::load(&dir.path().join("net.nfw")).unwrap(), net);

        let other = ExperimentManifest { seed: 9, ..m.clone() };
        assert!(!verify(dir.path(), Some(&other)).unwrap().ok());
        let text = std::fs::read_to_string(dir.path().join("rows.csv")).unwrap();
        std::fs::write(dir.path().join("rows.csv"), text.replacen(&w.hash, &"0".repeat(64), 1)).unwrap();
        let r = verify(dir.path(), None).unwrap();
        assert_eq!(r.mismatched.len(), 1);
        assert!(r.mismatched[0].0.ends_with("rows.csv"));
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let m = ExperimentManifest::template(Task::MatmulBench);
        let mut w = RunWriter::create(dir.path(), &m).unwrap();
        let p = w.csv("rows.csv", &[Row { seed: 1, value: 0.5 }]).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(text, format!("seed,value,manifest_hash\n1,0.5,{}\n", w.hash));
    }
}
