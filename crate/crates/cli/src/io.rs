//! Input readers, digests and atomic output files.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use vwskill_core::{LabelSeries, PredictionSeries, ProbabilitySeries};

/// One value per line. A non-numeric first line is a header; in lines with
/// commas the last field is the value; blank lines are ignored.
pub fn read_values(path: &Path) -> Result<Vec<f64>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or(line).trim();
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => bail!("{}: line {}: '{field}' is not a number", path.display(), i + 1),
        }
    }
    if out.is_empty() {
        bail!("{}: no values", path.display());
    }
    Ok(out)
}

fn read_bits(path: &Path) -> Result<Vec<u8>> {
    read_values(path)?
        .into_iter()
        .enumerate()
        .map(|(i, v)| match v {
            v if v == 0.0 => Ok(0),
            v if v == 1.0 => Ok(1),
            v => Err(anyhow!("{}: value {} at position {i} is not 0 or 1", path.display(), v)),
        })
        .collect()
}

pub fn read_labels(path: &Path) -> Result<LabelSeries> {
    LabelSeries::new(read_bits(path)?).with_context(|| format!("labels in {}", path.display()))
}

pub fn read_predictions(path: &Path) -> Result<PredictionSeries> {
    PredictionSeries::new(read_bits(path)?)
        .with_context(|| format!("predictions in {}", path.display()))
}

pub fn read_probabilities(path: &Path) -> Result<ProbabilitySeries> {
    ProbabilitySeries::new(read_values(path)?)
        .with_context(|| format!("probabilities in {}", path.display()))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Output directory whose files are written through a temporary file and
/// renamed into place.
pub struct OutDir {
    dir: PathBuf,
    written: Vec<FileDigest>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write_with(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut dyn Write) -> Result<()>,
    ) -> Result<()> {
        let target = self.dir.join(name);
        if let Some(parent) = target.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let parent = target.parent().unwrap_or(&self.dir);
        let mut tmp = tempfile::NamedTempFile::new_in(parent)
            .with_context(|| format!("creating a temporary file in {}", parent.display()))?;
        let mut hasher = Sha256::new();
        {
            let mut w = HashingWriter {
                inner: BufWriter::new(tmp.as_file_mut()),
                hasher: &mut hasher,
            };
            fill(&mut w)?;
            w.inner.flush()?;
        }
        tmp.as_file().sync_all()?;
        tmp.persist(&target)
            .with_context(|| format!("writing {}", target.display()))?;
        self.written.push(FileDigest {
            path: name.to_string(),
            sha256: hex::encode(hasher.finalize()),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }

    pub fn outputs(&self) -> &[FileDigest] {
        &self.written
    }
}

struct HashingWriter<'a, W: Write> {
    inner: W,
    hasher: &'a mut Sha256,
}

impl<W: Write> Write for HashingWriter<'_, W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_file_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.csv");
        std::fs::write(&p, "index,label\n0,1\n1,0\n\n2,1\n").unwrap();
        assert_eq!(read_values(&p).unwrap(), vec![1.0, 0.0, 1.0]);
        std::fs::write(&p, "0.5\n0.25\n").unwrap();
        assert_eq!(read_values(&p).unwrap(), vec![0.5, 0.25]);
        std::fs::write(&p, "1\nx\n").unwrap();
        assert!(read_values(&p).is_err());
        std::fs::write(&p, "1\n2\n").unwrap();
        assert!(read_labels(&p).is_err());
    }

    #[test]
    fn atomic_write_records_digest() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutDir::create(&dir.path().join("o")).unwrap();
        out.write_with("a.txt", |w| Ok(w.write_all(b"abc")?)).unwrap();
        let written = std::fs::read(dir.path().join("o/a.txt")).unwrap();
        assert_eq!(written, b"abc");
        assert_eq!(
            out.outputs()[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(std::fs::read_dir(dir.path().join("o")).unwrap().count(), 1);
    }
}
