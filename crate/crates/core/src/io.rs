//! On-disk formats: point files (text and binary) and model files.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::counter::{BuildConfig, CountingIndex};
use crate::error::{Error, Result};
use crate::geom::WeightedPointSet;
use crate::ptree::SpanningPath;

const TEXT_HEADER: &str = "arc-points";
const BINARY_MAGIC: &[u8; 4] = b"ARC1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointsFormat {
    Text,
    Binary,
}

/// Text form: `arc-points v1 <n> <d>`, then `n` rows of `d` coordinates and a weight.
pub fn write_points_text<W: Write>(pts: &WeightedPointSet, mut out: W) -> Result<()> {
    writeln!(out, "{TEXT_HEADER} v1 {} {}", pts.len(), pts.dim())?;
    for (i, p) in pts.points().enumerate() {
        let mut line = String::new();
        for c in p {
            // `{:?}` prints the shortest string that round-trips exactly
            line.push_str(&format!("{c:?} "));
        }
        line.push_str(&format!("{:?}", pts.weight(i)));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_points_text<R: Read>(input: R) -> Result<WeightedPointSet> {
    let mut lines = BufReader::new(input).lines().enumerate();
    let (n, d) = match lines.next() {
        Some((_, line)) => {
            let line = line?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 || f[0] != TEXT_HEADER || f[1] != "v1" {
                return Err(Error::parse("line 1", format!("expected `{TEXT_HEADER} v1 <n> <d>`, got `{line}`")));
            }
            let n: usize = f[2].parse().map_err(|_| Error::parse("line 1", format!("bad point count `{}`", f[2])))?;
            let d: usize = f[3].parse().map_err(|_| Error::parse("line 1", format!("bad dimension `{}`", f[3])))?;
            if d == 0 {
                return Err(Error::parse("line 1", "dimension must be positive"));
            }
            (n, d)
        }
        None => return Err(Error::parse("line 1", "empty file")),
    };
    let mut coords = Vec::with_capacity(n * d);
    let mut weights = Vec::with_capacity(n);
    for (idx, line) in lines {
        let line = line?;
        let at = format!("line {}", idx + 1);
        if line.trim().is_empty() {
            continue;
        }
        if weights.len() == n {
            return Err(Error::parse(at, format!("more than the {n} rows declared in the header")));
        }
        let vals = line
            .split_whitespace()
            .map(|t| match t.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::parse(at.clone(), format!("bad number `{t}`"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != d + 1 {
            return Err(Error::parse(at, format!("expected {} values, found {}", d + 1, vals.len())));
        }
        coords.extend_from_slice(&vals[..d]);
        weights.push(vals[d]);
    }
    if weights.len() != n {
        return Err(Error::parse("end of file", format!("header declares {n} rows, found {}", weights.len())));
    }
    WeightedPointSet::from_flat(d, coords, weights).map_err(|e| Error::parse("body", e.to_string()))
}

/// Binary form: `ARC1`, little-endian `u32 n`, `u32 d`, then `n·(d+1)` `f64`s.
pub fn write_points_binary<W: Write>(pts: &WeightedPointSet, mut out: W) -> Result<()> {
    let n = u32::try_from(pts.len()).map_err(|_| Error::contract("too many points for the binary format"))?;
    let d = u32::try_from(pts.dim()).map_err(|_| Error::contract("dimension too large for the binary format"))?;
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&n.to_le_bytes())?;
    out.write_all(&d.to_le_bytes())?;
    for (i, p) in pts.points().enumerate() {
        for c in p {
            out.write_all(&c.to_le_bytes())?;
        }
        out.write_all(&pts.weight(i).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_points_binary<R: Read>(mut input: R) -> Result<WeightedPointSet> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    if buf.len() < 12 || &buf[..4] != BINARY_MAGIC {
        return Err(Error::parse("offset 0", "missing ARC1 header"));
    }
    let n = u32::from_le_bytes(buf[4..8].try_into().expect("4 bytes")) as usize;
    let d = u32::from_le_bytes(buf[8..12].try_into().expect("4 bytes")) as usize;
    if d == 0 {
        return Err(Error::parse("offset 8", "dimension must be positive"));
    }
    let want = n
        .checked_mul(d + 1)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(12))
        .ok_or_else(|| Error::parse("offset 4", "header sizes overflow"))?;
    if buf.len() != want {
        return Err(Error::parse(
            format!("offset {}", buf.len().min(want)),
            format!("expected {want} bytes, file has {}", buf.len()),
        ));
    }
    let mut coords = Vec::with_capacity(n * d);
    let mut weights = Vec::with_capacity(n);
    for (k, chunk) in buf[12..].chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        if !v.is_finite() {
            return Err(Error::parse(format!("offset {}", 12 + 8 * k), "non-finite value"));
        }
        if k % (d + 1) == d {
            weights.push(v);
        } else {
            coords.push(v);
        }
    }
    WeightedPointSet::from_flat(d, coords, weights).map_err(|e| Error::parse("body", e.to_string()))
}

/// Detects the format from the first bytes.
pub fn read_points(path: &Path) -> Result<WeightedPointSet> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(BINARY_MAGIC) {
        read_points_binary(&bytes[..])
    } else {
        read_points_text(&bytes[..])
    }
}

pub fn write_points(path: &Path, pts: &WeightedPointSet, format: PointsFormat) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    match format {
        PointsFormat::Text => write_points_text(pts, &mut f)?,
        PointsFormat::Binary => write_points_binary(pts, &mut f)?,
    }
    f.flush()?;
    Ok(())
}

/// Query files share the points format; weights are ignored.
pub fn read_queries(path: &Path) -> Result<Vec<Vec<f64>>> {
    Ok(read_points(path)?.points().map(<[f64]>::to_vec).collect())
}

pub const MODEL_FORMAT: &str = "arc-model";
pub const MODEL_VERSION: u32 = 1;

/// Everything needed to rebuild an index bit-for-bit from the same data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub n: usize,
    pub d: usize,
    pub data_digest: String,
    pub config: BuildConfig,
    pub order: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_fingerprints: Option<Vec<u64>>,
}

impl ModelFile {
    pub fn from_index(idx: &CountingIndex, pts: &WeightedPointSet) -> Self {
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            n: pts.len(),
            d: pts.dim(),
            data_digest: pts.digest(),
            config: idx.config().clone(),
            order: idx.path().order().to_vec(),
            training_fingerprints: idx.training_fingerprints().map(|s| s.iter().copied().collect()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let m: ModelFile = serde_json::from_str(&text)
            .map_err(|e| Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
            return Err(Error::parse("line 1", format!("unsupported model {} v{}", m.format, m.version)));
        }
        Ok(m)
    }

    /// Rebuild the index; the data must be the file the model was built from.
    pub fn rebuild(&self, pts: &WeightedPointSet) -> Result<CountingIndex> {
        if pts.digest() != self.data_digest {
            return Err(Error::contract("data file does not match the model's data digest"));
        }
        let training = self.training_fingerprints.as_ref().map(|v| v.iter().copied().collect::<BTreeSet<u64>>());
        CountingIndex::with_path(pts, self.config.clone(), SpanningPath::new(self.order.clone())?, training)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{dataset, with_random_weights, DatasetKind};
    use crate::geom::Seed;

    fn sample() -> WeightedPointSet {
        with_random_weights(&dataset(DatasetKind::Uniform, 37, 3, Seed(1)).unwrap(), Seed(2)).unwrap()
    }

    fn bits(p: &WeightedPointSet) -> Vec<u64> {
        p.coords().iter().chain(p.weights()).map(|x| x.to_bits()).collect()
    }

    #[test]
    fn text_round_trip_is_exact() {
        let p = sample();
        let mut buf = Vec::new();
        write_points_text(&p, &mut buf).unwrap();
        assert_eq!(bits(&read_points_text(&buf[..]).unwrap()), bits(&p));
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let p = sample();
        let mut buf = Vec::new();
        write_points_binary(&p, &mut buf).unwrap();
        assert_eq!(buf.len(), 12 + 37 * 4 * 8);
        assert_eq!(bits(&read_points_binary(&buf[..]).unwrap()), bits(&p));
    }

    fn parse_location(text: &str) -> String {
        match read_points_text(text.as_bytes()) {
            Err(Error::Parse { location, .. }) => location,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn text_errors_name_the_line() {
        assert_eq!(parse_location("arc-points v2 1 1\n0 1\n"), "line 1");
        assert_eq!(parse_location("arc-points v1 2 1\n0 1\n0 x\n"), "line 3");
        assert_eq!(parse_location("arc-points v1 2 2\n0 1 1\n0 1\n"), "line 3");
        assert_eq!(parse_location("arc-points v1 1 1\n0 1\n2 2\n"), "line 3");
        assert_eq!(parse_location("arc-points v1 2 1\n0 1\n"), "end of file");
    }

    #[test]
    fn binary_errors_name_the_offset() {
        let p = sample();
        let mut buf = Vec::new();
        write_points_binary(&p, &mut buf).unwrap();
        let loc = |b: &[u8]| match read_points_binary(b) {
            Err(Error::Parse { location, .. }) => location,
            other => panic!("{other:?}"),
        };
        assert_eq!(loc(b"NOPE"), "offset 0");
        assert_eq!(loc(&buf[..100]), "offset 100");
        let mut bad = buf.clone();
        bad[20..28].copy_from_slice(&f64::NAN.to_le_bytes());
        assert_eq!(loc(&bad), "offset 20");
    }
}
