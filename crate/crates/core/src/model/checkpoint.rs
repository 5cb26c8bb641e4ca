use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{ModelConfig, MxmNet, ParamStore, Sample, Standardizer};

pub const CHECKPOINT_MAGIC: &str = "MXMNET-CHECKPOINT v1";

/// A trained model with the target scaling it was fit under.
///
/// Layout: the magic line, `key=value` header lines, a `params <count>` line,
/// then per parameter a `name ndim d0 d1 …` line followed by the raw
/// little-endian `f64` data and a newline.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub standardizer: Standardizer,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, standardizer: Standardizer, params: ParamStore) -> Result<Self> {
        params.matches(MxmNet::new(config.clone())?.param_specs())?;
        Ok(Self {
            config,
            standardizer,
            params,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC.as_bytes());
        out.push(b'\n');
        let mut header = self.config.to_pairs();
        header.push(("mean".into(), self.standardizer.mean.to_string()));
        header.push(("std".into(), self.standardizer.std.to_string()));
        for (k, v) in header {
            out.extend_from_slice(format!("{k}={v}\n").as_bytes());
        }
        out.extend_from_slice(format!("params {}\n", self.params.len()).as_bytes());
        for (name, t) in self.params.iter() {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            out.extend_from_slice(format!("{name} {} {}\n", dims.len(), dims.join(" ")).as_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.push(b'\n');
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.line()? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("missing or unsupported header".into()));
        }
        let mut pairs = BTreeMap::new();
        let count = loop {
            let line = r.line()?;
            if let Some(n) = line.strip_prefix("params ") {
                break n
                    .parse::<usize>()
                    .map_err(|_| Error::Checkpoint(format!("bad parameter count `{n}`")))?;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("bad header line `{line}`")))?;
            pairs.insert(k.to_string(), v.to_string());
        };
        let float = |key: &str| -> Result<f64> {
            pairs
                .get(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Checkpoint(format!("missing or bad `{key}`")))
        };
        let standardizer = Standardizer {
            mean: float("mean")?,
            std: float("std")?,
        };
        let config = ModelConfig::from_pairs(&pairs).map_err(|e| Error::Checkpoint(e.to_string()))?;

        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let line = r.line()?;
            let mut parts = line.split(' ');
            let name = parts.next().unwrap_or_default().to_string();
            let dims: Vec<usize> = parts
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Checkpoint(format!("bad shape line `{line}`")))?;
            let (&ndim, shape) = dims
                .split_first()
                .ok_or_else(|| Error::Checkpoint(format!("bad shape line `{line}`")))?;
            if ndim != shape.len() {
                return Err(Error::Checkpoint(format!("rank mismatch in `{line}`")));
            }
            let len: usize = shape.iter().product();
            let raw = r.take(len * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            if r.take(1)? != b"\n" {
                return Err(Error::Checkpoint(format!("missing terminator after `{name}`")));
            }
            let t = Tensor::new(shape.to_vec(), data).map_err(|e| Error::Checkpoint(e.to_string()))?;
            entries.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        let params = ParamStore::new(entries)?;
        Self::new(config, standardizer, params).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Prediction in target units.
    pub fn predict(&self, net: &MxmNet, s: &Sample) -> Result<f64> {
        Ok(self.standardizer.apply(net.predict(&self.params, s)?))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn line(&mut self) -> Result<&'a str> {
        let rest = &self.bytes[self.pos..];
        let n = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
        let line = std::str::from_utf8(&rest[..n]).map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
        self.pos += n + 1;
        Ok(line)
    }
}
