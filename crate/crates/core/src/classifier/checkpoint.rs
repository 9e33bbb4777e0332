//! Trained model file (`.llmc`).
//!
//! Little-endian throughout:
//!
//! ```text
//! magic           4 bytes "LLMC"
//! version         u32     1
//! strategy        u8      1..=15
//! sigma           f64
//! projection_dim  u32
//! n_sources       u16     then per source: name_len u16, name, depths u32, dim u32
//! fused_dim       u32
//! n_classes       u32
//! hidden_width    u32     0 = no hidden layer
//! activation      u8      0 none, 1 relu, 2 tanh
//! n_projections   u16     then per projection: name_len u16, name, in u32, out u32
//! payload         f64 values: [hidden W, hidden b], W, b, then per projection W, b
//! ```

use std::fs;
use std::path::Path;

use super::head::{Activation, ClassifierParams, HiddenLayer};
use super::train::ModelParams;
use crate::error::{Error, Result};
use crate::fusion::{FusionStrategy, Projection, ProjectionParams, SourceShape};
use crate::linalg::Matrix;
use crate::store::validate_source_name;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"LLMC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub strategy: FusionStrategy,
    /// Shapes of the strategy's sources at training time.
    pub sources: Vec<SourceShape>,
    pub model: ModelParams,
}

impl Checkpoint {
    pub fn n_classes(&self) -> usize {
        self.model.head.n_classes()
    }

    pub fn fused_dim(&self) -> usize {
        self.model.head.input_dim()
    }

    /// Fails unless `shapes` carries every training-time source unchanged.
    pub fn check_compatible(&self, shapes: &[SourceShape]) -> Result<()> {
        for want in &self.sources {
            match shapes.iter().find(|s| s.name == want.name) {
                None => {
                    return Err(Error::MissingSource {
                        strategy: self.strategy.index(),
                        source_name: want.name.clone(),
                    })
                }
                Some(got) if got != want => {
                    return Err(Error::CheckpointMismatch(format!(
                        "source `{}` was {}x{} at training time but data is {}x{}",
                        want.name, want.depths, want.dim, got.depths, got.dim
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

fn put_name(out: &mut Vec<u8>, name: &str) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let head = &ckpt.model.head;
    let fused = ckpt.strategy.fused_dim(&ckpt.sources)?;
    if fused != head.input_dim() {
        return Err(Error::Shape(format!(
            "head expects {}-wide inputs but strategy yields {fused}",
            head.input_dim()
        )));
    }
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(ckpt.strategy.index());
    out.extend_from_slice(&ckpt.strategy.sigma.to_le_bytes());
    put_u32(&mut out, ckpt.strategy.projection_dim);
    out.extend_from_slice(&(ckpt.sources.len() as u16).to_le_bytes());
    for s in &ckpt.sources {
        put_name(&mut out, &s.name);
        put_u32(&mut out, s.depths);
        put_u32(&mut out, s.dim);
    }
    put_u32(&mut out, fused);
    put_u32(&mut out, head.n_classes());
    match &head.hidden {
        Some(h) => {
            put_u32(&mut out, h.weight.rows());
            out.push(h.activation.code());
        }
        None => {
            put_u32(&mut out, 0);
            out.push(0);
        }
    }
    let projections = ckpt.model.projections.projections();
    out.extend_from_slice(&(projections.len() as u16).to_le_bytes());
    for p in projections {
        put_name(&mut out, &p.source);
        put_u32(&mut out, p.in_dim());
        put_u32(&mut out, p.out_dim());
    }
    for s in head.slices().into_iter().chain(ckpt.model.projections.slices()) {
        for v in s {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
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
            .ok_or_else(|| Error::Corrupt(format!("checkpoint truncated at offset {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<usize> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn name(&mut self) -> Result<String> {
        let n = self.u16()?;
        let s = std::str::from_utf8(self.take(n)?)
            .map_err(|_| Error::Format("checkpoint name is not UTF-8".into()))?
            .to_owned();
        validate_source_name(&s).map_err(|e| Error::Format(e.to_string()))?;
        Ok(s)
    }

    fn values(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::Corrupt("parameter count overflows".into()))?;
        let bytes = self.take(len)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Corrupt("matrix size overflows".into()))?;
        Matrix::from_vec(rows, cols, self.values(n)?)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!(
            "bad checkpoint magic: expected {:?}, found {:?}",
            CHECKPOINT_MAGIC, magic
        )));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let index = r.u8()?;
    let sigma = r.f64()?;
    let projection_dim = r.u32()?;
    let strategy = FusionStrategy::new(index)
        .and_then(|s| s.with_sigma(sigma))
        .and_then(|s| s.with_projection_dim(projection_dim))
        .map_err(|e| Error::Format(format!("bad strategy header: {e}")))?;
    let n_sources = r.u16()?;
    let mut sources = Vec::with_capacity(n_sources);
    for _ in 0..n_sources {
        let name = r.name()?;
        let depths = r.u32()?;
        let dim = r.u32()?;
        sources.push(SourceShape { name, depths, dim });
    }
    let fused_dim = r.u32()?;
    let n_classes = r.u32()?;
    let hidden_width = r.u32()?;
    let act = r.u8()?;
    let activation = match (hidden_width, act) {
        (0, 0) => None,
        (w, code) if w > 0 => Some(
            Activation::from_code(code)
                .ok_or_else(|| Error::Format(format!("unknown activation code {code}")))?,
        ),
        _ => return Err(Error::Format("activation set without hidden layer".into())),
    };
    let n_proj = r.u16()?;
    let mut proj_shapes = Vec::with_capacity(n_proj);
    for _ in 0..n_proj {
        let name = r.name()?;
        let i = r.u32()?;
        let o = r.u32()?;
        proj_shapes.push((name, i, o));
    }
    let derived = strategy
        .fused_dim(&sources)
        .map_err(|e| Error::Format(format!("checkpoint sources inconsistent: {e}")))?;
    if derived != fused_dim {
        return Err(Error::Format(format!(
            "checkpoint fused_dim {fused_dim} disagrees with its sources ({derived})"
        )));
    }

    let hidden = match activation {
        Some(activation) => Some(HiddenLayer {
            weight: r.matrix(hidden_width, fused_dim)?,
            bias: r.values(hidden_width)?,
            activation,
        }),
        None => None,
    };
    let out_in = if hidden.is_some() { hidden_width } else { fused_dim };
    let weight = r.matrix(n_classes, out_in)?;
    let bias = r.values(n_classes)?;
    let mut projections = Vec::with_capacity(n_proj);
    for (source, i, o) in proj_shapes {
        projections.push(Projection {
            source,
            weight: r.matrix(i, o)?,
            bias: r.values(o)?,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Corrupt(format!(
            "{} trailing bytes after checkpoint payload",
            bytes.len() - r.pos
        )));
    }
    Ok(Checkpoint {
        strategy,
        sources,
        model: ModelParams {
            head: ClassifierParams {
                hidden,
                weight,
                bias,
            },
            projections: ProjectionParams::from_projections(projections),
        },
    })
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(ckpt)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::head::HiddenSpec;

    fn shapes() -> Vec<SourceShape> {
        vec![
            SourceShape::new("llama2", 5, 6),
            SourceShape::new("bert", 1, 3),
            SourceShape::new("roberta", 1, 3),
        ]
    }

    fn ckpt(index: u8, hidden: Option<HiddenSpec>) -> Checkpoint {
        let strategy = FusionStrategy::new(index)
            .unwrap()
            .with_projection_dim(3)
            .unwrap()
            .with_sigma(0.2)
            .unwrap();
        let sources: Vec<_> = shapes()
            .into_iter()
            .filter(|s| strategy.required_sources().contains(&s.name.as_str()))
            .collect();
        let mut model = ModelParams::init(&strategy, &sources, 4, hidden, 9).unwrap();
        for (k, s) in model.head.slices_mut().into_iter().enumerate() {
            for (i, v) in s.iter_mut().enumerate() {
                *v += (k * 31 + i) as f64 * 1e-3;
            }
        }
        Checkpoint {
            strategy,
            sources,
            model,
        }
    }

    #[test]
    fn round_trip() {
        for c in [
            ckpt(2, None),
            ckpt(15, None),
            ckpt(
                14,
                Some(HiddenSpec {
                    width: 5,
                    activation: Activation::Relu,
                }),
            ),
        ] {
            let bytes = encode_checkpoint(&c).unwrap();
            let back = decode_checkpoint(&bytes).unwrap();
            assert_eq!(back, c);
            assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
        }
    }

    #[test]
    fn truncation_and_magic() {
        let bytes = encode_checkpoint(&ckpt(11, None)).unwrap();
        assert_eq!(decode_checkpoint(&bytes[..bytes.len() - 3]).unwrap_err().code(), "corrupt");
        let mut bad = bytes.clone();
        bad[3] = b'E';
        assert_eq!(decode_checkpoint(&bad).unwrap_err().code(), "format");
        let mut long = bytes;
        long.push(0);
        assert_eq!(decode_checkpoint(&long).unwrap_err().code(), "corrupt");
    }

    #[test]
    fn compatibility_check() {
        let c = ckpt(5, None);
        assert!(c.check_compatible(&shapes()).is_ok());
        let mut other = shapes();
        other[1].dim = 4;
        assert_eq!(c.check_compatible(&other).unwrap_err().code(), "checkpoint_mismatch");
        assert_eq!(
            c.check_compatible(&shapes()[..1]).unwrap_err().code(),
            "missing_source"
        );
    }
}
