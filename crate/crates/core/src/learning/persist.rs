//! Binary model container.
//!
//! ```text
//! magic      "SSMB"
//! version    u16
//! kind       u8        0 = OL, 1 = RF, 2 = EN
//! flags      u8        bit 0: linear model present, bit 1: forest present
//! dim        u32
//! [linear]   lambda f64, updates u64, w[dim] f64, c_inv[dim*dim] f64
//! [forest]   n_trees u32, max_depth u32 (0 = unlimited), min_samples_leaf u32,
//!            features_per_split u32 (0 = auto), bootstrap u8, rng_seed u64,
//!            stored_trees u32, then per tree: node_count u32 and nodes
//!              leaf:  0u8, prediction f64, samples u32
//!              split: 1u8, feature u16, threshold f64, left u32, right u32,
//!                     samples u32, impurity_decrease f64
//! log_ref    u32 length + UTF-8 bytes
//! checksum   SHA-256 of everything above
//! ```
//!
//! All integers and floats are little-endian; floats round-trip bit-exactly.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::{ForestParams, OnlineLinearModel, RandomForestModel, RegressionTree, TreeNode};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"SSMB";
const HEADER_LEN: usize = 4 + 2;
const CHECKSUM_LEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Online,
    Forest,
    Ensemble,
}

impl ModelKind {
    fn tag(self) -> u8 {
        match self {
            ModelKind::Online => 0,
            ModelKind::Forest => 1,
            ModelKind::Ensemble => 2,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Online => "OL",
            ModelKind::Forest => "RF",
            ModelKind::Ensemble => "EN",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "OL" => Ok(ModelKind::Online),
            "RF" => Ok(ModelKind::Forest),
            "EN" => Ok(ModelKind::Ensemble),
            _ => Err(Error::InvalidModel(format!("unknown model kind `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    kind: ModelKind,
    linear: Option<OnlineLinearModel>,
    forest: Option<RandomForestModel>,
    training_log_ref: Option<String>,
}

impl ModelBundle {
    pub fn new(
        kind: ModelKind,
        linear: Option<OnlineLinearModel>,
        forest: Option<RandomForestModel>,
        training_log_ref: Option<String>,
    ) -> Result<Self> {
        let need_linear = matches!(kind, ModelKind::Online | ModelKind::Ensemble);
        let need_forest = matches!(kind, ModelKind::Forest | ModelKind::Ensemble);
        if need_linear != linear.is_some() || need_forest != forest.is_some() {
            return Err(Error::InvalidModel(format!(
                "{kind} bundle expects linear={need_linear}, forest={need_forest}"
            )));
        }
        if let (Some(l), Some(f)) = (&linear, &forest) {
            if l.dim() != f.dim() {
                return Err(Error::Dimension {
                    expected: l.dim(),
                    got: f.dim(),
                });
            }
        }
        Ok(Self {
            kind,
            linear,
            forest,
            training_log_ref,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn linear(&self) -> Option<&OnlineLinearModel> {
        self.linear.as_ref()
    }

    pub fn forest(&self) -> Option<&RandomForestModel> {
        self.forest.as_ref()
    }

    pub fn training_log_ref(&self) -> Option<&str> {
        self.training_log_ref.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.linear
            .as_ref()
            .map(OnlineLinearModel::dim)
            .or(self.forest.as_ref().map(RandomForestModel::dim))
            .unwrap_or(0)
    }

    pub fn into_parts(self) -> (ModelKind, Option<OnlineLinearModel>, Option<RandomForestModel>) {
        (self.kind, self.linear, self.forest)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        w.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        w.push(self.kind.tag());
        let flags = u8::from(self.linear.is_some()) | (u8::from(self.forest.is_some()) << 1);
        w.push(flags);
        put_u32(&mut w, self.dim() as u32);
        if let Some(l) = &self.linear {
            put_f64(&mut w, l.lambda());
            w.extend_from_slice(&l.updates().to_le_bytes());
            for &v in l.weights().iter().chain(l.c_inv()) {
                put_f64(&mut w, v);
            }
        }
        if let Some(f) = &self.forest {
            let p = f.params();
            put_u32(&mut w, p.n_trees as u32);
            put_u32(&mut w, p.max_depth.map_or(0, |d| d as u32));
            put_u32(&mut w, p.min_samples_leaf as u32);
            put_u32(&mut w, p.features_per_split.map_or(0, |k| k as u32));
            w.push(u8::from(p.bootstrap));
            w.extend_from_slice(&f.rng_seed().to_le_bytes());
            put_u32(&mut w, f.trees().len() as u32);
            for t in f.trees() {
                put_u32(&mut w, t.nodes().len() as u32);
                for node in t.nodes() {
                    match node {
                        TreeNode::Leaf { prediction, samples } => {
                            w.push(0);
                            put_f64(&mut w, *prediction);
                            put_u32(&mut w, *samples);
                        }
                        TreeNode::Split {
                            feature,
                            threshold,
                            left,
                            right,
                            samples,
                            impurity_decrease,
                        } => {
                            w.push(1);
                            w.extend_from_slice(&feature.to_le_bytes());
                            put_f64(&mut w, *threshold);
                            put_u32(&mut w, *left);
                            put_u32(&mut w, *right);
                            put_u32(&mut w, *samples);
                            put_f64(&mut w, *impurity_decrease);
                        }
                    }
                }
            }
        }
        let log = self.training_log_ref.as_deref().unwrap_or("");
        put_u32(&mut w, log.len() as u32);
        w.extend_from_slice(log.as_bytes());
        let digest = Sha256::digest(&w);
        w.extend_from_slice(&digest);
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
            return Err(Error::Checksum);
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Corrupt("bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let (body, digest) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checksum);
        }

        let mut r = Reader {
            buf: body,
            pos: HEADER_LEN,
        };
        let kind = match r.u8()? {
            0 => ModelKind::Online,
            1 => ModelKind::Forest,
            2 => ModelKind::Ensemble,
            k => return Err(Error::Corrupt(format!("unknown kind tag {k}"))),
        };
        let flags = r.u8()?;
        if flags & !0b11 != 0 {
            return Err(Error::Corrupt(format!("unknown flags {flags:#x}")));
        }
        let dim = r.u32()? as usize;
        let linear = if flags & 1 != 0 {
            let lambda = r.f64()?;
            let updates = r.u64()?;
            let cells = dim
                .checked_mul(dim + 1)
                .filter(|c| c * 8 <= r.remaining())
                .ok_or_else(|| Error::Corrupt("linear model larger than file".into()))?;
            let mut vals = Vec::with_capacity(cells);
            for _ in 0..cells {
                vals.push(r.f64()?);
            }
            let c_inv = vals.split_off(dim);
            Some(OnlineLinearModel::from_parts(vals, c_inv, lambda, updates)?)
        } else {
            None
        };
        let forest = if flags & 2 != 0 {
            let n_trees = r.u32()? as usize;
            let max_depth = r.u32()?;
            let min_samples_leaf = r.u32()? as usize;
            let per_split = r.u32()?;
            let bootstrap = match r.u8()? {
                0 => false,
                1 => true,
                b => return Err(Error::Corrupt(format!("bad bootstrap flag {b}"))),
            };
            let rng_seed = r.u64()?;
            let params = ForestParams {
                n_trees,
                max_depth: (max_depth != 0).then_some(max_depth as usize),
                min_samples_leaf,
                features_per_split: (per_split != 0).then_some(per_split as usize),
                bootstrap,
            };
            let stored = r.u32()? as usize;
            let mut trees = Vec::with_capacity(stored.min(r.remaining()));
            for _ in 0..stored {
                let count = r.u32()? as usize;
                let mut nodes = Vec::with_capacity(count.min(r.remaining() / 13 + 1));
                for _ in 0..count {
                    nodes.push(match r.u8()? {
                        0 => TreeNode::Leaf {
                            prediction: r.f64()?,
                            samples: r.u32()?,
                        },
                        1 => TreeNode::Split {
                            feature: u16::from_le_bytes([r.u8()?, r.u8()?]),
                            threshold: r.f64()?,
                            left: r.u32()?,
                            right: r.u32()?,
                            samples: r.u32()?,
                            impurity_decrease: r.f64()?,
                        },
                        t => return Err(Error::Corrupt(format!("unknown node tag {t}"))),
                    });
                }
                trees.push(RegressionTree::from_nodes(nodes, dim)?);
            }
            Some(RandomForestModel::from_parts(dim, params, rng_seed, trees)?)
        } else {
            None
        };
        let log_len = r.u32()? as usize;
        let log = r.take(log_len)?;
        let log = std::str::from_utf8(log).map_err(|_| Error::Corrupt("training log reference is not UTF-8".into()))?;
        if r.remaining() != 0 {
            return Err(Error::Corrupt(format!("{} trailing bytes", r.remaining())));
        }
        if let Some(l) = &linear {
            if l.dim() != dim {
                return Err(Error::Corrupt("dimension header disagrees with payload".into()));
            }
        }
        ModelBundle::new(kind, linear, forest, (!log.is_empty()).then(|| log.to_string()))
            .map_err(|e| Error::Corrupt(e.to_string()))
    }
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(w: &mut Vec<u8>, v: f64) {
    w.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Corrupt("unexpected end of payload".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn save_model(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, bundle.to_bytes())?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelBundle> {
    ModelBundle::from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::TrainingExample;

    fn ensemble() -> ModelBundle {
        let mut l = OnlineLinearModel::new(3, 0.5, 1).unwrap();
        l.update(&[1.0, 2.0, 0.5], 3.0).unwrap();
        let data: Vec<_> = (0..30)
            .map(|i| TrainingExample {
                x: vec![i as f64, (i % 4) as f64, (i % 7) as f64],
                y: (i % 5) as f64,
            })
            .collect();
        let params = ForestParams {
            n_trees: 5,
            ..ForestParams::default()
        };
        let f = RandomForestModel::fit(&data, params, 2).unwrap();
        ModelBundle::new(ModelKind::Ensemble, Some(l), Some(f), Some("train.csv".into())).unwrap()
    }

    #[test]
    fn bytes_round_trip() {
        let b = ensemble();
        assert_eq!(ModelBundle::from_bytes(&b.to_bytes()).unwrap(), b);
    }

    #[test]
    fn unfitted_forest_round_trips() {
        let f = RandomForestModel::unfitted(3, ForestParams::default(), 7).unwrap();
        let l = OnlineLinearModel::new(3, 1.0, 0).unwrap();
        let b = ModelBundle::new(ModelKind::Ensemble, Some(l), Some(f), None).unwrap();
        assert_eq!(ModelBundle::from_bytes(&b.to_bytes()).unwrap(), b);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let mut bytes = ensemble().to_bytes();
        bytes[4] = 9;
        assert!(matches!(
            ModelBundle::from_bytes(&bytes),
            Err(Error::Version { found: 9, expected: 1 })
        ));
    }

    #[test]
    fn truncation_fails_checksum() {
        let bytes = ensemble().to_bytes();
        for cut in [1, 10, bytes.len() / 2, bytes.len() - 7] {
            assert!(matches!(
                ModelBundle::from_bytes(&bytes[..bytes.len() - cut]),
                Err(Error::Checksum)
            ));
        }
        assert!(matches!(ModelBundle::from_bytes(&bytes[..3]), Err(Error::Checksum)));
    }

    #[test]
    fn flipped_payload_bit_fails_checksum() {
        let mut bytes = ensemble().to_bytes();
        bytes[20] ^= 0x10;
        assert!(matches!(ModelBundle::from_bytes(&bytes), Err(Error::Checksum)));
    }

    #[test]
    fn kind_requires_sub_models() {
        let l = OnlineLinearModel::new(3, 1.0, 0).unwrap();
        assert!(ModelBundle::new(ModelKind::Ensemble, Some(l.clone()), None, None).is_err());
        assert!(ModelBundle::new(ModelKind::Forest, Some(l), None, None).is_err());
    }
}
