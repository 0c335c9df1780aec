//! Weight bundles: a text header naming each tensor and its shape, followed by
//! little-endian `f64` data in header order.
//!
//! ```text
//! IRSATW 1
//! dtype f64le
//! count 2
//! pda.dcn.0.weight 4,4,3,3
//! pda.dcn.0.bias 4
//! data
//! <raw bytes>
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;

use super::modulation::{DctBasis, TemporalWeights, TsfmWeights};
use super::pyramid::PdaWeights;
use super::tensor::{Conv, Linear};
use crate::error::{Error, Result};

const MAGIC: &str = "IRSATW 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::invalid(format!("tensor shape {shape:?} does not hold {} values", data.len())));
        }
        Ok(Self { shape, data })
    }
}

/// Named tensors; iteration and serialization follow name order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightBundle {
    pub tensors: BTreeMap<String, Tensor>,
}

impl WeightBundle {
    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::format("weight bundle", format!("missing tensor {name}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut head = format!("{MAGIC}\ndtype f64le\ncount {}\n", self.tensors.len());
        for (name, t) in &self.tensors {
            let dims: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
            head.push_str(&format!("{name} {}\n", dims.join(",")));
        }
        head.push_str("data\n");
        let mut out = head.into_bytes();
        for t in self.tensors.values() {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |d: String| Error::format("weight bundle", d);
        let mut pos = 0;
        let mut line = || -> Result<&str> {
            let end = bytes[pos..]
                .iter()
                .position(|b| *b == b'\n')
                .ok_or_else(|| bad("truncated header".into()))?;
            let s = std::str::from_utf8(&bytes[pos..pos + end]).map_err(|e| bad(e.to_string()))?;
            pos += end + 1;
            Ok(s)
        };
        if line()? != MAGIC {
            return Err(bad("bad magic".into()));
        }
        if line()? != "dtype f64le" {
            return Err(bad("only f64le tensors are supported".into()));
        }
        let count: usize = line()?
            .strip_prefix("count ")
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| bad("bad count line".into()))?;
        let mut heads = Vec::with_capacity(count);
        for _ in 0..count {
            let l = line()?;
            let (name, dims) = l.split_once(' ').ok_or_else(|| bad(format!("bad tensor line {l:?}")))?;
            let shape = dims
                .split(',')
                .map(|d| d.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("bad shape {dims:?}: {e}")))?;
            heads.push((name.to_string(), shape));
        }
        if line()? != "data" {
            return Err(bad("missing data marker".into()));
        }
        let mut b = WeightBundle::default();
        let mut rest = &bytes[pos..];
        for (name, shape) in heads {
            let n: usize = shape.iter().product();
            if rest.len() < n * 8 {
                return Err(bad(format!("data ends inside tensor {name}")));
            }
            let data: Vec<f64> = rest[..n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(bad(format!("non-finite value in {name}")));
            }
            rest = &rest[n * 8..];
            if b.tensors.insert(name.clone(), Tensor { shape, data }).is_some() {
                return Err(bad(format!("duplicate tensor {name}")));
            }
        }
        if !rest.is_empty() {
            return Err(bad(format!("{} trailing bytes", rest.len())));
        }
        Ok(b)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    fn put_conv(&mut self, name: &str, c: &Conv) {
        self.insert(
            format!("{name}.weight"),
            Tensor {
                shape: vec![c.out_c, c.in_c, c.kh, c.kw],
                data: c.weight.clone(),
            },
        );
        self.insert(
            format!("{name}.bias"),
            Tensor {
                shape: vec![c.out_c],
                data: c.bias.clone(),
            },
        );
    }

    fn conv(&self, name: &str) -> Result<Conv> {
        let w = self.get(&format!("{name}.weight"))?;
        let b = self.get(&format!("{name}.bias"))?;
        match w.shape[..] {
            [o, i, kh, kw] => Conv::new(o, i, kh, kw, w.data.clone(), b.data.clone()),
            _ => Err(Error::format("weight bundle", format!("{name}.weight must be 4-D, got {:?}", w.shape))),
        }
    }

    fn put_linear(&mut self, name: &str, l: &Linear) {
        self.insert(
            format!("{name}.weight"),
            Tensor {
                shape: vec![l.out_n, l.in_n],
                data: l.weight.clone(),
            },
        );
        self.insert(
            format!("{name}.bias"),
            Tensor {
                shape: vec![l.out_n],
                data: l.bias.clone(),
            },
        );
    }

    fn linear(&self, name: &str) -> Result<Linear> {
        let w = self.get(&format!("{name}.weight"))?;
        let b = self.get(&format!("{name}.bias"))?;
        match w.shape[..] {
            [o, i] => Linear::new(o, i, w.data.clone(), b.data.clone()),
            _ => Err(Error::format("weight bundle", format!("{name}.weight must be 2-D, got {:?}", w.shape))),
        }
    }

    fn count_prefixed(&self, prefix: &str) -> usize {
        (0..)
            .take_while(|i| self.tensors.contains_key(&format!("{prefix}.{i}.weight")))
            .count()
    }
}

/// Sizes of a randomly generated weight set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfrConfig {
    pub channels: usize,
    pub levels: usize,
    pub kernel: usize,
    pub spatial_kernel: usize,
    pub embed_layers: usize,
    pub freq_components: usize,
    /// Spatial size the DCT basis is built for.
    pub size: (usize, usize),
}

impl Default for RfrConfig {
    fn default() -> Self {
        Self {
            channels: 16,
            levels: 3,
            kernel: 3,
            spatial_kernel: 7,
            embed_layers: 2,
            freq_components: 16,
            size: (32, 32),
        }
    }
}

/// Alignment and modulation weights plus the DCT components they use.
#[derive(Debug, Clone, PartialEq)]
pub struct RfrWeights {
    pub pda: PdaWeights,
    pub tsfm: TsfmWeights,
    pub basis: DctBasis,
}

impl RfrWeights {
    pub fn random(rng: &mut impl Rng, cfg: &RfrConfig) -> Result<Self> {
        let c = cfg.channels;
        let pda = random_pda(rng, c, cfg.levels, cfg.kernel, 0.02);
        let embed = (0..cfg.embed_layers).map(|_| random_conv(rng, c, c, 3, 1.0)).collect();
        let tsfm = TsfmWeights {
            temporal: TemporalWeights {
                embed,
                fuse: random_conv(rng, c, 2 * c, 3, 1.0),
            },
            spatial: random_conv(rng, 1, 2, cfg.spatial_kernel, 1.0),
            frequency: random_linear(rng, c, c, 1.0),
        };
        let basis = DctBasis::lowest(cfg.size.0, cfg.size.1, cfg.freq_components)?;
        let w = Self { pda, tsfm, basis };
        w.pda.validate()?;
        Ok(w)
    }

    pub fn to_bundle(&self) -> WeightBundle {
        let mut b = WeightBundle::default();
        for (i, c) in self.pda.down.iter().enumerate() {
            b.put_conv(&format!("pda.down.{}", i + 1), c);
        }
        for (name, v) in [("offset", &self.pda.offset), ("dcn", &self.pda.dcn), ("fuse", &self.pda.fuse)] {
            for (i, c) in v.iter().enumerate() {
                b.put_conv(&format!("pda.{name}.{i}"), c);
            }
        }
        for (i, c) in self.tsfm.temporal.embed.iter().enumerate() {
            b.put_conv(&format!("tsfm.embed.{i}"), c);
        }
        b.put_conv("tsfm.temporal_fuse", &self.tsfm.temporal.fuse);
        b.put_conv("tsfm.spatial", &self.tsfm.spatial);
        b.put_linear("tsfm.frequency", &self.tsfm.frequency);
        let comps = self.basis.components();
        b.insert(
            "tsfm.frequency.components",
            Tensor {
                shape: vec![comps.len(), 2],
                data: comps.iter().flat_map(|(u, v)| [*u as f64, *v as f64]).collect(),
            },
        );
        let (h, w) = self.basis.size();
        b.insert(
            "tsfm.frequency.size",
            Tensor {
                shape: vec![2],
                data: vec![h as f64, w as f64],
            },
        );
        b
    }

    pub fn from_bundle(b: &WeightBundle) -> Result<Self> {
        let levels = b.count_prefixed("pda.dcn");
        let down = (1..levels).map(|i| b.conv(&format!("pda.down.{i}"))).collect::<Result<_>>()?;
        let layer = |name: &str| (0..levels).map(|i| b.conv(&format!("pda.{name}.{i}"))).collect::<Result<Vec<_>>>();
        let pda = PdaWeights {
            down,
            offset: layer("offset")?,
            dcn: layer("dcn")?,
            fuse: layer("fuse")?,
        };
        pda.validate().map_err(|e| Error::format("weight bundle", e))?;
        let embed = (0..b.count_prefixed("tsfm.embed"))
            .map(|i| b.conv(&format!("tsfm.embed.{i}")))
            .collect::<Result<_>>()?;
        let tsfm = TsfmWeights {
            temporal: TemporalWeights {
                embed,
                fuse: b.conv("tsfm.temporal_fuse")?,
            },
            spatial: b.conv("tsfm.spatial")?,
            frequency: b.linear("tsfm.frequency")?,
        };
        let index = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::format("weight bundle", format!("bad DCT index {v}")))
            }
        };
        let comps = b
            .get("tsfm.frequency.components")?
            .data
            .chunks_exact(2)
            .map(|p| Ok((index(p[0])?, index(p[1])?)))
            .collect::<Result<Vec<_>>>()?;
        let size = &b.get("tsfm.frequency.size")?.data;
        if size.len() != 2 {
            return Err(Error::format("weight bundle", "tsfm.frequency.size must hold 2 values"));
        }
        let basis = DctBasis::new(index(size[0])?, index(size[1])?, comps).map_err(|e| Error::format("weight bundle", e))?;
        Ok(Self { pda, tsfm, basis })
    }
}

/// Uniform weights in `±scale/√fan_in` and biases in `±scale/√fan_in`.
pub fn random_conv(rng: &mut impl Rng, out_c: usize, in_c: usize, k: usize, scale: f64) -> Conv {
    let a = scale / ((in_c * k * k) as f64).sqrt();
    let w = (0..out_c * in_c * k * k).map(|_| rng.gen_range(-a..=a)).collect();
    let b = (0..out_c).map(|_| rng.gen_range(-a..=a)).collect();
    Conv::new(out_c, in_c, k, k, w, b).expect("consistent shapes")
}

pub fn random_linear(rng: &mut impl Rng, out_n: usize, in_n: usize, scale: f64) -> Linear {
    let a = scale / (in_n as f64).sqrt();
    let w = (0..out_n * in_n).map(|_| rng.gen_range(-a..=a)).collect();
    let b = (0..out_n).map(|_| rng.gen_range(-a..=a)).collect();
    Linear::new(out_n, in_n, w, b).expect("consistent shapes")
}

/// Random pyramid weights; `offset_scale` scales the offset predictors.
pub fn random_pda(rng: &mut impl Rng, c: usize, levels: usize, k: usize, offset_scale: f64) -> PdaWeights {
    let n = k * k;
    PdaWeights {
        down: (1..levels).map(|_| random_conv(rng, c, c, 3, 1.0)).collect(),
        offset: (0..levels).map(|_| random_conv(rng, 3 * n, 2 * c, 3, offset_scale)).collect(),
        dcn: (0..levels).map(|_| random_conv(rng, c, c, k, 1.0)).collect(),
        fuse: (0..levels)
            .map(|l| random_conv(rng, c, if l + 1 == levels { c } else { 2 * c }, 3, 1.0))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bundle_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = RfrConfig {
            channels: 4,
            levels: 2,
            freq_components: 4,
            size: (8, 8),
            ..Default::default()
        };
        let w = RfrWeights::random(&mut rng, &cfg).unwrap();
        let bytes = w.to_bundle().to_bytes();
        let back = RfrWeights::from_bundle(&WeightBundle::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back, w);
        assert_eq!(back.to_bundle().to_bytes(), bytes);
    }

    #[test]
    fn malformed_bundles() {
        assert!(WeightBundle::from_bytes(b"nope\n").is_err());
        let mut b = WeightBundle::default();
        b.insert("x", Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let bytes = b.to_bytes();
        assert!(WeightBundle::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(WeightBundle::from_bytes(&extra).is_err());
        assert_eq!(WeightBundle::from_bytes(&bytes).unwrap(), b);
        assert!(RfrWeights::from_bundle(&b).is_err());
    }
}
