use rand::Rng;

use super::{Architecture, EmbedError, EmbedderConfig, TraceEntry, RESNET_STRIDE};
use crate::ecgstore::{MODEL_LEAD_COUNT, MODEL_SAMPLES};
use crate::tensornet::{ConvSpec, Graph, NodeId, Padding, ParamId, ParamStore, Scalar, TensorError};

#[derive(Debug, Clone)]
pub(super) struct Conv {
    pub w: ParamId,
    pub b: ParamId,
    pub spec: ConvSpec,
}

#[derive(Debug, Clone)]
pub(super) struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone)]
pub(super) enum CdilBlock {
    /// `relu(conv(x))`
    Initial(Conv),
    /// `x + relu(conv(x))`
    Base(Conv),
    /// `skip(x) + relu(conv(mix(x)))`: a 1x1 position-wise channel mix in
    /// front of the dilated convolution, with a 1x1 projection on the
    /// skip path when the width changes.
    Deformable { mix: Conv, conv: Conv, skip: Option<Conv> },
}

/// Pre-activation block: `shortcut(x) + conv2(relu(conv1(relu(x))))`.
#[derive(Debug, Clone)]
pub(super) struct ResBlock {
    pub conv1: Conv,
    pub conv2: Conv,
    pub shortcut: Option<Conv>,
}

#[derive(Debug, Clone)]
pub(super) enum Network {
    Cdil { blocks: Vec<CdilBlock>, head: Dense },
    Resnet { stages: Vec<Vec<ResBlock>>, mlp: Vec<Dense> },
}

struct Builder<'a, T: Scalar, R: Rng> {
    params: &'a mut ParamStore<T>,
    rng: &'a mut R,
}

impl<T: Scalar, R: Rng> Builder<'_, T, R> {
    fn conv(&mut self, name: &str, c_in: usize, c_out: usize, k: usize, spec: ConvSpec) -> Result<Conv, TensorError> {
        let bound = (1.0 / (c_in * k) as f64).sqrt();
        let w = self.params.add_uniform(format!("{name}.weight"), &[c_out, c_in, k], bound, self.rng)?;
        let b = self.params.add_uniform(format!("{name}.bias"), &[c_out], bound, self.rng)?;
        Ok(Conv { w, b, spec })
    }

    fn dense(&mut self, name: &str, n_in: usize, n_out: usize) -> Result<Dense, TensorError> {
        let bound = (1.0 / n_in as f64).sqrt();
        let w = self.params.add_uniform(format!("{name}.weight"), &[n_out, n_in], bound, self.rng)?;
        let b = self.params.add_uniform(format!("{name}.bias"), &[n_out], bound, self.rng)?;
        Ok(Dense { w, b })
    }
}

impl Network {
    pub fn build<T: Scalar, R: Rng>(
        cfg: &EmbedderConfig,
        params: &mut ParamStore<T>,
        rng: &mut R,
    ) -> Result<Self, EmbedError> {
        let mut b = Builder { params, rng };
        let k = cfg.kernel_size;
        match cfg.architecture {
            Architecture::Cdil => {
                let (w, expanded) = (cfg.channels[0], cfg.channels[1]);
                let circ = ConvSpec::circular;
                let one = ConvSpec::circular(1);
                let mut blocks = vec![CdilBlock::Initial(b.conv("initial", MODEL_LEAD_COUNT, w, k, circ(1))?)];
                for i in 0..cfg.blocks {
                    blocks.push(CdilBlock::Base(b.conv(&format!("base{i}"), w, w, k, circ(1 << i))?));
                }
                let d = 1usize << cfg.blocks;
                blocks.push(CdilBlock::Deformable {
                    mix: b.conv("deform0.mix", w, w, 1, one)?,
                    conv: b.conv("deform0.conv", w, w, k, circ(d))?,
                    skip: None,
                });
                blocks.push(CdilBlock::Base(b.conv(&format!("base{}", cfg.blocks), w, w, k, circ(2 * d))?));
                blocks.push(CdilBlock::Deformable {
                    mix: b.conv("deform1.mix", w, w, 1, one)?,
                    conv: b.conv("deform1.conv", w, expanded, k, circ(4 * d))?,
                    skip: if expanded == w { None } else { Some(b.conv("deform1.skip", w, expanded, 1, one)?) },
                });
                let head = b.dense("head", expanded, cfg.embedding_dim)?;
                Ok(Network::Cdil { blocks, head })
            }
            Architecture::Resnet1d => {
                let mut stages = Vec::new();
                let mut c_in = MODEL_LEAD_COUNT;
                let mut len = MODEL_SAMPLES;
                for (s, &c_out) in cfg.channels.iter().enumerate() {
                    let mut blocks = Vec::new();
                    for j in 0..cfg.blocks {
                        let stride = if j == 0 { RESNET_STRIDE } else { 1 };
                        let name = format!("stage{s}.block{j}");
                        let downsample = ConvSpec::new(stride, 1, Padding::Zeros);
                        let conv1 = b.conv(&format!("{name}.conv1"), c_in, c_out, k, downsample)?;
                        let conv2 =
                            b.conv(&format!("{name}.conv2"), c_out, c_out, k, ConvSpec::new(1, 1, Padding::Zeros))?;
                        let shortcut = if stride != 1 || c_in != c_out {
                            Some(b.conv(&format!("{name}.shortcut"), c_in, c_out, 1, downsample)?)
                        } else {
                            None
                        };
                        blocks.push(ResBlock { conv1, conv2, shortcut });
                        c_in = c_out;
                    }
                    len = (len - 1) / RESNET_STRIDE + 1;
                    stages.push(blocks);
                }
                let flat = c_in * len;
                let (h1, h2) = (cfg.mlp_hidden[0], cfg.mlp_hidden[1]);
                let mlp =
                    vec![b.dense("mlp0", flat, h1)?, b.dense("mlp1", h1, h2)?, b.dense("mlp2", h2, cfg.embedding_dim)?];
                Ok(Network::Resnet { stages, mlp })
            }
        }
    }

    pub fn forward<'p, T: Scalar>(
        &self,
        g: &mut Graph<'p, T>,
        params: &'p ParamStore<T>,
        x: NodeId,
        mut trace: Option<&mut Vec<TraceEntry>>,
    ) -> Result<NodeId, TensorError> {
        let mut record = |g: &Graph<'p, T>, name: String, node: NodeId| {
            if let Some(t) = trace.as_deref_mut() {
                t.push(TraceEntry { name, shape: g.shape(node).to_vec() });
            }
        };
        let conv = |g: &mut Graph<'p, T>, c: &Conv, x: NodeId| {
            let (w, b) = (g.param(params, c.w), g.param(params, c.b));
            g.conv1d(x, w, Some(b), c.spec)
        };
        let dense = |g: &mut Graph<'p, T>, d: &Dense, x: NodeId| {
            let (w, b) = (g.param(params, d.w), g.param(params, d.b));
            g.dense(x, w, Some(b))
        };
        match self {
            Network::Cdil { blocks, head } => {
                let mut h = x;
                for (i, block) in blocks.iter().enumerate() {
                    h = match block {
                        CdilBlock::Initial(c) => {
                            let y = conv(g, c, h)?;
                            g.relu(y)
                        }
                        CdilBlock::Base(c) => {
                            let y = conv(g, c, h)?;
                            let y = g.relu(y);
                            g.add(h, y)?
                        }
                        CdilBlock::Deformable { mix, conv: c, skip } => {
                            let m = conv(g, mix, h)?;
                            let y = conv(g, c, m)?;
                            let y = g.relu(y);
                            let s = match skip {
                                Some(p) => conv(g, p, h)?,
                                None => h,
                            };
                            g.add(s, y)?
                        }
                    };
                    let kind = match block {
                        CdilBlock::Initial(_) => "initial",
                        CdilBlock::Base(_) => "base",
                        CdilBlock::Deformable { .. } => "deformable",
                    };
                    record(g, format!("block{i}.{kind}"), h);
                }
                let pooled = g.mean_over_time(h)?;
                record(g, "mean_over_time".into(), pooled);
                let out = dense(g, head, pooled)?;
                record(g, "dense".into(), out);
                Ok(out)
            }
            Network::Resnet { stages, mlp } => {
                let mut h = x;
                for (s, blocks) in stages.iter().enumerate() {
                    for block in blocks {
                        let a = g.relu(h);
                        let y = conv(g, &block.conv1, a)?;
                        let y = g.relu(y);
                        let y = conv(g, &block.conv2, y)?;
                        let shortcut = match &block.shortcut {
                            Some(p) => conv(g, p, h)?,
                            None => h,
                        };
                        h = g.add(shortcut, y)?;
                    }
                    record(g, format!("stage{s}"), h);
                }
                let mut v = g.flatten(h);
                record(g, "flatten".into(), v);
                for (i, d) in mlp.iter().enumerate() {
                    v = dense(g, d, v)?;
                    if i + 1 < mlp.len() {
                        v = g.relu(v);
                    }
                }
                record(g, "mlp".into(), v);
                Ok(v)
            }
        }
    }
}
