//! The MXM network. Each block runs message passing on both graph layers
//! and adds its output head to the prediction.

mod checkpoint;
mod config;
mod features;
mod layers;
mod params;

use crate::elements::MAX_Z;
use crate::error::{Error, Result};
use crate::graph::MessageCounts;
use crate::tensor::{Tape, Tensor, Var};

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use config::{parse_local_rule, parse_order, BlockOrder, LocalInit, ModelConfig};
pub use features::{featurize, Sample};
pub use params::{Init, ParamId, ParamSpec, ParamStore};

use layers::{Decl, Linear, Mlp, Update};

/// Bound on the uniform init of the atom-type embedding table.
pub const EMBEDDING_BOUND: f64 = 1.732_050_807_568_877_2;

/// Name of the atom-type embedding table (`MAX_Z × F`, row `Z − 1`).
pub const EMBEDDING: &str = "embedding";

/// Direction of a cross-layer map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cross {
    GlobalToLocal,
    LocalToGlobal,
}

/// Which message-passing module an update function belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Site {
    /// Between the two global passes.
    Global,
    /// After local step 3.
    Local,
}

/// Affine map from raw network output to target units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    pub const IDENTITY: Self = Self { mean: 0.0, std: 1.0 };

    pub fn apply(&self, y: f64) -> f64 {
        self.std * y + self.mean
    }
}

impl Default for Standardizer {
    fn default() -> Self {
        Self::IDENTITY
    }
}

#[derive(Debug, Clone)]
struct GlobalPass {
    mlp: Mlp,
    w_e: Linear,
}

#[derive(Debug, Clone)]
struct GlobalMp {
    passes: [GlobalPass; 2],
    update: Update,
}

#[derive(Debug, Clone)]
struct LocalMp {
    mlp_kj: Mlp,
    w_e1: Linear,
    mlp_a1: Mlp,
    mlp_ji: Mlp,
    mlp_jpi: Mlp,
    w_e2: Linear,
    mlp_a2: Mlp,
    mlp_ji_prime: Mlp,
    w_e3: Linear,
    update: Update,
}

#[derive(Debug, Clone)]
struct OutputHead {
    hidden: Mlp,
    out: Linear,
}

#[derive(Debug, Clone)]
struct Block {
    global: GlobalMp,
    local: LocalMp,
    cross_gl: Mlp,
    cross_lg: Mlp,
    output: OutputHead,
}

/// Result of one recorded forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Scalar prediction before standardization.
    pub y: Var,
    /// Messages tallied per block from the row counts of the tensors built.
    pub per_block: Vec<MessageCounts>,
    /// Rows produced by the initial `h_g → h_l` map, if it runs.
    pub init_cross: u64,
}

impl Forward {
    pub fn total(&self) -> MessageCounts {
        let mut t = MessageCounts::default();
        for c in &self.per_block {
            t += *c;
        }
        t.cross += self.init_cross;
        t
    }
}

/// Network architecture; parameters live in a separate [`ParamStore`].
#[derive(Debug, Clone)]
pub struct MxmNet {
    cfg: ModelConfig,
    specs: Vec<ParamSpec>,
    embedding: ParamId,
    init_cross: Option<Mlp>,
    blocks: Vec<Block>,
}

impl MxmNet {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let f = cfg.hidden;
        let n_sbf = cfg.n_shbf * cfg.n_srbf;
        let edge_in = 2 * f + cfg.n_rbf;
        let mut d = Decl::default();
        let embedding = d.param(
            EMBEDDING.into(),
            vec![MAX_Z as usize, f],
            Init::Uniform(EMBEDDING_BOUND),
        );
        let init_cross = (cfg.order == BlockOrder::LocalFirst && cfg.local_init == LocalInit::Cross)
            .then(|| d.mlp("init/cross", f, f));
        let mut blocks = Vec::with_capacity(cfg.n_layers);
        for b in 0..cfg.n_layers {
            let p = format!("layer{b}");
            let pass = |d: &mut Decl, k: usize| GlobalPass {
                mlp: d.mlp(&format!("{p}/global/pass{k}/mlp"), edge_in, f),
                w_e: d.linear(&format!("{p}/global/pass{k}"), "_e", cfg.n_rbf, f, false),
            };
            let first = pass(&mut d, 0);
            let update = d.update(&format!("{p}/global/f_u"), f, cfg.n_residuals);
            let second = pass(&mut d, 1);
            let global = GlobalMp {
                passes: [first, second],
                update,
            };
            let l = format!("{p}/local");
            let local = LocalMp {
                mlp_kj: d.mlp(&format!("{l}/mlp_kj"), edge_in, f),
                w_e1: d.linear(&l, "_e1", cfg.n_rbf, f, false),
                mlp_a1: d.mlp(&format!("{l}/mlp_a1"), n_sbf, f),
                mlp_ji: d.mlp(&format!("{l}/mlp_ji"), edge_in, f),
                mlp_jpi: d.mlp(&format!("{l}/mlp_jpi"), f, f),
                w_e2: d.linear(&l, "_e2", cfg.n_rbf, f, false),
                mlp_a2: d.mlp(&format!("{l}/mlp_a2"), n_sbf, f),
                mlp_ji_prime: d.mlp(&format!("{l}/mlp_ji_prime"), f, f),
                w_e3: d.linear(&l, "_e3", cfg.n_rbf, f, false),
                update: d.update(&format!("{l}/f_u"), f, cfg.n_residuals),
            };
            let output = OutputHead {
                hidden: d.mlp(&format!("{p}/output"), f, f),
                out: d.linear(&format!("{p}/output"), "_out", f, 1, false),
            };
            let cross_gl = d.mlp(&format!("{p}/cross_gl"), f, f);
            let cross_lg = d.mlp(&format!("{p}/cross_lg"), f, f);
            blocks.push(Block {
                global,
                local,
                cross_gl,
                cross_lg,
                output,
            });
        }
        Ok(Self {
            cfg,
            specs: d.specs,
            embedding,
            init_cross,
            blocks,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn param_specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn init_params(&self, seed: u64) -> Result<ParamStore> {
        ParamStore::initialize(&self.specs, seed)
    }

    fn block(&self, layer: usize) -> Result<&Block> {
        self.blocks
            .get(layer)
            .ok_or_else(|| Error::invalid(format!("layer {layer} out of range")))
    }

    /// Looks up rows `Z − 1` of the embedding table.
    pub fn embed(&self, tape: &mut Tape, p: &[Var], atomic_numbers: &[u8]) -> Result<Var> {
        let rows = atomic_numbers
            .iter()
            .map(|&z| match z {
                1..=MAX_Z => Ok(z as usize - 1),
                _ => Err(Error::UnknownElement(z.to_string())),
            })
            .collect::<Result<Vec<_>>>()?;
        tape.gather(p[self.embedding.0], &rows)
    }

    /// Two distance-aware passes over the global layer with `f_u` between them.
    pub fn global_mp(
        &self,
        layer: usize,
        tape: &mut Tape,
        p: &[Var],
        h: Var,
        s: &Sample,
        tally: &mut MessageCounts,
    ) -> Result<Var> {
        let g = &self.block(layer)?.global;
        let edges = &s.graph.global;
        let rbf = tape.constant(s.rbf_global.clone());
        let mut h = h;
        for (k, pass) in g.passes.iter().enumerate() {
            if k == 1 {
                h = g.update.apply(tape, p, h)?;
            }
            let hj = tape.gather(h, &edges.src)?;
            let hi = tape.gather(h, &edges.dst)?;
            let x = tape.concat(&[hj, hi, rbf])?;
            let a = pass.mlp.apply(tape, p, x)?;
            let b = pass.w_e.apply(tape, p, rbf)?;
            let m = tape.mul(a, b)?;
            tally.global += tape.value(m).rows() as u64;
            let agg = tape.segment_sum(m, &edges.dst, s.n_nodes())?;
            h = tape.add(h, agg)?;
        }
        Ok(h)
    }

    /// Three-step angle-aware message passing over the local layer.
    pub fn local_mp(
        &self,
        layer: usize,
        tape: &mut Tape,
        p: &[Var],
        h: Var,
        s: &Sample,
        tally: &mut MessageCounts,
    ) -> Result<Var> {
        let l = &self.block(layer)?.local;
        s.check_consistency()?;
        let edges = &s.graph.local;
        let n_edges = edges.len();
        let t = &s.triples;
        let kj: Vec<usize> = t.two_hop.iter().map(|x| x.edge_kj).collect();
        let ji2: Vec<usize> = t.two_hop.iter().map(|x| x.edge_ji).collect();
        let jpi: Vec<usize> = t.one_hop.iter().map(|x| x.edge_jpi).collect();
        let ji1: Vec<usize> = t.one_hop.iter().map(|x| x.edge_ji).collect();

        let rbf = tape.constant(s.rbf_local.clone());
        let sbf2 = tape.constant(s.sbf_two_hop.clone());
        let sbf1 = tape.constant(s.sbf_one_hop.clone());
        let hj = tape.gather(h, &edges.src)?;
        let hi = tape.gather(h, &edges.dst)?;
        let x = tape.concat(&[hj, hi, rbf])?;

        // Step 1: two-hop angles
        let a = l.mlp_kj.apply(tape, p, x)?;
        let b = l.w_e1.apply(tape, p, rbf)?;
        let edge_kj = tape.mul(a, b)?;
        let per_triple = tape.gather(edge_kj, &kj)?;
        let gate = l.mlp_a1.apply(tape, p, sbf2)?;
        let msg = tape.mul(per_triple, gate)?;
        let summed = tape.segment_sum(msg, &ji2, n_edges)?;
        let own = l.mlp_ji.apply(tape, p, x)?;
        tally.local_step1 += (tape.value(msg).rows() + tape.value(own).rows()) as u64;
        let m = tape.add(own, summed)?;

        // Step 2: one-hop angles
        let a = l.mlp_jpi.apply(tape, p, m)?;
        let b = l.w_e2.apply(tape, p, rbf)?;
        let edge_jpi = tape.mul(a, b)?;
        let per_triple = tape.gather(edge_jpi, &jpi)?;
        let gate = l.mlp_a2.apply(tape, p, sbf1)?;
        let msg = tape.mul(per_triple, gate)?;
        let summed = tape.segment_sum(msg, &ji1, n_edges)?;
        let own = l.mlp_ji_prime.apply(tape, p, m)?;
        tally.local_step2 += (tape.value(msg).rows() + tape.value(own).rows()) as u64;
        let m = tape.add(own, summed)?;

        // Step 3: aggregate onto nodes
        let w = l.w_e3.apply(tape, p, rbf)?;
        let msg = tape.mul(m, w)?;
        tally.local_step3 += tape.value(msg).rows() as u64;
        let agg = tape.segment_sum(msg, &edges.dst, s.n_nodes())?;
        l.update.apply(tape, p, agg)
    }

    pub fn cross_layer_map(&self, layer: usize, dir: Cross, tape: &mut Tape, p: &[Var], h: Var) -> Result<Var> {
        let b = self.block(layer)?;
        match dir {
            Cross::GlobalToLocal => b.cross_gl.apply(tape, p, h),
            Cross::LocalToGlobal => b.cross_lg.apply(tape, p, h),
        }
    }

    pub fn residual_update_f_u(&self, layer: usize, site: Site, tape: &mut Tape, p: &[Var], h: Var) -> Result<Var> {
        let b = self.block(layer)?;
        match site {
            Site::Global => b.global.update.apply(tape, p, h),
            Site::Local => b.local.update.apply(tape, p, h),
        }
    }

    /// Per-node scalar output, `N × 1`.
    pub fn output_head(&self, layer: usize, tape: &mut Tape, p: &[Var], h: Var) -> Result<Var> {
        let o = &self.block(layer)?.output;
        let h = o.hidden.apply(tape, p, h)?;
        o.out.apply(tape, p, h)
    }

    /// Records the whole network on `tape`; `p` comes from [`ParamStore::bind`].
    pub fn forward(&self, tape: &mut Tape, p: &[Var], s: &Sample) -> Result<Forward> {
        if p.len() != self.specs.len() {
            return Err(Error::invalid(format!(
                "{} bound parameters for {} declared",
                p.len(),
                self.specs.len()
            )));
        }
        let n = s.n_nodes();
        let mut h_g = self.embed(tape, p, &s.atomic_numbers)?;
        let mut init_cross = 0;
        let mut h_l = match (&self.init_cross, self.cfg.order) {
            (Some(mlp), _) => {
                init_cross = n as u64;
                mlp.apply(tape, p, h_g)?
            }
            _ => h_g,
        };
        let mut per_block = Vec::with_capacity(self.blocks.len());
        let mut out: Option<Var> = None;
        for layer in 0..self.blocks.len() {
            let mut tally = MessageCounts::default();
            match self.cfg.order {
                BlockOrder::GlobalFirst => {
                    h_g = self.global_mp(layer, tape, p, h_g, s, &mut tally)?;
                    h_l = self.cross_layer_map(layer, Cross::GlobalToLocal, tape, p, h_g)?;
                    tally.cross += tape.value(h_l).rows() as u64;
                    h_l = self.local_mp(layer, tape, p, h_l, s, &mut tally)?;
                    out = Some(self.accumulate(layer, tape, p, h_l, out)?);
                    h_g = self.cross_layer_map(layer, Cross::LocalToGlobal, tape, p, h_l)?;
                    tally.cross += tape.value(h_g).rows() as u64;
                }
                BlockOrder::LocalFirst => {
                    h_l = self.local_mp(layer, tape, p, h_l, s, &mut tally)?;
                    out = Some(self.accumulate(layer, tape, p, h_l, out)?);
                    h_g = self.cross_layer_map(layer, Cross::LocalToGlobal, tape, p, h_l)?;
                    tally.cross += tape.value(h_g).rows() as u64;
                    h_g = self.global_mp(layer, tape, p, h_g, s, &mut tally)?;
                    h_l = self.cross_layer_map(layer, Cross::GlobalToLocal, tape, p, h_g)?;
                    tally.cross += tape.value(h_l).rows() as u64;
                }
            }
            per_block.push(tally);
        }
        let y = match out {
            Some(o) => tape.sum(o),
            None => tape.constant(Tensor::scalar(0.0)),
        };
        Ok(Forward {
            y,
            per_block,
            init_cross,
        })
    }

    fn accumulate(&self, layer: usize, tape: &mut Tape, p: &[Var], h_l: Var, acc: Option<Var>) -> Result<Var> {
        let o = self.output_head(layer, tape, p, h_l)?;
        match acc {
            Some(a) => tape.add(a, o),
            None => Ok(o),
        }
    }

    /// Raw network output for one sample.
    pub fn predict(&self, params: &ParamStore, s: &Sample) -> Result<f64> {
        let mut tape = Tape::new();
        let p = params.bind(&mut tape);
        let fwd = self.forward(&mut tape, &p, s)?;
        Ok(tape.value(fwd.y).item())
    }

    /// Raw output and `∂y/∂θ` for every parameter, in declaration order.
    pub fn gradients(&self, params: &ParamStore, s: &Sample) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let p = params.bind(&mut tape);
        let fwd = self.forward(&mut tape, &p, s)?;
        let mut g = tape.backward(fwd.y)?;
        let grads = p
            .iter()
            .zip(params.tensors())
            .map(|(&v, t)| g.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect();
        Ok((tape.value(fwd.y).item(), grads))
    }
}
