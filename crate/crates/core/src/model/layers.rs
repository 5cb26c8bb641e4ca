//! Parameterized building blocks. Each block records itself on a tape given
//! the bound parameter handles.

use crate::error::Result;
use crate::tensor::{Tape, Var};

use super::params::{Init, ParamId, ParamSpec};

/// Collects parameter declarations in order; ids are positions in the list.
#[derive(Debug, Default)]
pub(crate) struct Decl {
    pub specs: Vec<ParamSpec>,
}

impl Decl {
    pub fn param(&mut self, name: String, shape: Vec<usize>, init: Init) -> ParamId {
        self.specs.push(ParamSpec { name, shape, init });
        ParamId(self.specs.len() - 1)
    }

    pub fn linear(&mut self, prefix: &str, suffix: &str, fan_in: usize, fan_out: usize, bias: bool) -> Linear {
        let w = self.param(
            format!("{prefix}/w{suffix}"),
            vec![fan_in, fan_out],
            Init::FanIn(fan_in),
        );
        let b = bias.then(|| self.param(format!("{prefix}/b{suffix}"), vec![fan_out], Init::FanIn(fan_in)));
        Linear { w, b }
    }

    pub fn mlp(&mut self, prefix: &str, fan_in: usize, hidden: usize) -> Mlp {
        Mlp {
            first: self.linear(prefix, "1", fan_in, hidden, true),
            second: self.linear(prefix, "2", hidden, hidden, true),
        }
    }

    pub fn update(&mut self, prefix: &str, hidden: usize, n_residuals: usize) -> Update {
        Update {
            blocks: (0..n_residuals)
                .map(|r| self.mlp(&format!("{prefix}/res{r}"), hidden, hidden))
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn apply(&self, tape: &mut Tape, p: &[Var], x: Var) -> Result<Var> {
        let y = tape.matmul(x, p[self.w.0])?;
        match self.b {
            Some(b) => tape.add_bias(y, p[b.0]),
            None => Ok(y),
        }
    }
}

/// Two linear layers, each followed by swish.
#[derive(Debug, Clone)]
pub(crate) struct Mlp {
    pub first: Linear,
    pub second: Linear,
}

impl Mlp {
    pub fn apply(&self, tape: &mut Tape, p: &[Var], x: Var) -> Result<Var> {
        let h = self.first.apply(tape, p, x)?;
        let h = tape.swish(h);
        let h = self.second.apply(tape, p, h)?;
        Ok(tape.swish(h))
    }
}

/// Stack of residual blocks `h ← h + MLP(h)`.
#[derive(Debug, Clone)]
pub(crate) struct Update {
    pub blocks: Vec<Mlp>,
}

impl Update {
    pub fn apply(&self, tape: &mut Tape, p: &[Var], mut h: Var) -> Result<Var> {
        for block in &self.blocks {
            let delta = block.apply(tape, p, h)?;
            h = tape.add(h, delta)?;
        }
        Ok(h)
    }
}
