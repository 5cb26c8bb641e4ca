use std::collections::BTreeMap;
use std::str::FromStr;

use crate::basis::{DEFAULT_ENVELOPE_EXPONENT, N_RBF, N_SHBF, N_SRBF};
use crate::error::{Error, Result};
use crate::graph::{GraphConfig, LocalRule};

/// Order of the two message-passing modules inside one MXM block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockOrder {
    /// global MP → cross g→l → local MP → output → cross l→g
    GlobalFirst,
    /// local MP → output → cross l→g → global MP → cross g→l
    LocalFirst,
}

/// Source of the initial local-layer embeddings (only read when the local
/// layer runs first).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalInit {
    Cross,
    Embedding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hidden: usize,
    pub n_layers: usize,
    pub n_residuals: usize,
    pub n_rbf: usize,
    pub n_shbf: usize,
    pub n_srbf: usize,
    pub envelope_exponent: i32,
    pub local_rule: LocalRule,
    pub global_cutoff: f64,
    /// Cutoff of the local-layer basis when the local layer is bond-based.
    pub local_basis_cutoff: f64,
    pub global_excludes_local: bool,
    pub order: BlockOrder,
    pub local_init: LocalInit,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            n_layers: 6,
            n_residuals: 2,
            n_rbf: N_RBF,
            n_shbf: N_SHBF,
            n_srbf: N_SRBF,
            envelope_exponent: DEFAULT_ENVELOPE_EXPONENT,
            local_rule: LocalRule::Bonds,
            global_cutoff: 5.0,
            local_basis_cutoff: 5.0,
            global_excludes_local: false,
            order: BlockOrder::GlobalFirst,
            local_init: LocalInit::Cross,
        }
    }
}

impl ModelConfig {
    pub fn small(hidden: usize, n_layers: usize) -> Self {
        Self {
            hidden,
            n_layers,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("layers", self.n_layers),
            ("n_rbf", self.n_rbf),
            ("n_shbf", self.n_shbf),
            ("n_srbf", self.n_srbf),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be positive")));
        }
        if (self.n_rbf, self.n_shbf, self.n_srbf) != (N_RBF, N_SHBF, N_SRBF) {
            return Err(Error::invalid(format!(
                "basis sizes must be ({N_RBF}, {N_SHBF}, {N_SRBF})"
            )));
        }
        if self.envelope_exponent < 1 {
            return Err(Error::invalid("envelope exponent must be >= 1"));
        }
        if !(self.global_cutoff > 0.0) || !(self.local_basis_cutoff > 0.0) {
            return Err(Error::invalid("cutoffs must be positive"));
        }
        if let LocalRule::Cutoff(c) = self.local_rule {
            if !(c > 0.0 && c < self.global_cutoff) {
                return Err(Error::invalid(format!(
                    "local cutoff {c} must lie in (0, {})",
                    self.global_cutoff
                )));
            }
        }
        Ok(())
    }

    pub fn graph_config(&self) -> GraphConfig {
        GraphConfig {
            local_rule: self.local_rule,
            global_cutoff: self.global_cutoff,
            global_excludes_local: self.global_excludes_local,
        }
    }

    /// Basis cutoff on the local layer: the layer cutoff itself, or the
    /// configured value for bond-based layers.
    pub fn local_cutoff(&self) -> f64 {
        match self.local_rule {
            LocalRule::Cutoff(c) => c,
            LocalRule::Bonds => self.local_basis_cutoff,
        }
    }

    /// Flat `key=value` form used in checkpoint headers.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let local = match self.local_rule {
            LocalRule::Bonds => "bonds".to_string(),
            LocalRule::Cutoff(c) => format!("cutoff:{c}"),
        };
        vec![
            ("hidden".into(), self.hidden.to_string()),
            ("layers".into(), self.n_layers.to_string()),
            ("residuals".into(), self.n_residuals.to_string()),
            ("n_rbf".into(), self.n_rbf.to_string()),
            ("n_shbf".into(), self.n_shbf.to_string()),
            ("n_srbf".into(), self.n_srbf.to_string()),
            ("envelope".into(), self.envelope_exponent.to_string()),
            ("local".into(), local),
            ("dg".into(), self.global_cutoff.to_string()),
            ("local_basis_cutoff".into(), self.local_basis_cutoff.to_string()),
            ("global_excludes_local".into(), self.global_excludes_local.to_string()),
            (
                "order".into(),
                match self.order {
                    BlockOrder::GlobalFirst => "global-first",
                    BlockOrder::LocalFirst => "local-first",
                }
                .into(),
            ),
            (
                "local_init".into(),
                match self.local_init {
                    LocalInit::Cross => "cross",
                    LocalInit::Embedding => "embedding",
                }
                .into(),
            ),
        ]
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        fn get<T: FromStr>(pairs: &BTreeMap<String, String>, key: &str) -> Result<T> {
            let v = pairs
                .get(key)
                .ok_or_else(|| Error::invalid(format!("missing model key `{key}`")))?;
            v.parse()
                .map_err(|_| Error::invalid(format!("bad value `{v}` for model key `{key}`")))
        }
        let local: String = get(pairs, "local")?;
        let order: String = get(pairs, "order")?;
        let local_init: String = get(pairs, "local_init")?;
        let cfg = Self {
            hidden: get(pairs, "hidden")?,
            n_layers: get(pairs, "layers")?,
            n_residuals: get(pairs, "residuals")?,
            n_rbf: get(pairs, "n_rbf")?,
            n_shbf: get(pairs, "n_shbf")?,
            n_srbf: get(pairs, "n_srbf")?,
            envelope_exponent: get(pairs, "envelope")?,
            local_rule: parse_local_rule(&local)?,
            global_cutoff: get(pairs, "dg")?,
            local_basis_cutoff: get(pairs, "local_basis_cutoff")?,
            global_excludes_local: get(pairs, "global_excludes_local")?,
            order: parse_order(&order)?,
            local_init: match local_init.as_str() {
                "cross" => LocalInit::Cross,
                "embedding" => LocalInit::Embedding,
                other => return Err(Error::invalid(format!("unknown local_init `{other}`"))),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `bonds` or `cutoff:<Å>`.
pub fn parse_local_rule(s: &str) -> Result<LocalRule> {
    match s {
        "bonds" => Ok(LocalRule::Bonds),
        _ => s
            .strip_prefix("cutoff:")
            .and_then(|v| v.parse().ok())
            .map(LocalRule::Cutoff)
            .ok_or_else(|| Error::invalid(format!("local rule must be `bonds` or `cutoff:<Å>`, got `{s}`"))),
    }
}

pub fn parse_order(s: &str) -> Result<BlockOrder> {
    match s {
        "global-first" => Ok(BlockOrder::GlobalFirst),
        "local-first" => Ok(BlockOrder::LocalFirst),
        other => Err(Error::invalid(format!("unknown block order `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_round_trip() {
        let mut cfg = ModelConfig::small(8, 2);
        cfg.local_rule = LocalRule::Cutoff(2.0);
        cfg.global_cutoff = 6.0;
        cfg.order = BlockOrder::LocalFirst;
        let map: BTreeMap<String, String> = cfg.to_pairs().into_iter().collect();
        assert_eq!(ModelConfig::from_pairs(&map).unwrap(), cfg);
    }

    #[test]
    fn validation() {
        assert!(ModelConfig::default().validate().is_ok());
        assert!(ModelConfig::small(0, 2).validate().is_err());
        let cfg = ModelConfig {
            n_rbf: 8,
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ModelConfig {
            local_rule: LocalRule::Cutoff(6.0),
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
