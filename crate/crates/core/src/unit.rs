use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which kind of residual contributor a unit is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Head,
    Mlp,
    Embed,
    Output,
}

/// Identifies one residual unit: an attention head, an MLP block, the token
/// embedding, or the assembled output.
///
/// `index` is the head index within a layer; it is 0 for the other kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UnitId {
    pub layer: u32,
    pub kind: UnitKind,
    pub index: u32,
}

impl UnitId {
    pub fn head(layer: u32, index: u32) -> Self {
        UnitId {
            layer,
            kind: UnitKind::Head,
            index,
        }
    }

    pub fn mlp(layer: u32) -> Self {
        UnitId {
            layer,
            kind: UnitKind::Mlp,
            index: 0,
        }
    }

    pub fn embed() -> Self {
        UnitId {
            layer: 0,
            kind: UnitKind::Embed,
            index: 0,
        }
    }

    pub fn output() -> Self {
        UnitId {
            layer: 0,
            kind: UnitKind::Output,
            index: 0,
        }
    }

    pub fn is_head(&self) -> bool {
        self.kind == UnitKind::Head
    }

    /// Structural invariants that hold independently of any manifest:
    /// non-head units carry index 0, and embed lives at layer 0.
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            UnitKind::Head => Ok(()),
            UnitKind::Mlp => {
                if self.index != 0 {
                    Err(Error::InvalidUnitId(format!("mlp with index {}", self.index)))
                } else {
                    Ok(())
                }
            }
            UnitKind::Embed | UnitKind::Output => {
                if self.layer != 0 || self.index != 0 {
                    Err(Error::InvalidUnitId(format!(
                        "{:?} must have layer 0 and index 0",
                        self.kind
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Stable, filesystem-safe name used for tensor files.
    pub fn file_stem(&self) -> String {
        match self.kind {
            UnitKind::Head => format!("l{:02}_h{:02}", self.layer, self.index),
            UnitKind::Mlp => format!("l{:02}_mlp", self.layer),
            UnitKind::Embed => "embed".to_string(),
            UnitKind::Output => "output".to_string(),
        }
    }

    /// Parses the compact forms used on the command line: `L2H3`, `L2M`,
    /// `embed`, `output` (case-insensitive).
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim();
        let lower = t.to_ascii_lowercase();
        match lower.as_str() {
            "embed" => return Ok(UnitId::embed()),
            "output" => return Ok(UnitId::output()),
            _ => {}
        }
        let bad = || Error::InvalidUnitId(s.to_string());
        let rest = lower.strip_prefix('l').ok_or_else(bad)?;
        if let Some((layer, head)) = rest.split_once('h') {
            let layer: u32 = layer.parse().map_err(|_| bad())?;
            let index: u32 = head.parse().map_err(|_| bad())?;
            Ok(UnitId::head(layer, index))
        } else if let Some(layer) = rest.strip_suffix('m') {
            let layer: u32 = layer.parse().map_err(|_| bad())?;
            Ok(UnitId::mlp(layer))
        } else {
            Err(bad())
        }
    }
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            UnitKind::Head => write!(f, "L{}.H{}", self.layer, self.index),
            UnitKind::Mlp => write!(f, "L{}.MLP", self.layer),
            UnitKind::Embed => write!(f, "EMBED"),
            UnitKind::Output => write!(f, "OUTPUT"),
        }
    }
}
