use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PollutionError;
use crate::corpus::PollutionKind;

const ENTITY_INSTRUCTION: &str = "Write a short text about the main entity mentioned in the caption.";
const STANCE_INSTRUCTION: &str = "Write a piece of evidence to support or refute the given caption.";

/// The instruction flavours used to generate textual pollution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextKind {
    Entity,
    Support,
    Refute,
}

impl TextKind {
    pub const ALL: [TextKind; 3] = [TextKind::Entity, TextKind::Support, TextKind::Refute];

    pub fn as_str(self) -> &'static str {
        match self {
            TextKind::Entity => "entity",
            TextKind::Support => "support",
            TextKind::Refute => "refute",
        }
    }
}

impl From<TextKind> for PollutionKind {
    fn from(kind: TextKind) -> Self {
        match kind {
            TextKind::Entity => PollutionKind::Entity,
            TextKind::Support => PollutionKind::Support,
            TextKind::Refute => PollutionKind::Refute,
        }
    }
}

impl fmt::Display for TextKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TextKind {
    type Err = PollutionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "entity" => Ok(TextKind::Entity),
            "support" => Ok(TextKind::Support),
            "refute" => Ok(TextKind::Refute),
            other => Err(PollutionError::Config(format!("unknown text pollution kind `{other}`"))),
        }
    }
}

/// Builds the zero-shot generation prompt for a caption.
///
/// Support and refute share one instruction that asks for either stance;
/// the requested kind is kept as metadata on the generation record.
pub fn build_prompt(caption: &str, kind: TextKind) -> Result<String, PollutionError> {
    if caption.trim().is_empty() {
        return Err(PollutionError::EmptyCaption);
    }
    let instruction = match kind {
        TextKind::Entity => ENTITY_INSTRUCTION,
        TextKind::Support | TextKind::Refute => STANCE_INSTRUCTION,
    };
    Ok(format!("{instruction} Caption: {caption}"))
}
