use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Target style of a sentence or a selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    Formal,
    Informal,
}

impl Style {
    pub fn other(self) -> Style {
        match self {
            Style::Formal => Style::Informal,
            Style::Informal => Style::Formal,
        }
    }

    pub fn tag(self) -> StyleTag {
        match self {
            Style::Formal => StyleTag::Formal,
            Style::Informal => StyleTag::Informal,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Style::Formal => "formal",
            Style::Informal => "informal",
        }
    }
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Style {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "formal" => Ok(Style::Formal),
            "informal" => Ok(Style::Informal),
            other => Err(Error::Argument(format!("unknown style `{other}`"))),
        }
    }
}

/// Side-constraint token prepended to a source sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StyleTag {
    #[serde(rename = "<F>")]
    Formal,
    #[serde(rename = "<I>")]
    Informal,
}

impl StyleTag {
    pub const ALL: [StyleTag; 2] = [StyleTag::Formal, StyleTag::Informal];

    pub fn token(self) -> &'static str {
        match self {
            StyleTag::Formal => "<F>",
            StyleTag::Informal => "<I>",
        }
    }

    pub fn style(self) -> Style {
        match self {
            StyleTag::Formal => Style::Formal,
            StyleTag::Informal => Style::Informal,
        }
    }

    pub fn from_token(token: &str) -> Option<StyleTag> {
        match token {
            "<F>" => Some(StyleTag::Formal),
            "<I>" => Some(StyleTag::Informal),
            _ => None,
        }
    }
}

impl fmt::Display for StyleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for StyleTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StyleTag::from_token(s).ok_or_else(|| Error::Argument(format!("unknown style tag `{s}`")))
    }
}

/// True for the reserved tag tokens that every text operation passes through untouched.
pub fn is_tag_token(token: &str) -> bool {
    StyleTag::from_token(token).is_some()
}
