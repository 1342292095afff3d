//! The ten-class label space: nine lamp combinations plus "other objects".

use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error};

/// A lit-lamp combination, or [`LightCombination::Other`] for anything that
/// is not a visible stack light (occluders, random scene crops).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LightCombination {
    Green,
    GreenRed,
    GreenWhite,
    GreenYellow,
    GreenYellowRed,
    Yellow,
    YellowRed,
    Red,
    Off,
    Other,
}

/// Individual lamp colours.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lamp {
    Green,
    Yellow,
    Red,
    White,
}

impl LightCombination {
    pub const COUNT: usize = 10;

    /// Canonical class order used by models and confusion matrices.
    pub const ALL: [LightCombination; 10] = [
        LightCombination::Green,
        LightCombination::GreenRed,
        LightCombination::GreenWhite,
        LightCombination::GreenYellow,
        LightCombination::GreenYellowRed,
        LightCombination::Yellow,
        LightCombination::YellowRed,
        LightCombination::Red,
        LightCombination::Off,
        LightCombination::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Green => "Green",
            Self::GreenRed => "GreenRed",
            Self::GreenWhite => "GreenWhite",
            Self::GreenYellow => "GreenYellow",
            Self::GreenYellowRed => "GreenYellowRed",
            Self::Yellow => "Yellow",
            Self::YellowRed => "YellowRed",
            Self::Red => "Red",
            Self::Off => "Off",
            Self::Other => "Other",
        }
    }

    /// Whether `lamp` is lit in this combination. `Other` lights nothing.
    pub fn contains(self, lamp: Lamp) -> bool {
        use LightCombination::*;
        match lamp {
            Lamp::Green => matches!(self, Green | GreenRed | GreenWhite | GreenYellow | GreenYellowRed),
            Lamp::Yellow => matches!(self, GreenYellow | GreenYellowRed | Yellow | YellowRed),
            Lamp::Red => matches!(self, GreenRed | GreenYellowRed | YellowRed | Red),
            Lamp::White => matches!(self, GreenWhite),
        }
    }

    /// Inverse of [`contains`](Self::contains): the combination whose lit set
    /// is exactly `lit`, if that set is one of the nine classes.
    pub fn from_lamps(green: bool, yellow: bool, red: bool, white: bool) -> Option<Self> {
        use LightCombination::*;
        Some(match (green, yellow, red, white) {
            (true, false, false, false) => Green,
            (true, false, true, false) => GreenRed,
            (true, false, false, true) => GreenWhite,
            (true, true, false, false) => GreenYellow,
            (true, true, true, false) => GreenYellowRed,
            (false, true, false, false) => Yellow,
            (false, true, true, false) => YellowRed,
            (false, false, true, false) => Red,
            (false, false, false, false) => Off,
            _ => return None,
        })
    }
}

impl fmt::Display for LightCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LightCombination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid!("unknown light combination {s:?}"))
    }
}
