//! Closed label sets annotated on every clip.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! label_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub const fn count() -> usize {
                Self::ALL.len()
            }

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(i: usize) -> Option<Self> {
                Self::ALL.get(i).copied()
            }

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

label_enum! {
    /// Emotion taxonomy, ordered from most negative to most positive prior.
    Emotion {
        Fearful => "fearful",
        SeparationAnxiety => "separation_anxiety",
        Anxious => "anxious",
        Territorial => "territorial",
        Alert => "alert",
        Playful => "playful",
        Content => "content",
        Excited => "excited",
    }
}

label_enum! {
    BodySize {
        Large => "large",
        Medium => "medium",
        Small => "small",
    }
}

label_enum! {
    Gender {
        Male => "male",
        Female => "female",
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Emotion::ALL.iter().copied().find(|e| e.as_str() == s).ok_or_else(|| Error::UnknownEmotion(s.to_owned()))
    }
}

impl FromStr for BodySize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BodySize::ALL
            .iter()
            .copied()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown size `{s}`")))
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Gender::ALL
            .iter()
            .copied()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown gender `{s}`")))
    }
}
