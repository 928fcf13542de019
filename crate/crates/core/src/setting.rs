use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A parameter that is either estimated from data or pinned to a value.
///
/// Serialized as the string `"auto"` or as a bare number, which is also the
/// accepted command-line syntax.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum AutoOr {
    #[default]
    Auto,
    Fixed(f64),
}

impl AutoOr {
    pub fn fixed(self) -> Option<f64> {
        match self {
            AutoOr::Auto => None,
            AutoOr::Fixed(v) => Some(v),
        }
    }
}

impl fmt::Display for AutoOr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AutoOr::Auto => f.write_str("auto"),
            AutoOr::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for AutoOr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(AutoOr::Auto);
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(AutoOr::Fixed)
            .ok_or_else(|| format!("expected `auto` or a finite number, got `{s}`"))
    }
}

impl Serialize for AutoOr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            AutoOr::Auto => serializer.serialize_str("auto"),
            AutoOr::Fixed(v) => serializer.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for AutoOr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct AutoOrVisitor;

        impl Visitor<'_> for AutoOrVisitor {
            type Value = AutoOr;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("\"auto\" or a number")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<AutoOr, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<AutoOr, E> {
                Ok(AutoOr::Fixed(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<AutoOr, E> {
                Ok(AutoOr::Fixed(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<AutoOr, E> {
                Ok(AutoOr::Fixed(v as f64))
            }
        }

        deserializer.deserialize_any(AutoOrVisitor)
    }
}
