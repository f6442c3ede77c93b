//! Fixed six-decimal rendering for reproducible numeric output.

use serde::Serialize;
use serde::Serializer;
use serde_json::value::RawValue;

/// Format a real with exactly six decimals.
pub fn format6(value: f64) -> String {
    // -0.000000 and 0.000000 must render identically.
    let s = format!("{value:.6}");
    if s == "-0.000000" {
        "0.000000".to_owned()
    } else {
        s
    }
}

/// `serialize_with` helper emitting a JSON number with six decimals.
pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    let raw = RawValue::from_string(format6(*value)).map_err(serde::ser::Error::custom)?;
    raw.serialize(serializer)
}

/// Six-decimal JSON number wrapper for use inside collections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fixed6(pub f64);

impl Serialize for Fixed6 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serialize(&self.0, serializer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        #[serde(serialize_with = "super::serialize")]
        score: f64,
        many: Vec<Fixed6>,
    }

    #[test]
    fn renders_six_decimals_in_json() {
        let row = Row {
            score: 1.5,
            many: vec![Fixed6(2.0), Fixed6(1.0 / 3.0)],
        };
        let json = serde_json::to_string(&row).unwrap();
        assert_eq!(json, r#"{"score":1.500000,"many":[2.000000,0.333333]}"#);
    }

    #[test]
    fn negative_zero_is_zero() {
        assert_eq!(format6(-0.0), "0.000000");
    }
}
