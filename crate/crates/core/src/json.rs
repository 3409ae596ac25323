//! Pretty JSON with every float written as `{:.16e}` (17 significant
//! digits), so reports are byte-stable and round-trip exactly.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

struct ExactFloats<'a>(PrettyFormatter<'a>);

macro_rules! delegate {
    ($($name:ident),* $(,)?) => {
        $(
            fn $name<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
                self.0.$name(w)
            }
        )*
    };
}

impl Formatter for ExactFloats<'_> {
    delegate!(
        begin_array,
        end_array,
        begin_object,
        end_object,
        end_array_value,
        end_object_value,
        begin_object_value
    );

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(value))
    }
}

/// Serializes `value` as indented JSON. Non-finite floats become `null`.
pub fn to_canonical_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut buf,
        ExactFloats(PrettyFormatter::with_indent(b"  ")),
    );
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_round_trip() {
        let x = 0.1 + 0.2;
        let text = to_canonical_json(&json!({"a": x, "b": [1.0, -2.5e-300], "c": 3})).unwrap();
        assert!(text.contains("3.0000000000000004e-1"), "{text}");
        assert!(text.contains("\"c\": 3"), "{text}");
        let back: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["a"].as_f64().unwrap(), x);
        assert_eq!(back["b"][1].as_f64().unwrap(), -2.5e-300);
    }

    #[test]
    fn nan_is_null() {
        let text = to_canonical_json(&vec![f64::NAN, f64::INFINITY]).unwrap();
        let back: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(back[0].is_null() && back[1].is_null());
    }
}
