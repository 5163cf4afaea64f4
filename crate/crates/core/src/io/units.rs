use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::prosody::ProsodyUnit;

/// Parses one unit per line:
/// `label_id position duration_ms log_pitch_initial log_pitch_final log_energy`.
/// Blank lines and text after `#` are ignored.
pub fn parse_units(text: &str) -> Result<Vec<ProsodyUnit>> {
    let mut units = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let field = |name: &str| format!("line {} {name}", i + 1);
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 6 {
            return Err(Error::format(
                field("fields"),
                format!("expected 6, found {}", parts.len()),
            ));
        }
        let num = |idx: usize, name: &str| -> Result<f64> {
            parts[idx].parse::<f64>().map_err(|_| {
                Error::format(field(name), format!("'{}' is not a number", parts[idx]))
            })
        };
        units.push(ProsodyUnit {
            label_id: parts[0].parse().map_err(|_| {
                Error::format(
                    field("label_id"),
                    format!("'{}' is not an integer", parts[0]),
                )
            })?,
            position: parts[1]
                .parse()
                .map_err(|e: Error| Error::format(field("position"), e.to_string()))?,
            duration_ms: num(2, "duration_ms")?,
            log_pitch_initial: num(3, "log_pitch_initial")?,
            log_pitch_final: num(4, "log_pitch_final")?,
            log_energy: num(5, "log_energy")?,
        });
    }
    Ok(units)
}

pub fn format_units(units: &[ProsodyUnit]) -> String {
    let mut out = String::from(
        "# label_id position duration_ms log_pitch_initial log_pitch_final log_energy\n",
    );
    for u in units {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            u.label_id,
            u.position,
            u.duration_ms,
            u.log_pitch_initial,
            u.log_pitch_final,
            u.log_energy
        );
    }
    out
}

pub fn read_units(path: &Path) -> Result<Vec<ProsodyUnit>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_units(&text)
}

pub fn write_units(units: &[ProsodyUnit], path: &Path) -> Result<()> {
    std::fs::write(path, format_units(units)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prosody::Position;

    #[test]
    fn parse_and_round_trip() {
        let text =
            "# comment\n3 heading 30 7.1 7.2 -1.5\n\n4 trailing 12.5 0 0 -3 # trailing note\n";
        let u = parse_units(text).unwrap();
        assert_eq!(u.len(), 2);
        assert_eq!(u[0].position, Position::Heading);
        assert_eq!(u[1].duration_ms, 12.5);
        let again = parse_units(&format_units(&u)).unwrap();
        assert_eq!(again, u);
        assert_eq!(format_units(&again), format_units(&u));
    }

    #[test]
    fn errors_name_line_and_field() {
        let e = parse_units("1 middle 10 0 0\n").unwrap_err().to_string();
        assert!(e.contains("line 1"), "{e}");
        let e = parse_units("1 middle 10 0 0 0\n1 sideways 10 0 0 0")
            .unwrap_err()
            .to_string();
        assert!(e.contains("line 2 position"), "{e}");
        let e = parse_units("x middle 10 0 0 0").unwrap_err().to_string();
        assert!(e.contains("label_id"), "{e}");
    }
}
