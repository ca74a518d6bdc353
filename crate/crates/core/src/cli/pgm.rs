use crate::error::{LabError, Result};

/// How scalar values are mapped onto `0..=255`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization {
    /// Use the matrix's own minimum and maximum.
    Auto,
    /// Fixed range; values outside are clamped.
    Range { min: f64, max: f64 },
}

fn validate(grid: &[Vec<f64>]) -> Result<(usize, usize)> {
    let h = grid.len();
    let w = grid.first().map_or(0, Vec::len);
    if h == 0 || w == 0 {
        return Err(LabError::EmptyGrid);
    }
    for row in grid {
        if row.len() != w {
            return Err(LabError::Dimension {
                expected: w,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(LabError::param("heatmap values must be finite"));
        }
    }
    Ok((w, h))
}

fn payload(grid: &[Vec<f64>], norm: Normalization) -> Vec<u8> {
    let (min, max) = match norm {
        Normalization::Auto => grid
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(*v), hi.max(*v))
            }),
        Normalization::Range { min, max } => (min, max),
    };
    let span = max - min;
    grid.iter()
        .flatten()
        .map(|v| {
            if span > 0.0 {
                (255.0 * ((v - min) / span)).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect()
}

/// Binary grayscale PGM: exactly `"P5\n<w> <h>\n255\n"` followed by the
/// row-major payload, one byte per entry, `round(255·(x−min)/(max−min))`.
/// A constant matrix maps to all zeros.
pub fn emit_pgm(grid: &[Vec<f64>], norm: Normalization) -> Result<Vec<u8>> {
    let (w, h) = validate(grid)?;
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend(payload(grid, norm));
    Ok(bytes)
}

/// [`emit_pgm`] with a `# comment` line after the magic number (each line
/// of `comment` becomes its own comment line).
pub fn emit_pgm_annotated(
    grid: &[Vec<f64>],
    norm: Normalization,
    comment: &str,
) -> Result<Vec<u8>> {
    let (w, h) = validate(grid)?;
    let mut header = String::from("P5\n");
    for line in comment.lines() {
        header.push_str("# ");
        header.push_str(line);
        header.push('\n');
    }
    header.push_str(&format!("{w} {h}\n255\n"));
    let mut bytes = header.into_bytes();
    bytes.extend(payload(grid, norm));
    Ok(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_matrix_is_black() {
        assert_eq!(
            emit_pgm(&[vec![5.0]], Normalization::Auto).unwrap(),
            b"P5\n1 1\n255\n\x00"
        );
    }

    #[test]
    fn endpoints() {
        let bytes = emit_pgm(&[vec![0.0, 1.0]], Normalization::Auto).unwrap();
        assert_eq!(bytes, b"P5\n2 1\n255\n\x00\xff");
    }

    #[test]
    fn fixed_range_clamps_and_rounds() {
        let bytes = emit_pgm(
            &[vec![-1.0, 0.5, 2.0]],
            Normalization::Range { min: 0.0, max: 1.0 },
        )
        .unwrap();
        assert_eq!(&bytes[bytes.len() - 3..], &[0, 128, 255]);
    }

    #[test]
    fn payload_length_is_w_times_h() {
        let grid = vec![vec![0.0, 1.0, 2.0]; 4];
        let bytes = emit_pgm(&grid, Normalization::Auto).unwrap();
        assert_eq!(bytes.len(), b"P5\n3 4\n255\n".len() + 12);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            emit_pgm(&[], Normalization::Auto),
            Err(LabError::EmptyGrid)
        ));
        assert!(emit_pgm(&[vec![1.0], vec![1.0, 2.0]], Normalization::Auto).is_err());
        assert!(emit_pgm(&[vec![f64::NAN]], Normalization::Auto).is_err());
    }

    #[test]
    fn annotated_header() {
        let bytes = emit_pgm_annotated(&[vec![0.0, 1.0]], Normalization::Auto, "a\nb").unwrap();
        assert_eq!(bytes, b"P5\n# a\n# b\n2 1\n255\n\x00\xff");
    }
}
