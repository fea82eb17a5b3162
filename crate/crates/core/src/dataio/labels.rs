use crate::error::{Error, Result};

/// Median split of a real-valued label column into {0, 1}.
///
/// Values strictly above the median are positive. When some values sit exactly
/// on the median (common for integer scores), those tied values go to whichever
/// side leaves the positive fraction closer to one half; an exact draw keeps
/// them negative. Both classes are always nonempty.
pub fn binarize_labels(raw: &[f64]) -> Result<Vec<u8>> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("label column has non-finite values".into()));
    }
    let mut sorted = raw.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (Some(&lo), Some(&hi)) = (sorted.first(), sorted.last()) else {
        return Err(Error::Data("empty label column".into()));
    };
    if lo == hi {
        return Err(Error::Data(format!(
            "degenerate labels: all {} values equal {lo}",
            raw.len()
        )));
    }
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };

    let above = raw.iter().filter(|&&v| v > median).count();
    let tied = raw.iter().filter(|&&v| v == median).count();
    let balance = |positives: usize| {
        if positives == 0 || positives == n {
            f64::INFINITY
        } else {
            (positives as f64 / n as f64 - 0.5).abs()
        }
    };
    let ties_positive = tied > 0 && balance(above + tied) < balance(above);
    Ok(raw
        .iter()
        .map(|&v| u8::from(v > median || (ties_positive && v == median)))
        .collect())
}
