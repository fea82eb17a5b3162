/// Denominator floor for the relative error, so parameters with near-zero
/// gradients are judged on absolute error instead.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// `|analytic − numeric| / max(|analytic|, |numeric|, RELATIVE_FLOOR)` per parameter.
    pub relative_errors: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_error: f64,
    pub worst_index: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Central-difference check of `analytic` against `loss` around `params`.
///
/// `loss` must be deterministic (any sampling noise frozen). Each parameter is
/// perturbed by `±h` in turn.
pub fn finite_difference_check(
    params: &[f64],
    analytic: &[f64],
    mut loss: impl FnMut(&[f64]) -> f64,
    h: f64,
    tolerance: f64,
) -> GradCheckReport {
    assert_eq!(params.len(), analytic.len(), "parameter and gradient lengths differ");
    let mut probe = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    let mut relative_errors = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = loss(&probe);
        probe[i] = orig - h;
        let down = loss(&probe);
        probe[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let a = analytic[i];
        let denom = a.abs().max(fd.abs()).max(RELATIVE_FLOOR);
        numeric.push(fd);
        relative_errors.push((a - fd).abs() / denom);
    }
    let (worst_index, max_error) = relative_errors
        .iter()
        .copied()
        .enumerate()
        .fold(
            (0, 0.0),
            |best, (i, e)| if e > best.1 || e.is_nan() { (i, e) } else { best },
        );
    GradCheckReport {
        passed: max_error < tolerance,
        relative_errors,
        numeric,
        max_error,
        worst_index,
        tolerance,
    }
}
