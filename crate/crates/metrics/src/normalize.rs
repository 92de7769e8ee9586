use prefloop_core::Score;

/// Value every entry of a constant list maps to.
pub const CONSTANT_LIST_VALUE: f64 = 50.0;

/// Min-max rescale of one user's scores onto [0, 100].
pub fn normalize_user_scores(scores: &[Score]) -> Vec<f64> {
    let raw: Vec<f64> = scores.iter().map(|s| s.value()).collect();
    normalize_values(&raw)
}

pub(crate) fn normalize_values(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![CONSTANT_LIST_VALUE; values.len()];
    }
    values.iter().map(|v| ((v - lo) / (hi - lo) * 100.0).clamp(0.0, 100.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(v: &[f64]) -> Vec<Score> {
        v.iter().map(|x| Score::new(*x).unwrap()).collect()
    }

    #[test]
    fn examples() {
        assert_eq!(normalize_user_scores(&scores(&[20., 60., 100.])), vec![0., 50., 100.]);
        assert_eq!(normalize_user_scores(&scores(&[70., 70., 70.])), vec![50.; 3]);
        assert_eq!(normalize_user_scores(&scores(&[0., 100.])), vec![0., 100.]);
        assert_eq!(normalize_user_scores(&scores(&[42.])), vec![50.]);
        assert!(normalize_user_scores(&[]).is_empty());
    }
}
