use serde::{Deserialize, Serialize};

use super::PotentialField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    /// `V <= level` on the interval.
    Valley,
    /// `V >= level` on the interval.
    Hill,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerrainFeature {
    pub a: f64,
    pub b: f64,
    pub level: f64,
    pub kind: FeatureKind,
}

impl TerrainFeature {
    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.a + self.b)
    }
}

/// Maximal runs of grid nodes with `V <= h` (valleys) or `V >= h` (hills)
/// whose length is at least `min_length`, sorted by left end. Runs split by a
/// single violating node stay separate.
pub fn find_features(field: &PotentialField, h: f64, min_length: f64) -> Vec<TerrainFeature> {
    let mut out = runs(field, h, min_length, FeatureKind::Valley);
    out.extend(runs(field, h, min_length, FeatureKind::Hill));
    out.sort_by(|x, y| x.a.total_cmp(&y.a));
    out
}

fn runs(field: &PotentialField, h: f64, min_length: f64, kind: FeatureKind) -> Vec<TerrainFeature> {
    let ok = |v: f64| match kind {
        FeatureKind::Valley => v <= h,
        FeatureKind::Hill => v >= h,
    };
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let n = field.len();
    for i in 0..=n {
        let inside = i < n && ok(field.values[i]);
        match (inside, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                let (a, b) = (field.node(s), field.node(i - 1));
                if b - a >= min_length - 1e-9 * field.grid_step {
                    out.push(TerrainFeature {
                        a,
                        b,
                        level: h,
                        kind,
                    });
                }
                start = None;
            }
            _ => {}
        }
    }
    out
}

/// Presence of valleys and hills at one `(h, y)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureCheck {
    pub h: f64,
    pub y: f64,
    pub valley: bool,
    pub hill: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub kind: String,
    pub min_value: f64,
    pub max_value: f64,
    pub derivative_sup: f64,
    /// Samples lie in [0, 1] and reach both ends to within one percent.
    pub range_ok: bool,
    /// Every requested valley and hill was found and the field is not tagged
    /// as constant.
    pub features_ok: bool,
    pub checks: Vec<FeatureCheck>,
    pub caveat: String,
}

/// Report how close the realization comes to the standing assumptions on
/// the potential inside its finite window.
pub fn audit_assumptions(
    field: &PotentialField,
    h_list: &[f64],
    y_list: &[f64],
) -> AssumptionReport {
    let min_value = field.min_value();
    let max_value = field.max_value();
    let range_ok = min_value >= 0.0 && max_value <= 1.0 && min_value <= 0.01 && max_value >= 0.99;
    let mut checks = Vec::new();
    for &h in h_list {
        let feats = find_features(field, h, field.grid_step);
        for &y in y_list {
            let longest = |k: FeatureKind| {
                feats
                    .iter()
                    .filter(|f| f.kind == k)
                    .any(|f| f.length() >= y - 1e-9 * field.grid_step)
            };
            checks.push(FeatureCheck {
                h,
                y,
                valley: longest(FeatureKind::Valley),
                hill: longest(FeatureKind::Hill),
            });
        }
    }
    let features_ok =
        !field.generator.lacks_valleys_and_hills() && checks.iter().all(|c| c.valley && c.hill);
    let w = field.window();
    AssumptionReport {
        kind: field.kind().to_string(),
        min_value,
        max_value,
        derivative_sup: field.derivative_sup(),
        range_ok,
        features_ok,
        checks,
        caveat: format!(
            "finite window [{}, {}] sampled at step {}: features are witnessed, not certified for the whole line",
            w.lo, w.hi, field.grid_step
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{generate_constant, generate_periodic, Window};

    #[test]
    fn constant_zero_is_one_valley() {
        let f = generate_constant(0.0, Window::new(-5.0, 5.0), 0.1).unwrap();
        let feats = find_features(&f, 0.5, 1.0);
        assert_eq!(feats.len(), 1);
        assert_eq!(feats[0].kind, FeatureKind::Valley);
        assert!((feats[0].length() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn single_violation_splits_runs() {
        let w = Window::new(0.0, 1.0);
        let mut v = vec![0.0; 11];
        v[5] = 1.0;
        let f = PotentialField::from_samples(w, 0.1, v, vec![0.0; 11]).unwrap();
        let valleys: Vec<_> = find_features(&f, 0.5, 0.1)
            .into_iter()
            .filter(|x| x.kind == FeatureKind::Valley)
            .collect();
        assert_eq!(valleys.len(), 2);
    }

    #[test]
    fn constant_field_fails_audit() {
        let f = generate_constant(0.5, Window::new(-5.0, 5.0), 0.1).unwrap();
        let r = audit_assumptions(&f, &[0.25], &[1.0]);
        assert_eq!(r.min_value, 0.5);
        assert_eq!(r.max_value, 0.5);
        assert!(!r.range_ok);
        assert!(!r.features_ok);
    }

    #[test]
    fn periodic_audit_passes_for_short_features() {
        let f = generate_periodic(2.0, Window::new(-10.0, 10.0), 0.01).unwrap();
        let r = audit_assumptions(&f, &[0.25, 0.75], &[0.25, 0.5]);
        assert!(r.range_ok);
        assert!(r.features_ok, "{:?}", r.checks);
    }
}
