//! Small numeric helpers shared across modules.

/// Neumaier-compensated accumulator. Reductions over datasets use this with a
/// fixed iteration order so results are reproducible to well below 1e-12
/// regardless of dataset size.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub(crate) fn new() -> Self {
        Self::default()
    }

    pub(crate) fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Relative error with a small absolute floor so near-zero pairs compare on an
/// absolute scale instead of blowing up.
#[cfg(test)]
pub(crate) fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(1e-6);
    (a - b).abs() / scale
}

/// Composite Simpson quadrature over [a, b] with an even interval count.
pub(crate) fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    assert!(intervals >= 2 && intervals.is_multiple_of(2), "even interval count required");
    let h = (b - a) / intervals as f64;
    let mut acc = CompensatedSum::new();
    acc.add(f(a));
    acc.add(f(b));
    for i in 1..intervals {
        let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc.add(weight * f(a + i as f64 * h));
    }
    acc.value() * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_handles_cancellation() {
        let mut acc = CompensatedSum::new();
        acc.add(1e16);
        acc.add(1.0);
        acc.add(-1e16);
        assert_eq!(acc.value(), 1.0);
    }

    #[test]
    fn simpson_integrates_polynomials_exactly() {
        // Simpson is exact on cubics.
        let integral = simpson(|x| x * x * x, 0.0, 2.0, 2);
        assert!((integral - 4.0).abs() < 1e-12);
    }

    #[test]
    fn simpson_cosine_squared() {
        let integral = simpson(|x| (std::f64::consts::PI * x).cos().powi(2), 0.0, 1.0, 2000);
        assert!((integral - 0.5).abs() < 1e-12);
    }

    #[test]
    fn relative_error_floors_near_zero() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!(relative_error(1e-9, -1e-9) < 1e-2);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }
}
