//! Exactly rounded floating-point summation (Shewchuk's expansion algorithm,
//! the same scheme as Python's `math.fsum`).
//!
//! The result is the correctly rounded sum of the inputs and therefore does
//! not depend on the order of the terms. Likelihoods, information matrices,
//! and welfare averages are accumulated through this so that permuting rows
//! or posterior draws leaves results bit-identical.

/// Order-independent exact sum accumulator.
#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        ExactSum { partials: Vec::new() }
    }

    pub fn add(&mut self, x: f64) {
        let mut x = x;
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    pub fn value(&self) -> f64 {
        // Partials are non-overlapping and ordered by magnitude; adding from
        // the smallest up yields the correctly rounded total.
        self.partials.iter().sum()
    }
}

/// Exactly rounded sum of an iterator of terms.
pub fn fsum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = ExactSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}
