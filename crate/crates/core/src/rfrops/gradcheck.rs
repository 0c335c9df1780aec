//! Central-difference checks of forward-mode derivatives.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scalar::{Dual, Scalar};
use crate::error::{Error, Result};

/// A kernel viewed as a map `R^n → R^m` over a flat parameter vector.
pub trait DiffOp {
    fn name(&self) -> String;
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub op: String,
    pub eps: f64,
    pub directions: usize,
    /// `max over directions of ‖J·v − Δ/2ε‖∞ / max(‖J·v‖∞, ‖Δ/2ε‖∞)`; infinite on failure.
    pub max_rel_err: f64,
    pub finite: bool,
}

pub const EPS_RANGE: (f64, f64) = (1e-7, 1e-3);

/// Compares the dual-number Jacobian-vector product with central differences along
/// `directions` random unit-∞-norm directions.
pub fn finite_diff_check<O: DiffOp>(op: &O, x: &[f64], eps: f64, directions: usize, rng: &mut impl Rng) -> Result<GradCheck> {
    if !(EPS_RANGE.0..=EPS_RANGE.1).contains(&eps) {
        return Err(Error::invalid(format!("eps {eps} outside [{}, {}]", EPS_RANGE.0, EPS_RANGE.1)));
    }
    if directions == 0 {
        return Err(Error::invalid("at least one direction is required"));
    }
    let mut report = GradCheck {
        op: op.name(),
        eps,
        directions,
        max_rel_err: 0.0,
        finite: true,
    };
    for _ in 0..directions {
        let v: Vec<f64> = x.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dual: Vec<Dual> = x.iter().zip(&v).map(|(a, d)| Dual::new(*a, *d)).collect();
        let plus: Vec<f64> = x.iter().zip(&v).map(|(a, d)| a + eps * d).collect();
        let minus: Vec<f64> = x.iter().zip(&v).map(|(a, d)| a - eps * d).collect();
        let res = (|| -> Result<_> { Ok((op.eval(&dual)?, op.eval(&plus)?, op.eval(&minus)?)) })();
        let (jv, fp, fm) = match res {
            Ok(r) => r,
            Err(Error::NonFinite(_)) => {
                report.finite = false;
                report.max_rel_err = f64::INFINITY;
                return Ok(report);
            }
            Err(e) => return Err(e),
        };
        let mut diff = 0.0f64;
        let mut scale = 0.0f64;
        for ((j, p), m) in jv.iter().zip(&fp).zip(&fm) {
            let num = (p - m) / (2.0 * eps);
            if !(j.d.is_finite() && num.is_finite()) {
                report.finite = false;
                report.max_rel_err = f64::INFINITY;
                return Ok(report);
            }
            diff = diff.max((j.d - num).abs());
            scale = scale.max(j.d.abs()).max(num.abs());
        }
        let rel = if scale > 0.0 { diff / scale } else { 0.0 };
        report.max_rel_err = report.max_rel_err.max(rel);
    }
    Ok(report)
}

/// Sequential reader of a flat parameter vector.
pub struct Unpack<'a, S> {
    x: &'a [S],
    pos: usize,
}

impl<'a, S: Scalar> Unpack<'a, S> {
    pub fn new(x: &'a [S]) -> Self {
        Self { x, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<Vec<S>> {
        if self.pos + n > self.x.len() {
            return Err(Error::invalid(format!("parameter vector too short: need {} more", self.pos + n - self.x.len())));
        }
        let v = self.x[self.pos..self.pos + n].to_vec();
        self.pos += n;
        Ok(v)
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.x.len() {
            return Err(Error::invalid(format!("{} unused parameters", self.x.len() - self.pos)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Poly;
    impl DiffOp for Poly {
        fn name(&self) -> String {
            "poly".into()
        }
        fn eval<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
            Ok(vec![x[0] * x[0] * x[1], x[1].sigmoid()])
        }
    }

    struct Wrong;
    impl DiffOp for Wrong {
        fn name(&self) -> String {
            "wrong".into()
        }
        fn eval<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
            // derivative dropped by rebuilding from the primal
            Ok(vec![S::cst(x[0].re() * x[0].re())])
        }
    }

    #[test]
    fn detects_good_and_bad_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = finite_diff_check(&Poly, &[0.7, -1.3], 1e-5, 4, &mut rng).unwrap();
        assert!(g.max_rel_err < 1e-8, "{g:?}");
        let b = finite_diff_check(&Wrong, &[0.7], 1e-5, 2, &mut rng).unwrap();
        assert!(b.max_rel_err > 0.5);
        assert!(finite_diff_check(&Poly, &[0.0, 0.0], 1e-2, 1, &mut rng).is_err());
    }
}
