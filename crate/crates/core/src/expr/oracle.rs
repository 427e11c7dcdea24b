//! Box-overapproximation oracles: given a box of inputs, return a box that
//! contains the image of the concrete function on it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::interval::{add_up, mul_up, sub_down, sub_up, Interval};
use super::{Expr, ExprError, Program, Value};

/// Ordered sample pairs used to validate a monotonicity declaration.
pub const MONOTONE_SAMPLE_PAIRS: usize = 2000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("function is undefined somewhere on the box")]
    UndefinedOnBox,
    #[error("output {output} is not monotone nondecreasing: f({a:?}) = {fa} > f({b:?}) = {fb}")]
    NotMonotone {
        output: usize,
        a: Vec<f64>,
        b: Vec<f64>,
        fa: f64,
        fb: f64,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Lipschitz constants must be finite and nonnegative")]
    BadLipschitz,
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    /// `l[j][k]` bounds the sensitivity of output `j` to input `k`.
    Lipschitz(Vec<Vec<f64>>),
    Monotone,
    /// Monotone with a fixed direction per input: `signs[j][k]` is `1` when
    /// output `j` is nondecreasing in input `k`, `-1` when nonincreasing.
    Signed(Vec<Vec<i8>>),
    Interval,
}

#[derive(Debug, Clone)]
pub struct Oracle {
    inputs: Vec<String>,
    outputs: Vec<Expr>,
    programs: Vec<Program>,
    kind: OracleKind,
}

impl Oracle {
    fn build(inputs: &[&str], outputs: Vec<Expr>, kind: OracleKind) -> Result<Self, OracleError> {
        let programs = outputs
            .iter()
            .map(|e| Program::compile(e, inputs))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Oracle {
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            outputs,
            programs,
            kind,
        })
    }

    pub fn interval(inputs: &[&str], outputs: Vec<Expr>) -> Result<Self, OracleError> {
        Self::build(inputs, outputs, OracleKind::Interval)
    }

    pub fn lipschitz(inputs: &[&str], outputs: Vec<Expr>, l: Vec<Vec<f64>>) -> Result<Self, OracleError> {
        if l.len() != outputs.len() || l.iter().any(|row| row.len() != inputs.len()) {
            return Err(OracleError::Dimension(format!(
                "Lipschitz matrix must be {}×{}",
                outputs.len(),
                inputs.len()
            )));
        }
        if l.iter().flatten().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(OracleError::BadLipschitz);
        }
        Self::build(inputs, outputs, OracleKind::Lipschitz(l))
    }

    /// Monotone oracle, validated on [`MONOTONE_SAMPLE_PAIRS`] random ordered
    /// pairs drawn from `domain`.
    pub fn monotone(inputs: &[&str], outputs: Vec<Expr>, domain: &[Interval], seed: u64) -> Result<Self, OracleError> {
        let o = Self::build(inputs, outputs, OracleKind::Monotone)?;
        o.validate_monotone(domain, seed)?;
        Ok(o)
    }

    /// Monotone in every input, each with its own direction. Directions are
    /// inferred from single-coordinate sample moves, then validated like
    /// [`Oracle::monotone`] on pairs ordered accordingly.
    pub fn signed(inputs: &[&str], outputs: Vec<Expr>, domain: &[Interval], seed: u64) -> Result<Self, OracleError> {
        let mut o = Self::build(inputs, outputs, OracleKind::Monotone)?;
        if domain.len() != inputs.len() {
            return Err(OracleError::Dimension(format!(
                "expected {} domain intervals, got {}",
                inputs.len(),
                domain.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51);
        let mut signs = vec![vec![0i8; inputs.len()]; o.programs.len()];
        let mut x = vec![0.0; domain.len()];
        for _ in 0..MONOTONE_SAMPLE_PAIRS {
            for (xi, d) in x.iter_mut().zip(domain) {
                *xi = if d.lo < d.hi { rng.gen_range(d.lo..=d.hi) } else { d.lo };
            }
            let k = rng.gen_range(0..domain.len());
            let mut y = x.clone();
            if domain[k].lo < domain[k].hi {
                y[k] = rng.gen_range(domain[k].lo..=domain[k].hi);
            }
            for (j, p) in o.programs.iter().enumerate() {
                if let (Value::Real(fx), Value::Real(fy)) = (p.eval(&x), p.eval(&y)) {
                    let tol = 1e-12 * (1.0 + fx.abs().max(fy.abs()));
                    if (fy - fx).abs() <= tol || x[k] == y[k] {
                        continue;
                    }
                    let s = if (fy > fx) == (y[k] > x[k]) { 1 } else { -1 };
                    if signs[j][k] == -s {
                        let (a, b) = if s == 1 { (x.clone(), y.clone()) } else { (y.clone(), x.clone()) };
                        return Err(OracleError::NotMonotone { output: j, a, b, fa: fx.max(fy), fb: fx.min(fy) });
                    }
                    signs[j][k] = s;
                }
            }
        }
        for row in &mut signs {
            for s in row.iter_mut().filter(|s| **s == 0) {
                *s = 1;
            }
        }
        o.kind = OracleKind::Signed(signs);
        o.validate_monotone(domain, seed)?;
        Ok(o)
    }

    /// Monotone when validation succeeds, then monotone with per-input
    /// directions, otherwise the interval extension (with a warning).
    pub fn monotone_or_interval(
        inputs: &[&str],
        outputs: Vec<Expr>,
        domain: &[Interval],
        seed: u64,
    ) -> Result<Self, OracleError> {
        let mut o = Self::build(inputs, outputs.clone(), OracleKind::Monotone)?;
        if let Err(e) = o.validate_monotone(domain, seed) {
            match Self::signed(inputs, outputs, domain, seed) {
                Ok(s) => {
                    log::info!("monotone oracle rejected ({e}); using per-input directions");
                    return Ok(s);
                }
                Err(e) => {
                    log::warn!("monotone oracle rejected ({e}); falling back to interval extension");
                    o.kind = OracleKind::Interval;
                }
            }
        }
        Ok(o)
    }

    fn validate_monotone(&self, domain: &[Interval], seed: u64) -> Result<(), OracleError> {
        if domain.len() != self.inputs.len() {
            return Err(OracleError::Dimension(format!(
                "expected {} domain intervals, got {}",
                self.inputs.len(),
                domain.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = vec![0.0; domain.len()];
        let mut b = vec![0.0; domain.len()];
        for _ in 0..MONOTONE_SAMPLE_PAIRS {
            for (k, d) in domain.iter().enumerate() {
                let (x, y) = if d.lo < d.hi {
                    (rng.gen_range(d.lo..=d.hi), rng.gen_range(d.lo..=d.hi))
                } else {
                    (d.lo, d.lo)
                };
                a[k] = x.min(y);
                b[k] = x.max(y);
            }
            for (j, p) in self.programs.iter().enumerate() {
                let (a, b) = self.oriented(j, &a, &b);
                if let (Value::Real(fa), Value::Real(fb)) = (p.eval(&a), p.eval(&b)) {
                    let tol = 1e-12 * (1.0 + fa.abs().max(fb.abs()));
                    if fa > fb + tol {
                        return Err(OracleError::NotMonotone {
                            output: j,
                            a: a.clone(),
                            b: b.clone(),
                            fa,
                            fb,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// `(a, b)` with the coordinates swapped where output `j` decreases.
    fn oriented(&self, j: usize, a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
        match &self.kind {
            OracleKind::Signed(signs) => signs[j]
                .iter()
                .zip(a.iter().zip(b))
                .map(|(&s, (&x, &y))| if s < 0 { (y, x) } else { (x, y) })
                .unzip(),
            _ => (a.to_vec(), b.to_vec()),
        }
    }

    pub fn kind(&self) -> &OracleKind {
        &self.kind
    }

    pub fn inputs(&self) -> &[String] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Expr] {
        &self.outputs
    }

    /// Point evaluation of every output.
    pub fn eval(&self, x: &[f64]) -> Vec<Value> {
        self.programs.iter().map(|p| p.eval(x)).collect()
    }

    fn check_dims(&self, bx: &[Interval]) -> Result<(), OracleError> {
        if bx.len() != self.inputs.len() {
            return Err(OracleError::Dimension(format!(
                "expected a {}-dimensional box, got {}",
                self.inputs.len(),
                bx.len()
            )));
        }
        Ok(())
    }

    /// Dispatches on the oracle kind.
    pub fn image(&self, bx: &[Interval]) -> Result<Vec<Interval>, OracleError> {
        match &self.kind {
            OracleKind::Lipschitz(_) => self.lipschitz_box(bx),
            OracleKind::Monotone | OracleKind::Signed(_) => self.monotone_box(bx),
            OracleKind::Interval => self.interval_box(bx),
        }
    }

    /// Natural interval extension of each output.
    pub fn interval_box(&self, bx: &[Interval]) -> Result<Vec<Interval>, OracleError> {
        self.check_dims(bx)?;
        self.programs
            .iter()
            .map(|p| p.eval_interval(bx).ok_or(OracleError::UndefinedOnBox))
            .collect()
    }

    /// `[F(a), F(b)]` per output, each end enclosed with outward rounding.
    ///
    /// Partiality anywhere on the box (detected by the interval extension) is
    /// reported as [`OracleError::UndefinedOnBox`].
    pub fn monotone_box(&self, bx: &[Interval]) -> Result<Vec<Interval>, OracleError> {
        self.check_dims(bx)?;
        let los: Vec<f64> = bx.iter().map(|i| i.lo).collect();
        let his: Vec<f64> = bx.iter().map(|i| i.hi).collect();
        self.programs
            .iter()
            .enumerate()
            .map(|(j, p)| {
                p.eval_interval(bx).ok_or(OracleError::UndefinedOnBox)?;
                let (lo, hi) = self.oriented(j, &los, &his);
                let lo: Vec<Interval> = lo.into_iter().map(Interval::point).collect();
                let hi: Vec<Interval> = hi.into_iter().map(Interval::point).collect();
                let a = p.eval_interval(&lo).ok_or(OracleError::UndefinedOnBox)?;
                let b = p.eval_interval(&hi).ok_or(OracleError::UndefinedOnBox)?;
                Ok(Interval::new(a.lo.min(b.hi), b.hi))
            })
            .collect()
    }

    /// `[F(c) − L·r, F(c) + L·r]` per output with `c` the box center and `r`
    /// its half-width. Like the other oracles, reports the whole box as
    /// undefined when the interval extension detects possible partiality.
    pub fn lipschitz_box(&self, bx: &[Interval]) -> Result<Vec<Interval>, OracleError> {
        self.check_dims(bx)?;
        let l = match &self.kind {
            OracleKind::Lipschitz(l) => l,
            _ => return Err(OracleError::Dimension("oracle has no Lipschitz matrix".into())),
        };
        // Any center works as long as the radius covers both sides.
        let mut center = Vec::with_capacity(bx.len());
        let mut radius = Vec::with_capacity(bx.len());
        for i in bx {
            let c = i.lo + (i.hi - i.lo) / 2.0;
            center.push(Interval::point(c));
            radius.push(sub_up(i.hi, c).max(sub_up(c, i.lo)));
        }
        self.programs
            .iter()
            .zip(l.iter())
            .map(|(p, row)| {
                p.eval_interval(bx).ok_or(OracleError::UndefinedOnBox)?;
                let fc = p.eval_interval(&center).ok_or(OracleError::UndefinedOnBox)?;
                let mut spread = 0.0;
                for (&lk, &rk) in row.iter().zip(radius.iter()) {
                    spread = add_up(spread, mul_up(lk, rk));
                }
                Ok(Interval::new(sub_down(fc.lo, spread), add_up(fc.hi, spread)))
            })
            .collect()
    }
}
