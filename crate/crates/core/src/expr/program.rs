//! Expressions compiled to a small stack machine with slot-indexed inputs.

use super::interval::Interval;
use super::{Expr, ExprError, Value};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Load(usize),
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Sqrt,
    Exp,
    Sin,
    Cos,
    Min,
    Max,
    Glog(f64, f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    code: Vec<Op>,
    depth: usize,
    arity: usize,
}

/// Rigorous enclosure of `glog(a, b, rate, x)` at a single point.
fn glog_point_enclosure(a: f64, b: f64, rate: f64, x: f64) -> Interval {
    let (ia, ib) = (Interval::point(a), Interval::point(b));
    let mid = ia.add(&ib).div(&Interval::point(2.0)).expect("nonzero");
    let t = Interval::point(rate).mul(&Interval::point(x).sub(&mid));
    let den = Interval::point(1.0).add(&t.neg().exp());
    let q = ib.sub(&ia).div(&den).expect("denominator ≥ 1");
    ia.add(&q)
}

impl Program {
    /// Compiles `e`; variable `inputs[k]` is read from slot `k`.
    pub fn compile(e: &Expr, inputs: &[impl AsRef<str>]) -> Result<Program, ExprError> {
        let mut code = Vec::new();
        emit(e, inputs, &mut code)?;
        let (mut d, mut depth) = (0usize, 0usize);
        for op in &code {
            match op {
                Op::Const(_) | Op::Load(_) => d += 1,
                Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Min | Op::Max => d -= 1,
                _ => {}
            }
            depth = depth.max(d);
        }
        Ok(Program {
            code,
            depth,
            arity: inputs.len(),
        })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn eval(&self, x: &[f64]) -> Value {
        debug_assert_eq!(x.len(), self.arity);
        let mut st: Vec<f64> = Vec::with_capacity(self.depth);
        for op in &self.code {
            let v = match *op {
                Op::Const(c) => c,
                Op::Load(k) => x[k],
                Op::Neg => -st.pop().unwrap(),
                Op::Sqrt => {
                    let a = st.pop().unwrap();
                    if a < 0.0 {
                        return Value::Undefined;
                    }
                    a.sqrt()
                }
                Op::Exp => st.pop().unwrap().exp(),
                Op::Sin => st.pop().unwrap().sin(),
                Op::Cos => st.pop().unwrap().cos(),
                Op::Glog(a, b, r) => super::glog(a, b, r, st.pop().unwrap()),
                _ => {
                    let b = st.pop().unwrap();
                    let a = st.pop().unwrap();
                    match *op {
                        Op::Add => a + b,
                        Op::Sub => a - b,
                        Op::Mul => a * b,
                        Op::Div => {
                            if b == 0.0 {
                                return Value::Undefined;
                            }
                            a / b
                        }
                        Op::Min => a.min(b),
                        Op::Max => a.max(b),
                        _ => unreachable!(),
                    }
                }
            };
            if v.is_nan() {
                return Value::Undefined;
            }
            st.push(v);
        }
        Value::Real(st.pop().unwrap())
    }

    /// Natural interval extension with outward rounding. `None` when the
    /// expression may be undefined somewhere on the box.
    pub fn eval_interval(&self, x: &[Interval]) -> Option<Interval> {
        debug_assert_eq!(x.len(), self.arity);
        let mut st: Vec<Interval> = Vec::with_capacity(self.depth);
        for op in &self.code {
            let v = match *op {
                Op::Const(c) => Interval::point(c),
                Op::Load(k) => x[k],
                Op::Neg => st.pop().unwrap().neg(),
                Op::Sqrt => st.pop().unwrap().sqrt()?,
                Op::Exp => st.pop().unwrap().exp(),
                Op::Sin => st.pop().unwrap().sin(),
                Op::Cos => st.pop().unwrap().cos(),
                Op::Glog(a, b, r) => {
                    // Increasing in its argument: enclose the end points.
                    let t = st.pop().unwrap();
                    let lo = glog_point_enclosure(a, b, r, t.lo).lo;
                    let hi = glog_point_enclosure(a, b, r, t.hi).hi;
                    Interval::new(lo.max(a), hi.min(b))
                }
                _ => {
                    let b = st.pop().unwrap();
                    let a = st.pop().unwrap();
                    match *op {
                        Op::Add => a.add(&b),
                        Op::Sub => a.sub(&b),
                        Op::Mul => a.mul(&b),
                        Op::Div => a.div(&b)?,
                        Op::Min => a.min(&b),
                        Op::Max => a.max(&b),
                        _ => unreachable!(),
                    }
                }
            };
            if v.lo.is_nan() || v.hi.is_nan() {
                return None;
            }
            st.push(v);
        }
        st.pop()
    }
}

fn emit(e: &Expr, inputs: &[impl AsRef<str>], code: &mut Vec<Op>) -> Result<(), ExprError> {
    let bin = |a: &Expr, b: &Expr, op: Op, code: &mut Vec<Op>| -> Result<(), ExprError> {
        emit(a, inputs, code)?;
        emit(b, inputs, code)?;
        code.push(op);
        Ok(())
    };
    match e {
        Expr::Const(c) => code.push(Op::Const(*c)),
        Expr::Var(n) => {
            let k = inputs
                .iter()
                .position(|s| s.as_ref() == n)
                .ok_or_else(|| ExprError::UnboundVariable(n.clone()))?;
            code.push(Op::Load(k));
        }
        Expr::Neg(a) => {
            emit(a, inputs, code)?;
            code.push(Op::Neg);
        }
        Expr::Sqrt(a) => {
            emit(a, inputs, code)?;
            code.push(Op::Sqrt);
        }
        Expr::Exp(a) => {
            emit(a, inputs, code)?;
            code.push(Op::Exp);
        }
        Expr::Sin(a) => {
            emit(a, inputs, code)?;
            code.push(Op::Sin);
        }
        Expr::Cos(a) => {
            emit(a, inputs, code)?;
            code.push(Op::Cos);
        }
        Expr::Glog { a, b, rate, arg } => {
            emit(arg, inputs, code)?;
            code.push(Op::Glog(*a, *b, *rate));
        }
        Expr::Add(a, b) => bin(a, b, Op::Add, code)?,
        Expr::Sub(a, b) => bin(a, b, Op::Sub, code)?,
        Expr::Mul(a, b) => bin(a, b, Op::Mul, code)?,
        Expr::Div(a, b) => bin(a, b, Op::Div, code)?,
        Expr::Min(a, b) => bin(a, b, Op::Min, code)?,
        Expr::Max(a, b) => bin(a, b, Op::Max, code)?,
    }
    Ok(())
}
