//! Strict evaluation of expressions.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use crate::lang::{BinOp, Expr, ExprKind, Value, INPUT_VAR};

/// A runtime value: plain data or a function closure.
#[derive(Clone)]
pub enum RtValue {
    Data(Value),
    Closure(Arc<Closure>),
}

pub struct Closure {
    pub param: String,
    pub body: Arc<Expr>,
    pub env: Env,
}

impl fmt::Debug for RtValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RtValue::Data(v) => write!(f, "{v}"),
            RtValue::Closure(c) => write!(f, "<lambda {}>", c.param),
        }
    }
}

impl RtValue {
    pub fn type_name(&self) -> &'static str {
        match self {
            RtValue::Data(v) => v.type_name(),
            RtValue::Closure(_) => "function",
        }
    }
}

/// Lexically scoped bindings. Cloning is cheap: frames are shared.
#[derive(Clone, Default)]
pub struct Env(Option<Arc<Frame>>);

struct Frame {
    name: String,
    value: RtValue,
    next: Env,
}

impl Env {
    pub fn new() -> Self {
        Env(None)
    }

    pub fn bind(&self, name: impl Into<String>, value: RtValue) -> Env {
        Env(Some(Arc::new(Frame { name: name.into(), value, next: self.clone() })))
    }

    pub fn bind_value(&self, name: impl Into<String>, value: Value) -> Env {
        self.bind(name, RtValue::Data(value))
    }

    pub fn lookup(&self, name: &str) -> Option<&RtValue> {
        let mut cur = &self.0;
        while let Some(frame) = cur {
            if frame.name == name {
                return Some(&frame.value);
            }
            cur = &frame.next.0;
        }
        None
    }

    pub(crate) fn from_bindings(bindings: &BTreeMap<String, RtValue>) -> Env {
        bindings.iter().fold(Env::new(), |env, (k, v)| env.bind(k.clone(), v.clone()))
    }
}

impl fmt::Debug for Env {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names = Vec::new();
        let mut cur = &self.0;
        while let Some(frame) = cur {
            names.push(frame.name.as_str());
            cur = &frame.next.0;
        }
        f.debug_tuple("Env").field(&names).finish()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("index {index} out of range for list of length {len}")]
    IndexOutOfRange { index: f64, len: usize },
    #[error("key `{0}` absent from map")]
    KeyAbsent(String),
    #[error("`{op}` needs numbers, found {found}")]
    NotNumeric { op: &'static str, found: &'static str },
    #[error("division by zero")]
    DivideByZero,
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("cannot call a value of type {0}")]
    NotCallable(&'static str),
    #[error("expression produced a function where data was expected")]
    FunctionResult,
    #[error("evaluation exceeded {0} steps")]
    StepLimit(u64),
    #[error("evaluation nested deeper than {0} calls")]
    DepthLimit(usize),
    #[error("evaluation timed out")]
    Timeout,
}

/// Resource bounds for one evaluation.
#[derive(Debug, Clone, Copy)]
pub struct EvalLimits {
    pub max_steps: u64,
    pub max_depth: usize,
    pub deadline: Option<Instant>,
}

impl Default for EvalLimits {
    fn default() -> Self {
        EvalLimits { max_steps: 10_000_000, max_depth: 400, deadline: None }
    }
}

/// Evaluates `e` with `input` bound to `v` on top of `env`. A function
/// result is applied to `v`; the final result must be data.
pub fn eval_expr(e: &Expr, v: &Value, env: &Env) -> Result<Value, EvalError> {
    eval_expr_with(e, v, env, EvalLimits::default())
}

pub fn eval_expr_with(
    e: &Expr,
    v: &Value,
    env: &Env,
    limits: EvalLimits,
) -> Result<Value, EvalError> {
    let mut ev = Evaluator::new(limits);
    let env = env.bind_value(INPUT_VAR, v.clone());
    let out = ev.eval(e, &env)?;
    let out = match out {
        RtValue::Closure(c) => ev.apply(c, RtValue::Data(v.clone()))?,
        data => data,
    };
    match out {
        RtValue::Data(d) => Ok(d),
        RtValue::Closure(_) => Err(EvalError::FunctionResult),
    }
}

pub(crate) struct Evaluator {
    limits: EvalLimits,
    steps: u64,
    depth: usize,
}

impl Evaluator {
    pub(crate) fn new(limits: EvalLimits) -> Self {
        Evaluator { limits, steps: 0, depth: 0 }
    }

    fn tick(&mut self) -> Result<(), EvalError> {
        self.steps += 1;
        if self.steps > self.limits.max_steps {
            return Err(EvalError::StepLimit(self.limits.max_steps));
        }
        if self.steps % 1024 == 0 {
            if let Some(deadline) = self.limits.deadline {
                if Instant::now() >= deadline {
                    return Err(EvalError::Timeout);
                }
            }
        }
        Ok(())
    }

    pub(crate) fn eval(&mut self, e: &Expr, env: &Env) -> Result<RtValue, EvalError> {
        self.tick()?;
        self.depth += 1;
        if self.depth > self.limits.max_depth {
            self.depth -= 1;
            return Err(EvalError::DepthLimit(self.limits.max_depth));
        }
        let r = self.eval_inner(e, env);
        self.depth -= 1;
        r
    }

    fn eval_inner(&mut self, e: &Expr, env: &Env) -> Result<RtValue, EvalError> {
        match &e.kind {
            ExprKind::Var(name) => {
                env.lookup(name).cloned().ok_or_else(|| EvalError::UnboundVariable(name.clone()))
            }
            ExprKind::Lit(v) => Ok(RtValue::Data(v.clone())),
            ExprKind::Lambda(param, body) => Ok(RtValue::Closure(Arc::new(Closure {
                param: param.clone(),
                body: Arc::clone(body),
                env: env.clone(),
            }))),
            ExprKind::Index(target, idx) => {
                let t = self.data(target, env)?;
                let i = self.data(idx, env)?;
                index(t, &i).map(RtValue::Data)
            }
            ExprKind::Binary(op, lhs, rhs) => {
                let l = self.data(lhs, env)?;
                let r = self.data(rhs, env)?;
                binary(*op, l, r).map(RtValue::Data)
            }
            ExprKind::Apply(func, arg) => {
                let f = self.eval(func, env)?;
                let a = self.eval(arg, env)?;
                match f {
                    RtValue::Closure(c) => self.apply(c, a),
                    other => Err(EvalError::NotCallable(other.type_name())),
                }
            }
        }
    }

    fn data(&mut self, e: &Expr, env: &Env) -> Result<Value, EvalError> {
        match self.eval(e, env)? {
            RtValue::Data(v) => Ok(v),
            RtValue::Closure(_) => Err(EvalError::TypeMismatch("a function is not data".into())),
        }
    }

    /// Applies a closure, looping instead of recursing while the body is
    /// itself an application.
    pub(crate) fn apply(&mut self, mut clo: Arc<Closure>, mut arg: RtValue) -> Result<RtValue, EvalError> {
        loop {
            self.tick()?;
            let env = clo.env.bind(clo.param.clone(), arg);
            let body = Arc::clone(&clo.body);
            match &body.kind {
                ExprKind::Apply(func, a) => {
                    let f = self.eval(func, &env)?;
                    arg = self.eval(a, &env)?;
                    clo = match f {
                        RtValue::Closure(c) => c,
                        other => return Err(EvalError::NotCallable(other.type_name())),
                    };
                }
                _ => return self.eval(&body, &env),
            }
        }
    }
}

fn index(target: Value, idx: &Value) -> Result<Value, EvalError> {
    match (target, idx) {
        (Value::List(items), Value::Number(n)) => {
            let n = *n;
            if n.fract() != 0.0 || n < 0.0 || n >= items.len() as f64 {
                return Err(EvalError::IndexOutOfRange { index: n, len: items.len() });
            }
            Ok(items.into_iter().nth(n as usize).expect("bounds checked"))
        }
        (Value::Map(mut m), Value::Text(k)) => {
            m.remove(k.as_str()).ok_or_else(|| EvalError::KeyAbsent(k.clone()))
        }
        (t, i) => Err(EvalError::TypeMismatch(format!(
            "cannot index {} with {}",
            t.type_name(),
            i.type_name()
        ))),
    }
}

fn binary(op: BinOp, l: Value, r: Value) -> Result<Value, EvalError> {
    match op {
        BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div => {
            let (Value::Number(a), Value::Number(b)) = (&l, &r) else {
                let found = if matches!(l, Value::Number(_)) { r.type_name() } else { l.type_name() };
                return Err(EvalError::NotNumeric { op: op.symbol(), found });
            };
            let (a, b) = (*a, *b);
            Ok(Value::Number(match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                _ => {
                    if b == 0.0 {
                        return Err(EvalError::DivideByZero);
                    }
                    a / b
                }
            }))
        }
        BinOp::Append => match (l, r) {
            (Value::List(mut a), Value::List(b)) => {
                a.extend(b);
                Ok(Value::List(a))
            }
            (Value::Text(a), Value::Text(b)) => Ok(Value::Text(a + &b)),
            (a, b) => Err(EvalError::TypeMismatch(format!(
                "`++` needs two lists or two texts, found {} and {}",
                a.type_name(),
                b.type_name()
            ))),
        },
        BinOp::Merge => match (l, r) {
            (Value::Map(mut a), Value::Map(b)) => {
                a.extend(b);
                Ok(Value::Map(a))
            }
            (a, b) => Err(EvalError::TypeMismatch(format!(
                "`|` needs two maps, found {} and {}",
                a.type_name(),
                b.type_name()
            ))),
        },
    }
}
