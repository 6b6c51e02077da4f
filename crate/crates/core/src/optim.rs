//! Adagrad and Adam over a parameter slice.

use std::fmt;
use std::str::FromStr;

use crate::diffcore::{Array, Gradients};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Adagrad,
    Adam,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adagrad" => Ok(OptimizerKind::Adagrad),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::config(format!("unknown optimizer {other:?}"))),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Adam => "adam",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub adagrad_init_acc: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl OptimizerSpec {
    /// Pre-training optimizer: Adagrad, lr 0.15, initial accumulator 0.1.
    pub fn adagrad() -> Self {
        OptimizerSpec {
            kind: OptimizerKind::Adagrad,
            learning_rate: 0.15,
            adagrad_init_acc: 0.1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }

    /// Fine-tuning optimizer: Adam, lr 1e-5.
    pub fn adam() -> Self {
        OptimizerSpec {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-5,
            ..OptimizerSpec::adagrad()
        }
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    /// A zero learning rate is accepted so a run can be frozen in place.
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::config(format!(
                "learning rate must be non-negative and finite, got {}",
                self.learning_rate
            )));
        }
        if self.kind == OptimizerKind::Adagrad && (self.adagrad_init_acc.is_nan() || self.adagrad_init_acc <= 0.0) {
            return Err(Error::config("adagrad initial accumulator must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
enum State {
    Adagrad { acc: Vec<Array> },
    Adam { m: Vec<Array>, v: Vec<Array>, t: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    spec: OptimizerSpec,
    state: State,
}

impl Optimizer {
    pub fn new(spec: OptimizerSpec, params: &[Array]) -> Result<Self> {
        spec.validate()?;
        let zeros = || params.iter().map(|p| Array::zeros(p.shape())).collect::<Vec<_>>();
        let state = match spec.kind {
            OptimizerKind::Adagrad => State::Adagrad {
                acc: params
                    .iter()
                    .map(|p| {
                        let mut a = Array::zeros(p.shape());
                        a.data_mut().fill(spec.adagrad_init_acc);
                        a
                    })
                    .collect(),
            },
            OptimizerKind::Adam => State::Adam {
                m: zeros(),
                v: zeros(),
                t: 0,
            },
        };
        Ok(Optimizer { spec, state })
    }

    pub fn spec(&self) -> &OptimizerSpec {
        &self.spec
    }

    /// Adagrad accumulator for one parameter, if this is Adagrad.
    pub fn accumulator(&self, index: usize) -> Option<&Array> {
        match &self.state {
            State::Adagrad { acc } => acc.get(index),
            State::Adam { .. } => None,
        }
    }

    /// Descends along `grads`. Nothing is modified if any updated value would
    /// be non-finite.
    pub fn step(&mut self, params: &mut [Array], grads: &Gradients) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::contract(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        let lr = self.spec.learning_rate;
        let mut new_params: Vec<Vec<f64>> = Vec::with_capacity(params.len());
        let new_state = match &self.state {
            State::Adagrad { acc } => {
                let mut new_acc = Vec::with_capacity(acc.len());
                for ((p, a), g) in params.iter().zip(acc).zip(grads.entries()) {
                    let mut pa = p.data().to_vec();
                    let mut aa = a.data().to_vec();
                    for ((x, s), &gi) in pa.iter_mut().zip(aa.iter_mut()).zip(g.data()) {
                        *s += gi * gi;
                        *x -= lr * gi / s.sqrt();
                    }
                    new_params.push(pa);
                    new_acc.push(Array::new(a.shape().to_vec(), aa)?);
                }
                State::Adagrad { acc: new_acc }
            }
            State::Adam { m, v, t } => {
                let t = t + 1;
                let (b1, b2, eps) = (self.spec.adam_beta1, self.spec.adam_beta2, self.spec.adam_eps);
                let c1 = 1.0 - b1.powi(t as i32);
                let c2 = 1.0 - b2.powi(t as i32);
                let mut new_m = Vec::with_capacity(m.len());
                let mut new_v = Vec::with_capacity(v.len());
                for (((p, ma), va), g) in params.iter().zip(m).zip(v).zip(grads.entries()) {
                    let mut pa = p.data().to_vec();
                    let mut mm = ma.data().to_vec();
                    let mut vv = va.data().to_vec();
                    for (((x, mi), vi), &gi) in pa.iter_mut().zip(mm.iter_mut()).zip(vv.iter_mut()).zip(g.data()) {
                        *mi = b1 * *mi + (1.0 - b1) * gi;
                        *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                        let m_hat = *mi / c1;
                        let v_hat = *vi / c2;
                        *x -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                    new_params.push(pa);
                    new_m.push(Array::new(ma.shape().to_vec(), mm)?);
                    new_v.push(Array::new(va.shape().to_vec(), vv)?);
                }
                State::Adam { m: new_m, v: new_v, t }
            }
        };
        if new_params.iter().any(|p| p.iter().any(|x| !x.is_finite())) {
            return Err(Error::Numeric("non-finite parameter update; step aborted".into()));
        }
        for (p, new) in params.iter_mut().zip(new_params) {
            p.data_mut().copy_from_slice(&new);
        }
        self.state = new_state;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64) -> Vec<Array> {
        vec![Array::vector(vec![v])]
    }

    fn grad(g: f64) -> Gradients {
        Gradients::from_arrays(vec![Array::vector(vec![g])])
    }

    #[test]
    fn zero_gradient_changes_nothing() {
        let mut params = scalar_param(0.3);
        let mut opt = Optimizer::new(OptimizerSpec::adagrad(), &params).unwrap();
        opt.step(&mut params, &grad(0.0)).unwrap();
        assert_eq!(params[0].data(), &[0.3]);
        assert_eq!(opt.accumulator(0).unwrap().data(), &[0.1]);
    }

    #[test]
    fn adagrad_single_step() {
        let mut params = scalar_param(1.0);
        let mut opt = Optimizer::new(OptimizerSpec::adagrad(), &params).unwrap();
        opt.step(&mut params, &grad(1.0)).unwrap();
        let expected = 1.0 - 0.15 / 1.1f64.sqrt();
        assert!((params[0].data()[0] - expected).abs() < 1e-12);
        assert!((1.0 - params[0].data()[0] - 0.14302).abs() < 1e-5);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut params = scalar_param(1.0);
        let spec = OptimizerSpec::adam();
        let mut opt = Optimizer::new(spec, &params).unwrap();
        opt.step(&mut params, &grad(1.0)).unwrap();
        let expected = 1.0 - 1e-5 * 1.0 / (1.0 + 1e-8);
        assert!((params[0].data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn non_finite_update_is_rejected_and_state_kept() {
        let mut params = scalar_param(1.0);
        let mut opt = Optimizer::new(OptimizerSpec::adagrad(), &params).unwrap();
        let before = opt.clone();
        let err = opt.step(&mut params, &grad(f64::INFINITY)).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert_eq!(params[0].data(), &[1.0]);
        assert_eq!(opt, before);
    }

    #[test]
    fn negative_learning_rate_is_config_error() {
        let p = scalar_param(0.0);
        assert!(Optimizer::new(OptimizerSpec::adam().with_learning_rate(-1.0), &p).is_err());
    }
}
