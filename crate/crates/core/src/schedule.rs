//! Schedule rates for α (decoder input) and β (loss target).
//!
//! Exponential decay is `k^i`; inverse-sigmoid decay is `k / (k + exp(i/k))`.
//! Both are clamped from below by an optional floor.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    Constant,
    ExpDecay,
    InvSigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub k: f64,
    pub floor: f64,
}

impl ScheduleSpec {
    pub fn constant(k: f64) -> Self {
        ScheduleSpec {
            kind: ScheduleKind::Constant,
            k,
            floor: 0.0,
        }
    }

    pub fn exp_decay(k: f64) -> Self {
        ScheduleSpec {
            kind: ScheduleKind::ExpDecay,
            k,
            floor: 0.0,
        }
    }

    pub fn inv_sigmoid(k: f64) -> Self {
        ScheduleSpec {
            kind: ScheduleKind::InvSigmoid,
            k,
            floor: 0.0,
        }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.floor) {
            return Err(Error::config(format!("schedule floor {} outside [0,1]", self.floor)));
        }
        let ok = match self.kind {
            ScheduleKind::Constant => (0.0..=1.0).contains(&self.k),
            ScheduleKind::ExpDecay => self.k > 0.0 && self.k < 1.0,
            ScheduleKind::InvSigmoid => self.k > 1.0 && self.k.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid schedule {self}")))
        }
    }

    /// Rate at `iteration`, always in `[0, 1]`.
    pub fn rate(&self, iteration: u64) -> Result<f64> {
        self.validate()?;
        Ok(match self.kind {
            ScheduleKind::Constant => self.k,
            ScheduleKind::ExpDecay => self.unfloored(iteration).max(self.floor),
            ScheduleKind::InvSigmoid => self.unfloored(iteration).max(self.floor),
        })
    }

    /// Decay value before the floor is applied.
    pub fn unfloored(&self, iteration: u64) -> f64 {
        let i = iteration as f64;
        match self.kind {
            ScheduleKind::Constant => self.k,
            ScheduleKind::ExpDecay => (i * self.k.ln()).exp(),
            ScheduleKind::InvSigmoid => {
                let k = self.k;
                let z = i / k;
                if z < 30.0 {
                    k / (k + z.exp())
                } else {
                    // k·e^{-z} / (1 + k·e^{-z}); e^{z} overflows for large i
                    let t = k * (-z).exp();
                    t / (1.0 + t)
                }
            }
        }
    }

    /// True for schedules whose rate changes with the iteration.
    pub fn decays(&self) -> bool {
        self.kind != ScheduleKind::Constant
    }
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.kind {
            ScheduleKind::Constant => "const",
            ScheduleKind::ExpDecay => "exp",
            ScheduleKind::InvSigmoid => "sig",
        };
        write!(f, "{tag}:{}", self.k)?;
        if self.kind != ScheduleKind::Constant && self.floor != 0.0 {
            write!(f, ":{}", self.floor)?;
        }
        Ok(())
    }
}

/// Parses `const:0.5`, `exp:0.9999[:floor]` or `sig:3000[:floor]`.
impl FromStr for ScheduleSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |p: &str| -> Result<f64> {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("bad number {p:?} in schedule {s:?}")))
        };
        let spec = match parts.as_slice() {
            ["const", k] => ScheduleSpec::constant(num(k)?),
            ["exp", k] => ScheduleSpec::exp_decay(num(k)?),
            ["exp", k, floor] => ScheduleSpec::exp_decay(num(k)?).with_floor(num(floor)?),
            ["sig", k] => ScheduleSpec::inv_sigmoid(num(k)?),
            ["sig", k, floor] => ScheduleSpec::inv_sigmoid(num(k)?).with_floor(num(floor)?),
            _ => return Err(Error::config(format!("unrecognised schedule {s:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}
