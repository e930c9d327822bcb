//! Weight-update rules (plain SGD and Adam) and the step-decay
//! learning-rate schedule.

use crate::error::{Error, Result};
use crate::model::ParamSet;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// w(t+1) = w(t) - eta * g, every tensor. eta = 0 is the identity.
pub fn sgd_step(params: &ParamSet, grads: &ParamSet, eta: f64) -> Result<ParamSet> {
    check_shapes(params, grads)?;
    let mut out = params.clone();
    out.zip_mut(grads, |w, g| {
        for (wv, gv) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *wv -= eta * gv;
        }
    });
    Ok(out)
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Per-tensor first and second moments plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: ParamSet,
    v: ParamSet,
    t: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// Standard bias-corrected Adam update; returns updated params and state.
pub fn adam_step(
    params: &ParamSet,
    grads: &ParamSet,
    state: &AdamState,
    eta: f64,
) -> Result<(ParamSet, AdamState)> {
    check_shapes(params, grads)?;
    let mut out = params.clone();
    let mut st = state.clone();
    st.t += 1;
    let t = st.t as f64;
    let bc1 = 1.0 - BETA1.powf(t);
    let bc2 = 1.0 - BETA2.powf(t);
    for li in 0..out.layers.len() {
        for ti in 0..out.layers[li].tensors.len() {
            let g = &grads.layers[li].tensors[ti].1;
            let m = &mut st.m.layers[li].tensors[ti].1;
            let v = &mut st.v.layers[li].tensors[ti].1;
            let w = &mut out.layers[li].tensors[ti].1;
            for k in 0..g.len() {
                let gv = g.as_slice()[k];
                let mv = BETA1 * m.as_slice()[k] + (1.0 - BETA1) * gv;
                let vv = BETA2 * v.as_slice()[k] + (1.0 - BETA2) * gv * gv;
                m.as_mut_slice()[k] = mv;
                v.as_mut_slice()[k] = vv;
                let m_hat = mv / bc1;
                let v_hat = vv / bc2;
                w.as_mut_slice()[k] -= eta * m_hat / (v_hat.sqrt() + EPS);
            }
        }
    }
    Ok((out, st))
}

/// eta(epoch) = base * factor^floor(epoch / every).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_eta: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
}

impl LrSchedule {
    pub fn new(base_eta: f64, decay_factor: f64, decay_every: usize) -> Result<Self> {
        if base_eta <= 0.0 || decay_factor <= 0.0 || decay_factor > 1.0 || decay_every == 0 {
            return Err(Error::config("invalid learning-rate schedule"));
        }
        Ok(LrSchedule {
            base_eta,
            decay_factor,
            decay_every,
        })
    }

    /// Constant schedule, used inside measurement windows.
    pub fn constant(eta: f64) -> Self {
        LrSchedule {
            base_eta: eta,
            decay_factor: 1.0,
            decay_every: 1,
        }
    }

    pub fn eta(&self, epoch: usize) -> f64 {
        self.base_eta * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

fn check_shapes(params: &ParamSet, grads: &ParamSet) -> Result<()> {
    if params.layers.len() != grads.layers.len() {
        return Err(Error::config("params/grads layer count mismatch"));
    }
    for (p, g) in params.layers.iter().zip(&grads.layers) {
        if p.name != g.name || p.tensors.len() != g.tensors.len() {
            return Err(Error::config(format!("layer {} structure mismatch", p.name)));
        }
        for ((pn, pm), (gn, gm)) in p.tensors.iter().zip(&g.tensors) {
            if pn != gn || pm.rows() != gm.rows() || pm.cols() != gm.cols() {
                return Err(Error::config(format!(
                    "tensor {}/{} shape mismatch",
                    p.name, pn
                )));
            }
        }
    }
    Ok(())
}
