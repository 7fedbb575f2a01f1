//! Two-morphology oracle task: one state, two embodiments with opposite
//! returns. A critic that cannot see the morphology can only fit the mean.

use morphcritic_autodiff::{Adam, AdamConfig, Graph, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::morphology::MORPH_DIM;
use crate::nets::{NetDims, NetworkBundle, NetworkConfig, Variant};

const PROBE_CRITIC_DIM: usize = 4;
pub const PROBE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleTask {
    pub state: Vec<f64>,
    pub morph_a: [f64; MORPH_DIM],
    pub morph_b: [f64; MORPH_DIM],
    pub return_a: f64,
    pub return_b: f64,
}

impl Default for OracleTask {
    fn default() -> Self {
        Self {
            state: vec![1.0, -0.5, 0.25, 0.0],
            morph_a: [-0.5; MORPH_DIM],
            morph_b: [0.5; MORPH_DIM],
            return_a: 1.0,
            return_b: -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub steps: usize,
    /// Samples per morphology in each regression batch.
    pub batch_per_morphology: usize,
    pub lr: f64,
    pub seed: u64,
    pub network: NetworkConfig,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            steps: 400,
            batch_per_morphology: 4,
            lr: 1e-3,
            seed: 0,
            network: NetworkConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub variant: Variant,
    pub value_a: f64,
    pub value_b: f64,
    /// Advantage of the `m_A` return under the fitted baseline.
    pub advantage_a: f64,
    pub final_loss: f64,
    /// Both values within tolerance of their own morphology's return.
    pub per_morphology_fit: bool,
    /// Both values within tolerance of the pooled mean return.
    pub pooled_fit: bool,
}

impl ProbeReport {
    /// Whether the variant behaved as its critic architecture predicts.
    pub fn as_expected(&self) -> bool {
        if self.variant.critic_sees_morphology() {
            self.per_morphology_fit
        } else {
            self.pooled_fit
        }
    }
}

/// Fit the critic of `variant` to the oracle returns by value regression.
pub fn interference_probe(variant: Variant, task: &OracleTask, cfg: &ProbeConfig) -> Result<ProbeReport> {
    let dims = NetDims {
        obs_dim: 1,
        critic_dim: PROBE_CRITIC_DIM,
        action_dim: 1,
    };
    let mut state = task.state.clone();
    state.resize(PROBE_CRITIC_DIM, 0.0);
    let mut bundle = NetworkBundle::new(variant, dims, cfg.network.clone(), cfg.seed)?;
    let mut adam = Adam::new(
        bundle.params(),
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let k = cfg.batch_per_morphology.max(1);
    let n = 2 * k;
    let mut xs = Vec::with_capacity(n * PROBE_CRITIC_DIM);
    let mut ms = Vec::with_capacity(n * MORPH_DIM);
    let mut gs = Vec::with_capacity(n);
    for i in 0..n {
        xs.extend_from_slice(&state);
        let a = i % 2 == 0;
        ms.extend_from_slice(if a { &task.morph_a } else { &task.morph_b });
        gs.push(if a { task.return_a } else { task.return_b });
    }
    let x = Tensor::new(vec![n, PROBE_CRITIC_DIM], xs)?;
    let m = Tensor::new(vec![n, MORPH_DIM], ms)?;
    let targets = Tensor::new(vec![n, 1], gs)?;

    let mut final_loss = f64::NAN;
    for _ in 0..cfg.steps {
        let mut g = Graph::new(bundle.params());
        let xv = g.input(x.clone());
        let z = if variant.critic_sees_morphology() {
            let mv = g.input(m.clone());
            Some(bundle.encode(&mut g, mv)?)
        } else {
            None
        };
        let v = bundle.critic_value(&mut g, xv, z)?;
        let t = g.input(targets.clone());
        let err = g.sub(v, t)?;
        let sq = g.square(err);
        let loss = g.mean(sq);
        final_loss = g.value(loss).data()[0];
        let grads = g.backward(loss)?;
        drop(g);
        adam.step(bundle.params_mut(), grads);
    }

    let probe = Tensor::new(vec![2, PROBE_CRITIC_DIM], [state.clone(), state].concat())?;
    let pm = Tensor::new(vec![2, MORPH_DIM], [task.morph_a, task.morph_b].concat())?;
    let vals = bundle.values(&probe, Some(&pm))?;
    let (value_a, value_b) = (vals[0], vals[1]);
    let pooled = 0.5 * (task.return_a + task.return_b);
    Ok(ProbeReport {
        variant,
        value_a,
        value_b,
        advantage_a: task.return_a - value_a,
        final_loss,
        per_morphology_fit: (value_a - task.return_a).abs() < PROBE_TOLERANCE
            && (value_b - task.return_b).abs() < PROBE_TOLERANCE,
        pooled_fit: (value_a - pooled).abs() < PROBE_TOLERANCE && (value_b - pooled).abs() < PROBE_TOLERANCE,
    })
}
