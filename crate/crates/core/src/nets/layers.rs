use morphcritic_autodiff::{Graph, ParamId, ParamStore, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` weights, zero bias.
    FanInUniform,
    Zeros,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        init: Init,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let weight = match init {
            Init::FanInUniform => {
                let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
                let data = (0..in_dim * out_dim).map(|_| rng.gen_range(-bound..bound)).collect();
                Tensor::new(vec![in_dim, out_dim], data)?
            }
            Init::Zeros => Tensor::zeros(&[in_dim, out_dim]),
        };
        let weight = store.insert(format!("{name}.weight"), weight)?;
        let bias = store.insert(format!("{name}.bias"), Tensor::zeros(&[1, out_dim]))?;
        Ok(Self {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let (w, b) = (g.param(self.weight), g.param(self.bias));
        Ok(g.linear(w, b, x)?)
    }
}

/// Stack of linear layers with ELU between them and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `sizes` lists every width from input to output. The last layer can
    /// be zero-initialized.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        sizes: &[usize],
        last_init: Init,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let n = sizes.len().saturating_sub(1);
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let init = if i + 1 == n { last_init } else { Init::FanInUniform };
                Linear::new(store, &format!("{name}.{i}"), w[0], w[1], init, rng)
            })
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, h)?;
            if i + 1 < self.layers.len() {
                h = g.elu(h);
            }
        }
        Ok(h)
    }
}
