//! Actor, critic trunk, morphology encoder and FiLM heads.
//!
//! All four conditioning variants share the same trunk shapes and, for a
//! given seed, the same trunk initial weights, so they differ only in how
//! the morphology latent reaches the networks.

mod film;
mod gaussian;
mod layers;

use std::fmt;
use std::str::FromStr;

use morphcritic_autodiff::{Checkpoint, Graph, ParamId, ParamStore, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use film::film_modulate;
pub use gaussian::{graph_entropy, graph_log_prob, log_prob_and_entropy};
pub use layers::{Init, Linear, Mlp};

use crate::error::{CoreError, Result};
use crate::morphology::MORPH_DIM;

/// How morphology information reaches the networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// No morphology anywhere.
    #[serde(rename = "vanilla")]
    Vanilla,
    /// Latent concatenated to the actor input only.
    #[serde(rename = "actor")]
    ActorOnly,
    /// Latent concatenated to both actor and critic inputs.
    #[serde(rename = "concat")]
    ActorCriticConcat,
    /// Latent concatenated to the actor; critic modulated per layer by FiLM.
    #[serde(rename = "film")]
    FilmCritic,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Vanilla,
        Variant::ActorOnly,
        Variant::ActorCriticConcat,
        Variant::FilmCritic,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::ActorOnly => "actor",
            Variant::ActorCriticConcat => "concat",
            Variant::FilmCritic => "film",
        }
    }

    pub fn uses_encoder(self) -> bool {
        self != Variant::Vanilla
    }

    pub fn critic_sees_morphology(self) -> bool {
        matches!(self, Variant::ActorCriticConcat | Variant::FilmCritic)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Variant::Vanilla => "Vanilla",
            Variant::ActorOnly => "ActorOnly",
            Variant::ActorCriticConcat => "ActorCriticConcat",
            Variant::FilmCritic => "FiLMCritic",
        };
        f.write_str(name)
    }
}

impl FromStr for Variant {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.tag() == s)
            .ok_or_else(|| CoreError::Config(format!("unknown variant `{s}` (vanilla, actor, concat, film)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub encoder_hidden: usize,
    pub latent_dim: usize,
    pub film_hidden: usize,
    pub film_scale: f64,
    pub init_std: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            actor_hidden: vec![512, 256, 128],
            critic_hidden: vec![512, 256, 128],
            encoder_hidden: 128,
            latent_dim: 64,
            film_hidden: 128,
            film_scale: 0.1,
            init_std: 1.0,
        }
    }
}

impl NetworkConfig {
    /// Two 128-unit layers and a 16-dim latent, for CPU-budget runs.
    pub fn desk() -> Self {
        Self {
            actor_hidden: vec![128, 128],
            critic_hidden: vec![128, 128],
            encoder_hidden: 64,
            latent_dim: 16,
            film_hidden: 64,
            ..Self::default()
        }
    }
}

/// Input and output widths fixed by the environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDims {
    pub obs_dim: usize,
    /// Width of the flattened critic stream `(o, h, p)`.
    pub critic_dim: usize,
    pub action_dim: usize,
}

/// Batched network outputs.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub mean: Var,
    pub log_std: Var,
    pub value: Var,
    pub latent: Option<Var>,
}

/// Plain-tensor outputs for rollout collection and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mean: Tensor,
    pub std: Vec<f64>,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkBundle {
    variant: Variant,
    dims: NetDims,
    config: NetworkConfig,
    params: ParamStore,
    actor: Mlp,
    log_std: ParamId,
    critic_hidden: Vec<Linear>,
    critic_out: Linear,
    encoder: Option<Mlp>,
    film_heads: Vec<Mlp>,
}

/// Independent RNG stream per sub-network, so a trunk's initial weights do
/// not depend on which other sub-networks the variant builds.
fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h)
}

impl NetworkBundle {
    pub fn new(variant: Variant, dims: NetDims, config: NetworkConfig, seed: u64) -> Result<Self> {
        if config.critic_hidden.is_empty() || config.actor_hidden.is_empty() {
            return Err(CoreError::Config("actor and critic need at least one hidden layer".into()));
        }
        let mut params = ParamStore::new();
        let latent = config.latent_dim;
        let actor_in = dims.obs_dim + if variant.uses_encoder() { latent } else { 0 };
        let critic_in = dims.critic_dim + if variant == Variant::ActorCriticConcat { latent } else { 0 };

        let mut sizes = vec![actor_in];
        sizes.extend(&config.actor_hidden);
        sizes.push(dims.action_dim);
        let actor = Mlp::new(&mut params, "actor", &sizes, Init::FanInUniform, &mut stream(seed, "actor"))?;
        let log_std = params.insert(
            "actor.log_std",
            Tensor::filled(&[1, dims.action_dim], config.init_std.ln()),
        )?;

        let mut rng = stream(seed, "critic");
        let mut critic_hidden = Vec::new();
        let mut width = critic_in;
        for (i, &h) in config.critic_hidden.iter().enumerate() {
            critic_hidden.push(Linear::new(&mut params, &format!("critic.{i}"), width, h, Init::FanInUniform, &mut rng)?);
            width = h;
        }
        let critic_out = Linear::new(&mut params, "critic.out", width, 1, Init::FanInUniform, &mut rng)?;

        let encoder = if variant.uses_encoder() {
            Some(Mlp::new(
                &mut params,
                "encoder",
                &[MORPH_DIM, config.encoder_hidden, latent],
                Init::FanInUniform,
                &mut stream(seed, "encoder"),
            )?)
        } else {
            None
        };

        let mut film_heads = Vec::new();
        if variant == Variant::FilmCritic {
            let mut rng = stream(seed, "film");
            for (i, &h) in config.critic_hidden.iter().enumerate() {
                film_heads.push(Mlp::new(
                    &mut params,
                    &format!("film.{i}"),
                    &[latent, config.film_hidden, 2 * h],
                    Init::Zeros,
                    &mut rng,
                )?);
            }
        }

        Ok(Self {
            variant,
            dims,
            config,
            params,
            actor,
            log_std,
            critic_hidden,
            critic_out,
            encoder,
            film_heads,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn dims(&self) -> NetDims {
        self.dims
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn log_std_id(&self) -> ParamId {
        self.log_std
    }

    pub fn film_heads(&self) -> &[Mlp] {
        &self.film_heads
    }

    pub fn encoder(&self) -> Option<&Mlp> {
        self.encoder.as_ref()
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic_layers(&self) -> (&[Linear], &Linear) {
        (&self.critic_hidden, &self.critic_out)
    }

    fn check_cols(g: &Graph, v: Var, what: &'static str, expected: usize) -> Result<()> {
        let got = g.value(v).cols();
        if got != expected {
            return Err(CoreError::Dimension { what, expected, got });
        }
        Ok(())
    }

    /// Morphology latent `z` for a batch of normalized descriptors `[n, 11]`.
    pub fn encode(&self, g: &mut Graph, morph: Var) -> Result<Var> {
        let encoder = self.encoder.as_ref().ok_or(CoreError::MissingMorphology { variant: self.variant })?;
        Self::check_cols(g, morph, "morphology input", MORPH_DIM)?;
        encoder.forward(g, morph)
    }

    /// Action mean `[n, action_dim]`. `latent` is required for every
    /// variant except Vanilla, which ignores it.
    pub fn actor_mean(&self, g: &mut Graph, obs: Var, latent: Option<Var>) -> Result<Var> {
        Self::check_cols(g, obs, "observation", self.dims.obs_dim)?;
        let input = if self.variant.uses_encoder() {
            let z = latent.ok_or(CoreError::MissingMorphology { variant: self.variant })?;
            g.concat_cols(&[obs, z])?
        } else {
            obs
        };
        self.actor.forward(g, input)
    }

    /// Value estimate `[n, 1]`. Each trunk hidden layer of the FiLM variant
    /// is modulated after its affine map and before the activation.
    pub fn critic_value(&self, g: &mut Graph, x: Var, latent: Option<Var>) -> Result<Var> {
        Self::check_cols(g, x, "critic input", self.dims.critic_dim)?;
        let needs_z = self.variant.critic_sees_morphology();
        let z = match (needs_z, latent) {
            (true, Some(z)) => Some(z),
            (true, None) => return Err(CoreError::MissingMorphology { variant: self.variant }),
            (false, _) => None,
        };
        let mut h = match (self.variant, z) {
            (Variant::ActorCriticConcat, Some(z)) => g.concat_cols(&[x, z])?,
            _ => x,
        };
        for (i, layer) in self.critic_hidden.iter().enumerate() {
            let mut pre = layer.forward(g, h)?;
            if let (Variant::FilmCritic, Some(z)) = (self.variant, z) {
                let raw = self.film_heads[i].forward(g, z)?;
                pre = film_modulate(g, pre, raw, self.config.film_scale)?;
            }
            h = g.elu(pre);
        }
        self.critic_out.forward(g, h)
    }

    /// Full forward pass on batched inputs. `morph` holds normalized
    /// descriptors, one row per sample.
    pub fn forward(&self, g: &mut Graph, obs: Var, critic_x: Var, morph: Option<Var>) -> Result<ForwardVars> {
        let latent = match (self.variant.uses_encoder(), morph) {
            (true, Some(m)) => Some(self.encode(g, m)?),
            (true, None) => return Err(CoreError::MissingMorphology { variant: self.variant }),
            (false, _) => None,
        };
        let mean = self.actor_mean(g, obs, latent)?;
        let value = self.critic_value(g, critic_x, latent)?;
        let log_std = g.param(self.log_std);
        Ok(ForwardVars {
            mean,
            log_std,
            value,
            latent,
        })
    }

    /// Forward evaluation without keeping the graph around.
    pub fn evaluate(&self, obs: &Tensor, critic_x: &Tensor, morph: Option<&Tensor>) -> Result<Evaluation> {
        let mut g = Graph::new(&self.params);
        let o = g.input(obs.clone());
        let x = g.input(critic_x.clone());
        let m = morph.map(|m| g.input(m.clone()));
        let out = self.forward(&mut g, o, x, m)?;
        Ok(Evaluation {
            mean: g.value(out.mean).clone(),
            std: g.value(out.log_std).data().iter().map(|v| v.exp()).collect(),
            value: g.value(out.value).data().to_vec(),
        })
    }

    /// Critic only, for batched `[n, critic_dim]` inputs.
    pub fn values(&self, critic_x: &Tensor, morph: Option<&Tensor>) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.params);
        let x = g.input(critic_x.clone());
        let z = if self.variant.critic_sees_morphology() {
            let m = morph.ok_or(CoreError::MissingMorphology { variant: self.variant })?;
            let mv = g.input(m.clone());
            Some(self.encode(&mut g, mv)?)
        } else {
            None
        };
        let v = self.critic_value(&mut g, x, z)?;
        Ok(g.value(v).data().to_vec())
    }

    pub fn latent(&self, morph: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new(&self.params);
        let m = g.input(morph.clone());
        let z = self.encode(&mut g, m)?;
        Ok(g.value(z).clone())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        Checkpoint::new(self.params.clone())
            .with_meta("variant", self.variant.tag())
            .with_meta("obs_dim", self.dims.obs_dim.to_string())
            .with_meta("critic_dim", self.dims.critic_dim.to_string())
            .with_meta("action_dim", self.dims.action_dim.to_string())
            .with_meta("actor_hidden", join(&self.config.actor_hidden))
            .with_meta("critic_hidden", join(&self.config.critic_hidden))
            .with_meta("encoder_hidden", self.config.encoder_hidden.to_string())
            .with_meta("latent_dim", self.config.latent_dim.to_string())
            .with_meta("film_hidden", self.config.film_hidden.to_string())
            .with_meta("film_scale", format!("{:?}", self.config.film_scale))
            .with_meta("init_std", format!("{:?}", self.config.init_std))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta = |k: &str| {
            ckpt.metadata
                .get(k)
                .ok_or_else(|| CoreError::CheckpointMismatch(format!("missing metadata `{k}`")))
        };
        let num = |k: &str| -> Result<usize> {
            meta(k)?.parse().map_err(|_| CoreError::CheckpointMismatch(format!("bad `{k}`")))
        };
        let real = |k: &str| -> Result<f64> {
            meta(k)?.parse().map_err(|_| CoreError::CheckpointMismatch(format!("bad `{k}`")))
        };
        let list = |k: &str| -> Result<Vec<usize>> {
            meta(k)?
                .split(',')
                .map(|s| s.parse().map_err(|_| CoreError::CheckpointMismatch(format!("bad `{k}`"))))
                .collect()
        };
        let variant: Variant = meta("variant")?.parse()?;
        let dims = NetDims {
            obs_dim: num("obs_dim")?,
            critic_dim: num("critic_dim")?,
            action_dim: num("action_dim")?,
        };
        let config = NetworkConfig {
            actor_hidden: list("actor_hidden")?,
            critic_hidden: list("critic_hidden")?,
            encoder_hidden: num("encoder_hidden")?,
            latent_dim: num("latent_dim")?,
            film_hidden: num("film_hidden")?,
            film_scale: real("film_scale")?,
            init_std: real("init_std")?,
        };
        let mut bundle = Self::new(variant, dims, config, 0)?;
        if bundle.params.len() != ckpt.params.len() {
            return Err(CoreError::CheckpointMismatch(format!(
                "{} parameters in checkpoint, {} expected for {variant}",
                ckpt.params.len(),
                bundle.params.len()
            )));
        }
        bundle.params.load_from(&ckpt.params)?;
        Ok(bundle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn dims() -> NetDims {
        NetDims {
            obs_dim: 5,
            critic_dim: 9,
            action_dim: 2,
        }
    }

    fn small() -> NetworkConfig {
        NetworkConfig {
            actor_hidden: vec![16, 8],
            critic_hidden: vec![16, 8],
            encoder_hidden: 12,
            latent_dim: 6,
            film_hidden: 10,
            ..NetworkConfig::default()
        }
    }

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn full_architecture_shapes() {
        let b = NetworkBundle::new(Variant::FilmCritic, dims(), NetworkConfig::default(), 1).unwrap();
        let enc = b.encoder().unwrap();
        let widths: Vec<_> = enc.layers.iter().map(|l| (l.in_dim, l.out_dim)).collect();
        assert_eq!(widths, vec![(11, 128), (128, 64)]);
        let heads: Vec<_> = b.film_heads().iter().map(|h| (h.in_dim(), h.layers[0].out_dim, h.out_dim())).collect();
        assert_eq!(heads, vec![(64, 128, 1024), (64, 128, 512), (64, 128, 256)]);
        let actor: Vec<_> = b.actor().layers.iter().map(|l| l.out_dim).collect();
        assert_eq!(actor, vec![512, 256, 128, 2]);
        assert_eq!(b.actor().in_dim(), 5 + 64);
    }

    #[test]
    fn fresh_std_is_one() {
        let b = NetworkBundle::new(Variant::ActorOnly, dims(), small(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = b.evaluate(&random(&mut rng, 2, 5), &random(&mut rng, 2, 9), Some(&random(&mut rng, 2, 11))).unwrap();
        assert_eq!(e.std, vec![1.0, 1.0]);
    }

    #[test]
    fn vanilla_has_no_morphology_parameters() {
        let b = NetworkBundle::new(Variant::Vanilla, dims(), small(), 3).unwrap();
        assert!(b.params().names().all(|n| !n.starts_with("encoder") && !n.starts_with("film")));
    }

    #[test]
    fn zero_encoder_gives_zero_latent() {
        let mut b = NetworkBundle::new(Variant::ActorOnly, dims(), small(), 3).unwrap();
        let ids: Vec<_> = b.params().iter().filter(|(_, n, _)| n.starts_with("encoder")).map(|(id, _, _)| id).collect();
        for id in ids {
            b.params_mut().get_mut(id).data_mut().fill(0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = b.latent(&random(&mut rng, 3, 11)).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conditioned_variant_requires_morphology() {
        let b = NetworkBundle::new(Variant::ActorCriticConcat, dims(), small(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = b.evaluate(&random(&mut rng, 1, 5), &random(&mut rng, 1, 9), None).unwrap_err();
        assert!(matches!(err, CoreError::MissingMorphology { .. }));
    }

    #[test]
    fn wrong_morphology_width_rejected() {
        let b = NetworkBundle::new(Variant::FilmCritic, dims(), small(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = b.latent(&random(&mut rng, 1, 10)).unwrap_err();
        assert!(matches!(err, CoreError::Dimension { expected: 11, got: 10, .. }));
    }

    #[test]
    fn film_at_init_equals_vanilla() {
        let film = NetworkBundle::new(Variant::FilmCritic, dims(), small(), 21).unwrap();
        let vanilla = NetworkBundle::new(Variant::Vanilla, dims(), small(), 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, 50, 9);
        let m = random(&mut rng, 50, 11);
        let a = film.values(&x, Some(&m)).unwrap();
        let b = vanilla.values(&x, None).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_outputs() {
        let b = NetworkBundle::new(Variant::FilmCritic, dims(), small(), 8).unwrap();
        let restored = NetworkBundle::from_checkpoint(&b.to_checkpoint()).unwrap();
        assert_eq!(restored, b);
    }

    #[test]
    fn variant_tags_parse() {
        for v in Variant::ALL {
            assert_eq!(v.tag().parse::<Variant>().unwrap(), v);
        }
        assert!("mlp".parse::<Variant>().is_err());
    }
}
