use rand::Rng;

use super::contrastive::contrastive_grad;
use super::EvaluatorConfig;
use crate::detector::{load_adam, push_adam};
use crate::diffnum::{Adam, Checkpoint, LayerSpec, Sequential, Tensor};
use crate::error::Result;
use crate::simenv::augment;

/// Point in the 2-D feature space, each component in `[-1, 1]`.
pub type Embedding = [f64; 2];

/// Borrowed training pair, `y = 0` for similar.
#[derive(Clone, Copy, Debug)]
pub struct PairRef<'a> {
    pub a: &'a Tensor,
    pub b: &'a Tensor,
    pub y: u8,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairLoss {
    pub loss: f64,
    pub skipped: bool,
}

/// Siamese branch: one parameter set embeds both images of a pair.
#[derive(Clone, Debug)]
pub struct EmbedderNet {
    pub config: EvaluatorConfig,
    net: Sequential,
    adam: Adam,
    /// Jitter (px) and noise amplitude used when augmenting.
    pub augmentation: (i64, f64),
    pub steps: u64,
    pub skipped_steps: u64,
}

impl EmbedderNet {
    pub fn specs(side: usize) -> Result<Vec<LayerSpec>> {
        let mut specs = vec![
            LayerSpec::AvgPool { size: 4 },
            LayerSpec::conv(3, 20),
            LayerSpec::Relu,
            LayerSpec::MaxPool { size: 2 },
            LayerSpec::conv(20, 50),
            LayerSpec::Relu,
            LayerSpec::MaxPool { size: 2 },
        ];
        let conv_out: usize = Sequential::output_shape(&specs, &[3, side, side])?.iter().product();
        specs.extend([
            LayerSpec::dense(conv_out, 500),
            LayerSpec::Relu,
            LayerSpec::dense(500, 10),
            LayerSpec::dense(10, 2),
            LayerSpec::Tanh,
        ]);
        Ok(specs)
    }

    pub fn new<R: Rng>(config: EvaluatorConfig, side: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let net = Sequential::new(&[3, side, side], &Self::specs(side)?, rng)?;
        let adam = Adam::new(config.adam);
        Ok(Self {
            config,
            net,
            adam,
            augmentation: (1, 0.03),
            steps: 0,
            skipped_steps: 0,
        })
    }

    pub fn network(&self) -> &Sequential {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Sequential {
        &mut self.net
    }

    pub fn embed(&mut self, image: &Tensor) -> Result<Embedding> {
        Ok(self.embed_batch(&[image])?[0])
    }

    pub fn embed_batch(&mut self, images: &[&Tensor]) -> Result<Vec<Embedding>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(64) {
            let y = self.net.forward(&Tensor::stack(chunk)?, false)?;
            out.extend(y.data().chunks(2).map(|v| [v[0], v[1]]));
        }
        Ok(out)
    }

    /// One contrastive step over the batch (mean of per-pair losses).
    /// Images are augmented first when the config asks for it. A non-finite
    /// loss skips the update.
    pub fn train_pairs<R: Rng>(&mut self, pairs: &[PairRef], rng: &mut R) -> Result<PairLoss> {
        let n = pairs.len();
        if n == 0 {
            return Ok(PairLoss { loss: 0.0, skipped: true });
        }
        let prep = |img: &Tensor, rng: &mut R| {
            if self.config.augment {
                augment(img, self.augmentation.0, self.augmentation.1, rng)
            } else {
                img.clone()
            }
        };
        let mut images = Vec::with_capacity(2 * n);
        for p in pairs {
            images.push(prep(p.a, rng));
        }
        for p in pairs {
            images.push(prep(p.b, rng));
        }
        let refs: Vec<&Tensor> = images.iter().collect();
        let x = Tensor::stack(&refs)?;
        self.net.zero_grad();
        let out = self.net.forward(&x, true)?;
        let e = out.data();
        let mut grad = vec![0.0; e.len()];
        let mut loss = 0.0;
        for (i, p) in pairs.iter().enumerate() {
            let (a, b) = (&e[2 * i..2 * i + 2], &e[2 * (n + i)..2 * (n + i) + 2]);
            let (l, g) = contrastive_grad(a, b, p.y, self.config.margin, self.config.form);
            loss += l / n as f64;
            for k in 0..2 {
                grad[2 * i + k] += g[k] / n as f64;
                grad[2 * (n + i) + k] -= g[k] / n as f64;
            }
        }
        if !loss.is_finite() {
            log::warn!("non-finite contrastive loss; step skipped");
            self.net.clear_tape();
            self.skipped_steps += 1;
            return Ok(PairLoss { loss, skipped: true });
        }
        self.net.backward(&Tensor::from_vec(out.shape(), grad)?)?;
        let mut params = self.net.params_mut();
        if let Err(e) = self.adam.update(&mut params) {
            log::warn!("embedder update aborted: {e}");
            self.skipped_steps += 1;
            return Ok(PairLoss { loss, skipped: true });
        }
        self.steps += 1;
        Ok(PairLoss { loss, skipped: false })
    }

    pub fn save_to(&self, ck: &mut Checkpoint, prefix: &str) {
        ck.push_network(&format!("{prefix}.net"), &self.net);
        ck.push_raw(format!("{prefix}.steps"), &[self.steps as f64]);
        push_adam(ck, &format!("{prefix}.adam"), &self.adam);
    }

    pub fn load_from(&mut self, ck: &Checkpoint, prefix: &str) -> Result<()> {
        ck.load_network(&format!("{prefix}.net"), &mut self.net)?;
        if let Some(t) = ck.get(&format!("{prefix}.steps")) {
            self.steps = t.values.first().copied().unwrap_or(0.0) as u64;
        }
        load_adam(ck, &format!("{prefix}.adam"), &mut self.adam)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> EmbedderNet {
        let cfg = EvaluatorConfig {
            augment: false,
            ..EvaluatorConfig::default()
        };
        EmbedderNet::new(cfg, 96, &mut ChaCha8Rng::seed_from_u64(5)).unwrap()
    }

    #[test]
    fn layer_stack_shape() {
        let specs = EmbedderNet::specs(96).unwrap();
        assert_eq!(Sequential::output_shape(&specs[..7], &[3, 96, 96]).unwrap(), vec![50, 4, 4]);
        assert_eq!(Sequential::output_shape(&specs, &[3, 96, 96]).unwrap(), vec![2]);
    }

    #[test]
    fn shared_weights_and_range() {
        let mut n = net();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data: Vec<f64> = (0..3 * 96 * 96).map(|_| rng.gen_range(0.0..1.0)).collect();
        let img = Tensor::from_vec(&[3, 96, 96], data).unwrap();
        let a = n.embed(&img).unwrap();
        let b = n.embed(&img).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn identical_similar_pairs_give_zero_loss_and_gradient() {
        let mut n = net();
        let img = Tensor::full(&[3, 96, 96], 0.5);
        let before = n.network().named_params().iter().map(|(_, t)| t.data().to_vec()).collect::<Vec<_>>();
        let pairs = [PairRef { a: &img, b: &img, y: 0 }; 3];
        let l = n.train_pairs(&pairs, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(l.loss, 0.0);
        for (_, t) in n.network().named_params() {
            assert!(t.grad().unwrap().iter().all(|&g| g == 0.0));
        }
        let after = n.network().named_params().iter().map(|(_, t)| t.data().to_vec()).collect::<Vec<_>>();
        assert_eq!(before, after);
    }

    #[test]
    fn mixed_batch_loss_is_mean_of_pairs() {
        let mut n = net();
        let a = Tensor::full(&[3, 96, 96], 0.2);
        let b = Tensor::full(&[3, 96, 96], 0.8);
        let ea = n.embed(&a).unwrap();
        let eb = n.embed(&b).unwrap();
        let expected = (super::super::contrastive_loss(&ea, &eb, 1, 1.0, Default::default())
            + super::super::contrastive_loss(&ea, &eb, 0, 1.0, Default::default()))
            / 2.0;
        let l = n
            .train_pairs(&[PairRef { a: &a, b: &b, y: 1 }, PairRef { a: &a, b: &b, y: 0 }], &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert!((l.loss - expected).abs() < 1e-12);
    }
}
