//! Per-modality encoders producing `d`-dimensional unimodal embeddings.
//!
//! Inputs are fixed-length feature vectors. Sequence inputs would plug in
//! behind the same `encode` contract.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::numerics::{Activation, Mlp, MlpCache, Parameterized};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModalityId(pub usize);

impl ModalityId {
    pub fn index(self) -> usize {
        self.0
    }

    /// Acoustic, visual and language for the three-modality setting.
    pub fn name(self, k: usize) -> String {
        match (k, self.0) {
            (3, 0) => "acoustic".into(),
            (3, 1) => "visual".into(),
            (3, 2) => "language".into(),
            (_, i) => format!("m{i}"),
        }
    }
}

impl fmt::Display for ModalityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnimodalEncoder {
    modality: ModalityId,
    network: Mlp,
}

impl UnimodalEncoder {
    pub fn init<R: Rng + ?Sized>(
        modality: ModalityId,
        input_width: usize,
        hidden: &[usize],
        embedding_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input_width);
        widths.extend_from_slice(hidden);
        widths.push(embedding_dim);
        Ok(Self { modality, network: Mlp::init(&widths, activation, rng)? })
    }

    pub fn from_network(modality: ModalityId, network: Mlp) -> Self {
        Self { modality, network }
    }

    pub fn modality(&self) -> ModalityId {
        self.modality
    }

    pub fn network(&self) -> &Mlp {
        &self.network
    }

    pub fn input_width(&self) -> usize {
        self.network.input_width()
    }

    pub fn embedding_dim(&self) -> usize {
        self.network.output_width()
    }

    fn check(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.input_width() {
            return Err(config_err!(
                "modality {} expects {} features, got {}",
                self.modality,
                self.input_width(),
                features.len()
            ));
        }
        Ok(())
    }

    pub fn encode(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check(features)?;
        self.network.predict(features)
    }

    pub fn encode_with_cache(&self, features: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        self.check(features)?;
        self.network.forward(features)
    }

    /// Accumulates parameter gradients for one sample into `grads`.
    pub fn backward_into(&self, cache: &MlpCache, embedding_grad: &[f64], grads: &mut UnimodalEncoder) -> Result<()> {
        if grads.modality != self.modality {
            return Err(Error::Internal(format!(
                "gradient buffer for modality {} used with encoder {}",
                grads.modality, self.modality
            )));
        }
        self.network.backward_into(cache, embedding_grad, &mut grads.network).map(|_| ())
    }

    pub fn zeros_like(&self) -> Self {
        Self { modality: self.modality, network: self.network.zeros_like() }
    }
}

impl Parameterized for UnimodalEncoder {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        self.network.collect(prefix, out);
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        self.network.collect_mut(prefix, out);
    }
}

/// Every encoder must emit the same embedding width.
pub fn check_shared_dim(encoders: &[UnimodalEncoder]) -> Result<usize> {
    let d = encoders.first().map(|e| e.embedding_dim()).ok_or_else(|| config_err!("no encoders"))?;
    if let Some(e) = encoders.iter().find(|e| e.embedding_dim() != d) {
        return Err(config_err!(
            "modality {} emits width {}, others emit {d}",
            e.modality(),
            e.embedding_dim()
        ));
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Linear, Tensor2};
    use crate::rng::{stream, Stream};
    use alloc::vec;

    #[test]
    fn zero_encoder_gives_zero_embedding() {
        let net = Mlp::zeros(&[5, 4, 3], Activation::Relu).unwrap();
        let enc = UnimodalEncoder::from_network(ModalityId(1), net);
        assert_eq!(enc.encode(&[1.0, -2.0, 3.0, 0.5, 9.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn identity_encoder_passes_input_through() {
        let layer = Linear::new(Tensor2::identity(3), vec![0.0; 3]).unwrap();
        let enc = UnimodalEncoder::from_network(ModalityId(0), Mlp::from_layers(vec![layer], Activation::Relu).unwrap());
        assert_eq!(enc.encode(&[0.25, -1.0, 7.0]).unwrap(), vec![0.25, -1.0, 7.0]);
    }

    #[test]
    fn seeded_two_layer_matches_scripted_forward() {
        let mut rng = stream(21, Stream::Init);
        let enc = UnimodalEncoder::init(ModalityId(2), 3, &[4], 2, Activation::Relu, &mut rng).unwrap();
        let x = [1.0, 0.5, -0.25];
        let layers = enc.network().layers();
        let hidden: Vec<f64> = (0..4)
            .map(|r| {
                let v = layers[0].bias[r] + (0..3).map(|c| layers[0].weight.get(r, c) * x[c]).sum::<f64>();
                if v > 0.0 { v } else { 0.0 }
            })
            .collect();
        let expected: Vec<f64> = (0..2)
            .map(|r| layers[1].bias[r] + (0..4).map(|c| layers[1].weight.get(r, c) * hidden[c]).sum::<f64>())
            .collect();
        assert_eq!(enc.encode(&x).unwrap(), expected);
        assert_eq!(enc.embedding_dim(), 2);
    }

    #[test]
    fn width_mismatch_names_modality() {
        let mut rng = stream(1, Stream::Init);
        let enc = UnimodalEncoder::init(ModalityId(2), 3, &[], 2, Activation::Relu, &mut rng).unwrap();
        match enc.encode(&[1.0]) {
            Err(Error::Config(msg)) => assert!(msg.contains("modality 2"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn shared_dim_is_enforced() {
        let mut rng = stream(1, Stream::Init);
        let a = UnimodalEncoder::init(ModalityId(0), 3, &[], 4, Activation::Relu, &mut rng).unwrap();
        let b = UnimodalEncoder::init(ModalityId(1), 5, &[6], 4, Activation::Relu, &mut rng).unwrap();
        let c = UnimodalEncoder::init(ModalityId(2), 5, &[6], 3, Activation::Relu, &mut rng).unwrap();
        assert_eq!(check_shared_dim(&[a.clone(), b.clone()]).unwrap(), 4);
        assert!(check_shared_dim(&[a, b, c]).is_err());
    }
}
