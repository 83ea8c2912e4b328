use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Dense, LstmLayer, Mlp, MlpModel, Normalizer, OutputActivation, RecurrentModel, RecurrentNet};
use crate::error::{Error, Result};

pub const WEIGHT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    fn new(shape: Vec<usize>, data: &[f64]) -> Self {
        Tensor {
            shape,
            data: data.to_vec(),
        }
    }
}

/// Serialized network: named flat tensors plus whatever is needed to rebuild them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightDoc {
    pub version: u32,
    pub architecture: String,
    pub config: Value,
    pub tensors: BTreeMap<String, Tensor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalizer: Option<Normalizer>,
}

impl WeightDoc {
    fn check(&self, architecture: &str) -> Result<()> {
        if self.version != WEIGHT_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "weight format version {} (expected {WEIGHT_FORMAT_VERSION})",
                self.version
            )));
        }
        if self.architecture != architecture {
            return Err(Error::Config(format!(
                "weights are for `{}`, expected `{architecture}`",
                self.architecture
            )));
        }
        Ok(())
    }

    fn take(&mut self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let t = self
            .tensors
            .remove(name)
            .ok_or_else(|| Error::Config(format!("missing tensor `{name}`")))?;
        if t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!(
                "tensor `{name}` has shape {:?}, expected {shape:?}",
                t.shape
            )));
        }
        Ok(t.data)
    }

    fn finish(self) -> Result<()> {
        match self.tensors.keys().next() {
            Some(extra) => Err(Error::Config(format!("unexpected tensor `{extra}`"))),
            None => Ok(()),
        }
    }
}

impl From<&Mlp> for WeightDoc {
    fn from(net: &Mlp) -> Self {
        let mut tensors = BTreeMap::new();
        for (i, l) in net.layers.iter().enumerate() {
            tensors.insert(format!("dense{i}.weight"), Tensor::new(vec![l.outputs, l.inputs], &l.weight));
            tensors.insert(format!("dense{i}.bias"), Tensor::new(vec![l.outputs], &l.bias));
        }
        WeightDoc {
            version: WEIGHT_FORMAT_VERSION,
            architecture: "mlp".into(),
            config: json!({ "layer_sizes": net.layer_sizes(), "output": net.output }),
            tensors,
            normalizer: None,
        }
    }
}

impl TryFrom<WeightDoc> for Mlp {
    type Error = Error;

    fn try_from(mut doc: WeightDoc) -> Result<Self> {
        doc.check("mlp")?;
        let sizes: Vec<usize> = serde_json::from_value(doc.config["layer_sizes"].clone())?;
        let output: OutputActivation = serde_json::from_value(doc.config["output"].clone())?;
        let mut net = Mlp::zeros(&sizes, output)?;
        for (i, l) in net.layers.iter_mut().enumerate() {
            l.weight = doc.take(&format!("dense{i}.weight"), &[l.outputs, l.inputs])?;
            l.bias = doc.take(&format!("dense{i}.bias"), &[l.outputs])?;
        }
        doc.finish()?;
        Ok(net)
    }
}

impl From<MlpModel> for WeightDoc {
    fn from(m: MlpModel) -> Self {
        WeightDoc {
            normalizer: Some(m.normalizer),
            ..WeightDoc::from(&m.net)
        }
    }
}

impl TryFrom<WeightDoc> for MlpModel {
    type Error = Error;

    fn try_from(mut doc: WeightDoc) -> Result<Self> {
        let normalizer = doc
            .normalizer
            .take()
            .ok_or_else(|| Error::Config("mlp weights lack a normalizer".into()))?;
        MlpModel::new(Mlp::try_from(doc)?, normalizer)
    }
}

impl From<RecurrentModel> for WeightDoc {
    fn from(m: RecurrentModel) -> Self {
        let net = &m.net;
        let mut tensors = BTreeMap::new();
        for (i, l) in net.layers.iter().enumerate() {
            let h4 = 4 * l.hidden_size;
            tensors.insert(format!("lstm{i}.w_input"), Tensor::new(vec![h4, l.input_size], &l.w_input));
            tensors.insert(format!("lstm{i}.w_hidden"), Tensor::new(vec![h4, l.hidden_size], &l.w_hidden));
            tensors.insert(format!("lstm{i}.bias"), Tensor::new(vec![h4], &l.bias));
        }
        tensors.insert("head.weight".into(), Tensor::new(vec![1, net.head.inputs], &net.head.weight));
        tensors.insert("head.bias".into(), Tensor::new(vec![1], &net.head.bias));
        WeightDoc {
            version: WEIGHT_FORMAT_VERSION,
            architecture: "recurrent".into(),
            config: json!({
                "input_size": net.input_size(),
                "hidden_size": net.hidden_size(),
                "num_layers": net.layers.len(),
                "dropout_prob": net.dropout_prob,
                "window_steps": m.window_steps,
            }),
            tensors,
            normalizer: Some(m.normalizer),
        }
    }
}

impl TryFrom<WeightDoc> for RecurrentModel {
    type Error = Error;

    fn try_from(mut doc: WeightDoc) -> Result<Self> {
        doc.check("recurrent")?;
        let get = |k: &str| -> Result<usize> {
            doc.config[k]
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| Error::Config(format!("recurrent config lacks `{k}`")))
        };
        let (input, hidden, layers, window) = (
            get("input_size")?,
            get("hidden_size")?,
            get("num_layers")?,
            get("window_steps")?,
        );
        let dropout = doc.config["dropout_prob"].as_f64().unwrap_or(0.0);
        let mut net = RecurrentNet::zeros(input, hidden, layers, dropout)?;
        for (i, l) in net.layers.iter_mut().enumerate() {
            let h4 = 4 * l.hidden_size;
            *l = LstmLayer {
                w_input: doc.take(&format!("lstm{i}.w_input"), &[h4, l.input_size])?,
                w_hidden: doc.take(&format!("lstm{i}.w_hidden"), &[h4, l.hidden_size])?,
                bias: doc.take(&format!("lstm{i}.bias"), &[h4])?,
                ..*l
            };
        }
        net.head = Dense {
            inputs: hidden,
            outputs: 1,
            weight: doc.take("head.weight", &[1, hidden])?,
            bias: doc.take("head.bias", &[1])?,
        };
        let normalizer = doc
            .normalizer
            .take()
            .ok_or_else(|| Error::Config("recurrent weights lack a normalizer".into()))?;
        doc.finish()?;
        RecurrentModel::new(net, window, normalizer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::ModelHandle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn norm() -> Normalizer {
        Normalizer {
            mean: vec![20.0, 10.0, 0.0],
            std: vec![5.0, 3.0, 1.0],
        }
    }

    #[test]
    fn mlp_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::random(&[3, 7, 5, 1], OutputActivation::Linear, &mut rng).unwrap();
        let m = ModelHandle::Mlp(MlpModel::new(net, norm()).unwrap());
        let text = serde_json::to_string(&m).unwrap();
        let back: ModelHandle = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }

    #[test]
    fn recurrent_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = RecurrentNet::random(3, 6, 2, 0.1, &mut rng).unwrap();
        let m = ModelHandle::Recurrent(RecurrentModel::new(net, 10, norm()).unwrap());
        let text = serde_json::to_string_pretty(&m).unwrap();
        let back: ModelHandle = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn version_and_shape_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::random(&[3, 4, 1], OutputActivation::Linear, &mut rng).unwrap();
        let mut doc = WeightDoc::from(&net);
        doc.version = 99;
        assert!(Mlp::try_from(doc).is_err());
        let mut doc = WeightDoc::from(&net);
        doc.tensors.get_mut("dense0.weight").unwrap().shape = vec![3, 4];
        assert!(matches!(Mlp::try_from(doc), Err(Error::ShapeMismatch(_))));
    }
}
