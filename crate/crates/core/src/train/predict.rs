use std::path::Path;

use super::TrainError;
use crate::dataset::ClassSubset;
use crate::features::FeatureExtractor;
use crate::nn::{argmax, softmax, Model, Tensor};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Index into the model's class subset.
    pub class_index: usize,
    /// Dataset class id.
    pub class_id: u8,
    pub class_name: &'static str,
    pub probabilities: Vec<f64>,
}

/// Classifies one WAV file: full feature pipeline, eval forward, softmax.
pub fn predict<T: Scalar>(
    model: &Model<T>,
    subset: &ClassSubset,
    extractor: &FeatureExtractor<T>,
    path: &Path,
) -> Result<Prediction, TrainError> {
    if model.classes() != subset.len() {
        return Err(TrainError::SubsetMismatch { model: format!("{} classes", model.classes()), requested: subset.label() });
    }
    let feats = extractor.extract_features(path, None)?;
    let (c, m, f) = feats.shape();
    let x = Tensor::new(&[1, c, m, f], feats.into_data())?;
    let probs = softmax(&model.forward_eval(&x)?)?;
    let class_index = argmax(probs.data());
    Ok(Prediction {
        class_index,
        class_id: subset.class_id(class_index),
        class_name: subset.names()[class_index],
        probabilities: probs.data().iter().map(|p| p.to_f64().unwrap()).collect(),
    })
}
