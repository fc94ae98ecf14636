//! Parameter container for the Map Encoder and FiLM layers.
//!
//! On disk a weight set is a directory holding one NPY file per parameter
//! plus an `index.json` naming each parameter and its shape, so any trainer
//! can produce or consume the set without knowing this crate.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::ArrayD;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::MapEncoderConfig;
use crate::error::{Error, Result};
use crate::io::npy::{read_npy, write_npy, Dtype, TensorFile};

#[derive(Clone, Debug, Default)]
pub struct WeightStore {
    params: BTreeMap<String, ArrayD<f32>>,
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    file: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Index {
    params: BTreeMap<String, IndexEntry>,
}

/// Expected parameter names and shapes for a config.
pub(crate) fn expected_shapes(cfg: &MapEncoderConfig) -> BTreeMap<String, Vec<usize>> {
    let mut out = BTreeMap::new();
    for (i, c) in cfg.conv_specs.iter().enumerate() {
        out.insert(
            format!("conv{i}.weight"),
            vec![c.out_ch, c.in_ch, c.kernel, c.kernel],
        );
        out.insert(format!("conv{i}.bias"), vec![c.out_ch]);
    }
    let c_in = cfg.conv_out_channels();
    let h = cfg.lstm_hidden;
    out.insert("lstm.w_ih".into(), vec![4 * h, c_in]);
    out.insert("lstm.w_hh".into(), vec![4 * h, h]);
    out.insert("lstm.b_ih".into(), vec![4 * h]);
    out.insert("lstm.b_hh".into(), vec![4 * h]);
    for (name, &(c_site, _, _)) in &cfg.site_shapes {
        out.insert(format!("site.{name}.proj.weight"), vec![c_site, h]);
        out.insert(format!("site.{name}.proj.bias"), vec![c_site]);
        out.insert(format!("site.{name}.film.weight"), vec![2 * c_site, c_site]);
        out.insert(format!("site.{name}.film.bias"), vec![2 * c_site]);
    }
    out
}

impl WeightStore {
    /// Zero-initialized weights: the whole control path becomes a no-op.
    pub fn zeros(cfg: &MapEncoderConfig) -> Self {
        let params = expected_shapes(cfg)
            .into_iter()
            .map(|(name, shape)| (name, ArrayD::zeros(shape)))
            .collect();
        Self { params }
    }

    /// Small random weights; for tests and shape exercises, not training.
    pub fn random(cfg: &MapEncoderConfig, seed: u64) -> Self {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let params = expected_shapes(cfg)
            .into_iter()
            .map(|(name, shape)| {
                let arr = ArrayD::from_shape_fn(shape, |_| rng.random_range(-0.2..0.2f32));
                (name, arr)
            })
            .collect();
        Self { params }
    }

    pub fn insert(&mut self, name: &str, value: ArrayD<f32>) {
        self.params.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Result<&ArrayD<f32>> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing weight {name}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    /// Every expected parameter must exist with exactly the expected shape.
    pub fn validate_against(&self, cfg: &MapEncoderConfig) -> Result<()> {
        for (name, shape) in expected_shapes(cfg) {
            let arr = self.get(&name)?;
            if arr.shape() != shape.as_slice() {
                return Err(Error::Config(format!(
                    "weight {name} has shape {:?}, expected {:?}",
                    arr.shape(),
                    shape
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut index = Index {
            params: BTreeMap::new(),
        };
        for (i, (name, arr)) in self.params.iter().enumerate() {
            let file = format!("p{i:04}.npy");
            let flat: Vec<f32> = arr.iter().copied().collect();
            let tf = TensorFile::from_f32(arr.shape().to_vec(), flat)?;
            write_npy(&tf, &dir.join(&file))?;
            index.params.insert(
                name.clone(),
                IndexEntry {
                    file,
                    shape: arr.shape().to_vec(),
                },
            );
        }
        let json = serde_json::to_string_pretty(&serde_json::to_value(&index).unwrap()).unwrap();
        crate::io::atomic_write(&dir.join("index.json"), format!("{json}\n").as_bytes())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join("index.json"))?;
        let index: Index = serde_json::from_str(&text)
            .map_err(|e| Error::Manifest(format!("weight index: {e}")))?;
        let mut params = BTreeMap::new();
        for (name, entry) in index.params {
            let tf = read_npy(&dir.join(&entry.file))?;
            if tf.dtype() != Dtype::F32 {
                return Err(Error::UnsupportedLayout(format!(
                    "weight {name} is {:?}, expected f32",
                    tf.dtype()
                )));
            }
            if tf.shape() != entry.shape.as_slice() {
                return Err(Error::Manifest(format!(
                    "weight {name}: index says {:?}, file says {:?}",
                    entry.shape,
                    tf.shape()
                )));
            }
            let arr = ArrayD::from_shape_vec(entry.shape.clone(), tf.to_f32_vec()?)
                .map_err(|e| Error::Manifest(format!("weight {name}: {e}")))?;
            params.insert(name, arr);
        }
        Ok(Self { params })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_cover_expected_shapes() {
        let cfg = MapEncoderConfig::reference();
        let w = WeightStore::zeros(&cfg);
        w.validate_against(&cfg).unwrap();
        assert!(w.get("lstm.w_ih").unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(
            w.get("site.video_down3.film.weight").unwrap().shape(),
            &[128, 64]
        );
    }

    #[test]
    fn save_load_roundtrip() {
        let cfg = MapEncoderConfig::reference();
        let w = WeightStore::random(&cfg, 3);
        let dir = tempfile::tempdir().unwrap();
        w.save(dir.path()).unwrap();
        let back = WeightStore::load(dir.path()).unwrap();
        back.validate_against(&cfg).unwrap();
        for name in w.names() {
            assert_eq!(w.get(name).unwrap(), back.get(name).unwrap(), "{name}");
        }
    }

    #[test]
    fn wrong_shape_detected() {
        let cfg = MapEncoderConfig::reference();
        let mut w = WeightStore::zeros(&cfg);
        w.insert("lstm.w_hh", ArrayD::zeros(vec![3, 3]));
        assert!(w.validate_against(&cfg).is_err());
    }
}
