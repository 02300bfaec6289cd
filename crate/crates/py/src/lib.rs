//! Python bindings: networks, datasets, MC-dropout statistics, the fusion
//! law and the headless closed-loop simulator.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use steer_core::mc::{mc_estimate, mean_uncertainty_error};
use steer_core::pa::run_closed_loop;
use steer_core::synth::{generate_track, load_dataset, save_dataset, GeneratorConfig, ImageConfig, TrackConfig};
use steer_core::{
    fuse as core_fuse, DropoutKind, Error, FusionConfig, HumanSource, McConfig, Mode, NetworkConfig, ScriptedHuman,
    SimConfig, Tensor, TrainConfig,
};

fn err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Corrupt { .. } | Error::VersionMismatch { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn kind(name: &str) -> PyResult<DropoutKind> {
    name.parse().map_err(|_| PyValueError::new_err(format!("unknown dropout kind `{name}`")))
}

/// Synthetic labelled camera frames.
#[pyclass(module = "steer")]
struct Dataset {
    inner: steer_core::Dataset,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    #[pyo3(signature = (seed, tracks, samples_per_track, height=56, width=96))]
    fn generate(seed: u64, tracks: usize, samples_per_track: usize, height: usize, width: usize) -> PyResult<Self> {
        let gen = GeneratorConfig {
            seed,
            tracks,
            samples_per_track,
            track: TrackConfig::default(),
            image: ImageConfig {
                height,
                width,
                ..ImageConfig::default()
            },
        };
        Ok(Self {
            inner: gen.generate().map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: load_dataset(path).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_dataset(path, &self.inner).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn image_shape(&self) -> [usize; 3] {
        self.inner.manifest.image_shape
    }

    fn labels(&self) -> Vec<f64> {
        self.inner.frames.iter().map(|f| f.label).collect()
    }

    /// Flat row-major pixels of frame `i`.
    fn image(&self, i: usize) -> PyResult<Vec<f64>> {
        self.inner
            .frames
            .get(i)
            .map(|f| f.image.data().to_vec())
            .ok_or_else(|| PyValueError::new_err(format!("frame {i} out of range")))
    }
}

/// The steering CNN with its label scaler.
#[pyclass(module = "steer")]
struct Network {
    inner: steer_core::Network,
}

impl Network {
    fn tensor(&self, pixels: Vec<f64>) -> PyResult<Tensor> {
        Tensor::new(self.inner.config.input.to_vec(), pixels).map_err(err)
    }
}

#[pymethods]
impl Network {
    #[new]
    #[pyo3(signature = (seed=0, dropout="spatial", height=56, width=96))]
    fn new(seed: u64, dropout: &str, height: usize, width: usize) -> PyResult<Self> {
        let config = NetworkConfig {
            input: [1, height, width],
            conv_dropout: kind(dropout)?,
            ..NetworkConfig::default()
        };
        Ok(Self {
            inner: steer_core::Network::build(config, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: steer_core::Network::load(path).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[getter]
    fn input_shape(&self) -> [usize; 3] {
        self.inner.config.input
    }

    #[getter]
    fn dropout(&self) -> String {
        self.inner.config.conv_dropout.to_string()
    }

    #[getter]
    fn epochs_completed(&self) -> usize {
        self.inner.epochs_completed
    }

    /// Trains in place; returns the per-epoch training MSE, epoch 0 first
    /// on a fresh network.
    #[pyo3(signature = (data, epochs, seed=0, learning_rate=None, batch_size=None))]
    fn train(
        &mut self,
        data: &Dataset,
        epochs: usize,
        seed: u64,
        learning_rate: Option<f64>,
        batch_size: Option<usize>,
    ) -> PyResult<Vec<f64>> {
        let d = TrainConfig::default();
        let tc = TrainConfig {
            learning_rate: learning_rate.unwrap_or(d.learning_rate),
            batch_size: batch_size.unwrap_or(d.batch_size),
            epochs,
            seed,
            conv_dropout: self.inner.config.conv_dropout,
            ..d
        };
        self.inner.camera = data.inner.manifest.image.clone();
        let log = self.inner.train(&data.inner.frames, &[], &tc).map_err(err)?;
        Ok(log.epochs.iter().map(|e| e.train_mse).collect())
    }

    /// Deterministic prediction in curvature units.
    fn predict(&self, pixels: Vec<f64>) -> PyResult<f64> {
        self.inner.predict(&self.tensor(pixels)?, Mode::Deterministic).map_err(err)
    }

    /// `(mean, variance, samples)` in standardized label units.
    #[pyo3(signature = (pixels, passes=20, seed=0))]
    fn mc(&self, pixels: Vec<f64>, passes: usize, seed: u64) -> PyResult<(f64, f64, Vec<f64>)> {
        let mc = McConfig {
            passes,
            seed,
            ..McConfig::default()
        };
        let est = mc_estimate(&self.inner, &self.tensor(pixels)?, 0, &mc).map_err(err)?;
        Ok((est.mean, est.variance, est.samples))
    }

    /// MUE over a dataset, in curvature units.
    #[pyo3(signature = (data, passes=20, seed=0))]
    fn mue(&self, data: &Dataset, passes: usize, seed: u64) -> PyResult<f64> {
        let mc = McConfig {
            passes,
            seed,
            ..McConfig::default()
        };
        let (mut truths, mut means, mut vars) = (Vec::new(), Vec::new(), Vec::new());
        for f in &data.inner.frames {
            let est = mc_estimate(&self.inner, &f.image, f.pose_id, &mc).map_err(err)?;
            truths.push(f.label);
            means.push(self.inner.scaler.unscale(est.mean));
            vars.push(self.inner.scaler.unscale_variance(est.variance));
        }
        mean_uncertainty_error(&truths, &means, &vars, mc.variance_floor).map_err(err)
    }

    /// Headless closed-loop run; returns per-tick dicts.
    #[pyo3(signature = (track_seed=0, kappa=1.0, passes=20, human="none", ticks=200))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        track_seed: u64,
        kappa: f64,
        passes: usize,
        human: &str,
        ticks: u64,
    ) -> PyResult<Vec<Bound<'py, pyo3::types::PyDict>>> {
        let human = match human {
            "none" => HumanSource::None,
            name => HumanSource::Scripted(ScriptedHuman::parse(name).map_err(err)?),
        };
        let track = generate_track(track_seed, &TrackConfig::default()).map_err(err)?;
        let mc = McConfig {
            passes,
            seed: track_seed,
            ..McConfig::default()
        };
        let out = run_closed_loop(
            &self.inner,
            &track,
            &human,
            FusionConfig::with_gain(kappa),
            mc,
            SimConfig::default(),
            self.inner.camera.clone(),
            ticks,
        )
        .map_err(err)?;
        out.records
            .iter()
            .map(|r| {
                let d = pyo3::types::PyDict::new(py);
                d.set_item("tick", r.tick)?;
                d.set_item("u_N", r.u_n)?;
                d.set_item("u_H", r.u_h)?;
                d.set_item("u_PA", r.u_pa)?;
                d.set_item("sigma", r.sigma)?;
                d.set_item("variance", r.variance)?;
                d.set_item("cross_track", r.cross_track)?;
                Ok(d)
            })
            .collect()
    }
}

#[pyfunction]
fn predictive_mean(samples: Vec<f64>) -> PyResult<f64> {
    steer_core::predictive_mean(&samples).map_err(err)
}

#[pyfunction]
fn predictive_variance(samples: Vec<f64>) -> PyResult<f64> {
    steer_core::predictive_variance(&samples).map_err(err)
}

/// Returns `(sigma, u_PA)`.
#[pyfunction]
#[pyo3(signature = (u_n, u_h, variance, kappa=1.0))]
fn fuse(u_n: f64, u_h: f64, variance: f64, kappa: f64) -> PyResult<(f64, f64)> {
    let f = core_fuse(u_n, u_h, variance, &FusionConfig::with_gain(kappa)).map_err(err)?;
    Ok((f.sigma, f.u_pa))
}

#[pymodule]
fn steer(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Network>()?;
    m.add_function(wrap_pyfunction!(predictive_mean, m)?)?;
    m.add_function(wrap_pyfunction!(predictive_variance, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    Ok(())
}
