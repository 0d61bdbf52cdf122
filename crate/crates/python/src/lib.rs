//! Python bindings: environments, POMDP wrappers, replay, agents, training,
//! evaluation protocols and checkpoints.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyFloat, PyList, PyString};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use lstm_td3_core::agent::{Ablation, Agent, AgentConfig, NetworkWidths, Variant};
use lstm_td3_core::env::{Env, EnvKind};
use lstm_td3_core::harness::{
    self, emit_curves, evaluate_agent, load_checkpoint, save_checkpoint, CheckpointMeta,
    TrainSettings,
};
use lstm_td3_core::pomdp::{PomdpConfig, PomdpEnv, PomdpVersion};
use lstm_td3_core::replay::{self, HistoryWindow, Transition};

create_exception!(lstm_td3, LstmTd3Error, PyException);

fn err(e: lstm_td3_core::Error) -> PyErr {
    LstmTd3Error::new_err(e.to_string())
}

fn parse<T: std::str::FromStr<Err = lstm_td3_core::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

fn json_to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any().unbind(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any().unbind(),
            None => PyFloat::new(py, n.as_f64().unwrap_or(f64::NAN))
                .into_any()
                .unbind(),
        },
        Value::String(s) => PyString::new(py, s).into_any().unbind(),
        Value::Array(xs) => {
            let list = PyList::empty(py);
            for x in xs {
                list.append(json_to_py(py, x)?)?;
            }
            list.into_any().unbind()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, x) in map {
                dict.set_item(k, json_to_py(py, x)?)?;
            }
            dict.into_any().unbind()
        }
    })
}

/// Serializes `rows` through JSON; non-finite floats become `nan`.
fn rows_to_py<T: serde::Serialize>(py: Python<'_>, rows: &[T]) -> PyResult<Py<PyAny>> {
    let list = PyList::empty(py);
    for r in rows {
        let v = serde_json::to_value(r).map_err(|e| LstmTd3Error::new_err(e.to_string()))?;
        list.append(json_to_py(py, &v)?)?;
    }
    Ok(list.into_any().unbind())
}

fn py_to_json(v: &Bound<'_, PyAny>) -> PyResult<Value> {
    if v.is_instance_of::<PyBool>() {
        return Ok(Value::Bool(v.extract()?));
    }
    if let Ok(i) = v.extract::<i64>() {
        return Ok(Value::from(i));
    }
    if let Ok(f) = v.extract::<f64>() {
        return Ok(Value::from(f));
    }
    if let Ok(s) = v.extract::<String>() {
        return Ok(Value::String(s));
    }
    if let Ok(xs) = v.extract::<Vec<Bound<'_, PyAny>>>() {
        return xs
            .iter()
            .map(py_to_json)
            .collect::<PyResult<Vec<_>>>()
            .map(Value::Array);
    }
    Err(LstmTd3Error::new_err(format!(
        "unsupported setting value {v}"
    )))
}

fn pomdp_config(
    version: &str,
    p_flk: f64,
    sigma_rn: f64,
    p_rsm: f64,
    seed: u64,
) -> PyResult<PomdpConfig> {
    Ok(PomdpConfig {
        version: parse::<PomdpVersion>(version)?,
        p_flk,
        sigma_rn,
        p_rsm,
        rng_seed: seed,
    })
}

fn window(
    len: usize,
    obs_dim: usize,
    act_dim: usize,
    pairs: Option<Vec<(Vec<f64>, Vec<f64>)>>,
) -> HistoryWindow {
    let pairs = pairs.unwrap_or_default();
    HistoryWindow::from_pairs(
        len,
        obs_dim,
        act_dim,
        pairs.iter().map(|(o, a)| (o.as_slice(), a.as_slice())),
    )
}

/// A pendulum or point-mass task seen through an observation corruption.
#[pyclass(name = "Env", unsendable)]
struct PyEnv {
    inner: PomdpEnv,
}

#[pymethods]
impl PyEnv {
    #[new]
    #[pyo3(signature = (name, pomdp = "mdp", p_flk = 0.2, sigma_rn = 0.1, p_rsm = 0.1, seed = 0))]
    fn new(
        name: &str,
        pomdp: &str,
        p_flk: f64,
        sigma_rn: f64,
        p_rsm: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let kind: EnvKind = parse(name)?;
        let cfg = pomdp_config(pomdp, p_flk, sigma_rn, p_rsm, seed)?;
        Ok(Self {
            inner: PomdpEnv::new(kind.make(), cfg).map_err(err)?,
        })
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.inner.reset(seed)
    }

    /// Returns `(observation, reward, done, terminal)`.
    fn step(&mut self, action: Vec<f64>) -> PyResult<(Vec<f64>, f64, bool, bool)> {
        let r = self.inner.step(&action).map_err(err)?;
        Ok((r.observation, r.reward, r.done, r.terminal))
    }

    #[getter]
    fn obs_dim(&self) -> usize {
        self.inner.spec().obs_dim
    }

    #[getter]
    fn act_dim(&self) -> usize {
        self.inner.spec().act_dim
    }

    #[getter]
    fn act_limit(&self) -> f64 {
        self.inner.spec().act_limit
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.spec().horizon
    }
}

#[pyclass(name = "ReplayBuffer")]
struct PyReplayBuffer {
    inner: replay::ReplayBuffer,
    rng: ChaCha8Rng,
}

#[pymethods]
impl PyReplayBuffer {
    #[new]
    #[pyo3(signature = (capacity, obs_dim, act_dim, seed = 0))]
    fn new(capacity: usize, obs_dim: usize, act_dim: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: replay::ReplayBuffer::new(capacity, obs_dim, act_dim).map_err(err)?,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// `step_in_episode` counts from 1.
    #[allow(clippy::too_many_arguments)]
    fn store(
        &mut self,
        obs: Vec<f64>,
        act: Vec<f64>,
        reward: f64,
        next_obs: Vec<f64>,
        done: bool,
        episode_id: u64,
        step_in_episode: usize,
    ) -> PyResult<()> {
        self.inner
            .store(Transition {
                obs,
                act,
                reward,
                next_obs,
                done,
                episode_id,
                step_in_episode,
            })
            .map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// `(obs_rows, act_rows, valid_len)` of the window preceding `index`.
    fn history_at(
        &self,
        index: usize,
        length: usize,
    ) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>, usize)> {
        if index >= self.inner.len() {
            return Err(LstmTd3Error::new_err(format!("index {index} out of range")));
        }
        let w = self.inner.history_at(index, length);
        let rows = 0..w.rows();
        Ok((
            rows.clone().map(|i| w.obs_row(i).to_vec()).collect(),
            rows.map(|i| w.act_row(i).to_vec()).collect(),
            w.valid_len(),
        ))
    }

    /// Sampled indices with rewards, done flags and window valid lengths.
    fn sample_batch(&mut self, py: Python<'_>, n: usize, length: usize) -> PyResult<Py<PyAny>> {
        let b = self
            .inner
            .sample_batch(n, length, &mut self.rng)
            .map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("indices", b.indices)?;
        d.set_item("reward", b.reward)?;
        d.set_item("done", b.done)?;
        d.set_item("valid_len", b.current.valid_len.clone())?;
        d.set_item("next_valid_len", b.next.valid_len.clone())?;
        d.set_item("obs", b.current.obs.into_data())?;
        d.set_item("act", b.act.into_data())?;
        Ok(d.into_any().unbind())
    }
}

#[pyclass(name = "Agent")]
struct PyAgent {
    inner: Agent,
    rng: ChaCha8Rng,
}

#[pymethods]
impl PyAgent {
    #[new]
    #[pyo3(signature = (
        algo, env = "pendulum", pomdp = "mdp", history_len = None, seed = 0,
        no_dc = false, no_tps = false, no_cfe = false, no_pa = false, width = None,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        algo: &str,
        env: &str,
        pomdp: &str,
        history_len: Option<usize>,
        seed: u64,
        no_dc: bool,
        no_tps: bool,
        no_cfe: bool,
        no_pa: bool,
        width: Option<usize>,
    ) -> PyResult<Self> {
        let mut cfg = AgentConfig::new(parse::<Variant>(algo)?);
        if let Some(l) = history_len {
            cfg.history_len = l;
        }
        for (off, ablation) in [
            (no_dc, Ablation::Dc),
            (no_tps, Ablation::Tps),
            (no_cfe, Ablation::Cfe),
            (no_pa, Ablation::Pa),
        ] {
            if off {
                cfg = cfg.without(ablation);
            }
        }
        if let Some(w) = width {
            cfg.widths = NetworkWidths::uniform(w);
        }
        let kind: EnvKind = parse(env)?;
        let spec = PomdpConfig::new(parse(pomdp)?)
            .wrapped_spec(&kind.make().spec())
            .map_err(err)?;
        Ok(Self {
            inner: Agent::build(cfg, &spec, seed).map_err(err)?,
            rng: lstm_td3_core::rng::stream(seed, lstm_td3_core::rng::RngStream::Replay),
        })
    }

    /// Loads an agent from a checkpoint file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (inner, meta) = load_checkpoint(&path).map_err(err)?;
        let rng = meta
            .rng_states
            .get("replay")
            .cloned()
            .unwrap_or_else(|| ChaCha8Rng::seed_from_u64(meta.seed.unwrap_or(0)));
        Ok(Self { inner, rng })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&self.inner, &CheckpointMeta::default(), &path).map_err(err)
    }

    #[getter]
    fn variant(&self) -> String {
        self.inner.config().variant.to_string()
    }

    #[getter]
    fn history_len(&self) -> usize {
        self.inner.config().history_len
    }

    #[getter]
    fn num_critics(&self) -> usize {
        self.inner.num_critics()
    }

    #[getter]
    fn target_noise_std(&self) -> f64 {
        self.inner.target_noise_std()
    }

    /// Scalar count per network, keyed `actor`, `critic1`, ...
    fn num_params(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let d = PyDict::new(py);
        for (name, net) in self.inner.named_networks() {
            d.set_item(name, net.num_params())?;
        }
        Ok(d.into_any().unbind())
    }

    /// Greedy action for `obs` after the `(obs, act)` pairs in `history`.
    #[pyo3(signature = (obs, history = None))]
    fn act(&self, obs: Vec<f64>, history: Option<Vec<(Vec<f64>, Vec<f64>)>>) -> PyResult<Vec<f64>> {
        let spec = self.inner.spec();
        let w = window(
            self.inner.config().history_len,
            spec.obs_dim,
            spec.act_dim,
            history,
        );
        Ok(self.inner.act_with_stats(&obs, &w).map_err(err)?.action)
    }

    /// Greedy action plus `Q1` and memory features.
    #[pyo3(signature = (obs, history = None))]
    fn act_with_stats(
        &self,
        py: Python<'_>,
        obs: Vec<f64>,
        history: Option<Vec<(Vec<f64>, Vec<f64>)>>,
    ) -> PyResult<Py<PyAny>> {
        let spec = self.inner.spec();
        let w = window(
            self.inner.config().history_len,
            spec.obs_dim,
            spec.act_dim,
            history,
        );
        let s = self.inner.act_with_stats(&obs, &w).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("action", s.action)?;
        d.set_item("q1", s.q1)?;
        d.set_item("actor_memory", s.actor_memory)?;
        d.set_item("critic_memory", s.critic_memory)?;
        Ok(d.into_any().unbind())
    }

    /// One training step on a minibatch from `buffer`; returns
    /// `(critic_loss, actor_objective or None)`.
    fn update(&mut self, buffer: &PyReplayBuffer) -> PyResult<(f64, Option<f64>)> {
        let cfg = self.inner.config();
        let batch = buffer
            .inner
            .sample_batch(cfg.batch_size, cfg.history_len, &mut self.rng)
            .map_err(err)?;
        let s = self.inner.train_step(&batch, &mut self.rng).map_err(err)?;
        Ok((s.critic_loss, s.actor_objective))
    }

    /// Mean evaluation return under the agent's own history length.
    #[pyo3(signature = (env = "pendulum", pomdp = "mdp", episodes = 10, seed = 0))]
    fn evaluate(&self, env: &str, pomdp: &str, episodes: usize, seed: u64) -> PyResult<(f64, f64)> {
        let r = evaluate_agent(
            &self.inner,
            parse(env)?,
            &PomdpConfig::new(parse(pomdp)?),
            episodes,
            seed,
            self.inner.config().history_len,
        )
        .map_err(err)?;
        Ok((r.mean_return, r.std_return))
    }
}

/// Trains every configured seed. Settings use the command-line names with
/// `_` or `-`; a config file path may supply defaults.
#[pyfunction]
#[pyo3(signature = (config = None, **settings))]
fn train(
    py: Python<'_>,
    config: Option<PathBuf>,
    settings: Option<&Bound<'_, PyDict>>,
) -> PyResult<Py<PyAny>> {
    let mut map = serde_json::Map::new();
    if let Some(s) = settings {
        for (k, v) in s.iter() {
            map.insert(k.extract::<String>()?.replace('_', "-"), py_to_json(&v)?);
        }
    }
    let over: TrainSettings = serde_json::from_value(Value::Object(map))
        .map_err(|e| LstmTd3Error::new_err(e.to_string()))?;
    let base = match config {
        Some(p) => TrainSettings::from_file(&p).map_err(err)?,
        None => TrainSettings::default(),
    };
    let run = base.overlaid_with(over).to_run_config().map_err(err)?;
    let outcomes = py.detach(|| harness::run_training(&run)).map_err(err)?;
    let list = PyList::empty(py);
    for o in outcomes {
        let d = PyDict::new(py);
        d.set_item("seed", o.seed)?;
        d.set_item("dir", o.dir.display().to_string())?;
        d.set_item("checkpoint", o.checkpoint_path().display().to_string())?;
        d.set_item("metrics", rows_to_py(py, &o.metrics)?)?;
        list.append(d)?;
    }
    Ok(list.into_any().unbind())
}

#[pyfunction]
#[pyo3(signature = (checkpoint, pomdp = None, p_flk = 0.2, sigma_rn = 0.1, p_rsm = 0.1, episodes = 10, seed = 0, history_len = None))]
#[allow(clippy::too_many_arguments)]
fn evaluate(
    py: Python<'_>,
    checkpoint: PathBuf,
    pomdp: Option<&str>,
    p_flk: f64,
    sigma_rn: f64,
    p_rsm: f64,
    episodes: usize,
    seed: u64,
    history_len: Option<usize>,
) -> PyResult<Py<PyAny>> {
    let (agent, meta) = load_checkpoint(&checkpoint).map_err(err)?;
    let env = meta.env.unwrap_or(EnvKind::Pendulum);
    let cfg = match pomdp {
        Some(v) => pomdp_config(v, p_flk, sigma_rn, p_rsm, 0)?,
        None => meta.pomdp.clone().unwrap_or_default(),
    };
    let l = history_len.unwrap_or(agent.config().history_len);
    let r = py
        .detach(|| evaluate_agent(&agent, env, &cfg, episodes, seed, l))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("mean_return", r.mean_return)?;
    d.set_item("std_return", r.std_return)?;
    d.set_item("avg_q1", r.avg_q1)?;
    d.set_item("episode_returns", r.episode_returns)?;
    Ok(d.into_any().unbind())
}

#[pyfunction]
#[pyo3(signature = (checkpoints, eval_pomdps = vec!["mdp".to_string(), "flk".into(), "rn".into(), "rsm".into()], p_flk = 0.2, sigma_rn = 0.1, p_rsm = 0.1, episodes = 10, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn cross_evaluate(
    py: Python<'_>,
    checkpoints: Vec<PathBuf>,
    eval_pomdps: Vec<String>,
    p_flk: f64,
    sigma_rn: f64,
    p_rsm: f64,
    episodes: usize,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let cfgs = eval_pomdps
        .iter()
        .map(|v| pomdp_config(v, p_flk, sigma_rn, p_rsm, 0))
        .collect::<PyResult<Vec<_>>>()?;
    let rows = py
        .detach(|| harness::cross_evaluate_grid(&checkpoints, &cfgs, episodes, seed))
        .map_err(err)?;
    rows_to_py(py, &rows)
}

#[pyfunction]
#[pyo3(signature = (checkpoint, lengths = vec![0, 1, 3, 5], episodes = 10, seed = 0))]
fn history_length_sweep(
    py: Python<'_>,
    checkpoint: PathBuf,
    lengths: Vec<usize>,
    episodes: usize,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let rows = py
        .detach(|| harness::history_length_sweep(&checkpoint, &lengths, episodes, seed))
        .map_err(err)?;
    rows_to_py(py, &rows)
}

/// Merges per-seed metrics files into `out`; returns the maximum average
/// return as `(step, mean, std)`.
#[pyfunction]
fn curves(metrics: Vec<PathBuf>, out: PathBuf) -> PyResult<Option<(u64, f64, f64)>> {
    Ok(emit_curves(&metrics, &out)
        .map_err(err)?
        .max_average_return())
}

#[pymodule]
fn lstm_td3(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("LstmTd3Error", m.py().get_type::<LstmTd3Error>())?;
    m.add_class::<PyEnv>()?;
    m.add_class::<PyReplayBuffer>()?;
    m.add_class::<PyAgent>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(cross_evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(history_length_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(curves, m)?)?;
    Ok(())
}
