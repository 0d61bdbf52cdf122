//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs every criterion by default. `ACCEPTANCE_CRITERIA=1,4,8` restricts
//! the run to a subset. Learning runs write their outputs under
//! `$CARGO_TARGET_TMPDIR/acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use lstm_td3_core::agent::{Ablation, Agent, AgentConfig, Network, NetworkWidths, Variant};
use lstm_td3_core::env::{Env, EnvKind, Pendulum};
use lstm_td3_core::harness::{
    cross_evaluate, cross_evaluate_grid, history_length_sweep, load_checkpoint,
    observability_sweep, run_training, CurveTable, MetricsRow, RunConfig, SweepParam, TrainOutcome,
    HISTORY_LENGTHS, P_FLK_GRID, SAME_WIDTH_VERSIONS,
};
use lstm_td3_core::nn::{Lstm, ParamSet};
use lstm_td3_core::pomdp::{ObservationCorruptor, PomdpConfig, PomdpVersion};
use lstm_td3_core::replay::{Batch, HistoryWindow, ReplayBuffer, Transition, WindowBatch};
use lstm_td3_core::tensor::{Tape, Tensor, Var};
use lstm_td3_core::Error;

// Pinned tolerances and budgets.
const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
/// Relative errors are taken against `max(|analytic|, |numeric|, FD_FLOOR·max(1, |loss|))`;
/// below that scale central differences are dominated by round-off.
const FD_FLOOR: f64 = 1e-6;
const GRAD_BUDGET: Duration = Duration::from_secs(30);
const HISTORY_CASES: usize = 10_000;
const HISTORY_BUDGET: Duration = Duration::from_secs(10);
const WRAPPER_STEPS: usize = 100_000;
const WRAPPER_BUDGET: Duration = Duration::from_secs(20);
const TARGET_TOL: f64 = 1e-10;
const MDP_STEPS: u64 = 30_000;
const MDP_THRESHOLD: f64 = -250.0;
const MDP_SEEDS_NEEDED: usize = 3;
const FLK_P: f64 = 0.3;
const FLK_STEPS: u64 = 20_000;
const FLK_EVAL_EVERY: u64 = 2_000;
const FLK_BUDGET: Duration = Duration::from_secs(2 * 3600);
const SEEDS: [u64; 4] = [0, 1, 2, 3];
const STUB_STEPS: u64 = 2_000;
const PROTOCOL_BUDGET: Duration = Duration::from_secs(300);

type Verdict = Result<String, String>;

fn main() {
    let selected: Option<Vec<usize>> = std::env::var("ACCEPTANCE_CRITERIA")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Verdict); 9] = [
        (1, "gradient suite", gradient_suite),
        (2, "history oracle", history_oracle),
        (3, "wrapper statistics", wrapper_statistics),
        (4, "target-equation oracle", target_equation_oracle),
        (5, "structural ablations", structural_ablations),
        (6, "desk-scale MDP learning", mdp_learning),
        (7, "desk-scale POMDP ordering", flk_ordering),
        (8, "determinism and round trip", determinism_and_round_trip),
        (9, "protocol coverage", protocol_coverage),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("criterion {id} {name}: PASS ({detail}; {secs:.1} s)"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} {name}: FAIL ({detail}; {secs:.1} s)");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn out_root(criterion: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR"))
        .join("acceptance")
        .join(criterion);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.5..1.5)).collect(),
    )
    .unwrap()
}

// ---------------------------------------------------------------------------
// 1. Gradient suite

#[derive(Default)]
struct FdStats {
    entries: usize,
    worst: f64,
    worst_at: String,
}

impl FdStats {
    fn compare(&mut self, label: &str, loss: f64, analytic: &[f64], numeric: &[f64]) {
        assert_eq!(analytic.len(), numeric.len(), "{label}");
        let floor = FD_FLOOR * loss.abs().max(1.0);
        for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(floor);
            self.entries += 1;
            if rel > self.worst || rel.is_nan() {
                self.worst = rel;
                self.worst_at = format!("{label}[{i}]: analytic {a:e}, numeric {n:e}");
            }
        }
    }
}

/// Checks `sum(W ⊙ f(inputs))` against central differences in every input.
fn fd_op(
    stats: &mut FdStats,
    label: &str,
    inputs: &[Tensor],
    f: impl Fn(&mut Tape, &[Var]) -> Var,
) {
    let eval = |xs: &[Tensor], weights: Option<&Tensor>| -> (Tape, Vec<Var>, Var, Tensor) {
        let mut t = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| t.param(x.clone())).collect();
        let out = f(&mut t, &vars);
        let shape = t.shape(out).to_vec();
        let w = match weights {
            Some(w) => w.clone(),
            None => {
                let n: usize = shape.iter().product();
                let mut r = ChaCha8Rng::seed_from_u64(99);
                Tensor::new(shape, (0..n).map(|_| r.random_range(0.5..1.5)).collect()).unwrap()
            }
        };
        let wv = t.constant(w.clone());
        let y = t.mul(out, wv).unwrap();
        let loss = t.sum(y);
        (t, vars, loss, w)
    };
    let (tape, vars, loss, w) = eval(inputs, None);
    let grads = tape.backward(loss).unwrap();
    for (k, x) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[k])
            .map_or_else(|| vec![0.0; x.numel()], <[f64]>::to_vec);
        let numeric: Vec<f64> = (0..x.numel())
            .map(|i| {
                let mut shifted = inputs.to_vec();
                shifted[k].data_mut()[i] += FD_STEP;
                let (t, _, l, _) = eval(&shifted, Some(&w));
                let plus = t.value(l).item();
                shifted[k].data_mut()[i] -= 2.0 * FD_STEP;
                let (t, _, l, _) = eval(&shifted, Some(&w));
                (plus - t.value(l).item()) / (2.0 * FD_STEP)
            })
            .collect();
        stats.compare(
            &format!("{label}/input{k}"),
            tape.value(loss).item(),
            &analytic,
            &numeric,
        );
    }
}

/// Values at least `margin` away from every point in `kinks`.
fn away_from(shape: &[usize], kinks: &[f64], margin: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v: f64 = rng.random_range(-1.5..1.5);
            if kinks.iter().all(|k| (v - k).abs() > margin) {
                break v;
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn pendulum_batch(n: usize, l: usize, seed: u64) -> Batch {
    let mut env = Pendulum::new();
    let spec = env.spec();
    let mut rb = ReplayBuffer::new(1000, spec.obs_dim, spec.act_dim).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for ep in 0..3u64 {
        let mut obs = env.reset(rng.random());
        for step in 1..=40 {
            let act = vec![rng.random_range(-2.0..2.0)];
            let r = env.step(&act).unwrap();
            rb.store(Transition {
                obs: obs.clone(),
                act,
                reward: r.reward,
                next_obs: r.observation.clone(),
                done: r.terminal,
                episode_id: ep,
                step_in_episode: step,
            })
            .unwrap();
            obs = r.observation;
        }
    }
    // The first indices of an episode exercise the zero padding.
    let mut idx: Vec<usize> = vec![0, 1, 40, 42];
    idx.extend((idx.len()..n).map(|_| rng.random_range(0..rb.len())));
    rb.batch_from_indices(&idx[..n], l).unwrap()
}

fn gradient_suite() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut s = FdStats::default();
    let r = |shape: &[usize], rng: &mut ChaCha8Rng| random_tensor(shape, rng);

    let (a, b, bt) = (
        r(&[3, 4], &mut rng),
        r(&[4, 5], &mut rng),
        r(&[5, 4], &mut rng),
    );
    fd_op(&mut s, "matmul", &[a.clone(), b], |t, v| {
        t.matmul(v[0], v[1]).unwrap()
    });
    fd_op(&mut s, "matmul_t", &[a, bt], |t, v| {
        t.matmul_t(v[0], v[1]).unwrap()
    });
    fd_op(
        &mut s,
        "add_bias",
        &[r(&[3, 4], &mut rng), r(&[4], &mut rng)],
        |t, v| t.add_bias(v[0], v[1]).unwrap(),
    );
    fd_op(&mut s, "tanh", &[r(&[3, 4], &mut rng)], |t, v| t.tanh(v[0]));
    fd_op(&mut s, "sigmoid", &[r(&[3, 4], &mut rng)], |t, v| {
        t.sigmoid(v[0])
    });
    let x = away_from(&[3, 4], &[0.0], 1e-3, &mut rng);
    fd_op(&mut s, "relu", &[x], |t, v| t.relu(v[0]));
    let x = away_from(&[3, 4], &[-0.5, 0.5], 1e-3, &mut rng);
    fd_op(&mut s, "clamp", &[x], |t, v| t.clamp(v[0], -0.5, 0.5));
    fd_op(&mut s, "scale", &[r(&[3, 4], &mut rng)], |t, v| {
        t.scale(v[0], -1.7)
    });
    for (name, op) in [("add", 0), ("sub", 1), ("mul", 2)] {
        let bin = move |t: &mut Tape, a: Var, b: Var| match op {
            0 => t.add(a, b).unwrap(),
            1 => t.sub(a, b).unwrap(),
            _ => t.mul(a, b).unwrap(),
        };
        fd_op(
            &mut s,
            name,
            &[r(&[3, 4], &mut rng), r(&[3, 4], &mut rng)],
            move |t, v| bin(t, v[0], v[1]),
        );
        fd_op(
            &mut s,
            &format!("{name}_rhs_scalar"),
            &[r(&[3, 4], &mut rng), r(&[1], &mut rng)],
            move |t, v| bin(t, v[0], v[1]),
        );
        fd_op(
            &mut s,
            &format!("{name}_lhs_scalar"),
            &[r(&[], &mut rng), r(&[3, 4], &mut rng)],
            move |t, v| bin(t, v[0], v[1]),
        );
    }
    for axis in 0..3 {
        let mut sb = [2, 3, 2];
        sb[axis] = 4;
        fd_op(
            &mut s,
            &format!("concat{axis}"),
            &[r(&[2, 3, 2], &mut rng), r(&sb, &mut rng)],
            move |t, v| t.concat(v[0], v[1], axis).unwrap(),
        );
        fd_op(
            &mut s,
            &format!("select{axis}"),
            &[r(&[2, 3, 2], &mut rng)],
            move |t, v| t.select(v[0], axis, 1).unwrap(),
        );
    }
    fd_op(&mut s, "sum", &[r(&[3, 4], &mut rng)], |t, v| t.sum(v[0]));
    fd_op(&mut s, "mean", &[r(&[3, 4], &mut rng)], |t, v| t.mean(v[0]));
    let a = r(&[3, 4], &mut rng);
    let b = Tensor::new(
        vec![3, 4],
        a.data()
            .iter()
            .map(|x| x + if rng.random::<bool>() { 0.3 } else { -0.3 })
            .collect(),
    )
    .unwrap();
    fd_op(&mut s, "min_pairwise", &[a, b], |t, v| {
        t.min_pairwise(v[0], v[1]).unwrap()
    });
    fd_op(
        &mut s,
        "lstm_cell",
        &[r(&[3, 8], &mut rng), r(&[3, 2], &mut rng)],
        |t, v| t.lstm_cell(v[0], v[1]).unwrap(),
    );

    // LSTM layer: every parameter and the input sequence.
    let mut ps = ParamSet::new();
    let lstm = Lstm::new(&mut ps, "m", 3, 4, &mut rng);
    let xs = r(&[2, 5, 3], &mut rng);
    let weights = Tensor::new(vec![2, 4], (0..8).map(|i| 0.5 + 0.1 * i as f64).collect()).unwrap();
    let lstm_loss = |ps: &ParamSet, xs: &Tensor| {
        let mut t = Tape::new();
        let b = ps.bind(&mut t, true);
        let x = t.param(xs.clone());
        let h = lstm.sequence(&mut t, &b, x).unwrap();
        let w = t.constant(weights.clone());
        let y = t.mul(h, w).unwrap();
        let loss = t.sum(y);
        (t, b, x, loss)
    };
    let (t, b, x, loss) = lstm_loss(&ps, &xs);
    let g = t.backward(loss).unwrap();
    for k in 0..ps.len() {
        let numeric: Vec<f64> = (0..ps.iter().nth(k).unwrap().value.numel())
            .map(|i| {
                let at = |delta: f64| {
                    let mut shifted = ps.clone();
                    shifted.iter_mut().nth(k).unwrap().value.data_mut()[i] += delta;
                    let (t, _, _, l) = lstm_loss(&shifted, &xs);
                    t.value(l).item()
                };
                (at(FD_STEP) - at(-FD_STEP)) / (2.0 * FD_STEP)
            })
            .collect();
        let name = ps.iter().nth(k).unwrap().name.clone();
        s.compare(
            &format!("lstm_sequence/{name}"),
            t.value(loss).item(),
            g.get(b.vars()[k]).unwrap(),
            &numeric,
        );
    }
    let numeric: Vec<f64> = (0..xs.numel())
        .map(|i| {
            let at = |delta: f64| {
                let mut shifted = xs.clone();
                shifted.data_mut()[i] += delta;
                let (t, _, _, l) = lstm_loss(&ps, &shifted);
                t.value(l).item()
            };
            (at(FD_STEP) - at(-FD_STEP)) / (2.0 * FD_STEP)
        })
        .collect();
    s.compare(
        "lstm_sequence/input",
        t.value(loss).item(),
        g.get(x).unwrap(),
        &numeric,
    );

    // Full LSTM-TD3 critic loss against a bootstrapped target.
    let mut cfg = AgentConfig::lstm_td3(3);
    cfg.widths = NetworkWidths::uniform(8);
    let spec = Pendulum::new().spec();
    let mut agent = Agent::build(cfg, &spec, 7).unwrap();
    // Zero-initialized biases put fully padded windows exactly on a ReLU
    // kink, where central differences are meaningless; check at a generic
    // point instead.
    for (_, net) in agent.named_networks_mut() {
        for p in net.params_mut().iter_mut() {
            p.value
                .data_mut()
                .iter_mut()
                .for_each(|v| *v += rng.random_range(-0.1..0.1));
        }
    }
    let batch = pendulum_batch(6, 3, 11);
    let target = agent.compute_target_q(&batch, &mut rng).unwrap();
    let (loss, grads) = agent.critic_loss_and_grads(&batch, &target).unwrap();
    for j in 0..agent.num_critics() {
        let name = format!("critic{}", j + 1);
        let n_params = agent.critics()[j].params().len();
        for k in 0..n_params {
            let numel = agent.critics()[j]
                .params()
                .iter()
                .nth(k)
                .unwrap()
                .value
                .numel();
            let numeric: Vec<f64> = (0..numel)
                .map(|i| {
                    let mut at = |delta: f64| {
                        let mut nets = agent.named_networks_mut();
                        let net = &mut nets.iter_mut().find(|(n, _)| *n == name).unwrap().1;
                        net.params_mut().iter_mut().nth(k).unwrap().value.data_mut()[i] += delta;
                        drop(nets);
                        agent.critic_loss_and_grads(&batch, &target).unwrap().0
                    };
                    let plus = at(FD_STEP);
                    let minus = at(-2.0 * FD_STEP);
                    at(FD_STEP);
                    (plus - minus) / (2.0 * FD_STEP)
                })
                .collect();
            let pname = agent.critics()[j]
                .params()
                .iter()
                .nth(k)
                .unwrap()
                .name
                .clone();
            s.compare(
                &format!("critic_loss/{name}/{pname}"),
                loss,
                &grads[j][k],
                &numeric,
            );
        }
    }

    let elapsed = start.elapsed();
    check(
        s.worst <= FD_REL_TOL && elapsed <= GRAD_BUDGET,
        format!(
            "max rel err {:.2e} over {} entries (tol {FD_REL_TOL:e}, h {FD_STEP:e}), worst {}, {:.1} s of {} s",
            s.worst,
            s.entries,
            s.worst_at,
            elapsed.as_secs_f64(),
            GRAD_BUDGET.as_secs()
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. History oracle

struct Stored {
    obs: Vec<f64>,
    act: Vec<f64>,
    next_obs: Vec<f64>,
    done: bool,
    episode: u64,
}

/// Scans backwards from `index` (exclusive, or inclusive when `include`)
/// through the stored transitions of the same episode.
fn oracle_window(
    stored: &[Stored],
    index: usize,
    l: usize,
    include: bool,
    od: usize,
    ad: usize,
) -> (Vec<f64>, Vec<f64>, usize) {
    let rows = l.max(1);
    let mut pairs = Vec::new();
    let ep = stored[index].episode;
    let mut j = if include {
        index as isize
    } else {
        index as isize - 1
    };
    while l > 0 && pairs.len() < l && j >= 0 && stored[j as usize].episode == ep {
        pairs.push(j as usize);
        j -= 1;
    }
    pairs.reverse();
    let pad = rows - pairs.len();
    let mut obs = vec![0.0; pad * od];
    let mut act = vec![0.0; pad * ad];
    for &p in &pairs {
        obs.extend_from_slice(&stored[p].obs);
        act.extend_from_slice(&stored[p].act);
    }
    (obs, act, pairs.len())
}

fn window_matches(w: &WindowBatch, row: usize, expect: &(Vec<f64>, Vec<f64>, usize)) -> bool {
    let (r, od, ad) = (w.rows(), w.obs_dim(), w.act_dim());
    w.hist_obs.data()[row * r * od..(row + 1) * r * od] == expect.0[..]
        && w.hist_act.data()[row * r * ad..(row + 1) * r * ad] == expect.1[..]
        && w.valid_len[row] == expect.2
}

fn history_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (od, ad) = (2, 1);
    let (mut checked, mut padded, mut truncated, mut wrapped) = (0usize, 0usize, 0usize, 0usize);
    for case in 0..HISTORY_CASES {
        let l = [0, 1, 3, 5][case % 4];
        let capacity = rng.random_range(20..=500);
        // Overfill half the buffers so the ring wraps mid-episode.
        let total = if case % 2 == 0 {
            capacity
        } else {
            capacity + rng.random_range(1..capacity)
        };
        let mut rb = ReplayBuffer::new(capacity, od, ad).unwrap();
        let mut all = Vec::with_capacity(total);
        // Episodes no longer than a sixth of the buffer keep at least five
        // of them in storage.
        let max_len = capacity / 6;
        let (mut ep, mut left) = (0u64, rng.random_range(1..=max_len));
        let mut step = 0;
        for _ in 0..total {
            if left == 0 {
                ep += 1;
                left = rng.random_range(1..=max_len);
                step = 0;
            }
            left -= 1;
            step += 1;
            let s = Stored {
                obs: (0..od).map(|_| rng.random_range(-1.0..1.0)).collect(),
                act: (0..ad).map(|_| rng.random_range(-1.0..1.0)).collect(),
                next_obs: (0..od).map(|_| rng.random_range(-1.0..1.0)).collect(),
                done: left == 0 && rng.random_bool(0.5),
                episode: ep,
            };
            rb.store(Transition {
                obs: s.obs.clone(),
                act: s.act.clone(),
                reward: 0.0,
                next_obs: s.next_obs.clone(),
                done: s.done,
                episode_id: s.episode,
                step_in_episode: step,
            })
            .unwrap();
            all.push(s);
        }
        let stored = &all[all.len() - rb.len()..];
        let episodes = stored
            .iter()
            .map(|s| s.episode)
            .collect::<std::collections::BTreeSet<_>>()
            .len();
        if episodes < 5 {
            return Err(format!(
                "case {case}: generator produced only {episodes} episodes"
            ));
        }
        wrapped += usize::from(total > capacity);

        let i = rng.random_range(0..rb.len());
        let h = rb.history_at(i, l);
        let expect = oracle_window(stored, i, l, false, od, ad);
        if h.obs_data() != &expect.0[..]
            || h.act_data() != &expect.1[..]
            || h.valid_len() != expect.2
        {
            return Err(format!(
                "history_at mismatch: case {case}, index {i}, l {l}"
            ));
        }
        padded += usize::from(expect.2 < l);
        truncated += usize::from(expect.2 < l && i >= l);

        let batch = rb.sample_batch(8, l, &mut rng).unwrap();
        for (row, &idx) in batch.indices.iter().enumerate() {
            let s = &stored[idx];
            let cur = oracle_window(stored, idx, l, false, od, ad);
            let next = oracle_window(stored, idx, l, true, od, ad);
            let ok = window_matches(&batch.current, row, &cur)
                && window_matches(&batch.next, row, &next)
                && batch.current.obs.row(row) == &s.obs[..]
                && batch.next.obs.row(row) == &s.next_obs[..]
                && batch.act.row(row) == &s.act[..]
                && batch.done[row] == if s.done { 1.0 } else { 0.0 };
            if !ok {
                return Err(format!(
                    "sample_batch mismatch: case {case}, index {idx}, l {l}"
                ));
            }
        }
        checked += 1;
    }
    let elapsed = start.elapsed();
    check(
        elapsed <= HISTORY_BUDGET,
        format!(
            "{checked} cases exact ({padded} padded, {truncated} cut at an episode or buffer boundary, {wrapped} wrapped buffers), {:.1} s of {} s",
            elapsed.as_secs_f64(),
            HISTORY_BUDGET.as_secs()
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. Wrapper statistics

fn wrapper_statistics() -> Verdict {
    let start = Instant::now();
    let spec = Pendulum::new().spec();
    let clean = [0.8, -0.6, 1.3];
    let n = WRAPPER_STEPS as f64;
    let mut notes = Vec::new();
    let mut ok = true;
    let corruptor = |version: PomdpVersion, seed: u64| {
        let cfg = PomdpConfig {
            rng_seed: seed,
            ..PomdpConfig::new(version)
        };
        ObservationCorruptor::new(cfg, spec.clone()).unwrap()
    };

    let p = 0.2;
    let mut flk = corruptor(PomdpVersion::Flk, 1);
    let zeroed = (0..WRAPPER_STEPS)
        .filter(|_| {
            let o = flk.apply(&clean);
            assert!(
                o == [0.0; 3] || o == clean,
                "flicker must zero all or nothing"
            );
            o == [0.0; 3]
        })
        .count() as f64
        / n;
    let band = 3.0 * (p * (1.0 - p) / n).sqrt();
    ok &= (zeroed - p).abs() <= band;
    notes.push(format!("FLK zero fraction {zeroed:.4} vs {p}±{band:.4}"));

    let p = 0.1;
    let mut rsm = corruptor(PomdpVersion::Rsm, 2);
    let mut zeros = [0usize; 3];
    for _ in 0..WRAPPER_STEPS {
        for (z, v) in zeros.iter_mut().zip(rsm.apply(&clean)) {
            *z += usize::from(v == 0.0);
        }
    }
    let band = 3.0 * (p * (1.0 - p) / n).sqrt();
    let rates: Vec<f64> = zeros.iter().map(|&z| z as f64 / n).collect();
    ok &= rates.iter().all(|r| (r - p).abs() <= band);
    notes.push(format!("RSM zero rates {rates:.4?} vs {p}±{band:.4}"));

    let sigma = 0.1;
    let mut rn = corruptor(PomdpVersion::Rn, 3);
    let mut sum = [0.0; 3];
    let mut sq = [0.0; 3];
    for _ in 0..WRAPPER_STEPS {
        for (k, v) in rn.apply(&clean).iter().enumerate() {
            let e = v - clean[k];
            sum[k] += e;
            sq[k] += e * e;
        }
    }
    let mean_band = 3.0 * sigma / n.sqrt();
    let std_band = 3.0 * sigma / (2.0 * n).sqrt();
    for k in 0..3 {
        let mean = sum[k] / n;
        let std = (sq[k] / n - mean * mean).sqrt();
        ok &= mean.abs() <= mean_band && (std - sigma).abs() <= std_band;
        notes.push(format!(
            "RN[{k}] mean {mean:+.5} (±{mean_band:.5}) std {std:.5} ({sigma}±{std_band:.5})"
        ));
    }
    let elapsed = start.elapsed();
    ok &= elapsed <= WRAPPER_BUDGET;
    notes.push(format!("{WRAPPER_STEPS} steps each"));
    check(ok, notes.join(", "))
}

// ---------------------------------------------------------------------------
// 4. Target-equation oracle

fn param<'a>(net: &'a Network, name: &str) -> &'a [f64] {
    net.params()
        .find(name)
        .unwrap_or_else(|| panic!("missing parameter {name}"))
        .value
        .data()
}

fn dense(net: &Network, prefix: &str, x: &[f64], relu: bool) -> Vec<f64> {
    let w = param(net, &format!("{prefix}.weight"));
    let b = param(net, &format!("{prefix}.bias"));
    b.iter()
        .enumerate()
        .map(|(r, bias)| {
            let z = bias
                + x.iter()
                    .enumerate()
                    .map(|(k, xk)| w[r * x.len() + k] * xk)
                    .sum::<f64>();
            if relu {
                z.max(0.0)
            } else {
                z
            }
        })
        .collect()
}

fn chain(net: &Network, prefix: &str, mut x: Vec<f64>) -> Vec<f64> {
    let layers = (0..)
        .take_while(|i| net.params().find(&format!("{prefix}.{i}.weight")).is_some())
        .count();
    for i in 0..layers {
        x = dense(net, &format!("{prefix}.{i}"), &x, i + 1 < layers);
    }
    x
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Direct evaluation of a network from its parameter buffers.
fn hand_forward(
    net: &Network,
    cfg: &AgentConfig,
    obs: &[f64],
    window: &HistoryWindow,
    action: Option<&[f64]>,
    limit: f64,
) -> Vec<f64> {
    let current: Vec<f64> = obs
        .iter()
        .chain(action.into_iter().flatten())
        .copied()
        .collect();
    let raw = if cfg.variant == Variant::LstmTd3 {
        let hidden = param(net, "mem.lstm.b_i").len();
        let (mut h, mut c) = (vec![0.0; hidden], vec![0.0; hidden]);
        for row in 0..window.rows() {
            let act_row: Vec<f64> = if cfg.include_past_actions {
                window.act_row(row).to_vec()
            } else {
                vec![0.0; window.act_dim()]
            };
            let xh: Vec<f64> = window
                .obs_row(row)
                .iter()
                .chain(&act_row)
                .chain(&h)
                .copied()
                .collect();
            let gate = |g: &str| -> Vec<f64> {
                let w = param(net, &format!("mem.lstm.w_{g}"));
                let b = param(net, &format!("mem.lstm.b_{g}"));
                (0..hidden)
                    .map(|r| {
                        b[r] + (0..xh.len())
                            .map(|k| w[r * xh.len() + k] * xh[k])
                            .sum::<f64>()
                    })
                    .collect()
            };
            let (zi, zf, zo, zg) = (gate("i"), gate("f"), gate("o"), gate("g"));
            for u in 0..hidden {
                c[u] = sigmoid(zf[u]) * c[u] + sigmoid(zi[u]) * zg[u].tanh();
                h[u] = sigmoid(zo[u]) * c[u].tanh();
            }
        }
        let mem = dense(net, "mem.dense", &h, true);
        let cur = if cfg.use_cfe {
            dense(net, "cfe", &current, true)
        } else {
            current
        };
        chain(net, "pi", mem.into_iter().chain(cur).collect())
    } else {
        chain(net, "mlp", current)
    };
    match action {
        Some(_) => raw,
        None => raw.iter().map(|z| limit * z.tanh()).collect(),
    }
}

fn find_net<'a>(agent: &'a Agent, name: &str) -> &'a Network {
    agent
        .named_networks()
        .into_iter()
        .find(|(n, _)| n == name)
        .unwrap()
        .1
}

fn hand_target(agent: &Agent, batch: &Batch, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let cfg = agent.config();
    let spec = agent.spec();
    let (n, ad) = (batch.size(), spec.act_dim);
    let next = &batch.next;
    let windows: Vec<HistoryWindow> = (0..n)
        .map(|i| {
            let rows = next.rows();
            let od = spec.obs_dim;
            let start = rows - next.valid_len[i];
            HistoryWindow::from_pairs(
                next.history_len,
                od,
                ad,
                (start..rows).map(|r| {
                    let base = i * rows + r;
                    (
                        &next.hist_obs.data()[base * od..(base + 1) * od],
                        &next.hist_act.data()[base * ad..(base + 1) * ad],
                    )
                }),
            )
        })
        .collect();
    let actions: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            hand_forward(
                find_net(agent, "actor_target"),
                cfg,
                next.obs.row(i),
                &windows[i],
                None,
                spec.act_limit,
            )
        })
        .collect();
    let noise: Vec<f64> = if cfg.use_target_policy_smoothing {
        (0..n * ad)
            .map(|_| {
                (cfg.sigma_targ * rng.sample::<f64, _>(StandardNormal))
                    .clamp(-cfg.noise_clip, cfg.noise_clip)
            })
            .collect()
    } else {
        vec![0.0; n * ad]
    };
    (0..n)
        .map(|i| {
            let a: Vec<f64> = (0..ad)
                .map(|k| (actions[i][k] + noise[i * ad + k]).clamp(-spec.act_limit, spec.act_limit))
                .collect();
            let q = (0..agent.num_critics())
                .map(|j| {
                    let net = find_net(agent, &format!("critic{}_target", j + 1));
                    hand_forward(
                        net,
                        cfg,
                        next.obs.row(i),
                        &windows[i],
                        Some(&a),
                        spec.act_limit,
                    )[0]
                })
                .fold(f64::INFINITY, f64::min);
            batch.reward[i] + cfg.gamma * (1.0 - batch.done[i]) * q
        })
        .collect()
}

fn two_sample_batch(env: &mut dyn Env, l: usize) -> Batch {
    let spec = env.spec();
    let mut rb = ReplayBuffer::new(16, spec.obs_dim, spec.act_dim).unwrap();
    let mut obs = env.reset(5);
    for step in 1..=4 {
        let act: Vec<f64> = (0..spec.act_dim)
            .map(|k| 0.3 * spec.act_limit * (k as f64 - 0.5 + step as f64 * 0.1))
            .collect();
        let r = env.step(&act).unwrap();
        rb.store(Transition {
            obs: obs.clone(),
            act,
            reward: r.reward,
            next_obs: r.observation.clone(),
            // One sample bootstraps, the other is terminal.
            done: step == 4,
            episode_id: 0,
            step_in_episode: step,
        })
        .unwrap();
        obs = r.observation;
    }
    rb.batch_from_indices(&[1, 3], l).unwrap()
}

fn target_equation_oracle() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for variant in [Variant::Td3, Variant::LstmTd3] {
        for env_kind in [EnvKind::Pendulum, EnvKind::PointMass] {
            for (dc, tps) in [(true, true), (true, false), (false, true), (false, false)] {
                let mut cfg = AgentConfig::new(variant);
                if variant == Variant::LstmTd3 {
                    cfg.history_len = 3;
                    cfg.widths = NetworkWidths::uniform(16);
                }
                cfg.use_double_critics = dc;
                cfg.use_target_policy_smoothing = tps;
                // Large smoothing noise so the clip is exercised.
                cfg.sigma_targ = 0.6;
                let mut env = env_kind.make();
                let mut agent = Agent::build(cfg, &env.spec(), 3).unwrap();
                // Move the targets away from the mains so using the wrong
                // networks cannot go unnoticed.
                let mut prng = ChaCha8Rng::seed_from_u64(4);
                for (name, net) in agent.named_networks_mut() {
                    if name.ends_with("_target") {
                        for p in net.params_mut().iter_mut() {
                            p.value
                                .data_mut()
                                .iter_mut()
                                .for_each(|v| *v += prng.random_range(-0.05..0.05));
                        }
                    }
                }
                let batch = two_sample_batch(env.as_mut(), agent.config().history_len);
                let mut rng = ChaCha8Rng::seed_from_u64(9);
                let mut oracle_rng = rng.clone();
                let got = agent.compute_target_q(&batch, &mut rng).unwrap();
                let want = hand_target(&agent, &batch, &mut oracle_rng);
                if rng != oracle_rng {
                    return Err(format!(
                        "{variant} dc={dc} tps={tps}: noise draws differ from the oracle"
                    ));
                }
                for (g, w) in got.iter().zip(&want) {
                    worst = worst.max((g - w).abs());
                }
                if batch.done[1] != 1.0 || (got[1] - batch.reward[1]).abs() > TARGET_TOL {
                    return Err(format!(
                        "{variant} dc={dc} tps={tps}: terminal sample bootstraps"
                    ));
                }
                cases += 1;
            }
        }
    }
    check(
        worst <= TARGET_TOL,
        format!("{cases} cases (td3 and lstm-td3, pendulum and point mass, all DC×TPS), max abs err {worst:.2e}, tol {TARGET_TOL:e}"),
    )
}

// ---------------------------------------------------------------------------
// 5. Structural ablations

fn actor_action(agent: &Agent, obs: &[f64], window: &HistoryWindow) -> Vec<f64> {
    agent
        .actor_forward(&WindowBatch::single(obs, window).unwrap())
        .unwrap()
        .into_data()
}

fn structural_ablations() -> Verdict {
    let spec = Pendulum::new().spec();
    let full = AgentConfig::lstm_td3(5);
    let cases = [
        ("Full", full.clone()),
        ("Full-CFE", full.clone().without(Ablation::Cfe)),
        ("Full-PA", full.clone().without(Ablation::Pa)),
        ("Full-DC", full.clone().without(Ablation::Dc)),
        ("Full-TPS", full.clone().without(Ablation::Tps)),
        (
            "Full-DC-TPS",
            full.clone().without(Ablation::Dc).without(Ablation::Tps),
        ),
    ];
    let w = &full.widths;
    let mut lines = Vec::new();
    for (label, cfg) in cases {
        let agent = Agent::build(cfg.clone(), &spec, 0).unwrap();
        let fail = |msg: &str| Err(format!("{label}: {msg}"));
        let critics = if cfg.use_double_critics { 2 } else { 1 };
        if agent.num_critics() != critics || agent.critic_targets().len() != critics {
            return fail("wrong critic count");
        }
        let noise = if cfg.use_target_policy_smoothing {
            0.2
        } else {
            0.0
        };
        if agent.target_noise_std() != noise {
            return fail("wrong target noise");
        }
        let nets = agent.named_networks();
        if nets.len() != 2 + 2 * critics || !nets.iter().all(|(_, n)| n.is_recurrent()) {
            return fail("unexpected network set");
        }
        for (name, net) in &nets {
            let is_critic = name.starts_with("critic");
            let current = if cfg.use_cfe {
                w.current_feature
            } else {
                spec.obs_dim + if is_critic { spec.act_dim } else { 0 }
            };
            if net.has_current_feature_extraction() != cfg.use_cfe
                || net.perception_input_width() != w.memory_dense + current
                || net.params().find("cfe.weight").is_some() != cfg.use_cfe
            {
                return fail(&format!("{name} has the wrong feature layout"));
            }
        }
        // Past actions influence the output exactly when PA is on.
        let obs = [0.3, -0.2, 0.7];
        let mut a = HistoryWindow::empty(5, 3, 1);
        let mut b = HistoryWindow::empty(5, 3, 1);
        for i in 0..5 {
            let o = [i as f64 * 0.1, 0.5, -0.4];
            a = a.advanced(&o, &[0.9]);
            b = b.advanced(&o, &[-1.7]);
        }
        let differs = actor_action(&agent, &obs, &a) != actor_action(&agent, &obs, &b);
        if differs != cfg.include_past_actions {
            return fail("past-action dependence does not match the PA flag");
        }
        // Without smoothing the target consumes no randomness.
        let batch = pendulum_batch(4, 5, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let before = rng.clone();
        agent.compute_target_q(&batch, &mut rng).unwrap();
        if (rng == before) == cfg.use_target_policy_smoothing {
            return fail("target noise draws do not match the TPS flag");
        }
        lines.push(format!(
            "{label}: {critics} critic(s), σ_targ {noise}, cfe {}, pa {}",
            cfg.use_cfe, cfg.include_past_actions
        ));
    }
    Ok(lines.join("; "))
}

// ---------------------------------------------------------------------------
// 6–7. Learning runs

fn learning_run(
    variant: Variant,
    pomdp: PomdpConfig,
    steps: u64,
    eval_every: u64,
    out: PathBuf,
) -> RunConfig {
    let mut agent = AgentConfig::new(variant);
    if variant == Variant::LstmTd3 {
        agent.history_len = 5;
    }
    let mut run = RunConfig::new(agent, EnvKind::Pendulum, pomdp);
    run.total_steps = steps;
    run.eval_every = eval_every;
    run.eval_episodes = 10;
    run.seeds = SEEDS.to_vec();
    run.out_dir = out;
    run
}

fn best(metrics: &[MetricsRow]) -> f64 {
    metrics
        .iter()
        .map(|m| m.avg_test_return)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn curve(outcomes: &[TrainOutcome]) -> CurveTable {
    let labels = outcomes
        .iter()
        .map(|o| format!("seed-{}", o.seed))
        .collect();
    let runs: Vec<_> = outcomes.iter().map(|o| o.metrics.clone()).collect();
    CurveTable::from_runs(labels, &runs).unwrap()
}

fn mdp_learning() -> Verdict {
    let root = out_root("c6-td3-mdp");
    let cfg = learning_run(
        Variant::Td3,
        PomdpConfig::new(PomdpVersion::Mdp),
        MDP_STEPS,
        2_000,
        root.clone(),
    );
    let outcomes = run_training(&cfg).unwrap();
    curve(&outcomes).write_csv(&root.join("curve.csv")).unwrap();
    let bests: Vec<f64> = outcomes.iter().map(|o| best(&o.metrics)).collect();
    let reached = bests.iter().filter(|&&b| b >= MDP_THRESHOLD).count();
    check(
        reached >= MDP_SEEDS_NEEDED,
        format!(
            "{reached}/4 seeds reach ≥ {MDP_THRESHOLD} within {MDP_STEPS} steps (need {MDP_SEEDS_NEEDED}); best per seed {:.1?}",
            bests
        ),
    )
}

fn flk_ordering() -> Verdict {
    let start = Instant::now();
    let root = out_root("c7-flk");
    let pomdp = PomdpConfig {
        p_flk: FLK_P,
        ..PomdpConfig::new(PomdpVersion::Flk)
    };
    let mut summary = Vec::new();
    for (variant, dir) in [(Variant::Td3, "td3"), (Variant::LstmTd3, "lstm-td3")] {
        let cfg = learning_run(
            variant,
            pomdp.clone(),
            FLK_STEPS,
            FLK_EVAL_EVERY,
            root.join(dir),
        );
        let outcomes = run_training(&cfg).unwrap();
        let table = curve(&outcomes);
        table
            .write_csv(&root.join(format!("{dir}-curve.csv")))
            .unwrap();
        summary.push(table.max_average_return().unwrap());
    }
    let elapsed = start.elapsed();
    let ((td3_step, td3_mean, td3_std), (lstm_step, lstm_mean, lstm_std)) =
        (summary[0], summary[1]);
    let margin = lstm_mean - td3_mean;
    check(
        margin > td3_std + lstm_std && elapsed <= FLK_BUDGET,
        format!(
            "p_flk {FLK_P}, {FLK_STEPS} steps: lstm-td3(5) max avg {lstm_mean:.1}±{lstm_std:.1} at {lstm_step}, \
             td3 {td3_mean:.1}±{td3_std:.1} at {td3_step}; margin {margin:.1} vs std sum {:.1}; {:.0} min of {} min",
            td3_std + lstm_std,
            elapsed.as_secs_f64() / 60.0,
            FLK_BUDGET.as_secs() / 60
        ),
    )
}

// ---------------------------------------------------------------------------
// 8. Determinism and round trip

fn small_run(variant: Variant, steps: u64, out: PathBuf) -> RunConfig {
    let mut agent = AgentConfig::new(variant);
    if variant == Variant::LstmTd3 {
        agent.history_len = 3;
        agent.widths = NetworkWidths::uniform(32);
    }
    agent.start_steps = steps / 2;
    agent.update_after = steps / 4;
    let pomdp = PomdpConfig::new(PomdpVersion::Flk);
    let mut run = RunConfig::new(agent, EnvKind::Pendulum, pomdp);
    run.total_steps = steps;
    run.eval_every = steps / 2;
    run.eval_episodes = 3;
    run.seeds = vec![5];
    run.out_dir = out;
    run
}

fn bits(rows: &[MetricsRow]) -> Vec<Vec<u64>> {
    rows.iter()
        .map(|m| {
            let opt = |x: Option<f64>| x.map_or(u64::MAX, f64::to_bits);
            vec![
                m.step,
                m.avg_test_return.to_bits(),
                m.std_test_return.to_bits(),
                m.avg_q1.to_bits(),
                opt(m.avg_actor_memory),
                opt(m.avg_critic_memory),
                opt(m.avg_actor_memory_abs),
                opt(m.avg_critic_memory_abs),
            ]
        })
        .collect()
}

fn determinism_and_round_trip() -> Verdict {
    let root = out_root("c8-determinism");
    let mut notes = Vec::new();
    for (variant, steps) in [(Variant::Td3, 1_200), (Variant::LstmTd3, 600)] {
        let a = run_training(&small_run(
            variant,
            steps,
            root.join(format!("{variant}-a")),
        ))
        .unwrap()
        .remove(0);
        let b = run_training(&small_run(
            variant,
            steps,
            root.join(format!("{variant}-b")),
        ))
        .unwrap()
        .remove(0);
        let same_metrics = bits(&a.metrics) == bits(&b.metrics);
        let same_csv =
            std::fs::read(a.metrics_path()).unwrap() == std::fs::read(b.metrics_path()).unwrap();
        let same_ckpt = std::fs::read(a.checkpoint_path()).unwrap()
            == std::fs::read(b.checkpoint_path()).unwrap();
        if !(same_metrics && same_csv && same_ckpt) {
            return Err(format!(
                "{variant}: metrics {same_metrics}, csv {same_csv}, checkpoint {same_ckpt}"
            ));
        }

        let (loaded, _) = load_checkpoint(&a.checkpoint_path()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let l = a.agent.config().history_len;
        for k in 0..100 {
            let mut window = HistoryWindow::empty(l, 3, 1);
            for _ in 0..rng.random_range(0..=l) {
                let o: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
                window = window.advanced(&o, &[rng.random_range(-2.0..2.0)]);
            }
            let obs: Vec<f64> = (0..3).map(|_| rng.random_range(-8.0..8.0)).collect();
            let x = actor_action(&a.agent, &obs, &window);
            let y = actor_action(&loaded, &obs, &window);
            if x.iter().zip(&y).any(|(p, q)| p.to_bits() != q.to_bits()) {
                return Err(format!(
                    "{variant}: greedy action {k} differs after reload: {x:?} vs {y:?}"
                ));
            }
        }
        notes.push(format!(
            "{variant}: {} evaluations bitwise equal across runs, 100 greedy actions identical after reload",
            a.metrics.len()
        ));
    }
    Ok(notes.join("; "))
}

// ---------------------------------------------------------------------------
// 9. Protocol coverage

fn stub(variant: Variant, pomdp: PomdpConfig, out: PathBuf, seeds: Vec<u64>) -> RunConfig {
    let mut agent = AgentConfig::new(variant);
    if variant == Variant::LstmTd3 {
        agent.history_len = 5;
    }
    let mut run = RunConfig::new(agent, EnvKind::Pendulum, pomdp);
    run.total_steps = STUB_STEPS;
    run.eval_every = STUB_STEPS;
    run.eval_episodes = 10;
    run.seeds = seeds;
    run.out_dir = out;
    run
}

fn protocol_coverage() -> Verdict {
    let start = Instant::now();
    let root = out_root("c9-protocols");
    let mut notes = Vec::new();

    let ckpts: Vec<PathBuf> = SAME_WIDTH_VERSIONS
        .iter()
        .map(|&v| {
            let cfg = stub(
                Variant::Td3,
                PomdpConfig::new(v),
                root.join(format!("td3-{v}")),
                vec![0],
            );
            run_training(&cfg).unwrap()[0].checkpoint_path()
        })
        .collect();
    let evals: Vec<PomdpConfig> = SAME_WIDTH_VERSIONS
        .iter()
        .map(|&v| PomdpConfig::new(v))
        .collect();
    let grid = cross_evaluate_grid(&ckpts, &evals, 10, 0).unwrap();
    let pairs: Vec<(PomdpVersion, PomdpVersion)> = grid
        .iter()
        .map(|r| (r.train_version, r.eval_version))
        .collect();
    let want: Vec<_> = SAME_WIDTH_VERSIONS
        .iter()
        .flat_map(|&t| SAME_WIDTH_VERSIONS.iter().map(move |&e| (t, e)))
        .collect();
    if pairs != want || grid.iter().any(|r| !r.mean_return.is_finite()) {
        return Err("cross-evaluation grid is incomplete".into());
    }
    let refusal = cross_evaluate(&ckpts[0], &PomdpConfig::new(PomdpVersion::Rv), 10, 0);
    match refusal {
        Err(e @ Error::ObsDimMismatch { .. }) => notes.push(format!("4×4 grid, RV refused ({e})")),
        other => return Err(format!("RV cross-evaluation was not refused: {other:?}")),
    }

    let cfg = stub(
        Variant::LstmTd3,
        PomdpConfig::new(PomdpVersion::Flk),
        root.join("lstm-td3"),
        vec![0],
    );
    let lstm = run_training(&cfg).unwrap()[0].checkpoint_path();
    let rows = history_length_sweep(&lstm, &HISTORY_LENGTHS, 10, 0).unwrap();
    if rows.iter().map(|r| r.l_eval).collect::<Vec<_>>() != HISTORY_LENGTHS
        || rows.iter().any(|r| r.l_train != 5)
    {
        return Err("history sweep rows do not cover {0,1,3,5}".into());
    }
    notes.push(format!("history sweep over {HISTORY_LENGTHS:?}"));

    let base = stub(
        Variant::Td3,
        PomdpConfig::new(PomdpVersion::Flk),
        root.join("sweep"),
        vec![0],
    );
    let report = observability_sweep(&base, SweepParam::PFlk, &P_FLK_GRID).unwrap();
    let values: Vec<f64> = report.summary.iter().map(|s| s.value).collect();
    if values != P_FLK_GRID || report.rows.len() != P_FLK_GRID.len() {
        return Err("observability sweep skipped grid points".into());
    }
    notes.push(format!("observability sweep over p_flk {P_FLK_GRID:?}"));

    let elapsed = start.elapsed();
    notes.push(format!(
        "{STUB_STEPS}-step stubs, {:.0} s of {} s",
        elapsed.as_secs_f64(),
        PROTOCOL_BUDGET.as_secs()
    ));
    check(elapsed <= PROTOCOL_BUDGET, notes.join(", "))
}
