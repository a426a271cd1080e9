//! Acceptance criteria, one PASS/FAIL line each. Failures are reported but
//! only turn into a non-zero exit with `ACCEPTANCE_STRICT=1`. The trend
//! criteria (9, 10) pre-train a cartpole model and take several minutes on
//! one core.

use std::process::ExitCode;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use replan::agent::{aui_episode, mean_std, run_aui, run_mbrl, AgentConfig, EpisodeRecord};
use replan::buffer::ReplayBuffer;
use replan::dynamics::{
    aggregate_confidence, variance_decompose, ConstantModel, DeltaModel, EnsembleModel, GaussianNet, LogVarBounds,
    ModelConfig, ParticleSet,
};
use replan::envs::{EnvKind, EnvSpec};
use replan::harness::{
    error_rows, evaluate, load_checkpoint, read_checkpoint, run_pretrain, spearman, summarize, write_checkpoint,
    ExperimentConfig,
};
use replan::planner::{compute_optimal_trajectory, CemConfig, PlanningTask};
use replan::skip::{build_error_model, dagostino_pearson, fsa_should_skip, Policy, SkipPolicyConfig};
use replan::types::{ActionBounds, StateVec};
use replan::Error;

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Episodes of a frozen model under N-Skip; the policy alone decides when
/// to replan, so the identity model keeps this fast.
fn nskip_records(spec: &EnvSpec, n: usize, seeds: u64) -> Vec<EpisodeRecord> {
    let model = ConstantModel::identity(spec.state_dim(), spec.action_dim(), 5);
    let cem = CemConfig { population: 4, elites: 1, iterations: 1, particles: 5, ..Default::default() };
    (0..seeds)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            aui_episode(spec, &cem, &model, &Policy::NSkip { n }, &mut ReplayBuffer::new(), &mut rng).unwrap()
        })
        .collect()
}

fn c1_recalculation_counts() -> Outcome {
    let cases = [(1, 200, 100.0), (2, 200, 67.0), (3, 200, 50.0), (4, 150, 30.0), (5, 150, 25.0), (9, 150, 15.0)];
    let mut detail = Vec::new();
    let mut ok = true;
    for (n, task_h, expect) in cases {
        let base = if task_h == 200 { EnvSpec::cartpole() } else { EnvSpec::pendulum() };
        let spec = base.with_task_horizon(task_h).unwrap();
        let row = summarize(&SkipPolicyConfig::nskip(n), &nskip_records(&spec, n, 5));
        ok &= row.rc == expect && row.rc_std == 0.0 && row.sx_std == 0.0;
        detail.push(format!("n={n},TaskH={task_h}: Rc={}", row.rc));
    }
    verdict(ok, detail.join("; "))
}

fn c2_sx_accounting() -> Outcome {
    let spec = EnvSpec::cartpole();
    let sx1 = summarize(&SkipPolicyConfig::nskip(1), &nskip_records(&spec, 1, 5)).sx;
    let sx2 = summarize(&SkipPolicyConfig::nskip(2), &nskip_records(&spec, 2, 5)).sx;
    let (a, b) = (format!("{sx1:.3}"), format!("{sx2:.3}"));
    verdict(a == "0.990" && b == "1.970", format!("n=1 Sx={a}, n=2 Sx={b}"))
}

fn c3_gradients() -> Outcome {
    let h = 1e-5;
    let nets = 24;
    let mut worst: f64 = 0.0;
    for seed in 0..nets {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let d_in = rng.random_range(1..5);
        let d_out = rng.random_range(1..4);
        let hidden = rng.random_range(2..7);
        let net = GaussianNet::new(&[d_in, hidden, hidden, 2 * d_out], LogVarBounds { min: -4.0, max: 1.0 }, &mut rng)
            .unwrap();
        let x = Array2::from_shape_fn((6, d_in), |_| rng.random_range(-1.5..1.5));
        let y = Array2::from_shape_fn((6, d_out), |_| rng.random_range(-1.0..1.0));
        let (_, grads) = net.loss_and_grad(x.view(), y.view());
        let loss = |n: &GaussianNet| n.loss_and_grad(x.view(), y.view()).0;
        for (li, g) in grads.iter().enumerate() {
            for ((r, c), &analytic) in g.w.indexed_iter() {
                let (mut p, mut m) = (net.clone(), net.clone());
                p.layers_mut()[li].w[[r, c]] += h;
                m.layers_mut()[li].w[[r, c]] -= h;
                let numeric = (loss(&p) - loss(&m)) / (2.0 * h);
                worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4));
            }
            for (k, &analytic) in g.b.iter().enumerate() {
                let (mut p, mut m) = (net.clone(), net.clone());
                p.layers_mut()[li].b[k] += h;
                m.layers_mut()[li].b[k] -= h;
                let numeric = (loss(&p) - loss(&m)) / (2.0 * h);
                worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4));
            }
        }
    }
    verdict(worst < 1e-4, format!("{nets} networks, worst relative error {worst:.2e}"))
}

fn c4_variance_decomposition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let members = rng.random_range(2..6);
        let per = rng.random_range(2..6);
        let d = rng.random_range(1..4);
        let p = members * per;
        let states = Array2::from_shape_fn((p, d), |_| rng.random_range(-3.0..3.0));
        let assignment: Vec<usize> = (0..p).map(|i| i % members).collect();
        let ps = ParticleSet::from_parts(states.clone(), assignment.clone(), members).unwrap();
        let (ale, epi) = variance_decompose(&ps).unwrap();
        let (mean, std) = aggregate_confidence(&ps).unwrap();
        for j in 0..d {
            let mut means = vec![0.0; members];
            let mut within = 0.0;
            for b in 0..members {
                let rows: Vec<f64> = (0..p).filter(|&i| assignment[i] == b).map(|i| states[[i, j]]).collect();
                means[b] = rows.iter().sum::<f64>() / rows.len() as f64;
                within += rows.iter().map(|v| (v - means[b]).powi(2)).sum::<f64>() / rows.len() as f64;
            }
            within /= members as f64;
            let grand = means.iter().sum::<f64>() / members as f64;
            let between = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / members as f64;
            let all_mean = states.column(j).sum() / p as f64;
            let total = states.column(j).iter().map(|v| (v - all_mean).powi(2)).sum::<f64>() / p as f64;
            worst = worst
                .max((ale[j] - within).abs())
                .max((epi[j] - between).abs())
                .max((mean[j] - all_mean).abs())
                .max((std[j] * std[j] - total).abs())
                .max((total - within - between).abs());
        }
    }
    verdict(worst < 1e-10, format!("100 particle sets, worst deviation {worst:.2e}"))
}

struct Quadratic {
    target: Vec<f64>,
    bounds: ActionBounds,
}

impl PlanningTask for Quadratic {
    fn horizon(&self) -> usize {
        2
    }

    fn action_bounds(&self) -> &ActionBounds {
        &self.bounds
    }

    fn reward(&self, _s: &[f64], a: &[f64]) -> f64 {
        -a.iter().zip(&self.target).map(|(x, t)| (x - t) * (x - t)).sum::<f64>()
    }
}

fn c5_cem_quadratic() -> Outcome {
    let task = Quadratic { target: vec![0.7, -1.2], bounds: ActionBounds::symmetric(2.0, 2) };
    let model = ConstantModel::identity(1, 2, 2);
    let cfg = CemConfig { population: 200, elites: 20, iterations: 10, particles: 2, ..Default::default() };
    let s0 = StateVec::new(vec![0.0]).unwrap();
    let mut hits = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let traj =
            compute_optimal_trajectory(&s0, &model, &task, &cfg, &mut ChaCha8Rng::seed_from_u64(seed), None).unwrap();
        let dev = traj.actions()[0].iter().zip(&task.target).map(|(a, t)| (a - t).abs()).fold(0.0, f64::max);
        worst = worst.max(dev);
        hits += usize::from(dev < 1e-2);
    }
    verdict(hits >= 9, format!("{hits}/10 seeds within 1e-2, worst deviation {worst:.2e}"))
}

fn c6_policy_equivalence() -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for env in EnvKind::ALL {
        let cfg = AgentConfig {
            env,
            planner: CemConfig { population: 12, elites: 3, iterations: 2, particles: 5, ..Default::default() },
            n_iterations: 1,
            train_model: false,
            model: ModelConfig { hidden: 16, ..Default::default() },
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = cfg.new_model(&mut rng).unwrap();
        let mut a = ReplayBuffer::new();
        run_mbrl(&cfg, &mut model.clone(), &mut a, &mut rng.clone()).unwrap();
        let mut b = ReplayBuffer::new();
        run_aui(&cfg, &mut model.clone(), &mut b, None, &mut rng).unwrap();
        ok &= a == b;
        detail.push(format!("{}: {} transitions {}", env, a.len(), if a == b { "identical" } else { "differ" }));
    }
    verdict(ok, detail.join("; "))
}

fn c7_fsa_calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let exp = Exp::new(2.0).unwrap();
    let errors: Vec<f64> = (0..400).map(|_| rng.sample(exp)).collect();
    let model = build_error_model(&errors, 0.05).unwrap();
    let mut sorted = errors.clone();
    sorted.sort_by(f64::total_cmp);
    let mut ok = !model.is_normal();
    let mut detail = vec![format!("normal={}", model.is_normal())];
    let draws = 10_000;
    for c in [0.25, 0.5, 0.95] {
        let rank = ((c * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        ok &= model.percentile_threshold(c).unwrap() == sorted[rank - 1];
        let skips =
            (0..draws).filter(|_| fsa_should_skip(&model, errors[rng.random_range(0..errors.len())], c)).count();
        let freq = skips as f64 / draws as f64;
        let se = (c * (1.0 - c) / draws as f64).sqrt();
        ok &= (freq - c).abs() <= 3.0 * se;
        detail.push(format!("c={c}: {freq:.4} ({:+.1} SE)", (freq - c) / se));
    }
    verdict(ok, detail.join("; "))
}

fn c8_normality_calibration() -> Outcome {
    let (mut accept, mut reject) = (0, 0);
    for rep in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(8000 + rep);
        let normal: Vec<f64> = (0..1000).map(|_| rng.sample(StandardNormal)).collect();
        let uniform: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        accept += usize::from(dagostino_pearson(&normal).unwrap().p_value >= 0.05);
        reject += usize::from(dagostino_pearson(&uniform).unwrap().p_value < 0.05);
    }
    verdict(accept >= 95 && reject >= 95, format!("normal accepted {accept}/100, uniform rejected {reject}/100"))
}

fn c9_error_growth(cfg: &ExperimentConfig, model: &EnsembleModel) -> Outcome {
    let spec = cfg.env_spec().unwrap();
    let n = 10;
    let records = evaluate(&spec, &cfg.planner, model, &Policy::NSkip { n }, 10, cfg.seed, false).unwrap();
    let rows = error_rows(n, &records);
    let steps: Vec<f64> = rows.iter().map(|r| r.step_index as f64).collect();
    let means: Vec<f64> = rows.iter().map(|r| r.mean_err).collect();
    let rho = spearman(&steps, &means);

    // per run: min error at each step 1..=5 against that run's mean step-0 error
    let mut good_runs = 0;
    for rec in &records {
        let at =
            |k: usize| rec.step_depths.iter().zip(&rec.step_errors).filter(move |(d, _)| **d == k).map(|(_, e)| *e);
        let step0 = mean_std(&at(0).collect::<Vec<_>>()).0;
        good_runs += usize::from((1..=5).all(|k| at(k).fold(f64::INFINITY, f64::min) <= step0));
    }
    let curve: Vec<String> = means.iter().map(|m| format!("{m:.3}")).collect();
    verdict(
        rho > 0.8 && good_runs >= 8,
        format!(
            "Spearman {rho:.3}, min-vs-step-0 holds in {good_runs}/10 runs, mean error by step [{}]",
            curve.join(" ")
        ),
    )
}

fn c10_computation_reduction(cfg: &ExperimentConfig, model: &EnsembleModel) -> Outcome {
    let spec = cfg.env_spec().unwrap();
    let runs = 10;
    let eval = |pc: &SkipPolicyConfig| {
        let policy = pc.build(spec.plan_horizon, None).unwrap();
        summarize(pc, &evaluate(&spec, &cfg.planner, model, &policy, runs, cfg.seed, false).unwrap())
    };
    let base = eval(&SkipPolicyConfig::nskip(0));
    let mut detail = vec![format!("baseline Rw {:.2} Rc {:.0}", base.rw, base.rc)];
    let reward_ok = |rw: f64| rw >= 0.9 * base.rw;

    let nskip = eval(&SkipPolicyConfig::nskip(1));
    let nskip_ok = reward_ok(nskip.rw);
    detail.push(format!("NSKIP1 Rw {:.2} ({:.0}%)", nskip.rw, 100.0 * nskip.rw / base.rw));

    let mut cb_ok = false;
    for c in [0.5, 1.0, 2.0] {
        let row = eval(&SkipPolicyConfig::cb(c));
        let rate = row.recalc_pct / base.recalc_pct;
        cb_ok |= rate <= 0.8 && reward_ok(row.rw);
        detail.push(format!("CB{c} Rw {:.2} ({:.0}%) recalc {:.0}%", row.rw, 100.0 * row.rw / base.rw, 100.0 * rate));
    }
    verdict(cb_ok && nskip_ok, detail.join("; "))
}

fn c11_checkpoint() -> Outcome {
    let cfg = AgentConfig { env: EnvKind::Cartpole, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let model = cfg.new_model(&mut rng).unwrap();
    let mut buf = ReplayBuffer::new();
    replan::agent::random_episode(&cfg.env_spec().unwrap(), &mut buf, &mut rng).unwrap();
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &model, &buf).unwrap();
    let (loaded, loaded_buf) = read_checkpoint(&bytes[..]).unwrap();

    let s = Array2::from_shape_fn((32, 4), |_| rng.random_range(-2.0..2.0));
    let a = Array2::from_shape_fn((32, 1), |_| rng.random_range(-3.0..3.0));
    let same_bits = (0..model.num_members()).all(|b| {
        let (m0, v0) = model.predict(b, s.view(), a.view());
        let (m1, v1) = loaded.predict(b, s.view(), a.view());
        m0.iter().chain(v0.iter()).zip(m1.iter().chain(v1.iter())).all(|(x, y)| x.to_bits() == y.to_bits())
    });
    let corrupt = |data: &[u8]| matches!(read_checkpoint(data), Err(Error::CorruptCheckpoint(_)));
    let mut bad_magic = bytes.clone();
    bad_magic[1] = b'?';
    let rejected = corrupt(&bytes[..bytes.len() - 3]) && corrupt(&bytes[..7]) && corrupt(&bad_magic);
    let missing =
        matches!(load_checkpoint(std::path::Path::new("/nonexistent/x.auim")), Err(Error::MissingArtifact(_)));
    verdict(
        same_bits && loaded_buf == buf && rejected && missing,
        format!("{} bytes, forward passes bit-identical: {same_bits}, corrupt files rejected: {rejected}", bytes.len()),
    )
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let out = f();
        let secs = t.elapsed().as_secs_f64();
        match out {
            Ok(d) => println!("PASS [{id:>2}] {name} ({secs:.1}s): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL [{id:>2}] {name} ({secs:.1}s): {d}");
            }
        }
    };
    report(1, "nskip recalculation counts", &mut c1_recalculation_counts);
    report(2, "Sx accounting", &mut c2_sx_accounting);
    report(3, "NLL gradients vs finite differences", &mut c3_gradients);
    report(4, "variance decomposition oracle", &mut c4_variance_decomposition);
    report(5, "CEM on a quadratic reward", &mut c5_cem_quadratic);
    report(6, "nskip n=0 equals MBRL", &mut c6_policy_equivalence);
    report(7, "FSA calibration", &mut c7_fsa_calibration);
    report(8, "normality test calibration", &mut c8_normality_calibration);
    report(11, "checkpoint round trip", &mut c11_checkpoint);

    // trend criteria share one pre-trained cartpole model
    let dir = tempfile::tempdir().expect("temp dir");
    let cfg = ExperimentConfig {
        pretrain_seeds: vec![0, 1, 2],
        output_dir: dir.path().to_path_buf(),
        ..ExperimentConfig::desk(EnvKind::Cartpole)
    };
    let t = Instant::now();
    let model = run_pretrain(&cfg).and_then(|s| load_checkpoint(&s.checkpoint)).map(|(m, _)| m);
    match model {
        Ok(model) => {
            println!("      pre-trained cartpole ensemble in {:.0}s", t.elapsed().as_secs_f64());
            report(9, "error grows with steps since replanning", &mut || c9_error_growth(&cfg, &model));
            report(10, "skipping saves computation at similar reward", &mut || c10_computation_reduction(&cfg, &model));
        }
        Err(e) => {
            for (id, name) in [(9, "error growth"), (10, "computation reduction")] {
                report(id, name, &mut || Err(format!("pre-training failed: {e}")));
            }
        }
    }

    if failed == 0 {
        println!("all acceptance criteria passed");
        return ExitCode::SUCCESS;
    }
    println!("{failed} acceptance criteria failed");
    if std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
