use cm4ir::denoise::Denoiser;
use cm4ir::sampler::{initial_estimate, nfe_count};
use cm4ir::{
    build_schedule, cm4ir_restore, cm_baseline_sample, ddim_inject, polyak_restore, restore, Error, GaussianPrior,
    GuidanceMode, Image, InitMode, InpaintMask, LinearOperator, NoiseSign, NoiseStreams, Purpose, SamplerConfig,
    Schedule, ScheduleParams, Shape, Variant,
};

fn prior(shape: Shape) -> GaussianPrior<f64> {
    let mean = Image::from_fn(shape, |r, c, ch| {
        0.5 + 0.2 * ((r as f64 * 0.7 + c as f64 * 0.3 + ch as f64).sin())
    });
    GaussianPrior::new(mean, 0.2).unwrap()
}

fn schedule(eta: f64, delta: f64) -> Schedule<f64> {
    build_schedule(&ScheduleParams {
        eta,
        delta: vec![delta],
        ..Default::default()
    })
    .unwrap()
}

fn sr2_problem(seed: u64) -> (LinearOperator<f64>, Image<f64>, GaussianPrior<f64>) {
    let shape = Shape::new(16, 16, 3);
    let p = prior(shape);
    let op = LinearOperator::super_resolution(shape, 2).unwrap();
    let y = op.apply(&p.sample(seed)).unwrap();
    (op, y, p)
}

#[test]
fn eta_one_without_offsets_or_guidance_is_the_baseline() {
    for seed in 0..5 {
        let (op, y, mut p) = sr2_problem(seed);
        let mut cfg = SamplerConfig::new(schedule(1.0, 0.0));
        cfg.guidance = GuidanceMode::None;
        cfg.seed = seed;
        let a = restore(&op, &y, &mut p, &cfg).unwrap().image;
        cfg.variant = Variant::CmBaseline;
        let b = restore(&op, &y, &mut p, &cfg).unwrap().image;
        assert_eq!(a.data(), b.data());
    }
}

#[test]
fn explicit_ddim_sign_matches_ddim_variant() {
    let (op, y, mut p) = sr2_problem(3);
    let mut cfg = SamplerConfig::new(schedule(0.3, 0.1));
    cfg.seed = 11;
    cfg.sign = Some(NoiseSign::Ddim);
    let a = restore(&op, &y, &mut p, &cfg).unwrap().image;
    cfg.sign = None;
    cfg.variant = Variant::DdimSign;
    let b = restore(&op, &y, &mut p, &cfg).unwrap().image;
    assert_eq!(a.data(), b.data());
    cfg.variant = Variant::Cm4ir;
    let c = restore(&op, &y, &mut p, &cfg).unwrap().image;
    assert_ne!(a.data(), c.data());
}

#[test]
fn single_step_returns_denoised_initial_point() {
    let (op, y, mut p) = sr2_problem(0);
    let s = build_schedule(&ScheduleParams {
        steps: 1,
        delta: vec![0.2],
        ..Default::default()
    })
    .unwrap();
    let mut cfg = SamplerConfig::new(s.clone());
    cfg.seed = 5;
    let out = cm4ir_restore(&op, &y, &mut p, &cfg).unwrap().image;
    let mut x = op.apply_pinv(&y, 0.0).unwrap();
    x.axpy(
        s.tau()[0],
        &NoiseStreams::new(5).gaussian(op.input_shape(), 0, Purpose::Init),
    )
    .unwrap();
    let expected = p.denoise(&x, 1.2 * s.tau()[0]).unwrap();
    assert_eq!(out.data(), expected.data());
    assert_eq!(nfe_count(s.len()), 1);
}

#[test]
fn back_projection_lands_on_measurements_every_step() {
    let (op, y, mut p) = sr2_problem(1);
    let mut cfg = SamplerConfig::new(schedule(0.1, 0.0));
    cfg.record_trajectory = true;
    cfg.seed = 2;
    let r = cm4ir_restore(&op, &y, &mut p, &cfg).unwrap();
    let traj = r.trajectory.unwrap();
    assert_eq!(traj.len(), 4);
    for s in &traj.steps {
        let res = op.apply(&s.guided).unwrap().sub(&y).unwrap().norm() / y.norm();
        assert!(res <= 1e-8, "step {}: {res}", s.step);
    }
}

#[test]
fn final_step_is_the_denoiser_at_the_last_level() {
    let (op, y, mut p) = sr2_problem(4);
    let mut cfg = SamplerConfig::new(schedule(0.5, 0.1));
    cfg.record_trajectory = true;
    let r = cm4ir_restore(&op, &y, &mut p, &cfg).unwrap();
    let last = r.trajectory.as_ref().unwrap().steps.last().unwrap().clone();
    assert_eq!(last.tau_next, 0.0);
    assert!(last.noise_term.is_none() && last.estimate_term.is_none());
    assert_eq!(r.image.data(), p.denoise(&last.x_tau, last.sigma).unwrap().data());

    cfg.final_bp_correction = true;
    let corrected = cm4ir_restore(&op, &y, &mut p, &cfg).unwrap().image;
    assert!(op.apply(&corrected).unwrap().sub(&y).unwrap().norm() / y.norm() <= 1e-8);
}

#[test]
fn seed_fully_determines_the_output() {
    let (op, y, mut p) = sr2_problem(2);
    let mut cfg = SamplerConfig::new(schedule(0.2, 0.05));
    cfg.seed = 77;
    let a = restore(&op, &y, &mut p, &cfg).unwrap().image;
    let b = restore(&op, &y, &mut p, &cfg).unwrap().image;
    assert_eq!(a.data(), b.data());
    cfg.seed = 78;
    let c = restore(&op, &y, &mut p, &cfg).unwrap().image;
    assert_ne!(a.data(), c.data());
}

#[test]
fn unguided_baseline_follows_the_gaussian_moment_recursion() {
    let shape = Shape::new(1, 1, 1);
    let (m, s) = (0.4, 0.3);
    let mut p = GaussianPrior::uniform(shape, m, s).unwrap();
    let sched = schedule(1.0, 0.0);
    let x_init = Image::zeros(shape);
    let runs = 10_000;
    let outs: Vec<f64> = (0..runs)
        .map(|seed| {
            cm_baseline_sample(&mut p, &sched, None, &x_init, seed, false)
                .unwrap()
                .image
                .data()[0]
        })
        .collect();

    let (mut mean, mut var) = (0.0, sched.tau()[0].powi(2));
    for k in 0..sched.len() {
        let a = s * s / (s * s + sched.tau()[k].powi(2));
        mean = a * mean + (1.0 - a) * m;
        var = a * a * var + sched.tau_next(k).powi(2);
    }
    let n = runs as f64;
    let emp_mean = outs.iter().sum::<f64>() / n;
    let emp_var = outs.iter().map(|x| (x - emp_mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(
        (emp_mean - mean).abs() <= 3.0 * (var / n).sqrt(),
        "{emp_mean} vs {mean}"
    );
    assert!(
        (emp_var - var).abs() <= 3.0 * var * (2.0 / (n - 1.0)).sqrt(),
        "{emp_var} vs {var}"
    );
}

#[test]
fn polyak_without_momentum_or_noise_is_projected_denoising() {
    let (op, y, mut p) = sr2_problem(6);
    let sched = schedule(0.0, 0.1);
    let mut cfg = SamplerConfig::new(sched.clone());
    cfg.variant = Variant::Polyak { beta: 0.0 };
    cfg.seed = 9;
    let out = polyak_restore(&op, &y, &mut p, &cfg).unwrap().image;

    let mut x = op.apply_pinv(&y, 0.0).unwrap();
    x.axpy(
        sched.tau()[0],
        &NoiseStreams::new(9).gaussian(op.input_shape(), 0, Purpose::Init),
    )
    .unwrap();
    let mut x0 = x.clone();
    for k in 0..sched.len() {
        x0 = p.denoise(&x, 1.1 * sched.tau()[k]).unwrap();
        let g = op.apply_pinv(&op.apply(&x0).unwrap().sub(&y).unwrap(), 0.0).unwrap();
        x = x0.sub(&g).unwrap();
    }
    assert_eq!(out.data(), x0.data());
}

struct Constant(Image<f64>);

impl Denoiser<f64> for Constant {
    fn denoise_above_epsilon(&mut self, _x: &Image<f64>, _sigma: f64) -> cm4ir::Result<Image<f64>> {
        Ok(self.0.clone())
    }
}

#[test]
fn constant_denoiser_gives_zero_momentum() {
    let (op, y, p) = sr2_problem(7);
    let mut d = Constant(p.mean().clone());
    let mut cfg = SamplerConfig::new(schedule(0.0, 0.0));
    cfg.variant = Variant::Polyak { beta: 0.7 };
    cfg.record_trajectory = true;
    let traj = polyak_restore(&op, &y, &mut d, &cfg).unwrap().trajectory.unwrap();
    assert!(traj.steps[0].estimate_term.is_none());
    for s in &traj.steps[1..traj.len() - 1] {
        assert!(s.estimate_term.as_ref().unwrap().data().iter().all(|v| *v == 0.0));
    }
}

#[test]
fn injection_examples() {
    let shape = Shape::new(2, 3, 1);
    let streams = NoiseStreams::new(1);
    let x_tau: Image<f64> = streams.gaussian(shape, 0, Purpose::Synthetic);
    let u: Image<f64> = streams.gaussian(shape, 1, Purpose::Synthetic);
    let z: Image<f64> = streams.gaussian(shape, 2, Purpose::Synthetic);
    let (tau_n, tau_prev) = (0.8, 0.3);
    let mut x0 = x_tau.clone();
    x0.axpy(tau_n, &u).unwrap();

    for sign in [NoiseSign::Negated, NoiseSign::Ddim] {
        let out = ddim_inject(&x0, &x_tau, tau_n, tau_prev, 1.0, sign, &z).unwrap();
        assert_eq!(out.data(), z.scale(tau_prev).data());
    }
    let out = ddim_inject(&x0, &x_tau, tau_n, tau_prev, 0.0, NoiseSign::Negated, &z).unwrap();
    for (o, u) in out.data().iter().zip(u.data()) {
        assert!((o - tau_prev * u).abs() < 1e-12);
    }
    let eta = 0.4;
    let a = ddim_inject(&x0, &x_tau, tau_n, tau_prev, eta, NoiseSign::Negated, &z).unwrap();
    let b = ddim_inject(&x0, &x_tau, tau_n, tau_prev, eta, NoiseSign::Ddim, &z).unwrap();
    for ((a, b), z) in a.data().iter().zip(b.data()).zip(z.data()) {
        assert!((a + b - 2.0 * eta * tau_prev * z).abs() < 1e-12);
    }
    assert!(ddim_inject(&x0, &x_tau, 0.0, tau_prev, eta, NoiseSign::Negated, &z).is_err());
}

#[test]
fn inpainting_starts_from_the_median_fill() {
    let shape = Shape::new(8, 8, 1);
    let mask = InpaintMask::random(8, 8, 0.5, 3).unwrap();
    let op = LinearOperator::inpaint(shape, mask.clone()).unwrap();
    let y = op.apply(&prior(shape).sample(0)).unwrap();
    let init = initial_estimate(&op, &y, &InitMode::Auto, 0.0).unwrap();
    assert_eq!(init, cm4ir::median_init(&mask, 1, &y).unwrap());
    let blur = LinearOperator::gaussian_blur(shape, 3, 1.0).unwrap();
    assert!(initial_estimate(&blur, &blur.apply(&init).unwrap(), &InitMode::<f64>::Median, 0.0).is_err());
}

struct FailsAt(usize, usize);

impl Denoiser<f64> for FailsAt {
    fn denoise_above_epsilon(&mut self, x: &Image<f64>, _sigma: f64) -> cm4ir::Result<Image<f64>> {
        self.1 += 1;
        if self.1 > self.0 {
            return Err(Error::Protocol("connection dropped".into()));
        }
        Ok(x.clone())
    }
}

#[test]
fn failures_carry_the_step_index() {
    let (op, y, _) = sr2_problem(0);
    let cfg = SamplerConfig::new(schedule(0.1, 0.0));
    match cm4ir_restore(&op, &y, &mut FailsAt(2, 0), &cfg) {
        Err(Error::Step { step, source, .. }) => {
            assert_eq!(step, 2);
            assert!(matches!(*source, Error::Protocol(_)));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn trajectory_dump_writes_tensors_and_index() {
    let (op, y, mut p) = sr2_problem(5);
    let mut cfg = SamplerConfig::new(schedule(0.1, 0.0));
    cfg.record_trajectory = true;
    let traj = cm4ir_restore(&op, &y, &mut p, &cfg).unwrap().trajectory.unwrap();
    let dir = tempfile::tempdir().unwrap();
    traj.dump(dir.path()).unwrap();
    let index = std::fs::read_to_string(dir.path().join("index.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = index.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[3]["tau_next"], 0.0);
    let x0 = cm4ir::io::read_raw::<f64>(dir.path().join("step001_x0.cmt")).unwrap();
    assert_eq!(x0.shape(), traj.steps[1].x0.shape());
    for (a, b) in x0.data().iter().zip(traj.steps[1].x0.data()) {
        assert_eq!(*a, (*b as f32) as f64);
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let (op, y, mut p) = sr2_problem(0);
    let mut cfg = SamplerConfig::new(schedule(0.1, 0.0));
    cfg.reg = Some(vec![0.0; 3]);
    assert!(cm4ir_restore(&op, &y, &mut p, &cfg).is_err());
    cfg.reg = None;
    cfg.variant = Variant::Polyak { beta: -1.0 };
    assert!(polyak_restore(&op, &y, &mut p, &cfg).is_err());
    let wrong = Image::zeros(Shape::new(3, 3, 3));
    assert!(cm4ir_restore(&op, &wrong, &mut p, &SamplerConfig::new(schedule(0.1, 0.0))).is_err());
}
