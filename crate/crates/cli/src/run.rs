//! Experiment orchestration.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use log::info;
use num_complex::Complex64;
use semilinear_inverse::cache::DirCache;
use semilinear_inverse::elliptic::assemble_laplacian;
use semilinear_inverse::harmonic::{make_isotropic, polynomial_value, Parity};
use semilinear_inverse::inverse::{
    all_tuples, boundary_moments, density_basis, density_check, interior_q_moments, random_tuples, recover_obstacle,
    recover_q, recover_vm, MomentRecord, Reconstruction, TestBank,
};
use semilinear_inverse::linearize::{dtn, first_linearization, linearization_oracle, mth_linearization};
use semilinear_inverse::semilinear::{ForwardModel, NonlinearCoefficients};
use semilinear_inverse::{io, BoundaryMask, BoundaryTrace, Domain, Field};

use crate::config::{BoundarySpec, DensityTarget, Experiment, ExperimentConfig, MomentData};
use crate::output::{sha256_hex, Output};
use crate::RunError;

/// Outcome flags that map to exit code 2.
#[derive(Debug, Default)]
pub struct Flags {
    pub rank_deficient: bool,
    pub non_identifiable: bool,
}

fn fmt(x: f64) -> String {
    format!("{x:.6e}")
}

pub fn boundary_trace(d: &Domain, mask: &BoundaryMask, spec: &BoundarySpec) -> BoundaryTrace {
    let period = d.config().shape.boundary_period();
    match *spec {
        BoundarySpec::Zero => BoundaryTrace::zeros(mask.clone()),
        BoundarySpec::Fourier { mode, parity, amplitude, offset } => BoundaryTrace::from_fn(d, mask, |s, _, _| {
            let t = 2.0 * std::f64::consts::PI * s / period * mode as f64;
            let w = match parity {
                Parity::Re => t.cos(),
                Parity::Im => t.sin(),
            };
            Complex64::new(offset + amplitude * w, 0.0)
        }),
        BoundarySpec::Polynomial { degree, parity, amplitude } => BoundaryTrace::from_fn(d, mask, |_, x, y| {
            Complex64::new(amplitude * polynomial_value(degree, parity, x, y), 0.0)
        }),
    }
}

fn coefficients(cfg: &ExperimentConfig, d: &Domain, base: &Path) -> Result<NonlinearCoefficients, RunError> {
    let c = &cfg.coefficients;
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let mut out = NonlinearCoefficients::zero(d.node_count(), c.k_trunc);
    let q = match &c.q_file {
        Some(p) => io::read_real_field(&resolve(p), d)?,
        None => c.q.sample(d),
    };
    out.set_q(q)?;
    for (k, preset, file) in c.v_entries() {
        let v = match (preset, file) {
            (_, Some(p)) => io::read_real_field(&resolve(p), d)?,
            (Some(p), None) => p.sample(d),
            (None, None) => continue,
        };
        out.set_v(k, v)?;
    }
    Ok(out)
}

struct Setup {
    domain: Arc<Domain>,
    model: ForwardModel,
    cache: Option<Arc<DirCache>>,
}

fn setup(cfg: &ExperimentConfig, out: &Output, base: &Path) -> Result<Setup, RunError> {
    let domain = Arc::new(Domain::build(&cfg.domain_config())?);
    let coeffs = coefficients(cfg, &domain, base)?;
    let mut model = ForwardModel::new(domain.clone(), coeffs)?;
    model.newton = cfg.newton;
    if let Some(l) = cfg.linear {
        model.linear = l;
    }
    let cache = if cfg.cache { Some(Arc::new(DirCache::open(out.dir().join("cache"))?)) } else { None };
    if let Some(c) = &cache {
        model = model.with_cache(Some(c.clone() as Arc<_>));
    }
    Ok(Setup { domain, model, cache })
}

/// Runs the configured experiment; `base` resolves relative coefficient files.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path, base: &Path) -> Result<Flags, RunError> {
    let start = Instant::now();
    let mut out = Output::new(out_dir)?;
    let s = setup(cfg, &out, base)?;
    out.line(format!("experiment: {}", cfg.experiment.name()));
    out.line(format!("domain: {:?}", cfg.domain_config()));
    out.line(format!("rng_seed: {}", cfg.rng_seed));
    out.line(format!("delta_data: {}", cfg.newton.delta_data));
    let flags = match cfg.experiment {
        Experiment::Forward => forward(cfg, &s, &mut out)?,
        Experiment::DtnBank => dtn_bank(cfg, &s, &mut out)?,
        Experiment::Linearize => linearize(cfg, &s, &mut out)?,
        Experiment::RecoverQ => recover_q_exp(cfg, &s, &mut out).map(|(f, _)| f)?,
        Experiment::RecoverV => recover_v_exp(cfg, &s, &s.model, cfg.recover_v.order, &mut out).map(|(f, _)| f)?,
        Experiment::RecoverObstacle => obstacle(cfg, &s, &mut out)?,
        Experiment::DensityCheck => density(cfg, &s, &mut out)?,
        Experiment::FullPipeline => full_pipeline(cfg, &s, &mut out)?,
    };
    if flags.rank_deficient {
        out.line("status: RankDeficient");
    }
    if flags.non_identifiable {
        out.line("status: NonIdentifiable");
    }
    let mut hashed = cfg.clone();
    hashed.output_dir = None;
    let config_text = toml::to_string(&hashed).map_err(|e| RunError::Internal(e.to_string()))?;
    let inputs = [
        ("experiment", cfg.experiment.name().to_string()),
        ("rng_seed", cfg.rng_seed.to_string()),
        ("slinv_version", env!("CARGO_PKG_VERSION").to_string()),
        ("config_sha256", sha256_hex(config_text.as_bytes())),
    ];
    let mut volatile = vec![format!("wall_time_s: {:.3}", start.elapsed().as_secs_f64())];
    if let Some(c) = &s.cache {
        volatile.push(format!("cache: {} hits, {} misses", c.hits(), c.misses()));
    }
    out.finish(&inputs, &volatile)?;
    Ok(flags)
}

fn forward(cfg: &ExperimentConfig, s: &Setup, out: &mut Output) -> Result<Flags, RunError> {
    let d = &s.domain;
    let f = boundary_trace(d, d.gamma1(), &cfg.forward.f);
    let rep = s.model.solve(&f)?;
    if rep.u.sup_norm() == 0.0 {
        out.line("u = 0");
    } else {
        out.line(format!("max |u| = {}", fmt(rep.u.sup_norm())));
    }
    out.line(format!("newton iterations: {}", rep.iterations));
    out.line(format!("final residual: {}", fmt(rep.final_residual)));
    out.line(format!("c_wp = ||u|| / ||f||: {}", fmt(rep.c_wp)));
    if cfg.forward.picard_check {
        let p = s.model.picard(&f, cfg.newton.tol_residual, 500)?;
        out.line(format!("max |u_newton - u_picard|: {}", fmt(rep.u.sub(&p).sup_norm())));
    }
    let rows: Vec<Vec<String>> =
        rep.residual_history.iter().enumerate().map(|(i, r)| vec![i.to_string(), fmt(*r)]).collect();
    out.table("newton.csv", &["iteration", "scaled_residual"], &rows)?;
    out.complex_field("u.csv", d, rep.u.values())?;
    out.trace("dtn.csv", d, &dtn(&s.model, &f)?)?;
    Ok(Flags::default())
}

fn dtn_bank(cfg: &ExperimentConfig, s: &Setup, out: &mut Output) -> Result<Flags, RunError> {
    let d = &s.domain;
    let mut rows = Vec::new();
    for (i, spec) in cfg.dtn_bank.inputs.iter().enumerate() {
        let f = boundary_trace(d, d.gamma1(), spec);
        let g = dtn(&s.model, &f)?;
        for k in g.mask().indices() {
            let v = g.values()[k];
            rows.push(vec![i.to_string(), k.to_string(), d.boundary_param(k).to_string(), v.re.to_string(), v.im.to_string()]);
        }
        out.line(format!("input {i}: max |Lambda f| = {}", fmt(g.sup_norm())));
    }
    out.table("dtn_bank.csv", &["input", "k", "s", "re", "im"], &rows)?;
    Ok(Flags::default())
}

fn linearize(cfg: &ExperimentConfig, s: &Setup, out: &mut Output) -> Result<Flags, RunError> {
    let d = &s.domain;
    let f: Vec<BoundaryTrace> = cfg.linearize.inputs.iter().map(|sp| boundary_trace(d, d.gamma1(), sp)).collect();
    let stencil = cfg.stencil(f.len());
    let rec = mth_linearization(&s.model, &f, &stencil)?;
    let oracle = linearization_oracle(&s.model, &f)?;
    let gap = rec.output.values().iter().zip(oracle.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    out.line(format!("order: {}", rec.order()));
    out.line(format!("stencil: {stencil:?}"));
    out.line(format!("error estimate: {}", fmt(rec.error_estimate)));
    out.line(format!("roundoff estimate: {}", fmt(rec.roundoff_estimate)));
    out.line(format!("signal scale: {}", fmt(oracle.sup_norm())));
    out.line(format!("max |polarized - direct|: {}", fmt(gap)));
    if rec.cancellation_warning {
        out.line("warning: cancellation in the polarization sums");
    }
    let rows: Vec<Vec<String>> = rec
        .output
        .mask()
        .indices()
        .map(|k| {
            let (a, b) = (rec.output.values()[k], oracle.values()[k]);
            vec![k.to_string(), d.boundary_param(k).to_string(), a.re.to_string(), a.im.to_string(), b.re.to_string(), b.im.to_string()]
        })
        .collect();
    out.table("linearization.csv", &["k", "s", "re", "im", "direct_re", "direct_im"], &rows)?;
    Ok(Flags::default())
}

fn banks(cfg: &ExperimentConfig, s: &Setup, specs: &[semilinear_inverse::inverse::TestSpec]) -> Result<(TestBank, TestBank), RunError> {
    let dc = cfg.domain_config();
    let a = s.model.laplacian();
    let tests = TestBank::build(&s.domain, a, specs, dc.gamma2_arc, &s.model.linear)?;
    let inputs = if dc.gamma1_arc == dc.gamma2_arc {
        tests.clone()
    } else {
        TestBank::build(&s.domain, a, specs, dc.gamma1_arc, &s.model.linear)?
    };
    Ok((inputs, tests))
}

fn report_reconstruction(out: &mut Output, name: &str, r: &Reconstruction) {
    out.line(format!("{name}: moments {}, unknowns {}, rows {}", r.n_moments, r.lsq.n_unknowns, r.lsq.n_rows));
    out.line(format!("{name}: relative residual {}", fmt(r.lsq.relative_residual)));
    out.line(format!("{name}: condition estimate {}", fmt(r.lsq.condition_estimate)));
    out.line(format!("{name}: lambda {}", fmt(r.lsq.lambda)));
    out.line(format!("{name}: noise floor {}", fmt(r.noise_floor)));
    out.line(format!("{name}: L2 norm {}", fmt(r.l2_norm)));
    if let Some(e) = r.relative_l2_error {
        out.line(format!("{name}: relative L2 error {}", fmt(e)));
    }
    if r.propagation_warning {
        out.line(format!("{name}: PropagationWarning (lower-order terms dominate the data)"));
    }
}

fn recover_q_exp(cfg: &ExperimentConfig, s: &Setup, out: &mut Output) -> Result<(Flags, Reconstruction), RunError> {
    let d = &s.domain;
    let (inputs, tests) = banks(cfg, s, &cfg.bank.specs())?;
    out.line(format!("bank: {} inputs, {} tests", inputs.len(), tests.len()));
    let tuples = random_tuples(inputs.len(), tests.len(), 2, cfg.reconstruction.n_test_triplets, cfg.rng_seed);
    let truth = s.model.coefficients().q().to_vec();
    let moments = match cfg.recover_q.moments {
        MomentData::BoundaryData => boundary_moments(&s.model, &inputs, &tests, &tuples, &cfg.stencil(2))?,
        MomentData::InteriorOracle => interior_q_moments(d, &truth, &inputs, &tests, &tuples)?,
    };
    info!("{} q-moments computed", moments.len());
    let mut opts = cfg.reconstruction;
    opts.rng_seed = cfg.rng_seed;
    let r = recover_q(d, &inputs, &tests, &moments, &opts, Some(&truth))?;
    report_reconstruction(out, "q", &r);
    out.moments("moments.csv", &moments)?;
    out.real_field("q_hat.csv", d, &r.values)?;
    out.real_field("q_true.csv", d, &truth)?;
    Ok((Flags { rank_deficient: r.lsq.rank_deficient, ..Default::default() }, r))
}

/// Recovers `V_order` from all tuples of a polynomial bank; the data come
/// from `s.model` and the subtraction uses `known`.
fn recover_v_exp(
    cfg: &ExperimentConfig,
    s: &Setup,
    known: &ForwardModel,
    order: usize,
    out: &mut Output,
) -> Result<(Flags, Reconstruction), RunError> {
    let d = &s.domain;
    let specs = semilinear_inverse::inverse::TestSpec::polynomials(cfg.recover_v.poly_degree);
    let (inputs, tests) = banks(cfg, s, &specs)?;
    let tuples = all_tuples(inputs.len(), tests.len(), order);
    let moments: Vec<MomentRecord> = boundary_moments(&s.model, &inputs, &tests, &tuples, &cfg.stencil(order))?;
    let truth = s.model.coefficients().v(order).to_vec();
    let mut opts = cfg.recover_v.reconstruction;
    opts.rng_seed = cfg.rng_seed;
    let r = recover_vm(order, known, &inputs, &tests, &moments, &opts, Some(&truth))?;
    let name = format!("v{order}");
    report_reconstruction(out, &name, &r);
    out.moments(&format!("{name}_moments.csv"), &moments)?;
    out.real_field(&format!("{name}_hat.csv"), d, &r.values)?;
    out.real_field(&format!("{name}_true.csv"), d, &truth)?;
    Ok((Flags { rank_deficient: r.lsq.rank_deficient, ..Default::default() }, r))
}

fn obstacle(cfg: &ExperimentConfig, s: &Setup, out: &mut Output) -> Result<Flags, RunError> {
    let d = &s.domain;
    let truth = cfg.domain_config().obstacle;
    let base = cfg.domain_config().with_obstacle(None);
    let records = cfg
        .obstacle
        .inputs
        .iter()
        .map(|sp| first_linearization(&s.model, &boundary_trace(d, d.gamma1(), sp), &cfg.stencil(1)))
        .collect::<Result<Vec<_>, _>>()?;
    let r = recover_obstacle(&base, &records, &cfg.obstacle.search, &s.model.linear)?;
    let c = r.circle;
    out.line(format!("recovered center: ({}, {})", fmt(c.center[0]), fmt(c.center[1])));
    out.line(format!("recovered radius: {}", fmt(c.radius)));
    out.line(format!("misfit: {}", fmt(r.misfit)));
    out.line(format!("noise misfit: {}", fmt(r.noise_misfit)));
    out.line(format!("misfit evaluations: {}", r.evaluations));
    match truth {
        Some(t) => {
            let ce = ((c.center[0] - t.center[0]).powi(2) + (c.center[1] - t.center[1]).powi(2)).sqrt();
            out.line(format!("center error: {}", fmt(ce)));
            out.line(format!("radius error: {}", fmt((c.radius - t.radius).abs())));
        }
        None => out.line("data generated without obstacle"),
    }
    if let Some(reason) = &r.reason {
        out.line(format!("NonIdentifiable: {reason}"));
    }
    let rows: Vec<Vec<String>> =
        r.landscape.iter().map(|(p, m)| vec![p[0].to_string(), p[1].to_string(), p[2].to_string(), m.to_string()]).collect();
    out.table("landscape.csv", &["cx", "cy", "r", "misfit"], &rows)?;
    out.table(
        "obstacle.csv",
        &["cx", "cy", "r", "misfit"],
        &[vec![c.center[0].to_string(), c.center[1].to_string(), c.radius.to_string(), r.misfit.to_string()]],
    )?;
    Ok(Flags { non_identifiable: r.non_identifiable, ..Default::default() })
}

fn density(cfg: &ExperimentConfig, s: &Setup, out: &mut Output) -> Result<Flags, RunError> {
    let d = &s.domain;
    let dc = &cfg.density;
    let gamma_tilde = match dc.gamma_tilde {
        Some(arc) => d.arc_mask(arc),
        None => BoundaryMask::new(vec![false; d.n_outer()]),
    };
    let dirs = dc
        .cgo_xi
        .iter()
        .map(|xi| Ok(make_isotropic(*xi, 1)?.with_h(dc.cgo_h)))
        .collect::<Result<Vec<_>, RunError>>()?;
    let n_max = *dc.n_list.last().unwrap();
    let a = assemble_laplacian(d);
    let basis = density_basis(d, &a, &gamma_tilde, n_max, &dirs, &s.model.linear)?;
    let target = match &dc.target {
        DensityTarget::Preset { preset } => Field::from_values(preset.sample(d).into_iter().map(|v| Complex64::new(v, 0.0)).collect()),
        DensityTarget::Product { i, j } => {
            if *i >= basis.len() || *j >= basis.len() {
                return Err(RunError::Config(crate::config::ConfigError::key("density.target", "basis index out of range")));
            }
            let (gi, gj) = (d.gradient(&basis[*i]), d.gradient(&basis[*j]));
            Field::from_values(
                (0..d.node_count()).map(|n| gi.0.values()[n] * gj.0.values()[n] + gi.1.values()[n] * gj.1.values()[n]).collect(),
            )
        }
    };
    let r = density_check(d, &basis, &target, &dc.n_list, dc.gram_threshold)?;
    let monotone = r.residuals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
    out.line(format!("final residual: {}", fmt(*r.residuals.last().unwrap())));
    out.line(format!("residuals non-increasing: {monotone}"));
    if r.ill_conditioned.iter().any(|b| *b) {
        out.line("GramIllConditioned: projection computed by orthogonalization");
    }
    let rows: Vec<Vec<String>> = (0..r.n_list.len())
        .map(|i| {
            vec![
                r.n_list[i].to_string(),
                r.residuals[i].to_string(),
                r.gram_condition[i].to_string(),
                r.rank[i].to_string(),
                r.ill_conditioned[i].to_string(),
            ]
        })
        .collect();
    out.table("density.csv", &["n", "residual", "gram_condition", "rank", "ill_conditioned"], &rows)?;
    Ok(Flags::default())
}

fn full_pipeline(cfg: &ExperimentConfig, s: &Setup, out: &mut Output) -> Result<Flags, RunError> {
    let (mut flags, q) = recover_q_exp(cfg, s, out)?;
    // V₃ subtraction uses the recovered q, not the truth
    let known = s.model.with_coefficients(s.model.coefficients().clone().with_q(q.values.clone())?)?;
    let (f, v3) = recover_v_exp(cfg, s, &known, 3, out)?;
    flags.rank_deficient |= f.rank_deficient;
    let err = |r: &Reconstruction| r.relative_l2_error.map(|e| e.to_string()).unwrap_or_default();
    let rows = vec![vec!["q".to_string(), err(&q)], vec!["v3".to_string(), err(&v3)]];
    out.table("errors.csv", &["coefficient", "relative_l2_error"], &rows)?;
    Ok(flags)
}
