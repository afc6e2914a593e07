//! End-to-end acceptance checks. Each check prints one PASS/FAIL line; the
//! test fails if any check fails.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stencilforge::apps::{
    adjoint_test, bench, diffusion_compiled, diffusion_operator, diffusion_reference, max_relative_error,
    AcousticModel, BenchOptions, BenchVariant, DiffusionConfig, RunOptions, Scenario,
};
use stencilforge::codegen::{CodegenConfig, OperatorHandle};
use stencilforge::fd::{derivative, fd_weights, laplace, Derivative, StencilSpec};
use stencilforge::grid::{ElementType, GridFunction, SymbolRegistry};
use stencilforge::optimizer::{autotune, cse, AutotuneOptions, BlockingPlan};
use stencilforge::sparse::{build_inject, build_sample, interpolation_weights, SparsePointSet};
use stencilforge::symbolic::{count_ops, eval_f64, expand, solve_linear, Eqn, Expr, Node};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Goes straight to the process stdout so the lines show up without
/// `--nocapture`.
fn report(line: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn within(limit_s: u64, start: Instant) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t <= Duration::from_secs(limit_s), format!("took {t:.2?}, budget {limit_s} s"))
}

fn random_field(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()
}

/// Exact weights from the moment conditions `sum_k w_k a_k^j = j! [j == d]`,
/// by fraction-exact Gauss-Jordan elimination.
fn vandermonde(d: usize, offsets: &[BigRational]) -> Vec<BigRational> {
    let n = offsets.len();
    let mut m: Vec<Vec<BigRational>> = (0..n)
        .map(|j| {
            let mut row: Vec<BigRational> = offsets.iter().map(|a| num_traits::pow(a.clone(), j)).collect();
            let fact = (1..=j).fold(BigRational::one(), |acc, k| acc * BigRational::from_integer(BigInt::from(k)));
            row.push(if j == d { fact } else { BigRational::zero() });
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&i| !m[i][col].is_zero()).unwrap();
        m.swap(col, pivot);
        let p = m[col][col].clone();
        for x in m[col].iter_mut() {
            *x = &*x / &p;
        }
        for i in 0..n {
            if i != col && !m[i][col].is_zero() {
                let f = m[i][col].clone();
                for k in 0..=n {
                    let v = &m[col][k] * &f;
                    m[i][k] -= v;
                }
            }
        }
    }
    m.into_iter().map(|r| r[n].clone()).collect()
}

fn fd_coefficients() -> Check {
    let start = Instant::now();
    let mut cases = 0;
    for d in 1..=2 {
        for acc in 2..=16 {
            let stencil = StencilSpec::for_accuracy(d, acc).map_err(|e| e.to_string())?;
            let got = fd_weights(d, &stencil.offsets).map_err(|e| e.to_string())?;
            ensure(got == vandermonde(d, &stencil.offsets), format!("derivative {d}, accuracy {acc}"))?;
            cases += 1;
        }
    }
    within(1, start)?;
    Ok(format!("{cases} stencils match exactly"))
}

fn listing_fidelity() -> Check {
    let mut reg = SymbolRegistry::new();
    let f = reg.create_dense("f", &[10, 12], 2, ElementType::F32).unwrap();
    let dx2 = derivative(f.meta(), Derivative::Dx2).map_err(|e| e.to_string())?.to_string();
    ensure(
        dx2 == "-2*f(x, y)/h**2 + f(-h + x, y)/h**2 + f(h + x, y)/h**2",
        format!("dx2 printed as {dx2}"),
    )?;
    let mut reg = SymbolRegistry::new();
    let u = reg.create_time("u", &[10, 12], 2, 2, ElementType::F32).unwrap();
    let m = reg.create_dense("m", &[10, 12], 2, ElementType::F32).unwrap();
    let eqn = Eqn::new(
        m.symbolic() * derivative(u.meta(), Derivative::Dt2).unwrap(),
        laplace(u.meta()).unwrap(),
    );
    let want = "Eq((-2*u(t, x, y)/s**2 + u(-s + t, x, y)/s**2 + u(s + t, x, y)/s**2)*m(x, y), \
                -4*u(t, x, y)/h**2 + u(t, x, -h + y)/h**2 + u(t, x, h + y)/h**2 \
                + u(t, -h + x, y)/h**2 + u(t, h + x, y)/h**2)";
    let got = eqn.to_string();
    ensure(got == want, format!("wave equation printed as {got}"))?;
    Ok("derivative and wave-equation strings match".into())
}

fn generated_source() -> Check {
    let cfg = DiffusionConfig::new(1000, 1000, 500);
    let (_, op) = diffusion_operator(&cfg).map_err(|e| e.to_string())?;
    let a = op.emit().map_err(|e| e.to_string())?;
    let b = diffusion_operator(&cfg).unwrap().1.emit().unwrap();
    ensure(a == b, "source differs between runs")?;
    let golden = include_str!("golden/diffusion_1000.c");
    ensure(a == golden, "source differs from the golden file")?;
    ensure(a.contains("t0 = (i3) % 2;") && a.contains("t1 = (t0 + 1) % 2;"), "missing % 2 aliasing")?;
    ensure(
        a.contains("for (int i1 = 1; i1<999; i1++)") && a.contains("for (int i2 = 1; i2<999; i2++)"),
        "spatial bounds are not 1..999",
    )?;
    let line = a
        .lines()
        .find(|l| l.trim_start().starts_with("u[t1][i1][i2] ="))
        .ok_or("no update line")?;
    ensure(line.matches("2.5e-1F*").count() == 4, format!("update is {line}"))?;
    ensure(!line.contains("u[t0][i1][i2]"), "center term present")?;
    Ok("aliasing, bounds and quarter weights present; byte-stable".into())
}

fn oracle_equivalence() -> Check {
    let start = Instant::now();
    let mut worst = [0.0f64; 2];
    for n in [16, 33, 64] {
        for nt in [1, 7, 100] {
            for order in [2, 4] {
                let init = random_field(n * n, (n * 1000 + nt * 10 + order) as u64);
                for (k, dtype, tol) in [(0, ElementType::F32, 1e-5), (1, ElementType::F64, 1e-12)] {
                    let cfg = DiffusionConfig::new(n, n, nt).with_order(order).with_dtype(dtype);
                    let oracle = diffusion_reference(&cfg, &init).map_err(|e| e.to_string())?;
                    let opts = RunOptions {
                        codegen: CodegenConfig::default().with_element_type(dtype),
                        ..RunOptions::default()
                    };
                    let (got, _) = diffusion_compiled(&cfg, &init, &opts).map_err(|e| e.to_string())?;
                    let err = max_relative_error(&got, &oracle);
                    worst[k] = worst[k].max(err);
                    ensure(err <= tol, format!("{n}^2 nt={nt} order={order} {}: {err:e}", dtype.name()))?;
                }
            }
        }
    }
    within(30, start)?;
    Ok(format!("worst f32 {:.2e}, f64 {:.2e}, {:.1?}", worst[0], worst[1], start.elapsed()))
}

fn adjoint_dot_test() -> Check {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    let cases: Vec<(Vec<usize>, usize, ElementType, f64)> = [2, 4, 6, 8, 10, 12]
        .iter()
        .map(|&o| (vec![60, 60], o, ElementType::F32, 1e-5))
        .chain([2, 4].iter().map(|&o| (vec![40, 40, 30], o, ElementType::F32, 1e-5)))
        .chain(std::iter::once((vec![60, 60], 2, ElementType::F64, 1e-10)))
        .collect();
    let mut failures = Vec::new();
    for (shape, order, dtype, tol) in cases {
        let model = AcousticModel::two_layer(&shape, order, dtype).map_err(|e| e.to_string())?;
        let opts = RunOptions {
            codegen: CodegenConfig::default().with_element_type(dtype),
            ..RunOptions::default()
        };
        let r = adjoint_test(&model, 7, &opts).map_err(|e| e.to_string())?;
        let dev = r.ratio.map_or(f64::INFINITY, |x| (x - 1.0).abs());
        lines.push(format!("    {} {}", dtype.name(), r));
        if dtype == ElementType::F32 {
            worst = worst.max(dev);
        }
        if !(dev <= tol) {
            failures.push(format!("{}D order {order} {}: |ratio - 1| = {dev:e}", r.dims, dtype.name()));
        }
    }
    report(&lines.join("\n"));
    ensure(failures.is_empty(), failures.join("; "))?;
    within(180, start)?;
    Ok(format!("worst f32 |ratio - 1| = {worst:.2e}, {:.1?}", start.elapsed()))
}

fn leaf_values(e: &Expr, rng: &mut ChaCha8Rng, values: &mut HashMap<Expr, f64>) {
    e.walk(&mut |n| {
        if matches!(n.node(), Node::Function { .. } | Node::Symbol(_)) {
            values.entry(n.clone()).or_insert_with(|| rng.gen_range(0.5..2.0));
        }
    });
}

fn cse_effect() -> Check {
    let start = Instant::now();
    let mut reg = SymbolRegistry::new();
    let u = reg.create_time("u", &[20, 20], 2, 12, ElementType::F64).unwrap();
    let m = reg.create_dense("m", &[20, 20], 12, ElementType::F64).unwrap();
    let eta = reg.create_dense("eta", &[20, 20], 12, ElementType::F64).unwrap();
    let pde = m.symbolic() * derivative(u.meta(), Derivative::Dt2).unwrap() - laplace(u.meta()).unwrap()
        + eta.symbolic() * derivative(u.meta(), Derivative::Dt).unwrap();
    let target = stencilforge::fd::time_accessor(u.meta(), stencilforge::fd::TimeAccess::Forward).unwrap();
    let stencil = expand(&solve_linear(&Eqn::new(pde, Expr::zero()), &target).unwrap()).unwrap();
    let res = cse(std::slice::from_ref(&stencil));
    let (before, after) = (count_ops(&stencil), res.count_ops());
    ensure(after < before, format!("ops {before} -> {after}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let mut values = HashMap::new();
        leaf_values(&stencil, &mut rng, &mut values);
        let lookup = |vals: &HashMap<Expr, f64>| {
            let vals = vals.clone();
            move |e: &Expr| vals.get(e).copied()
        };
        let direct = eval_f64(&stencil, &mut lookup(&values)).map_err(|e| e.to_string())?;
        let mut env = values.clone();
        for (name, e) in &res.temps {
            let v = eval_f64(e, &mut lookup(&env)).map_err(|e| e.to_string())?;
            env.insert(Expr::symbol(name), v);
        }
        let rewritten = eval_f64(&res.body[0], &mut lookup(&env)).map_err(|e| e.to_string())?;
        ensure(
            (direct - rewritten).abs() <= 1e-12 * direct.abs(),
            format!("{direct} vs {rewritten}"),
        )?;
    }
    within(1, start)?;
    Ok(format!("ops {before} -> {after} with {} temporaries", res.temps.len()))
}

fn run_diffusion(n: usize, nt: usize, plan: BlockingPlan, threads: Option<usize>) -> Result<GridFunction, String> {
    let cfg = DiffusionConfig::new(n, n, nt);
    let (mut u, op) = diffusion_operator(&cfg).map_err(|e| e.to_string())?;
    let init = random_field(n * n, 99);
    u.set_slot(0, &init).unwrap();
    u.set_slot(1, &init).unwrap();
    let mut op = op.blocking(plan);
    if let Some(t) = threads {
        op = op.threads(t);
    }
    op.apply(&mut [&mut u]).map_err(|e| e.to_string())?;
    Ok(u)
}

fn blocking_correctness() -> Check {
    let start = Instant::now();
    let reference = run_diffusion(64, 50, BlockingPlan::unblocked(), None)?;
    for b in [8, 16] {
        let blocked = run_diffusion(64, 50, BlockingPlan::new(&[("x", b), ("y", b)]), None)?;
        ensure(blocked.data().bits_eq(reference.data()), format!("{b}x{b} differs"))?;
    }
    let cfg = DiffusionConfig::new(64, 64, 50);
    let (mut u, op) = diffusion_operator(&cfg).map_err(|e| e.to_string())?;
    u.set_slot(0, &random_field(64 * 64, 99)).unwrap();
    let candidates = vec![
        BlockingPlan::unblocked(),
        BlockingPlan::new(&[("x", 8), ("y", 8)]),
        BlockingPlan::new(&[("x", 16), ("y", 16)]),
    ];
    let report = autotune(&op, &[&u], &candidates, &AutotuneOptions::default()).map_err(|e| e.to_string())?;
    ensure(candidates.contains(&report.best), format!("autotune picked {}", report.best))?;
    within(30, start)?;
    Ok(format!("8x8 and 16x16 bit-identical; autotune chose {}", report.best))
}

fn thread_independence() -> Check {
    let start = Instant::now();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let n_threads = cores.max(2);
    let one = run_diffusion(64, 50, BlockingPlan::unblocked(), Some(1))?;
    let many = run_diffusion(64, 50, BlockingPlan::unblocked(), Some(n_threads))?;
    ensure(one.data().bits_eq(many.data()), "diffusion differs across thread counts")?;

    let model = AcousticModel::two_layer(&[60, 60], 4, ElementType::F32).map_err(|e| e.to_string())?;
    let src = model.ricker_source();
    let mut out = Vec::new();
    for t in [1, n_threads] {
        let opts = RunOptions {
            threads: Some(t),
            ..RunOptions::default()
        };
        let r = stencilforge::apps::acoustic_forward(&model, &src, &opts).map_err(|e| e.to_string())?;
        out.push((r.wavefield, r.rec));
    }
    ensure(out[0].0.data().bits_eq(out[1].0.data()), "acoustic wavefield differs across thread counts")?;
    ensure(
        out[0].1.iter().zip(&out[1].1).all(|(a, b)| a.to_bits() == b.to_bits()),
        "receiver data differs across thread counts",
    )?;
    within(30, start)?;
    Ok(format!("1 vs {n_threads} threads bit-identical ({cores} cores)"))
}

fn performance() -> Check {
    let opts = BenchOptions {
        variants: vec![BenchVariant::Interpreter, BenchVariant::Jit],
        repeats: 3,
        threads: 1,
        ..BenchOptions::default()
    };
    let report = bench(&Scenario::Diffusion { n: 512, nt: 200 }, &opts).map_err(|e| e.to_string())?;
    let speedup = report
        .speedup(&BenchVariant::Interpreter, &BenchVariant::Jit)
        .ok_or("missing timings")?;
    ensure(speedup >= 5.0, format!("speedup {speedup:.2}"))?;
    Ok(format!(
        "speedup {speedup:.1}x (interpreter {:.2?}, jit {:.2?})",
        report.timing(&BenchVariant::Interpreter).unwrap().median(),
        report.timing(&BenchVariant::Jit).unwrap().median()
    ))
}

fn copy_op(reg: &SymbolRegistry, u: &GridFunction, custom: stencilforge::ir::CustomIteration) -> OperatorHandle {
    let fwd = stencilforge::fd::time_accessor(u.meta(), stencilforge::fd::TimeAccess::Forward).unwrap();
    OperatorHandle::new(reg, vec![Eqn::new(fwd, u.symbolic())])
        .timesteps(1)
        .custom(custom, stencilforge::ir::Placement::AfterStencil)
}

fn sparse_properties() -> Check {
    let start = Instant::now();
    let (n, h, np) = (24usize, 0.5f64, 100usize);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let coords: Vec<Vec<f64>> = (0..np)
        .map(|_| vec![rng.gen_range(0.0..(n - 1) as f64 * h), rng.gen_range(0.0..(n - 1) as f64 * h)])
        .collect();
    let pts = SparsePointSet::new(coords.clone()).map_err(|e| e.to_string())?;

    let mut worst_unity = 0.0f32;
    for c in &coords {
        let (_, w) = interpolation_weights(c, h, &[n, n]).map_err(|e| e.to_string())?;
        let total: f32 = w.iter().map(|&x| x as f32).sum();
        worst_unity = worst_unity.max((total - 1.0).abs());
    }
    ensure(worst_unity <= 1e-7, format!("weights sum off by {worst_unity:e}"))?;

    // sample a linear field with the compiled f32 kernel
    let lin = |x: f64, y: f64| 0.3 + 0.8 * x - 0.45 * y;
    let field: Vec<f64> = (0..n * n).map(|k| lin((k / n) as f64 * h, (k % n) as f64 * h)).collect();
    let mut reg = SymbolRegistry::new();
    let mut u = reg.create_time("u", &[n, n], 1, 2, ElementType::F32).unwrap();
    let mut r = reg.create_sparse("r", 1, np, ElementType::F32).unwrap();
    u.set_slot(0, &field).unwrap();
    let smp = build_sample(u.meta(), &pts, r.meta(), h, &Expr::one(), 1, 0).map_err(|e| e.to_string())?;
    copy_op(&reg, &u, smp).apply(&mut [&mut u, &mut r]).map_err(|e| e.to_string())?;
    let sampled = r.to_vec();
    let scale = field.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst_lin = coords
        .iter()
        .zip(&sampled)
        .map(|(c, s)| (s - lin(c[0], c[1])).abs() / scale)
        .fold(0.0f64, f64::max);
    ensure(worst_lin <= 1e-6, format!("linear reproduction error {worst_lin:e}"))?;

    // <inject(q), g> against <q, sample(g)>
    let q: Vec<f64> = (0..np).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let g: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut reg = SymbolRegistry::new();
    let mut u = reg.create_time("u", &[n, n], 1, 2, ElementType::F32).unwrap();
    let mut qf = reg.create_sparse("q", 1, np, ElementType::F32).unwrap();
    qf.fill_from(&q).unwrap();
    let inj = build_inject(u.meta(), &pts, qf.meta(), h, &Expr::one(), 1, 0).map_err(|e| e.to_string())?;
    copy_op(&reg, &u, inj).apply(&mut [&mut u, &mut qf]).map_err(|e| e.to_string())?;
    let lhs: f64 = u.slot(1).iter().zip(&g).map(|(a, b)| a * b).sum();
    let mut reg = SymbolRegistry::new();
    let mut v = reg.create_time("v", &[n, n], 1, 2, ElementType::F32).unwrap();
    let mut s = reg.create_sparse("s", 1, np, ElementType::F32).unwrap();
    v.set_slot(0, &g).unwrap();
    let smp = build_sample(v.meta(), &pts, s.meta(), h, &Expr::one(), 1, 0).map_err(|e| e.to_string())?;
    copy_op(&reg, &v, smp).apply(&mut [&mut v, &mut s]).map_err(|e| e.to_string())?;
    let rhs: f64 = q.iter().zip(s.to_vec()).map(|(a, b)| a * b).sum();
    let rel = (lhs - rhs).abs() / lhs.abs();
    ensure(rel <= 1e-6, format!("transpose pairing off by {rel:e}"))?;
    within(5, start)?;
    Ok(format!(
        "unity {worst_unity:.1e}, linear {worst_lin:.1e}, transpose {rel:.1e}"
    ))
}

#[test]
fn acceptance() {
    let checks: [(&str, fn() -> Check); 10] = [
        ("fd coefficient exactness", fd_coefficients),
        ("listing fidelity", listing_fidelity),
        ("generated-source golden", generated_source),
        ("oracle equivalence", oracle_equivalence),
        ("adjoint dot test", adjoint_dot_test),
        ("cse safety and effect", cse_effect),
        ("blocking correctness", blocking_correctness),
        ("thread independence", thread_independence),
        ("performance", performance),
        ("sparse interpolation", sparse_properties),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in checks.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => report(&format!("criterion {:>2} PASS  {name}: {detail}", i + 1)),
            Err(why) => {
                report(&format!("criterion {:>2} FAIL  {name}: {why}", i + 1));
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
