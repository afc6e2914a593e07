use super::*;
use crate::fd::{derivative, laplace, time_accessor, Derivative, TimeAccess};
use crate::grid::{ElementType, GridFunction};
use crate::symbolic::{expand, solve_linear, substitute, Num};

fn diffusion_eq(reg: &mut SymbolRegistry, n: usize, order: usize) -> (GridFunction, Eqn) {
    let u = reg.create_time("u", &[n, n], 1, order, ElementType::F64).unwrap();
    let eqn = Eqn::new(
        derivative(u.meta(), Derivative::Dt).unwrap(),
        Expr::symbol("a") * laplace(u.meta()).unwrap(),
    );
    let fwd = time_accessor(u.meta(), TimeAccess::Forward).unwrap();
    let stencil = solve_linear(&eqn, &fwd).unwrap();
    (u, Eqn::new(fwd, stencil))
}

fn fold(nest: &mut LoopNest, subs: &[(&str, f64)]) {
    let map: Vec<(Expr, Expr)> = subs
        .iter()
        .map(|(k, v)| (Expr::symbol(k), Expr::from_num(Num::Float(*v))))
        .collect();
    nest.map_assignments(&mut |a| {
        Ok(Assignment {
            lhs: a.lhs.clone(),
            rhs: expand(&substitute(&a.rhs, &map)?)?,
        })
    })
    .unwrap();
}

#[test]
fn indexify_examples() {
    let mut reg = SymbolRegistry::new();
    reg.create_dense("f", &[10, 12], 2, ElementType::F32).unwrap();
    reg.create_time("u", &[10, 12], 2, 2, ElementType::F32).unwrap();
    let h = Expr::symbol("h");
    let f = |a: Expr, b: Expr| Expr::func("f", vec![a, b]);
    let x = Expr::symbol("x");
    let y = Expr::symbol("y");
    let e = indexify(&reg, &f(h.clone() + x.clone(), y.clone())).unwrap();
    assert_eq!(e.to_string(), "f[x + 1, y]");
    assert_eq!(indexify(&reg, &f(x.clone(), y.clone())).unwrap().to_string(), "f[x, y]");
    let u = Expr::func("u", vec![Expr::symbol("s") + Expr::symbol("t"), x.clone(), y.clone()]);
    assert_eq!(indexify(&reg, &u).unwrap().to_string(), "u[t + 1, x, y]");
    let back = Expr::func("u", vec![Expr::symbol("t") - Expr::symbol("s"), x.clone(), y.clone()]);
    assert_eq!(indexify(&reg, &back).unwrap().to_string(), "u[t - 1, x, y]");
    let scaled = f(x.clone(), y.clone()) / (h.clone() * h.clone());
    let s = indexify(&reg, &simplify(&scaled).unwrap()).unwrap();
    assert_eq!(s.to_string(), "f[x, y]/h**2");
    assert!(matches!(
        indexify(&reg, &f(x.clone() + h.clone() * h.clone(), y.clone())),
        Err(IrError::NonIntegerOffset { .. })
    ));
    assert!(matches!(
        indexify(&reg, &Expr::func("g", vec![x, y])),
        Err(IrError::UnknownSymbol(_))
    ));
}

#[test]
fn iteration_space_from_offsets() {
    let mut reg = SymbolRegistry::new();
    let (_, eq) = diffusion_eq(&mut reg, 1000, 2);
    let eq = indexify_eqn(&reg, &eq).unwrap();
    let dims = infer_iteration_space(&reg, &[eq]).unwrap();
    assert_eq!(dims.iter().map(|d| d.bounds()).collect::<Vec<_>>(), vec![(1, 999), (1, 999)]);

    let mut reg = SymbolRegistry::new();
    let (_, eq) = diffusion_eq(&mut reg, 100, 4);
    let eq = indexify_eqn(&reg, &eq).unwrap();
    // offsets -2..=2 along each axis, counted by hand from the 5-point stencil
    let dims = infer_iteration_space(&reg, &[eq]).unwrap();
    assert_eq!(dims[0].bounds(), (2, 98));
    assert_eq!((dims[1].lower_pad, dims[1].upper_pad), (2, 2));

    let mut reg = SymbolRegistry::new();
    let f = reg.create_dense("f", &[7, 9], 2, ElementType::F32).unwrap();
    let eq = indexify_eqn(&reg, &Eqn::new(f.symbolic(), Expr::int(3))).unwrap();
    let dims = infer_iteration_space(&reg, &[eq]).unwrap();
    assert_eq!(dims[0].bounds(), (0, 7));
    assert_eq!(dims[1].bounds(), (0, 9));

    assert!(matches!(
        infer_iteration_space(&reg, &[]),
        Err(IrError::EmptyIterationSpace { .. })
    ));
}

#[test]
fn reach_larger_than_extent_is_empty() {
    let mut reg = SymbolRegistry::new();
    reg.create_dense("f", &[3, 3], 2, ElementType::F32).unwrap();
    let x = Expr::symbol("x");
    let y = Expr::symbol("y");
    let h = Expr::symbol("h");
    let rhs = Expr::func("f", vec![x.clone() + h.clone(), y.clone()])
        + Expr::func("f", vec![x.clone() - h.clone() - h.clone(), y.clone()]);
    let eq = indexify_eqn(&reg, &Eqn::new(Expr::func("f", vec![x, y]), simplify(&rhs).unwrap())).unwrap();
    assert!(matches!(
        infer_iteration_space(&reg, &[eq]),
        Err(IrError::EmptyIterationSpace { .. })
    ));
}

#[test]
fn two_buffer_aliasing() {
    let mut reg = SymbolRegistry::new();
    let (_, eq) = diffusion_eq(&mut reg, 16, 2);
    let time = TimeLoop {
        lo: 0,
        hi: 5,
        direction: Direction::Forward,
    };
    let nest = lower(&reg, &[eq], Some(time), &[]).unwrap();
    let text = print_nest(&nest);
    assert!(text.starts_with("for i3 in [0, 5)\n  single\n    t0 = (i3) % 2\n    t1 = (t0 + 1) % 2\n"));
    assert!(text.contains("  for i1 in [1, 15) [parallel]\n    for i2 in [1, 15) [simd]\n      u[t1, i1, i2] = "));
    assert_eq!(nest.dims.iter().find(|d| d.is_time).unwrap().buffer_count, Some(2));
}

#[test]
fn three_buffer_aliasing_and_backward_roles() {
    let mut reg = SymbolRegistry::new();
    let u = reg.create_time("u", &[12, 12], 2, 2, ElementType::F64).unwrap();
    let wave = Eqn::new(derivative(u.meta(), Derivative::Dt2).unwrap(), laplace(u.meta()).unwrap());
    let fwd = time_accessor(u.meta(), TimeAccess::Forward).unwrap();
    let eq = Eqn::new(fwd.clone(), solve_linear(&wave, &fwd).unwrap());
    let nest = lower(
        &reg,
        &[eq],
        Some(TimeLoop {
            lo: 1,
            hi: 4,
            direction: Direction::Forward,
        }),
        &[],
    )
    .unwrap();
    let text = print_nest(&nest);
    assert!(text.contains("t0 = (i3 + 2) % 3\n    t1 = (t0 + 1) % 3\n    t2 = (t0 + 2) % 3\n"));
    assert!(text.contains("u[t2, i1, i2] = "));

    let back = time_accessor(u.meta(), TimeAccess::Backward).unwrap();
    let eq = Eqn::new(back.clone(), solve_linear(&wave, &back).unwrap());
    let nest = lower(
        &reg,
        &[eq],
        Some(TimeLoop {
            lo: 1,
            hi: 4,
            direction: Direction::Backward,
        }),
        &[],
    )
    .unwrap();
    let text = print_nest(&nest);
    assert!(text.starts_with("for i3 in [1, 4) [backward]\n"));
    // the update target is the lowest offset, i.e. the first alias
    assert!(text.contains("u[t0, i1, i2] = "));
}

#[test]
fn same_buffer_read_is_rejected() {
    let mut reg = SymbolRegistry::new();
    let _u = reg.create_time("u", &[8, 8], 1, 2, ElementType::F64).unwrap();
    let x = Expr::symbol("x");
    let y = Expr::symbol("y");
    let t = Expr::symbol("t");
    let s = Expr::symbol("s");
    let h = Expr::symbol("h");
    // reads u(t - s) which shares the buffer of u(t + s) when there are two slots
    let eq = Eqn::new(
        Expr::func("u", vec![t.clone() + s.clone(), x.clone(), y.clone()]),
        Expr::func("u", vec![t - s, x + h, y]),
    );
    let err = lower(
        &reg,
        &[eq],
        Some(TimeLoop {
            lo: 0,
            hi: 1,
            direction: Direction::Forward,
        }),
        &[],
    )
    .unwrap_err();
    assert!(matches!(err, IrError::TimeBufferHazard { .. }));
}

fn point_iteration(x_index: Expr) -> CustomIteration {
    let p = Expr::symbol("p");
    let t = Expr::symbol("t");
    let target = Expr::indexed("u", vec![t.clone() + Expr::one(), x_index, Expr::int(3)]);
    CustomIteration {
        index: Dimension::custom("p", 2),
        limits: (0, 2),
        eqs: vec![Eqn::new(
            target.clone(),
            target + Expr::indexed("src_w", vec![p.clone()]) * Expr::indexed("q", vec![t, p]),
        )],
        tables: vec![ConstTable {
            name: "src_w".into(),
            shape: vec![2],
            data: TableData::Float(vec![0.5, 0.25]),
        }],
    }
}

#[test]
fn custom_iterations() {
    let mut reg = SymbolRegistry::new();
    let (_, eq) = diffusion_eq(&mut reg, 8, 2);
    reg.create_sparse("q", 4, 2, ElementType::F64).unwrap();
    let time = Some(TimeLoop {
        lo: 0,
        hi: 3,
        direction: Direction::Forward,
    });
    let inject = point_iteration(Expr::symbol("p") + Expr::int(2));
    let nest = lower(&reg, &[eq.clone()], time, &[(inject.clone(), Placement::AfterStencil)]).unwrap();
    let text = print_nest(&nest);
    let stencil_at = text.find("for i1").unwrap();
    let single_at = text.rfind("single").unwrap();
    assert!(stencil_at < single_at);
    assert!(text.contains("for p in [0, 2)\n      u[t1, p + 2, 3] = "));
    assert_eq!(nest.params.iter().map(|m| m.name.as_str()).collect::<Vec<_>>(), vec!["u", "q"]);

    let before = lower(&reg, &[eq.clone()], time, &[(inject, Placement::BeforeStencil)]).unwrap();
    let text = print_nest(&before);
    assert!(text.find("for p").unwrap() < text.find("for i1").unwrap());
    assert!(text.find("t1 = ").unwrap() < text.find("for p").unwrap());

    let empty = CustomIteration {
        index: Dimension::custom("p", 2),
        limits: (0, 2),
        eqs: vec![],
        tables: vec![],
    };
    let base = lower(&reg, &[eq.clone()], time, &[]).unwrap();
    let same = lower(&reg, &[eq.clone()], time, &[(empty, Placement::AfterStencil)]).unwrap();
    assert_eq!(base, same);

    let unbound = point_iteration(Expr::symbol("x"));
    assert!(matches!(
        lower(&reg, &[eq], time, &[(unbound, Placement::AfterStencil)]),
        Err(IrError::UnboundIndex(_))
    ));
}

#[test]
fn interpreter_matches_direct_evaluation() {
    use crate::symbolic::eval_f64;
    use rand::{Rng, SeedableRng};
    let mut reg = SymbolRegistry::new();
    let (mut u, eq) = diffusion_eq(&mut reg, 9, 4);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let init: Vec<f64> = (0..u.meta().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    u.fill_from(&init).unwrap();
    let (a, h, s) = (0.7, 0.1, 0.002);
    let mut nest = lower(
        &reg,
        &[eq.clone()],
        Some(TimeLoop {
            lo: 0,
            hi: 1,
            direction: Direction::Forward,
        }),
        &[],
    )
    .unwrap();
    fold(&mut nest, &[("a", a), ("h", h), ("s", s)]);
    let mut trace = Trace::default();
    interpret(&nest, &mut [&mut u], Some(&mut trace)).unwrap();
    assert_eq!(trace.writes.len(), 5 * 5);
    // evaluate the unlowered update directly, reading u(t + k*s, x + i*h, ...) from the initial data
    for i in 2..7usize {
        for j in 2..7usize {
            let v = eval_f64(&eq.rhs, &mut |leaf| match leaf.node() {
                Node::Symbol(name) => match &**name {
                    "a" => Some(a),
                    "h" => Some(h),
                    "s" => Some(s),
                    _ => None,
                },
                Node::Function { args, .. } => {
                    let off = |e: &Expr, d: &str, sp: &str| {
                        let k = simplify(&((e.clone() - Expr::symbol(d)) / Expr::symbol(sp))).unwrap();
                        k.as_num().unwrap().as_i64().unwrap()
                    };
                    let ti = off(&args[0], "t", "s");
                    let xi = i as i64 + off(&args[1], "x", "h");
                    let yi = j as i64 + off(&args[2], "y", "h");
                    assert_eq!(ti, 0);
                    Some(init[(xi * 9 + yi) as usize])
                }
                _ => None,
            })
            .unwrap();
            let got = u.get(&[1, i, j]).unwrap();
            assert!((got - v).abs() <= 1e-12 * v.abs().max(1.0), "{got} vs {v}");
        }
    }
}

#[test]
fn interpreter_reports_out_of_bounds() {
    let mut reg = SymbolRegistry::new();
    let mut f = reg.create_dense("f", &[4, 4], 2, ElementType::F64).unwrap();
    let nest = LoopNest {
        params: vec![f.meta().clone()],
        tables: vec![],
        dims: vec![],
        body: vec![IrNode::Expression(Assignment {
            lhs: Expr::indexed("f", vec![Expr::int(4), Expr::int(0)]),
            rhs: Expr::one(),
        })],
    };
    assert!(matches!(
        interpret(&nest, &mut [&mut f], None),
        Err(IrError::OutOfBounds { .. })
    ));
}

#[test]
fn indexed_access_round_trip() {
    let e = Expr::indexed("u", vec![simplify(&(Expr::symbol("t") + Expr::int(1))).unwrap(), Expr::symbol("x")]);
    let a = IndexedAccess::from_expr(&e).unwrap();
    assert_eq!(a.indices, vec![("t".to_string(), 1), ("x".to_string(), 0)]);
    assert_eq!(a.to_expr(), e);
}
