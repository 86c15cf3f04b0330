use laminate_core::{AfsParams, AfsStaircase, Vec2};
use laminate_geometry::ConvexPolygon;
use laminate_realize::{io, realize_staircase, restart_iteration, RealizeConfig, Tag};

fn depth_four() -> (AfsParams, AfsStaircase, RealizeConfig) {
    let p = AfsParams::defaults(2.0).unwrap();
    let st = AfsStaircase::build(p.default_x0(), &p, 4).unwrap();
    (p, st, RealizeConfig::default())
}

#[test]
fn depth_four_masses_and_budget() {
    let (p, st, cfg) = depth_four();
    let t = std::time::Instant::now();
    let f = realize_staircase(
        &st.trunc,
        &cfg,
        Vec2::ZERO,
        &ConvexPolygon::unit_square(),
        &p,
    )
    .unwrap();
    let stats = f.stats();
    eprintln!("built in {:?}: {:?}", t.elapsed(), stats);
    let census = f.census();
    let c = cfg.eta.exp();
    for a in st.trunc.nu.atoms() {
        let m: f64 = census
            .iter()
            .filter(|e| !e.tag.is_error() && e.grad.distance(&a.matrix) <= 1e-8)
            .map(|e| e.area)
            .sum();
        assert!(
            m >= a.weight / c && m <= a.weight * c,
            "{m} vs {}",
            a.weight
        );
    }
    let e = f.error_integral(2.0);
    eprintln!(
        "error integral {e:e}, sup bound {:e}",
        f.sup_bound().unwrap()
    );
    assert!(e <= 0.1);
    for entry in &census {
        match entry.tag {
            Tag::K => assert!(p.in_k(&entry.grad, 1e-9)),
            Tag::Active => assert_eq!(entry.grad, st.trunc.x_last()),
            _ => assert!(p.in_u(&entry.grad)),
        }
    }
}

#[test]
fn two_restart_rounds() {
    let (p, st, cfg) = depth_four();
    let f0 = realize_staircase(
        &st.trunc,
        &cfg,
        Vec2::ZERO,
        &ConvexPolygon::unit_square(),
        &p,
    )
    .unwrap();
    let t = std::time::Instant::now();
    let f1 = restart_iteration(&f0, &p, &cfg).unwrap();
    let f2 = restart_iteration(&f1, &p, &cfg).unwrap();
    eprintln!("restarts in {:?}: {:?}", t.elapsed(), f2.stats());
    for r in &f2.history {
        eprintln!("{r:?}");
    }
    assert!(f2.error_integral(2.0) <= 0.25);
    let s = io::to_json(&f2).unwrap();
    eprintln!("json bytes {}", s.len());
    assert_eq!(io::to_json(&io::from_json(&s).unwrap()).unwrap(), s);
}
