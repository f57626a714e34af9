use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use stepgl::halfplane::HalfDiskMesh;
use stepgl::io::*;
use stepgl::Error;

fn sample() -> GridFile {
    let mut g = GridFile::new("test");
    g.set("kappa", format!("{:e}", 12.5_f64))
        .set("b", format!("{:e}", 1.0_f64 / 3.0))
        .set("label", "two words");
    g.push(
        "u",
        &["re", "im"],
        vec![0.1, -2.5e-300, f64::MIN_POSITIVE, 1.0 / 7.0, -0.0, 3e200],
    );
    g.push("r", &["r"], vec![0.0, 0.5, 1.0]);
    g
}

#[test]
fn render_and_parse_round_trip_bit_exactly() {
    let g = sample();
    let back = GridFile::parse(&g.render(), "mem").unwrap();
    assert_eq!(back, g);
    let u = back.section("u").unwrap();
    assert_eq!(u.rows(), 3);
    for (x, y) in u.values.iter().zip(&g.section("u").unwrap().values) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    assert_eq!(back.header_f64("b").unwrap(), 1.0 / 3.0);
    assert_eq!(back.header["label"], "two words");
    assert_eq!(u.column(1).collect::<Vec<_>>(), vec![-2.5e-300, 1.0 / 7.0, 3e200]);
}

#[test]
fn rendering_is_stable() {
    assert_eq!(sample().render(), sample().render());
}

#[test]
fn truncation_is_reported_as_corruption() {
    let text = sample().render();
    let lines: Vec<&str> = text.lines().collect();
    for cut in 1..lines.len() {
        let partial = lines[..cut].join("\n");
        match GridFile::parse(&partial, "cut.grid") {
            Err(Error::CorruptFile { path, .. }) => assert_eq!(path, "cut.grid"),
            other => panic!("cut at {cut}: {other:?}"),
        }
    }
    let mid = &text[..text.len() / 2];
    let msg = GridFile::parse(mid, "half.grid").unwrap_err().to_string();
    assert!(msg.contains("half.grid"), "{msg}");
}

#[test]
fn malformed_rows_are_rejected() {
    let text = sample().render().replacen("1e-1 -2.5e-300", "1e-1 oops", 1);
    assert!(matches!(GridFile::parse(&text, "x"), Err(Error::CorruptFile { .. })));
    let text = sample().render().replacen("1e-1 -2.5e-300", "1e-1", 1);
    assert!(matches!(GridFile::parse(&text, "x"), Err(Error::CorruptFile { .. })));
    assert!(matches!(
        GridFile::parse("not a grid\n", "x"),
        Err(Error::CorruptFile { .. })
    ));
}

#[test]
fn file_round_trip_and_missing_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.grid");
    sample().write(&path).unwrap();
    assert_eq!(GridFile::read(&path).unwrap(), sample());
    let missing = dir.path().join("nope.grid");
    match GridFile::read(&missing) {
        Err(Error::Io { path, .. }) => assert!(path.ends_with("nope.grid")),
        other => panic!("{other:?}"),
    }
    let bad = dir.path().join("no/such/dir/g.grid");
    assert!(matches!(sample().write(&bad), Err(Error::Io { .. })));
}

#[test]
fn halfdisk_dump_carries_mesh_parameters() {
    let mesh = HalfDiskMesh::new(2.0, 0.25, FRAC_PI_2).unwrap();
    let u: Vec<Complex64> = mesh
        .lattice
        .points
        .iter()
        .map(|p| Complex64::new(p[0], p[1] * p[1]))
        .collect();
    let g = halfdisk_grid(&mesh, &u, &[("eigenvalue", format!("{:e}", 0.51_f64))]);
    let back = GridFile::parse(&g.render(), "hd").unwrap();
    assert_eq!(back.kind, "halfdisk");
    assert_eq!(back.header_f64("radius"), Some(2.0));
    assert_eq!(back.header_f64("spacing"), Some(0.25));
    assert_eq!(back.header_f64("alpha"), Some(FRAC_PI_2));
    assert_eq!(back.header_f64("eigenvalue"), Some(0.51));
    assert_eq!(back.header_f64("nodes"), Some(mesh.len() as f64));
    let v = back.section("u").unwrap();
    assert_eq!(v.rows(), mesh.len());
    assert!(v.column(0).zip(&u).all(|(x, y)| x == y.re));
}
