use std::fs;
use std::path::Path;

use proptest::prelude::*;
use swlidar::io::*;
use swlidar::phantom;
use swlidar::{DepthField, ImageDims, IrfBank64, Photon, ReflectivityCube64, SceneCube, WeightField64};

fn arb_scene() -> impl Strategy<Value = SceneCube> {
    (1usize..4, 1usize..4, 2usize..30).prop_flat_map(|(rows, cols, t_len)| {
        let n = rows * cols;
        proptest::collection::vec(proptest::collection::vec((1..=t_len as u32, 1u32..5), 0..6), n).prop_map(
            move |lists| {
                let photons: Vec<Vec<Photon>> = lists
                    .into_iter()
                    .map(|l| l.into_iter().map(|(bin, count)| Photon { bin, count }).collect())
                    .collect();
                SceneCube::from_photons(ImageDims::new(rows, cols), t_len, photons).unwrap()
            },
        )
    })
}

fn same_scene(a: &SceneCube, b: &SceneCube) -> bool {
    a.dims() == b.dims()
        && a.t_len() == b.t_len()
        && (0..a.n_pixels()).all(|n| a.photons(n) == b.photons(n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sparse_scene_round_trip(scene in arb_scene()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.txt");
        write_scene(&path, &scene).unwrap();
        let back = read_scene(&path).unwrap();
        prop_assert!(same_scene(&scene, &back));
        let path2 = dir.path().join("s2.txt");
        write_scene(&path2, &back).unwrap();
        prop_assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn dense_scene_round_trip(scene in arb_scene()) {
        let dir = tempfile::tempdir().unwrap();
        let (bin, hdr) = (dir.path().join("s.bin"), dir.path().join("s.hdr"));
        write_scene_dense(&bin, &hdr, &scene).unwrap();
        let back = read_scene_dense(&bin, &hdr).unwrap();
        prop_assert!(same_scene(&scene, &back));
        prop_assert_eq!(fs::metadata(&bin).unwrap().len() as usize, scene.n_pixels() * scene.t_len() * 4);
    }

    #[test]
    fn real_matrices_round_trip_bit_exactly(
        values in proptest::collection::vec(prop_oneof![0.0f64..1.0, 1e-300f64..1e-290, Just(0.0)], 6),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let dims = ImageDims::new(2, 3);
        let b: Vec<f64> = values.iter().map(|v| v * 3.0).collect();
        let cube = ReflectivityCube64::new(dims, 1, values.clone(), b).unwrap();
        write_reflectivity(dir.path(), "r", &cube).unwrap();
        let back: ReflectivityCube64 = read_reflectivity(dir.path(), "r", 1).unwrap();
        prop_assert_eq!(back.r_slice(), cube.r_slice());
        prop_assert_eq!(back.b_slice(), cube.b_slice());

        let w: Vec<f64> = values.iter().map(|v| v * 0.5).collect();
        let field = WeightField64::from_vec(ImageDims::new(3, 1), 2, w).unwrap();
        write_weights(dir.path(), "w", &field).unwrap();
        let back: WeightField64 = read_weights(dir.path(), "w", 2).unwrap();
        prop_assert_eq!(back.as_slice(), field.as_slice());
    }

    #[test]
    fn depth_round_trip(t in proptest::collection::vec(2usize..500, 12)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.txt");
        let depth = DepthField::new(ImageDims::new(3, 4), t).unwrap();
        write_depth(&path, &depth).unwrap();
        prop_assert_eq!(read_depth(&path).unwrap(), depth);
    }
}

#[test]
fn irf_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("irf.txt");
    let bank: IrfBank64 = IrfBank64::new(vec![vec![0.1, 1.0 / 3.0, 0.0], vec![2.5e-17, 0.7, 1e-300]], 40, 3, 30).unwrap();
    write_irf(&path, &bank).unwrap();
    let back: IrfBank64 = read_irf(&path).unwrap();
    assert_eq!(back, bank);
}

/// Single-token mutations of a file: each token deleted, duplicated, or
/// replaced by a malformed value.
fn mutations(text: &str, replacements: &[&str]) -> Vec<String> {
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        for j in 0..toks.len() {
            let rebuild = |new: Vec<String>| {
                let mut ls: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
                ls[i] = new.join(" ");
                ls.join("\n") + "\n"
            };
            let base: Vec<String> = toks.iter().map(|s| s.to_string()).collect();
            let mut del = base.clone();
            del.remove(j);
            out.push(rebuild(del));
            let mut dup = base.clone();
            dup.insert(j, toks[j].to_string());
            out.push(rebuild(dup));
            for r in replacements {
                if *r != toks[j] {
                    let mut rep = base.clone();
                    rep[j] = r.to_string();
                    out.push(rebuild(rep));
                }
            }
        }
    }
    out
}

fn assert_all_rejected<T: std::fmt::Debug>(
    dir: &Path,
    text: &str,
    replacements: &[&str],
    read: impl Fn(&Path) -> swlidar::Result<T>,
) {
    let path = dir.join("mutant.txt");
    fs::write(&path, text).unwrap();
    read(&path).expect("unmutated file parses");
    let muts = mutations(text, replacements);
    assert!(!muts.is_empty());
    for m in muts {
        fs::write(&path, &m).unwrap();
        assert!(read(&path).is_err(), "mutant accepted:\n{m}");
    }
}

#[test]
fn scene_parser_rejects_token_mutations() {
    let dir = tempfile::tempdir().unwrap();
    let text = "2 2 9\n0 3 2\n0 7 1\n2 1 4\n3 9 1\n";
    let bad = ["x", "-1", "1.5", "01", "+3", "1e2", "18446744073709551616", "3x", "--"];
    assert_all_rejected(dir.path(), text, &bad, read_scene);
    // data lines must stay sorted, so swapping two of them is also malformed
    let lines: Vec<&str> = text.lines().collect();
    for i in 1..lines.len() - 1 {
        let mut ls = lines.clone();
        ls.swap(i, i + 1);
        let path = dir.path().join("swap.txt");
        fs::write(&path, ls.join("\n") + "\n").unwrap();
        assert!(read_scene(&path).is_err());
    }
}

#[test]
fn irf_parser_rejects_token_mutations() {
    let dir = tempfile::tempdir().unwrap();
    let text = "2 12 3 9 3\n1e0 0e0\n5e-1 2e0\n0e0 1e0\n";
    assert_all_rejected(dir.path(), text, &["x", "-1", "nan", "inf", "-inf", "--", "1e", "0x1", "2.5.1"], read_irf::<f64>);
}

#[test]
fn depth_parser_rejects_token_mutations() {
    let dir = tempfile::tempdir().unwrap();
    let text = "4 5\n6 7\n";
    assert_all_rejected(dir.path(), text, &["x", "-1", "1.5", "05", "+4", "1e1"], read_depth);
}

#[test]
fn structural_damage_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.txt");
    for bad in ["", "1 1 5", "1 1 5\n\n", "1 1 5\n0 2 1", "1 1 5\r\n0 2 1\r\n", "1 1 5\n0 2 1\n\n"] {
        fs::write(&path, bad).unwrap();
        assert!(read_scene(&path).is_err(), "accepted {bad:?}");
    }
    let (bin, hdr) = (dir.path().join("s.bin"), dir.path().join("s.hdr"));
    fs::write(&hdr, "1 1 2\n").unwrap();
    fs::write(&bin, [0u8; 7]).unwrap();
    assert!(read_scene_dense(&bin, &hdr).is_err());
    fs::write(&bin, [0u8; 8]).unwrap();
    assert!(read_scene_dense(&bin, &hdr).is_ok());
    fs::write(&hdr, "1 1 2\n1 1 2\n").unwrap();
    assert!(read_scene_dense(&bin, &hdr).is_err());
}

#[test]
fn bundled_phantom_files_match_the_generator() {
    let dir = phantom::data_dir();
    let depth = read_depth(&dir.join("depth.txt")).unwrap();
    for bands in [1usize, 4] {
        let p = phantom::phantom::<f64>(bands).unwrap();
        let bank: IrfBank64 = read_irf(&dir.join(format!("irf_l{bands}.txt"))).unwrap();
        assert_eq!(bank, p.bank);
        let truth: ReflectivityCube64 = read_reflectivity(&dir, &format!("truth_l{bands}"), bands).unwrap();
        assert_eq!(truth.r_slice(), p.truth.r_slice());
        assert_eq!(truth.b_slice(), p.truth.b_slice());
        assert_eq!(depth, p.depth);
    }
}
