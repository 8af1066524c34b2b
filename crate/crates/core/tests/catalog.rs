use std::collections::BTreeSet;
use std::io::{self, Read};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skyfed_core::catalog::synth::{random_coord, spine_csv, spine_edition, SynthSpec};
use skyfed_core::catalog::{
    load_edition, make_pyramid, spine_schema, CatalogStore, LoadError, LoadInput, RULE_INTEGRITY,
};
use skyfed_core::sphere::{angular_distance, Cone};

const SPEC_HEADER: &str = "id,ra,dec,redshift,class,sn\n";
const PHOTO_HEADER: &str = "id,ra,dec,mag_u,mag_g,mag_r,mag_i,mag_z,obj_type,saturated,spec_id\n";

#[test]
fn empty_stream_publishes_an_empty_edition() {
    let dir = tempfile::tempdir().unwrap();
    let store = CatalogStore::open(dir.path()).unwrap();
    let (ed, report) = store.load(&spine_schema(), vec![LoadInput::new("photo_obj", io::empty())]).unwrap();
    assert_eq!(report.rows_loaded, 0);
    assert_eq!(report.edition, 1);
    assert_eq!(store.current().unwrap(), Some(1));
    assert_eq!(ed.table("photo_obj").unwrap().len(), 0);
}

#[test]
fn foreign_key_violations_are_rejected() {
    let spec = format!("{SPEC_HEADER}1,10.0,0.0,0.1,GALAXY,5.0\n");
    let photo = format!("{PHOTO_HEADER}1,10.0,0.0,20,19,18,17.5,17,GALAXY,0,1\n2,11.0,0.0,20,19,18,17.5,17,STAR,0,99\n3,12.0,1.0,20,19,18,17.5,17,STAR,1,\n");
    let (ed, report) = load_edition(
        &spine_schema(),
        vec![LoadInput::new("photo_obj", photo.as_bytes()), LoadInput::new("spec_obj", spec.as_bytes())],
    )
    .unwrap();
    assert_eq!(report.rows_read, 4);
    assert_eq!(report.rows_loaded, 3);
    assert_eq!(report.rows_rejected, 1);
    let r = &report.rejections[0];
    assert_eq!((r.table.as_str(), r.line, r.rule.as_str()), ("photo_obj", 3, RULE_INTEGRITY));
    assert_eq!(ed.table("photo_obj").unwrap().len(), 2);
}

#[test]
fn row_level_rules() {
    let photo = format!(
        "{PHOTO_HEADER}1,10,0,20,19,18,17,17,STAR,0,\n1,10,0,20,19,18,17,17,STAR,0,\n2,10,95,20,19,18,17,17,STAR,0,\n3,x,0,20,19,18,17,17,STAR,0,\n4,10,0\n,10,0,20,19,18,17,17,STAR,0,\n5,1,1,20,19,18,17,17,STAR,0,\n6,1,1,20,19,18,17,17,STAR,0,\n7,1,1,20,19,18,17,17,STAR,0,\n8,1,1,20,19,18,17,17,STAR,0,\n9,1,1,20,19,18,17,17,STAR,0,\n"
    );
    let (_, report) = load_edition(&spine_schema(), vec![LoadInput::new("photo_obj", photo.as_bytes())]).unwrap();
    let rules: Vec<&str> = report.rejections.iter().map(|r| r.rule.as_str()).collect();
    assert_eq!(
        rules,
        vec!["duplicate primary key", "invalid coordinate", "type mismatch", "arity", "missing primary key"]
    );
    assert_eq!(report.rows_read, report.rows_loaded + report.rows_rejected);
}

#[test]
fn mostly_bad_input_aborts_without_publishing() {
    let photo = format!("{PHOTO_HEADER}1,10,0,20,19,18,17,17,STAR,0,\n2,x,0,,,,,,,,\n3,x,0,,,,,,,,\n");
    let dir = tempfile::tempdir().unwrap();
    let store = CatalogStore::open(dir.path()).unwrap();
    let err = store.load(&spine_schema(), vec![LoadInput::new("photo_obj", photo.as_bytes())]).unwrap_err();
    assert!(matches!(err, LoadError::TooManyRejected { rejected: 2, read: 3 }));
    assert_eq!(store.current().unwrap(), None);
    assert!(store.editions().unwrap().is_empty());
}

struct Failing {
    served: usize,
}

impl Read for Failing {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let data = PHOTO_HEADER.as_bytes();
        if self.served < data.len() {
            let n = buf.len().min(data.len() - self.served);
            buf[..n].copy_from_slice(&data[self.served..self.served + n]);
            self.served += n;
            Ok(n)
        } else {
            Err(io::Error::other("disk went away"))
        }
    }
}

#[test]
fn unreadable_stream_aborts() {
    let dir = tempfile::tempdir().unwrap();
    let store = CatalogStore::open(dir.path()).unwrap();
    let err = store.load(&spine_schema(), vec![LoadInput::new("photo_obj", Failing { served: 0 })]).unwrap_err();
    assert!(matches!(err, LoadError::Read { .. }), "{err}");
    assert!(store.editions().unwrap().is_empty());
    assert!(std::fs::read_dir(dir.path().join("editions")).unwrap().next().is_none());
}

#[test]
fn header_must_match_schema() {
    let err = load_edition(&spine_schema(), vec![LoadInput::new("spec_obj", "id,ra,dec\n1,2,3\n".as_bytes())]).unwrap_err();
    assert!(matches!(err, LoadError::Header { .. }));
    let err = load_edition(&spine_schema(), vec![LoadInput::new("nope", io::empty())]).unwrap_err();
    assert!(matches!(err, LoadError::UnknownTable(_)));
}

#[test]
fn synthetic_catalog_round_trips_and_reloads_identically() {
    let (spec, photo) = spine_csv(&SynthSpec::new(10_000, 5));
    let dir = tempfile::tempdir().unwrap();
    let store = CatalogStore::open(dir.path()).unwrap();
    let inputs = || vec![LoadInput::new("spec_obj", &spec[..]), LoadInput::new("photo_obj", &photo[..])];
    let (first, report) = store.load(&spine_schema(), inputs()).unwrap();
    assert_eq!(report.rows_rejected, 0);
    assert_eq!(report.rows_loaded as usize, 10_000 + first.table("spec_obj").unwrap().len());

    let mut exported = Vec::new();
    first.export("photo_obj", &mut exported).unwrap();
    assert_eq!(exported, photo);
    exported.clear();
    first.export("spec_obj", &mut exported).unwrap();
    assert_eq!(exported, spec);

    let (second, _) = store.load(&spine_schema(), inputs()).unwrap();
    assert_eq!(second.number(), first.number() + 1);
    assert_eq!(second.checksum(), first.checksum());
    // Table files are byte-identical; only the manifest carries the number.
    let e1 = dir.path().join("editions/00000001/photo_obj");
    let e2 = dir.path().join("editions/00000002/photo_obj");
    for entry in std::fs::read_dir(&e1).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(std::fs::read(e1.join(&name)).unwrap(), std::fs::read(e2.join(&name)).unwrap());
    }

    let reopened = store.open_edition(1).unwrap();
    assert_eq!(reopened.checksum(), first.checksum());
    let mut again = Vec::new();
    reopened.export("photo_obj", &mut again).unwrap();
    assert_eq!(again, photo);
}

#[test]
fn published_editions_do_not_change() {
    let dir = tempfile::tempdir().unwrap();
    let store = CatalogStore::open(dir.path()).unwrap();
    let (a, b) = spine_csv(&SynthSpec::new(500, 1));
    store.load(&spine_schema(), vec![LoadInput::new("spec_obj", &a[..]), LoadInput::new("photo_obj", &b[..])]).unwrap();
    let before = std::fs::read(dir.path().join("editions/00000001/photo_obj/col.ra.bin")).unwrap();
    let (c, d) = spine_csv(&SynthSpec::new(700, 2));
    store.load(&spine_schema(), vec![LoadInput::new("spec_obj", &c[..]), LoadInput::new("photo_obj", &d[..])]).unwrap();
    let after = std::fs::read(dir.path().join("editions/00000001/photo_obj/col.ra.bin")).unwrap();
    assert_eq!(before, after);
    assert_eq!(store.open_edition(1).unwrap().table("photo_obj").unwrap().len(), 500);
    assert_eq!(store.open_current().unwrap().table("photo_obj").unwrap().len(), 700);
}

#[test]
fn corrupted_files_are_detected() {
    let dir = tempfile::tempdir().unwrap();
    let store = CatalogStore::open(dir.path()).unwrap();
    let (a, b) = spine_csv(&SynthSpec::new(50, 1));
    store.load(&spine_schema(), vec![LoadInput::new("spec_obj", &a[..]), LoadInput::new("photo_obj", &b[..])]).unwrap();
    let path = dir.path().join("editions/00000001/photo_obj/col.mag_r.bin");
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0xff;
    std::fs::write(&path, bytes).unwrap();
    assert!(store.open_edition(1).is_err());
}

// Independent restatement of the subset rule for the pyramid oracle.
fn oracle_keep(id: i64, fraction: f64) -> bool {
    let mut z = (id as u64 ^ 0x243F_6A88_85A3_08D3).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z as f64) < fraction * 2f64.powi(64)
}

#[test]
fn pyramid_is_nested_binomial_and_reproducible() {
    let n = 1_000_000;
    let ed = spine_edition(&SynthSpec { spectra_fraction: 0.0, ..SynthSpec::new(n, 99) });
    let subsets = make_pyramid(&ed, &[0.01, 0.1]).unwrap();
    let ids = |e: &skyfed_core::catalog::Edition| -> BTreeSet<i64> {
        let t = e.table("photo_obj").unwrap();
        (0..t.len()).map(|r| t.pk(r)).collect()
    };
    let small = ids(&subsets[0]);
    let large = ids(&subsets[1]);
    for (set, f) in [(&small, 0.01), (&large, 0.1)] {
        let mean = n as f64 * f;
        let sigma = (n as f64 * f * (1.0 - f)).sqrt();
        assert!((set.len() as f64 - mean).abs() <= 3.0 * sigma, "{} vs {mean}", set.len());
        let expected: BTreeSet<i64> = (1..=n as i64).filter(|id| oracle_keep(*id, f)).collect();
        assert_eq!(*set, expected);
    }
    assert!(small.is_subset(&large));
    let again = make_pyramid(&ed, &[0.01]).unwrap();
    assert_eq!(again[0].checksum(), subsets[0].checksum());
    let whole = make_pyramid(&ed, &[1.0]).unwrap();
    assert_eq!(whole[0].checksum(), ed.checksum());
}

#[test]
fn pyramid_keeps_referenced_rows_and_checks_fractions() {
    let ed = spine_edition(&SynthSpec { spectra_fraction: 0.5, ..SynthSpec::new(5_000, 3) });
    let sub = &make_pyramid(&ed, &[0.05]).unwrap()[0];
    let photo = sub.table("photo_obj").unwrap();
    let spec = sub.table("spec_obj").unwrap();
    let spec_ids: BTreeSet<i64> = (0..spec.len()).map(|r| spec.pk(r)).collect();
    let col = photo.def().column_index("spec_id").unwrap();
    for r in 0..photo.len() {
        if let Some(v) = photo.value(r, col).as_i64() {
            assert!(spec_ids.contains(&v));
        }
    }
    assert!(make_pyramid(&ed, &[0.0]).is_err());
    assert!(make_pyramid(&ed, &[1.5]).is_err());
    assert!(make_pyramid(&ed, &[0.5, 0.1]).is_err());
}

#[test]
fn cone_select_matches_brute_force() {
    let ed = spine_edition(&SynthSpec::new(100_000, 21));
    let t = ed.table("photo_obj").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for i in 0..300 {
        let radius = match i % 3 {
            0 => rng.random_range(0.0..0.5),
            1 => rng.random_range(0.0..5.0),
            _ => rng.random_range(0.0..60.0),
        };
        let cone = Cone::new(random_coord(&mut rng), radius).unwrap();
        let got: Vec<i64> = ed.cone_select("photo_obj", &cone).unwrap().iter().map(|o| o.id).collect();
        let mut want: Vec<i64> = (0..t.len())
            .filter(|r| angular_distance(t.coord(*r).unwrap(), cone.center()) <= radius)
            .map(|r| t.pk(r))
            .collect();
        want.sort_unstable();
        assert_eq!(got, want, "cone {cone:?}");
    }
    let all = ed.cone_select("photo_obj", &Cone::new(random_coord(&mut rng), 180.0).unwrap()).unwrap();
    assert_eq!(all.len(), 100_000);
}

#[test]
fn cone_select_edge_cases() {
    let empty = spine_edition(&SynthSpec::new(0, 1));
    let cone = Cone::new(skyfed_core::sphere::SkyCoord::new(1.0, 2.0).unwrap(), 10.0).unwrap();
    assert!(empty.cone_select("photo_obj", &cone).unwrap().is_empty());
    assert!(empty.cone_select("missing", &cone).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn accepted_rows_always_satisfy_foreign_keys(
        spec_ids in proptest::collection::btree_set(1i64..40, 0..20),
        refs in proptest::collection::vec(proptest::option::of(1i64..40), 1..30),
    ) {
        let mut spec = String::from(SPEC_HEADER);
        for id in &spec_ids {
            spec.push_str(&format!("{id},1.0,1.0,0.1,STAR,3\n"));
        }
        let mut photo = String::from(PHOTO_HEADER);
        for (i, r) in refs.iter().enumerate() {
            let r = r.map(|v| v.to_string()).unwrap_or_default();
            photo.push_str(&format!("{},2.0,2.0,20,19,18,17,17,STAR,0,{r}\n", i + 1));
        }
        let expected_bad = refs.iter().filter(|r| r.is_some_and(|v| !spec_ids.contains(&v))).count();
        let result = load_edition(
            &spine_schema(),
            vec![LoadInput::new("spec_obj", spec.as_bytes()), LoadInput::new("photo_obj", photo.as_bytes())],
        );
        let read = spec_ids.len() + refs.len();
        match result {
            Ok((ed, report)) => {
                prop_assert_eq!(report.rows_rejected as usize, expected_bad);
                let t = ed.table("photo_obj").unwrap();
                let col = t.def().column_index("spec_id").unwrap();
                for row in 0..t.len() {
                    if let Some(v) = t.value(row, col).as_i64() {
                        prop_assert!(spec_ids.contains(&v));
                    }
                }
            }
            Err(LoadError::TooManyRejected { rejected, .. }) => {
                prop_assert!(expected_bad * 2 > read);
                prop_assert_eq!(rejected as usize, expected_bad);
            }
            Err(e) => prop_assert!(false, "unexpected {}", e),
        }
    }
}
