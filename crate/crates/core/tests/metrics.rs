use pcrseg::metrics::{
    balanced_accuracy, boundary_voxels, dice_score, norm_hausdorff, subgroup_report, Metadata,
};
use pcrseg::rng::rng_for;
use pcrseg::volume::Mask3D;
use rand::Rng;

#[path = "support/metric_examples.rs"]
mod metric_examples;

use metric_examples::random_mask;



fn permute(m: &Mask3D) -> Mask3D {
    // axis swap x<->z plus a flip along y
    let d = m.dims();
    Mask3D::from_fn([d[2], d[1], d[0]], |x, y, z| m.get(z, d[1] - 1 - y, x))
}

#[test]
fn metric_symmetry_and_permutation_invariance() {
    for seed in 0..20 {
        let a = random_mask([9, 9, 9], seed);
        let b = random_mask([9, 9, 9], seed + 100);
        assert_eq!(dice_score(&a, &b).unwrap(), dice_score(&b, &a).unwrap());
        let h = norm_hausdorff(&a, &b, [1.0; 3], 95.0).unwrap();
        assert_eq!(h, norm_hausdorff(&b, &a, [1.0; 3], 95.0).unwrap());
        assert_eq!(dice_score(&permute(&a), &permute(&b)).unwrap(), dice_score(&a, &b).unwrap());
        assert_eq!(norm_hausdorff(&permute(&a), &permute(&b), [1.0; 3], 95.0).unwrap(), h);
        if boundary_voxels(&a) != boundary_voxels(&b) {
            assert!(h > 0.0 || norm_hausdorff(&a, &b, [1.0; 3], 100.0).unwrap() > 0.0);
        }
    }
}

#[test]
fn balanced_accuracy_is_relabel_invariant() {
    let mut r = rng_for(2, 0, 0);
    for _ in 0..50 {
        let t: Vec<u8> = (0..30).map(|i| (i % 3 == 0) as u8).collect();
        let p: Vec<u8> = (0..30).map(|_| r.random_range(0..2)).collect();
        let flip = |v: &[u8]| v.iter().map(|x| 1 - x).collect::<Vec<u8>>();
        assert_eq!(balanced_accuracy(&p, &t).unwrap(), balanced_accuracy(&flip(&p), &flip(&t)).unwrap());
    }
}


fn metadata() -> Metadata {
    let mut csv = String::from("case_id,age_group,density\n");
    for i in 0..20 {
        csv.push_str(&format!("c{i:02},{},{}\n", ["31-40", "51-60"][i % 2], ["a", "b", "c", "d"][i % 4]));
    }
    Metadata::parse_csv(&csv).unwrap()
}

#[test]
fn subgroup_report_groups_and_flags() {
    let md = metadata();
    let ids: Vec<String> = (0..20).map(|i| format!("c{i:02}")).collect();
    // labels depend only on i/2 so the two age groups see identical data
    let y: Vec<u8> = (0..20).map(|i| ((i / 2) % 2) as u8).collect();
    let p: Vec<u8> = (0..20).map(|i| ((i / 2) % 3 == 0) as u8).collect();
    let r = subgroup_report(&ids, &p, &y, &md).unwrap();
    let age: Vec<_> = r.groups.iter().filter(|g| g.column == "age_group").collect();
    assert_eq!(age.len(), 2);
    assert_eq!(age[0].balanced_accuracy, age[1].balanced_accuracy);
    assert_eq!(r.groups.iter().filter(|g| g.column == "density").map(|g| g.n).sum::<usize>(), 20);
    // density a holds i = 0,4,8,12,16 -> labels 0,0,0,0,0: single class
    let a = r.groups.iter().find(|g| g.column == "density" && g.value == "a").unwrap();
    assert_eq!(a.balanced_accuracy, None);
    assert!(r.to_csv().contains("density,a,5,insufficient"));
    // every density group here is single-class
    assert_eq!(r.column_mean("density"), None);
    let scored: Vec<f64> = age.iter().filter_map(|g| g.balanced_accuracy).collect();
    assert_eq!(r.column_mean("age_group"), Some(scored.iter().sum::<f64>() / scored.len() as f64));
    assert!(subgroup_report(&["zz".to_string()], &[1], &[1], &md).is_err());
}

#[test]
fn subgroup_rows_mirror_reported_grouping_format() {
    // format fixture only: the published subgroup extremes
    let rows = [
        ("x01", "51-60", "a", 1, 1),
        ("x02", "51-60", "a", 1, 1),
        ("x03", "51-60", "a", 0, 1),
        ("x04", "51-60", "a", 0, 0),
        ("p1", "71+", "d", 1, 1),
        ("p2", "71+", "d", 1, 0),
        ("p3", "71+", "d", 1, 0),
        ("p4", "71+", "c", 1, 0),
        ("p5", "71+", "c", 1, 0),
        ("n1", "71+", "d", 0, 0),
        ("n2", "71+", "c", 0, 0),
        ("n3", "71+", "d", 0, 1),
        ("n4", "71+", "c", 0, 1),
        ("n5", "71+", "c", 0, 1),
    ];
    let mut csv = String::from("case_id,age_group,density\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{}\n", r.0, r.1, r.2));
    }
    let md = Metadata::parse_csv(&csv).unwrap();
    let ids: Vec<String> = rows.iter().map(|r| r.0.to_string()).collect();
    let y: Vec<u8> = rows.iter().map(|r| r.3).collect();
    let p: Vec<u8> = rows.iter().map(|r| r.4).collect();
    let csv = subgroup_report(&ids, &p, &y, &md).unwrap().to_csv();
    assert!(csv.starts_with("column,group,n,balanced_accuracy\n"));
    for line in ["age_group,51-60,4,75.0%", "age_group,71+,10,30.0%", "density,a,4,75.0%", "density,d,5,41.7%"] {
        assert!(csv.contains(&format!("{line}\n")), "{line} missing from\n{csv}");
    }
}

#[test]
fn dice_examples() {
    metric_examples::dice_examples();
}

#[test]
fn balanced_accuracy_examples() {
    metric_examples::balanced_accuracy_examples();
}

#[test]
fn ece_examples() {
    metric_examples::ece_examples();
}

#[test]
fn norm_hausdorff_examples() {
    metric_examples::norm_hausdorff_examples();
}

#[test]
fn calibrated_simulator_has_small_ece() {
    metric_examples::calibrated_simulator_has_small_ece();
}

#[test]
fn filtered_set_has_no_pair_above_threshold() {
    metric_examples::filtered_set_has_no_pair_above_threshold();
}
