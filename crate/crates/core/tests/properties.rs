use pcrseg::mednext::{dice_ce_loss, focal_loss, FocalParams};
use pcrseg::metrics::{balanced_accuracy, dice_score, norm_hausdorff};
use pcrseg::nn::Tensor;
use pcrseg::radiomics::extract_all_with;
use pcrseg::upkern::resample_kernel;
use pcrseg::volume::{decode, encode_volume, resample_isotropic, znormalize, Mask3D, Vol1, Volume3D};
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = [usize; 3]> {
    (1usize..6, 1usize..6, 1usize..6).prop_map(|(a, b, c)| [a, b, c])
}

fn volume() -> impl Strategy<Value = Volume3D> {
    (dims(), prop::array::uniform3(0.25f32..4.0)).prop_flat_map(|(d, s)| {
        prop::collection::vec(-1e3f32..1e3, d[0] * d[1] * d[2]).prop_map(move |v| Volume3D::new(d, s, v).unwrap())
    })
}

fn mask_pair() -> impl Strategy<Value = (Mask3D, Mask3D)> {
    dims().prop_flat_map(|d| {
        let n = d[0] * d[1] * d[2];
        (prop::collection::vec(0u8..2, n), prop::collection::vec(0u8..2, n))
            .prop_map(move |(a, b)| (Mask3D::new(d, a).unwrap(), Mask3D::new(d, b).unwrap()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vol1_round_trip_is_bit_exact(v in volume()) {
        let bytes = encode_volume(&v);
        let back = match decode(&bytes).unwrap() {
            Vol1::F32(v) => v,
            _ => panic!("dtype changed"),
        };
        prop_assert_eq!(back.dims(), v.dims());
        prop_assert_eq!(back.spacing(), v.spacing());
        prop_assert!(back.voxels().iter().zip(v.voxels()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(encode_volume(&back), bytes);
    }

    #[test]
    fn znormalize_standardizes(v in volume()) {
        prop_assume!(v.voxels().iter().any(|&x| x != v.voxels()[0]));
        let z = znormalize(&v, None).unwrap();
        let n = z.len() as f64;
        let m = z.voxels().iter().map(|&x| x as f64).sum::<f64>() / n;
        let var = z.voxels().iter().map(|&x| (x as f64 - m).powi(2)).sum::<f64>() / n;
        prop_assert!(m.abs() < 1e-5);
        prop_assert!((var - 1.0).abs() < 1e-5);
    }

    #[test]
    fn resampling_preserves_constants(d in dims(), s in prop::array::uniform3(0.5f32..3.0), c in -10f32..10.0, t in 0.5f64..2.5) {
        let v = Volume3D::filled(d, s, c).unwrap();
        let r = resample_isotropic(&v, t).unwrap();
        prop_assert!(r.voxels().iter().all(|&x| x == c));
    }

    #[test]
    fn dice_and_hausdorff_are_symmetric((a, b) in mask_pair()) {
        prop_assert_eq!(dice_score(&a, &b).unwrap(), dice_score(&b, &a).unwrap());
        let h = norm_hausdorff(&a, &b, [1.0, 1.5, 0.5], 95.0).unwrap();
        prop_assert_eq!(h, norm_hausdorff(&b, &a, [1.0, 1.5, 0.5], 95.0).unwrap());
        prop_assert!((0.0..=1.0).contains(&h));
        prop_assert_eq!(norm_hausdorff(&a, &a, [1.0, 1.5, 0.5], 95.0).unwrap(), 0.0);
        let d = dice_score(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn balanced_accuracy_swap(p in prop::collection::vec(0u8..2, 4..40), t in prop::collection::vec(0u8..2, 4..40)) {
        let n = p.len().min(t.len());
        let (p, t) = (&p[..n], &t[..n]);
        prop_assume!(t.contains(&0) && t.contains(&1));
        let f = |v: &[u8]| v.iter().map(|x| 1 - x).collect::<Vec<_>>();
        prop_assert_eq!(balanced_accuracy(p, t).unwrap(), balanced_accuracy(&f(p), &f(t)).unwrap());
    }

    #[test]
    fn segmentation_losses_are_non_negative(
        logits in prop::collection::vec(-30f64..30.0, 16),
        target in prop::collection::vec(0u8..2, 16),
    ) {
        let x = Tensor::from_vec([2, 1, 2, 2, 2], logits).unwrap();
        let g = Tensor::from_vec([2, 1, 2, 2, 2], target.iter().map(|&v| v as f64).collect()).unwrap();
        prop_assert!(dice_ce_loss(&x, &g, 1e-5).unwrap().loss >= 0.0);
        prop_assert!(focal_loss(&x, &g, FocalParams::default()).unwrap().loss >= 0.0);
    }

    #[test]
    fn upkern_keeps_constant_filters(c in -5f64..5.0) {
        let w = vec![c; 27];
        prop_assert!(resample_kernel(&w, 3, 5).unwrap().iter().all(|&v| v == c));
        prop_assert_eq!(resample_kernel(&w, 3, 3).unwrap(), w);
    }

    #[test]
    fn radiomics_is_translation_invariant(
        vals in prop::collection::vec(0f32..100.0, 27),
        bits in prop::collection::vec(0u8..2, 27),
        off in prop::array::uniform3(0usize..3),
    ) {
        prop_assume!(bits.iter().filter(|&&b| b == 1).count() >= 2);
        let small_v = Volume3D::new([3; 3], [1.0; 3], vals.clone()).unwrap();
        let small_m = Mask3D::new([3; 3], bits.clone()).unwrap();
        let big = [6usize; 3];
        let at = |x: usize, y: usize, z: usize| -> Option<usize> {
            let (a, b, c) = (x.checked_sub(off[0])?, y.checked_sub(off[1])?, z.checked_sub(off[2])?);
            (a < 3 && b < 3 && c < 3).then_some(a + 3 * b + 9 * c)
        };
        let mut bv = Vec::new();
        let mut bm = Vec::new();
        for z in 0..6 {
            for y in 0..6 {
                for x in 0..6 {
                    let i = at(x, y, z);
                    bv.push(i.map_or(-7.0, |i| vals[i]));
                    bm.push(i.map_or(0, |i| bits[i]));
                }
            }
        }
        let a = extract_all_with(&small_v, &small_m, 8).unwrap();
        let b = extract_all_with(&Volume3D::new(big, [1.0; 3], bv).unwrap(), &Mask3D::new(big, bm).unwrap(), 8).unwrap();
        prop_assert_eq!(&a.names, &b.names);
        for (k, (x, y)) in a.values.iter().zip(&b.values).enumerate() {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{} {} {}", a.names[k], x, y);
        }
        prop_assert_eq!(a.flags, b.flags);
    }
}
