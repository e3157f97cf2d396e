use oilsense_core::scene::{bbox_iou, class_vector, position_vector, rasterize};
use oilsense_core::{BBox, ClassLabel, DetectedObject, PolygonMask};
use proptest::prelude::*;

fn boxed() -> impl Strategy<Value = BBox> {
    (0.0..500.0f64, 0.0..500.0f64, 1.0..200.0f64, 1.0..200.0f64)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
}

fn object(id: u32, class: ClassLabel, b: BBox) -> DetectedObject {
    DetectedObject::new(id, class, 0.9, b, PolygonMask::rectangle(&b)).unwrap()
}

proptest! {
    #[test]
    fn iou_is_a_symmetric_similarity(a in boxed(), b in boxed()) {
        let v = bbox_iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, bbox_iou(&b, &a));
        prop_assert!((bbox_iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn position_vector_ignores_image_scale(a in boxed(), b in boxed(), k in 0.25..4.0f64) {
        let s = object(0, ClassLabel::SuspectedArea, a);
        let r = object(1, ClassLabel::Ground, b);
        let base = position_vector(&s, &r, 800.0, 600.0).unwrap();
        let s2 = object(0, ClassLabel::SuspectedArea, a.scaled(k).unwrap());
        let r2 = object(1, ClassLabel::Ground, b.scaled(k).unwrap());
        let scaled = position_vector(&s2, &r2, 800.0 * k, 600.0 * k).unwrap();
        for (x, y) in base.iter().zip(scaled) {
            prop_assert!((x - y).abs() < 1e-9, "{base:?} vs {scaled:?}");
        }
    }
}

#[test]
fn class_vector_is_two_one_hots() {
    for s in ClassLabel::ALL {
        for r in ClassLabel::ALL {
            let v = class_vector(s, r);
            assert_eq!(v.iter().sum::<f64>(), 2.0);
            assert_eq!(v[s.index()], 1.0);
            assert_eq!(v[ClassLabel::COUNT + r.index()], 1.0);
        }
    }
}

#[test]
fn rectangle_fills_its_own_frame() {
    let b = BBox::new(10.0, 20.0, 50.0, 40.0).unwrap();
    let r = rasterize(PolygonMask::rectangle(&b).vertices(), &b, 28, 28).unwrap();
    assert_eq!(r.filled_fraction(), 1.0);
    let wide = b.expand(1.0);
    let r = rasterize(PolygonMask::rectangle(&b).vertices(), &wide, 28, 28).unwrap();
    let f = r.filled_fraction();
    assert!(f > 0.08 && f < 0.15, "{f}");
}
