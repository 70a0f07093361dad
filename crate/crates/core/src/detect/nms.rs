use super::{iou, DetBox};

/// Greedy class-wise non-maximum suppression.
///
/// Boxes are visited by confidence (descending), then class id, then input
/// order. A box is kept iff its IoU with every kept box of the same class is
/// below `iou_threshold`. Kept boxes are returned in visiting order.
pub fn nms(boxes: &[DetBox], iou_threshold: f64) -> Vec<DetBox> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        boxes[b]
            .conf
            .total_cmp(&boxes[a].conf)
            .then(boxes[a].class_id.cmp(&boxes[b].class_id))
            .then(a.cmp(&b))
    });
    let mut kept: Vec<DetBox> = Vec::new();
    for i in order {
        let cand = &boxes[i];
        let suppressed = kept
            .iter()
            .any(|k| k.class_id == cand.class_id && iou(k, cand) >= iou_threshold);
        if !suppressed {
            kept.push(*cand);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_box() {
        let b = DetBox::new(0, 0.5, 0.5, 0.1, 0.1, 0.7);
        assert_eq!(nms(&[b], 0.45), vec![b]);
    }

    #[test]
    fn disjoint_boxes_survive() {
        let a = DetBox::new(0, 0.2, 0.2, 0.1, 0.1, 0.7);
        let b = DetBox::new(0, 0.8, 0.8, 0.1, 0.1, 0.9);
        assert_eq!(nms(&[a, b], 0.5), vec![b, a]);
    }

    #[test]
    fn identical_boxes_keep_highest() {
        let a = DetBox::new(0, 0.5, 0.5, 0.2, 0.2, 0.8);
        let b = DetBox::new(0, 0.5, 0.5, 0.2, 0.2, 0.9);
        assert_eq!(nms(&[a, b], 0.5), vec![b]);
    }

    #[test]
    fn other_classes_never_suppress() {
        let a = DetBox::new(0, 0.5, 0.5, 0.2, 0.2, 0.8);
        let b = DetBox::new(1, 0.5, 0.5, 0.2, 0.2, 0.9);
        assert_eq!(nms(&[a, b], 0.5).len(), 2);
    }

    fn arb_boxes() -> impl Strategy<Value = Vec<DetBox>> {
        proptest::collection::vec(
            (0usize..3, 0.1f64..0.9, 0.1f64..0.9, 0.05f64..0.3, 0.05f64..0.3, 0.0f64..1.0),
            0..25,
        )
        .prop_map(|v| v.into_iter().map(|(c, x, y, w, h, s)| DetBox::new(c, x, y, w, h, s)).collect())
    }

    proptest! {
        #[test]
        fn output_is_suppression_free_subset(boxes in arb_boxes(), thr in 0.05f64..0.95) {
            let kept = nms(&boxes, thr);
            for k in &kept {
                prop_assert!(boxes.contains(k));
            }
            for (i, a) in kept.iter().enumerate() {
                for b in &kept[i + 1..] {
                    if a.class_id == b.class_id {
                        prop_assert!(iou(a, b) < thr);
                    }
                }
            }
        }

        #[test]
        fn permutation_invariant(boxes in arb_boxes(), thr in 0.05f64..0.95, seed in any::<u64>()) {
            // distinct confidences make the visiting order input-independent
            let boxes: Vec<DetBox> = boxes
                .into_iter()
                .enumerate()
                .map(|(i, mut b)| { b.conf = (i as f64 + 1.0) / 100.0; b })
                .collect();
            let mut shuffled = boxes.clone();
            let n = shuffled.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(nms(&boxes, thr), nms(&shuffled, thr));
        }
    }
}
