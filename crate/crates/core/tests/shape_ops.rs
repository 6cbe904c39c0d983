use proptest::prelude::*;
use stcast::tensor::{concat, crop, pad, reverse_axis, split};
use stcast::{PadSpec, Tensor};

fn tensor_with_shape() -> impl Strategy<Value = Tensor<f64>> {
    prop::collection::vec(1usize..5, 1..=5).prop_flat_map(|shape| {
        let n: usize = shape.iter().product();
        prop::collection::vec(-100.0f64..100.0, n)
            .prop_map(move |data| Tensor::from_vec(&shape, data).expect("matching length"))
    })
}

fn tensor_and_axis() -> impl Strategy<Value = (Tensor<f64>, usize)> {
    tensor_with_shape().prop_flat_map(|t| {
        let rank = t.rank();
        (Just(t), 0..rank)
    })
}

proptest! {
    #[test]
    fn crop_undoes_pad(
        t in tensor_with_shape(),
        pads in prop::collection::vec((0usize..3, 0usize..3), 5),
    ) {
        let spec = PadSpec::new(pads[..t.rank()].to_vec());
        let padded = pad(&t, &spec).unwrap();
        for (ax, (&e, &(b, a))) in t.shape().iter().zip(spec.pairs()).enumerate() {
            prop_assert_eq!(padded.shape()[ax], e + b + a);
        }
        prop_assert_eq!(padded.sum(), t.sum());
        let back = crop(&padded, &spec).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn reverse_is_an_involution((t, axis) in tensor_and_axis()) {
        let r = reverse_axis(&t, axis).unwrap();
        prop_assert_eq!(r.shape(), t.shape());
        let len = t.shape()[axis];
        let strides = t.strides();
        for (i, &v) in t.data().iter().enumerate() {
            let k = (i / strides[axis]) % len;
            let j = i + (len - 1 - k) * strides[axis] - k * strides[axis];
            prop_assert_eq!(r.data()[j], v);
        }
        prop_assert_eq!(reverse_axis(&r, axis).unwrap(), t);
    }

    #[test]
    fn split_inverts_concat((t, axis) in tensor_and_axis(), extra in 1usize..4) {
        let mut other_shape = t.shape().to_vec();
        other_shape[axis] = extra;
        let other = Tensor::from_fn(&other_shape, |i| i as f64 + 0.5).unwrap();
        let joined = concat(&t, &other, axis).unwrap();
        prop_assert_eq!(joined.shape()[axis], t.shape()[axis] + extra);
        let (a, b) = split(&joined, axis, t.shape()[axis]).unwrap();
        prop_assert_eq!(&a, &t);
        prop_assert_eq!(b, other);
    }

    #[test]
    fn concat_inverts_split((t, axis) in tensor_and_axis(), at in 1usize..4) {
        let len = t.shape()[axis];
        prop_assume!(at < len);
        let (a, b) = split(&t, axis, at).unwrap();
        prop_assert_eq!(concat(&a, &b, axis).unwrap(), t);
    }
}

#[test]
fn crop_to_nothing_is_rejected() {
    let t = Tensor::<f64>::zeros(&[1, 1, 3, 2, 2]);
    let err = crop(&t, &PadSpec::on_axis(5, 2, 2, 1)).unwrap_err();
    assert!(err.to_string().contains("time"), "{err}");
}

#[test]
fn negative_padding_is_rejected() {
    assert!(PadSpec::from_signed(&[(0, 0), (1, -1)]).is_err());
    assert_eq!(PadSpec::from_signed(&[(2, 0)]).unwrap().pairs(), &[(2, 0)]);
}

#[test]
fn concat_checks_other_extents() {
    let a = Tensor::<f64>::zeros(&[1, 2, 3, 4, 4]);
    let b = Tensor::<f64>::zeros(&[1, 2, 3, 4, 5]);
    assert!(concat(&a, &b, 2).is_err());
    assert!(split(&a, 2, 0).is_err());
    assert!(split(&a, 2, 3).is_err());
}
