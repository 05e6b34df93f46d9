mod common;

use diagprop::autodiff::Tape;
use diagprop::encoder::{layout, window_spans, Encoder, EncoderConfig, WindowConfig};
use diagprop::params::ParamStore;
use diagprop::rng::rng_for;
use diagprop::tensor::Matrix;
use diagprop::Vocab;

#[test]
fn three_constant_windows_average_by_hand() {
    let w = WindowConfig { size: 4, stride: 3 };
    let spans = window_spans(10, w, |_| false);
    assert_eq!(spans, vec![0..4, 3..7, 6..10]);

    let mut tape = Tape::<f64>::new();
    let parts: Vec<(usize, _)> = spans
        .iter()
        .zip([1.0, 2.0, 3.0])
        .map(|(s, v)| (s.start, tape.constant(Matrix::filled(s.len(), 2, v))))
        .collect();
    let merged = tape.window_merge(&parts, 10);
    let expected = [1.0, 1.0, 1.0, 1.5, 2.0, 2.0, 2.5, 3.0, 3.0, 3.0];
    for (r, &e) in expected.iter().enumerate() {
        assert_eq!(tape.value(merged).row(r), &[e, e]);
    }
}

#[test]
fn window_never_ends_on_a_marker() {
    let w = WindowConfig { size: 5, stride: 3 };
    let markers = [0, 4, 9, 13];
    let spans = window_spans(16, w, |p| markers.contains(&p));
    for s in &spans {
        assert!(s.end == 16 || !markers.contains(&(s.end - 1)), "{s:?}");
    }
    let mut covered = vec![false; 16];
    spans.iter().flat_map(|s| s.clone()).for_each(|p| covered[p] = true);
    assert!(covered.iter().all(|&c| c));
}

fn encoder(window: Option<WindowConfig>, vocab_size: usize) -> (Encoder, ParamStore<f64>) {
    let config = EncoderConfig { hidden: 8, heads: 2, ff_hidden: 16, max_len: 32, window, ..EncoderConfig::default() };
    let mut store = ParamStore::new();
    let enc = Encoder::init(&config, vocab_size, &mut store, &mut rng_for(1, &[])).unwrap();
    (enc, store)
}

#[test]
fn short_input_is_encoded_in_one_window() {
    let inst = common::toy_instance();
    let vocab = Vocab::build([&inst]);
    let (windowed, store) = encoder(Some(WindowConfig { size: 30, stride: 10 }), vocab.len());
    let input = layout(&inst, &vocab, windowed.config()).unwrap();
    assert!(input.len() <= 30);
    let mut tape = Tape::new();
    let a = windowed.encode_input(&mut tape, &store, &input).unwrap();
    let b = windowed.encode(&mut tape, &store, &input.ids).unwrap();
    assert_eq!(tape.value(a), tape.value(b));
}

#[test]
fn two_window_overlap_is_the_mean_of_both_windows() {
    let inst = common::toy_instance();
    let vocab = Vocab::build([&inst]);
    let probe = EncoderConfig { max_len: 64, ..EncoderConfig::default() };
    let n = layout(&inst, &vocab, &probe).unwrap().len();
    let stride = 4;
    let w = WindowConfig { size: n - stride, stride };
    let (enc, store) = encoder(Some(w), vocab.len());
    let input = layout(&inst, &vocab, enc.config()).unwrap();
    let markers = input.marker_positions();
    let spans = window_spans(n, w, |p| markers.contains(&p));
    assert_eq!(spans.len(), 2);

    let mut tape = Tape::new();
    let merged = enc.windowed_encode(&mut tape, &store, &input, w).unwrap();
    let first = enc.encode(&mut tape, &store, &input.ids[spans[0].clone()]).unwrap();
    let second = enc.encode(&mut tape, &store, &input.ids[spans[1].clone()]).unwrap();
    let (m, f, s) = (tape.value(merged), tape.value(first), tape.value(second));
    assert_eq!(m.rows(), n);
    for p in 0..n {
        let in_first = spans[0].contains(&p);
        let in_second = spans[1].contains(&p);
        for c in 0..m.cols() {
            let expected = match (in_first, in_second) {
                (true, true) => (f.get(p, c) + s.get(p - spans[1].start, c)) / 2.0,
                (true, false) => f.get(p, c),
                (false, true) => s.get(p - spans[1].start, c),
                (false, false) => unreachable!("uncovered position {p}"),
            };
            assert!((m.get(p, c) - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn sentence_order_matters() {
    let inst = common::toy_instance();
    let mut swapped = inst.clone();
    swapped.sentences.swap(0, 2);
    let vocab = Vocab::build([&inst]);
    let (enc, store) = encoder(None, vocab.len());
    let mut tape = Tape::new();
    let a = enc.encode_input(&mut tape, &store, &layout(&inst, &vocab, enc.config()).unwrap()).unwrap();
    let b = enc.encode_input(&mut tape, &store, &layout(&swapped, &vocab, enc.config()).unwrap()).unwrap();
    assert_ne!(tape.value(a), tape.value(b));
}
