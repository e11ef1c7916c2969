use amrnmt::metrics::{bleu, bucketed_bleu, Buckets};

fn lines(v: &[&str]) -> Vec<Vec<String>> {
    v.iter().map(|s| s.split_whitespace().map(str::to_string).collect()).collect()
}

/// Counted by hand:
///   1-grams 5+6+4 = 15 of 17, 2-grams 3+3+3 = 9 of 14,
///   3-grams 1+1+2 = 4 of 11,  4-grams 0+0+1 = 1 of 8,
///   c = 17, r = 18.
#[test]
fn three_sentence_fixture() {
    let hyp = lines(&["the cat is on the mat", "there is a dog in the garden", "he read the book"]);
    let reference = lines(&[
        "the cat sat on the mat",
        "a dog is in the garden",
        "he read the book yesterday evening",
    ]);
    let r = bleu(&hyp, &reference, 4).unwrap();
    assert_eq!((r.hyp_len, r.ref_len), (17, 18));
    let expected_p = [15.0 / 17.0, 9.0 / 14.0, 4.0 / 11.0, 1.0 / 8.0];
    for (p, e) in r.precisions.iter().zip(expected_p) {
        assert!((p - e).abs() < 1e-15);
    }
    let by_hand = 100.0 * (1.0f64 - 18.0 / 17.0).exp() * (15.0f64 * 9.0 * 4.0 / (17.0 * 14.0 * 11.0 * 8.0)).powf(0.25);
    assert!((r.bleu - by_hand).abs() < 1e-6);
    assert!((r.bleu - 37.782161355698).abs() < 1e-6);
}

#[test]
fn buckets_recompose_corpus_score() {
    let hyp = lines(&[
        "a b c d e",
        "the cat is on the mat",
        "x y z a b c d e f g h i j k",
        "p q r s t u v w",
    ]);
    let reference = lines(&[
        "a b c d f",
        "the cat sat on the mat",
        "x y z a b c d e f g h i j",
        "p q r s t u v x",
    ]);
    let src = [4, 12, 25, 40];
    let per = bucketed_bleu(&hyp, &reference, &src, &Buckets::default(), 4).unwrap();
    assert!(per.iter().all(|b| b.sentences == 1));
    // concatenate the buckets' members in bucket order and rescore
    let buckets = Buckets::default();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by_key(|&i| buckets.index_of(src[i]));
    let c: Vec<_> = order.iter().map(|&i| hyp[i].clone()).collect();
    let r: Vec<_> = order.iter().map(|&i| reference[i].clone()).collect();
    let union = bleu(&c, &r, 4).unwrap().bleu;
    assert!((union - bleu(&hyp, &reference, 4).unwrap().bleu).abs() < 1e-9);
}

#[test]
fn identical_buckets_score_100() {
    let text = lines(&["a b c d", "a b c d e f g h i j k l", "k l m n o p"]);
    for b in bucketed_bleu(&text, &text, &[3, 15, 7], &Buckets::default(), 4).unwrap() {
        if let Some(r) = b.report {
            assert_eq!(r.bleu, 100.0);
        }
    }
}
