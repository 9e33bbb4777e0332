use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use llmembed_core::store::{
    decode_embeddings, encode_embeddings, read_embeddings, write_embeddings, EmbeddingMatrix,
};
use proptest::prelude::*;

fn matrix_strategy() -> impl Strategy<Value = EmbeddingMatrix> {
    (
        "[a-z][a-z0-9_]{0,11}",
        1usize..5,
        1usize..4,
        1usize..6,
    )
        .prop_flat_map(|(name, n, h, k)| {
            proptest::collection::vec(-1e6f32..1e6, n * h * k)
                .prop_map(move |data| EmbeddingMatrix::new(name.clone(), n, h, k, data).unwrap())
        })
}

proptest! {
    #[test]
    fn read_after_write_is_identity(m in matrix_strategy()) {
        let bytes = encode_embeddings(&m).unwrap();
        let back = decode_embeddings(&bytes).unwrap();
        prop_assert_eq!(back, m);
    }
}

fn header_len(m: &EmbeddingMatrix) -> usize {
    4 + 4 + 2 + m.source_name().len() + 8 + 4 + 4 + 1
}

/// Every value of every structural header byte other than the original must
/// be rejected.
#[test]
fn single_byte_header_corruption_is_always_detected() {
    let samples = [
        EmbeddingMatrix::new("llama2", 2, 5, 3, (0..30).map(|i| i as f32).collect()).unwrap(),
        EmbeddingMatrix::new("b", 1, 1, 1, vec![0.5]).unwrap(),
        EmbeddingMatrix::new("roberta", 3, 1, 4, vec![-1.0; 12]).unwrap(),
    ];
    for m in &samples {
        let bytes = encode_embeddings(m).unwrap();
        let name_start = 10;
        let name_end = name_start + m.source_name().len();
        for pos in 0..header_len(m) {
            if (name_start..name_end).contains(&pos) {
                continue;
            }
            for value in 0..=255u8 {
                if value == bytes[pos] {
                    continue;
                }
                let mut bad = bytes.clone();
                bad[pos] = value;
                assert!(
                    decode_embeddings(&bad).is_err(),
                    "`{}`: byte {pos} set to {value} loaded silently",
                    m.source_name()
                );
            }
        }
        // name bytes that leave the allowed character set
        for pos in name_start..name_end {
            for value in [0u8, b' ', b'/', 0x80, 0xff] {
                let mut bad = bytes.clone();
                bad[pos] = value;
                assert!(decode_embeddings(&bad).is_err());
            }
        }
    }
}

#[test]
fn reference_shape_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("llama2.llme");
    let data: Vec<f32> = (0..2 * 5 * 4096).map(|i| ((i % 97) as f32) * 0.01).collect();
    let m = EmbeddingMatrix::new("llama2", 2, 5, 4096, data).unwrap();
    write_embeddings(&m, &path).unwrap();
    let back = read_embeddings(&path).unwrap();
    assert_eq!((back.n_rows(), back.n_depths(), back.dim()), (2, 5, 4096));
    assert_eq!(back, m);
}

#[test]
fn identical_writes_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let m = EmbeddingMatrix::new("bert", 3, 1, 8, (0..24).map(|i| i as f32 / 7.0).collect())
        .unwrap();
    let digest = |p: &std::path::Path| {
        let mut h = DefaultHasher::new();
        std::fs::read(p).unwrap().hash(&mut h);
        h.finish()
    };
    let a = dir.path().join("a.llme");
    let b = dir.path().join("b.llme");
    write_embeddings(&m, &a).unwrap();
    write_embeddings(&m, &b).unwrap();
    assert_eq!(digest(&a), digest(&b));
}

#[test]
fn invalid_matrix_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.llme");
    assert!(EmbeddingMatrix::new("x", 2, 2, 2, vec![0.0; 7]).is_err());
    assert!(EmbeddingMatrix::new("x", 1, 1, 2, vec![0.0, f32::INFINITY]).is_err());
    assert!(!path.exists());
}
