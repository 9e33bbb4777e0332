//! Embedding files, dataset bundles and synthetic data.

mod bundle;
mod format;
mod synth;

pub use bundle::{
    load_bundle, read_labels, read_manifest, write_bundle, write_labels, DatasetBundle, Manifest,
    ManifestSource, Split,
};
pub use format::{
    decode_embeddings, encode_embeddings, read_embeddings, validate_source_name,
    write_embeddings, EmbeddingMatrix, DTYPE_F32, EMBEDDING_MAGIC, EMBEDDING_VERSION,
};
pub use synth::{generate_synthetic, SyntheticSource, SyntheticSpec};
