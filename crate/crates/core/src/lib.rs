//! Private key storage in a Bloom-filter-style lookup table spread over a
//! partitioned, versioned bit store.
//!
//! A key is never stored as such. Every prefix of it, hashed together with
//! the owner's credential, lights a handful of bits in the partition whose
//! address is nearest to the hash. Retrieval walks the prefix tree and keeps
//! the branches whose bits are all lit.

pub mod address;
pub mod analysis;
pub mod encoding;
pub mod error;
pub mod kv;
pub mod lut;
pub mod sim;
pub mod store;

pub use address::HashAddress;
pub use encoding::{Credential, EncodingParams, KeyString, Radix};
pub use error::{EncodingError, StoreError};
pub use lut::{Bflut, BflutError, InsertReceipt, RetrievalResult, RetrieveOptions};
pub use store::{ActorId, BitStore, FileId, PartitionStore};
