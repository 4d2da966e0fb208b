//! Reference implementations used as test oracles. Everything here is brute
//! force over explicit enumerations and shares no algorithmic code with the
//! crate under test; only its data types are reused.

pub mod ctc;
pub mod decoder;
pub mod edit;
pub mod gen;
pub mod table_lm;

pub use table_lm::TableLm;
