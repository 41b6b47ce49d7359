pub mod error;
pub mod lindblad;
pub mod maxwell_bloch;
pub mod model;
pub mod spectral;
pub mod tomography;
pub mod xpm;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/units.md")]
    struct Units;
    #[doc = include_str!("../../../book/src/storage.md")]
    struct Storage;
    #[doc = include_str!("../../../book/src/xpm.md")]
    struct Xpm;
    #[doc = include_str!("../../../book/src/gate.md")]
    struct Gate;
    #[doc = include_str!("../../../book/src/tomography.md")]
    struct Tomography;
}
