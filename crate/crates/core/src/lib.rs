pub mod assembly;
pub mod error;
pub mod fields;
pub mod hexfloat;
pub mod io;
pub mod library;
pub mod metrics;
pub mod probe;
pub mod model;
pub mod regression;
pub mod synth;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/quickstart.md")]
    mod quickstart {}
    #[doc = include_str!("../../../book/src/grids-and-quadrature.md")]
    mod grids_and_quadrature {}
    #[doc = include_str!("../../../book/src/term-library.md")]
    mod term_library {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/darcy.md")]
    mod darcy {}
    #[doc = include_str!("../../../book/src/probing.md")]
    mod probing {}
    #[doc = include_str!("../../../book/src/models-and-metrics.md")]
    mod models_and_metrics {}
    #[doc = include_str!("../../../book/src/file-formats.md")]
    mod file_formats {}
}
