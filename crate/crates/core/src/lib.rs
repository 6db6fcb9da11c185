//! Inverse recovery of part-level material parameters from rendered
//! particle videos.
//!
//! The crate wires a forward path — explicit MLS-MPM simulation ([`mpm`]),
//! Gaussian particle splatting ([`render`]) — to a dual-domain motion loss
//! ([`dms`]) and a log-domain optimizer ([`optim`]), with Latin-hypercube
//! initialization ([`init`]) and evaluation metrics ([`metrics`]).
//!
//! All numerical code is generic over the scalar type through [`real::Real`]
//! (`f32` or `f64`) and, where geometry is involved, over the spatial
//! dimension. The [`Scalar`] alias below fixes the precision used by the
//! CLI pipeline and the reproducibility tolerances; the `*2`/`*3` aliases
//! pick the spatial dimension.

pub mod dms;
pub mod fft;
pub mod init;
pub mod linalg;
pub mod metrics;
pub mod mpm;
pub mod optim;
pub mod params;
pub mod pipeline;
pub mod real;
pub mod render;
pub mod scene;
pub mod ssim;
pub mod video;

pub use real::Real;

/// Pipeline precision. Conservation checks assume double precision.
pub type Scalar = f64;

pub type Vector2 = linalg::Vector<Scalar, 2>;
pub type Vector3 = linalg::Vector<Scalar, 3>;
pub type Matrix2 = linalg::Matrix<Scalar, 2>;
pub type Matrix3 = linalg::Matrix<Scalar, 3>;

pub type Scene2 = scene::SceneConfig<Scalar, 2>;
pub type Scene3 = scene::SceneConfig<Scalar, 3>;
pub type Trajectory2 = mpm::Trajectory<Scalar, 2>;
pub type Trajectory3 = mpm::Trajectory<Scalar, 3>;
pub type Video = video::VideoTensor<Scalar>;
pub type Frame = video::Image<Scalar>;
pub type Params = params::ParamVector<Scalar>;
pub type Bounds = params::ParamBounds<Scalar>;
pub type Losses = dms::LossReport<Scalar>;
