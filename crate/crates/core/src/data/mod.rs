//! Data pipeline: cube container, RGB synthesis, augmentation, patching,
//! and fold splits.

pub mod augment;
pub mod cube;
pub mod folds;
pub mod response;

pub use augment::{augment, extract_patches, rescale, AugmentedPair, Dihedral, PatchPair};
pub use cube::{
    default_wavelengths, load_cube, load_rgb_png, save_cube, save_rgb_png, HyperCube, Planar, RgbImage,
};
pub use folds::{make_two_fold, Assignment, FoldMode, FoldSplit};
pub use response::{project_rgb, synthesize_rgb, SpectralResponse};
