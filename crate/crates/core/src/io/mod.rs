//! File formats connecting the pipeline stages: VXG1 volumes, PFM/PPM/PGM
//! images, PLY meshes, camera trajectories, NET1 parameter checkpoints,
//! dataset directories, scene manifests, and run configuration files.
//! Every format is written and parsed here so byte round-trips can be
//! tested in one place.

mod dataset;
mod images;
mod net1;
mod ply;
mod runcfg;
mod scene_text;
mod trajectory;
mod vxg;

pub use dataset::{read_dataset, write_dataset, Dataset, SceneManifest};
pub use images::{read_pfm, read_pgm16, read_ppm, write_pfm, write_pgm16, write_ppm};
pub use net1::{read_net1, write_net1};
pub use ply::{read_ply, write_ply};
pub use runcfg::{append_loss_csv, loss_csv_header, KeyValues};
pub use scene_text::{read_scene_text, scene_to_text};
pub use trajectory::{cameras_from_text, cameras_to_text};
pub use vxg::{read_vxg, write_vxg};
