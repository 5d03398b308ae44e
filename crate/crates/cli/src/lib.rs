//! Pipeline driver behind the `morphomap` binary.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_boundary, cmd_eval, cmd_ingest, cmd_map, cmd_pathloss, cmd_synth, cmd_train, Endpoint,
};
pub use config::PipelineConfig;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const INGEST: i32 = 2;
    pub const TRAIN: i32 = 3;
    pub const MAP: i32 = 4;
    pub const BOUNDARY: i32 = 5;
    pub const PATHLOSS: i32 = 6;
}

/// Input-data failures map to the ingest code whichever command hit them;
/// everything else gets the command's own code.
pub fn exit_code(err: &anyhow::Error, command_code: i32) -> i32 {
    let ingest = err
        .chain()
        .filter_map(|e| e.downcast_ref::<morphomap_core::Error>())
        .any(morphomap_core::Error::is_ingest);
    if ingest {
        exit::INGEST
    } else {
        command_code
    }
}
