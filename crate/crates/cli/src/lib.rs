//! Command-line driver and HTTP session service for pose annotation.

pub mod commands;
pub mod service;

use clap::Parser;

#[derive(Debug, Parser)]
#[command(name = "poseref", version, about = "Annotate and refine 3D object poses against image masks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: commands::Command,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DEGENERATE: i32 = 2;

/// Exit status for a failed command: degenerate inputs (nothing to refine
/// against, or a model that never becomes visible) map to 2, everything else
/// to 1.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use poseref_core::Error as E;
    let degenerate = err.chain().any(|e| {
        matches!(
            e.downcast_ref::<E>(),
            Some(E::DegenerateInitialization | E::NoReference | E::EmptyMesh)
        )
    });
    if degenerate {
        EXIT_DEGENERATE
    } else {
        EXIT_USAGE
    }
}
