//! Library side of the `stacklight` binary: configuration, image and
//! dataset files, and one function per subcommand.

pub mod commands;
pub mod config;
pub mod io;

/// Exit status when a `--check` threshold is violated.
pub const EXIT_CHECK_FAILED: i32 = 3;

/// A `--check` threshold that did not hold.
#[derive(Debug)]
pub struct CheckFailed(pub Vec<String>);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "check failed: {}", self.0.join("; "))
    }
}

impl std::error::Error for CheckFailed {}
