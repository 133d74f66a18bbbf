use std::fmt;

/// A problem with the user's configuration or inputs; exits with code 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserError(pub String);

impl fmt::Display for UserError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UserError {}

pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_USER: u8 = 2;

/// Exit code for an error chain: 2 if any cause is a [`UserError`], else 1.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|c| c.downcast_ref::<UserError>().is_some()) {
        EXIT_USER
    } else {
        EXIT_INTERNAL
    }
}

/// Wraps any error as a user error, keeping its message.
pub fn user<E: fmt::Display>(e: E) -> anyhow::Error {
    UserError(e.to_string()).into()
}
