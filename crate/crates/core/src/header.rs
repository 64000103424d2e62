//! Provenance record that the command-line tool writes as the first line
//! of its JSON-lines outputs. Readers of those files skip it.

pub const HEADER_KEY: &str = "pivotscope";

/// True for a JSON object whose first key is [`HEADER_KEY`].
pub fn is_header_line(line: &str) -> bool {
    line.trim_start()
        .strip_prefix('{')
        .and_then(|rest| rest.trim_start().strip_prefix('"'))
        .and_then(|rest| rest.strip_prefix(HEADER_KEY))
        .is_some_and(|rest| rest.starts_with('"'))
}
