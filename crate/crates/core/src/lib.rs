// SPDX-License-Identifier: Apache-2.0

pub mod rtl;
pub mod llm;
pub mod mutation;
pub mod objective;
pub mod pipeline;
pub mod bridge;
pub mod chain;
pub mod config;
pub mod corpus;
pub mod entity;
pub mod retrieval;
pub mod sva;

/// Pretty JSON with a trailing newline; struct fields keep declaration order
/// and maps are ordered, so output is byte-stable.
pub(crate) fn to_json_pretty<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s
}
