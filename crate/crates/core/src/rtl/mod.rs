// SPDX-License-Identifier: Apache-2.0

//! Verilog front end: lexer, parser, canonical printer, structural tree,
//! linked design model, and signal connectivity graph.

pub mod ast;
pub mod design;
pub mod graph;
pub mod lexer;
pub mod parser;
pub mod print;
pub mod tree;

pub use ast::Span;
pub use design::{
    parse_design, AssignEdge, AssignKind, Instance, Located, ModuleDef, Net, Port,
    PortConnection, RtlDesign, SignalRef, SourceFile, SourceSpan,
};
pub use graph::{build_connectivity, Edge, EdgeKind, EdgeOrigin, SignalGraph};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RtlError {
    #[error("{file}:{line}: {message}")]
    Syntax {
        file: String,
        line: u32,
        message: String,
    },
    #[error("module {name} defined in both {first} and {second}")]
    DuplicateModule {
        name: String,
        first: String,
        second: String,
    },
    #[error("module {module}: signal {signal} declared twice")]
    DuplicateSignal { module: String, signal: String },
    #[error("{parent}: instance {instance} of undefined module {module}")]
    UnresolvedInstance {
        parent: String,
        instance: String,
        module: String,
    },
    #[error("{parent}: instance {instance} binds unknown port {port} of {module}")]
    UnknownPort {
        parent: String,
        instance: String,
        module: String,
        port: String,
    },
    #[error("several candidate top modules: {}; select one explicitly", .0.join(", "))]
    MultipleTops(Vec<String>),
    #[error("requested top module {0} is not defined")]
    UnknownTop(String),
    #[error("module {0} instantiates itself")]
    RecursiveInstantiation(String),
    #[error("no RTL files given")]
    NoFiles,
    #[error("no modules found")]
    NoModules,
    #[error("signal {0} is not declared anywhere in the design")]
    SignalNotFound(String),
}
