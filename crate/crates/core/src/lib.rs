//! A small while-language with declassification, its level-based complexity type
//! discipline, an interpreter with an aperiodicity monitor, and a second-order
//! extension with oracles and closures.

pub mod ast;
pub mod cli;
pub mod interp1;
pub mod opreg;
pub mod parser;
pub mod safety1;
pub mod secondorder;
pub mod word;
