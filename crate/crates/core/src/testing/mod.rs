//! Fixture builders used by tests, examples and the offline pipeline.

pub mod pptx;
