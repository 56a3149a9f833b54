//! Rehearsal coaching: turns a slide deck and a short voice sample into a
//! narrated exemplar video, then analyses practice recordings against it.

pub mod api;
pub mod audio;
pub mod chat;
pub mod coach;
pub mod config;
pub mod deck;
pub mod headless;
pub mod ids;
pub mod media;
pub mod pipeline;
pub mod progress;
pub mod providers;
pub mod script;
pub mod store;
pub mod testing;
pub mod text;
pub mod video;
pub mod voice;
