//! Step progress reporting shared by the pipelines.

/// Receives progress from a running pipeline. Steps are 0-based positions
/// in the job's step list.
pub trait Progress: Send + Sync {
    fn started(&self, step: usize);
    fn detail(&self, step: usize, detail: String);
    fn finished(&self, step: usize, detail: Option<String>);
}

/// Discards everything.
pub struct NoProgress;

impl Progress for NoProgress {
    fn started(&self, _: usize) {}
    fn detail(&self, _: usize, _: String) {}
    fn finished(&self, _: usize, _: Option<String>) {}
}

/// Prints one line per update; used by the headless CLI.
pub struct PrintProgress {
    pub names: Vec<&'static str>,
}

impl Progress for PrintProgress {
    fn started(&self, step: usize) {
        println!(
            "[{}/{}] {} ... running",
            step + 1,
            self.names.len(),
            self.names[step]
        );
    }
    fn detail(&self, step: usize, detail: String) {
        println!(
            "[{}/{}] {}: {detail}",
            step + 1,
            self.names.len(),
            self.names[step]
        );
    }
    fn finished(&self, step: usize, detail: Option<String>) {
        match detail {
            Some(d) => println!(
                "[{}/{}] {} ... done ({d})",
                step + 1,
                self.names.len(),
                self.names[step]
            ),
            None => println!(
                "[{}/{}] {} ... done",
                step + 1,
                self.names.len(),
                self.names[step]
            ),
        }
    }
}
