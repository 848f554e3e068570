//! stderr logger that tallies warnings and errors for the summary line.

use std::sync::atomic::{AtomicUsize, Ordering};

use log::{Level, Log, Metadata, Record};

static WARNINGS: AtomicUsize = AtomicUsize::new(0);
static ERRORS: AtomicUsize = AtomicUsize::new(0);

struct Counting {
    inner: env_logger::Logger,
}

impl Log for Counting {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= Level::Warn || self.inner.enabled(metadata)
    }

    fn log(&self, record: &Record) {
        match record.level() {
            Level::Error => ERRORS.fetch_add(1, Ordering::Relaxed),
            Level::Warn => WARNINGS.fetch_add(1, Ordering::Relaxed),
            _ => 0,
        };
        if self.inner.matches(record) {
            self.inner.log(record);
        }
    }

    fn flush(&self) {
        self.inner.flush();
    }
}

pub fn init() {
    let inner = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .build();
    let max = inner.filter().max(log::LevelFilter::Warn);
    if log::set_boxed_logger(Box::new(Counting { inner })).is_ok() {
        log::set_max_level(max);
    }
}

pub fn warnings() -> usize {
    WARNINGS.load(Ordering::Relaxed)
}

pub fn errors() -> usize {
    ERRORS.load(Ordering::Relaxed)
}
