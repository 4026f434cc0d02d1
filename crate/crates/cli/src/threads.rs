use faer::Par;

use crate::error::CliError;

pub const THREADS_ENV: &str = "FRACTAL_SPECTRA_THREADS";

/// Reads a thread cap; unset or empty means no cap.
pub fn parse_threads(value: Option<&str>) -> Result<Option<usize>, CliError> {
    match value.map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::config(
                THREADS_ENV,
                format!("expected a positive thread count, got {s:?}"),
            )),
        },
    }
}

/// Caps the rayon pool and faer's dense kernels. Returns the pool size.
pub fn init_threads(cap: Option<usize>) -> usize {
    if let Some(n) = cap {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        faer::set_global_parallelism(if n == 1 { Par::Seq } else { Par::rayon(n) });
    }
    rayon::current_num_threads()
}
