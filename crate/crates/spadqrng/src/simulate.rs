//! Parallel frame generation. Frame `i` of a run always comes from substream
//! `(seed, i)`, so output does not depend on the thread count.

use rayon::prelude::*;
use spadqrng_core::source::{frame_at, DeviceProfile, SideInfo};
use spadqrng_core::BitFrame;

use crate::error::{AppError, AppResult};

/// Frames `start..start + count`, generated on `threads` workers (the global
/// pool when `None`).
pub fn simulate_frames(
    profile: &DeviceProfile,
    seed: u64,
    start: u64,
    count: u64,
    threads: Option<usize>,
) -> AppResult<Vec<(BitFrame, SideInfo)>> {
    profile.validate()?;
    let work = || -> Vec<(BitFrame, SideInfo)> {
        (start..start + count)
            .into_par_iter()
            .map(|i| frame_at(profile, seed, i))
            .collect()
    };
    match threads {
        None => Ok(work()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| AppError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(work))
        }
    }
}

/// Streams `count` frames in order, `chunk` at a time, so long runs never
/// hold more than one chunk.
pub fn for_each_chunk<F>(profile: &DeviceProfile, seed: u64, count: u64, chunk: u64, mut f: F) -> AppResult<()>
where
    F: FnMut(u64, &[(BitFrame, SideInfo)]) -> AppResult<()>,
{
    let chunk = chunk.max(1);
    let mut at = 0;
    while at < count {
        let n = chunk.min(count - at);
        let frames = simulate_frames(profile, seed, at, n, None)?;
        f(at, &frames)?;
        at += n;
    }
    Ok(())
}
