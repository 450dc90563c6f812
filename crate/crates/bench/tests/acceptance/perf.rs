use std::time::{Duration, Instant};

use pc_bench::{filter_input, row_at_a_time_filter, vectorized_filter};

use crate::{ensure, Outcome};

/// Best of `reps` runs.
fn best<T>(reps: usize, mut f: impl FnMut() -> T) -> (Duration, T) {
    let mut out = None;
    let mut fastest = Duration::MAX;
    for _ in 0..reps {
        let t = Instant::now();
        let r = f();
        fastest = fastest.min(t.elapsed());
        out = Some(r);
    }
    (fastest, out.expect("at least one run"))
}

pub fn filter_speedup() -> Outcome {
    let values = filter_input(10_000_000, 10);
    let threshold = 500;
    let want = values
        .iter()
        .filter(|&&x| x > threshold)
        .fold((0, 0i64), |(c, s), &x| (c + 1, s + x));
    let (vec_t, vec_r) = best(3, || vectorized_filter(&values, threshold, 4096));
    let vec_r = vec_r.map_err(|e| e.to_string())?;
    let (row_t, row_r) = best(3, || row_at_a_time_filter(&values, threshold));
    ensure!(
        vec_r == want,
        "vectorized filter gave {vec_r:?}, expected {want:?}"
    );
    ensure!(row_r == want, "baseline gave {row_r:?}, expected {want:?}");
    let speedup = row_t.as_secs_f64() / vec_t.as_secs_f64();
    ensure!(
        speedup >= 5.0,
        "only {speedup:.1}x faster ({vec_t:.2?} vs {row_t:.2?})"
    );
    Ok(format!(
        "{speedup:.1}x ({vec_t:.2?} vs {row_t:.2?} for 1e7 rows)"
    ))
}
