//! Published full-scale figures, printed next to measured values.

use super::Method;

fn column(n: usize) -> Option<usize> {
    [4, 8, 12, 20].iter().position(|&k| k == n)
}

/// Total travel cost in the static scenario, seconds.
pub fn total_cost(method: Method, n: usize) -> Option<f64> {
    let row = match method {
        Method::Hungarian => [20.3, 60.3, 131.9, 254.3],
        Method::Magnnet => [20.3, 61.2, 134.7, 321.5],
        Method::Greedy => [22.5, 65.8, 140.5, 383.2],
        Method::Random => [27.9, 72.3, 175.7, 423.8],
    };
    column(n).map(|k| row[k])
}

/// Conflict-free success rate, percent.
pub fn success_rate(method: Method, n: usize) -> Option<f64> {
    let row = match method {
        Method::Hungarian => [100.0, 100.0, 100.0, 100.0],
        Method::Magnnet => [100.0, 100.0, 90.0, 80.0],
        Method::Greedy => [90.0, 80.0, 80.0, 60.0],
        Method::Random => return None,
    };
    column(n).map(|k| row[k])
}

/// Allocation time, seconds.
pub fn alloc_time(method: Method, n: usize) -> Option<f64> {
    let row = match method {
        Method::Hungarian => [0.8, 1.5, 2.8, 5.6],
        Method::Magnnet => [0.4, 0.6, 1.2, 2.8],
        Method::Greedy => [0.3, 0.3, 0.5, 1.2],
        Method::Random => return None,
    };
    column(n).map(|k| row[k])
}

/// Mean path length (A*, RRT*), meters.
pub fn path_lengths(n: usize) -> Option<(f64, f64)> {
    let astar = [5.75, 13.63, 20.83, 38.40];
    let rrt = [8.86, 13.87, 19.86, 40.95];
    column(n).map(|k| (astar[k], rrt[k]))
}
