//! Anchor placement.
//!
//! Placement criteria: put anchors where they are sensitive to the forward
//! process (so the information in the indirect data transfers to them), or
//! where future prediction tasks need them; absent either, spread them for
//! balanced coverage of the field.

use crate::error::{Error, Result};
use crate::fieldsim::Field;
use crate::geostat::{Grid, Location};

/// Placement strategies for type-B anchors.
#[derive(Clone, Debug)]
pub enum AnchorStrategy<'a> {
    /// Stratified/farthest-point spread over the grid.
    Coverage,
    /// Greedy top-`count` cells of a sensitivity map, subject to a minimum
    /// separation between anchors.
    Sensitivity { map: &'a Field, min_separation: f64 },
    /// Nearest feasible cells to the given prediction targets.
    Targeted { targets: &'a [Location] },
}

/// Choose `count` distinct anchor cells, avoiding the cells occupied by
/// `exclude` (the type-A locations).
pub fn place_anchors(
    grid: &Grid,
    count: usize,
    strategy: &AnchorStrategy,
    exclude: &[Location],
) -> Result<Vec<Location>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let n = grid.cell_count();
    let excluded: Vec<usize> = exclude.iter().map(|l| grid.nearest_cell(l).0).collect();
    let available = n - dedup_count(&excluded);
    if count > available {
        return Err(Error::Config(format!(
            "cannot place {count} anchors on {available} available cells"
        )));
    }
    let cells = match strategy {
        AnchorStrategy::Coverage => coverage_cells(grid, count, &excluded),
        AnchorStrategy::Sensitivity {
            map,
            min_separation,
        } => {
            if map.grid != *grid {
                return Err(Error::Config("sensitivity map grid does not match".into()));
            }
            sensitivity_cells(grid, count, map, *min_separation, &excluded)?
        }
        AnchorStrategy::Targeted { targets } => {
            if targets.is_empty() {
                return Err(Error::Config(
                    "targeted placement needs at least one target".into(),
                ));
            }
            targeted_cells(grid, count, targets, &excluded)
        }
    };
    Ok(cells.into_iter().map(|c| grid.cell_center(c)).collect())
}

fn dedup_count(cells: &[usize]) -> usize {
    let mut seen: Vec<usize> = cells.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Stratified block centers when `count` factors to fit the grid,
/// otherwise farthest-point refinement seeded at the grid centroid.
fn coverage_cells(grid: &Grid, count: usize, excluded: &[usize]) -> Vec<usize> {
    let [nx, ny] = grid.dims;
    if let Some((rows, cols)) = balanced_factorization(count, nx, ny) {
        let mut chosen = Vec::with_capacity(count);
        for i in 0..rows {
            for j in 0..cols {
                let ix = ((j as f64 + 0.5) * nx as f64 / cols as f64).floor() as usize;
                let iy = ((i as f64 + 0.5) * ny as f64 / rows as f64).floor() as usize;
                let want = grid.index(ix.min(nx - 1), iy.min(ny - 1));
                chosen.push(nearest_free_cell(grid, want, excluded, &chosen));
            }
        }
        return chosen;
    }
    farthest_point_cells(grid, count, excluded)
}

/// Factor `count = rows * cols` with the aspect ratio closest to the
/// grid's, both factors fitting inside the grid. 1-D grids always use a
/// single row/column of strata; on 2-D grids a factorization whose block
/// aspect strays more than 2.5x from the grid's is rejected in favor of
/// farthest-point placement.
fn balanced_factorization(count: usize, nx: usize, ny: usize) -> Option<(usize, usize)> {
    if ny == 1 {
        return (count <= nx).then_some((1, count));
    }
    if nx == 1 {
        return (count <= ny).then_some((count, 1));
    }
    let grid_aspect = nx as f64 / ny as f64;
    let mut best: Option<((usize, usize), f64)> = None;
    for rows in 1..=count {
        if count % rows != 0 {
            continue;
        }
        let cols = count / rows;
        if cols > nx || rows > ny {
            continue;
        }
        let block_aspect = cols as f64 / rows as f64;
        let ratio = (block_aspect / grid_aspect).max(grid_aspect / block_aspect);
        match best {
            Some((_, s)) if ratio >= s => {}
            _ => best = Some(((rows, cols), ratio)),
        }
    }
    match best {
        Some((rc, ratio)) if ratio <= 2.5 => Some(rc),
        _ => None,
    }
}

fn farthest_point_cells(grid: &Grid, count: usize, excluded: &[usize]) -> Vec<usize> {
    let centers = grid.cell_centers();
    let centroid = Location::new(
        grid.origin.x + (grid.dims[0] as f64 - 1.0) / 2.0 * grid.spacing[0],
        grid.origin.y + (grid.dims[1] as f64 - 1.0) / 2.0 * grid.spacing[1],
    );
    let free = |c: usize, chosen: &[usize]| !excluded.contains(&c) && !chosen.contains(&c);
    let mut chosen: Vec<usize> = Vec::with_capacity(count);
    // seed: free cell nearest the centroid, lowest index on ties
    let seed = (0..centers.len())
        .filter(|&c| free(c, &chosen))
        .min_by(|&a, &b| {
            centers[a]
                .distance(&centroid)
                .total_cmp(&centers[b].distance(&centroid))
        })
        .expect("availability checked by caller");
    chosen.push(seed);
    while chosen.len() < count {
        let next = (0..centers.len())
            .filter(|&c| free(c, &chosen))
            .max_by(|&a, &b| {
                let da = chosen
                    .iter()
                    .map(|&s| centers[a].distance(&centers[s]))
                    .fold(f64::INFINITY, f64::min);
                let db = chosen
                    .iter()
                    .map(|&s| centers[b].distance(&centers[s]))
                    .fold(f64::INFINITY, f64::min);
                da.total_cmp(&db)
            })
            .expect("availability checked by caller");
        chosen.push(next);
    }
    chosen
}

fn nearest_free_cell(grid: &Grid, want: usize, excluded: &[usize], chosen: &[usize]) -> usize {
    if !excluded.contains(&want) && !chosen.contains(&want) {
        return want;
    }
    let target = grid.cell_center(want);
    (0..grid.cell_count())
        .filter(|c| !excluded.contains(c) && !chosen.contains(c))
        .min_by(|&a, &b| {
            grid.cell_center(a)
                .distance(&target)
                .total_cmp(&grid.cell_center(b).distance(&target))
        })
        .expect("availability checked by caller")
}

fn sensitivity_cells(
    grid: &Grid,
    count: usize,
    map: &Field,
    min_separation: f64,
    excluded: &[usize],
) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..grid.cell_count()).collect();
    order.sort_by(|&a, &b| {
        map.values[b]
            .abs()
            .total_cmp(&map.values[a].abs())
            .then(a.cmp(&b))
    });
    let mut chosen = Vec::with_capacity(count);
    for c in order {
        if excluded.contains(&c) {
            continue;
        }
        let center = grid.cell_center(c);
        if chosen
            .iter()
            .all(|&s: &usize| grid.cell_center(s).distance(&center) >= min_separation)
        {
            chosen.push(c);
            if chosen.len() == count {
                return Ok(chosen);
            }
        }
    }
    Err(Error::Config(format!(
        "only {} cells satisfy the {min_separation} m separation; cannot place {count} anchors",
        chosen.len()
    )))
}

fn targeted_cells(
    grid: &Grid,
    count: usize,
    targets: &[Location],
    excluded: &[usize],
) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(count);
    let mut t = 0;
    while chosen.len() < count {
        let want = grid.nearest_cell(&targets[t % targets.len()]).0;
        let cell = nearest_free_cell(grid, want, excluded, &chosen);
        chosen.push(cell);
        t += 1;
    }
    chosen
}
