use std::path::Path;

use image::{ImageBuffer, Rgb};
use pathfinding::kuhn_munkres::kuhn_munkres_min;
use pathfinding::matrix::Matrix;

use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::nn::Tensor;

/// Costs are scaled to integers for the Hungarian solver.
const COST_SCALE: f64 = 1e9;

pub fn cell_center(cell: usize, g: usize) -> [f64; 2] {
    let (row, col) = (cell / g, cell % g);
    [(col as f64 + 0.5) / g as f64, (row as f64 + 0.5) / g as f64]
}

pub fn cell_cost(p: &[f64; 2], cell: usize, g: usize) -> f64 {
    let c = cell_center(cell, g);
    (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)
}

pub fn smallest_grid(n: usize) -> usize {
    let mut g = (n as f64).sqrt().ceil() as usize;
    while g * g < n {
        g += 1;
    }
    g.max(1)
}

/// Distinct grid cell (`row * g + col`, row along y) for each unit-square
/// point, minimising total squared distance to cell centres.
pub fn grid_montage(points: &[[f64; 2]], g: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if g == 0 || g * g < n {
        return Err(Error::invalid(format!("{g}x{g} grid cannot hold {n} points")));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let cells = g * g;
    let weights = Matrix::from_fn(n, cells, |(i, c)| (cell_cost(&points[i], c, g) * COST_SCALE).round() as i64);
    let (_, assignment) = kuhn_munkres_min(&weights);
    Ok(assignment)
}

/// Tiles sample images into their assigned cells; empty cells stay black.
pub fn render_montage(images: &Tensor, cells: &[usize], g: usize) -> Result<ImageBuffer<Rgb<u8>, Vec<u8>>> {
    let shape = images.shape();
    if shape.len() != 4 || shape[0] != cells.len() {
        return Err(Error::invalid(format!(
            "montage needs n×C×H×W images for {} cells, got {shape:?}",
            cells.len()
        )));
    }
    let (c, h, w) = (shape[1], shape[2], shape[3]);
    let per = c * h * w;
    let mut img = ImageBuffer::new((g * w) as u32, (g * h) as u32);
    let to_u8 = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    for (i, &cell) in cells.iter().enumerate() {
        if cell >= g * g {
            return Err(Error::invalid(format!("cell {cell} outside {g}x{g} grid")));
        }
        let sample = &images.data()[i * per..(i + 1) * per];
        let (row, col) = (cell / g, cell % g);
        // Row 0 holds the lowest y; draw it at the bottom so the montage reads like a plot.
        let top = (g - 1 - row) * h;
        for y in 0..h {
            for x in 0..w {
                let px = |ch: usize| to_u8(sample[ch.min(c - 1) * h * w + y * w + x]);
                let rgb = if c >= 3 { [px(0), px(1), px(2)] } else { [px(0); 3] };
                img.put_pixel((col * w + x) as u32, (top + y) as u32, Rgb(rgb));
            }
        }
    }
    Ok(img)
}

pub fn write_montage(path: &Path, images: &Tensor, points: &[[f64; 2]]) -> Result<()> {
    let g = smallest_grid(points.len());
    let cells = grid_montage(points, g)?;
    let img = render_montage(images, &cells, g)?;
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)?;
    atomic_write(path, &bytes)
}
