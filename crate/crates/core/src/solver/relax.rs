//! Over-relaxation of the free electrolyte nodes.
//!
//! Each free node carries a normalized 7-point stencil built from the
//! dual-cell conductances of [`Grid`]. Links that would cross a dielectric
//! wall are absent, which is the finite-volume form of a mirrored ghost node
//! and enforces a zero normal gradient there.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::grid::{Direction, Grid};

pub(crate) struct FreeStencil {
    nodes: Vec<usize>,
    neighbors: Vec<[u32; 6]>,
    weights: Vec<[f64; 6]>,
    red: Vec<u32>,
    black: Vec<u32>,
}

impl FreeStencil {
    pub(crate) fn new(grid: &Grid) -> Self {
        let mut nodes = Vec::new();
        let mut neighbors = Vec::new();
        let mut weights = Vec::new();
        let mut red = Vec::new();
        let mut black = Vec::new();
        for idx in 0..grid.len() {
            if !grid.classes[idx].is_electrolyte() || grid.face_at(idx).is_some() {
                continue;
            }
            let mut nb = [idx as u32; 6];
            let mut w = [0.0; 6];
            for (slot, dir) in Direction::ALL.into_iter().enumerate() {
                if let Some(n) = grid.neighbor(idx, dir) {
                    debug_assert!(grid.classes[n].is_electrolyte());
                    nb[slot] = n as u32;
                    w[slot] = grid.link_conductance(idx, dir.axis);
                }
            }
            let total: f64 = w.iter().sum();
            for x in &mut w {
                *x /= total;
            }
            let c = grid.coords(idx);
            let pos = nodes.len() as u32;
            if (c[0] + c[1] + c[2]).is_multiple_of(2) {
                red.push(pos);
            } else {
                black.push(pos);
            }
            nodes.push(idx);
            neighbors.push(nb);
            weights.push(w);
        }
        Self {
            nodes,
            neighbors,
            weights,
            red,
            black,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    fn relaxed(&self, v: &[f64], pos: usize, omega: f64) -> f64 {
        let nb = &self.neighbors[pos];
        let w = &self.weights[pos];
        let old = v[self.nodes[pos]];
        let mut step = 0.0;
        for s in 0..6 {
            step += w[s] * (v[nb[s] as usize] - old);
        }
        old + omega * step
    }

    /// In-place lexicographic SOR pass. Returns the largest change.
    pub(crate) fn sweep_lexicographic(&self, v: &mut [f64], omega: f64) -> f64 {
        let mut max_change = 0.0f64;
        for pos in 0..self.nodes.len() {
            let new = self.relaxed(v, pos, omega);
            let node = self.nodes[pos];
            max_change = max_change.max((new - v[node]).abs());
            v[node] = new;
        }
        max_change
    }

    /// Red pass then black pass. Nodes of one colour only see nodes of the
    /// other colour or fixed interface values, so each pass is order-free.
    pub(crate) fn sweep_red_black(&self, v: &mut [f64], omega: f64, parallel: bool) -> f64 {
        let a = self.relax_colour(v, &self.red, omega, parallel);
        let b = self.relax_colour(v, &self.black, omega, parallel);
        a.max(b)
    }

    fn relax_colour(&self, v: &mut [f64], colour: &[u32], omega: f64, parallel: bool) -> f64 {
        let updates = self.colour_updates(v, colour, omega, parallel);
        let mut max_change = 0.0f64;
        for (&pos, &new) in colour.iter().zip(&updates) {
            let node = self.nodes[pos as usize];
            max_change = max_change.max((new - v[node]).abs());
            v[node] = new;
        }
        max_change
    }

    #[cfg(feature = "parallel")]
    fn colour_updates(&self, v: &[f64], colour: &[u32], omega: f64, parallel: bool) -> Vec<f64> {
        if parallel {
            colour
                .par_iter()
                .with_min_len(4096)
                .map(|&pos| self.relaxed(v, pos as usize, omega))
                .collect()
        } else {
            colour
                .iter()
                .map(|&pos| self.relaxed(v, pos as usize, omega))
                .collect()
        }
    }

    #[cfg(not(feature = "parallel"))]
    fn colour_updates(&self, v: &[f64], colour: &[u32], omega: f64, _parallel: bool) -> Vec<f64> {
        colour
            .iter()
            .map(|&pos| self.relaxed(v, pos as usize, omega))
            .collect()
    }
}
