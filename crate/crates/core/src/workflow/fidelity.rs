use std::collections::BTreeMap;

use crate::backend::{BackendError, DiffusionBackend, LatentTensor, MockBackend};
use crate::chart::PlainVisualization;
use crate::imaging::{downsample_mask, Mask, RasterImage};
use crate::sketch::MarkGroup;
use crate::synthesize::{DmpGroup, MaskSetPair};

/// Pearson correlation of two latents over the set cells, clipped to
/// [0, 1]. Flat inputs score 0.
pub fn latent_similarity(a: &LatentTensor, b: &LatentTensor, cells: &Mask) -> f64 {
    let channels = a.channels().min(b.channels());
    let mut pairs = Vec::new();
    for (x, y) in cells.iter_set() {
        for c in 0..channels {
            pairs.push((a.get(c, y, x) as f64, b.get(c, y, x) as f64));
        }
    }
    if pairs.is_empty() {
        return 0.0;
    }
    let n = pairs.len() as f64;
    let (ma, mb) = pairs.iter().fold((0.0, 0.0), |(sa, sb), (p, q)| (sa + p, sb + q));
    let (ma, mb) = (ma / n, mb / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (p, q) in &pairs {
        cov += (p - ma) * (q - mb);
        va += (p - ma) * (p - ma);
        vb += (q - mb) * (q - mb);
    }
    if va <= 1e-12 || vb <= 1e-12 {
        return 0.0;
    }
    (cov / (va.sqrt() * vb.sqrt())).clamp(0.0, 1.0)
}

/// Latent cells scored for each mark: the mark's downsampled plain mask,
/// restricted to the cells its group owns during the plain DMP phase.
pub fn mark_cells(plain: &PlainVisualization, groups: &[MarkGroup], factor: u32) -> BTreeMap<usize, Mask> {
    let (w, h) = plain.canvas();
    let populated: Vec<&MarkGroup> = groups.iter().filter(|g| !g.mark_ids.is_empty()).collect();
    let dmp_groups: Vec<DmpGroup> = populated
        .iter()
        .map(|g| {
            let mask = g
                .mark_ids
                .iter()
                .filter_map(|id| plain.mark(*id))
                .fold(Mask::new(w, h), |acc, m| acc.union(&m.mask));
            DmpGroup { prompt: g.prompt.clone(), sketch_mask: mask.clone(), plain_mask: mask }
        })
        .collect();
    let owned = MaskSetPair::build(&dmp_groups, factor).ok();
    let mut out = BTreeMap::new();
    for (gi, g) in populated.iter().enumerate() {
        for id in &g.mark_ids {
            let Some(mark) = plain.mark(*id) else { continue };
            let Ok(down) = downsample_mask(&mark.mask, factor) else { continue };
            let resolved = owned.as_ref().map_or(down.clone(), |o| down.intersect(&o.plain[gi]));
            let cells = if resolved.is_empty() { down } else { resolved };
            if !cells.is_empty() {
                out.insert(*id, cells);
            }
        }
    }
    out
}

/// Mock targets of each group, keyed by group index.
pub fn mock_group_targets(groups: &[MarkGroup], seed: u64, latent_dims: (u32, u32)) -> BTreeMap<usize, LatentTensor> {
    groups
        .iter()
        .map(|g| (g.index, MockBackend::target_latent(&g.prompt, seed, latent_dims.1, latent_dims.0)))
        .collect()
}

/// Similarity of every mark to every group target: mark id to group index to score.
pub fn geometry_scores(
    image: &RasterImage,
    plain: &PlainVisualization,
    groups: &[MarkGroup],
    targets: &BTreeMap<usize, LatentTensor>,
    backend: &dyn DiffusionBackend,
) -> Result<BTreeMap<usize, BTreeMap<usize, f64>>, BackendError> {
    let z = backend.encode(image)?;
    let cells = mark_cells(plain, groups, backend.descriptor().latent_factor);
    Ok(cells
        .into_iter()
        .map(|(id, m)| (id, targets.iter().map(|(&g, t)| (g, latent_similarity(&z, t, &m))).collect()))
        .collect())
}

/// Per-mark similarity between `image` and the mark's own group target;
/// 1.0 means the image carries the target exactly inside the mark.
pub fn geometry_fidelity(
    image: &RasterImage,
    plain: &PlainVisualization,
    groups: &[MarkGroup],
    targets: &BTreeMap<usize, LatentTensor>,
    backend: &dyn DiffusionBackend,
) -> Result<BTreeMap<usize, f64>, BackendError> {
    let owner: BTreeMap<usize, usize> = groups.iter().flat_map(|g| g.mark_ids.iter().map(move |&id| (id, g.index))).collect();
    let scores = geometry_scores(image, plain, groups, targets, backend)?;
    Ok(scores
        .into_iter()
        .filter_map(|(id, per_group)| owner.get(&id).and_then(|g| per_group.get(g)).map(|&s| (id, s)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_bounds() {
        let t = MockBackend::target_latent("p", 1, 8, 8);
        let all = Mask::full(8, 8);
        assert!((latent_similarity(&t, &t, &all) - 1.0).abs() < 1e-9);
        let flat = LatentTensor::zeros(4, 8, 8);
        assert_eq!(latent_similarity(&flat, &t, &all), 0.0);
        let neg = t.zip_map(&t, |a, _| 1.0 - a);
        assert_eq!(latent_similarity(&neg, &t, &all), 0.0);
        assert_eq!(latent_similarity(&t, &t, &Mask::new(8, 8)), 0.0);
    }
}
