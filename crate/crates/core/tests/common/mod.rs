#![allow(dead_code)]

use alignperc::hex::HexEmbedding;
use alignperc::oracle::EdgePattern;
use alignperc::EdgeConfig;

/// Whether every edge of `pattern`, placed with its origin at `center`,
/// has its required state.
pub fn pattern_holds(edges: &EdgeConfig, pattern: &EdgePattern, center: &[i64]) -> bool {
    let spec = edges.spec();
    pattern.edges().iter().all(|pe| {
        let at: Vec<i64> = pe.site.iter().zip(center).map(|(a, b)| a + b).collect();
        let site = spec.index_signed(&at).expect("pattern inside the box");
        edges.is_open(spec.edge_index(site, pe.axis)) == pe.state.is_open()
    })
}

/// Vertices within graph distance `radius` of the vertex nearest the
/// patch centre.
pub fn central_vertices(emb: &HexEmbedding, radius: usize) -> Vec<usize> {
    let n = emb.num_vertices();
    let mean = |i: usize| -> f64 { (0..n).map(|v| emb.vertex(v)[i] as f64).sum::<f64>() / n as f64 };
    let c = [mean(0), mean(1), mean(2)];
    let centre = (0..n)
        .min_by(|&a, &b| {
            let d = |v: usize| (0..3).map(|i| (emb.vertex(v)[i] as f64 - c[i]).powi(2)).sum::<f64>();
            d(a).total_cmp(&d(b))
        })
        .expect("nonempty patch");
    let adj = emb.adjacency();
    let mut dist = vec![usize::MAX; n];
    dist[centre] = 0;
    let mut frontier = vec![centre];
    let mut out = vec![centre];
    for r in 1..=radius {
        let mut next = Vec::new();
        for &v in &frontier {
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = r;
                    next.push(w);
                    out.push(w);
                }
            }
        }
        frontier = next;
    }
    out.sort_unstable();
    out
}
