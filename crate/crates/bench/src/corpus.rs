//! Synthetic document roots: a seeded tree of HTML pages and binary files,
//! linked so that every file except the orphans is reachable from `index.html`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use filetime::FileTime;
use oaifs_core::datestamp::{self, Datestamp};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SizeShape {
    Uniform,
    /// Uniform in log(size): many small files, a long tail of large ones.
    LogUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeDistribution {
    pub min_bytes: u64,
    pub max_bytes: u64,
    pub shape: SizeShape,
}

impl SizeDistribution {
    fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        let (lo, hi) = (self.min_bytes, self.max_bytes.max(self.min_bytes));
        match self.shape {
            SizeShape::Uniform => rng.gen_range(lo..=hi),
            SizeShape::LogUniform => {
                let (a, b) = (((lo.max(1)) as f64).ln(), (hi.max(1) as f64).ln());
                let x = if b > a { rng.gen_range(a..b) } else { a };
                (x.exp().round() as u64).clamp(lo, hi)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub file_count: usize,
    pub html_fraction: f64,
    pub max_depth: usize,
    pub size_distribution: SizeDistribution,
    pub link_fanout: usize,
    pub seed: u64,
    pub baseline_mtime: Datestamp,
    pub orphan_fraction: f64,
}

impl CorpusSpec {
    /// A small-file corpus with the paper's baseline date.
    pub fn new(file_count: usize, seed: u64) -> Self {
        CorpusSpec {
            file_count,
            html_fraction: 0.3,
            max_depth: 4,
            size_distribution: SizeDistribution {
                min_bytes: 64,
                max_bytes: 16 * 1024,
                shape: SizeShape::LogUniform,
            },
            link_fanout: 8,
            seed,
            baseline_mtime: datestamp::parse_seconds("2000-01-01T00:00:00Z").expect("constant"),
            orphan_fraction: 0.0,
        }
    }

    pub fn orphan_count(&self) -> usize {
        ((self.orphan_fraction * self.file_count as f64).round() as usize).min(self.file_count.saturating_sub(1))
    }

    fn validate(&self) -> anyhow::Result<()> {
        ensure!(self.file_count >= 1, "file_count must be positive");
        ensure!(self.max_depth >= 1, "max_depth must be positive");
        ensure!(self.link_fanout >= 1, "link_fanout must be positive");
        ensure!((0.0..=1.0).contains(&self.html_fraction), "html_fraction must be in [0,1]");
        ensure!((0.0..=1.0).contains(&self.orphan_fraction), "orphan_fraction must be in [0,1]");
        ensure!(
            self.size_distribution.min_bytes <= self.size_distribution.max_bytes,
            "size range is empty"
        );
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the document root, `/`-separated.
    pub path: String,
    pub size: u64,
    pub mtime: Datestamp,
    /// Hex SHA-256 of the content.
    pub digest: String,
    pub html: bool,
    /// Not linked from any reachable page.
    pub orphan: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: CorpusSpec,
    /// Sorted by path.
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).with_context(|| format!("writing {}", path.display()))
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|f| f.path.as_str())
    }
}

struct Node {
    path: String,
    html: bool,
    size: u64,
    links: Vec<usize>,
}

const BINARY_EXTENSIONS: [&str; 6] = ["pdf", "jpg", "png", "gz", "txt", "css"];

/// Writes the corpus into `out_dir`, which must be empty or absent.
pub fn generate_corpus(spec: &CorpusSpec, out_dir: &Path) -> anyhow::Result<Manifest> {
    spec.validate()?;
    if out_dir.exists() && fs::read_dir(out_dir)?.next().is_some() {
        bail!("{} is not empty; refusing to generate into it", out_dir.display());
    }
    fs::create_dir_all(out_dir)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.file_count;
    let html_count = ((spec.html_fraction * n as f64).round() as usize).clamp(1, n);

    // Node 0 is the root index.html; HTML pages take the next slots.
    let dirs = directory_pool(spec.max_depth, n, &mut rng);
    let mut nodes: Vec<Node> = (0..n)
        .map(|i| {
            let html = i < html_count;
            let path = if i == 0 {
                "index.html".to_string()
            } else {
                let ext = if html { "html" } else { BINARY_EXTENSIONS[rng.gen_range(0..BINARY_EXTENSIONS.len())] };
                let dir = &dirs[rng.gen_range(0..dirs.len())];
                format!("{dir}f{i:05}.{ext}")
            };
            Node {
                path,
                html,
                size: spec.size_distribution.sample(&mut rng),
                links: Vec::new(),
            }
        })
        .collect();

    let orphans: Vec<bool> = {
        let mut flags = vec![false; n];
        for i in index::sample(&mut rng, n - 1, spec.orphan_count()) {
            flags[i + 1] = true;
        }
        flags
    };
    let reachable: Vec<usize> = (0..n).filter(|&i| !orphans[i]).collect();

    // Spanning tree over the reachable set: pages first so every node has a
    // page before it to hang from, then files.
    let mut order: Vec<usize> = reachable[1..].to_vec();
    order.shuffle(&mut rng);
    order.sort_by_key(|&i| !nodes[i].html);
    let mut parents: Vec<usize> = vec![0];
    for &child in &order {
        let open: Vec<usize> = parents
            .iter()
            .copied()
            .filter(|&p| nodes[p].links.len() < spec.link_fanout)
            .collect();
        let parent = match open.choose(&mut rng) {
            Some(&p) => p,
            None => parents[rng.gen_range(0..parents.len())],
        };
        nodes[parent].links.push(child);
        if nodes[child].html {
            parents.push(child);
        }
    }

    // Extra cross links, always to reachable targets, up to the fanout.
    for i in 0..n {
        if !nodes[i].html {
            continue;
        }
        let mut tries = 0;
        while nodes[i].links.len() < spec.link_fanout && tries < 4 * spec.link_fanout {
            tries += 1;
            let t = reachable[rng.gen_range(0..reachable.len())];
            if t != i && !nodes[i].links.contains(&t) {
                nodes[i].links.push(t);
            }
        }
    }

    let mut files = Vec::with_capacity(n);
    let mtime = FileTime::from_unix_time(spec.baseline_mtime.timestamp(), 0);
    for (i, node) in nodes.iter().enumerate() {
        let content = if node.html {
            html_page(&nodes, i, node.size)
        } else {
            binary_content(node.size, &node.path, &mut rng)
        };
        let path = out_dir.join(&node.path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, &content).with_context(|| format!("writing {}", path.display()))?;
        filetime::set_file_mtime(&path, mtime)?;
        files.push(ManifestEntry {
            path: node.path.clone(),
            size: content.len() as u64,
            mtime: spec.baseline_mtime,
            digest: hex::encode(Sha256::digest(&content)),
            html: node.html,
            orphan: orphans[i],
        });
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(Manifest {
        spec: spec.clone(),
        files,
    })
}

/// Directory prefixes (`""` or ending in `/`) no deeper than `max_depth - 1`.
fn directory_pool(max_depth: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut dirs = vec![String::new()];
    let target = (n / 20).max(1);
    while dirs.len() < target + 1 {
        let parent = dirs[rng.gen_range(0..dirs.len())].clone();
        if parent.matches('/').count() + 1 >= max_depth {
            continue;
        }
        let dir = format!("{parent}s{}/", dirs.len());
        dirs.push(dir);
    }
    dirs
}

/// Relative reference from the page at `from` to `to`, both root-relative.
pub fn relative_link(from: &str, to: &str) -> String {
    let from_dirs: Vec<&str> = from.split('/').collect();
    let from_dirs = &from_dirs[..from_dirs.len() - 1];
    let to_parts: Vec<&str> = to.split('/').collect();
    let common = from_dirs
        .iter()
        .zip(&to_parts[..to_parts.len() - 1])
        .take_while(|(a, b)| a == b)
        .count();
    let mut out = "../".repeat(from_dirs.len() - common);
    out.push_str(&to_parts[common..].join("/"));
    out
}

fn html_page(nodes: &[Node], i: usize, size: u64) -> Vec<u8> {
    let node = &nodes[i];
    let mut page = format!(
        "<!DOCTYPE html>\n<html><head><title>{}</title></head><body>\n<ul>\n",
        node.path
    );
    for &t in &node.links {
        let href = relative_link(&node.path, &nodes[t].path);
        let _ = writeln!(page, "<li><a href=\"{href}\">{}</a></li>", nodes[t].path);
    }
    page.push_str("</ul>\n<p>");
    let tail = "</p></body></html>\n";
    let filler = "lorem ipsum dolor sit amet ";
    while (page.len() + tail.len()) < size as usize {
        let room = size as usize - page.len() - tail.len();
        page.push_str(&filler[..room.min(filler.len())]);
    }
    page.push_str(tail);
    page.into_bytes()
}

fn binary_content(size: u64, path: &str, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut buf = vec![0u8; size as usize];
    if path.ends_with(".txt") || path.ends_with(".css") {
        for b in buf.iter_mut() {
            *b = rng.gen_range(b' '..=b'~');
        }
    } else {
        rng.fill(&mut buf[..]);
    }
    buf
}

/// Sets the mtime of `round(fraction * file_count)` seeded-random files to
/// `new_mtime`, leaving content alone. Returns the touched paths, sorted.
pub fn touch_fraction(
    manifest: &Manifest,
    docroot: &Path,
    fraction: f64,
    new_mtime: Datestamp,
    seed: u64,
) -> anyhow::Result<Vec<String>> {
    ensure!((0.0..=1.0).contains(&fraction), "fraction must be in [0,1]");
    ensure!(
        new_mtime > manifest.spec.baseline_mtime,
        "new mtime must be later than the baseline"
    );
    let n = manifest.files.len();
    let count = (fraction * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<String> = index::sample(&mut rng, n, count.min(n))
        .into_iter()
        .map(|i| manifest.files[i].path.clone())
        .collect();
    picked.sort();
    let ft = FileTime::from_unix_time(new_mtime.timestamp(), 0);
    for rel in &picked {
        let path = docroot.join(rel);
        filetime::set_file_mtime(&path, ft).with_context(|| format!("touching {}", path.display()))?;
    }
    Ok(picked)
}

/// Manifest path conventionally stored beside the docroot.
pub fn manifest_path_for(docroot: &Path) -> PathBuf {
    let name = docroot.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    docroot.with_file_name(format!("{name}.{MANIFEST_NAME}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_links() {
        assert_eq!(relative_link("index.html", "s1/f.pdf"), "s1/f.pdf");
        assert_eq!(relative_link("s1/a.html", "s1/b.html"), "b.html");
        assert_eq!(relative_link("s1/s3/a.html", "s2/b.html"), "../../s2/b.html");
        assert_eq!(relative_link("s1/a.html", "index.html"), "../index.html");
    }

    #[test]
    fn log_uniform_stays_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = SizeDistribution {
            min_bytes: 10,
            max_bytes: 1000,
            shape: SizeShape::LogUniform,
        };
        let xs: Vec<u64> = (0..2000).map(|_| d.sample(&mut rng)).collect();
        assert!(xs.iter().all(|&x| (10..=1000).contains(&x)));
        let small = xs.iter().filter(|&&x| x < 100).count();
        assert!((800..1200).contains(&small), "{small}");
    }
}
