#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use pdf_writer::{Content, Finish, Pdf, Rect, Ref};

/// Reference sentiment triple with its published entropy and stress index.
pub const GOLDEN_SENTIMENT: [f64; 3] = [0.05230807140469551, 0.8731970191001892, 0.07449495047330856];
pub const GOLDEN_ENTROPY: f64 = 0.4662059545516968;
pub const GOLDEN_STRESS: f64 = 0.2637971341609955;

/// Opening lines of a reference transcription.
pub const SAMPLE_TRANSCRIPT: &str = "a) Role\nIt is the function or work of the member in the group.\n";

/// Writes a PDF with `pages` pages of `side_in` x `side_in` inches. Page `k`
/// carries `k` black bars so every page binarizes differently.
pub fn write_pdf(path: &Path, pages: usize, side_in: f32) {
    let side = side_in * 72.0;
    let mut pdf = Pdf::new();
    let catalog = Ref::new(1);
    let tree = Ref::new(2);
    let page_ids: Vec<Ref> = (0..pages).map(|i| Ref::new(10 + 2 * i as i32)).collect();
    pdf.catalog(catalog).pages(tree);
    pdf.pages(tree)
        .kids(page_ids.iter().copied())
        .count(pages as i32);
    for (i, &id) in page_ids.iter().enumerate() {
        let content_id = Ref::new(id.get() + 1);
        let mut page = pdf.page(id);
        page.media_box(Rect::new(0.0, 0.0, side, side));
        page.parent(tree);
        page.contents(content_id);
        page.finish();

        let mut content = Content::new();
        content.set_fill_gray(0.0);
        for bar in 0..=i {
            let y = side * 0.15 + bar as f32 * side * 0.2;
            content.rect(side * 0.1, y, side * 0.8, side * 0.06);
        }
        content.fill_nonzero();
        pdf.stream(content_id, &content.finish());
    }
    fs::write(path, pdf.finish()).unwrap();
}

/// Writes `<label>.txt` (and `<label>.conf` when given) into `dir`.
pub fn write_fixture(dir: &Path, label: &str, text: &str, confidence: Option<f64>) {
    fs::create_dir_all(dir).unwrap();
    fs::write(dir.join(format!("{label}.txt")), text).unwrap();
    if let Some(c) = confidence {
        fs::write(dir.join(format!("{label}.conf")), c.to_string()).unwrap();
    }
}

pub fn write_lexicon(dir: &Path, negative: &[&str], positive: &[&str]) -> PathBuf {
    let path = dir.join("lexicon.json");
    let body = serde_json::json!({"negative": negative, "positive": positive});
    fs::write(&path, serde_json::to_string(&body).unwrap()).unwrap();
    path
}

/// A hermetic corpus: one 3-page PDF for `student0` plus OCR fixtures.
pub struct Corpus {
    pub root: tempfile::TempDir,
}

impl Corpus {
    pub fn input(&self) -> PathBuf {
        self.root.path().join("input")
    }

    pub fn mocks(&self) -> PathBuf {
        self.root.path().join("mocks")
    }

    pub fn out(&self) -> PathBuf {
        self.root.path().join("out")
    }
}

pub const PAGE_TEXTS: [&str; 3] = [
    "I am confident and happy with this answer. It went well.",
    "I am not sure. Maybe this is wrong and I am worried.",
    "I am tired and stressed. I cannot finish, I fear I failed.",
];

pub fn three_page_corpus() -> Corpus {
    let root = tempfile::tempdir().unwrap();
    let corpus = Corpus { root };
    fs::create_dir_all(corpus.input()).unwrap();
    write_pdf(&corpus.input().join("student0.pdf"), 3, 1.5);
    for (i, text) in PAGE_TEXTS.iter().enumerate() {
        write_fixture(&corpus.mocks(), &format!("student0_page_{}", i + 1), text, Some(0.9));
    }
    corpus
}

/// Every regular file under `dir`, relative path to bytes.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_path_buf();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Entropy under the precision rule: single precision, ascending terms,
/// when every component is exactly an `f32`; double precision otherwise.
pub fn oracle_entropy(n: f64, u: f64, p: f64) -> f64 {
    let q = [n, u, p];
    if q.iter().all(|&x| (x as f32) as f64 == x) {
        let mut v: Vec<f32> = q.iter().map(|&x| x as f32).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let acc = v
            .iter()
            .filter(|&&x| x > 0.0)
            .fold(0.0f32, |acc, &x| acc + x * x.ln());
        -(acc as f64)
    } else {
        f64_entropy(n, u, p)
    }
}

pub fn f64_entropy(n: f64, u: f64, p: f64) -> f64 {
    [n, u, p]
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.ln())
        .sum()
}

fn fuse(n: f64, h: f64, p: f64) -> f64 {
    (0.6 * n + 0.3 * h + 0.1 * (1.0 - p)).clamp(0.0, 1.0)
}

/// Stress index recomputed from the formula, independent of the library:
/// `0.6 n + 0.3 H + 0.1 (1 - p)` with `H` in nats, clamped.
pub fn oracle_stress(n: f64, u: f64, p: f64) -> f64 {
    fuse(n, oracle_entropy(n, u, p), p)
}

/// Same, with the entropy always in double precision.
pub fn f64_stress(n: f64, u: f64, p: f64) -> f64 {
    fuse(n, f64_entropy(n, u, p), p)
}
