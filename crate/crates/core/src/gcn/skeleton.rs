//! Skeleton sequences, temporal chunking and a synthetic sequence generator.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{BoolMatrix, DenseMatrix};

pub type Point = [f64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    pub label: usize,
    /// One trajectory per joint; all trajectories of a sequence share a length.
    pub joints: Vec<Vec<Point>>,
}

impl SkeletonSequence {
    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn num_frames(&self) -> usize {
        self.joints.first().map_or(0, Vec::len)
    }
}

/// Sequences sharing one spatial joint graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonDataset {
    pub adjacency: BoolMatrix,
    pub sequences: Vec<SkeletonSequence>,
}

/// Column `j` holds joint `j`'s descriptor: `M` chunk averages of `(x, y, z)`
/// stacked as rows `3c .. 3c + 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkedGraphSignal {
    pub u: DenseMatrix,
}

impl ChunkedGraphSignal {
    pub fn signal_dim(&self) -> usize {
        self.u.rows()
    }

    pub fn nodes(&self) -> usize {
        self.u.cols()
    }
}

/// Chunk sizes for `frames` points split into `chunks` contiguous chunks:
/// the first `frames % chunks` chunks take one extra point.
pub fn chunk_sizes(frames: usize, chunks: usize) -> Vec<usize> {
    let base = frames / chunks;
    let extra = frames % chunks;
    (0..chunks).map(|c| base + usize::from(c < extra)).collect()
}

/// Averages each joint trajectory over `chunks` equal-count time chunks.
/// With fewer frames than chunks, chunk `c` takes the frame at `floor(c * T / M)`.
pub fn temporal_chunking(seq: &SkeletonSequence, chunks: usize) -> Result<ChunkedGraphSignal> {
    if chunks == 0 {
        return Err(Error::Domain("chunk count must be positive".into()));
    }
    let n = seq.joints.len();
    let mut u = DenseMatrix::zeros(3 * chunks, n);
    for (j, traj) in seq.joints.iter().enumerate() {
        let t = traj.len();
        if t == 0 {
            return Err(Error::EmptyTrajectory { joint: j });
        }
        if t < chunks {
            for c in 0..chunks {
                let p = traj[c * t / chunks];
                for (axis, &v) in p.iter().enumerate() {
                    u.set(3 * c + axis, j, v);
                }
            }
            continue;
        }
        let mut start = 0;
        for (c, size) in chunk_sizes(t, chunks).into_iter().enumerate() {
            let mut acc = [0.0; 3];
            for p in &traj[start..start + size] {
                for axis in 0..3 {
                    acc[axis] += p[axis];
                }
            }
            for (axis, &v) in acc.iter().enumerate() {
                u.set(3 * c + axis, j, v / size as f64);
            }
            start += size;
        }
    }
    Ok(ChunkedGraphSignal { u })
}

/// Wrist joint 0 with five finger branches; joints beyond `1 + 5 * k` extend
/// the last finger. Self-loops on every joint.
pub fn hand_adjacency(joints: usize) -> BoolMatrix {
    let mut adj = BoolMatrix::identity(joints);
    if joints <= 1 {
        return adj;
    }
    let per_finger = ((joints - 1) / 5).max(1);
    let mut link = |a: usize, b: usize| {
        adj.set(a, b, true);
        adj.set(b, a, true);
    };
    for j in 1..joints {
        let offset = (j - 1) % per_finger;
        let finger = (j - 1) / per_finger;
        let parent = if offset == 0 && finger < 5 { 0 } else { j - 1 };
        link(parent, j);
    }
    adj
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub num_classes: usize,
    pub per_class: usize,
    pub joints: usize,
    pub frames: usize,
    /// Standard deviation of additive coordinate noise; also scales
    /// per-sequence amplitude and phase jitter.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            num_classes: 4,
            per_class: 50,
            joints: 15,
            frames: 48,
            noise: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
struct Motion {
    amplitude: [f64; 3],
    frequency: [f64; 3],
    phase: [f64; 3],
}

/// Class-specific sinusoidal joint motion around a fixed rest pose, plus noise.
pub fn synth_dataset(params: &SynthParams) -> Result<SkeletonDataset> {
    let SynthParams {
        num_classes,
        per_class,
        joints,
        frames,
        noise,
        seed,
    } = *params;
    if num_classes == 0 || per_class == 0 || joints == 0 || frames == 0 {
        return Err(Error::Domain("synthetic dataset counts must be positive".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Domain(format!("noise must be nonnegative, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rest: Vec<Point> = (0..joints)
        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect();
    let classes: Vec<Vec<Motion>> = (0..num_classes)
        .map(|_| {
            (0..joints)
                .map(|_| Motion {
                    amplitude: [(); 3].map(|_| rng.gen_range(0.2..1.0)),
                    frequency: [(); 3].map(|_| rng.gen_range(1..=3) as f64),
                    phase: [(); 3].map(|_| rng.gen_range(0.0..TAU)),
                })
                .collect()
        })
        .collect();
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");
    let mut sequences = Vec::with_capacity(num_classes * per_class);
    for (label, motions) in classes.iter().enumerate() {
        for _ in 0..per_class {
            let gain = 1.0 + 0.5 * noise * rng.gen_range(-1.0..1.0);
            let shift = 0.5 * noise * rng.gen_range(-1.0..1.0);
            let joints_traj = motions
                .iter()
                .zip(&rest)
                .map(|(m, base)| {
                    (0..frames)
                        .map(|t| {
                            let time = t as f64 / frames as f64;
                            let mut p = [0.0; 3];
                            for axis in 0..3 {
                                let wave = (TAU * m.frequency[axis] * time + m.phase[axis] + shift).sin();
                                p[axis] = base[axis]
                                    + gain * m.amplitude[axis] * wave
                                    + noise * gauss.sample(&mut rng);
                            }
                            p
                        })
                        .collect()
                })
                .collect();
            sequences.push(SkeletonSequence {
                label,
                joints: joints_traj,
            });
        }
    }
    Ok(SkeletonDataset {
        adjacency: hand_adjacency(joints),
        sequences,
    })
}

pub fn validate_adjacency(adj: &BoolMatrix) -> Result<()> {
    if adj.rows() != adj.cols() {
        return Err(Error::Shape {
            left: adj.shape(),
            right: (adj.cols(), adj.rows()),
            context: "adjacency must be square",
        });
    }
    for i in 0..adj.rows() {
        for j in 0..i {
            if adj.get(i, j) != adj.get(j, i) {
                return Err(Error::Domain(format!("adjacency not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

pub fn sequence_to_string(seq: &SkeletonSequence) -> String {
    let mut out = String::new();
    writeln!(out, "label {}", seq.label).unwrap();
    writeln!(out, "joints {} frames {}", seq.num_joints(), seq.num_frames()).unwrap();
    for t in 0..seq.num_frames() {
        for traj in &seq.joints {
            let p = traj[t];
            writeln!(out, "{:.16e} {:.16e} {:.16e}", p[0], p[1], p[2]).unwrap();
        }
    }
    out
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

pub fn sequence_from_str(text: &str) -> Result<SkeletonSequence> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (n, l) = lines.next().ok_or_else(|| parse_err(1, "missing `label k`"))?;
    let label = match l.split_whitespace().collect::<Vec<_>>()[..] {
        ["label", k] => k.parse::<usize>().map_err(|e| parse_err(n, e.to_string()))?,
        _ => return Err(parse_err(n, "expected `label k`")),
    };
    let (n, l) = lines.next().ok_or_else(|| parse_err(2, "missing `joints J frames T`"))?;
    let (joints, frames) = match l.split_whitespace().collect::<Vec<_>>()[..] {
        ["joints", j, "frames", t] => (
            j.parse::<usize>().map_err(|e| parse_err(n, e.to_string()))?,
            t.parse::<usize>().map_err(|e| parse_err(n, e.to_string()))?,
        ),
        _ => return Err(parse_err(n, "expected `joints J frames T`")),
    };
    let mut traj = vec![Vec::with_capacity(frames); joints];
    for _ in 0..frames {
        for joint in traj.iter_mut() {
            let (n, l) = lines.next().ok_or_else(|| parse_err(0, "truncated frame data"))?;
            let coords = l
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|e| parse_err(n, e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            if coords.len() != 3 || coords.iter().any(|c| !c.is_finite()) {
                return Err(parse_err(n, "expected three finite coordinates"));
            }
            joint.push([coords[0], coords[1], coords[2]]);
        }
    }
    if let Some((n, _)) = lines.next() {
        return Err(parse_err(n, "trailing content"));
    }
    Ok(SkeletonSequence { label, joints: traj })
}

pub fn adjacency_to_string(adj: &BoolMatrix) -> String {
    let mut out = String::new();
    for i in 0..adj.rows() {
        let row: Vec<&str> = adj.row(i).iter().map(|&b| if b { "1" } else { "0" }).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
    out
}

pub fn adjacency_from_str(text: &str) -> Result<BoolMatrix> {
    let rows = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.split_whitespace()
                .map(|v| match v {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(parse_err(n + 1, format!("adjacency value `{other}` is not 0/1"))),
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let adj = BoolMatrix::from_rows(&rows)?;
    validate_adjacency(&adj)?;
    Ok(adj)
}

/// Writes `adjacency.txt` and one `NNNNN.seq` file per sequence into `dir`.
pub fn write_dataset_dir(dataset: &SkeletonDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("adjacency.txt"), adjacency_to_string(&dataset.adjacency))?;
    for (idx, seq) in dataset.sequences.iter().enumerate() {
        std::fs::write(dir.join(format!("{idx:05}.seq")), sequence_to_string(seq))?;
    }
    Ok(())
}

/// Reads a directory written by [`write_dataset_dir`] (or laid out the same way).
pub fn read_dataset_dir(dir: &Path) -> Result<SkeletonDataset> {
    let adjacency = adjacency_from_str(&std::fs::read_to_string(dir.join("adjacency.txt"))?)?;
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "seq"))
        .collect();
    paths.sort();
    let sequences = paths
        .iter()
        .map(|p| sequence_from_str(&std::fs::read_to_string(p)?))
        .collect::<Result<Vec<_>>>()?;
    for seq in &sequences {
        if seq.num_joints() != adjacency.rows() {
            return Err(Error::Length {
                expected: adjacency.rows(),
                got: seq.num_joints(),
                context: "joints per sequence vs adjacency",
            });
        }
    }
    Ok(SkeletonDataset { adjacency, sequences })
}
