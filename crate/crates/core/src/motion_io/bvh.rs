//! BVH reading and writing.
//!
//! Euler channels are converted to quaternions at parse time by composing
//! the per-axis rotations in the order the channels are listed. Position
//! channels on non-root joints are accepted and dropped; writing emits the
//! joint offset in their place.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::error::{io, Error, Result};
use crate::kinematics::{Axis, Quat};

use super::skeleton::{Channel, JointDef, SkeletonDef};

/// Motion as read from a file, before facing localization.
#[derive(Clone, Debug)]
pub struct RawMotion {
    pub skeleton: Arc<SkeletonDef>,
    pub frame_time: f64,
    pub root_positions: Vec<[f64; 3]>,
    /// `rotations[t][j]`, unit and hemisphere-consistent per joint.
    pub rotations: Vec<Vec<Quat>>,
}

impl RawMotion {
    pub fn new(
        skeleton: Arc<SkeletonDef>,
        frame_time: f64,
        root_positions: Vec<[f64; 3]>,
        mut rotations: Vec<Vec<Quat>>,
    ) -> Result<RawMotion> {
        let t = rotations.len();
        if t < 2 {
            return Err(Error::TooShort { frames: t, needed: 2 });
        }
        if root_positions.len() != t {
            return Err(Error::ShapeMismatch(format!("{} root positions for {t} frames", root_positions.len())));
        }
        let j = skeleton.num_joints();
        if let Some(bad) = rotations.iter().position(|r| r.len() != j) {
            return Err(Error::ShapeMismatch(format!(
                "frame {bad} has {} rotations, skeleton has {j} joints",
                rotations[bad].len()
            )));
        }
        if !(frame_time > 0.0) || !frame_time.is_finite() {
            return Err(Error::Parse { line: 0, message: format!("frame time {frame_time} is not positive") });
        }
        for frame in &mut rotations {
            for q in frame.iter_mut() {
                *q = q.normalize();
            }
        }
        enforce_hemisphere(&mut rotations);
        Ok(RawMotion { skeleton, frame_time, root_positions, rotations })
    }

    pub fn frames(&self) -> usize {
        self.rotations.len()
    }

    pub fn fps(&self) -> f64 {
        1.0 / self.frame_time
    }
}

/// Flips signs so the first frame has `w >= 0` and each later quaternion is
/// in the same hemisphere as its predecessor.
pub(crate) fn enforce_hemisphere(rotations: &mut [Vec<Quat>]) {
    let Some(first) = rotations.first_mut() else { return };
    for q in first.iter_mut() {
        if q.w < 0.0 {
            *q = q.neg();
        }
    }
    for t in 1..rotations.len() {
        let (prev, rest) = rotations.split_at_mut(t);
        for (q, p) in rest[0].iter_mut().zip(&prev[t - 1]) {
            if q.dot(*p) < 0.0 {
                *q = q.neg();
            }
        }
    }
}

struct Tokens<'a> {
    items: Vec<(&'a str, usize)>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let items = text
            .lines()
            .enumerate()
            .flat_map(|(i, l)| l.split_whitespace().map(move |w| (w, i + 1)))
            .collect::<Vec<_>>();
        let last_line = text.lines().count().max(1);
        Self { items, pos: 0, last_line }
    }

    fn line(&self) -> usize {
        self.items.get(self.pos).map_or(self.last_line, |t| t.1)
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { line: self.line(), message: message.into() }
    }

    fn peek(&self) -> Option<&'a str> {
        self.items.get(self.pos).map(|t| t.0)
    }

    fn next(&mut self, what: &str) -> Result<(&'a str, usize)> {
        let t = self.items.get(self.pos).copied().ok_or_else(|| self.err(format!("unexpected end of file, expected {what}")))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, word: &str) -> Result<()> {
        let (t, line) = self.next(word)?;
        if t.eq_ignore_ascii_case(word) {
            Ok(())
        } else {
            Err(Error::Parse { line, message: format!("expected `{word}`, found `{t}`") })
        }
    }

    fn number(&mut self, what: &str) -> Result<f64> {
        let (t, line) = self.next(what)?;
        let v: f64 = t.parse().map_err(|_| Error::Parse { line, message: format!("expected {what}, found `{t}`") })?;
        if !v.is_finite() {
            return Err(Error::Parse { line, message: format!("non-finite {what}") });
        }
        Ok(v)
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let (t, line) = self.next(what)?;
        t.parse().map_err(|_| Error::Parse { line, message: format!("expected {what}, found `{t}`") })
    }
}

fn parse_joint(tok: &mut Tokens, parent: Option<usize>, joints: &mut Vec<JointDef>) -> Result<()> {
    let (name, _) = tok.next("joint name")?;
    tok.expect("{")?;
    tok.expect("OFFSET")?;
    let offset = [tok.number("offset")?, tok.number("offset")?, tok.number("offset")?];
    let mut channels = Vec::new();
    if tok.peek().is_some_and(|t| t.eq_ignore_ascii_case("CHANNELS")) {
        tok.next("CHANNELS")?;
        let n = tok.count("channel count")?;
        for _ in 0..n {
            let (c, line) = tok.next("channel name")?;
            channels.push(Channel::parse(c).ok_or_else(|| Error::UnsupportedChannel { line, name: c.to_string() })?);
        }
    }
    let index = joints.len();
    joints.push(JointDef { name: name.to_string(), parent, offset, end_site: None, channels });
    loop {
        let (t, line) = tok.next("`}`")?;
        match t {
            "}" => return Ok(()),
            "JOINT" => parse_joint(tok, Some(index), joints)?,
            "End" => {
                tok.expect("Site")?;
                tok.expect("{")?;
                tok.expect("OFFSET")?;
                let site = [tok.number("offset")?, tok.number("offset")?, tok.number("offset")?];
                tok.expect("}")?;
                joints[index].end_site = Some(site);
            }
            other => return Err(Error::Parse { line, message: format!("unexpected `{other}` in joint `{name}`") }),
        }
    }
}

/// Parses BVH text. `name` becomes the skeleton name.
pub fn parse_bvh_str(text: &str, name: &str) -> Result<(Arc<SkeletonDef>, RawMotion)> {
    let mut tok = Tokens::new(text);
    tok.expect("HIERARCHY")?;
    tok.expect("ROOT")?;
    let mut joints = Vec::new();
    parse_joint(&mut tok, None, &mut joints)?;
    tok.expect("MOTION")?;
    tok.expect("Frames:")?;
    let frames = tok.count("frame count")?;
    tok.expect("Frame")?;
    tok.expect("Time:")?;
    let frame_time = tok.number("frame time")?;
    if frame_time <= 0.0 {
        return Err(tok.err("frame time must be positive"));
    }

    // Joints come out of a preorder walk, so validation keeps the order.
    let skeleton = Arc::new(SkeletonDef::from_joints(name, joints.clone())?);
    let mut root_positions = Vec::with_capacity(frames);
    let mut rotations = Vec::with_capacity(frames);
    for _ in 0..frames {
        let mut root = [0.0; 3];
        let mut frame = Vec::with_capacity(joints.len());
        for (j, joint) in joints.iter().enumerate() {
            let mut order = Vec::with_capacity(3);
            let mut angles = Vec::with_capacity(3);
            for ch in &joint.channels {
                let v = tok.number("channel value")?;
                match *ch {
                    Channel::Position(a) if j == 0 => root[a.index()] = v,
                    Channel::Position(_) => {}
                    Channel::Rotation(a) => {
                        order.push(a);
                        angles.push(v.to_radians());
                    }
                }
            }
            frame.push(Quat::from_euler(&order, &angles));
        }
        root_positions.push(root);
        rotations.push(frame);
    }
    if let Some((t, line)) = tok.items.get(tok.pos) {
        return Err(Error::Parse { line: *line, message: format!("trailing data `{t}` after {frames} frames") });
    }
    let motion = RawMotion::new(skeleton.clone(), frame_time, root_positions, rotations)?;
    Ok((skeleton, motion))
}

/// Reads a BVH file; the skeleton is named after the file stem.
pub fn parse_bvh(path: &Path) -> Result<(Arc<SkeletonDef>, RawMotion)> {
    let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("skeleton");
    parse_bvh_str(&text, name).map_err(|e| e.context(path.display().to_string()))
}

fn rotation_order(channels: &[Channel]) -> Vec<Axis> {
    channels
        .iter()
        .filter_map(|c| match c {
            Channel::Rotation(a) => Some(*a),
            Channel::Position(_) => None,
        })
        .collect()
}

/// Serializes motion as BVH text using each joint's channel layout.
pub fn write_bvh(motion: &RawMotion) -> Result<String> {
    let skel = &motion.skeleton;
    let orders: Vec<Vec<Axis>> = skel.channels.iter().map(|c| rotation_order(c)).collect();
    for (j, o) in orders.iter().enumerate() {
        if !(o.is_empty() || o.len() == 3) {
            return Err(Error::InvalidSkeleton(format!(
                "joint `{}` has {} rotation channels; only 0 or 3 can be written",
                skel.joint_names[j],
                o.len()
            )));
        }
    }

    let mut out = String::from("HIERARCHY\n");
    fn emit(out: &mut String, skel: &SkeletonDef, j: usize, depth: usize) {
        let pad = "\t".repeat(depth);
        let kind = if j == 0 { "ROOT" } else { "JOINT" };
        let o = skel.offsets[j];
        let _ = writeln!(out, "{pad}{kind} {}", skel.joint_names[j]);
        let _ = writeln!(out, "{pad}{{");
        let _ = writeln!(out, "{pad}\tOFFSET {:.6} {:.6} {:.6}", o[0], o[1], o[2]);
        let ch = &skel.channels[j];
        if !ch.is_empty() {
            let names: Vec<String> = ch.iter().map(|c| c.name()).collect();
            let _ = writeln!(out, "{pad}\tCHANNELS {} {}", ch.len(), names.join(" "));
        }
        for c in skel.children(j) {
            emit(out, skel, c, depth + 1);
        }
        if let Some(e) = skel.end_sites[j] {
            let _ = writeln!(out, "{pad}\tEnd Site");
            let _ = writeln!(out, "{pad}\t{{");
            let _ = writeln!(out, "{pad}\t\tOFFSET {:.6} {:.6} {:.6}", e[0], e[1], e[2]);
            let _ = writeln!(out, "{pad}\t}}");
        }
        let _ = writeln!(out, "{pad}}}");
    }
    emit(&mut out, skel, 0, 0);
    let _ = writeln!(out, "MOTION\nFrames: {}\nFrame Time: {:.8}", motion.frames(), motion.frame_time);

    let mut values = Vec::new();
    for (t, frame) in motion.rotations.iter().enumerate() {
        values.clear();
        for j in 0..skel.num_joints() {
            let euler = (orders[j].len() == 3)
                .then(|| frame[j].to_euler([orders[j][0], orders[j][1], orders[j][2]]));
            let mut r = 0;
            for ch in &skel.channels[j] {
                values.push(match *ch {
                    Channel::Position(a) if j == 0 => motion.root_positions[t][a.index()],
                    Channel::Position(a) => skel.offsets[j][a.index()],
                    Channel::Rotation(_) => {
                        r += 1;
                        euler.expect("three rotation channels")[r - 1].to_degrees()
                    }
                });
            }
        }
        let line: Vec<String> = values.iter().map(|v| format!("{:.6}", v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}

/// Writes `motion` as BVH, creating missing parent directories.
pub fn save_bvh(path: &Path, motion: &RawMotion) -> Result<()> {
    let text = write_bvh(motion)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io(path, e))
}
