//! BVH (Bio-Vision Hierarchy) reading and writing.
//!
//! Reading accepts any axis order for the rotation channels and position
//! channels on the root only. Writing always emits `Zrotation Xrotation
//! Yrotation` with six channels on the root, offsets in meters.

use std::fmt::Write as _;

use nalgebra::Matrix3;
use thiserror::Error;

use super::{KinematicsError, MotionClass, MotionSequence, Pose, Skeleton};
use crate::{Quat, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum BvhError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unsupported channel layout: {message}")]
    UnsupportedChannels { line: usize, message: String },
    #[error("line {line}: expected {expected} channel values, found {found}")]
    ChannelCount { line: usize, expected: usize, found: usize },
    #[error("header declares {declared} frames but {found} data rows follow")]
    FrameCount { declared: usize, found: usize },
    #[error("invalid hierarchy: {0}")]
    Hierarchy(#[from] KinematicsError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Channel {
    Pos(usize),
    Rot(usize),
}

fn parse_channel(name: &str) -> Option<Channel> {
    let axis = match name.chars().next()? {
        'X' | 'x' => 0,
        'Y' | 'y' => 1,
        'Z' | 'z' => 2,
        _ => return None,
    };
    match &name[1..].to_ascii_lowercase()[..] {
        "position" => Some(Channel::Pos(axis)),
        "rotation" => Some(Channel::Rot(axis)),
        _ => None,
    }
}

struct Tokens<'a> {
    tokens: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let tokens = text
            .lines()
            .enumerate()
            .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)))
            .collect();
        Self { tokens, pos: 0 }
    }

    fn line(&self) -> usize {
        self.tokens
            .get(self.pos)
            .or_else(|| self.tokens.last())
            .map(|t| t.0)
            .unwrap_or(1)
    }

    fn peek(&self) -> Option<&'a str> {
        self.tokens.get(self.pos).map(|t| t.1)
    }

    fn next(&mut self) -> Result<(usize, &'a str), BvhError> {
        let t = self.tokens.get(self.pos).copied().ok_or_else(|| BvhError::Syntax {
            line: self.line(),
            message: "unexpected end of file".into(),
        })?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, word: &str) -> Result<usize, BvhError> {
        let (line, t) = self.next()?;
        if t.eq_ignore_ascii_case(word) {
            Ok(line)
        } else {
            Err(BvhError::Syntax { line, message: format!("expected {word:?}, found {t:?}") })
        }
    }

    fn number(&mut self) -> Result<f64, BvhError> {
        let (line, t) = self.next()?;
        t.parse::<f64>()
            .map_err(|_| BvhError::Syntax { line, message: format!("expected a number, found {t:?}") })
    }

    fn vec3(&mut self) -> Result<Vec3, BvhError> {
        Ok(Vec3::new(self.number()?, self.number()?, self.number()?))
    }
}

struct JointDecl {
    name: String,
    parent: Option<usize>,
    offset: Vec3,
    channels: Vec<Channel>,
    end_site: Option<Vec3>,
}

fn parse_joint(
    tok: &mut Tokens<'_>,
    parent: Option<usize>,
    joints: &mut Vec<JointDecl>,
) -> Result<(), BvhError> {
    let (_, name) = tok.next()?;
    tok.expect("{")?;
    tok.expect("OFFSET")?;
    let offset = tok.vec3()?;
    let index = joints.len();
    joints.push(JointDecl { name: name.to_string(), parent, offset, channels: Vec::new(), end_site: None });

    if tok.peek().is_some_and(|t| t.eq_ignore_ascii_case("CHANNELS")) {
        let line = tok.expect("CHANNELS")?;
        let count = tok.number()?;
        if count < 0.0 || count.fract() != 0.0 {
            return Err(BvhError::Syntax { line, message: format!("bad channel count {count}") });
        }
        let mut channels = Vec::new();
        for _ in 0..count as usize {
            let (line, t) = tok.next()?;
            let ch = parse_channel(t).ok_or_else(|| BvhError::UnsupportedChannels {
                line,
                message: format!("unknown channel {t:?}"),
            })?;
            channels.push(ch);
        }
        validate_channels(&channels, parent.is_none(), line)?;
        joints[index].channels = channels;
    }

    loop {
        let (line, t) = tok.next()?;
        if t == "}" {
            return Ok(());
        }
        if t.eq_ignore_ascii_case("JOINT") {
            parse_joint(tok, Some(index), joints)?;
        } else if t.eq_ignore_ascii_case("End") {
            tok.expect("Site")?;
            tok.expect("{")?;
            tok.expect("OFFSET")?;
            joints[index].end_site = Some(tok.vec3()?);
            tok.expect("}")?;
        } else {
            return Err(BvhError::Syntax { line, message: format!("unexpected token {t:?}") });
        }
    }
}

fn validate_channels(channels: &[Channel], is_root: bool, line: usize) -> Result<(), BvhError> {
    let rot: Vec<usize> = channels
        .iter()
        .filter_map(|c| if let Channel::Rot(a) = c { Some(*a) } else { None })
        .collect();
    let pos: Vec<usize> = channels
        .iter()
        .filter_map(|c| if let Channel::Pos(a) = c { Some(*a) } else { None })
        .collect();
    if !is_root && !pos.is_empty() {
        return Err(BvhError::UnsupportedChannels {
            line,
            message: "position channels are only supported on the root".into(),
        });
    }
    let distinct = |v: &[usize]| {
        let mut s = v.to_vec();
        s.sort_unstable();
        s.dedup();
        s.len() == v.len()
    };
    if !(rot.is_empty() || (rot.len() == 3 && distinct(&rot))) {
        return Err(BvhError::UnsupportedChannels {
            line,
            message: "rotations need either zero or three distinct axes".into(),
        });
    }
    if !distinct(&pos) {
        return Err(BvhError::UnsupportedChannels { line, message: "repeated position axis".into() });
    }
    Ok(())
}

fn axis_rotation(axis: usize, degrees: f64) -> Quat {
    let a = degrees.to_radians();
    match axis {
        0 => Quat::from_axis_angle(&Vec3::x_axis(), a),
        1 => Quat::from_axis_angle(&Vec3::y_axis(), a),
        _ => Quat::from_axis_angle(&Vec3::z_axis(), a),
    }
}

/// Decomposes a rotation as `Rz(z) * Rx(x) * Ry(y)`; returns degrees `(z, x, y)`.
pub(crate) fn to_zxy_degrees(q: &Quat) -> (f64, f64, f64) {
    let m: Matrix3<f64> = q.to_rotation_matrix().into_inner();
    let sx = m[(2, 1)].clamp(-1.0, 1.0);
    let x = sx.asin();
    let (z, y) = if x.cos() > 1e-9 {
        ((-m[(0, 1)]).atan2(m[(1, 1)]), (-m[(2, 0)]).atan2(m[(2, 2)]))
    } else {
        (m[(1, 0)].atan2(m[(0, 0)]), 0.0)
    };
    (z.to_degrees(), x.to_degrees(), y.to_degrees())
}

pub fn parse_bvh(text: &str) -> Result<MotionSequence, BvhError> {
    let mut tok = Tokens::new(text);
    tok.expect("HIERARCHY")?;
    tok.expect("ROOT")?;
    let mut joints = Vec::new();
    parse_joint(&mut tok, None, &mut joints)?;
    if let Some((line, t)) = tok.tokens.get(tok.pos).copied() {
        if !t.eq_ignore_ascii_case("MOTION") {
            return Err(BvhError::Syntax {
                line,
                message: format!("expected MOTION after the hierarchy, found {t:?}"),
            });
        }
    }
    let motion_line = tok.expect("MOTION")?;
    tok.expect("Frames:")?;
    let (line, t) = tok.next()?;
    let declared: usize = t
        .parse()
        .map_err(|_| BvhError::Syntax { line, message: format!("bad frame count {t:?}") })?;
    tok.expect("Frame")?;
    tok.expect("Time:")?;
    let frame_time_line = tok.line();
    let frame_time = tok.number()?;
    if !(frame_time > 0.0) {
        return Err(BvhError::Syntax {
            line: frame_time_line,
            message: format!("frame time must be positive, got {frame_time}"),
        });
    }
    let data_start_line = frame_time_line;

    let total_channels: usize = joints.iter().map(|j| j.channels.len()).sum();
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (i, l) in text.lines().enumerate().skip(data_start_line) {
        let line = i + 1;
        if l.trim().is_empty() {
            continue;
        }
        let values = l
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| BvhError::Syntax { line, message: format!("bad channel value {t:?}") })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != total_channels {
            return Err(BvhError::ChannelCount { line, expected: total_channels, found: values.len() });
        }
        rows.push((line, values));
    }
    if total_channels == 0 && rows.is_empty() {
        rows = vec![(motion_line, Vec::new()); declared];
    }
    if rows.len() != declared {
        return Err(BvhError::FrameCount { declared, found: rows.len() });
    }

    let skeleton = Skeleton::with_end_sites(
        joints.iter().map(|j| j.name.clone()).collect(),
        joints.iter().map(|j| j.parent).collect(),
        joints.iter().map(|j| j.offset).collect(),
        joints.iter().map(|j| j.end_site).collect(),
    )?;

    let frames = rows
        .iter()
        .map(|(_, values)| {
            let mut cursor = 0;
            let mut pose = Pose::rest(&skeleton);
            for (j, decl) in joints.iter().enumerate() {
                let mut rot = Quat::identity();
                for ch in &decl.channels {
                    let v = values[cursor];
                    cursor += 1;
                    match *ch {
                        Channel::Pos(a) => pose.root_translation[a] += v,
                        Channel::Rot(a) => rot *= axis_rotation(a, v),
                    }
                }
                pose.local_rotations[j] = rot;
            }
            pose
        })
        .collect();

    let mut fps = 1.0 / frame_time;
    if (fps - fps.round()).abs() < 1e-3 {
        fps = fps.round();
    }
    Ok(MotionSequence::new(skeleton, fps, frames, MotionClass::Basic)?)
}

fn dfs_order(skeleton: &Skeleton) -> Vec<usize> {
    fn visit(s: &Skeleton, j: usize, out: &mut Vec<usize>) {
        out.push(j);
        for c in s.children(j) {
            visit(s, c, out);
        }
    }
    let mut order = Vec::with_capacity(skeleton.len());
    visit(skeleton, 0, &mut order);
    order
}

pub fn write_bvh(seq: &MotionSequence) -> String {
    let s = &seq.skeleton;
    let mut out = String::from("HIERARCHY\n");

    fn emit(s: &Skeleton, j: usize, depth: usize, out: &mut String) {
        let pad = "  ".repeat(depth);
        let o = s.rest_offset(j);
        if depth == 0 {
            let _ = writeln!(out, "ROOT {}", s.names()[j]);
        } else {
            let _ = writeln!(out, "{pad}JOINT {}", s.names()[j]);
        }
        let _ = writeln!(out, "{pad}{{");
        let _ = writeln!(out, "{pad}  OFFSET {:.6} {:.6} {:.6}", o.x, o.y, o.z);
        if depth == 0 {
            let _ = writeln!(
                out,
                "{pad}  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation"
            );
        } else {
            let _ = writeln!(out, "{pad}  CHANNELS 3 Zrotation Xrotation Yrotation");
        }
        let children = s.children(j);
        if children.is_empty() {
            let e = s.end_site(j).unwrap_or_else(Vec3::zeros);
            let _ = writeln!(out, "{pad}  End Site");
            let _ = writeln!(out, "{pad}  {{");
            let _ = writeln!(out, "{pad}    OFFSET {:.6} {:.6} {:.6}", e.x, e.y, e.z);
            let _ = writeln!(out, "{pad}  }}");
        }
        for c in children {
            emit(s, c, depth + 1, out);
        }
        let _ = writeln!(out, "{pad}}}");
    }
    emit(s, 0, 0, &mut out);

    let _ = writeln!(out, "MOTION");
    let _ = writeln!(out, "Frames: {}", seq.frames.len());
    let _ = writeln!(out, "Frame Time: {:.7}", 1.0 / seq.fps);
    let order = dfs_order(s);
    let root_offset = s.rest_offset(0);
    for frame in &seq.frames {
        let mut values: Vec<f64> = Vec::with_capacity(3 + 3 * s.len());
        let t = frame.root_translation - root_offset;
        values.extend([t.x, t.y, t.z]);
        for &j in &order {
            let (z, x, y) = to_zxy_degrees(&frame.local_rotations[j]);
            values.extend([z, x, y]);
        }
        let line: Vec<String> = values.iter().map(|v| format!("{:.6}", clean_zero(*v))).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

fn clean_zero(v: f64) -> f64 {
    if v.abs() < 5e-7 {
        0.0
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const MINIMAL: &str = "HIERARCHY
ROOT base
{
  OFFSET 0 0 0
  JOINT tip
  {
    OFFSET 0 1 0
    End Site
    {
      OFFSET 0 0.5 0
    }
  }
}
MOTION
Frames: 1
Frame Time: 0.04
";

    #[test]
    fn minimal_zero_channel_file_is_rest_pose() {
        let seq = parse_bvh(MINIMAL).unwrap();
        assert_eq!(seq.skeleton.len(), 2);
        assert_eq!(seq.len(), 1);
        assert_eq!(seq.fps, 25.0);
        assert_eq!(seq.frames[0], Pose::rest(&seq.skeleton));
        assert_eq!(seq.skeleton.end_site(1), Some(Vec3::new(0.0, 0.5, 0.0)));
    }

    #[test]
    fn frame_count_mismatch_is_rejected() {
        let text = "HIERARCHY
ROOT a
{
  OFFSET 0 0 0
  CHANNELS 3 Zrotation Xrotation Yrotation
  End Site
  {
    OFFSET 0 1 0
  }
}
MOTION
Frames: 2
Frame Time: 0.0333333
0 0 0
";
        assert_eq!(parse_bvh(text), Err(BvhError::FrameCount { declared: 2, found: 1 }));
    }

    #[test]
    fn channel_count_mismatch_reports_line() {
        let text = "HIERARCHY
ROOT a
{
  OFFSET 0 0 0
  CHANNELS 3 Zrotation Xrotation Yrotation
  End Site
  {
    OFFSET 0 1 0
  }
}
MOTION
Frames: 1
Frame Time: 0.0333333
0 0
";
        assert_eq!(
            parse_bvh(text),
            Err(BvhError::ChannelCount { line: 14, expected: 3, found: 2 })
        );
    }

    #[test]
    fn malformed_header_reports_line() {
        let text = "HIERARCHY\nROOT a\n{\n  OFFSET 0 zero 0\n}\n";
        match parse_bvh(text) {
            Err(BvhError::Syntax { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn position_channels_on_child_are_unsupported() {
        let text = "HIERARCHY
ROOT a
{
  OFFSET 0 0 0
  JOINT b
  {
    OFFSET 0 1 0
    CHANNELS 3 Xposition Yposition Zposition
  }
}
MOTION
Frames: 0
Frame Time: 0.0333333
";
        assert!(matches!(parse_bvh(text), Err(BvhError::UnsupportedChannels { line: 8, .. })));
    }

    #[test]
    fn frame_time_line_for_30_fps() {
        let s = Skeleton::smpl();
        let seq = MotionSequence::new(s.clone(), 30.0, vec![Pose::rest(&s)], MotionClass::Basic)
            .unwrap();
        let text = write_bvh(&seq);
        assert!(text.contains("Frame Time: 0.0333333\n"));
    }

    #[test]
    fn rest_pose_writes_zero_rotations_and_echoes_offsets() {
        let s = Skeleton::smpl();
        let seq = MotionSequence::new(s.clone(), 30.0, vec![Pose::rest(&s)], MotionClass::Basic)
            .unwrap();
        let text = write_bvh(&seq);
        let data = text.lines().last().unwrap();
        assert!(data.split_whitespace().all(|v| v.parse::<f64>().unwrap() == 0.0));
        let back = parse_bvh(&text).unwrap();
        let back = back.reorder_joints(&crate::kinematics::smpl::JOINT_NAMES).unwrap();
        for (a, b) in back.skeleton.rest_offsets().iter().zip(s.rest_offsets()) {
            assert_relative_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn xyz_order_is_read_as_listed() {
        let text = "HIERARCHY
ROOT a
{
  OFFSET 0 0 0
  CHANNELS 3 Xrotation Yrotation Zrotation
  End Site
  {
    OFFSET 0 1 0
  }
}
MOTION
Frames: 1
Frame Time: 0.01
30 40 50
";
        let seq = parse_bvh(text).unwrap();
        let expected = axis_rotation(0, 30.0) * axis_rotation(1, 40.0) * axis_rotation(2, 50.0);
        assert!(seq.frames[0].local_rotations[0].angle_to(&expected) < 1e-12);
    }

    #[test]
    fn zxy_decomposition_recomposes() {
        for &(z, x, y) in &[(10.0, 20.0, 30.0), (-170.0, 80.0, 5.0), (0.0, -89.0, 120.0)] {
            let q = axis_rotation(2, z) * axis_rotation(0, x) * axis_rotation(1, y);
            let (z2, x2, y2) = to_zxy_degrees(&q);
            let q2 = axis_rotation(2, z2) * axis_rotation(0, x2) * axis_rotation(1, y2);
            assert!(q.angle_to(&q2) < 1e-10);
            assert_relative_eq!(x, x2, epsilon = 1e-9);
        }
    }
}
