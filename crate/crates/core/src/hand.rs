//! The 21-joint hand layout shared by the generator, the lifter graph and the
//! metrics: wrist first, then thumb, index, middle, ring and pinky, each
//! listed MCP, PIP, DIP, TIP.

pub const JOINTS: usize = 21;
pub const FINGERS: usize = 5;

pub const FINGER_NAMES: [&str; FINGERS] = ["Thumb", "Index", "Middle", "Ring", "Pinkie"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum JointClass {
    Wrist,
    Mcp,
    Pip,
    Dip,
    Tip,
}

impl JointClass {
    pub const ALL: [JointClass; 5] = [JointClass::Wrist, JointClass::Mcp, JointClass::Pip, JointClass::Dip, JointClass::Tip];

    pub fn name(self) -> &'static str {
        match self {
            JointClass::Wrist => "Wrist",
            JointClass::Mcp => "MCP",
            JointClass::Pip => "PIP",
            JointClass::Dip => "DIP",
            JointClass::Tip => "TIP",
        }
    }
}

/// Joint index of `finger` (0 = thumb) at `level` (0 = MCP .. 3 = TIP).
pub const fn joint(finger: usize, level: usize) -> usize {
    1 + finger * 4 + level
}

pub fn joint_class(j: usize) -> JointClass {
    if j == 0 {
        return JointClass::Wrist;
    }
    match (j - 1) % 4 {
        0 => JointClass::Mcp,
        1 => JointClass::Pip,
        2 => JointClass::Dip,
        _ => JointClass::Tip,
    }
}

/// Finger owning joint `j`; `None` for the wrist.
pub fn finger_of(j: usize) -> Option<usize> {
    (j > 0).then(|| (j - 1) / 4)
}

pub fn parent(j: usize) -> Option<usize> {
    match j {
        0 => None,
        j if (j - 1) % 4 == 0 => Some(0),
        j => Some(j - 1),
    }
}

/// The 20 parent→child bones of the kinematic tree.
pub fn bones() -> Vec<(usize, usize)> {
    (1..JOINTS).map(|j| (parent(j).unwrap(), j)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_has_twenty_bones_and_four_joints_per_finger() {
        let b = bones();
        assert_eq!(b.len(), 20);
        for f in 0..FINGERS {
            let chain: Vec<_> = (0..4).map(|l| joint(f, l)).collect();
            assert_eq!(parent(chain[0]), Some(0));
            for w in chain.windows(2) {
                assert_eq!(parent(w[1]), Some(w[0]));
            }
            assert!(chain.iter().all(|&j| finger_of(j) == Some(f)));
        }
        let tips: Vec<_> = (0..JOINTS).filter(|&j| joint_class(j) == JointClass::Tip).collect();
        assert_eq!(tips, vec![4, 8, 12, 16, 20]);
    }
}
