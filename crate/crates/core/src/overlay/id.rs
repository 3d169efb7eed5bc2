use std::fmt;

use serde::{Deserialize, Serialize};

use super::OverlayError;

/// 128-bit node identifier: layer, level, AS index and node index, one
/// 32-bit quarter each, most significant first. Numeric order therefore
/// equals tuple order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct NodeId(u128);

impl NodeId {
    pub fn new(layer: u32, level: u32, as_index: u32, node_index: u32) -> Self {
        NodeId(
            (u128::from(layer) << 96)
                | (u128::from(level) << 64)
                | (u128::from(as_index) << 32)
                | u128::from(node_index),
        )
    }

    /// Checked construction from wider integers.
    pub fn encode(layer: u64, level: u64, as_index: u64, node_index: u64) -> Result<Self, OverlayError> {
        let field = |name: &'static str, v: u64| {
            u32::try_from(v).map_err(|_| OverlayError::IdFieldOverflow { field: name, value: v })
        };
        Ok(Self::new(
            field("layer", layer)?,
            field("level", level)?,
            field("as_index", as_index)?,
            field("node_index", node_index)?,
        ))
    }

    pub fn decode(self) -> (u32, u32, u32, u32) {
        (
            (self.0 >> 96) as u32,
            (self.0 >> 64) as u32,
            (self.0 >> 32) as u32,
            self.0 as u32,
        )
    }

    pub fn packed(self) -> u128 {
        self.0
    }

    pub fn from_packed(v: u128) -> Self {
        NodeId(v)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (i, j, k, t) = self.decode();
        write!(f, "{i}.{j}.{k}.{t}")
    }
}

impl From<NodeId> for String {
    fn from(id: NodeId) -> String {
        format!("{:032x}", id.0)
    }
}

impl TryFrom<String> for NodeId {
    type Error = std::num::ParseIntError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        u128::from_str_radix(&s, 16).map(NodeId)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_and_round_trip() {
        assert_eq!(NodeId::new(0, 0, 0, 0).packed(), 0);
        assert_eq!(NodeId::new(1, 2, 3, 4).decode(), (1, 2, 3, 4));
        assert_eq!(NodeId::from_packed(u128::MAX).decode(), (u32::MAX, u32::MAX, u32::MAX, u32::MAX));
    }

    #[test]
    fn ordering_follows_fields() {
        assert!(NodeId::new(0, 0, 0, 1) < NodeId::new(0, 0, 1, 0));
        assert!(NodeId::new(0, 9, 9, 9) < NodeId::new(1, 0, 0, 0));
    }

    #[test]
    fn overflow_is_reported() {
        assert!(matches!(
            NodeId::encode(0, 1 << 32, 0, 0),
            Err(OverlayError::IdFieldOverflow { field: "level", .. })
        ));
        assert!(NodeId::encode(5, 6, 7, 8).is_ok());
    }

    #[test]
    fn json_form_is_hex() {
        let id = NodeId::new(1, 0, 0, 2);
        let s = serde_json::to_string(&id).unwrap();
        assert_eq!(s, "\"00000001000000000000000000000002\"");
        assert_eq!(serde_json::from_str::<NodeId>(&s).unwrap(), id);
    }

    proptest! {
        #[test]
        fn order_matches_tuple_order(a in any::<(u32, u32, u32, u32)>(), b in any::<(u32, u32, u32, u32)>()) {
            let ia = NodeId::new(a.0, a.1, a.2, a.3);
            let ib = NodeId::new(b.0, b.1, b.2, b.3);
            prop_assert_eq!(ia.decode(), a);
            prop_assert_eq!(ia.cmp(&ib), a.cmp(&b));
        }
    }
}
