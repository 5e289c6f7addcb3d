use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! dense_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }

        impl From<usize> for $name {
            fn from(i: usize) -> Self {
                $name(u32::try_from(i).expect("id fits in u32"))
            }
        }
    };
}

dense_id!(
    /// Dense show index in `[0, num_shows)`.
    ShowId
);
dense_id!(UserId);
dense_id!(TopicId);
dense_id!(EntityId);
dense_id!(
    /// Knowledge-graph node. Shows occupy `[0, num_shows)`, entities follow.
    NodeId
);
dense_id!(RelationId);
