//! Label vocabulary. Each series is drawn in the color its label names.

/// `(name, rgb)` for every label a figure may carry.
pub const COLORS: [(&str, [u8; 3]); 48] = [
    ("Yellow", [255, 255, 0]),
    ("Magenta", [255, 0, 255]),
    ("Sky Blue", [135, 206, 235]),
    ("Violet", [238, 130, 238]),
    ("Lawn Green", [124, 252, 0]),
    ("Dark Magenta", [139, 0, 139]),
    ("Red", [255, 0, 0]),
    ("Green", [0, 128, 0]),
    ("Blue", [0, 0, 255]),
    ("Orange", [255, 165, 0]),
    ("Purple", [128, 0, 128]),
    ("Brown", [165, 42, 42]),
    ("Cyan", [0, 255, 255]),
    ("Navy Blue", [0, 0, 128]),
    ("Olive", [128, 128, 0]),
    ("Teal", [0, 128, 128]),
    ("Maroon", [128, 0, 0]),
    ("Gold", [255, 215, 0]),
    ("Coral", [255, 127, 80]),
    ("Salmon", [250, 128, 114]),
    ("Tomato", [255, 99, 71]),
    ("Crimson", [220, 20, 60]),
    ("Orchid", [218, 112, 214]),
    ("Plum", [221, 160, 221]),
    ("Indigo", [75, 0, 130]),
    ("Turquoise", [64, 224, 208]),
    ("Tan", [210, 180, 140]),
    ("Khaki", [240, 230, 140]),
    ("Lime Green", [50, 205, 50]),
    ("Forest Green", [34, 139, 34]),
    ("Sea Green", [46, 139, 87]),
    ("Royal Blue", [65, 105, 225]),
    ("Steel Blue", [70, 130, 180]),
    ("Dodger Blue", [30, 144, 255]),
    ("Hot Pink", [255, 105, 180]),
    ("Deep Pink", [255, 20, 147]),
    ("Chocolate", [210, 105, 30]),
    ("Sienna", [160, 82, 45]),
    ("Peru", [205, 133, 63]),
    ("Dark Orange", [255, 140, 0]),
    ("Dark Green", [0, 100, 0]),
    ("Dark Blue", [0, 0, 139]),
    ("Dark Red", [139, 0, 0]),
    ("Dark Cyan", [0, 139, 139]),
    ("Medium Purple", [147, 112, 219]),
    ("Slate Blue", [106, 90, 205]),
    ("Cadet Blue", [95, 158, 160]),
    ("Olive Drab", [107, 142, 35]),
];

pub const AXIS_RGB: [u8; 3] = [0, 0, 0];
pub const BACKGROUND_RGB: [u8; 3] = [255, 255, 255];

pub fn color_of(label: &str) -> Option<[u8; 3]> {
    COLORS.iter().find(|(n, _)| *n == label).map(|&(_, c)| c)
}

pub fn is_color_name(label: &str) -> bool {
    color_of(label).is_some()
}
