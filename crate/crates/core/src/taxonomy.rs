//! The fixed two-level product taxonomy: five top-level categories, 25
//! subcategories. Classification replies are matched against this table.

/// (top-level category, subcategories) in canonical order.
pub const TAXONOMY: &[(&str, &[&str])] = &[
    (
        "Digital & Appliances",
        &[
            "Mobile Phones",
            "Computers",
            "Cameras",
            "Major Appliances",
            "Small Appliances",
            "Smart Devices",
            "Digital Accessories",
        ],
    ),
    (
        "Fashion & Bags",
        &[
            "Clothing",
            "Footwear",
            "Bags & Luggage",
            "Hats",
            "Accessories",
        ],
    ),
    (
        "Home & Lifestyle",
        &[
            "Furniture & Home Décor",
            "Kitchen & Daily Essentials",
            "Maternity & Baby Products",
            "Pet Supplies",
            "Sports & Outdoors",
            "Automotive Supplies",
            "Collectibles & Entertainment",
        ],
    ),
    (
        "Virtual & Services",
        &[
            "Digital Resources",
            "Gaming Accounts & Services",
            "Agency Services",
            "Local Services",
            "Tutorials & Courses",
        ],
    ),
    ("Other", &["Uncategorized Secondhand Items"]),
];

/// Fallback bucket for unclassifiable products.
pub const FALLBACK_TOP: &str = "Other";
pub const FALLBACK_SUB: &str = "Uncategorized Secondhand Items";

fn norm(s: &str) -> String {
    s.trim()
        .trim_matches(|c: char| c == '"' || c == '\'' || c == '.' || c == '!' || c == '`')
        .trim()
        .to_lowercase()
}

/// Subcategories of a top-level category, if it exists.
pub fn subcategories_of(top_level: &str) -> Option<&'static [&'static str]> {
    let wanted = norm(top_level);
    TAXONOMY
        .iter()
        .find(|(top, _)| norm(top) == wanted)
        .map(|(_, subs)| *subs)
}

/// Top-level category owning the given subcategory name (case-insensitive,
/// surrounding punctuation stripped).
pub fn top_level_of(sub: &str) -> Option<&'static str> {
    let wanted = norm(sub);
    for (top, subs) in TAXONOMY {
        if subs.iter().any(|s| norm(s) == wanted) {
            return Some(top);
        }
    }
    None
}

/// Canonical spelling of a subcategory name, if recognized.
pub fn canonical_sub(sub: &str) -> Option<&'static str> {
    let wanted = norm(sub);
    for (_, subs) in TAXONOMY {
        if let Some(s) = subs.iter().find(|s| norm(s) == wanted) {
            return Some(s);
        }
    }
    None
}

/// True when the reply names a top-level category rather than a subcategory.
pub fn is_top_level(name: &str) -> bool {
    let wanted = norm(name);
    TAXONOMY.iter().any(|(top, _)| norm(top) == wanted)
}

pub fn top_levels() -> impl Iterator<Item = &'static str> {
    TAXONOMY.iter().map(|(top, _)| *top)
}

pub fn all_subcategories() -> impl Iterator<Item = &'static str> {
    TAXONOMY.iter().flat_map(|(_, subs)| subs.iter().copied())
}
