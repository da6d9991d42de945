//! Published reference tables: per-cluster mean vaccination rates, the
//! district lists of the two-cluster solutions, and a district register
//! with rurality categories.
//!
//! Mean rates are kept as the printed text so they compare byte for byte;
//! [`Table2Row::rates`] parses them.

use crate::dataset::{DataError, DistrictId, DistrictRow, GdscProfile, VaccinationProfile, YearDataset, YearKey};
use crate::hcluster::{label_by_coverage, ClusterAssignment, ClusterError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Table2Row {
    /// First calendar year of the study year.
    pub year: i32,
    pub k: usize,
    pub label: &'static str,
    /// Rates in vaccine-column order, as printed.
    pub text: [&'static str; 14],
}

impl Table2Row {
    pub fn rates(&self) -> [f64; 14] {
        self.text.map(|t| t.parse().expect("fixture rates are decimals"))
    }
}

const fn row(year: i32, k: usize, label: &'static str, text: [&'static str; 14]) -> Table2Row {
    Table2Row { year, k, label, text }
}

/// Every row of the published mean-rate table, in printed order. The
/// 2023-24 six-cluster block repeats the 2021-22 one as printed.
pub const TABLE2: [Table2Row; 33] = [
    row(
        2021,
        2,
        "L",
        [
            "69.9", "89.2", "85.2", "86.3", "78.8", "84.6", "84.8", "76.8", "79.0", "87.1", "72.6", "87.6", "79.4",
            "82.9",
        ],
    ),
    row(
        2021,
        2,
        "H",
        [
            "87.3", "95.5", "93.4", "94.5", "91.3", "93.3", "93.1", "90.4", "91.5", "94.8", "88.51", "95.2", "91.7",
            "91.5",
        ],
    ),
    row(
        2021,
        3,
        "L",
        [
            "69.9", "89.3", "85.2", "86.3", "78.8", "84.6", "84.8", "76.8", "79.0", "87.1", "72.6", "87.7", "79.4",
            "82.9",
        ],
    ),
    row(
        2021,
        3,
        "M",
        [
            "81.8", "93.6", "90.8", "92.0", "87.1", "90.3", "90.3", "85.7", "87.3", "92.6", "83.2", "93.2", "87.8",
            "88.5",
        ],
    ),
    row(
        2021,
        3,
        "H",
        [
            "89.5", "96.3", "94.4", "95.5", "93.0", "94.5", "94.3", "92.4", "93.2", "95.7", "90.7", "96.0", "93.3",
            "92.8",
        ],
    ),
    row(
        2021,
        6,
        "Ls",
        [
            "56.1", "82.4", "64.0", "70.6", "61.6", "78.2", "64.5", "60.2", "65.4", "83.5", "58.9", "70.9", "64.3",
            "61.7",
        ],
    ),
    row(
        2021,
        6,
        "VL",
        [
            "66.6", "88.7", "84.4", "85.0", "76.3", "83.1", "83.8", "74.3", "76.6", "85.8", "68.5", "87.2", "77.0",
            "82.4",
        ],
    ),
    row(
        2021,
        6,
        "L",
        [
            "73.4", "90.2", "87.3", "88.5", "81.9", "86.2", "86.9", "79.8", "81.8", "88.3", "76.9", "89.1", "82.3",
            "84.8",
        ],
    ),
    row(
        2021,
        6,
        "M",
        [
            "81.8", "93.6", "90.8", "92.0", "87.1", "90.3", "90.3", "85.7", "87.3", "92.6", "83.2", "93.2", "87.8",
            "88.5",
        ],
    ),
    row(
        2021,
        6,
        "H",
        [
            "88.4", "95.9", "93.6", "94.9", "91.9", "93.8", "93.4", "91.2", "92.1", "95.2", "89.5", "95.4", "92.2",
            "91.8",
        ],
    ),
    row(
        2021,
        6,
        "Hst",
        [
            "91.5", "97.1", "95.9", "96.6", "94.9", "95.6", "95.7", "94.4", "95.0", "96.6", "92.6", "97.0", "95.2",
            "94.5",
        ],
    ),
    row(
        2022,
        2,
        "L",
        [
            "68.8", "87.4", "85.9", "86.2", "79.0", "82.4", "84.5", "77.4", "80.2", "85.4", "70.2", "87.9", "79.3",
            "82.1",
        ],
    ),
    row(
        2022,
        2,
        "H",
        [
            "85.6", "94.1", "92.9", "93.7", "90.4", "91.7", "92.2", "89.3", "90.9", "93.7", "86.8", "94.7", "90.1",
            "89.9",
        ],
    ),
    row(
        2022,
        3,
        "L",
        [
            "68.8", "87.4", "85.9", "86.2", "79.0", "82.4", "84.5", "77.4", "80.2", "85.4", "70.2", "87.9", "79.3",
            "82.1",
        ],
    ),
    row(
        2022,
        3,
        "M",
        [
            "81.3", "92.0", "90.9", "91.6", "87.3", "88.9", "89.8", "85.6", "88.0", "91.5", "82.7", "93.0", "86.5",
            "87.2",
        ],
    ),
    row(
        2022,
        3,
        "H",
        [
            "88.8", "95.6", "94.4", "95.3", "92.7", "93.7", "93.9", "92.1", "93.0", "95.2", "89.8", "95.9", "92.8",
            "91.8",
        ],
    ),
    row(
        2022,
        6,
        "Ls",
        [
            "62.2", "81.1", "67.8", "77.7", "66.7", "74.6", "68.5", "64.0", "69.5", "80.2", "62.7", "75.0", "68.3",
            "64.9",
        ],
    ),
    row(
        2022,
        6,
        "VL",
        [
            "66.4", "84.8", "84.1", "86.2", "77.8", "79.0", "83.3", "75.8", "78.2", "81.9", "66.2", "87.0", "77.3",
            "81.6",
        ],
    ),
    row(
        2022,
        6,
        "L",
        [
            "73.2", "87.6", "87.3", "88.2", "81.8", "83.1", "86.3", "80.1", "82.2", "86.4", "74.3", "88.9", "80.9",
            "83.6",
        ],
    ),
    row(
        2022,
        6,
        "M",
        [
            "78.9", "91.2", "88.9", "90.6", "85.5", "87.5", "88.1", "83.7", "86.1", "90.2", "80.5", "91.6", "84.7",
            "85.6",
        ],
    ),
    row(
        2022,
        6,
        "H",
        [
            "83.7", "93.0", "91.9", "92.9", "89.8", "89.5", "91.3", "88.2", "90.0", "92.5", "85.2", "94.0", "89.2",
            "89.1",
        ],
    ),
    row(
        2022,
        6,
        "Hst",
        [
            "88.7", "95.5", "94.6", "95.4", "93.0", "93.5", "94.2", "92.2", "93.2", "95.2", "89.7", "96.0", "92.8",
            "92.3",
        ],
    ),
    row(
        2023,
        2,
        "L",
        [
            "70.1", "86.2", "84.8", "86.8", "79.3", "81.1", "84.0", "77.5", "79.9", "84.4", "70.8", "87.2", "78.8",
            "81.5",
        ],
    ),
    row(
        2023,
        2,
        "H",
        [
            "85.2", "93.9", "92.6", "93.7", "90.5", "91.1", "92.1", "89.3", "90.8", "93.4", "86.5", "94.5", "90.1",
            "89.9",
        ],
    ),
    row(
        2023,
        3,
        "L",
        [
            "70.1", "86.2", "84.8", "86.8", "79.3", "81.1", "84.0", "77.5", "79.9", "84.4", "70.8", "87.3", "78.8",
            "81.5",
        ],
    ),
    row(
        2023,
        3,
        "M",
        [
            "81.4", "92.1", "90.5", "91.8", "87.7", "88.5", "89.7", "86.0", "88.1", "91.4", "82.9", "92.8", "87.0",
            "87.4",
        ],
    ),
    row(
        2023,
        3,
        "H",
        [
            "88.7", "95.5", "94.6", "95.4", "93.0", "93.5", "94.2", "92.2", "93.2", "95.2", "89.7", "96.0", "92.8",
            "92.3",
        ],
    ),
    row(
        2023,
        6,
        "Ls",
        [
            "56.1", "82.4", "64.0", "70.6", "61.6", "78.2", "64.5", "60.2", "65.4", "83.5", "58.9", "70.9", "64.3",
            "61.7",
        ],
    ),
    row(
        2023,
        6,
        "VL",
        [
            "66.6", "88.7", "84.4", "85.0", "76.3", "83.1", "83.8", "74.3", "76.6", "85.8", "68.5", "87.2", "77.0",
            "82.4",
        ],
    ),
    row(
        2023,
        6,
        "L",
        [
            "73.4", "90.2", "87.3", "88.5", "81.9", "86.2", "86.9", "79.8", "81.8", "88.3", "76.9", "89.1", "82.3",
            "84.8",
        ],
    ),
    row(
        2023,
        6,
        "M",
        [
            "81.8", "93.6", "90.8", "92.0", "87.1", "90.3", "90.3", "85.7", "87.3", "92.6", "83.2", "93.2", "87.8",
            "88.5",
        ],
    ),
    row(
        2023,
        6,
        "H",
        [
            "88.4", "95.9", "93.6", "94.9", "91.9", "93.8", "93.4", "91.2", "92.1", "95.2", "89.5", "95.4", "92.2",
            "91.8",
        ],
    ),
    row(
        2023,
        6,
        "Hst",
        [
            "91.5", "97.1", "95.9", "96.6", "94.9", "95.6", "95.7", "94.4", "95.0", "96.6", "92.6", "97.0", "95.2",
            "94.5",
        ],
    ),
];

/// Rows for one year and cluster count, lowest coverage first.
pub fn table2(year: YearKey, k: usize) -> Vec<&'static Table2Row> {
    TABLE2.iter().filter(|r| r.year == year.0 && r.k == k).collect()
}

/// Canonical district names with their 2011 rural-urban category
/// (1 = Urban with Major Conurbation ... 6 = Mainly Rural).
pub const DISTRICTS: [(&str, u8); 150] = [
    ("Barking and Dagenham", 1),
    ("Barnet", 1),
    ("Barnsley", 1),
    ("Bath and North East Somerset", 4),
    ("Bedford", 4),
    ("Bexley", 1),
    ("Birmingham", 1),
    ("Blackburn with Darwen", 3),
    ("Blackpool", 3),
    ("Bolton", 1),
    ("Bournemouth, Christchurch and Poole", 3),
    ("Bracknell Forest", 3),
    ("Bradford", 1),
    ("Brent", 1),
    ("Brighton and Hove", 3),
    ("Bristol", 3),
    ("Bromley", 1),
    ("Buckinghamshire", 4),
    ("Bury", 1),
    ("Calderdale", 1),
    ("Cambridgeshire", 5),
    ("Camden", 1),
    ("Central Bedfordshire", 5),
    ("Cheshire East", 4),
    ("Cheshire West and Chester", 4),
    ("Cornwall", 6),
    ("County Durham", 5),
    ("Coventry", 1),
    ("Croydon", 1),
    ("Cumbria", 6),
    ("Darlington", 3),
    ("Derby", 3),
    ("Derbyshire", 5),
    ("Devon", 6),
    ("Doncaster", 3),
    ("Dorset", 6),
    ("Dudley", 1),
    ("Ealing", 1),
    ("East Riding of Yorkshire", 5),
    ("East Sussex", 5),
    ("Enfield", 1),
    ("Essex", 4),
    ("Gateshead", 1),
    ("Gloucestershire", 5),
    ("Greenwich", 1),
    ("Hackney", 1),
    ("Halton", 3),
    ("Hammersmith and Fulham", 1),
    ("Hampshire", 4),
    ("Haringey", 1),
    ("Harrow", 1),
    ("Hartlepool", 3),
    ("Havering", 1),
    ("Herefordshire", 6),
    ("Hertfordshire", 3),
    ("Hillingdon", 1),
    ("Hounslow", 1),
    ("Isle of Wight", 5),
    ("Islington", 1),
    ("Kensington and Chelsea", 1),
    ("Kent", 4),
    ("Kingston upon Hull", 3),
    ("Kingston upon Thames", 1),
    ("Kirklees", 1),
    ("Knowsley", 1),
    ("Lambeth", 1),
    ("Lancashire", 4),
    ("Leeds", 1),
    ("Leicester", 3),
    ("Leicestershire", 5),
    ("Lewisham", 1),
    ("Lincolnshire", 6),
    ("Liverpool", 1),
    ("Luton", 3),
    ("Manchester", 1),
    ("Medway", 3),
    ("Merton", 1),
    ("Middlesbrough", 3),
    ("Milton Keynes", 3),
    ("Newcastle upon Tyne", 1),
    ("Newham", 1),
    ("Norfolk", 6),
    ("North East Lincolnshire", 3),
    ("North Lincolnshire", 4),
    ("North Northamptonshire", 4),
    ("North Somerset", 4),
    ("North Tyneside", 1),
    ("North Yorkshire", 6),
    ("Northumberland", 6),
    ("Nottingham", 2),
    ("Nottinghamshire", 4),
    ("Oldham", 1),
    ("Oxfordshire", 5),
    ("Peterborough", 3),
    ("Plymouth", 3),
    ("Portsmouth", 3),
    ("Reading", 3),
    ("Redbridge", 1),
    ("Redcar and Cleveland", 3),
    ("Richmond upon Thames", 1),
    ("Rochdale", 1),
    ("Rotherham", 1),
    ("Rutland", 6),
    ("Salford", 1),
    ("Sandwell", 1),
    ("Sefton", 1),
    ("Sheffield", 1),
    ("Shropshire", 6),
    ("Slough", 3),
    ("Solihull", 1),
    ("Somerset", 6),
    ("South Gloucestershire", 3),
    ("South Tyneside", 1),
    ("Southampton", 3),
    ("Southend-on-Sea", 3),
    ("Southwark", 1),
    ("St Helens", 1),
    ("Staffordshire", 5),
    ("Stockport", 1),
    ("Stockton-on-Tees", 3),
    ("Stoke-on-Trent", 3),
    ("Suffolk", 6),
    ("Sunderland", 1),
    ("Surrey", 3),
    ("Sutton", 1),
    ("Swindon", 3),
    ("Tameside", 1),
    ("Telford and Wrekin", 3),
    ("Thurrock", 3),
    ("Torbay", 3),
    ("Tower Hamlets", 1),
    ("Trafford", 1),
    ("Wakefield", 1),
    ("Walsall", 1),
    ("Waltham Forest", 1),
    ("Wandsworth", 1),
    ("Warrington", 3),
    ("Warwickshire", 5),
    ("West Berkshire", 5),
    ("West Northamptonshire", 4),
    ("West Sussex", 4),
    ("Westminster", 1),
    ("Wigan", 1),
    ("Wiltshire", 5),
    ("Windsor and Maidenhead", 3),
    ("Wirral", 1),
    ("Wokingham", 3),
    ("Wolverhampton", 1),
    ("Worcestershire", 5),
    ("York", 3),
];

/// Spelling variants found in published lists.
pub const ALIASES: [(&str, &str); 4] = [
    ("Bristol, City of", "Bristol"),
    ("Herefordshire, County of", "Herefordshire"),
    ("Kingston upon Hull, City of", "Kingston upon Hull"),
    ("St. Helens", "St Helens"),
];

/// Canonical name for a district name or one of its variants.
pub fn canonical_name(name: &str) -> Option<&'static str> {
    let name = name.trim();
    let target = ALIASES.iter().find(|(v, _)| *v == name).map_or(name, |(_, c)| c);
    DISTRICTS.iter().find(|(n, _)| *n == target).map(|(n, _)| *n)
}

/// Lowercase slug of a canonical name, e.g. `kingston-upon-hull`.
pub fn district_id(name: &str) -> DistrictId {
    let mut slug = String::new();
    for ch in name.chars() {
        if ch.is_ascii_alphanumeric() {
            slug.push(ch.to_ascii_lowercase());
        } else if !slug.ends_with('-') {
            slug.push('-');
        }
    }
    DistrictId::new(slug.trim_matches('-'))
}

pub fn rurality_of(name: &str) -> Option<u8> {
    let c = canonical_name(name)?;
    DISTRICTS.iter().find(|(n, _)| *n == c).map(|(_, r)| *r)
}

/// District lists of a published two-cluster solution, names as printed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoClusterTable {
    pub year: i32,
    pub high: &'static [&'static str],
    pub low: &'static [&'static str],
}

pub const TWO_CLUSTER_2021: TwoClusterTable = TwoClusterTable {
    year: 2021,
    high: &[
        "Hartlepool",
        "Thurrock",
        "Bury",
        "Kirklees",
        "Nottinghamshire",
        "Middlesbrough",
        "Medway",
        "Oldham",
        "Leeds",
        "Oxfordshire",
        "Redcar and Cleveland",
        "Bracknell Forest",
        "Rochdale",
        "Wakefield",
        "Somerset",
        "Stockton-on-Tees",
        "West Berkshire",
        "Salford",
        "Gateshead",
        "Staffordshire",
        "Darlington",
        "Reading",
        "Stockport",
        "Bexley",
        "Suffolk",
        "Halton",
        "Slough",
        "Tameside",
        "Bromley",
        "Surrey",
        "Warrington",
        "Windsor and Maidenhead",
        "Trafford",
        "Ealing",
        "Warwickshire",
        "Blackburn with Darwen",
        "Wokingham",
        "Wigan",
        "Harrow",
        "West Sussex",
        "Blackpool",
        "Milton Keynes",
        "Knowsley",
        "Havering",
        "Worcestershire",
        "Kingston upon Hull",
        "Brighton and Hove",
        "St Helens",
        "Hillingdon",
        "Rutland",
        "East Riding of Yorkshire",
        "Portsmouth",
        "Sefton",
        "Hounslow",
        "North East Lincolnshire",
        "Southampton",
        "Wirral",
        "Kingston upon Thames",
        "North Lincolnshire",
        "Isle of Wight",
        "Barnsley",
        "Sutton",
        "York",
        "County Durham",
        "Doncaster",
        "Cambridgeshire",
        "Derby",
        "Cheshire East",
        "Rotherham",
        "Cumbria",
        "Leicester",
        "Cheshire West and Chester",
        "Sheffield",
        "Derbyshire",
        "Herefordshire",
        "Shropshire",
        "Newcastle upon Tyne",
        "Devon",
        "Telford and Wrekin",
        "Cornwall",
        "North Tyneside",
        "East Sussex",
        "Stoke-on-Trent",
        "Wiltshire",
        "South Tyneside",
        "Essex",
        "Bath and North East Somerset",
        "Bedford",
        "Sunderland",
        "Gloucestershire",
        "Bristol",
        "Central Bedfordshire",
        "Coventry",
        "Hampshire",
        "North Somerset",
        "Northumberland",
        "Dudley",
        "Hertfordshire",
        "South Gloucestershire",
        "Bournemouth, Christchurch and Poole",
        "Sandwell",
        "Kent",
        "Plymouth",
        "Dorset",
        "Solihull",
        "Lancashire",
        "Torbay",
        "Buckinghamshire",
        "Walsall",
        "Leicestershire",
        "Swindon",
        "North Northamptonshire",
        "Wolverhampton",
        "Lincolnshire",
        "Luton",
        "West Northamptonshire",
        "Bradford",
        "Norfolk",
        "Southend-on-Sea",
        "Bolton",
        "Calderdale",
        "North Yorkshire",
    ],
    low: &[
        "Nottingham",
        "Peterborough",
        "Manchester",
        "Liverpool",
        "Birmingham",
        "Barking and Dagenham",
        "Barnet",
        "Brent",
        "Camden",
        "Croydon",
        "Enfield",
        "Greenwich",
        "Hackney",
        "Hammersmith and Fulham",
        "Haringey",
        "Islington",
        "Kensington and Chelsea",
        "Lambeth",
        "Lewisham",
        "Merton",
        "Newham",
        "Redbridge",
        "Richmond upon Thames",
        "Southwark",
        "Tower Hamlets",
        "Waltham Forest",
        "Wandsworth",
        "Westminster",
    ],
};

pub const TWO_CLUSTER_2022: TwoClusterTable = TwoClusterTable {
    year: 2022,
    high: &[
        "Hartlepool",
        "Luton",
        "Buckinghamshire",
        "Sandwell",
        "Gloucestershire",
        "Middlesbrough",
        "Southend-on-Sea",
        "North Northamptonshire",
        "Solihull",
        "Hampshire",
        "Redcar and Cleveland",
        "Thurrock",
        "West Northamptonshire",
        "Walsall",
        "Hertfordshire",
        "Stockton-on-Tees",
        "Medway",
        "Bolton",
        "Wolverhampton",
        "Kent",
        "Darlington",
        "Bracknell Forest",
        "Bury",
        "Bradford",
        "Lancashire",
        "Halton",
        "West Berkshire",
        "Oldham",
        "Calderdale",
        "Leicestershire",
        "Warrington",
        "Reading",
        "Rochdale",
        "Kirklees",
        "Lincolnshire",
        "Blackburn with Darwen",
        "Slough",
        "Salford",
        "Leeds",
        "Norfolk",
        "Blackpool",
        "Windsor and Maidenhead",
        "Stockport",
        "Wakefield",
        "North Yorkshire",
        "Kingston upon Hull, City of",
        "Wokingham",
        "Tameside",
        "Gateshead",
        "Nottinghamshire",
        "East Riding of Yorkshire",
        "Milton Keynes",
        "Trafford",
        "Bexley",
        "Oxfordshire",
        "North East Lincolnshire",
        "Brighton and Hove",
        "Wigan",
        "Bromley",
        "Somerset",
        "North Lincolnshire",
        "Portsmouth",
        "Knowsley",
        "Ealing",
        "Staffordshire",
        "York",
        "Southampton",
        "St. Helens",
        "Greenwich",
        "Suffolk",
        "Derby",
        "Isle of Wight",
        "Sefton",
        "Harrow",
        "Surrey",
        "Leicester",
        "County Durham",
        "Wirral",
        "Havering",
        "Warwickshire",
        "Herefordshire, County of",
        "Cheshire East",
        "Barnsley",
        "Hillingdon",
        "West Sussex",
        "Telford and Wrekin",
        "Cheshire West and Chester",
        "Doncaster",
        "Hounslow",
        "Worcestershire",
        "Stoke-on-Trent",
        "Shropshire",
        "Rotherham",
        "Kingston upon Thames",
        "Rutland",
        "Bath and North East Somerset",
        "Cornwall",
        "Sheffield",
        "Sutton",
        "Bristol, City of",
        "Wiltshire",
        "Newcastle upon Tyne",
        "Cambridgeshire",
        "North Somerset",
        "Bedford",
        "North Tyneside",
        "Cumbria",
        "South Gloucestershire",
        "Central Bedfordshire",
        "South Tyneside",
        "Derbyshire",
        "Plymouth",
        "Northumberland",
        "Sunderland",
        "Devon",
        "Torbay",
        "Bournemouth, Christchurch and Poole",
        "Coventry",
        "East Sussex",
        "Swindon",
        "Dorset",
        "Dudley",
        "Essex",
    ],
    low: &[
        "Nottingham",
        "Peterborough",
        "Manchester",
        "Liverpool",
        "Birmingham",
        "Barking and Dagenham",
        "Barnet",
        "Brent",
        "Camden",
        "Croydon",
        "Enfield",
        "Hackney",
        "Hammersmith and Fulham",
        "Haringey",
        "Islington",
        "Kensington and Chelsea",
        "Lambeth",
        "Lewisham",
        "Merton",
        "Newham",
        "Redbridge",
        "Richmond upon Thames",
        "Tower Hamlets",
        "Waltham Forest",
        "Wandsworth",
        "Westminster",
    ],
};

pub const TWO_CLUSTER_2023: TwoClusterTable = TwoClusterTable {
    year: 2023,
    high: &[
        "Hartlepool",
        "Thurrock",
        "Bolton",
        "Bradford",
        "Lancashire",
        "Middlesbrough",
        "Medway",
        "Bury",
        "Calderdale",
        "Leicestershire",
        "Redcar and Cleveland",
        "Bracknell Forest",
        "Manchester",
        "Kirklees",
        "Lincolnshire",
        "Stockton-on-Tees",
        "West Berkshire",
        "Oldham",
        "Leeds",
        "Norfolk",
        "Darlington",
        "Reading",
        "Salford",
        "Wakefield",
        "North Yorkshire",
        "Halton",
        "Slough",
        "Stockport",
        "Gateshead",
        "Nottinghamshire",
        "Warrington",
        "Windsor and Maidenhead",
        "Tameside",
        "Barking and Dagenham",
        "Oxfordshire",
        "Blackburn with Darwen",
        "Wokingham",
        "Trafford",
        "Barnet",
        "Somerset",
        "Blackpool",
        "Milton Keynes",
        "Wigan",
        "Bromley",
        "Staffordshire",
        "Kingston upon Hull",
        "Brighton and Hove",
        "Knowsley",
        "Croydon",
        "Suffolk",
        "East Riding of Yorkshire",
        "Portsmouth",
        "Liverpool",
        "Greenwich",
        "Surrey",
        "North East Lincolnshire",
        "Southampton",
        "St Helens",
        "Hammersmith and Fulham",
        "Warwickshire",
        "North Lincolnshire",
        "Isle of Wight",
        "Wirral",
        "Hounslow",
        "West Sussex",
        "York",
        "County Durham",
        "Barnsley",
        "Islington",
        "Worcestershire",
        "Derby",
        "Cheshire East",
        "Doncaster",
        "Lewisham",
        "Rutland",
        "Leicester",
        "Cheshire West and Chester",
        "Rotherham",
        "Merton",
        "Herefordshire",
        "Shropshire",
        "Sheffield",
        "Newham",
        "Telford and Wrekin",
        "Cornwall",
        "Newcastle upon Tyne",
        "Tower Hamlets",
        "Stoke-on-Trent",
        "Wiltshire",
        "North Tyneside",
        "Waltham Forest",
        "Bath and North East Somerset",
        "Bedford",
        "South Tyneside",
        "Derbyshire",
        "Bristol",
        "Central Bedfordshire",
        "Sunderland",
        "Devon",
        "North Somerset",
        "Northumberland",
        "Birmingham",
        "East Sussex",
        "South Gloucestershire",
        "Bournemouth, Christchurch and Poole",
        "Coventry",
        "Essex",
        "Plymouth",
        "Dorset",
        "Sandwell",
        "Gloucestershire",
        "Torbay",
        "Buckinghamshire",
        "Solihull",
        "Hampshire",
        "Swindon",
        "North Northamptonshire",
        "Walsall",
        "Hertfordshire",
        "Southend-on-Sea",
        "West Northamptonshire",
        "Wolverhampton",
        "Kent",
    ],
    low: &[
        "Nottingham",
        "Peterborough",
        "Luton",
        "Rochdale",
        "Sefton",
        "Dudley",
        "Bexley",
        "Brent",
        "Camden",
        "Ealing",
        "Enfield",
        "Hackney",
        "Haringey",
        "Harrow",
        "Havering",
        "Hillingdon",
        "Kensington and Chelsea",
        "Kingston upon Thames",
        "Lambeth",
        "Redbridge",
        "Richmond upon Thames",
        "Southwark",
        "Sutton",
        "Wandsworth",
        "Westminster",
        "Cambridgeshire",
        "Cumbria",
    ],
};

pub const TWO_CLUSTER_TABLES: [TwoClusterTable; 3] = [TWO_CLUSTER_2021, TWO_CLUSTER_2022, TWO_CLUSTER_2023];

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("unknown district name {0:?}")]
    UnknownDistrict(String),
    #[error("no published table for {0}")]
    MissingTable(i32),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

/// Builds a dataset from a published two-cluster list: rurality from the
/// register, rates set to the published cluster means, socioeconomic
/// values zero. Returns it with the published assignment.
pub fn two_cluster_fixture(table: &TwoClusterTable) -> Result<(YearDataset, ClusterAssignment), FixtureError> {
    let means = table2(YearKey(table.year), 2);
    if means.len() != 2 {
        return Err(FixtureError::MissingTable(table.year));
    }
    let mut rows = Vec::new();
    for (names, mean) in [(table.low, means[0]), (table.high, means[1])] {
        for &printed in names {
            let name = canonical_name(printed).ok_or_else(|| FixtureError::UnknownDistrict(printed.to_string()))?;
            rows.push(DistrictRow {
                id: district_id(name),
                name: name.to_string(),
                vaccination: VaccinationProfile { rates: mean.rates() },
                gdsc: GdscProfile { numeric: [0.0; 8], rurality: rurality_of(name).expect("registered") },
            });
        }
    }
    let dataset = YearDataset::from_rows(YearKey(table.year), rows)?;
    let low: Vec<DistrictId> = table.low.iter().map(|n| district_id(canonical_name(n).expect("checked"))).collect();
    let raw: Vec<usize> = dataset.rows().iter().map(|r| usize::from(!low.contains(&r.id))).collect();
    let assignment = label_by_coverage(&raw, &dataset, 2)?;
    Ok((dataset, assignment))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::VACCINE_COLUMNS;

    #[test]
    fn printed_values_survive() {
        let rows = table2(YearKey(2021), 2);
        assert_eq!(rows[0].label, "L");
        assert_eq!(rows[0].text[0], "69.9");
        assert_eq!(rows[1].text[0], "87.3");
        assert_eq!(rows[1].text[10], "88.51");
        assert_eq!(table2(YearKey(2021), 3)[0].text[11], "87.7");
        assert_eq!(rows[0].rates()[13], 82.9);
        for r in TABLE2 {
            assert_eq!(r.text.len(), VACCINE_COLUMNS.len());
            assert!(r.rates().iter().all(|v| (0.0..=100.0).contains(v)));
        }
    }

    #[test]
    fn every_year_has_eleven_rows() {
        for y in 2021..=2023 {
            let labels: Vec<&str> = [2, 3, 6].iter().flat_map(|&k| table2(YearKey(y), k)).map(|r| r.label).collect();
            assert_eq!(labels, ["L", "H", "L", "M", "H", "Ls", "VL", "L", "M", "H", "Hst"]);
        }
    }

    #[test]
    fn aliases_resolve() {
        assert_eq!(canonical_name("Bristol, City of"), Some("Bristol"));
        assert_eq!(canonical_name("St. Helens"), Some("St Helens"));
        assert_eq!(canonical_name("Atlantis"), None);
        assert_eq!(district_id("Bournemouth, Christchurch and Poole").as_str(), "bournemouth-christchurch-and-poole");
        assert_eq!(district_id("Stoke-on-Trent").as_str(), "stoke-on-trent");
    }

    #[test]
    fn register_is_sorted_and_unique() {
        let ids: Vec<DistrictId> = DISTRICTS.iter().map(|(n, _)| district_id(n)).collect();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        assert!(DISTRICTS.iter().all(|(_, r)| (1..=6).contains(r)));
    }

    #[test]
    fn published_lists_resolve() {
        for t in TWO_CLUSTER_TABLES {
            for n in t.high.iter().chain(t.low) {
                assert!(canonical_name(n).is_some(), "{n}");
            }
        }
        // The 2022-23 list omits Southwark.
        assert_eq!(TWO_CLUSTER_2021.high.len() + TWO_CLUSTER_2021.low.len(), 150);
        assert_eq!(TWO_CLUSTER_2022.high.len() + TWO_CLUSTER_2022.low.len(), 149);
        assert_eq!(TWO_CLUSTER_2023.high.len() + TWO_CLUSTER_2023.low.len(), 150);
    }

    #[test]
    fn fixture_assignment_puts_low_list_first() {
        let (ds, a) = two_cluster_fixture(&TWO_CLUSTER_2021).unwrap();
        assert_eq!(ds.len(), 150);
        assert_eq!(a.sizes(), [28, 122]);
        let row = ds.rows().iter().position(|r| r.name == "Nottingham").unwrap();
        assert_eq!(a.name_of(row), "L");
    }
}
