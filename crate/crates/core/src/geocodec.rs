//! Geohash cells and the 16-bit token codec.
//!
//! A [`CellId`] is a canonical geohash bit string: bit 0 (the most
//! significant) halves longitude, bit 1 latitude, and so on alternately.
//! Every five bits render as one character of the base-32 alphabet.
//!
//! A [`CodecConfig`] fixes a prefix cell shared by a whole dataset, plus an
//! optional whole-cell translation ("shift") that was applied to lengthen
//! that prefix. A token is the 16 bits that follow the prefix, so tokens are
//! always a strict suffix of a canonical geohash at depth `prefix + 16`.
//!
//! Bit 15 of a token is the "half character": the interleaved bit that
//! follows three full characters. Whether it splits east/west or north/south
//! depends on the parity of its position in the full bit string; it is never
//! reordered.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::CodecError;

pub const MAX_DEPTH: u8 = 60;
pub const TOKEN_BITS: u8 = 16;
pub const VOCAB_SIZE: usize = 1 << TOKEN_BITS;
/// Largest prefix depth that still leaves room for a full token.
pub const MAX_PREFIX_DEPTH: u8 = MAX_DEPTH - TOKEN_BITS;
/// Shift search radius, in token-depth cells.
pub const SHIFT_RADIUS: i64 = 2;

const BASE32: &[u8; 32] = b"0123456789bcdefghjkmnpqrstuvwxyz";

fn base32_index(c: u8) -> Option<u64> {
    BASE32.iter().position(|&b| b == c).map(|i| i as u64)
}

/// A latitude/longitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Validates latitude and normalizes longitude into `[-180, 180)`.
    pub fn new(lat: f64, lon: f64) -> Result<Self, CodecError> {
        if !lat.is_finite() || !lon.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(CodecError::OutOfRange { lat, lon });
        }
        if !(-540.0..=540.0).contains(&lon) {
            return Err(CodecError::OutOfRange { lat, lon });
        }
        Ok(GeoPoint { lat, lon: normalize_lon(lon) })
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..180.0).contains(&self.lon)
    }
}

/// Maps any finite longitude into `[-180, 180)`.
pub fn normalize_lon(lon: f64) -> f64 {
    let mut l = lon;
    while l >= 180.0 {
        l -= 360.0;
    }
    while l < -180.0 {
        l += 360.0;
    }
    l
}

/// Signed longitude difference `b - a` along the shorter arc.
pub fn lon_delta(a: f64, b: f64) -> f64 {
    let d = b - a;
    if d > 180.0 {
        d - 360.0
    } else if d < -180.0 {
        d + 360.0
    } else {
        d
    }
}

/// A geohash cell: `depth` interleaved bits, most significant first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId {
    bits: u64,
    depth: u8,
}

impl CellId {
    pub const ROOT: CellId = CellId { bits: 0, depth: 0 };

    pub fn new(bits: u64, depth: u8) -> Result<Self, CodecError> {
        if depth > MAX_DEPTH {
            return Err(CodecError::InvalidDepth(depth as u32));
        }
        if depth < 64 && bits >> depth != 0 {
            return Err(CodecError::Config(alloc::format!(
                "bit value {bits:#x} does not fit in {depth} bits"
            )));
        }
        Ok(CellId { bits, depth })
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }

    /// Bit `i` counted from the most significant end.
    pub fn bit(&self, i: u8) -> bool {
        debug_assert!(i < self.depth);
        (self.bits >> (self.depth - 1 - i)) & 1 == 1
    }

    /// Number of bits refining longitude.
    pub fn lon_bits(&self) -> u8 {
        self.depth.div_ceil(2)
    }

    pub fn lat_bits(&self) -> u8 {
        self.depth / 2
    }

    pub fn truncate(&self, depth: u8) -> CellId {
        if depth >= self.depth {
            return *self;
        }
        CellId { bits: self.bits >> (self.depth - depth), depth }
    }

    pub fn is_prefix_of(&self, other: &CellId) -> bool {
        self.depth <= other.depth && other.truncate(self.depth) == *self
    }

    /// Appends `n` low bits of `suffix`.
    pub fn extend(&self, suffix: u64, n: u8) -> Result<CellId, CodecError> {
        let depth = self.depth + n;
        if depth > MAX_DEPTH {
            return Err(CodecError::InvalidDepth(depth as u32));
        }
        let mask = if n == 0 { 0 } else { (1u64 << n) - 1 };
        Ok(CellId { bits: (self.bits << n) | (suffix & mask), depth })
    }

    /// Length of the common leading bit string of two cells.
    pub fn common_prefix_len(&self, other: &CellId) -> u8 {
        let d = self.depth.min(other.depth);
        let a = self.truncate(d).bits;
        let b = other.truncate(d).bits;
        let x = a ^ b;
        if x == 0 {
            d
        } else {
            d - (64 - x.leading_zeros()) as u8
        }
    }

    /// Renders whole characters from the base-32 alphabet. A trailing partial
    /// character is shown as a marker: a single leftover bit becomes `E`/`W`
    /// (longitude) or `N`/`S` (latitude); more leftover bits are written as
    /// `[0101]`.
    pub fn to_geohash(&self) -> String {
        let mut s = String::with_capacity(self.depth as usize / 5 + 6);
        let chars = self.depth / 5;
        for c in 0..chars {
            let shift = self.depth - 5 * (c + 1);
            let v = (self.bits >> shift) & 31;
            s.push(BASE32[v as usize] as char);
        }
        let rest = self.depth - 5 * chars;
        if rest == 1 {
            let bit = self.bits & 1 == 1;
            let lon_axis = (self.depth - 1).is_multiple_of(2);
            s.push(match (lon_axis, bit) {
                (true, true) => 'E',
                (true, false) => 'W',
                (false, true) => 'N',
                (false, false) => 'S',
            });
        } else if rest > 1 {
            s.push('[');
            for i in (0..rest).rev() {
                s.push(if (self.bits >> i) & 1 == 1 { '1' } else { '0' });
            }
            s.push(']');
        }
        s
    }

    /// Parses the rendering produced by [`CellId::to_geohash`].
    pub fn from_geohash(s: &str) -> Result<CellId, CodecError> {
        let bad = || CodecError::InvalidGeohash(String::from(s));
        let bytes = s.as_bytes();
        let mut bits = 0u64;
        let mut depth = 0u8;
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            if let Some(v) = base32_index(c) {
                if depth + 5 > MAX_DEPTH {
                    return Err(bad());
                }
                bits = (bits << 5) | v;
                depth += 5;
                i += 1;
                continue;
            }
            // Trailing markers only.
            match c {
                b'E' | b'W' | b'N' | b'S' => {
                    if i + 1 != bytes.len() || depth + 1 > MAX_DEPTH {
                        return Err(bad());
                    }
                    let lon_axis = depth.is_multiple_of(2);
                    let (one, zero) = if lon_axis { (b'E', b'W') } else { (b'N', b'S') };
                    let bit = if c == one {
                        1
                    } else if c == zero {
                        0
                    } else {
                        return Err(bad());
                    };
                    bits = (bits << 1) | bit;
                    depth += 1;
                    i += 1;
                }
                b'[' => {
                    if *bytes.last().unwrap() != b']' {
                        return Err(bad());
                    }
                    let inner = &bytes[i + 1..bytes.len() - 1];
                    if inner.is_empty() || inner.len() > 4 || depth as usize + inner.len() > 60 {
                        return Err(bad());
                    }
                    for &b in inner {
                        let bit = match b {
                            b'0' => 0,
                            b'1' => 1,
                            _ => return Err(bad()),
                        };
                        bits = (bits << 1) | bit;
                        depth += 1;
                    }
                    i = bytes.len();
                }
                _ => return Err(bad()),
            }
        }
        Ok(CellId { bits, depth })
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_geohash())
    }
}

/// Exact bisection rectangle of a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellBBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl CellBBox {
    pub const WORLD: CellBBox =
        CellBBox { lat_min: -90.0, lat_max: 90.0, lon_min: -180.0, lon_max: 180.0 };

    /// Half-open containment used for encoding. The north pole is kept in the
    /// topmost row.
    pub fn contains(&self, p: &GeoPoint) -> bool {
        let lat_ok = p.lat >= self.lat_min
            && (p.lat < self.lat_max || (self.lat_max == 90.0 && p.lat == 90.0));
        lat_ok && p.lon >= self.lon_min && p.lon < self.lon_max
    }

    /// Closed containment used for evaluation.
    pub fn contains_closed(&self, p: &GeoPoint) -> bool {
        p.lat >= self.lat_min && p.lat <= self.lat_max && p.lon >= self.lon_min && p.lon <= self.lon_max
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint {
            lat: (self.lat_min + self.lat_max) / 2.0,
            lon: (self.lon_min + self.lon_max) / 2.0,
        }
    }

    /// Corners in the order SW, SE, NW, NE.
    pub fn corners(&self) -> [GeoPoint; 4] {
        [
            GeoPoint { lat: self.lat_min, lon: self.lon_min },
            GeoPoint { lat: self.lat_min, lon: self.lon_max },
            GeoPoint { lat: self.lat_max, lon: self.lon_min },
            GeoPoint { lat: self.lat_max, lon: self.lon_max },
        ]
    }

    pub fn width(&self) -> f64 {
        self.lon_max - self.lon_min
    }

    pub fn height(&self) -> f64 {
        self.lat_max - self.lat_min
    }
}

fn check_point(p: &GeoPoint) -> Result<(), CodecError> {
    if p.is_valid() {
        Ok(())
    } else {
        Err(CodecError::OutOfRange { lat: p.lat, lon: p.lon })
    }
}

/// Canonical geohash encoding by repeated bisection. Points on an interior
/// bisection line go to the upper half.
pub fn encode_point(p: &GeoPoint, depth: u8) -> Result<CellId, CodecError> {
    check_point(p)?;
    if depth > MAX_DEPTH {
        return Err(CodecError::InvalidDepth(depth as u32));
    }
    let (mut lon_lo, mut lon_hi) = (-180.0f64, 180.0f64);
    let (mut lat_lo, mut lat_hi) = (-90.0f64, 90.0f64);
    let mut bits = 0u64;
    for i in 0..depth {
        bits <<= 1;
        if i % 2 == 0 {
            let mid = (lon_lo + lon_hi) / 2.0;
            if p.lon >= mid {
                bits |= 1;
                lon_lo = mid;
            } else {
                lon_hi = mid;
            }
        } else {
            let mid = (lat_lo + lat_hi) / 2.0;
            if p.lat >= mid {
                bits |= 1;
                lat_lo = mid;
            } else {
                lat_hi = mid;
            }
        }
    }
    Ok(CellId { bits, depth })
}

pub fn cell_bbox(c: &CellId) -> CellBBox {
    let (ix, iy) = grid_coords(c);
    let nx = (1u64 << c.lon_bits()) as f64;
    let ny = (1u64 << c.lat_bits()) as f64;
    let w = 360.0 / nx;
    let h = 180.0 / ny;
    // Multiples of a power-of-two fraction of 360 or 180 are exact in f64
    // at every supported depth.
    CellBBox {
        lon_min: -180.0 + ix as f64 * w,
        lon_max: -180.0 + (ix + 1) as f64 * w,
        lat_min: -90.0 + iy as f64 * h,
        lat_max: -90.0 + (iy + 1) as f64 * h,
    }
}

pub fn cell_center(c: &CellId) -> GeoPoint {
    cell_bbox(c).center()
}

/// Cell size in degrees `(lon width, lat height)` at a depth.
pub fn cell_size(depth: u8) -> (f64, f64) {
    let lon_bits = depth.div_ceil(2);
    let lat_bits = depth / 2;
    (360.0 / (1u64 << lon_bits) as f64, 180.0 / (1u64 << lat_bits) as f64)
}

/// De-interleaves a cell into its column (longitude) and row (latitude)
/// indices.
pub fn grid_coords(c: &CellId) -> (u64, u64) {
    let mut ix = 0u64;
    let mut iy = 0u64;
    for i in 0..c.depth {
        let b = (c.bits >> (c.depth - 1 - i)) & 1;
        if i % 2 == 0 {
            ix = (ix << 1) | b;
        } else {
            iy = (iy << 1) | b;
        }
    }
    (ix, iy)
}

pub fn cell_from_grid(ix: u64, iy: u64, depth: u8) -> Result<CellId, CodecError> {
    if depth > MAX_DEPTH {
        return Err(CodecError::InvalidDepth(depth as u32));
    }
    let lon_bits = depth.div_ceil(2);
    let lat_bits = depth / 2;
    if (lon_bits < 64 && ix >> lon_bits != 0) || (lat_bits < 64 && iy >> lat_bits != 0) {
        return Err(CodecError::GridOutOfRange { ix: ix as i64, iy: iy as i64, depth });
    }
    let mut bits = 0u64;
    let (mut xi, mut yi) = (lon_bits, lat_bits);
    for i in 0..depth {
        bits <<= 1;
        if i % 2 == 0 {
            xi -= 1;
            bits |= (ix >> xi) & 1;
        } else {
            yi -= 1;
            bits |= (iy >> yi) & 1;
        }
    }
    Ok(CellId { bits, depth })
}

/// Translates a cell by whole cells. Longitude wraps; latitude must stay
/// on the globe.
pub fn offset_cell(c: &CellId, dx: i64, dy: i64) -> Result<CellId, CodecError> {
    let (ix, iy) = grid_coords(c);
    let nx = 1i128 << c.lon_bits();
    let ny = 1i64 << c.lat_bits();
    let x = (ix as i128 + dx as i128).rem_euclid(nx) as u64;
    let y = iy as i64 + dy;
    if y < 0 || y >= ny {
        return Err(CodecError::GridOutOfRange { ix: x as i64, iy: y, depth: c.depth });
    }
    cell_from_grid(x, y as u64, c.depth)
}

/// King-move distance on the cell grid, with longitudinal wraparound.
pub fn hop_distance(a: &CellId, b: &CellId) -> Result<u64, CodecError> {
    if a.depth != b.depth {
        return Err(CodecError::DepthMismatch(a.depth, b.depth));
    }
    let (ax, ay) = grid_coords(a);
    let (bx, by) = grid_coords(b);
    let nx = 1u128 << a.lon_bits();
    let direct = ax.abs_diff(bx) as u128;
    let dx = direct.min(nx - direct) as u64;
    let dy = ay.abs_diff(by);
    Ok(dx.max(dy))
}

/// A token: the 16 bits that follow the codec prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct TokenId(pub u16);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<u16> for TokenId {
    fn from(v: u16) -> Self {
        TokenId(v)
    }
}

/// Fixed prefix plus whole-cell shift mapping points to 16-bit tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodecConfig {
    prefix: CellId,
    shift_dx: i64,
    shift_dy: i64,
}

impl CodecConfig {
    /// `shift` is a whole-cell offset at token depth, applied to points on
    /// encode and removed on decode.
    pub fn new(prefix: CellId, shift_dx: i64, shift_dy: i64) -> Result<Self, CodecError> {
        if prefix.depth > MAX_PREFIX_DEPTH {
            return Err(CodecError::Config(alloc::format!(
                "prefix depth {} + {} token bits exceeds {}",
                prefix.depth,
                TOKEN_BITS,
                MAX_DEPTH
            )));
        }
        let codec = CodecConfig { prefix, shift_dx, shift_dy };
        if !codec.deshift_stays_on_globe() {
            return Err(CodecError::Config(alloc::format!(
                "shift ({shift_dx}, {shift_dy}) moves the prefix cell off the globe"
            )));
        }
        Ok(codec)
    }

    pub fn prefix(&self) -> CellId {
        self.prefix
    }

    pub fn shift(&self) -> (i64, i64) {
        (self.shift_dx, self.shift_dy)
    }

    pub fn token_depth(&self) -> u8 {
        self.prefix.depth + TOKEN_BITS
    }

    pub fn vocab_size(&self) -> usize {
        VOCAB_SIZE
    }

    fn deshift_stays_on_globe(&self) -> bool {
        let d = self.token_depth();
        let below = d / 2 - self.prefix.lat_bits();
        let (_, py) = grid_coords(&self.prefix);
        let lo = (py << below) as i64;
        let hi = (((py + 1) << below) - 1) as i64;
        let ny = 1i64 << (d / 2);
        lo - self.shift_dy >= 0 && hi - self.shift_dy < ny
    }

    /// The cell in the shifted frame whose low 16 bits form the token.
    fn shifted_cell(&self, p: &GeoPoint) -> Result<CellId, CodecError> {
        let real = encode_point(p, self.token_depth())?;
        let shifted = offset_cell(&real, self.shift_dx, self.shift_dy)
            .map_err(|_| CodecError::Coverage { lat: p.lat, lon: p.lon })?;
        if !self.prefix.is_prefix_of(&shifted) {
            return Err(CodecError::Coverage { lat: p.lat, lon: p.lon });
        }
        Ok(shifted)
    }

    /// Unshifted cell of a point at token depth.
    pub fn cell_of_point(&self, p: &GeoPoint) -> Result<CellId, CodecError> {
        encode_point(p, self.token_depth())
    }

    pub fn covers(&self, p: &GeoPoint) -> bool {
        self.shifted_cell(p).is_ok()
    }

    pub fn token_of(&self, p: &GeoPoint) -> Result<TokenId, CodecError> {
        let c = self.shifted_cell(p)?;
        Ok(TokenId((c.bits & (VOCAB_SIZE as u64 - 1)) as u16))
    }

    /// Reassembles prefix and token, then removes the shift. The result is a
    /// canonical cell at token depth.
    pub fn cell_of(&self, t: TokenId) -> CellId {
        let shifted = self
            .prefix
            .extend(t.0 as u64, TOKEN_BITS)
            .expect("prefix depth validated on construction");
        offset_cell(&shifted, -self.shift_dx, -self.shift_dy)
            .expect("de-shifted prefix validated on construction")
    }

    pub fn point_of(&self, t: TokenId) -> CellBBox {
        cell_bbox(&self.cell_of(t))
    }

    /// Token of a real-frame cell at token depth, if it lies in coverage.
    pub fn token_of_cell(&self, c: &CellId) -> Result<TokenId, CodecError> {
        if c.depth != self.token_depth() {
            return Err(CodecError::DepthMismatch(c.depth, self.token_depth()));
        }
        let center = cell_center(c);
        let shifted = offset_cell(c, self.shift_dx, self.shift_dy)
            .map_err(|_| CodecError::Coverage { lat: center.lat, lon: center.lon })?;
        if !self.prefix.is_prefix_of(&shifted) {
            return Err(CodecError::Coverage { lat: center.lat, lon: center.lon });
        }
        Ok(TokenId((shifted.bits & (VOCAB_SIZE as u64 - 1)) as u16))
    }
}

/// Derives the codec with the deepest shared prefix over a dataset.
pub fn derive_codec(points: &[GeoPoint]) -> Result<CodecConfig, CodecError> {
    derive_codec_capped(points, MAX_PREFIX_DEPTH)
}

/// Like [`derive_codec`], but never returns a prefix deeper than
/// `max_prefix_depth` (used to pin a working resolution).
///
/// For each candidate prefix depth `P` (deepest first) the shift unit is a
/// cell at depth `P + 16`. Shifts in `[-2, 2]^2` are tried in order of
/// `|dx| + |dy|`, then `dx`, then `dy`; the first one under which every point
/// shares the same `P`-bit prefix wins.
pub fn derive_codec_capped(points: &[GeoPoint], max_prefix_depth: u8) -> Result<CodecConfig, CodecError> {
    if points.is_empty() {
        return Err(CodecError::EmptyDataset);
    }
    for p in points {
        check_point(p)?;
    }
    let mut lat_min = f64::INFINITY;
    let mut lat_max = f64::NEG_INFINITY;
    let mut lon_min = f64::INFINITY;
    let mut lon_max = f64::NEG_INFINITY;
    for p in points {
        lat_min = lat_min.min(p.lat);
        lat_max = lat_max.max(p.lat);
        lon_min = lon_min.min(p.lon);
        lon_max = lon_max.max(p.lon);
    }
    let shifts = shift_order(SHIFT_RADIUS);
    let top = max_prefix_depth.min(MAX_PREFIX_DEPTH);
    let mut cells: Vec<CellId> = Vec::with_capacity(points.len());
    for prefix_depth in (0..=top).rev() {
        let (w, h) = cell_size(prefix_depth);
        // A half-open cell cannot hold points spread over its full width.
        if prefix_depth > 0 && (lon_max - lon_min >= w || lat_max - lat_min >= h) {
            continue;
        }
        let depth = prefix_depth + TOKEN_BITS;
        cells.clear();
        for p in points {
            cells.push(encode_point(p, depth)?);
        }
        'shift: for &(dx, dy) in &shifts {
            let mut prefix: Option<CellId> = None;
            for c in &cells {
                let Ok(s) = offset_cell(c, dx, dy) else { continue 'shift };
                let pre = s.truncate(prefix_depth);
                match prefix {
                    None => prefix = Some(pre),
                    Some(q) if q != pre => continue 'shift,
                    _ => {}
                }
            }
            let prefix = prefix.expect("non-empty dataset");
            if let Ok(codec) = CodecConfig::new(prefix, dx, dy) {
                return Ok(codec);
            }
        }
    }
    // Depth 0 with no shift always works, so the loop above returns.
    unreachable!("empty prefix covers the globe")
}

/// Candidate shifts in tie-break order.
pub fn shift_order(radius: i64) -> Vec<(i64, i64)> {
    let mut v = Vec::new();
    for dx in -radius..=radius {
        for dy in -radius..=radius {
            v.push((dx, dy));
        }
    }
    v.sort_by_key(|&(dx, dy)| (dx.abs() + dy.abs(), dx, dy));
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn encodes_known_geohash() {
        let c = encode_point(&pt(57.64911, 10.40744), 55).unwrap();
        assert_eq!(c.to_geohash(), "u4pruydqqvj");
        assert_eq!(encode_point(&pt(0.0, 0.0), 5).unwrap().to_geohash(), "s");
    }

    #[test]
    fn center_of_known_cell() {
        let c = CellId::from_geohash("u4pruydqqvj").unwrap();
        let m = cell_center(&c);
        assert!((m.lat - 57.64911).abs() < 1e-5);
        assert!((m.lon - 10.40744).abs() < 1e-5);
    }

    #[test]
    fn root_bbox_is_world() {
        assert_eq!(cell_bbox(&CellId::ROOT), CellBBox::WORLD);
        assert_eq!(cell_center(&CellId::ROOT), GeoPoint { lat: 0.0, lon: 0.0 });
    }

    #[test]
    fn depth16_widths() {
        let c = encode_point(&pt(12.3, 45.6), 16).unwrap();
        let b = cell_bbox(&c);
        assert_eq!(b.width(), 1.40625);
        assert_eq!(b.height(), 0.703125);
        // Repeated bisection of the world reaches the same sizes.
        let (mut w, mut h) = (360.0f64, 180.0f64);
        for i in 0..16 {
            if i % 2 == 0 {
                w /= 2.0
            } else {
                h /= 2.0
            }
        }
        assert_eq!((w, h), (b.width(), b.height()));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
        assert!(encode_point(&GeoPoint { lat: 0.0, lon: 200.0 }, 5).is_err());
        assert!(encode_point(&pt(0.0, 0.0), 61).is_err());
        assert_eq!(GeoPoint::new(0.0, 180.0).unwrap().lon, -180.0);
    }

    #[test]
    fn depth2_grid_enumerates_quadrants() {
        let mut seen = Vec::new();
        for bits in 0..4u64 {
            seen.push(grid_coords(&CellId::new(bits, 2).unwrap()));
        }
        seen.sort();
        assert_eq!(seen, [(0, 0), (0, 1), (1, 0), (1, 1)]);
    }

    #[test]
    fn hop_distance_basics() {
        let a = encode_point(&pt(10.0, 10.0), 20).unwrap();
        assert_eq!(hop_distance(&a, &a).unwrap(), 0);
        let e = offset_cell(&a, 1, 1).unwrap();
        assert_eq!(hop_distance(&a, &e).unwrap(), 1);
        let far = offset_cell(&a, -3, 2).unwrap();
        assert_eq!(hop_distance(&a, &far).unwrap(), 3);
        let b = encode_point(&pt(10.0, 10.0), 21).unwrap();
        assert!(matches!(hop_distance(&a, &b), Err(CodecError::DepthMismatch(20, 21))));
    }

    #[test]
    fn hop_distance_wraps_antimeridian() {
        let w = encode_point(&pt(0.5, 179.99), 12).unwrap();
        let e = encode_point(&pt(0.5, -179.99), 12).unwrap();
        assert_eq!(hop_distance(&w, &e).unwrap(), 1);
    }

    #[test]
    fn geohash_text_roundtrip_with_markers() {
        for depth in [1u8, 5, 6, 7, 9, 10, 11, 21, 36, 60] {
            let c = encode_point(&pt(-33.1, 151.2), depth).unwrap();
            let s = c.to_geohash();
            assert_eq!(CellId::from_geohash(&s).unwrap(), c, "{s}");
        }
        assert_eq!(encode_point(&pt(0.0, 0.0), 6).unwrap().to_geohash(), "sS");
        assert!(CellId::from_geohash("dqa").is_err());
        assert!(CellId::from_geohash("dqNx").is_err());
    }

    #[test]
    fn derive_codec_single_point() {
        let codec = derive_codec(&[pt(38.9, -77.0)]).unwrap();
        assert_eq!(codec.prefix().depth(), MAX_DEPTH - TOKEN_BITS);
        assert_eq!(codec.shift(), (0, 0));
    }

    #[test]
    fn derive_codec_keeps_dq_prefix() {
        // "dq" spans lat [33.75, 39.375), lon [-78.75, -67.5).
        let pts = [pt(36.0, -77.0), pt(38.5, -70.0), pt(34.0, -68.0), pt(39.0, -78.0)];
        let codec = derive_codec(&pts).unwrap();
        assert!(codec.prefix().to_geohash().starts_with("dq"));
        assert_eq!(codec.shift(), (0, 0));
    }

    #[test]
    fn shift_lengthens_prefix_across_boundary() {
        // Two clusters a hair apart on either side of the lon = 0 line.
        let pts = [pt(45.2, -0.00001), pt(45.2, 0.00001)];
        let plain_prefix = encode_point(&pts[0], 60)
            .unwrap()
            .common_prefix_len(&encode_point(&pts[1], 60).unwrap());
        let codec = derive_codec(&pts).unwrap();
        assert!(codec.prefix().depth() >= plain_prefix.min(MAX_PREFIX_DEPTH));
        assert_ne!(codec.shift(), (0, 0));
        for p in &pts {
            let t = codec.token_of(p).unwrap();
            assert!(codec.point_of(t).contains(p));
        }
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert_eq!(derive_codec(&[]), Err(CodecError::EmptyDataset));
    }

    #[test]
    fn token_zero_is_corner_cell() {
        let codec = derive_codec(&[pt(36.0, -77.0), pt(38.5, -70.0)]).unwrap();
        let c = codec.cell_of(TokenId(0));
        assert_eq!(c, codec.prefix().extend(0, TOKEN_BITS).unwrap());
        let pb = cell_bbox(&codec.prefix());
        let tb = codec.point_of(TokenId(0));
        assert_eq!((tb.lat_min, tb.lon_min), (pb.lat_min, pb.lon_min));
    }

    #[test]
    fn coverage_error_outside_prefix() {
        let codec = derive_codec(&[pt(36.0, -77.0), pt(36.1, -77.1)]).unwrap();
        assert!(matches!(codec.token_of(&pt(-36.0, 77.0)), Err(CodecError::Coverage { .. })));
    }

    #[test]
    fn half_character_bit_splits_last_axis() {
        let codec = derive_codec(&[pt(36.0, -77.0), pt(38.5, -70.0)]).unwrap();
        let p = pt(36.3, -75.2);
        let cell = codec.cell_of_point(&p).unwrap();
        // The parent at one bit shallower is a 3-character cell below the prefix;
        // its two children differ only in the final bit.
        let parent = cell.truncate(cell.depth() - 1);
        let b = cell_bbox(&parent);
        let last_is_lon = (cell.depth() - 1).is_multiple_of(2);
        let (lo, hi) = if last_is_lon {
            let mid = (b.lon_min + b.lon_max) / 2.0;
            (pt(p.lat, mid - 1e-9), pt(p.lat, mid + 1e-9))
        } else {
            let mid = (b.lat_min + b.lat_max) / 2.0;
            (pt(mid - 1e-9, p.lon), pt(mid + 1e-9, p.lon))
        };
        let (tl, th) = (codec.token_of(&lo).unwrap(), codec.token_of(&hi).unwrap());
        assert_eq!(tl.0 ^ th.0, 1);
        assert_eq!(tl.0 & 1, 0);
    }

    #[test]
    fn codec_rejects_deep_prefix() {
        let c = encode_point(&pt(1.0, 1.0), 45).unwrap();
        assert!(CodecConfig::new(c, 0, 0).is_err());
    }
}
