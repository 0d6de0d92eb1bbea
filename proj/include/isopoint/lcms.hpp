#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "isopoint/common.hpp"

namespace isopoint {

/// One data point of an LC-MS map: (retention time, mass-to-charge, intensity).
struct Point {
    double rt = 0.0;         // minutes
    double mz = 0.0;         // Th
    double intensity = 0.0;  // raw or 0-255 scaled, depending on map state
};

/// One RT scan: parallel arrays sorted ascending by m/z, no duplicate m/z.
struct Scan {
    double rt = 0.0;  // minutes
    std::vector<double> mz;
    std::vector<double> intensity;

    std::size_t size() const { return mz.size(); }
};

/// RT-scan-keyed store of sorted (m/z, intensity) points.
///
/// Immutable after construction in pipeline use; all reads are thread-safe.
class LcmsMap {
public:
    LcmsMap() = default;

    /// Appends a scan; rt must exceed the previous scan's rt.
    void add_scan(double rt);
    /// Adds a point to the last scan (or scan `index`); duplicate m/z intensities add up.
    void add_point(std::size_t scan_index, double mz, double intensity);
    /// Sorts every scan by m/z and merges duplicate m/z entries; refreshes extents.
    void finalize();

    std::size_t num_scans() const { return scans_.size(); }
    std::size_t num_points() const;
    const Scan& scan(std::size_t i) const { return scans_[i]; }
    Scan& scan_mut(std::size_t i) { return scans_[i]; }

    double mz_min() const { return mz_min_; }
    double mz_max() const { return mz_max_; }
    void set_mz_extent(double lo, double hi) { mz_min_ = lo; mz_max_ = hi; }

    /// Raw-to-scaled factor (stored = raw * scale). 1.0 until scale_intensities.
    double intensity_scale() const { return intensity_scale_; }
    void set_intensity_scale(double s) { intensity_scale_ = s; }

    double max_intensity() const;
    double total_intensity() const;

    /// Scan spacing in minutes (median of successive differences; 0 if < 2 scans).
    double scan_interval() const;

private:
    std::vector<Scan> scans_;
    double mz_min_ = 0.0;
    double mz_max_ = 0.0;
    double intensity_scale_ = 1.0;
};

/// Geometry of the non-overlapping scanning window.
struct WindowGeometry {
    double mz_span = 2.0;  // Th
    int rt_scans = 15;
    int max_points = 512;  // padding size N per region
};

/// Point set of one window region, padded to geometry.max_points.
///
/// Coordinates are local to the region origin: rt as scan offset in
/// [0, rt_scans), mz as offset in [0, mz_span) with the m/z value quantized to
/// 4 decimals when the coordinate is formed.
struct RegionPoints {
    std::vector<std::array<double, 3>> pts;            // (rt_offset, mz_offset, intensity)
    std::vector<std::uint8_t> mask;                    // 1 = real point, 0 = padding
    std::vector<std::pair<int, std::uint32_t>> src;    // (scan index, index in scan) per real row
    int count = 0;                                     // number of real points

    bool empty() const { return count == 0; }
};

/// Target window plus its four adjacent surround regions.
struct ScanWindow {
    RegionPoints target;
    RegionPoints left, right, below, above;
    std::vector<int> labels;  // training only; aligned to target rows, 0-9

    int scan_base = 0;      // first scan index of the target
    double mz_start = 0.0;  // left m/z edge of the target
};

/// Parses the `.ms1`-style text grammar.
///
/// `H ...` header lines are ignored; `S <scan#> <scan#> [precursor]` begins a
/// scan; `I RTime <minutes>` sets its RT; any other line is `<mz> <intensity>`.
/// Throws ParseError naming the offending line.
LcmsMap parse_ms1(std::istream& in);
LcmsMap parse_ms1_file(const std::string& path);

/// Emits the same grammar parse_ms1 reads; m/z printed at 4 decimals.
void serialize_ms1(const LcmsMap& map, std::ostream& out);
std::string serialize_ms1(const LcmsMap& map);

/// Linearly rescales intensities so the global maximum maps to 255.
/// The factor is recorded on the map so raw AUC stays recoverable.
/// Throws DataError("no signal") when every intensity is zero.
LcmsMap scale_intensities(const LcmsMap& map);

/// Cuts the target window at (scan_index, mz_start) plus the four adjacent
/// surround regions of identical geometry. Out-of-range regions come back
/// empty and masked. When a region holds more than max_points points the
/// highest-intensity ones are kept.
ScanWindow cut_window(const LcmsMap& map, int scan_index, double mz_start,
                      const WindowGeometry& geom);

}  // namespace isopoint
