#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "isopoint/lcms.hpp"
#include "isopoint/tensor.hpp"

namespace isopoint {

/// Architecture of the segmentation network. Widths default to the
/// PointNet-style stack used throughout; smaller stacks are used by tests.
struct DetectingConfig {
    WindowGeometry geom;
    std::vector<int> local_widths{64, 64};
    std::vector<int> global_widths{64, 128, 256};
    std::vector<int> point_widths{256, 128};  // last entry is the feature dim D
    std::vector<int> output_widths{128, 64, 32};
    int num_classes = 10;

    int feature_dim() const { return point_widths.back(); }
};

/// Per-point class probabilities and labels for one window, aligned to the
/// padded target rows (masked rows are labeled 0).
struct SegmentResult {
    std::vector<int> labels;          // size max_points
    std::vector<double> probs;        // max_points x num_classes, row-major
    ag::Tensor logits;                // compacted [n_valid x num_classes]
    int n_valid = 0;
};

/// Attention of one surround region over the target window's points:
/// impact = row-softmax(target_pf . region_pf^T), filtered = impact . region_pf,
/// result = filtered . W. Each target point's attention over the region points
/// sums to 1. An empty region yields a zero matrix.
ag::Tensor surround_attention(const ag::Tensor& target_pf, const ag::Tensor& region_pf,
                              const ag::Tensor& W);

/// Point-cloud segmentation network with four-region surround attention.
/// The surround regions share the target's encoder weights.
class IsoDetectingNet {
public:
    IsoDetectingNet(DetectingConfig config, std::uint64_t seed);

    /// Shared PointNet encoder over one region: per-point local features, a
    /// max-pooled global feature, and the per-point features from their
    /// concatenation. Returns a compacted [count x D] tensor (masked rows are
    /// dropped; they contribute zero feature vectors by construction).
    ag::Tensor point_features(const RegionPoints& region) const;

    /// Segments the target points of a window, diffusing the four surround
    /// attentions into the target's point features by addition.
    SegmentResult segment_window(const ScanWindow& window, bool use_surrounds = true) const;

    const DetectingConfig& config() const { return cfg_; }
    ag::ParamStore& params() { return params_; }
    const ag::ParamStore& params() const { return params_; }

    void save_checkpoint(const std::string& path) const;
    static IsoDetectingNet from_checkpoint(const std::string& path);

private:
    DetectingConfig cfg_;
    ag::ParamStore params_;
};

/// One recorded isotope detection: weighted-average m/z key plus its scan
/// range and per-scan intensities (scaled units; silent scans inside the
/// range carry 0).
struct DetectionEntry {
    double mz = 0.0;
    int scan_start = 0;
    int scan_end = -1;
    std::vector<double> scan_intensity;

    double total_intensity() const {
        double t = 0.0;
        for (double v : scan_intensity) t += v;
        return t;
    }
    int peak_scan() const;  // scan index of the maximum intensity
};

/// Nine m/z-keyed tables of per-isotope detections, one per charge 1-9.
struct DetectionTables {
    std::array<std::vector<DetectionEntry>, 9> by_charge;  // sorted by (mz, scan_start)

    std::vector<DetectionEntry>& charge(int z) { return by_charge[static_cast<std::size_t>(z - 1)]; }
    const std::vector<DetectionEntry>& charge(int z) const {
        return by_charge[static_cast<std::size_t>(z - 1)];
    }
    std::size_t total_entries() const;
};

struct ScanOptions {
    int sections = 1;             // m/z sections processed in parallel
    bool use_surrounds = true;    // false = ablation with surround regions zeroed
    int max_scan_gap = 2;         // silent scans tolerated inside one isotope
    double collapse_mz_tol = 0.001;  // adjacent positive bins collapsed into one key
    double merge_mz_tol = 0.0015;    // cross-window key merge tolerance
};

/// Intensity-weighted mean m/z of (m/z, summed intensity) bins, rounded to 4
/// decimals. Zero-intensity bins are ignored; throws DataError when nothing
/// carries intensity.
double weighted_mz(const std::vector<std::pair<double, double>>& bins);

/// Turns one segmented window into detection entries (pure; exposed for tests).
/// `labels` must align with window.target rows.
std::array<std::vector<DetectionEntry>, 9> record_window_detections(
    const LcmsMap& map, const ScanWindow& window, const std::vector<int>& labels,
    const ScanOptions& opts);

/// Merges entries of one charge across window boundaries: keys within
/// merge_mz_tol whose scan ranges touch (gap <= max_scan_gap) become one entry.
std::vector<DetectionEntry> merge_detections(std::vector<DetectionEntry> entries,
                                             const ScanOptions& opts);

/// Tiles the map with non-overlapping windows, segments each with surround
/// context from the map itself, and records per-charge isotope detections.
/// Deterministic for fixed params regardless of section count.
DetectionTables scan_map(const LcmsMap& map, const IsoDetectingNet& net,
                         const ScanOptions& opts = {});

void save_tables_tsv(const DetectionTables& tables, const LcmsMap& map, const std::string& path);

}  // namespace isopoint
