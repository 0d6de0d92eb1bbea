#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "isopoint/common.hpp"
#include "isopoint/lcms.hpp"

namespace isopoint {

/// Parameters of one planted peptide feature.
struct FeatureSpec {
    double mono_mz = 0.0;   // Th, 4-decimal
    int charge = 2;         // 1-9
    int num_isotopes = 2;   // >= 2
    double peak_rt = 0.0;   // minutes (Gaussian center)
    double rt_sigma = 0.1;  // minutes
    std::vector<double> isotope_envelope;  // relative heights, first typically max
    double peak_intensity = 100.0;         // raw units
};

struct RtRange {
    int scan_start = 0;  // inclusive
    int scan_end = -1;   // inclusive; end < start means empty
    bool empty() const { return scan_end < scan_start; }
    int num_scans() const { return empty() ? 0 : scan_end - scan_start + 1; }
    bool overlaps(const RtRange& o) const {
        return !empty() && !o.empty() && scan_start <= o.scan_end && o.scan_start <= scan_end;
    }
};

/// A planted feature together with its realized per-isotope scan ranges and AUC.
struct TruthFeature {
    FeatureSpec spec;
    std::vector<RtRange> isotope_ranges;  // one per isotope
    double auc = 0.0;                     // discrete sum of raw rendered intensities
};

enum class DecoyKind { Speckle = 0, SingleTrace = 1, WrongSpacingDoublet = 2 };

struct Decoy {
    DecoyKind kind = DecoyKind::SingleTrace;
    double mz = 0.0;      // location of the (first) trace
    double peak_rt = 0.0; // minutes
};

/// Labels for a generated map: planted features plus decoy locations.
struct GroundTruth {
    std::vector<TruthFeature> features;
    std::vector<Decoy> decoys;
};

struct SynthConfig {
    double mz_min = 400.0, mz_max = 420.0;   // Th
    double rt_min = 0.0, rt_max = 15.0;      // minutes
    double scan_interval = 0.05;             // minutes between scans

    int num_features = 200;
    // default charge mix follows the benchmark class distribution (z=2 dominant)
    std::array<double, 9> charge_mix = {163038, 863050, 428909, 29183, 1503, 653, 179, 236, 233};
    int min_isotopes = 2, max_isotopes = 6;
    double rt_sigma_min = 0.08, rt_sigma_max = 0.22;
    double peak_intensity_min = 60.0, peak_intensity_max = 250.0;
    double envelope_ratio = 0.7;  // geometric decay of isotope heights

    double noise_density = 8.0;        // points per (Th x minute)
    double noise_intensity_max = 40.0; // raw units
    int num_decoys = 20;
    double decoy_near_feature_prob = 0.7;  // feature-like noise sits close to real signal

    // placement: reject a candidate whose isotope bins come this close in m/z
    // to an existing isotope with overlapping RT
    double min_mz_gap = 0.03;
    int max_placement_tries = 200;

    bool paper_z8_spacing = false;  // honor the anomalous 0.19 Th listed for z=8
    std::uint64_t seed = 1;
};

/// Per-charge isotope spacing in Th. Charges 1-7 use the published list
/// (1.00, 0.5, 0.33, 0.25, 0.17, 0.14, 0.13); 8 and 9 fall back to 1/z unless
/// paper_z8 asks for the listed 0.19 at z=8. Throws DataError outside [1, 9].
double isotope_spacing(int charge, bool paper_z8 = false);

/// Renders the feature's isotopes as Gaussian elution profiles into the map
/// (intensities add where signals overlap) and returns the per-isotope scan
/// ranges, truncated where intensity drops below 1% of that isotope's peak.
std::vector<RtRange> render_feature(const FeatureSpec& spec, LcmsMap& map,
                                    bool paper_z8 = false);

/// Generates a synthetic map with planted features, point noise, and decoys.
/// Deterministic for a fixed config (including seed).
/// Throws DataError when features cannot be placed within bounds.
std::pair<LcmsMap, GroundTruth> generate_map(const SynthConfig& config);

/// TSV round-trip of the ground truth: one row per feature -- mono_mz, charge,
/// num_isotopes, peak_rt, per-isotope rt_start:rt_end (minutes, semicolon
/// joined), total AUC. Decoys ride along as '#decoy' comment lines.
void save_truth_tsv(const GroundTruth& truth, const LcmsMap& map, const std::string& path);
GroundTruth load_truth_tsv(const std::string& path, const LcmsMap& map);

/// Scan index whose RT is nearest to `rt_minutes`.
int nearest_scan(const LcmsMap& map, double rt_minutes);

}  // namespace isopoint
