#include "isopoint/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace isopoint {

namespace {

// Elution profiles are cut where intensity falls below 1% of the isotope peak:
// |rt - peak| <= sigma * sqrt(2 ln 100)
constexpr double kProfileCut = 3.0348542587702925;  // sqrt(2 ln 100)

void deposit(LcmsMap& map, std::size_t scan_index, double mz, double intensity) {
    Scan& s = map.scan_mut(scan_index);
    auto it = std::lower_bound(s.mz.begin(), s.mz.end(), mz);
    const auto pos = it - s.mz.begin();
    if (it != s.mz.end() && *it == mz) {
        s.intensity[pos] += intensity;  // overlapping signals add
    } else {
        s.mz.insert(it, mz);
        s.intensity.insert(s.intensity.begin() + pos, intensity);
    }
}

// Gaussian trace of one isotope at a fixed m/z bin; returns the realized scan
// range and accumulates the deposited raw intensity into `auc`.
RtRange render_trace(LcmsMap& map, double mz, double peak_rt, double sigma, double peak_intensity,
                     double* auc) {
    RtRange range;
    range.scan_start = 0;
    range.scan_end = -1;
    const double half_width = kProfileCut * sigma;
    for (std::size_t s = 0; s < map.num_scans(); ++s) {
        const double dt = map.scan(s).rt - peak_rt;
        if (dt < -half_width) continue;
        if (dt > half_width) break;
        const double v = peak_intensity * std::exp(-dt * dt / (2.0 * sigma * sigma));
        deposit(map, s, mz, v);
        if (auc) *auc += v;
        if (range.empty()) range.scan_start = static_cast<int>(s);
        range.scan_end = static_cast<int>(s);
    }
    return range;
}

}  // namespace

double isotope_spacing(int charge, bool paper_z8) {
    if (charge < 1 || charge > 9) throw DataError("charge must be in [1, 9]");
    static constexpr double kListed[7] = {1.00, 0.5, 0.33, 0.25, 0.17, 0.14, 0.13};
    if (charge <= 7) return kListed[charge - 1];
    if (charge == 8 && paper_z8) return 0.19;
    return 1.0 / charge;
}

std::vector<RtRange> render_feature(const FeatureSpec& spec, LcmsMap& map, bool paper_z8) {
    if (spec.num_isotopes < 2) throw DataError("a feature needs at least 2 isotopes");
    const double spacing = isotope_spacing(spec.charge, paper_z8);
    std::vector<RtRange> ranges;
    ranges.reserve(spec.num_isotopes);
    for (int k = 0; k < spec.num_isotopes; ++k) {
        const double env = k < static_cast<int>(spec.isotope_envelope.size())
                               ? spec.isotope_envelope[k]
                               : 0.0;
        if (env <= 0.0) throw DataError("isotope envelope must be positive for every isotope");
        const double mz = round4(spec.mono_mz + k * spacing);
        ranges.push_back(
            render_trace(map, mz, spec.peak_rt, spec.rt_sigma, env * spec.peak_intensity, nullptr));
    }
    return ranges;
}

namespace {

struct OccupiedBin {
    double mz;
    RtRange range;
};

bool collides(const std::vector<OccupiedBin>& occupied, double mz, const RtRange& range,
              double min_gap) {
    for (const auto& b : occupied)
        if (std::abs(b.mz - mz) < min_gap && b.range.overlaps(range)) return true;
    return false;
}

RtRange profile_range(const LcmsMap& map, double peak_rt, double sigma) {
    RtRange r;
    r.scan_start = 0;
    r.scan_end = -1;
    const double half = kProfileCut * sigma;
    for (std::size_t s = 0; s < map.num_scans(); ++s) {
        const double dt = map.scan(s).rt - peak_rt;
        if (dt < -half) continue;
        if (dt > half) break;
        if (r.empty()) r.scan_start = static_cast<int>(s);
        r.scan_end = static_cast<int>(s);
    }
    return r;
}

}  // namespace

std::pair<LcmsMap, GroundTruth> generate_map(const SynthConfig& cfg) {
    if (cfg.mz_max <= cfg.mz_min || cfg.rt_max <= cfg.rt_min || cfg.scan_interval <= 0.0)
        throw DataError("invalid map extent");
    Rng rng(cfg.seed);

    LcmsMap map;
    const int num_scans = static_cast<int>((cfg.rt_max - cfg.rt_min) / cfg.scan_interval) + 1;
    for (int s = 0; s < num_scans; ++s) map.add_scan(cfg.rt_min + s * cfg.scan_interval);
    map.set_mz_extent(cfg.mz_min, cfg.mz_max);

    GroundTruth truth;
    std::vector<OccupiedBin> occupied;

    // cumulative charge distribution
    std::array<double, 9> cum{};
    double total = 0.0;
    for (int z = 0; z < 9; ++z) total += cfg.charge_mix[z];
    if (total <= 0.0) throw DataError("charge mix must have positive mass");
    double acc = 0.0;
    for (int z = 0; z < 9; ++z) {
        acc += cfg.charge_mix[z] / total;
        cum[z] = acc;
    }

    for (int f = 0; f < cfg.num_features; ++f) {
        bool placed = false;
        for (int attempt = 0; attempt < cfg.max_placement_tries && !placed; ++attempt) {
            FeatureSpec spec;
            const double u = rng.uniform();
            spec.charge = 9;
            for (int z = 0; z < 9; ++z)
                if (u <= cum[z]) { spec.charge = z + 1; break; }
            spec.num_isotopes =
                static_cast<int>(rng.uniform_int(cfg.min_isotopes, cfg.max_isotopes));
            spec.rt_sigma = rng.uniform(cfg.rt_sigma_min, cfg.rt_sigma_max);
            spec.peak_intensity = rng.uniform(cfg.peak_intensity_min, cfg.peak_intensity_max);
            spec.isotope_envelope.resize(spec.num_isotopes);
            double env = 1.0;
            for (int k = 0; k < spec.num_isotopes; ++k, env *= cfg.envelope_ratio)
                spec.isotope_envelope[k] = env;

            const double spacing = isotope_spacing(spec.charge, cfg.paper_z8_spacing);
            const double extent = (spec.num_isotopes - 1) * spacing;
            const double mz_lo = cfg.mz_min + 0.05;
            const double mz_hi = cfg.mz_max - extent - 0.05;
            const double rt_margin = kProfileCut * spec.rt_sigma;
            const double rt_lo = cfg.rt_min + rt_margin;
            const double rt_hi = cfg.rt_max - rt_margin;
            if (mz_hi <= mz_lo || rt_hi <= rt_lo)
                throw DataError("infeasible feature density: feature does not fit map bounds");
            spec.mono_mz = round4(rng.uniform(mz_lo, mz_hi));
            spec.peak_rt = rng.uniform(rt_lo, rt_hi);

            const RtRange est = profile_range(map, spec.peak_rt, spec.rt_sigma);
            if (est.empty()) continue;
            bool clash = false;
            for (int k = 0; k < spec.num_isotopes && !clash; ++k)
                clash = collides(occupied, round4(spec.mono_mz + k * spacing), est, cfg.min_mz_gap);
            if (clash) continue;

            TruthFeature tf;
            tf.spec = spec;
            tf.auc = 0.0;
            for (int k = 0; k < spec.num_isotopes; ++k) {
                const double mz = round4(spec.mono_mz + k * spacing);
                tf.isotope_ranges.push_back(render_trace(
                    map, mz, spec.peak_rt, spec.rt_sigma,
                    spec.isotope_envelope[k] * spec.peak_intensity, &tf.auc));
                occupied.push_back({mz, tf.isotope_ranges.back()});
            }
            truth.features.push_back(std::move(tf));
            placed = true;
        }
        if (!placed)
            throw DataError("infeasible feature density: could not place feature " +
                            std::to_string(f));
    }

    // uniform point noise
    const double area = (cfg.mz_max - cfg.mz_min) * (cfg.rt_max - cfg.rt_min);
    const int noise_points = static_cast<int>(cfg.noise_density * area);
    for (int i = 0; i < noise_points; ++i) {
        const auto scan = static_cast<std::size_t>(rng.uniform_int(0, num_scans - 1));
        const double mz = round4(rng.uniform(cfg.mz_min, cfg.mz_max));
        deposit(map, scan, mz, rng.uniform(1.0, cfg.noise_intensity_max));
    }

    // feature-like decoys at three difficulty levels
    for (int d = 0; d < cfg.num_decoys; ++d) {
        Decoy decoy;
        decoy.kind = static_cast<DecoyKind>(d % 3);
        bool placed = false;
        for (int attempt = 0; attempt < cfg.max_placement_tries && !placed; ++attempt) {
            double mz, rt;
            if (!truth.features.empty() && rng.uniform() < cfg.decoy_near_feature_prob) {
                const auto& nb =
                    truth.features[static_cast<std::size_t>(
                        rng.uniform_int(0, static_cast<std::int64_t>(truth.features.size()) - 1))];
                const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
                mz = nb.spec.mono_mz + side * rng.uniform(0.3, 0.9);
                rt = nb.spec.peak_rt + rng.uniform(-0.5, 0.5);
            } else {
                mz = rng.uniform(cfg.mz_min + 0.1, cfg.mz_max - 0.9);
                rt = rng.uniform(cfg.rt_min + 1.0, cfg.rt_max - 1.0);
            }
            mz = round4(mz);
            if (mz < cfg.mz_min + 0.05 || mz > cfg.mz_max - 0.9) continue;
            if (rt < cfg.rt_min + 0.7 || rt > cfg.rt_max - 0.7) continue;
            const double sigma = rng.uniform(cfg.rt_sigma_min, cfg.rt_sigma_max);
            const RtRange est = profile_range(map, rt, sigma);
            if (est.empty() || collides(occupied, mz, est, cfg.min_mz_gap)) continue;

            switch (decoy.kind) {
                case DecoyKind::Speckle: {
                    const int n = static_cast<int>(rng.uniform_int(12, 24));
                    for (int i = 0; i < n; ++i) {
                        const int s = nearest_scan(map, rt + rng.uniform(-0.4, 0.4));
                        deposit(map, static_cast<std::size_t>(s),
                                round4(mz + rng.uniform(0.0, 0.15)), rng.uniform(5.0, 60.0));
                    }
                    break;
                }
                case DecoyKind::SingleTrace:
                    render_trace(map, mz, rt, sigma, rng.uniform(40.0, 150.0), nullptr);
                    break;
                case DecoyKind::WrongSpacingDoublet: {
                    static constexpr double kBadSpacing[3] = {0.41, 0.44, 0.72};
                    const double gap = kBadSpacing[rng.uniform_int(0, 2)];
                    const double h = rng.uniform(40.0, 150.0);
                    render_trace(map, mz, rt, sigma, h, nullptr);
                    render_trace(map, round4(mz + gap), rt, sigma, 0.8 * h, nullptr);
                    break;
                }
            }
            occupied.push_back({mz, est});
            decoy.mz = mz;
            decoy.peak_rt = rt;
            truth.decoys.push_back(decoy);
            placed = true;
        }
        // decoys that fail placement are silently dropped; they are noise anyway
    }

    map.finalize();
    return {std::move(map), std::move(truth)};
}

int nearest_scan(const LcmsMap& map, double rt_minutes) {
    if (map.num_scans() == 0) return 0;
    int lo = 0, hi = static_cast<int>(map.num_scans()) - 1;
    while (lo < hi) {
        const int mid = (lo + hi) / 2;
        if (map.scan(static_cast<std::size_t>(mid)).rt < rt_minutes)
            lo = mid + 1;
        else
            hi = mid;
    }
    if (lo > 0 && std::abs(map.scan(static_cast<std::size_t>(lo - 1)).rt - rt_minutes) <=
                      std::abs(map.scan(static_cast<std::size_t>(lo)).rt - rt_minutes))
        return lo - 1;
    return lo;
}

void save_truth_tsv(const GroundTruth& truth, const LcmsMap& map, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "# mono_mz\tcharge\tnum_isotopes\tpeak_rt\tisotope_rt_ranges\tauc\n";
    char buf[128];
    for (const auto& f : truth.features) {
        std::snprintf(buf, sizeof(buf), "%.4f\t%d\t%d\t%.6f\t", f.spec.mono_mz, f.spec.charge,
                      f.spec.num_isotopes, f.spec.peak_rt);
        out << buf;
        for (std::size_t k = 0; k < f.isotope_ranges.size(); ++k) {
            const auto& r = f.isotope_ranges[k];
            const double lo = r.empty() ? 0.0 : map.scan(static_cast<std::size_t>(r.scan_start)).rt;
            const double hi = r.empty() ? 0.0 : map.scan(static_cast<std::size_t>(r.scan_end)).rt;
            std::snprintf(buf, sizeof(buf), "%s%.6f:%.6f", k ? ";" : "", lo, hi);
            out << buf;
        }
        std::snprintf(buf, sizeof(buf), "\t%.6f\n", f.auc);
        out << buf;
    }
    for (const auto& d : truth.decoys) {
        std::snprintf(buf, sizeof(buf), "#decoy\t%d\t%.4f\t%.6f\n", static_cast<int>(d.kind), d.mz,
                      d.peak_rt);
        out << buf;
    }
}

GroundTruth load_truth_tsv(const std::string& path, const LcmsMap& map) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    GroundTruth truth;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line.rfind("#decoy\t", 0) == 0) {
            Decoy d;
            int kind;
            if (std::sscanf(line.c_str(), "#decoy\t%d\t%lf\t%lf", &kind, &d.mz, &d.peak_rt) != 3)
                throw ParseError("malformed decoy line", lineno);
            d.kind = static_cast<DecoyKind>(kind);
            truth.decoys.push_back(d);
            continue;
        }
        if (line[0] == '#') continue;
        std::istringstream ss(line);
        TruthFeature f;
        std::string ranges;
        if (!(ss >> f.spec.mono_mz >> f.spec.charge >> f.spec.num_isotopes >> f.spec.peak_rt >>
              ranges >> f.auc))
            throw ParseError("malformed truth row", lineno);
        std::istringstream rs(ranges);
        std::string tok;
        while (std::getline(rs, tok, ';')) {
            double lo, hi;
            if (std::sscanf(tok.c_str(), "%lf:%lf", &lo, &hi) != 2)
                throw ParseError("malformed RT range '" + tok + "'", lineno);
            RtRange r;
            r.scan_start = nearest_scan(map, lo);
            r.scan_end = nearest_scan(map, hi);
            f.isotope_ranges.push_back(r);
        }
        if (static_cast<int>(f.isotope_ranges.size()) != f.spec.num_isotopes)
            throw ParseError("isotope count does not match RT ranges", lineno);
        truth.features.push_back(std::move(f));
    }
    return truth;
}

}  // namespace isopoint
