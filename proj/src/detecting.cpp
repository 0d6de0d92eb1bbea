#include "isopoint/detecting.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "isopoint/checkpoint.hpp"

namespace isopoint {

using ag::Tensor;

namespace {

std::string join_widths(const std::vector<int>& w) {
    std::string s;
    for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
    return s;
}

std::vector<int> parse_widths(const std::string& s) {
    std::vector<int> out;
    std::istringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
    return out;
}

void build_mlp(ag::ParamStore& params, const std::string& prefix, int in,
               const std::vector<int>& widths, Rng& rng) {
    for (std::size_t i = 0; i < widths.size(); ++i) {
        params.create(prefix + std::to_string(i) + ".w", {in, widths[i]}, ag::Init::HeUniform, rng);
        params.create(prefix + std::to_string(i) + ".b", {widths[i]}, ag::Init::Zero, rng);
        in = widths[i];
    }
}

Tensor run_mlp(const ag::ParamStore& params, const std::string& prefix, std::size_t layers,
               Tensor x) {
    for (std::size_t i = 0; i < layers; ++i) {
        const std::string n = prefix + std::to_string(i);
        x = ag::relu(ag::add(ag::matmul(x, params.get(n + ".w")), params.get(n + ".b")));
    }
    return x;
}

}  // namespace

Tensor surround_attention(const Tensor& target_pf, const Tensor& region_pf, const Tensor& W) {
    const int n_t = target_pf.dim(0);
    const int d = target_pf.dim(1);
    if (!region_pf.defined() || region_pf.dim(0) == 0) return Tensor::zeros({n_t, d});
    Tensor scores = ag::matmul(target_pf, ag::transpose(region_pf));
    Tensor impact = ag::softmax(scores, 1);
    Tensor filtered = ag::matmul(impact, region_pf);
    return ag::matmul(filtered, W);
}

IsoDetectingNet::IsoDetectingNet(DetectingConfig config, std::uint64_t seed)
    : cfg_(std::move(config)) {
    Rng rng(seed ^ 0x15f0d4b4c2a1e3ULL);
    const int d = cfg_.feature_dim();
    build_mlp(params_, "local", 3, cfg_.local_widths, rng);
    build_mlp(params_, "global", cfg_.local_widths.back(), cfg_.global_widths, rng);
    build_mlp(params_, "point", cfg_.local_widths.back() + cfg_.global_widths.back(),
              cfg_.point_widths, rng);
    for (const char* region : {"left", "right", "below", "above"})
        params_.create(std::string("attn.") + region, {d, d}, ag::Init::HeUniform, rng);
    build_mlp(params_, "out", d, cfg_.output_widths, rng);
    params_.create("logits.w", {cfg_.output_widths.back(), cfg_.num_classes}, ag::Init::HeUniform,
                   rng);
    params_.create("logits.b", {cfg_.num_classes}, ag::Init::Zero, rng);
}

Tensor IsoDetectingNet::point_features(const RegionPoints& region) const {
    const int d = cfg_.feature_dim();
    const int n = region.count;
    if (n == 0) return Tensor::zeros({0, d});

    const double rt_norm = cfg_.geom.rt_scans > 1 ? 1.0 / (cfg_.geom.rt_scans - 1) : 1.0;
    const double mz_norm = 1.0 / cfg_.geom.mz_span;
    std::vector<double> x;
    x.reserve(static_cast<std::size_t>(n) * 3);
    for (int i = 0; i < n; ++i) {
        const auto& p = region.pts[static_cast<std::size_t>(i)];
        x.push_back(p[0] * rt_norm);
        x.push_back(p[1] * mz_norm);
        x.push_back(p[2] / 255.0);
    }
    Tensor local = run_mlp(params_, "local", cfg_.local_widths.size(), Tensor::from({n, 3}, x));
    Tensor global = run_mlp(params_, "global", cfg_.global_widths.size(), local);
    Tensor pooled = ag::reduce_max(global, 0);
    Tensor joined = ag::concat({local, ag::repeat_rows(pooled, n)}, 1);
    return run_mlp(params_, "point", cfg_.point_widths.size(), joined);
}

SegmentResult IsoDetectingNet::segment_window(const ScanWindow& window, bool use_surrounds) const {
    const int c = cfg_.num_classes;
    const int pad = cfg_.geom.max_points;
    SegmentResult result;
    result.labels.assign(static_cast<std::size_t>(pad), 0);
    result.probs.assign(static_cast<std::size_t>(pad) * c, 0.0);
    for (int i = 0; i < pad; ++i) result.probs[static_cast<std::size_t>(i) * c] = 1.0;
    result.n_valid = window.target.count;
    if (window.target.count == 0) return result;

    Tensor target_pf = point_features(window.target);
    Tensor diffused = target_pf;
    if (use_surrounds) {
        const std::pair<const RegionPoints*, const char*> regions[4] = {
            {&window.left, "left"}, {&window.right, "right"},
            {&window.below, "below"}, {&window.above, "above"}};
        for (const auto& [region, name] : regions) {
            if (region->count == 0) continue;
            Tensor region_pf = point_features(*region);
            diffused = ag::add(
                diffused, surround_attention(target_pf, region_pf,
                                             params_.get(std::string("attn.") + name)));
        }
    }
    Tensor hidden = run_mlp(params_, "out", cfg_.output_widths.size(), diffused);
    result.logits = ag::add(ag::matmul(hidden, params_.get("logits.w")), params_.get("logits.b"));
    Tensor probs = ag::softmax(result.logits, 1);

    const int n = window.target.count;
    for (int i = 0; i < n; ++i) {
        const double* row = probs.values().data() + static_cast<std::ptrdiff_t>(i) * c;
        int best = 0;
        for (int j = 1; j < c; ++j)
            if (row[j] > row[best]) best = j;
        result.labels[static_cast<std::size_t>(i)] = best;
        std::copy(row, row + c, result.probs.begin() + static_cast<std::ptrdiff_t>(i) * c);
    }
    return result;
}

void IsoDetectingNet::save_checkpoint(const std::string& path) const {
    ag::Checkpoint ckpt;
    ckpt.module = "detecting";
    ckpt.meta["mz_span"] = std::to_string(cfg_.geom.mz_span);
    ckpt.meta["rt_scans"] = std::to_string(cfg_.geom.rt_scans);
    ckpt.meta["max_points"] = std::to_string(cfg_.geom.max_points);
    ckpt.meta["num_classes"] = std::to_string(cfg_.num_classes);
    ckpt.meta["local_widths"] = join_widths(cfg_.local_widths);
    ckpt.meta["global_widths"] = join_widths(cfg_.global_widths);
    ckpt.meta["point_widths"] = join_widths(cfg_.point_widths);
    ckpt.meta["output_widths"] = join_widths(cfg_.output_widths);
    ckpt.save(params_, path);
}

IsoDetectingNet IsoDetectingNet::from_checkpoint(const std::string& path) {
    ag::Checkpoint ckpt = ag::Checkpoint::peek(path);
    if (ckpt.module != "detecting")
        throw DataError(path + " is a '" + ckpt.module + "' checkpoint, expected 'detecting'");
    DetectingConfig cfg;
    try {
        cfg.geom.mz_span = std::stod(ckpt.meta.at("mz_span"));
        cfg.geom.rt_scans = std::stoi(ckpt.meta.at("rt_scans"));
        cfg.geom.max_points = std::stoi(ckpt.meta.at("max_points"));
        cfg.num_classes = std::stoi(ckpt.meta.at("num_classes"));
        cfg.local_widths = parse_widths(ckpt.meta.at("local_widths"));
        cfg.global_widths = parse_widths(ckpt.meta.at("global_widths"));
        cfg.point_widths = parse_widths(ckpt.meta.at("point_widths"));
        cfg.output_widths = parse_widths(ckpt.meta.at("output_widths"));
    } catch (const std::exception&) {
        throw DataError("checkpoint " + path + " has incomplete architecture metadata");
    }
    IsoDetectingNet net(cfg, 0);
    ag::Checkpoint loader;
    loader.load_into(net.params_, path);
    return net;
}

// ---- detection recording ----------------------------------------------------

int DetectionEntry::peak_scan() const {
    int best = 0;
    for (std::size_t i = 1; i < scan_intensity.size(); ++i)
        if (scan_intensity[i] > scan_intensity[static_cast<std::size_t>(best)])
            best = static_cast<int>(i);
    return scan_start + best;
}

std::size_t DetectionTables::total_entries() const {
    std::size_t n = 0;
    for (const auto& t : by_charge) n += t.size();
    return n;
}

double weighted_mz(const std::vector<std::pair<double, double>>& bins) {
    if (bins.empty()) throw DataError("weighted_mz: no bins");
    double num = 0.0, den = 0.0;
    for (const auto& [mz, inten] : bins) {
        if (inten <= 0.0) continue;
        num += mz * inten;
        den += inten;
    }
    if (den <= 0.0) throw DataError("weighted_mz: no intensity");
    return round4(num / den);
}

namespace {

struct ChargePoint {
    double mz;
    int scan;
    double intensity;
};

std::vector<DetectionEntry> detect_runs(std::vector<ChargePoint> pts, const ScanOptions& opts) {
    std::vector<DetectionEntry> out;
    if (pts.empty()) return out;
    std::sort(pts.begin(), pts.end(), [](const ChargePoint& a, const ChargePoint& b) {
        return a.mz != b.mz ? a.mz < b.mz : a.scan < b.scan;
    });
    // group adjacent m/z bins belonging to one isotope
    std::size_t group_begin = 0;
    for (std::size_t i = 1; i <= pts.size(); ++i) {
        if (i < pts.size() && pts[i].mz - pts[i - 1].mz <= opts.collapse_mz_tol) continue;
        // [group_begin, i) is one m/z group; split it into scan runs
        std::vector<ChargePoint> group(pts.begin() + static_cast<std::ptrdiff_t>(group_begin),
                                       pts.begin() + static_cast<std::ptrdiff_t>(i));
        std::sort(group.begin(), group.end(), [](const ChargePoint& a, const ChargePoint& b) {
            return a.scan != b.scan ? a.scan < b.scan : a.mz < b.mz;
        });
        std::size_t run_begin = 0;
        for (std::size_t j = 1; j <= group.size(); ++j) {
            if (j < group.size() && group[j].scan - group[j - 1].scan <= opts.max_scan_gap + 1)
                continue;
            DetectionEntry entry;
            entry.scan_start = group[run_begin].scan;
            entry.scan_end = group[j - 1].scan;
            entry.scan_intensity.assign(
                static_cast<std::size_t>(entry.scan_end - entry.scan_start + 1), 0.0);
            std::vector<std::pair<double, double>> bins;
            for (std::size_t k = run_begin; k < j; ++k) {
                entry.scan_intensity[static_cast<std::size_t>(group[k].scan - entry.scan_start)] +=
                    group[k].intensity;
                bins.emplace_back(group[k].mz, group[k].intensity);
            }
            entry.mz = weighted_mz(bins);
            out.push_back(std::move(entry));
            run_begin = j;
        }
        group_begin = i;
    }
    return out;
}

}  // namespace

std::array<std::vector<DetectionEntry>, 9> record_window_detections(
    const LcmsMap& map, const ScanWindow& window, const std::vector<int>& labels,
    const ScanOptions& opts) {
    std::array<std::vector<ChargePoint>, 9> pts;
    for (int i = 0; i < window.target.count; ++i) {
        const int z = labels[static_cast<std::size_t>(i)];
        if (z < 1 || z > 9) continue;
        const auto& [scan, idx] = window.target.src[static_cast<std::size_t>(i)];
        const Scan& s = map.scan(static_cast<std::size_t>(scan));
        pts[static_cast<std::size_t>(z - 1)].push_back(
            {s.mz[idx], scan, s.intensity[idx]});
    }
    std::array<std::vector<DetectionEntry>, 9> out;
    for (int z = 0; z < 9; ++z)
        out[static_cast<std::size_t>(z)] =
            detect_runs(std::move(pts[static_cast<std::size_t>(z)]), opts);
    return out;
}

namespace {

bool ranges_touch(const DetectionEntry& a, const DetectionEntry& b, int max_gap) {
    const int gap_ab = b.scan_start - a.scan_end - 1;
    const int gap_ba = a.scan_start - b.scan_end - 1;
    return gap_ab <= max_gap && gap_ba <= max_gap;
}

void absorb(DetectionEntry& into, const DetectionEntry& other) {
    const double w_into = into.total_intensity();
    const double w_other = other.total_intensity();
    const int lo = std::min(into.scan_start, other.scan_start);
    const int hi = std::max(into.scan_end, other.scan_end);
    std::vector<double> merged(static_cast<std::size_t>(hi - lo + 1), 0.0);
    for (int s = into.scan_start; s <= into.scan_end; ++s)
        merged[static_cast<std::size_t>(s - lo)] +=
            into.scan_intensity[static_cast<std::size_t>(s - into.scan_start)];
    for (int s = other.scan_start; s <= other.scan_end; ++s)
        merged[static_cast<std::size_t>(s - lo)] +=
            other.scan_intensity[static_cast<std::size_t>(s - other.scan_start)];
    if (w_into + w_other > 0.0)
        into.mz = (into.mz * w_into + other.mz * w_other) / (w_into + w_other);
    into.scan_start = lo;
    into.scan_end = hi;
    into.scan_intensity = std::move(merged);
}

}  // namespace

std::vector<DetectionEntry> merge_detections(std::vector<DetectionEntry> entries,
                                             const ScanOptions& opts) {
    bool changed = true;
    while (changed) {
        changed = false;
        std::sort(entries.begin(), entries.end(), [](const DetectionEntry& a, const DetectionEntry& b) {
            return a.mz != b.mz ? a.mz < b.mz : a.scan_start < b.scan_start;
        });
        std::vector<DetectionEntry> merged;
        for (auto& e : entries) {
            bool absorbed = false;
            for (auto it = merged.rbegin(); it != merged.rend(); ++it) {
                if (e.mz - it->mz > opts.merge_mz_tol) break;  // merged is mz-sorted
                if (ranges_touch(*it, e, opts.max_scan_gap)) {
                    absorb(*it, e);
                    absorbed = true;
                    changed = true;
                    break;
                }
            }
            if (!absorbed) merged.push_back(std::move(e));
        }
        entries = std::move(merged);
    }
    for (auto& e : entries) e.mz = round4(e.mz);
    std::sort(entries.begin(), entries.end(), [](const DetectionEntry& a, const DetectionEntry& b) {
        return a.mz != b.mz ? a.mz < b.mz : a.scan_start < b.scan_start;
    });
    return entries;
}

DetectionTables scan_map(const LcmsMap& map, const IsoDetectingNet& net, const ScanOptions& opts) {
    DetectionTables tables;
    if (map.num_scans() == 0 || map.num_points() == 0) return tables;
    const WindowGeometry& geom = net.config().geom;
    const int cols =
        static_cast<int>(std::floor((map.mz_max() - map.mz_min()) / geom.mz_span)) + 1;
    const int rows = (static_cast<int>(map.num_scans()) + geom.rt_scans - 1) / geom.rt_scans;

    const int sections = std::max(1, std::min(opts.sections, cols));
    std::vector<std::array<std::vector<DetectionEntry>, 9>> section_out(
        static_cast<std::size_t>(sections));

    auto run_section = [&](int sec) {
        const int col_begin = static_cast<int>(static_cast<std::int64_t>(sec) * cols / sections);
        const int col_end = static_cast<int>(static_cast<std::int64_t>(sec + 1) * cols / sections);
        auto& out = section_out[static_cast<std::size_t>(sec)];
        for (int col = col_begin; col < col_end; ++col) {
            const double mz_start = map.mz_min() + col * geom.mz_span;
            for (int row = 0; row < rows; ++row) {
                ScanWindow w = cut_window(map, row * geom.rt_scans, mz_start, geom);
                if (w.target.count == 0) continue;
                SegmentResult seg = net.segment_window(w, opts.use_surrounds);
                auto found = record_window_detections(map, w, seg.labels, opts);
                for (int z = 0; z < 9; ++z)
                    for (auto& e : found[static_cast<std::size_t>(z)])
                        out[static_cast<std::size_t>(z)].push_back(std::move(e));
            }
        }
    };

    if (sections == 1) {
        run_section(0);
    } else {
        std::vector<std::thread> workers;
        workers.reserve(static_cast<std::size_t>(sections));
        for (int sec = 0; sec < sections; ++sec) workers.emplace_back(run_section, sec);
        for (auto& t : workers) t.join();
    }

    for (int z = 0; z < 9; ++z) {
        std::vector<DetectionEntry> all;
        for (int sec = 0; sec < sections; ++sec)
            for (auto& e : section_out[static_cast<std::size_t>(sec)][static_cast<std::size_t>(z)])
                all.push_back(std::move(e));
        tables.by_charge[static_cast<std::size_t>(z)] = merge_detections(std::move(all), opts);
    }
    return tables;
}

void save_tables_tsv(const DetectionTables& tables, const LcmsMap& map, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "# charge\tisotope_mz\trt_start\trt_end\tscan_intensities\n";
    char buf[128];
    for (int z = 1; z <= 9; ++z) {
        for (const auto& e : tables.charge(z)) {
            std::snprintf(buf, sizeof(buf), "%d\t%.4f\t%.6f\t%.6f\t", z, e.mz,
                          map.scan(static_cast<std::size_t>(e.scan_start)).rt,
                          map.scan(static_cast<std::size_t>(e.scan_end)).rt);
            out << buf;
            for (std::size_t i = 0; i < e.scan_intensity.size(); ++i) {
                std::snprintf(buf, sizeof(buf), "%s%.6g", i ? ";" : "", e.scan_intensity[i]);
                out << buf;
            }
            out << '\n';
        }
    }
}

}  // namespace isopoint
