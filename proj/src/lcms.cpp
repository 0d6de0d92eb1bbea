#include "isopoint/lcms.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace isopoint {

void LcmsMap::add_scan(double rt) {
    if (!scans_.empty() && rt <= scans_.back().rt)
        throw DataError("scan RT must be strictly increasing (got " + std::to_string(rt) + ")");
    Scan s;
    s.rt = rt;
    scans_.push_back(std::move(s));
}

void LcmsMap::add_point(std::size_t scan_index, double mz, double intensity) {
    if (scan_index >= scans_.size()) throw DataError("scan index out of range");
    if (mz <= 0.0) throw DataError("m/z must be positive");
    if (intensity < 0.0) throw DataError("intensity must be non-negative");
    scans_[scan_index].mz.push_back(mz);
    scans_[scan_index].intensity.push_back(intensity);
}

void LcmsMap::finalize() {
    double lo = std::numeric_limits<double>::max();
    double hi = std::numeric_limits<double>::lowest();
    bool any = false;
    for (auto& s : scans_) {
        const std::size_t n = s.mz.size();
        if (n == 0) continue;
        any = true;
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return s.mz[a] < s.mz[b]; });
        std::vector<double> mz, inten;
        mz.reserve(n);
        inten.reserve(n);
        for (std::size_t k : order) {
            if (!mz.empty() && s.mz[k] == mz.back()) {
                inten.back() += s.intensity[k];  // duplicate m/z: intensities add
            } else {
                mz.push_back(s.mz[k]);
                inten.push_back(s.intensity[k]);
            }
        }
        s.mz = std::move(mz);
        s.intensity = std::move(inten);
        lo = std::min(lo, s.mz.front());
        hi = std::max(hi, s.mz.back());
    }
    if (any && mz_min_ == 0.0 && mz_max_ == 0.0) {
        mz_min_ = lo;
        mz_max_ = hi;
    }
}

std::size_t LcmsMap::num_points() const {
    std::size_t n = 0;
    for (const auto& s : scans_) n += s.size();
    return n;
}

double LcmsMap::max_intensity() const {
    double m = 0.0;
    for (const auto& s : scans_)
        for (double v : s.intensity) m = std::max(m, v);
    return m;
}

double LcmsMap::total_intensity() const {
    double t = 0.0;
    for (const auto& s : scans_)
        for (double v : s.intensity) t += v;
    return t;
}

double LcmsMap::scan_interval() const {
    if (scans_.size() < 2) return 0.0;
    std::vector<double> d;
    d.reserve(scans_.size() - 1);
    for (std::size_t i = 1; i < scans_.size(); ++i) d.push_back(scans_[i].rt - scans_[i - 1].rt);
    std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
    return d[d.size() / 2];
}

namespace {

bool parse_double(const std::string& tok, double& out) {
    const char* begin = tok.data();
    const char* end = begin + tok.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> toks;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) toks.push_back(line.substr(i, j - i));
        i = j;
    }
    return toks;
}

}  // namespace

LcmsMap parse_ms1(std::istream& in) {
    LcmsMap map;
    std::string line;
    std::size_t lineno = 0;
    bool in_scan = false;
    bool rt_set = false;
    double pending_rt = 0.0;
    std::vector<std::pair<double, double>> pending;  // points seen before the I RTime line

    auto flush_scan = [&](std::size_t at_line) {
        if (!in_scan) return;
        if (!rt_set) throw ParseError("scan has no 'I RTime' line", at_line);
        map.add_scan(pending_rt);
        const std::size_t idx = map.num_scans() - 1;
        for (auto& [mz, inten] : pending) map.add_point(idx, mz, inten);
        pending.clear();
        in_scan = false;
        rt_set = false;
    };

    while (std::getline(in, line)) {
        ++lineno;
        auto toks = split_ws(line);
        if (toks.empty()) continue;
        if (toks[0] == "H") continue;
        if (toks[0] == "S") {
            flush_scan(lineno);
            if (toks.size() < 3) throw ParseError("'S' line needs two scan numbers", lineno);
            double dummy;
            if (!parse_double(toks[1], dummy) || !parse_double(toks[2], dummy))
                throw ParseError("non-numeric scan number on 'S' line", lineno);
            in_scan = true;
            continue;
        }
        if (toks[0] == "I") {
            if (toks.size() >= 3 && toks[1] == "RTime") {
                if (!in_scan) throw ParseError("'I RTime' outside a scan", lineno);
                if (!parse_double(toks[2], pending_rt))
                    throw ParseError("non-numeric RTime value", lineno);
                rt_set = true;
            }
            continue;  // other I lines ignored
        }
        // peak line
        if (!in_scan) throw ParseError("peak line outside a scan", lineno);
        if (toks.size() != 2) throw ParseError("peak line must be '<mz> <intensity>'", lineno);
        double mz, inten;
        if (!parse_double(toks[0], mz) || !parse_double(toks[1], inten))
            throw ParseError("non-numeric peak value", lineno);
        if (mz <= 0.0) throw ParseError("non-positive m/z", lineno);
        if (inten < 0.0) throw ParseError("negative intensity", lineno);
        pending.emplace_back(mz, inten);
    }
    flush_scan(lineno + 1);
    map.finalize();
    return map;
}

LcmsMap parse_ms1_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return parse_ms1(in);
}

void serialize_ms1(const LcmsMap& map, std::ostream& out) {
    out << "H\tCreationDate\tisopoint\n";
    char buf[64];
    for (std::size_t i = 0; i < map.num_scans(); ++i) {
        const Scan& s = map.scan(i);
        out << "S\t" << (i + 1) << '\t' << (i + 1) << '\n';
        std::snprintf(buf, sizeof(buf), "%.6f", s.rt);
        out << "I\tRTime\t" << buf << '\n';
        for (std::size_t k = 0; k < s.size(); ++k) {
            std::snprintf(buf, sizeof(buf), "%.4f %.8g", s.mz[k], s.intensity[k]);
            out << buf << '\n';
        }
    }
}

std::string serialize_ms1(const LcmsMap& map) {
    std::ostringstream os;
    serialize_ms1(map, os);
    return os.str();
}

LcmsMap scale_intensities(const LcmsMap& map) {
    const double peak = map.max_intensity();
    if (peak <= 0.0) throw DataError("no signal");
    const double factor = 255.0 / peak;
    LcmsMap out = map;
    for (std::size_t i = 0; i < out.num_scans(); ++i)
        for (double& v : out.scan_mut(i).intensity) v *= factor;
    out.set_intensity_scale(map.intensity_scale() * factor);
    return out;
}

namespace {

// Collects points of [scan_lo, scan_hi) x [mz_lo, mz_lo + span) into a padded region.
RegionPoints cut_region(const LcmsMap& map, int scan_lo, double mz_lo, const WindowGeometry& geom) {
    RegionPoints region;
    const int scan_hi = scan_lo + geom.rt_scans;
    const double mz_hi = mz_lo + geom.mz_span;

    struct Row {
        double rt_off, mz_off, inten;
        int scan;
        std::uint32_t idx;
    };
    std::vector<Row> rows;
    if (scan_hi > 0 && scan_lo < static_cast<int>(map.num_scans())) {
        const int lo = std::max(scan_lo, 0);
        const int hi = std::min<int>(scan_hi, static_cast<int>(map.num_scans()));
        for (int s = lo; s < hi; ++s) {
            const Scan& sc = map.scan(s);
            auto first = std::lower_bound(sc.mz.begin(), sc.mz.end(), mz_lo);
            for (auto it = first; it != sc.mz.end() && *it < mz_hi; ++it) {
                const auto k = static_cast<std::uint32_t>(it - sc.mz.begin());
                // 4-decimal quantization happens here, when coordinates are formed
                rows.push_back({static_cast<double>(s - scan_lo), round4(*it) - mz_lo,
                                sc.intensity[k], s, k});
            }
        }
    }

    if (static_cast<int>(rows.size()) > geom.max_points) {
        // keep the highest-intensity points, then restore scan/mz order
        std::stable_sort(rows.begin(), rows.end(),
                         [](const Row& a, const Row& b) { return a.inten > b.inten; });
        rows.resize(geom.max_points);
        std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
            return a.scan != b.scan ? a.scan < b.scan : a.idx < b.idx;
        });
    }

    region.count = static_cast<int>(rows.size());
    region.pts.assign(geom.max_points, {0.0, 0.0, 0.0});
    region.mask.assign(geom.max_points, 0);
    region.src.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        region.pts[i] = {rows[i].rt_off, rows[i].mz_off, rows[i].inten};
        region.mask[i] = 1;
        region.src.emplace_back(rows[i].scan, rows[i].idx);
    }
    return region;
}

}  // namespace

ScanWindow cut_window(const LcmsMap& map, int scan_index, double mz_start,
                      const WindowGeometry& geom) {
    ScanWindow w;
    w.scan_base = scan_index;
    w.mz_start = mz_start;
    w.target = cut_region(map, scan_index, mz_start, geom);
    w.left = cut_region(map, scan_index, mz_start - geom.mz_span, geom);
    w.right = cut_region(map, scan_index, mz_start + geom.mz_span, geom);
    w.below = cut_region(map, scan_index - geom.rt_scans, mz_start, geom);
    w.above = cut_region(map, scan_index + geom.rt_scans, mz_start, geom);
    w.labels.assign(geom.max_points, 0);
    return w;
}

}  // namespace isopoint
