#include "isopoint/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

namespace isopoint::ag {

using nlohmann::json;

void Checkpoint::save(const ParamStore& params, const std::string& path) const {
    json j;
    j["format"] = "isopoint-checkpoint";
    j["version"] = kFormatVersion;
    j["module"] = module;
    j["meta"] = meta;
    json plist = json::array();
    for (const auto& [name, t] : params.entries()) {
        json p;
        p["name"] = name;
        p["shape"] = t.shape();
        p["values"] = t.values();
        plist.push_back(std::move(p));
    }
    j["params"] = std::move(plist);
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump();
}

namespace {

json read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("checkpoint " + path + " is not valid JSON: " + e.what());
    }
    if (j.value("format", "") != "isopoint-checkpoint")
        throw DataError(path + " is not an isopoint checkpoint");
    if (j.value("version", 0) != Checkpoint::kFormatVersion)
        throw DataError("unsupported checkpoint version in " + path);
    return j;
}

}  // namespace

void Checkpoint::load_into(ParamStore& params, const std::string& path) {
    json j = read_manifest(path);
    module = j.value("module", "");
    meta.clear();
    for (auto& [k, v] : j["meta"].items()) meta[k] = v.get<std::string>();

    std::size_t matched = 0;
    for (auto& p : j["params"]) {
        const std::string name = p["name"].get<std::string>();
        if (!params.has(name)) throw DataError("checkpoint has unknown parameter '" + name + "'");
        Tensor t = params.get(name);
        const auto shape = p["shape"].get<std::vector<int>>();
        if (shape != t.shape())
            throw DataError("checkpoint parameter '" + name + "' has mismatched shape");
        auto values = p["values"].get<std::vector<double>>();
        if (values.size() != t.size())
            throw DataError("checkpoint parameter '" + name + "' has wrong element count");
        t.values() = std::move(values);
        ++matched;
    }
    if (matched != params.entries().size())
        throw DataError("checkpoint is missing parameters (" + std::to_string(matched) + " of " +
                        std::to_string(params.entries().size()) + ")");
}

Checkpoint Checkpoint::peek(const std::string& path) {
    json j = read_manifest(path);
    Checkpoint c;
    c.module = j.value("module", "");
    for (auto& [k, v] : j["meta"].items()) c.meta[k] = v.get<std::string>();
    return c;
}

}  // namespace isopoint::ag
